"""Maximum likelihood fitting and simulated sampling distributions.

Convexity of the loss makes the mean score ``T_n(theta)`` strictly
increasing, so every MLE here is the unique root of a monotone function and
is found by bracket expansion plus bisection (or a closed form, whose score
residual is always checked).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .curves import CdfCurve, empirical_cdf, make_grid, quantile_grid
from .exceptions import DomainError, InvalidModelError, NoRootError
from .models import Model
from .numerics import RngStream, find_root_monotone, find_roots_monotone_vec

CLOSED_FORM_RESIDUAL = 1e-8
CHUNK = 20_000


@dataclass(frozen=True)
class Dataset:
    observations: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float).ravel()
        if obs.size < 1:
            raise DomainError("a dataset needs at least one observation")
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return self.observations.size

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Read the first column of a CSV file, skipping a non-numeric header."""
        values = []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or not row[0].strip():
                    continue
                try:
                    values.append(float(row[0]))
                except ValueError:
                    if i == 0:
                        continue
                    raise DomainError(f"{path}: non-numeric value {row[0]!r} on line {i + 1}")
        return cls(np.array(values))


def _obs(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.observations
    return Dataset(data).observations


def _weights(w, n) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n:
        raise DomainError(f"expected {n} weights, got {w.size}")
    if np.any(w < 0) or not np.any(w > 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite, nonnegative and not all zero")
    return w


def mean_score(model: Model, data, theta: float, w=None) -> float:
    """Weighted mean of ``l'(x_i; theta)``; plain mean when ``w`` is omitted."""
    x = _obs(data)
    s = model.score(x, theta)
    if w is None:
        return float(np.mean(s))
    w = _weights(w, x.size)
    return float(w @ s / w.sum())


def solve_weighted_mle(model: Model, data, w) -> float:
    """Minimiser of ``sum_i w_i l(x_i; theta)``.

    Raises
    ------
    NoRootError
        If the weighted score does not change sign on the parameter support.
    InvalidModelError
        If a model's closed form disagrees with its own score.
    """
    x = model.check_data(_obs(data))
    w = _weights(w, x.size)
    if not model.mle_exists(x, w):
        raise NoRootError(f"{model.name}: weighted score is one-signed, no interior MLE")
    wn = w / w.sum()

    closed = model.weighted_mle_closed(x, wn)
    if closed is not None:
        s = model.score(x, closed)
        resid = float(wn @ s)
        if abs(resid) > CLOSED_FORM_RESIDUAL * (1.0 + float(wn @ np.abs(s))):
            raise InvalidModelError(
                f"{model.name}: closed-form MLE {closed} leaves score residual {resid:.3g}"
            )
        return float(closed)

    sup = model.param_support

    def t_n(theta):
        return float(wn @ model._score(x, theta))

    return find_root_monotone(t_n, model.hint, sup.lo, sup.hi)


def solve_mle(model: Model, data) -> float:
    """Root of the mean score ``T_n(theta) = n^-1 sum_i l'(x_i; theta)``."""
    x = _obs(data)
    return solve_weighted_mle(model, x, np.ones(x.size))


def solve_mle_rows(model: Model, xs: np.ndarray):
    """MLE of every row of ``xs`` (one dataset per row).

    Returns ``(theta_hat, ok)``; rows without an interior MLE are ``nan``.
    """
    xs = model.check_data(np.atleast_2d(xs))
    exists = model.mle_exists_rows(xs)
    closed = model.mle_closed_rows(xs)
    if closed is not None:
        theta = np.where(exists, closed, np.nan)
        ok = exists & np.isfinite(theta) & model.param_support.contains(theta)
        if ok.any():
            s = model._score(xs[ok], theta[ok][:, None])
            resid = np.abs(s.mean(axis=1))
            if np.any(resid > CLOSED_FORM_RESIDUAL * (1.0 + np.abs(s).mean(axis=1))):
                raise InvalidModelError(f"{model.name}: closed-form MLE fails its score residual check")
        return np.where(ok, theta, np.nan), ok

    sub = xs[exists]
    sup = model.param_support
    roots, found = find_roots_monotone_vec(
        lambda th: model._score(sub, th[:, None]).mean(axis=1),
        np.full(sub.shape[0], model.hint), sup.lo, sup.hi,
    )
    theta = np.full(xs.shape[0], np.nan)
    ok = np.zeros(xs.shape[0], bool)
    theta[exists] = roots
    ok[exists] = found
    return theta, ok


def simulate_mles(model: Model, theta_star: float, n: int, reps: int, rng: RngStream):
    """MLEs of ``reps`` simulated datasets of size ``n`` from ``f(.; theta_star)``.

    Replicates are generated in chunks; chunk ``k`` draws from
    ``rng.child(k)``, so results do not depend on how work is scheduled.
    Returns ``(mles, failures)`` where failed replicates (no interior MLE)
    are dropped and counted.
    """
    if reps < 1 or n < 1:
        raise DomainError("need reps >= 1 and n >= 1")
    model.check_theta(theta_star)
    out = []
    failures = 0
    for k, start in enumerate(range(0, reps, CHUNK)):
        size = min(CHUNK, reps - start)
        gen = rng.child(k).generator()
        xs = model.sample(theta_star, (size, n), gen)
        theta, ok = solve_mle_rows(model, xs)
        out.append(theta[ok])
        failures += int((~ok).sum())
    return np.concatenate(out), failures


def empirical_mle_distribution(
    model: Model,
    theta_star: float,
    n: int,
    reps: int,
    rng: RngStream,
    grid: Optional[np.ndarray] = None,
) -> CdfCurve:
    """Empirical CDF of the MLE over ``reps`` simulated datasets.

    The default grid has 201 equispaced points between the 0.001 and 0.999
    empirical quantiles of the simulated MLEs.  ``metadata`` carries the
    raw MLE sample and the number of dropped replicates.
    """
    mles, failures = simulate_mles(model, theta_star, n, reps, rng)
    if mles.size == 0:
        raise NoRootError(f"all {reps} replicates lacked an interior MLE")
    grid = quantile_grid(mles) if grid is None else make_grid(grid)
    curve = CdfCurve(
        grid, empirical_cdf(mles, grid), "empirical",
        metadata={
            "model": model.name, "n": n, "theta_star": theta_star, "reps": reps,
            "seed": rng.seed, "failures": failures, "samples": mles,
        },
    )
    if failures:
        curve.flags.append(f"{failures} of {reps} replicates had no interior MLE and were dropped")
    return curve


def parametric_bootstrap_sample(model: Model, theta_hat: float, n: int, rng: RngStream) -> float:
    """MLE of a fresh size-``n`` sample from ``f(.; theta_hat)``."""
    model.check_theta(theta_hat)
    x = model.sample(theta_hat, n, rng.generator())
    return solve_mle(model, x)


def parametric_bootstrap(model: Model, theta_hat: float, n: int, draws: int, rng: RngStream):
    """``draws`` parametric-bootstrap MLEs (vectorised); returns ``(samples, failures)``."""
    return simulate_mles(model, theta_hat, n, draws, rng)
