"""Distribution estimates for the MLE of a convex-loss model.

Convexity turns the event ``{theta_hat <= z}`` into ``{T_n(z) >= 0}`` where
``T_n`` is the mean score.  A normal approximation to ``T_n(z)`` at each
fixed ``z`` then gives the refined estimate::

    F(z) = Phi( sqrt(n) D(z) / sqrt(V(z) - D(z)**2) )

which only needs the first derivative of the loss.  This module also
provides the classical normal approximation, the matching second-order
expansion on the standardised scale, the exact law for the exponential
model, numerical densities and the skew-normal pivot comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import CdfCurve, DensityCurve, make_grid
from .exceptions import AccuracyError, DomainError
from .mle import simulate_mles
from .models import ExponentialFamilyModel, Model, model_skew_normal
from .moments import (
    VARIANCE_FLOOR,
    MomentMethod,
    _as_method,
    edgeworth_coefficient,
    fisher_info,
    moment_partials,
    moments_array,
    resolved_kind,
)
from .numerics import RngStream, regularized_gamma_lower, std_normal_cdf, std_normal_pdf

#: beyond this the normal CDF is 0 or 1 to double precision
SATURATION = 8.3


def _saturating_cdf(arg: np.ndarray) -> np.ndarray:
    out = std_normal_cdf(np.clip(arg, -40.0, 40.0))
    out = np.atleast_1d(np.asarray(out, dtype=float))
    out[arg > SATURATION] = 1.0
    out[arg < -SATURATION] = 0.0
    return out


def _meta(model, theta_star, n, method, **extra):
    meta = {"model": model.name if model is not None else "exponential",
            "n": n, "theta_star": theta_star, "moments": method}
    meta.update(extra)
    return meta


def refined_arg(model: Model, theta_star: float, n: int, grid, moments=None, simplify: bool = True):
    """Argument ``sqrt(n) D / sqrt(V - D**2)`` of the refined CDF on ``grid``.

    Returns ``(arg, flags)``.  Points where the variance is not positive
    saturate by the sign of D.
    """
    m = _as_method(moments)
    grid = make_grid(grid, model.param_support)
    model.check_theta(theta_star)
    flags = []
    if simplify and isinstance(model, ExponentialFamilyModel) and m.kind in ("auto", "closed"):
        s = model.spec
        b2 = float(s.d2b(theta_star))
        arg = math.sqrt(n) * (s.db(grid) - s.db(theta_star)) / math.sqrt(b2)
        return np.asarray(arg, dtype=float), flags
    d, v, _ = moments_array(model, grid, theta_star, m)
    var = v - d * d
    bad = var < VARIANCE_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = math.sqrt(n) * d / np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    if bad.any():
        arg = np.where(bad, np.sign(d) * np.inf, arg)
        flags.append(f"V - D^2 <= {VARIANCE_FLOOR:g} at {int(bad.sum())} grid points; saturated by sign of D")
    return arg, flags


def refined_cdf(model: Model, theta_star: float, n: int, grid, moments=None, simplify: bool = True) -> CdfCurve:
    """Refined CDF estimate ``Phi(sqrt(n) D(z) / sqrt(V(z) - D(z)**2))``.

    For an exponential family with closed-form moments this reduces to
    ``Phi(sqrt(n) (b'(z) - b'(theta*)) / sqrt(b''(theta*)))``, which is
    used unless ``simplify=False``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    arg, flags = refined_arg(model, theta_star, n, grid, moments, simplify)
    curve = CdfCurve(make_grid(grid), _saturating_cdf(arg), "refined",
                     _meta(model, theta_star, n, resolved_kind(model, moments)))
    curve.flags.extend(flags)
    return curve


def normal_cdf_approx(model: Model, theta_star: float, n: int, grid, moments=None) -> CdfCurve:
    """Classical approximation ``Phi((z - theta*) sqrt(n I(theta*)))``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    grid = make_grid(grid, model.param_support)
    info = fisher_info(model, theta_star, moments)
    arg = (grid - theta_star) * math.sqrt(n * info)
    return CdfCurve(grid, _saturating_cdf(arg), "normal",
                    _meta(model, theta_star, n, resolved_kind(model, moments), fisher_info=info))


def exact_exponential_cdf(theta_star: float, n: int, grid) -> CdfCurve:
    """Exact law of the exponential-model MLE: ``1 - Gamma_n(n theta* / z)``.

    ``n / theta_hat`` is a sum of n unit-rate exponentials scaled by
    ``1/theta*``, hence the regularized gamma function.
    """
    grid = make_grid(grid)
    if np.any(grid <= 0) or not theta_star > 0:
        raise DomainError("exponential-model grid points and theta* must be positive")
    values = 1.0 - regularized_gamma_lower(n, n * theta_star / grid)
    return CdfCurve(grid, np.atleast_1d(values), "exact_exponential",
                    _meta(None, theta_star, n, "exact"))


def standardize(model: Model, theta_star: float, n: int, z, moments=None):
    """Map ``z`` to ``x = sqrt(n I(theta*)) (z - theta*)``."""
    info = fisher_info(model, theta_star, moments)
    return math.sqrt(n * info) * (np.asarray(z, dtype=float) - theta_star)


def edgeworth_cdf(
    model: Model,
    theta_star: float,
    n: int,
    x_grid,
    moments=None,
    finite_difference: bool = False,
) -> CdfCurve:
    """Second-order expansion ``Phi(x) + c phi(x) x**2 / (2 sqrt(n))``.

    ``x`` is the standardised MLE ``sqrt(n I) (theta_hat - theta*)``.  The
    coefficient ``c`` comes from the z-partials of D and V at ``theta*``.
    Values are clipped to [0, 1] (with a flag) where the correction
    overshoots.  ``metadata['theta_grid']`` holds the grid on the parameter
    scale.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    x = make_grid(x_grid)
    partials = moment_partials(model, theta_star, moments, finite_difference=finite_difference)
    c = edgeworth_coefficient(partials)
    raw = std_normal_cdf(x) + 0.5 * c * std_normal_pdf(x) * x * x / math.sqrt(n)
    raw = np.atleast_1d(raw)
    values = np.clip(raw, 0.0, 1.0)
    info = fisher_info(model, theta_star, moments)
    curve = CdfCurve(
        x, values, "edgeworth",
        _meta(model, theta_star, n, partials.method, c=c,
              theta_grid=theta_star + x / math.sqrt(n * info), raw=raw),
    )
    clipped = int(np.sum(raw != values))
    if clipped:
        curve.flags.append(f"expansion left [0, 1] at {clipped} points and was clipped")
    return curve


def cdf_to_density(curve) -> DensityCurve:
    """Density by central differences (one-sided at the two ends), clipped at 0."""
    g = curve.grid
    if g.size < 2:
        raise DomainError("need at least two grid points to differentiate")
    dens = np.gradient(curve.values, g)
    dens = np.where(dens < 0, 0.0, dens)
    meta = dict(curve.metadata)
    meta["source"] = curve.method
    return DensityCurve(g, dens, "density", meta)


# ---------------------------------------------------------------------------
# Skew-normal pivot study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PivotSample:
    t_refined: float
    t_normal: float


@dataclass
class PivotStudy:
    """Pivots ``T`` (refined) and ``T_N`` (normal) from simulated skew-normal fits."""

    n: int
    t_refined: np.ndarray
    t_normal: np.ndarray
    theta_hat: np.ndarray
    failures: int
    quadrature_fallbacks: int = 0

    def samples(self) -> list[PivotSample]:
        return [PivotSample(float(a), float(b)) for a, b in zip(self.t_refined, self.t_normal)]

    def moments(self) -> dict:
        return {
            "T_mean": float(np.mean(self.t_refined)),
            "T_var": float(np.var(self.t_refined, ddof=1)),
            "TN_mean": float(np.mean(self.t_normal)),
            "TN_var": float(np.var(self.t_normal, ddof=1)),
        }


def pivot_study(n: int, reps: int, rng: RngStream) -> PivotStudy:
    """Compare ``T_N`` and ``T`` against the standard normal at ``theta = 0``.

    Each replicate draws ``n`` standard normals (the skew normal at shape
    0), fits ``theta_hat``, then::

        T_N = sqrt(n) theta_hat sqrt(I(0))
        T   = sqrt(n) D(theta_hat, 0) / sqrt(V(theta_hat, 0) - D(theta_hat, 0)**2)

    with D and V by quadrature (Monte Carlo only if quadrature fails).
    Replicates whose data are all one sign have no finite MLE and are
    dropped.
    """
    if reps < 2:
        raise DomainError("pivot study needs reps >= 2")
    model = model_skew_normal()
    theta_hat, failures = simulate_mles(model, 0.0, n, reps, rng.child(0))
    info0 = fisher_info(model, 0.0)
    t_normal = math.sqrt(n) * theta_hat * math.sqrt(info0)
    t_refined = np.empty_like(theta_hat)
    fallbacks = 0
    quad = MomentMethod("quad")
    for i, th in enumerate(theta_hat):
        try:
            d, v, _ = moments_array(model, [th], 0.0, quad)
        except AccuracyError:
            fallbacks += 1
            mc = MomentMethod("mc", draws=200_000, seed=rng.seed, stream_id=rng.stream_id + i + 1)
            d, v, _ = moments_array(model, [th], 0.0, mc)
        var = max(float(v[0] - d[0] ** 2), VARIANCE_FLOOR)
        t_refined[i] = math.sqrt(n) * float(d[0]) / math.sqrt(var)
    return PivotStudy(n, t_refined, t_normal, theta_hat, failures, fallbacks)
