"""Weighted likelihood bootstrap (WLB) for convex-loss models.

A WLB draw minimises ``sum_i v_i l(x_i; theta)`` with i.i.d. standard
exponential weights ``v_i``.  By convexity::

    P(theta <= z) = P( sum_i v_i gamma_i(z) >= 0 ),   gamma_i(z) = l'(x_i; z)

Splitting the scores by sign writes the sum as a difference of two
independent hypoexponential variables with rates ``lambda_i = 1/|gamma_i|``,
whose law is a signed mixture of exponentials.  Integrating one block's
survival function against the other's density gives the exact CDF as a
finite double sum (:func:`wlb_cdf_from_rates`).

The alternating coefficients of that sum are held as ``(sign, log|q|)``
pairs and summed with ``math.fsum``; when the estimated rounding error
still exceeds ``1e-6`` a :class:`StabilityError` asks the caller to fall
back to :func:`wlb_mc_oracle`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .curves import CdfCurve, DensityCurve, make_grid
from .exceptions import DegenerateScoreError, DomainError, MonotonicityError, NoRootError, StabilityError
from .mle import _obs, solve_mle, solve_weighted_mle
from .models import Model
from .moments import fisher_info
from .numerics import (
    ROOT_ATOL,
    ROOT_RTOL,
    RngStream,
    find_roots_monotone_vec,
    std_normal_cdf,
)

ZERO_TOL = 1e-12
DUPLICATE_GAP = 1e-9
DUPLICATE_PERTURBATION = 1e-8
CLIP_SLACK = 1e-6
MIN_ORACLE_DRAWS = 1000
_EPS = np.finfo(float).eps
_CHUNK = 100_000


# ---------------------------------------------------------------------------
# Score partition and hypoexponential coefficients
# ---------------------------------------------------------------------------


@dataclass
class WlbPartition:
    """Per-datum scores at ``z`` split by sign, with rates ``1/|gamma|``."""

    z: float
    gammas: np.ndarray
    pos_idx: np.ndarray
    neg_idx: np.ndarray
    zero_idx: np.ndarray
    #: rates aligned with ``gammas``; ``nan`` at zero scores
    lambdas: np.ndarray
    #: number of rates nudged apart to make each block distinct
    perturbed: int = 0

    @property
    def m(self) -> int:
        return self.pos_idx.size

    @property
    def pos_lambdas(self) -> np.ndarray:
        return self.lambdas[self.pos_idx]

    @property
    def neg_lambdas(self) -> np.ndarray:
        return self.lambdas[self.neg_idx]


def _separate(rates: np.ndarray):
    """Nudge near-equal rates apart deterministically; returns (rates, count)."""
    if rates.size < 2:
        return rates, 0
    order = np.argsort(rates, kind="stable")
    r = rates[order].copy()
    count = 0
    for k in range(1, r.size):
        if (r[k] - r[k - 1]) <= DUPLICATE_GAP * r[k - 1]:
            r[k] = r[k - 1] * (1.0 + DUPLICATE_PERTURBATION)
            count += 1
    out = np.empty_like(r)
    out[order] = r
    return out, count


def partition_from_gammas(gammas, z: float = float("nan")) -> WlbPartition:
    g = np.asarray(gammas, dtype=float)
    scale = float(np.max(np.abs(g))) if g.size else 0.0
    if scale == 0.0:
        raise DegenerateScoreError(f"every score vanishes at z={z}")
    zero = np.abs(g) <= ZERO_TOL * scale
    pos = np.flatnonzero((g > 0) & ~zero)
    neg = np.flatnonzero((g < 0) & ~zero)
    lam = np.full(g.shape, np.nan)
    lam[~zero] = 1.0 / np.abs(g[~zero])
    lam[pos], c1 = _separate(lam[pos])
    lam[neg], c2 = _separate(lam[neg])
    return WlbPartition(float(z), g, pos, neg, np.flatnonzero(zero), lam, c1 + c2)


def partition_scores(model: Model, data, z: float) -> WlbPartition:
    """Scores ``gamma_i(z) = l'(x_i; z)`` split into positive, negative and zero sets.

    Scores within ``1e-12`` of the largest magnitude count as zero and drop
    out of both sums.  Rates closer than ``1e-9`` (relative) inside a block
    are pushed ``1e-8`` apart; the number moved is recorded.
    """
    x = _obs(data)
    return partition_from_gammas(model.score(x, z), z)


@dataclass(frozen=True)
class HypoexpCoeffs:
    """``q_i = prod_{k != i} 1/(lambda_k - lambda_i)`` as signs and log-magnitudes."""

    sign: np.ndarray
    log_abs: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.sign * np.exp(self.log_abs)


def hypoexp_coeffs(lambdas) -> HypoexpCoeffs:
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size and (np.any(~(lam > 0)) or not np.all(np.isfinite(lam))):
        raise DomainError("rates must be positive and finite")
    diff = lam[None, :] - lam[:, None]  # diff[i, k] = lambda_k - lambda_i
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise DomainError("rates must be distinct; perturb duplicates first")
    sign = np.prod(np.sign(diff), axis=1)
    log_abs = -np.sum(np.log(np.abs(diff)), axis=1)
    return HypoexpCoeffs(sign, log_abs)


def hypoexp_density(lambdas, t):
    """Density of a sum of independent exponentials with distinct rates.

    ``(prod lambda) * sum_i q_i exp(-lambda_i t)``, accumulated from signed
    logarithms.  ``t`` may be an array.
    """
    lam = np.asarray(lambdas, dtype=float).ravel()
    q = hypoexp_coeffs(lam)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise DomainError("t must be finite and nonnegative")
    log_prod = float(np.sum(np.log(lam)))
    logs = log_prod + q.log_abs[None, :] - lam[None, :] * t_arr[:, None]
    terms = q.sign[None, :] * np.exp(logs)
    out = np.array([math.fsum(row) for row in terms])
    return float(out[0]) if np.ndim(t) == 0 else out


def _outer_sum(a: np.ndarray, b: np.ndarray):
    """``P(S_a >= S_b)`` as ``sum_l w_l prod_j b_j / (b_j + a_l)``; returns (terms, value)."""
    c = hypoexp_coeffs(a)
    log_a = np.log(a)
    # w_l = prod_{k != l} a_k * q_l
    logs = (
        (np.sum(log_a) - log_a) + c.log_abs
        + np.sum(np.log(b)) - np.sum(np.log(a[:, None] + b[None, :]), axis=1)
    )
    terms = c.sign * np.exp(logs)
    return terms, math.fsum(terms)


def wlb_cdf_double_sum(pos_lambdas, neg_lambdas) -> float:
    """Literal double sum over both blocks, without stability checks.

    Kept for cross-checks; :func:`wlb_cdf_from_rates` is the accurate route.
    """
    p = np.asarray(pos_lambdas, dtype=float).ravel()
    q = np.asarray(neg_lambdas, dtype=float).ravel()
    if p.size == 0:
        return 0.0
    if q.size == 0:
        return 1.0
    c1, c2 = hypoexp_coeffs(p), hypoexp_coeffs(q)
    logs = (
        float(np.sum(np.log(p)) + np.sum(np.log(q)))
        + c1.log_abs[:, None] + c2.log_abs[None, :]
        - np.log(p)[:, None] - np.log(p[:, None] + q[None, :])
    )
    return math.fsum((c1.sign[:, None] * c2.sign[None, :] * np.exp(logs)).ravel())


def wlb_cdf_from_rates(pos_lambdas, neg_lambdas, check: bool = True) -> float:
    """``P(S1 >= S2)`` for independent hypoexponential ``S1`` (rates
    ``pos_lambdas``) and ``S2`` (rates ``neg_lambdas``).

    The exact value is::

        (prod_all lambda) * sum_{l in pos} sum_{j in neg}
            q1_l q2_j / (lambda_l (lambda_l + lambda_j))

    The inner sum is a partial-fraction expansion of
    ``prod_j 1/(lambda_l + lambda_j)`` and is evaluated in that product
    form, so alternating terms only come from one block.  The smaller block
    carries the outer sum (through ``1 - P(S2 > S1)`` when that is the
    negative block).

    Empty positive block gives 0, empty negative block gives 1.  Raw values
    inside ``[-1e-6, 1 + 1e-6]`` are clipped to [0, 1]; anything further out,
    or a rounding-error estimate above ``1e-6``, raises
    :class:`StabilityError`.
    """
    p = np.asarray(pos_lambdas, dtype=float).ravel()
    q = np.asarray(neg_lambdas, dtype=float).ravel()
    if p.size == 0:
        return 0.0
    if q.size == 0:
        return 1.0
    if p.size <= q.size:
        terms, raw = _outer_sum(p, q)
    else:
        terms, rest = _outer_sum(q, p)
        raw = 1.0 - rest
    if not check:
        return raw
    # each term carries a few ulps from exp/log of its factors
    err = 8.0 * _EPS * (p.size + q.size) * float(np.sum(np.abs(terms)))
    if err > CLIP_SLACK or not -CLIP_SLACK <= raw <= 1.0 + CLIP_SLACK:
        raise StabilityError(
            f"exact WLB sum unstable (value {raw:.6g}, rounding bound {err:.2g}); "
            "use the Monte Carlo oracle instead",
            raw_value=raw,
        )
    return min(max(raw, 0.0), 1.0)


def wlb_exact_value(model: Model, data, z: float) -> float:
    part = partition_scores(model, data, z)
    return wlb_cdf_from_rates(part.pos_lambdas, part.neg_lambdas)


def wlb_exact_cdf(model: Model, data, grid) -> CdfCurve:
    """Exact WLB distribution function on ``grid``."""
    grid = make_grid(grid, model.param_support)
    x = _obs(data)
    values = np.empty(grid.size)
    perturbed = 0
    for k, z in enumerate(grid):
        part = partition_scores(model, x, z)
        perturbed += part.perturbed
        values[k] = wlb_cdf_from_rates(part.pos_lambdas, part.neg_lambdas)
    curve = CdfCurve(grid, values, "wlb_exact", {"model": model.name, "n": x.size})
    if perturbed:
        curve.flags.append(f"{perturbed} near-duplicate rates were separated by 1e-8 relative")
    return curve


# ---------------------------------------------------------------------------
# Monte Carlo oracle and samplers
# ---------------------------------------------------------------------------


@dataclass
class OracleEstimate:
    p: np.ndarray
    se: np.ndarray
    draws: int


def wlb_mc_oracle(model: Model, data, z, draws: int, rng: RngStream) -> OracleEstimate:
    """Monte Carlo estimate of ``P(sum_i v_i gamma_i(z) >= 0)`` with binomial s.e.

    ``z`` may be a vector; the same weight draws serve every point.
    """
    if draws < MIN_ORACLE_DRAWS:
        raise DomainError(f"oracle needs at least {MIN_ORACLE_DRAWS} draws")
    x = _obs(data)
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    gam = np.stack([model.score(x, zz) for zz in zs], axis=1)  # (n, k)
    hits = np.zeros(zs.size)
    for c, start in enumerate(range(0, draws, _CHUNK)):
        size = min(_CHUNK, draws - start)
        v = rng.child(c).generator().standard_exponential((size, x.size))
        hits += np.count_nonzero(v @ gam >= 0.0, axis=0)
    p = hits / draws
    return OracleEstimate(p, np.sqrt(p * (1.0 - p) / draws), draws)


def _weighted_roots(model: Model, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Weighted MLE for each row of weights ``v``."""
    wn = v / v.sum(axis=1, keepdims=True)
    closed = model.weighted_mle_closed(x, wn)
    if closed is not None:
        return np.asarray(closed, dtype=float)
    if not model.mle_exists(x):
        raise NoRootError(f"{model.name}: weighted score is one-signed for these data")
    sup = model.param_support
    roots, ok = find_roots_monotone_vec(
        lambda th: np.einsum("ij,ij->i", wn, model._score(x[None, :], th[:, None])),
        np.full(v.shape[0], model.hint), sup.lo, sup.hi,
    )
    if not ok.all():
        raise NoRootError(f"{model.name}: {int((~ok).sum())} weighted fits had no root")
    return roots


def wlb_sample(model: Model, data, rng: RngStream) -> float:
    """One WLB draw: minimiser of ``sum_i v_i l(x_i; theta)``, ``v_i ~ Exp(1)``."""
    x = _obs(data)
    v = rng.generator().standard_exponential(x.size)
    return solve_weighted_mle(model, x, v)


def wlb_samples(model: Model, data, draws: int, rng: RngStream) -> np.ndarray:
    """``draws`` WLB draws, vectorised; chunk ``k`` uses ``rng.child(k)``."""
    x = model.check_data(_obs(data))
    out = []
    for c, start in enumerate(range(0, draws, _CHUNK)):
        size = min(_CHUNK, draws - start)
        v = rng.child(c).generator().standard_exponential((size, x.size))
        out.append(_weighted_roots(model, x, v))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# Asymptotic approximations
# ---------------------------------------------------------------------------


def wlb_normal_approx(model: Model, data, grid) -> CdfCurve:
    """``Phi( sum_i gamma_i(z) / sqrt(sum_i gamma_i(z)**2) )`` on ``grid``."""
    grid = make_grid(grid, model.param_support)
    x = _obs(data)
    values = np.empty(grid.size)
    for k, z in enumerate(grid):
        g = model.score(x, z)
        ss = float(np.sum(g * g))
        if ss == 0.0:
            raise DegenerateScoreError(f"every score vanishes at z={z}")
        values[k] = std_normal_cdf(float(np.sum(g)) / math.sqrt(ss))
    return CdfCurve(grid, values, "wlb_normal", {"model": model.name, "n": x.size})


def wlb_fisher_approx(model: Model, data, grid, moments=None) -> CdfCurve:
    """``Phi( sqrt(n) (z - theta_hat) sqrt(I(z)) )`` with the unweighted MLE."""
    grid = make_grid(grid, model.param_support)
    x = _obs(data)
    theta_hat = solve_mle(model, x)
    info = np.array([fisher_info(model, z, moments) for z in grid])
    values = std_normal_cdf(math.sqrt(x.size) * (grid - theta_hat) * np.sqrt(info))
    return CdfCurve(grid, np.atleast_1d(values), "wlb_fisher",
                    {"model": model.name, "n": x.size, "theta_hat": theta_hat})


def _matching_root(g, theta_hat, width, lo, hi):
    """Root of increasing ``g`` near ``theta_hat``, checking monotonicity as it goes."""

    def widen(edge, bound):
        cand = theta_hat + 2.0 * (edge - theta_hat)
        if (bound - cand) * (bound - theta_hat) <= 0:  # stepped past the bound
            cand = edge + 0.5 * (bound - edge)
        return cand

    a = theta_hat - width if theta_hat - width > lo else theta_hat + 0.5 * (lo - theta_hat)
    b = theta_hat + width if theta_hat + width < hi else theta_hat + 0.5 * (hi - theta_hat)
    ga, gb = g(a), g(b)
    for _ in range(60):
        if ga <= 0.0 <= gb:
            break
        if ga > 0:
            a = widen(a, lo)
            ga = g(a)
        if gb < 0:
            b = widen(b, hi)
            gb = g(b)
    else:
        if not ga <= 0.0 <= gb:
            raise NoRootError(
                f"matching equation has no root in [{a:.6g}, {b:.6g}]", lo=a, hi=b, f_lo=ga, f_hi=gb
            )
    if ga > gb:
        raise MonotonicityError(f"matching map decreases on [{a:.6g}, {b:.6g}]", a, b)
    while True:
        mid = 0.5 * (a + b)
        if b - a <= max(ROOT_ATOL, ROOT_RTOL * abs(mid)) or not a < mid < b:
            return mid
        gm = g(mid)
        if not ga <= gm <= gb:
            raise MonotonicityError(f"matching map not monotone on [{a:.6g}, {b:.6g}]", a, b)
        if gm == 0.0:
            return mid
        if gm < 0:
            a, ga = mid, gm
        else:
            b, gb = mid, gm


def probability_matching_sample(model: Model, data, rng: RngStream, zeta: float | None = None,
                                moments=None, theta_hat: float | None = None) -> float:
    """Solve ``sqrt(n) (theta - theta_hat) sqrt(I(theta)) = zeta`` for ``zeta ~ N(0, 1)``.

    The search starts from ``theta_hat +/- 10 / sqrt(n I(theta_hat))`` and
    widens as needed.  Passing ``zeta`` fixes the normal draw.
    """
    x = _obs(data)
    n = x.size
    if theta_hat is None:
        theta_hat = solve_mle(model, x)
    if zeta is None:
        zeta = float(rng.generator().standard_normal())
    if zeta == 0.0:
        return float(theta_hat)
    root_n = math.sqrt(n)

    def g(theta):
        return root_n * (theta - theta_hat) * math.sqrt(fisher_info(model, theta, moments)) - zeta

    width = 10.0 / math.sqrt(n * fisher_info(model, theta_hat, moments))
    sup = model.param_support
    return _matching_root(g, theta_hat, width, sup.lo, sup.hi)


def probability_matching_samples(model: Model, data, draws: int, rng: RngStream, moments=None) -> np.ndarray:
    x = _obs(data)
    theta_hat = solve_mle(model, x)
    zetas = rng.generator().standard_normal(draws)
    return np.array([
        probability_matching_sample(model, x, rng, zeta=float(zt), moments=moments, theta_hat=theta_hat)
        for zt in zetas
    ])


# ---------------------------------------------------------------------------
# Jeffreys baseline
# ---------------------------------------------------------------------------


def jeffreys_posterior_exponential(data, grid) -> DensityCurve:
    """Posterior density under the prior ``1/theta``: Gamma(shape n, rate sum x)."""
    x = _obs(data)
    if np.any(x <= 0):
        raise DomainError("exponential-model data must be positive")
    grid = make_grid(grid)
    rate = float(np.sum(x))
    dens = stats.gamma.pdf(grid, a=x.size, scale=1.0 / rate)
    return DensityCurve(grid, dens, "jeffreys",
                        {"shape": x.size, "rate": rate, "mean": x.size / rate,
                         "variance": x.size / rate ** 2})


def default_wlb_grid(model: Model, data, points: int = 201, width: float = 5.0) -> np.ndarray:
    """Grid of ``theta_hat +/- width`` normal-approximation standard deviations.

    Ends that would leave the parameter support are pulled in to 2% of the
    distance from ``theta_hat`` to the boundary.
    """
    x = _obs(data)
    theta_hat = solve_mle(model, x)
    sd = 1.0 / math.sqrt(x.size * fisher_info(model, theta_hat))
    lo, hi = theta_hat - width * sd, theta_hat + width * sd
    sup = model.param_support
    if lo <= sup.lo:
        lo = sup.lo + 0.02 * (theta_hat - sup.lo)
    if hi >= sup.hi:
        hi = sup.hi - 0.02 * (sup.hi - theta_hat)
    return make_grid(np.linspace(lo, hi, points))
