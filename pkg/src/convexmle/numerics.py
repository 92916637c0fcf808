"""Shared numerical kernel.

Normal and gamma distribution functions, monotone root finding with bracket
expansion, adaptive quadrature, central finite differences and reproducible
random streams.  Everything here is pure given its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .exceptions import AccuracyError, DomainError, NoRootError

ROOT_ATOL = 1e-10
ROOT_RTOL = 1e-10
QUAD_TOL = 1e-9
MAX_DOUBLINGS = 60
MAX_SUBDIVISIONS = 200

_EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream.

    A stream is identified by ``(seed, stream_id)`` plus an optional path of
    child indices.  The generator is a counter-based Philox keyed through
    ``numpy.random.SeedSequence``, so the same address always yields the
    same draws no matter which process or thread consumes it, and distinct
    addresses are statistically independent.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise DomainError("seed and stream_id must be nonnegative 64-bit integers")
        if self.seed >= 2**64 or self.stream_id >= 2**64:
            raise DomainError("seed and stream_id must fit in 64 bits")

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.Philox(ss))


def stream_id_for(name: str) -> int:
    """Stable 32-bit stream id for a textual task name."""
    import zlib

    return zlib.crc32(name.encode("utf-8"))


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def _check_finite(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("argument must be finite")
    return arr


def std_normal_cdf(x):
    """Standard normal distribution function Phi(x), scalar or array."""
    arr = _check_finite(x)
    out = special.ndtr(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_pdf(x):
    arr = _check_finite(x)
    out = np.exp(-0.5 * arr * arr) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def regularized_gamma_lower(shape, x):
    """P(G <= x) for G ~ Gamma(shape, scale=1).

    ``shape`` must be positive and ``x`` nonnegative.
    """
    a = np.asarray(shape, dtype=float)
    xx = np.asarray(x, dtype=float)
    if np.any(~(a > 0)) or not np.all(np.isfinite(a)):
        raise DomainError(f"gamma shape must be positive, got {shape!r}")
    if np.any(np.isnan(xx)) or np.any(xx < 0):
        raise DomainError(f"gamma argument must be nonnegative, got {x!r}")
    out = special.gammainc(a, xx)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------


def _toward(start, step, bound, prev):
    """Next expansion point from ``start`` by ``step``, kept inside an open bound.

    Once a step would reach the bound, the point instead halves its
    remaining distance to it.
    """
    cand = start + step
    if (step > 0 and cand >= bound) or (step < 0 and cand <= bound):
        cand = prev + 0.5 * (bound - prev)
    return cand


def find_root_monotone(
    f: Callable[[float], float],
    bracket_hint: float,
    lo: float = -math.inf,
    hi: float = math.inf,
    atol: float = ROOT_ATOL,
    rtol: float = ROOT_RTOL,
    max_doublings: int = MAX_DOUBLINGS,
) -> float:
    """Root of a nondecreasing function on the open interval ``(lo, hi)``.

    The search starts one unit either side of ``bracket_hint`` and doubles
    the step until the sign changes, never leaving the interval.  Bisection
    then shrinks the bracket to width ``max(atol, rtol*|theta|)``, so the
    returned point is within that distance of a sign change.

    Raises
    ------
    NoRootError
        If no sign change is found within ``max_doublings`` expansions.
    """
    if not lo < hi:
        raise DomainError(f"empty search interval ({lo}, {hi})")
    x0 = float(bracket_hint)
    if not lo < x0 < hi:
        if math.isfinite(lo) and math.isfinite(hi):
            x0 = 0.5 * (lo + hi)
        elif math.isfinite(lo):
            x0 = lo + 1.0
        else:
            x0 = hi - 1.0
    f0 = f(x0)
    if math.isnan(f0):
        raise DomainError(f"function is NaN at the starting point {x0}")
    if f0 == 0.0:
        return x0

    direction = 1.0 if f0 < 0 else -1.0
    bound = hi if direction > 0 else lo
    inner, f_inner = x0, f0
    outer, f_outer = x0, f0
    step = 1.0
    found = False
    for _ in range(max_doublings + 1):
        cand = _toward(x0, direction * step, bound, outer)
        f_cand = f(cand)
        if math.isnan(f_cand):
            raise DomainError(f"function is NaN at {cand}")
        if f_cand == 0.0:
            return cand
        if (f_cand > 0) == (direction > 0):
            outer, f_outer = cand, f_cand
            found = True
            break
        inner, f_inner = cand, f_cand
        outer, f_outer = cand, f_cand
        step *= 2.0
    if not found:
        side = "negative" if f0 < 0 else "positive"
        raise NoRootError(
            f"no sign change: f is {side} from {x0} to {outer} "
            f"(f={f0:.6g} and f={f_outer:.6g})",
            lo=min(x0, outer), hi=max(x0, outer),
            f_lo=f0 if x0 < outer else f_outer,
            f_hi=f_outer if x0 < outer else f0,
        )

    a, b = (inner, outer) if direction > 0 else (outer, inner)
    while True:
        mid = 0.5 * (a + b)
        if b - a <= max(atol, rtol * abs(mid)) or not a < mid < b:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if fm < 0:
            a = mid
        else:
            b = mid


def find_roots_monotone_vec(
    f: Callable[[np.ndarray], np.ndarray],
    hints,
    lo: float = -math.inf,
    hi: float = math.inf,
    atol: float = ROOT_ATOL,
    rtol: float = ROOT_RTOL,
    max_doublings: int = MAX_DOUBLINGS,
):
    """Vectorised :func:`find_root_monotone` over many independent problems.

    ``f`` maps an array of candidate points (one per problem) to the array
    of function values.  Returns ``(roots, ok)``; problems without a sign
    change get ``nan`` and ``ok=False``.
    """
    x0 = np.array(hints, dtype=float)
    if math.isfinite(lo) and math.isfinite(hi):
        fallback = 0.5 * (lo + hi)
    elif math.isfinite(lo):
        fallback = lo + 1.0
    elif math.isfinite(hi):
        fallback = hi - 1.0
    else:
        fallback = 0.0
    x0 = np.where((x0 > lo) & (x0 < hi), x0, fallback)
    f0 = np.asarray(f(x0), dtype=float)
    up = f0 < 0
    bound = np.where(up, hi, lo)
    sgn = np.where(up, 1.0, -1.0)

    inner = x0.copy()
    outer = x0.copy()
    done = f0 == 0.0
    found = done.copy()
    exact = done.copy()
    root = np.where(done, x0, np.nan)
    step = 1.0
    for _ in range(max_doublings + 1):
        active = ~found
        if not active.any():
            break
        cand = x0 + sgn * step
        crossed = np.where(up, cand >= bound, cand <= bound)
        cand = np.where(crossed, outer + 0.5 * (bound - outer), cand)
        cand = np.where(active, cand, outer)
        fc = np.asarray(f(cand), dtype=float)
        zero = active & (fc == 0.0)
        root[zero] = cand[zero]
        exact |= zero
        flipped = active & ~zero & ((fc > 0) == up)
        stay = active & ~zero & ~flipped
        inner = np.where(stay, cand, inner)
        outer = np.where(stay | flipped, cand, outer)
        found |= zero | flipped
        step *= 2.0

    ok = found.copy()
    a = np.where(up, inner, outer)
    b = np.where(up, outer, inner)
    pending = ok & ~exact
    for _ in range(2000):
        if not pending.any():
            break
        mid = 0.5 * (a + b)
        tol = np.maximum(atol, rtol * np.abs(mid))
        conv = pending & ((b - a <= tol) | ~((a < mid) & (mid < b)))
        root[conv] = mid[conv]
        pending &= ~conv
        if not pending.any():
            break
        fm = np.asarray(f(mid), dtype=float)
        hit = pending & (fm == 0.0)
        root[hit] = mid[hit]
        pending &= ~hit
        a = np.where(pending & (fm < 0), mid, a)
        b = np.where(pending & (fm > 0), mid, b)
    root[~ok] = np.nan
    return root, ok


# ---------------------------------------------------------------------------
# Quadrature and differentiation
# ---------------------------------------------------------------------------


def integrate_1d(g, lo, hi, tol=QUAD_TOL, limit=MAX_SUBDIVISIONS, points=None):
    """Adaptive Gauss-Kronrod integral of ``g`` over ``(lo, hi)``.

    Finite intervals use QUADPACK's QAGS.  An infinite endpoint is mapped
    onto (0, 1] through ``x = a + (1 - t)/t`` (QAGI), which is why the
    integrand must decay at infinity.  The reported error bound must satisfy
    ``err <= tol * max(1, |result|)``.

    Raises
    ------
    AccuracyError
        If the subdivision limit is hit or the error bound is too large.
    """
    if lo == hi:
        return 0.0
    kwargs = dict(epsabs=tol * 0.1, epsrel=tol * 0.1, limit=limit, full_output=1)
    if points is not None and math.isfinite(lo) and math.isfinite(hi):
        kwargs["points"] = points
    res = integrate.quad(g, lo, hi, **kwargs)
    value, err = res[0], res[1]
    if not math.isfinite(value) or err > tol * max(1.0, abs(value)):
        # quad appends a diagnostic message only when it flagged a problem
        msg = res[3] if len(res) > 3 else "error bound above tolerance"
        raise AccuracyError(f"quadrature did not converge: {msg}", estimate=value, error=err)
    return value


def fd_step(z: float, order: int, scale: float | None = None) -> float:
    base = scale if scale is not None else max(abs(z), 1.0)
    if order == 1:
        return base * _EPS ** (1.0 / 3.0)
    if order == 2:
        return base * _EPS ** 0.25
    raise DomainError(f"finite-difference order must be 1 or 2, got {order}")


def finite_diff(f, z: float, order: int = 1, h: float | None = None, scale: float | None = None) -> float:
    """Central finite-difference derivative of ``f`` at ``z``.

    The default step is ``max(|z|, 1)`` times eps**(1/3) for the first
    derivative and eps**(1/4) for the second; ``scale`` replaces the
    ``max(|z|, 1)`` factor.
    """
    if h is None:
        h = fd_step(z, order, scale)
    if order == 1:
        return (f(z + h) - f(z - h)) / (2.0 * h)
    if order == 2:
        return (f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h)
    raise DomainError(f"finite-difference order must be 1 or 2, got {order}")
