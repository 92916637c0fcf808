"""Moments of the score derivative under the true model.

For a model with loss ``l`` and true parameter ``theta_star``::

    D(z, theta_star) = E[l'(X; z)]        X ~ f(.; theta_star)
    V(z, theta_star) = E[l'(X; z)**2]

D vanishes at ``z = theta_star`` and V there equals the Fisher information.
Three evaluation routes are offered: the model's closed form, adaptive
quadrature over the data support (summation for discrete models) and plain
Monte Carlo with a standard error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import AccuracyError, DomainError, InvalidModelError
from .models import Model
from .numerics import RngStream, integrate_1d

DEFAULT_MC_DRAWS = 1_000_000
MIN_MC_DRAWS = 100
VARIANCE_FLOOR = 1e-12
_MC_CHUNK = 250_000


@dataclass(frozen=True)
class MomentMethod:
    """How D and V are evaluated.

    ``kind`` is ``auto`` (closed form if the model has one, else
    quadrature), ``closed``, ``quad`` or ``mc``.  Monte Carlo draws come
    from ``RngStream(seed, stream_id)``.
    """

    kind: str = "auto"
    draws: int = DEFAULT_MC_DRAWS
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.kind not in ("auto", "closed", "quad", "mc"):
            raise DomainError(f"unknown moment method {self.kind!r}")
        if self.kind == "mc" and self.draws < MIN_MC_DRAWS:
            raise DomainError(f"Monte Carlo moments need at least {MIN_MC_DRAWS} draws")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "MomentMethod":
        """Parse the CLI form ``closed``, ``quad``, ``auto`` or ``mc:<draws>``."""
        text = text.strip()
        if text.startswith("mc"):
            draws = DEFAULT_MC_DRAWS
            if ":" in text:
                draws = int(float(text.split(":", 1)[1]))
            return cls("mc", draws=draws, seed=seed)
        return cls(text, seed=seed)

    def label(self) -> str:
        return f"mc({self.draws},{self.seed})" if self.kind == "mc" else self.kind


def _as_method(method) -> MomentMethod:
    if isinstance(method, MomentMethod):
        return method
    if method is None:
        return MomentMethod()
    return MomentMethod.parse(str(method))


@dataclass(frozen=True)
class ScoreMoments:
    D: float
    V: float
    variance: float
    method: str
    se_estimate: Optional[float] = None
    #: V - D**2 fell below the floor and was clamped
    clamped: bool = False


@dataclass(frozen=True)
class MomentPartials:
    """z-derivatives of D and V at ``z = theta_star``, plus V there."""

    dD_dz: float
    d2D_dz2: float
    dV_dz: float
    V: float
    method: str


# ---------------------------------------------------------------------------
# Raw evaluators: return arrays of D and V over a vector of z
# ---------------------------------------------------------------------------


def _quad_one(model: Model, z: float, theta_star: float, power: int, tol: float) -> float:
    if model.discrete:
        return _sum_discrete(model, z, theta_star, power)

    # raw kernels: quad only samples interior points of the support
    def integrand(x):
        p = float(model._pdf(x, theta_star))
        if p == 0.0:
            return 0.0
        return float(model._score(x, z)) ** power * p

    lo, hi = model.data_support.lo, model.data_support.hi
    return integrate_1d(integrand, lo, hi, tol=tol)


def _sum_discrete(model: Model, z, theta_star, power, max_terms=1_000_000):
    # sum over 0, 1, 2, ... in blocks until past the mode with negligible mass left
    total, mass, start, block = 0.0, 0.0, 0, 256
    while start < max_terms:
        k = np.arange(start, start + block, dtype=float)
        p = model.pdf(k, theta_star)
        total += float(np.sum(model.score(k, z) ** power * p))
        mass += float(p.sum())
        start += block
        if 1.0 - mass < 1e-15 and p[-1] <= p[0]:
            return total
    raise AccuracyError("discrete moment sum did not converge", estimate=total)


def _closed(model: Model, zs, theta_star):
    out = model.moments_closed(zs, theta_star)
    if out is None:
        raise DomainError(f"{model.name} has no closed-form D and V")
    d, v = out
    return np.asarray(d, dtype=float), np.asarray(v, dtype=float)


def _mc_draws(model: Model, theta_star: float, m: MomentMethod) -> np.ndarray:
    gen = RngStream(m.seed, m.stream_id).generator()
    return model.sample(theta_star, m.draws, gen)


def _mc_moments(model: Model, zs, x: np.ndarray):
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    d = np.empty(zs.shape)
    v = np.empty(zs.shape)
    sd = np.empty(zs.shape)
    score = _fast_score(model, x)
    for k, z in enumerate(zs):
        s1 = 0.0
        s2 = 0.0
        for start in range(0, x.size, _MC_CHUNK):
            g = score(slice(start, start + _MC_CHUNK), z)
            s1 += float(np.sum(g))
            s2 += float(np.sum(g * g))
        n = x.size
        d[k] = s1 / n
        v[k] = s2 / n
        sd[k] = math.sqrt(max(v[k] - d[k] ** 2, 0.0) * n / (n - 1))
    return d, v, sd / math.sqrt(x.size)


def _fast_score(model: Model, x: np.ndarray):
    """Chunked score evaluator with per-sample work hoisted out of the z loop."""
    model.check_data(x)
    if hasattr(model, "score_from_log"):
        lx = np.log(x)
        return lambda sl, z: model.score_from_log(lx[sl], z)
    return lambda sl, z: model._score(x[sl], z)


def moments_array(model: Model, zs, theta_star: float, method=None, *, tol: float = 1e-10):
    """D and V over a vector of ``z`` values.

    Returns ``(D, V, se)``; ``se`` is the Monte Carlo standard error of D,
    or ``None`` for deterministic routes.  Monte Carlo uses one set of draws
    for every ``z`` (common random numbers), which keeps the curves smooth
    in ``z``.
    """
    m = _as_method(method)
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    model.check_theta(theta_star)
    model.check_theta(zs)
    kind = m.kind
    if kind == "auto":
        kind = "closed" if model.moments_closed(theta_star, theta_star) is not None else "quad"
    if kind == "closed":
        d, v = _closed(model, zs, theta_star)
        return d, v, None
    if kind == "quad":
        d = np.array([_quad_one(model, z, theta_star, 1, tol) for z in zs])
        v = np.array([_quad_one(model, z, theta_star, 2, tol) for z in zs])
        return d, v, None
    x = _mc_draws(model, theta_star, m)
    return _mc_moments(model, zs, x)


def resolved_kind(model: Model, method) -> str:
    m = _as_method(method)
    if m.kind != "auto":
        return m.label()
    probe = model.test_box[0] + 0.5 * (model.test_box[1] - model.test_box[0])
    return "closed" if model.moments_closed(probe, probe) is not None else "quad"


def score_moments(model: Model, z: float, theta_star: float, method=None) -> ScoreMoments:
    """D, V and the variance ``V - D**2`` of the score derivative at ``z``.

    A negative variance from Monte Carlo noise is clamped to a small floor
    and flagged.
    """
    m = _as_method(method)
    d, v, se = moments_array(model, [z], theta_star, m)
    d, v = float(d[0]), float(v[0])
    var = v - d * d
    clamped = False
    if var < VARIANCE_FLOOR:
        if var < -1e-12 * max(1.0, v) and m.kind in ("closed",):
            raise InvalidModelError(f"closed-form V < D**2 at z={z}: V={v}, D={d}")
        var = VARIANCE_FLOOR
        clamped = True
    return ScoreMoments(
        D=d, V=v, variance=var, method=resolved_kind(model, m),
        se_estimate=None if se is None else float(se[0]), clamped=clamped,
    )


def fisher_info(model: Model, theta: float, method=None) -> float:
    """``I(theta) = V(theta, theta)``, closed form when the model has one."""
    m = _as_method(method)
    model.check_theta(theta)
    value = model.fisher_info_closed(theta) if m.kind in ("auto", "closed") else None
    if value is None:
        if m.kind == "closed":
            raise DomainError(f"{model.name} has no closed-form Fisher information at {theta}")
        value = score_moments(model, theta, theta, m if m.kind != "closed" else None).V
    if not value > 0 or not math.isfinite(value):
        raise InvalidModelError(f"{model.name}: Fisher information {value} at theta={theta}")
    return float(value)


def moment_partials(
    model: Model,
    theta_star: float,
    method=None,
    finite_difference: bool = False,
) -> MomentPartials:
    """Partials ``dD/dz``, ``d2D/dz2`` and ``dV/dz`` at ``z = theta_star``.

    Uses the model's closed form unless ``finite_difference`` is set or the
    model has none; the numerical route applies central differences to
    ``z -> (D, V)`` with steps proportional to ``I(theta_star)**-1/2``.
    """
    m = _as_method(method)
    model.check_theta(theta_star)
    if not finite_difference and m.kind in ("auto", "closed"):
        closed = model.partials_closed(theta_star)
        if closed is not None:
            d1, d2, dv = closed
            v = float(model.moments_closed(theta_star, theta_star)[1])
            return MomentPartials(d1, d2, dv, v, "closed")
        if m.kind == "closed":
            raise DomainError(f"{model.name} has no closed-form moment partials")

    kind = m.kind
    if kind == "auto":
        kind = "closed" if model.moments_closed(theta_star, theta_star) is not None else "quad"
    # noise level of the D/V evaluations sets the step
    noise = {"closed": np.finfo(float).eps, "quad": 1e-13, "mc": np.finfo(float).eps}[kind]
    quad_tol = 1e-13

    if kind == "mc":
        x = _mc_draws(model, theta_star, m)

        def dv(zs):
            d, v, _ = _mc_moments(model, zs, x)
            return d, v
    elif kind == "quad":
        def dv(zs):
            d, v, _ = moments_array(model, zs, theta_star, MomentMethod("quad"), tol=quad_tol)
            return d, v
    else:
        def dv(zs):
            return _closed(model, zs, theta_star)

    d0, v0 = dv([theta_star])
    scale = 1.0 / math.sqrt(float(v0[0]))
    h1 = scale * noise ** (1.0 / 3.0)
    h2 = scale * noise ** 0.25
    lo, hi = model.param_support.lo, model.param_support.hi
    room = min(theta_star - lo, hi - theta_star)
    if max(h1, h2) >= room:
        warnings.warn(
            f"finite-difference step shrunk to stay inside {model.param_support}",
            RuntimeWarning, stacklevel=2,
        )
        h1 = min(h1, 0.5 * room)
        h2 = min(h2, 0.5 * room)
    zs = theta_star + np.array([-h1, h1, -h2, h2])
    d, v = dv(zs)
    dD = (d[1] - d[0]) / (2.0 * h1)
    d2D = (d[3] - 2.0 * d0[0] + d[2]) / (h2 * h2)
    dV = (v[1] - v[0]) / (2.0 * h1)
    return MomentPartials(float(dD), float(d2D), float(dV), float(v0[0]), f"fd[{kind}]")


def edgeworth_coefficient(partials: MomentPartials) -> float:
    """``c = D'' V**-3/2 - V' V**-1`` with everything at ``z = theta_star``."""
    v = partials.V
    return partials.d2D_dz2 * v ** -1.5 - partials.dV_dz / v
