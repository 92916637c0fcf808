"""Scalar-parameter model families with a convex negative log-likelihood.

A :class:`Model` works on the loss ``l(x; theta) = -log f(x; theta)`` and its
derivative in ``theta`` (the score derivative, ``l'``).  Every family here has
``l(x; .)`` strictly convex for each data point, which makes the summed score
increasing in ``theta``; that monotonicity is what the distribution results
in :mod:`convexmle.asymptotic` and :mod:`convexmle.wlb` rely on.

Closed forms (MLE, Fisher information, the score moments D and V and their
partials) are optional hooks returning ``None`` when a family has none.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from .exceptions import DomainError, InvalidModelError, NoRootError
from .numerics import RngStream

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Interval:
    """Open interval ``(lo, hi)``; either end may be infinite."""

    lo: float
    hi: float

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.lo) & (x < self.hi)

    def __str__(self):
        return f"({self.lo:g}, {self.hi:g})"


def _open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    # midpoints of a 2**53 lattice: strictly inside (0, 1)
    k = gen.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) / 2.0**53


class Model:
    """Base class for a scalar-parameter family.

    Subclasses implement the raw kernels :meth:`_loss` and :meth:`_score`
    (no argument validation) and :meth:`sample`, and may override the
    closed-form hooks.  The public :meth:`loss` and :meth:`score` validate
    their arguments first.  Values are immutable after construction.
    """

    name: str = "model"
    param_support: Interval = Interval(-math.inf, math.inf)
    data_support: Interval = Interval(-math.inf, math.inf)
    #: counting measure on integers instead of Lebesgue measure
    discrete: bool = False
    #: starting point for MLE root searches
    hint: float = 0.0
    #: compact parameter range used by property checks
    test_box: tuple[float, float] = (-1.0, 1.0)

    # -- validation -------------------------------------------------------

    def check_theta(self, theta):
        arr = np.asarray(theta, dtype=float)
        if not np.all(self.param_support.contains(arr)):
            raise DomainError(f"{self.name}: parameter outside {self.param_support}: {theta!r}")
        return arr

    def check_data(self, x):
        arr = np.asarray(x, dtype=float)
        if self.discrete:
            ok = (arr >= 0) & (arr == np.floor(arr)) & np.isfinite(arr)
        else:
            ok = self.data_support.contains(arr)
        if not np.all(ok):
            raise DomainError(f"{self.name}: observation outside {self.data_support}")
        return arr

    # -- required interface ----------------------------------------------

    def loss(self, x, theta):
        return self._loss(self.check_data(x), self.check_theta(theta))

    def score(self, x, theta):
        """Derivative of the loss in ``theta``."""
        return self._score(self.check_data(x), self.check_theta(theta))

    def _loss(self, x, theta):
        raise NotImplementedError

    def _score(self, x, theta):
        raise NotImplementedError

    def sample(self, theta: float, size, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x, theta):
        return np.exp(-self.loss(x, theta))

    def _pdf(self, x, theta):
        return np.exp(-self._loss(x, theta))

    # -- optional closed forms -------------------------------------------

    def weighted_mle_closed(self, x, w) -> Optional[np.ndarray]:
        """Root of ``sum_i w_i l'(x_i; theta)``; ``w`` may be 2-d (rows = weight sets)."""
        return None

    def mle_closed(self, x) -> Optional[float]:
        out = self.weighted_mle_closed(x, np.ones_like(np.asarray(x, dtype=float)))
        return None if out is None else float(out)

    def fisher_info_closed(self, theta) -> Optional[float]:
        return None

    def moments_closed(self, z, theta_star):
        """Return ``(D, V)`` at ``(z, theta_star)`` or ``None``."""
        return None

    def partials_closed(self, theta_star):
        """Return ``(dD/dz, d2D/dz2, dV/dz)`` at ``z = theta_star`` or ``None``."""
        return None

    def mle_closed_rows(self, xs) -> Optional[np.ndarray]:
        """Closed-form MLE of each row of ``xs``; ``nan`` where none exists."""
        return None

    def mle_exists(self, x, w=None) -> bool:
        """Cheap check that the weighted score changes sign; ``True`` if unknown."""
        return True

    def mle_exists_rows(self, xs) -> np.ndarray:
        return np.ones(np.shape(xs)[0], dtype=bool)

    def __repr__(self):
        return f"<Model {self.name}>"


# ---------------------------------------------------------------------------
# Exponential families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialFamilySpec:
    """``f(x; theta) = c(x) exp{t(x) theta - b(theta)}`` with convex ``b``.

    ``db_inverse`` maps a (weighted) mean of ``t`` back to the parameter and
    gives the closed-form MLE; it may be omitted.
    """

    name: str
    t: Callable
    b: Callable
    db: Callable
    d2b: Callable
    d3b: Callable
    log_c: Callable
    sampler: Callable
    param_support: Interval
    data_support: Interval
    discrete: bool = False
    db_inverse: Optional[Callable] = None
    hint: float = 1.0
    test_box: tuple[float, float] = (0.5, 2.0)


class ExponentialFamilyModel(Model):
    def __init__(self, spec: ExponentialFamilySpec):
        self.spec = spec
        self.name = spec.name
        self.param_support = spec.param_support
        self.data_support = spec.data_support
        self.discrete = spec.discrete
        self.hint = spec.hint
        self.test_box = spec.test_box

    def _b2(self, theta):
        v = np.asarray(self.spec.d2b(theta), dtype=float)
        if np.any(v <= 0):
            raise InvalidModelError(f"{self.name}: b'' <= 0 at theta={theta!r}")
        return v

    def _loss(self, x, theta):
        s = self.spec
        return -s.log_c(x) - s.t(x) * theta + s.b(theta)

    def _score(self, x, theta):
        return self.spec.db(theta) - self.spec.t(x)

    def sample(self, theta, size, gen):
        self.check_theta(theta)
        return self.spec.sampler(float(theta), size, gen)

    def weighted_mle_closed(self, x, w):
        if self.spec.db_inverse is None:
            return None
        x = self.check_data(x)
        w = np.asarray(w, dtype=float)
        tbar = (w @ self.spec.t(x)) / w.sum(axis=-1)
        with np.errstate(all="ignore"):
            theta = np.asarray(self.spec.db_inverse(tbar), dtype=float)
        if not np.all(np.isfinite(theta) & self.param_support.contains(theta)):
            raise NoRootError(f"{self.name}: mean sufficient statistic {tbar!r} has no interior MLE")
        return theta if theta.ndim else float(theta)

    def mle_closed_rows(self, xs):
        if self.spec.db_inverse is None:
            return None
        with np.errstate(all="ignore"):
            return np.asarray(self.spec.db_inverse(self.spec.t(xs).mean(axis=1)), dtype=float)

    def fisher_info_closed(self, theta):
        self.check_theta(theta)
        return float(self._b2(theta))

    def moments_closed(self, z, theta_star):
        self.check_theta(z)
        self.check_theta(theta_star)
        s = self.spec
        d = np.asarray(s.db(z) - s.db(theta_star), dtype=float)
        v = self._b2(theta_star) + d * d
        return d, v

    def partials_closed(self, theta_star):
        self.check_theta(theta_star)
        s = self.spec
        return float(self._b2(theta_star)), float(s.d3b(theta_star)), 0.0

    def mle_exists(self, x, w=None):
        if self.spec.db_inverse is None:
            return True
        try:
            self.weighted_mle_closed(x, np.ones(len(x)) if w is None else w)
        except NoRootError:
            return False
        return True


def _pos(theta):
    return np.asarray(theta, dtype=float)


EXPONENTIAL_SPEC = ExponentialFamilySpec(
    name="exponential",
    t=lambda x: -x,
    b=lambda th: -np.log(th),
    db=lambda th: -1.0 / _pos(th),
    d2b=lambda th: 1.0 / _pos(th) ** 2,
    d3b=lambda th: -2.0 / _pos(th) ** 3,
    log_c=lambda x: np.zeros_like(x),
    sampler=lambda th, size, gen: -np.log(_open_uniform(gen, size)) / th,
    param_support=Interval(0.0, math.inf),
    data_support=Interval(0.0, math.inf),
    db_inverse=lambda m: -1.0 / m,
    hint=1.0,
    test_box=(0.2, 5.0),
)

POWER_SPEC = ExponentialFamilySpec(
    name="power",
    t=lambda x: np.log(x),
    b=lambda th: -np.log(th),
    db=lambda th: -1.0 / _pos(th),
    d2b=lambda th: 1.0 / _pos(th) ** 2,
    d3b=lambda th: -2.0 / _pos(th) ** 3,
    log_c=lambda x: -np.log(x),
    sampler=lambda th, size, gen: _open_uniform(gen, size) ** (1.0 / th),
    param_support=Interval(0.0, math.inf),
    data_support=Interval(0.0, 1.0),
    db_inverse=lambda m: -1.0 / m,
    hint=1.0,
    test_box=(0.2, 5.0),
)

POISSON_SPEC = ExponentialFamilySpec(
    name="poisson",
    t=lambda x: x,
    b=lambda th: np.exp(th),
    db=lambda th: np.exp(th),
    d2b=lambda th: np.exp(th),
    d3b=lambda th: np.exp(th),
    log_c=lambda x: -special.gammaln(np.asarray(x, dtype=float) + 1.0),
    sampler=lambda th, size, gen: gen.poisson(math.exp(th), size).astype(float),
    param_support=Interval(-math.inf, math.inf),
    data_support=Interval(-0.5, math.inf),
    discrete=True,
    db_inverse=lambda m: np.log(m),
    hint=0.0,
    test_box=(-1.0, 2.0),
)

NORMAL_MEAN_SPEC = ExponentialFamilySpec(
    name="normal_mean",
    t=lambda x: x,
    b=lambda th: 0.5 * _pos(th) ** 2,
    db=lambda th: _pos(th),
    d2b=lambda th: np.ones_like(_pos(th)),
    d3b=lambda th: np.zeros_like(_pos(th)),
    log_c=lambda x: -0.5 * x * x - _LOG_SQRT_2PI,
    sampler=lambda th, size, gen: th + gen.standard_normal(size),
    param_support=Interval(-math.inf, math.inf),
    data_support=Interval(-math.inf, math.inf),
    db_inverse=lambda m: m,
    hint=0.0,
    test_box=(-3.0, 3.0),
)

EXPFAM_SPECS = {
    s.name: s for s in (EXPONENTIAL_SPEC, POWER_SPEC, POISSON_SPEC, NORMAL_MEAN_SPEC)
}


def model_from_expfam(spec: ExponentialFamilySpec) -> Model:
    """Generic model for an exponential family; D and V come in closed form."""
    return ExponentialFamilyModel(spec)


def model_exponential() -> Model:
    """``f(x; theta) = theta exp(-x theta)``, ``theta > 0``, ``x > 0``."""
    return ExponentialFamilyModel(EXPONENTIAL_SPEC)


def model_power() -> Model:
    """``f(x; theta) = theta x**(theta - 1)`` on ``(0, 1)``."""
    return ExponentialFamilyModel(POWER_SPEC)


# ---------------------------------------------------------------------------
# Non-exponential-family models
# ---------------------------------------------------------------------------


class FiskModel(Model):
    """Log-logistic density ``theta x**(theta-1) / (1 + x**theta)**2`` on ``x > 0``.

    No closed form for D and V; they come from quadrature or Monte Carlo.
    """

    name = "fisk"
    param_support = Interval(0.0, math.inf)
    data_support = Interval(0.0, math.inf)
    hint = 1.0
    test_box = (0.3, 5.0)

    def _loss(self, x, theta):
        lx = np.log(x)
        return 2.0 * np.logaddexp(0.0, theta * lx) - (theta - 1.0) * lx - np.log(theta)

    def _score(self, x, theta):
        return self.score_from_log(np.log(x), theta)

    def score_from_log(self, log_x, theta):
        """Score given precomputed ``log x``; skips validation in hot loops."""
        return 2.0 * log_x * special.expit(theta * log_x) - log_x - 1.0 / theta

    def sample(self, theta, size, gen):
        self.check_theta(theta)
        u = _open_uniform(gen, size)
        return (u / (1.0 - u)) ** (1.0 / theta)


class SkewNormalModel(Model):
    """Skew normal ``2 phi(x) Phi(theta x)`` with shape ``theta`` on the real line.

    Sampling at ``theta = 0`` is the standard normal.  Otherwise the sign
    flip representation is used: with independent standard normals Z1, Z2,
    ``X = Z1`` if ``Z2 <= theta Z1`` and ``X = -Z1`` otherwise.
    """

    name = "skew_normal"
    hint = 0.0
    test_box = (-3.0, 3.0)

    def _loss(self, x, theta):
        return -math.log(2.0) + 0.5 * x * x + _LOG_SQRT_2PI - special.log_ndtr(theta * x)

    def _score(self, x, theta):
        # phi(t)/Phi(t) = sqrt(2/pi) / erfcx(-t/sqrt(2)), stable for t << 0
        return -x * _SQRT_2_OVER_PI / special.erfcx(-theta * x * _INV_SQRT2)

    def sample(self, theta, size, gen):
        self.check_theta(theta)
        if theta == 0:
            return gen.standard_normal(size)
        z1 = gen.standard_normal(size)
        z2 = gen.standard_normal(size)
        return np.where(z2 <= theta * z1, z1, -z1)

    def fisher_info_closed(self, theta):
        self.check_theta(theta)
        if theta == 0:
            return 2.0 / math.pi
        return None

    def mle_exists(self, x, w=None):
        # the score has sign -sign(x) for every theta: an interior root
        # needs observations of both signs carrying positive weight
        x = np.asarray(x, dtype=float)
        keep = np.ones(x.shape, bool) if w is None else np.asarray(w) > 0
        return bool(np.any(x[keep] > 0) and np.any(x[keep] < 0))

    def mle_exists_rows(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.any(xs > 0, axis=1) & np.any(xs < 0, axis=1)


class GumbelRateModel(Model):
    """``f(x; theta) = exp(theta - x e**theta)``: exponential data with rate ``e**theta``.

    Under the model ``x e**theta`` is standard exponential, so the Fisher
    information is 1 everywhere and D, V have closed forms.
    """

    name = "gumbel_rate"
    data_support = Interval(0.0, math.inf)
    hint = 0.0
    test_box = (-2.0, 2.0)

    def _loss(self, x, theta):
        return x * np.exp(theta) - theta

    def _score(self, x, theta):
        return x * np.exp(theta) - 1.0

    def sample(self, theta, size, gen):
        self.check_theta(theta)
        return -np.log(_open_uniform(gen, size)) * math.exp(-theta)

    def weighted_mle_closed(self, x, w):
        x = self.check_data(x)
        w = np.asarray(w, dtype=float)
        theta = -np.log((w @ x) / w.sum(axis=-1))
        return theta if np.ndim(theta) else float(theta)

    def mle_closed_rows(self, xs):
        return -np.log(np.asarray(xs, dtype=float).mean(axis=1))

    def fisher_info_closed(self, theta):
        self.check_theta(theta)
        return 1.0

    def moments_closed(self, z, theta_star):
        self.check_theta(z)
        self.check_theta(theta_star)
        u = np.exp(np.asarray(z, dtype=float) - theta_star)
        return u - 1.0, 2.0 * u * u - 2.0 * u + 1.0

    def partials_closed(self, theta_star):
        self.check_theta(theta_star)
        return 1.0, 1.0, 2.0


def model_fisk() -> Model:
    return FiskModel()


def model_skew_normal() -> Model:
    return SkewNormalModel()


def model_gumbel_rate() -> Model:
    return GumbelRateModel()


# ---------------------------------------------------------------------------
# Registry and convexity check
# ---------------------------------------------------------------------------

_BUILTIN = {
    "exponential": model_exponential,
    "power": model_power,
    "fisk": model_fisk,
    "skew_normal": model_skew_normal,
    "gumbel_rate": model_gumbel_rate,
}


def available_models() -> list[str]:
    return sorted(_BUILTIN) + [f"expfam:{k}" for k in sorted(EXPFAM_SPECS)]


def get_model(model_id: str) -> Model:
    """Look up a model by its CLI id (``exponential``, ``expfam:poisson``, ...)."""
    if model_id in _BUILTIN:
        return _BUILTIN[model_id]()
    if model_id.startswith("expfam:"):
        key = model_id.split(":", 1)[1]
        if key in EXPFAM_SPECS:
            return model_from_expfam(EXPFAM_SPECS[key])
    raise KeyError(f"unknown model {model_id!r}; choose from {', '.join(available_models())}")


@dataclass
class ConvexityReport:
    passed: bool
    trials: int
    #: (x, theta, theta_prime, which check failed) for the first failure
    counterexample: Optional[tuple] = None


def check_convexity(model: Model, rng: RngStream, trials: int = 10_000) -> ConvexityReport:
    """Randomised check of strict convexity of ``l(x; .)``.

    Draws ``theta, theta'`` uniformly from ``model.test_box`` and ``x`` from
    the model at a third random parameter, then tests the supporting-line
    inequality and that ``l'`` increases between the two parameters.  Only
    violations larger than floating-point rounding count as failures.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    gen = rng.generator()
    lo, hi = model.test_box
    th = gen.uniform(lo, hi, trials)
    thp = gen.uniform(lo, hi, trials)
    th_data = gen.uniform(lo, hi, trials)
    x = np.array([model.sample(float(t), 1, gen)[0] for t in th_data])

    l_th = model.loss(x, th)
    l_thp = model.loss(x, thp)
    s_th = model.score(x, th)
    s_thp = model.score(x, thp)
    gap = l_th - (l_thp + (th - thp) * s_thp)
    scale = 1e-12 * (1.0 + np.abs(l_th) + np.abs(l_thp) + np.abs((th - thp) * s_thp))
    line_bad = gap < -scale
    mono = (s_th - s_thp) * np.sign(th - thp)
    mono_bad = mono < -1e-12 * (1.0 + np.abs(s_th) + np.abs(s_thp))
    bad = line_bad | mono_bad
    if not bad.any():
        return ConvexityReport(True, trials)
    i = int(np.argmax(bad))
    which = "supporting line" if line_bad[i] else "score monotonicity"
    return ConvexityReport(False, trials, (float(x[i]), float(th[i]), float(thp[i]), which))
