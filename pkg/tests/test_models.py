import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexmle.exceptions import DomainError
from convexmle.models import (
    EXPONENTIAL_SPEC,
    Model,
    available_models,
    check_convexity,
    get_model,
    model_exponential,
    model_fisk,
    model_from_expfam,
    model_gumbel_rate,
    model_power,
    model_skew_normal,
)
from convexmle.moments import fisher_info
from convexmle.numerics import RngStream, finite_diff, integrate_1d

ALL = [m for m in available_models() if m != "expfam:poisson"]


def test_registry_lists_builtins():
    ids = available_models()
    for name in ("exponential", "power", "fisk", "skew_normal", "gumbel_rate", "expfam:poisson"):
        assert name in ids
    with pytest.raises(KeyError):
        get_model("cauchy")


class TestWorkedValues:
    def test_exponential(self):
        m = model_exponential()
        assert m.score(2.0, 1.0) == pytest.approx(1.0)
        assert EXPONENTIAL_SPEC.d2b(2.0) == pytest.approx(0.25)

    def test_exponential_sampler_mean(self):
        x = model_exponential().sample(4.0, 10**6, RngStream(3).generator())
        se = x.std() / math.sqrt(x.size)
        assert abs(x.mean() - 0.25) < 3 * se

    def test_power(self):
        m = model_power()
        assert m.score(math.exp(-1), 1.0) == pytest.approx(0.0, abs=1e-15)
        assert m.score(0.5, 2.0) == pytest.approx(0.19314718, abs=1e-8)
        assert m.mle_closed(np.array([math.exp(-1)] * 2)) == pytest.approx(1.0)

    def test_fisk(self):
        m = model_fisk()
        for th in (0.5, 2.0, 7.0):
            assert m.score(1.0, th) == pytest.approx(-1 / th)
        x = m.sample(2.0, 200_000, RngStream(4).generator())
        # median 1 with binomial tolerance on the fraction below 1
        assert abs(np.mean(x <= 1.0) - 0.5) < 3 * 0.5 / math.sqrt(x.size)

    def test_skew_normal(self):
        m = model_skew_normal()
        assert fisher_info(m, 0.0) == pytest.approx(2 / math.pi)
        assert m.score(0.0, 1.7) == 0.0
        assert m.score(1.0, 0.0) == pytest.approx(-0.7978846, abs=1e-7)

    def test_skew_normal_score_is_stable_in_the_tail(self):
        s = model_skew_normal().score(np.array([-50.0, 50.0]), 40.0)
        assert np.all(np.isfinite(s))
        # phi(t)/Phi(t) ~ -t as t -> -inf, and -> 0 as t -> +inf
        assert s[0] == pytest.approx(50 * 2000, rel=1e-3)
        assert s[1] == pytest.approx(0.0, abs=1e-300)

    def test_gumbel_rate(self):
        m = model_gumbel_rate()
        assert m.score(1.0, 0.0) == 0.0
        assert m.mle_closed(np.array([0.2, 0.4, 0.4])) == pytest.approx(math.log(3))
        assert fisher_info(m, -3.0) == 1.0


def test_from_expfam_matches_exponential():
    a, b = model_from_expfam(EXPONENTIAL_SPEC), model_exponential()
    x = np.array([0.1, 1.0, 3.0])
    assert np.allclose(a.loss(x, 2.0), b.loss(x, 2.0))
    assert np.allclose(a.score(x, 2.0), b.score(x, 2.0))


@pytest.mark.parametrize("name", ALL)
def test_score_is_loss_derivative(name):
    m = get_model(name)
    gen = RngStream(11, 1).generator()
    lo, hi = m.test_box
    for th in np.linspace(lo, hi, 5):
        x = m.sample(float(th), 4, gen)
        for xi in x:
            num = finite_diff(lambda t: float(m.loss(xi, t)), float(th))
            assert num == pytest.approx(float(m.score(xi, th)), rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("name", ["exponential", "power", "fisk", "skew_normal", "gumbel_rate", "expfam:normal_mean"])
def test_density_integrates_to_one(name):
    m = get_model(name)
    for th in m.test_box:
        total = integrate_1d(lambda x: float(m._pdf(x, th)), m.data_support.lo, m.data_support.hi)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_poisson_mass_sums_to_one():
    m = get_model("expfam:poisson")
    k = np.arange(0, 200.0)
    assert m.pdf(k, 1.5).sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", available_models())
def test_convexity_holds(name):
    rep = check_convexity(get_model(name), RngStream(5, 2), trials=10_000)
    assert rep.passed, rep.counterexample


class _Broken(Model):
    name = "broken"
    test_box = (-2.0, 2.0)

    def _loss(self, x, theta):
        return -((theta - x) ** 2)

    def _score(self, x, theta):
        return -2.0 * (theta - x)

    def sample(self, theta, size, gen):
        return gen.standard_normal(size) + theta


def test_convexity_negative_control():
    rep = check_convexity(_Broken(), RngStream(5, 3), trials=200)
    assert not rep.passed
    assert rep.counterexample is not None


@pytest.mark.parametrize("name", ["exponential", "power", "fisk", "gumbel_rate"])
def test_parameter_support_enforced(name):
    m = get_model(name)
    bad = m.param_support.lo if math.isfinite(m.param_support.lo) else None
    if bad is not None:
        with pytest.raises(DomainError):
            m.score(0.5, bad)


def test_data_support_enforced():
    with pytest.raises(DomainError):
        model_power().score(1.5, 1.0)
    with pytest.raises(DomainError):
        model_exponential().score(-1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.3, 5.0), st.integers(0, 2**32 - 1))
def test_sampler_lies_in_data_support(theta, seed):
    m = model_fisk()
    x = m.sample(theta, 50, RngStream(seed).generator())
    assert np.all(m.data_support.contains(x))
