import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from convexmle.exceptions import DegenerateScoreError, DomainError, NoRootError, StabilityError
from convexmle.mle import solve_mle
from convexmle.models import get_model
from convexmle.numerics import RngStream, integrate_1d, std_normal_cdf
from convexmle.wlb import (
    default_wlb_grid,
    hypoexp_coeffs,
    hypoexp_density,
    jeffreys_posterior_exponential,
    partition_from_gammas,
    partition_scores,
    probability_matching_sample,
    probability_matching_samples,
    wlb_cdf_double_sum,
    wlb_cdf_from_rates,
    wlb_exact_cdf,
    wlb_fisher_approx,
    wlb_mc_oracle,
    wlb_normal_approx,
    wlb_sample,
    wlb_samples,
)

POWER = get_model("power")
EXP = get_model("exponential")
GUMBEL = get_model("gumbel_rate")

rates = st.lists(st.floats(0.05, 20.0), min_size=1, max_size=6, unique=True).filter(
    lambda r: min(abs(a - b) / max(a, b) for a in r for b in r if a != b) > 1e-3 if len(r) > 1 else True
)


def beta_data(seed=0, n=10):
    return RngStream(seed, 99).generator().beta(2.0, 1.0, n)


def mp_cdf(pos, neg):
    """60-digit evaluation of the double sum."""
    with mpmath.workdps(60):
        p = [mpmath.mpf(float(a)) for a in pos]
        q = [mpmath.mpf(float(a)) for a in neg]

        def coeffs(lam):
            return [1 / mpmath.fprod(lam[k] - lam[i] for k in range(len(lam)) if k != i) for i in range(len(lam))]

        c1, c2 = coeffs(p), coeffs(q)
        total = mpmath.fsum(c1[a] * c2[b] / (p[a] * (p[a] + q[b])) for a in range(len(p)) for b in range(len(q)))
        return float(mpmath.fprod(p + q) * total)


class TestPartition:
    def test_sets_partition_indices(self):
        part = partition_from_gammas([1.0, -2.0, 0.0, 3.0, -1e-14])
        ids = sorted(part.pos_idx.tolist() + part.neg_idx.tolist() + part.zero_idx.tolist())
        assert ids == list(range(5))
        assert part.m == 2 and part.zero_idx.tolist() == [2, 4]
        assert np.all(part.pos_lambdas > 0) and np.all(part.neg_lambdas > 0)

    def test_power_model_mixed_signs(self):
        x = beta_data()
        th = solve_mle(POWER, x)
        part = partition_scores(POWER, x, th)
        assert 0 < part.m < x.size

    def test_exponential_below_all_roots(self):
        x = np.array([0.5, 1.0, 2.0])
        assert partition_scores(EXP, x, 0.1).m == 0

    def test_duplicates_are_separated_and_counted(self):
        part = partition_from_gammas([1.0, 1.0, 1.0, -2.0])
        lam = part.pos_lambdas
        assert part.perturbed == 2
        assert len(set(lam.tolist())) == 3
        assert np.allclose(lam, 1.0, rtol=1e-7)

    def test_all_zero_scores(self):
        with pytest.raises(DegenerateScoreError):
            partition_from_gammas([0.0, 0.0])


class TestHypoexponential:
    def test_single_rate(self):
        assert hypoexp_density([2.0], 0.7) == pytest.approx(2 * math.exp(-1.4), rel=1e-14)

    def test_two_rates_vanish_at_zero(self):
        assert hypoexp_density([1.0, 2.0], 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_duplicate_rates_rejected(self):
        with pytest.raises(DomainError):
            hypoexp_coeffs([1.0, 1.0])

    @settings(max_examples=25, deadline=None)
    @given(rates)
    def test_integrates_to_one(self, lam):
        total = integrate_1d(lambda t: hypoexp_density(lam, t), 0.0, math.inf)
        assert total == pytest.approx(1.0, abs=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(rates, st.floats(0.1, 10.0), st.floats(0.0, 3.0))
    def test_scale_equivariance(self, lam, k, t):
        lhs = hypoexp_density(np.array(lam) * k, t)
        rhs = k * hypoexp_density(lam, k * t)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


class TestExactCdf:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
    def test_two_point_closed_form(self, l1, l2):
        assert wlb_cdf_from_rates([l1], [l2]) == pytest.approx(l2 / (l1 + l2), abs=1e-12)

    def test_empty_blocks(self):
        assert wlb_cdf_from_rates([], [1.0, 2.0]) == 0.0
        assert wlb_cdf_from_rates([1.0], []) == 1.0

    @settings(max_examples=60, deadline=None)
    @given(rates, rates)
    def test_matches_high_precision(self, pos, neg):
        assert wlb_cdf_from_rates(pos, neg) == pytest.approx(mp_cdf(pos, neg), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(rates, rates)
    def test_literal_double_sum_agrees_when_well_conditioned(self, pos, neg):
        ref = mp_cdf(pos, neg)
        assert wlb_cdf_double_sum(pos, neg) == pytest.approx(ref, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(rates, rates, st.randoms(use_true_random=False))
    def test_block_label_symmetry(self, pos, neg, rnd):
        p2, q2 = list(pos), list(neg)
        rnd.shuffle(p2)
        rnd.shuffle(q2)
        assert wlb_cdf_from_rates(p2, q2) == pytest.approx(wlb_cdf_from_rates(pos, neg), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(rates, rates)
    def test_complement_symmetry(self, pos, neg):
        # P(S1 >= S2) + P(S2 >= S1) = 1
        assert wlb_cdf_from_rates(pos, neg) + wlb_cdf_from_rates(neg, pos) == pytest.approx(1.0, abs=1e-10)

    def test_instability_is_reported(self):
        # 40 clustered rates per block: the alternating sum cannot be resolved in doubles
        lam = 1.0 + 1e-3 * np.arange(40)
        with pytest.raises(StabilityError):
            wlb_cdf_from_rates(lam, lam * 1.5)

    @pytest.mark.parametrize("name", ["exponential", "power", "gumbel_rate", "fisk", "skew_normal"])
    def test_monotone_and_bounded(self, name):
        m = get_model(name)
        x = m.sample(0.5 * sum(m.test_box), 10, RngStream(4, 1).generator())
        if not m.mle_exists(x):
            pytest.skip("no interior MLE for this draw")
        grid = default_wlb_grid(m, x, 101)
        v = wlb_exact_cdf(m, x, grid).values
        assert np.all((v >= 0) & (v <= 1))
        assert np.all(np.diff(v) >= -1e-9)

    def test_exponential_support_ends(self):
        x = np.array([0.4, 1.0, 2.5])
        c = wlb_exact_cdf(EXP, x, [0.3, 3.0])
        assert c.values.tolist() == [0.0, 1.0]

    @pytest.mark.parametrize("name", ["exponential", "power", "gumbel_rate", "fisk", "skew_normal"])
    def test_oracle_agreement(self, name):
        m = get_model(name)
        x = m.sample(0.5 * sum(m.test_box) + 0.2, 8, RngStream(7, 2).generator())
        if not m.mle_exists(x):
            pytest.skip("no interior MLE for this draw")
        grid = default_wlb_grid(m, x, 9, width=3.0)
        exact = wlb_exact_cdf(m, x, grid).values
        orc = wlb_mc_oracle(m, x, grid, 200_000, RngStream(7, 3))
        # 4.5 se keeps the family-wise false alarm rate small over 9 points
        assert np.all(np.abs(exact - orc.p) <= np.maximum(4.5 * orc.se, 1e-3))


class TestOracle:
    def test_all_positive(self):
        gam_data = np.array([0.1, 0.2])  # exponential scores x - 1/z > 0 at z = 100
        est = wlb_mc_oracle(EXP, gam_data, 100.0, 1000, RngStream(1))
        assert est.p[0] == 1.0

    def test_two_point(self):
        # exponential model with x = (1, 3), z = 0.5: gammas (-1, 1) -> P = 1/2
        est = wlb_mc_oracle(EXP, [1.0, 3.0], 0.5, 10**6, RngStream(2))
        assert abs(est.p[0] - 0.5) < 3 * est.se[0]
        # z = 0.8: gammas (-0.25, 1.75) -> lambda = (4, 4/7), P = 4/(4 + 4/7)
        est = wlb_mc_oracle(EXP, [1.0, 3.0], 0.8, 10**6, RngStream(3))
        ref = 4 / (4 + 4 / 7)
        assert abs(est.p[0] - ref) < 3 * est.se[0]
        assert wlb_cdf_from_rates([4 / 7], [4.0]) == pytest.approx(ref, abs=1e-12)

    def test_minimum_draws(self):
        with pytest.raises(DomainError):
            wlb_mc_oracle(EXP, [1.0, 2.0], 1.0, 10, RngStream(0))


class TestSamplers:
    def test_single_draw_is_weighted_mle(self):
        x = beta_data()
        th = wlb_sample(POWER, x, RngStream(5))
        v = RngStream(5).generator().standard_exponential(x.size)
        assert th == pytest.approx(-v.sum() / (v @ np.log(x)), rel=1e-12)

    def test_vectorised_root_finding_path(self):
        m = get_model("fisk")
        x = m.sample(2.0, 10, RngStream(6).generator())
        draws = wlb_samples(m, x, 400, RngStream(6, 1))
        grid = np.quantile(draws, [0.1, 0.5, 0.9])
        exact = wlb_exact_cdf(m, x, grid).values
        assert np.allclose(exact, [0.1, 0.5, 0.9], atol=0.06)

    def test_samples_follow_exact_law(self):
        x = beta_data(3)
        draws = np.sort(wlb_samples(POWER, x, 20_000, RngStream(8)))
        f = np.array([wlb_cdf_from_rates(*_rates(POWER, x, d)) for d in draws[::50]])
        emp = (np.arange(0, draws.size, 50) + 1) / draws.size
        assert np.max(np.abs(f - emp)) < 1.36 * 2 / math.sqrt(draws.size)

    def test_skew_normal_one_signed(self):
        with pytest.raises(NoRootError):
            wlb_samples(get_model("skew_normal"), [0.5, 1.0], 10, RngStream(1))


def _rates(model, x, z):
    part = partition_scores(model, x, z)
    return part.pos_lambdas, part.neg_lambdas


class TestApproximations:
    def test_normal_approx_half_at_mle(self):
        x = beta_data()
        th = solve_mle(POWER, x)
        assert wlb_normal_approx(POWER, x, [th]).values[0] == pytest.approx(0.5, abs=1e-9)

    def test_normal_approx_symmetric_pair(self):
        assert wlb_normal_approx(EXP, [1.0, 3.0], [0.5]).values[0] == pytest.approx(0.5)

    def test_normal_approx_close_to_exact(self):
        x = beta_data()
        grid = default_wlb_grid(POWER, x, 101)
        gap = wlb_normal_approx(POWER, x, grid).sup_distance(wlb_exact_cdf(POWER, x, grid))
        assert gap < 0.05

    def test_fisher_exponential_form(self):
        x = np.array([0.2, 0.5, 1.1, 0.7])
        th = solve_mle(EXP, x)
        z = np.array([0.8, th, 2.5])
        got = wlb_fisher_approx(EXP, x, z).values
        assert np.allclose(got, std_normal_cdf(2.0 * (z - th) / z), atol=1e-14)
        assert got[1] == pytest.approx(0.5, abs=1e-12)

    def test_fisher_gumbel_form(self):
        x = np.array([0.2, 0.5, 1.1, 0.7])
        th = solve_mle(GUMBEL, x)
        z = np.linspace(th - 1, th + 1, 5)
        assert np.allclose(wlb_fisher_approx(GUMBEL, x, z).values, std_normal_cdf(2.0 * (z - th)), atol=1e-14)


class TestProbabilityMatching:
    def test_zeta_zero_returns_mle(self):
        x = beta_data()
        assert probability_matching_sample(POWER, x, RngStream(0), zeta=0.0) == solve_mle(POWER, x)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-4, 4))
    def test_gumbel_linear(self, zeta):
        x = GUMBEL.sample(math.log(3), 100, RngStream(9).generator())
        th = solve_mle(GUMBEL, x)
        got = probability_matching_sample(GUMBEL, x, RngStream(0), zeta=zeta)
        assert got == pytest.approx(th + zeta / 10.0, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-2.5, 2.5))
    def test_solves_matching_equation(self, zeta):
        x = beta_data(1)
        th = solve_mle(POWER, x)
        t = probability_matching_sample(POWER, x, RngStream(0), zeta=zeta)
        # I(t) = 1/t^2 for the power model
        assert math.sqrt(10) * (t - th) / t == pytest.approx(zeta, abs=1e-8)

    def test_unreachable_quantile(self):
        # sqrt(n)(t - th)/t < sqrt(n) for every t > 0
        x = beta_data(1, n=4)
        with pytest.raises(NoRootError):
            probability_matching_sample(POWER, x, RngStream(0), zeta=2.5)

    def test_draws_are_reproducible(self):
        x = beta_data()
        a = probability_matching_samples(POWER, x, 20, RngStream(3))
        b = probability_matching_samples(POWER, x, 20, RngStream(3))
        assert np.array_equal(a, b)


class TestJeffreys:
    def test_mean_and_mass(self):
        x = np.array([0.5, 1.0, 2.0, 3.5])
        grid = np.linspace(1e-4, 10, 20001)
        d = jeffreys_posterior_exponential(x, grid)
        assert d.metadata["mean"] == pytest.approx(4 / 7)
        assert trapezoid(d.values, grid) >= 0.999
        assert trapezoid(grid * d.values, grid) == pytest.approx(4 / 7, rel=1e-4)

    def test_single_unit_observation(self):
        grid = np.linspace(0.1, 3, 5)
        assert np.allclose(jeffreys_posterior_exponential([1.0], grid).values, np.exp(-grid))

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            jeffreys_posterior_exponential([1.0, 0.0], [1.0])
