import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from convexmle.asymptotic import (
    cdf_to_density,
    edgeworth_cdf,
    exact_exponential_cdf,
    normal_cdf_approx,
    pivot_study,
    refined_cdf,
    standardize,
)
from convexmle.curves import CdfCurve, Curve, parse_grid
from convexmle.exceptions import DomainError
from convexmle.models import get_model, model_exponential
from convexmle.moments import MomentMethod
from convexmle.numerics import RngStream, std_normal_cdf, std_normal_pdf

EXP = model_exponential()


class TestRefined:
    @pytest.mark.parametrize("name", ["exponential", "power", "fisk", "skew_normal", "gumbel_rate"])
    def test_half_at_truth(self, name):
        m = get_model(name)
        th = 0.5 * sum(m.test_box)
        assert refined_cdf(m, th, 10, [th]).values[0] == pytest.approx(0.5, abs=1e-9)

    def test_worked_value(self):
        v = refined_cdf(EXP, 1.0, 10, [1.25]).values[0]
        assert v == pytest.approx(std_normal_cdf(math.sqrt(10) * 0.2), abs=1e-14)
        assert v == pytest.approx(0.7365, abs=1e-4)

    def test_generic_path_matches_simplified(self):
        grid = np.linspace(0.4, 3.0, 27)
        a = refined_cdf(EXP, 1.0, 10, grid)
        b = refined_cdf(EXP, 1.0, 10, grid, "quad", simplify=False)
        assert a.sup_distance(b) < 1e-8

    @pytest.mark.parametrize("name", ["power", "fisk", "gumbel_rate"])
    def test_nondecreasing(self, name):
        m = get_model(name)
        lo, hi = m.test_box
        v = refined_cdf(m, 0.5 * (lo + hi), 10, np.linspace(lo, hi, 60), "quad").values
        assert np.all(np.diff(v) >= -1e-12)

    def test_saturates_far_out(self):
        v = refined_cdf(EXP, 1.0, 10_000, [0.5, 2.0]).values
        assert v.tolist() == [0.0, 1.0]

    def test_mc_moments_close_to_closed(self):
        grid = np.linspace(0.5, 2.5, 9)
        a = refined_cdf(EXP, 1.0, 10, grid, MomentMethod("mc", draws=200_000, seed=4))
        b = refined_cdf(EXP, 1.0, 10, grid)
        assert a.sup_distance(b) < 0.01

    def test_rejects_bad_grid(self):
        with pytest.raises(DomainError):
            refined_cdf(EXP, 1.0, 10, [-1.0, 1.0])
        with pytest.raises(DomainError):
            refined_cdf(EXP, 1.0, 10, [2.0, 1.0])


class TestNormalAndExact:
    def test_normal_worked_value(self):
        assert normal_cdf_approx(EXP, 1.0, 10, [1.25]).values[0] == pytest.approx(0.7854, abs=1e-4)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 0.9))
    def test_normal_symmetry(self, d):
        v = normal_cdf_approx(EXP, 1.0, 10, [1 - d, 1 + d]).values
        assert v[0] + v[1] == pytest.approx(1.0, abs=1e-14)

    def test_exact_values(self):
        assert exact_exponential_cdf(1.0, 10, [1.0]).values[0] == pytest.approx(0.4579297, abs=1e-7)
        assert exact_exponential_cdf(1.0, 1, [2.0]).values[0] == pytest.approx(math.exp(-0.5), abs=1e-14)
        assert exact_exponential_cdf(1.0, 10, [1e6]).values[0] == pytest.approx(1.0, abs=1e-12)

    def test_exact_against_simulation(self):
        from convexmle.mle import empirical_mle_distribution

        grid = np.linspace(0.5, 2.0, 7)
        emp = empirical_mle_distribution(EXP, 1.0, 10, 100_000, RngStream(12), grid=grid)
        exact = exact_exponential_cdf(1.0, 10, grid)
        se = np.sqrt(exact.values * (1 - exact.values) / 100_000)
        assert np.all(np.abs(emp.values - exact.values) <= 4 * se + 1e-12)

    def test_refined_beats_normal(self):
        grid = np.linspace(0.4, 3.0, 261)
        exact = exact_exponential_cdf(1.0, 10, grid)
        assert refined_cdf(EXP, 1.0, 10, grid).sup_distance(exact) < normal_cdf_approx(EXP, 1.0, 10, grid).sup_distance(exact)


class TestEdgeworth:
    def test_half_at_zero(self):
        assert edgeworth_cdf(EXP, 1.0, 10, [0.0]).values[0] == 0.5

    def test_formula(self):
        x = np.linspace(-2, 2, 5)
        c = edgeworth_cdf(EXP, 1.0, 10, x)
        expected = std_normal_cdf(x) - std_normal_pdf(x) * x * x / math.sqrt(10)
        assert c.metadata["c"] == -2.0
        assert np.allclose(c.metadata["raw"], expected, atol=1e-15)

    def test_closer_to_exact_than_normal(self):
        grid = np.linspace(0.4, 3.0, 261)
        x = standardize(EXP, 1.0, 10, grid)
        edge = edgeworth_cdf(EXP, 1.0, 10, x)
        exact = exact_exponential_cdf(1.0, 10, grid).values
        normal = normal_cdf_approx(EXP, 1.0, 10, grid).values
        assert np.max(np.abs(edge.values - exact)) < np.max(np.abs(normal - exact))

    def test_clipping_is_flagged(self):
        # c = -2 drives Phi(x) - phi(x) x^2 / sqrt(n) below 0 for x < 0 at small n
        c = edgeworth_cdf(EXP, 1.0, 1, np.linspace(-3.0, 3.0, 13))
        assert np.all((c.values >= 0) & (c.values <= 1))
        assert c.flags


class TestDensity:
    def test_normal_cdf_derivative(self):
        g = np.linspace(-4, 4, 4001)
        d = cdf_to_density(CdfCurve(g, std_normal_cdf(g), "phi"))
        assert np.max(np.abs(d.values[1:-1] - std_normal_pdf(g[1:-1]))) < 1e-5

    def test_exact_density_integrates(self):
        g = np.linspace(0.05, 8, 4000)
        d = cdf_to_density(exact_exponential_cdf(1.0, 10, g))
        assert trapezoid(d.values, g) == pytest.approx(1.0, abs=1e-3)

    def test_constant(self):
        d = cdf_to_density(CdfCurve([0.0, 1.0, 2.0], [0.3, 0.3, 0.3], "c"))
        assert np.all(d.values == 0)


def test_pivot_study_small():
    s = pivot_study(15, 300, RngStream(1, 5))
    mom = s.moments()
    assert s.t_refined.size + s.failures == 300
    assert abs(mom["T_mean"]) < 0.3 and 0.4 < mom["T_var"] < 1.3
    # the refined pivot is a bounded transform and is less dispersed than T_N
    assert mom["T_var"] < mom["TN_var"]
    assert len(s.samples()) == s.t_refined.size


def test_curve_csv_roundtrip(tmp_path):
    c = CdfCurve(parse_grid("0:1:5"), [0.0, 0.1, 0.2, 1 / 3, 1.0], "refined")
    p = tmp_path / "c.csv"
    c.to_csv(p)
    back = Curve.from_csv(p)
    assert np.array_equal(back.grid, c.grid) and np.array_equal(back.values, c.values)
    assert back.method == "refined"
    assert p.read_text().splitlines()[0] == "z,value,method"


@pytest.mark.parametrize("bad", ["0:1", "a:b:3", "1:0:3", "0:1:0"])
def test_parse_grid_rejects(bad):
    with pytest.raises(DomainError):
        parse_grid(bad)
