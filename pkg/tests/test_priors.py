import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedqubit.errors import DomainError, QuadratureError
from mixedqubit.priors import (PriorFileError, Quadrature, bures_prior, integrate, load_prior_file,
                               parse_prior, step_prior, tabulated_prior, uniform_prior)

SHIPPED = [bures_prior, uniform_prior, lambda: step_prior(0.5), lambda: step_prior(0.1),
           lambda: step_prior(1.0)]


class TestNormalization:
    @pytest.mark.parametrize("make", SHIPPED)
    def test_integrates_to_one(self, make):
        p = make()
        assert integrate(p, lambda r: np.ones_like(r)) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("make", SHIPPED)
    def test_nonnegative(self, make):
        p = make()
        r = np.linspace(0, 0.999, 500)
        assert np.all(p.density(r) >= 0)


class TestBures:
    def test_mean_r(self):
        assert bures_prior().mean_r == pytest.approx(8 / (3 * math.pi), abs=1e-12)

    def test_asymptote_consistency(self):
        assert 3 / 4 + bures_prior().mean_r / 2 == pytest.approx(3 / 4 + 4 / (3 * math.pi), abs=1e-12)

    def test_wallis_moments(self):
        # (4/pi) int r^(q+2) / sqrt(1-r^2) = (4/pi) int sin^(q+2) t dt
        p = bures_prior()
        for q in range(1, 5):
            n = q + 2
            exact = 4 / math.pi * math.sqrt(math.pi) / 2 * math.gamma((n + 1) / 2) / math.gamma(n / 2 + 1)
            assert p.moments[q] == pytest.approx(exact, abs=1e-9)
        assert p.moments[2] == pytest.approx(0.75, abs=1e-12)

    def test_sqrt_weight(self):
        assert integrate(bures_prior(), lambda r: np.sqrt(1 - r * r)) == pytest.approx(4 / (3 * math.pi), abs=1e-12)

    def test_singular_flag_and_transform(self):
        p = bures_prior()
        assert p.singular_at_one and p.transform == "sin"


class TestStep:
    def test_full_width(self):
        assert step_prior(1).mean_r == pytest.approx(2 / 3, abs=1e-12)

    def test_narrow(self):
        assert step_prior(0.1).mean_r == pytest.approx(0.2 / 3, abs=1e-12)

    def test_normalized(self):
        assert integrate(step_prior(0.3), lambda r: np.ones_like(r)) == pytest.approx(1.0, abs=1e-12)

    def test_zero_outside(self):
        assert step_prior(0.3).density(np.array([0.31, 0.9])).tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.2])
    def test_rejects(self, bad):
        with pytest.raises(DomainError):
            step_prior(bad)


class TestUniform:
    def test_second_moment(self):
        assert integrate(uniform_prior(), lambda r: r * r) == pytest.approx(1 / 3, abs=1e-13)

    def test_mean(self):
        assert uniform_prior().mean_r == pytest.approx(0.5, abs=1e-13)


class TestTabulated:
    def test_constant_table_is_uniform(self):
        r = np.linspace(0, 1, 21)
        p = tabulated_prior(np.column_stack([r, np.ones_like(r)]))
        assert p.mean_r == pytest.approx(0.5, abs=1e-6)

    def test_bures_on_chebyshev_nodes(self):
        k = np.arange(200)
        r = np.sort(0.5 * (1 - np.cos(math.pi * (k + 0.5) / 200)))
        w = 4 / math.pi * r * r / np.sqrt(1 - r * r)
        p = tabulated_prior(np.column_stack([r, w]))
        assert p.mean_r == pytest.approx(8 / (3 * math.pi), abs=1e-4)

    def test_renormalization_reported(self):
        r = np.linspace(0, 1, 11)
        p = tabulated_prior(np.column_stack([r, 3 * np.ones_like(r)]))
        assert p.renormalization_factor == pytest.approx(1 / 3, rel=1e-8)
        assert integrate(p, lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-10)

    def test_two_points_rejected(self):
        with pytest.raises(DomainError):
            tabulated_prior([(0, 1), (1, 1)])

    def test_non_monotone_rejected(self):
        with pytest.raises(DomainError):
            tabulated_prior([(0, 1), (0.5, 1), (0.4, 1), (1, 1)])

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            tabulated_prior([(0, 1), (0.3, -1), (0.6, 1), (1, 1)])


class TestQuadrature:
    @pytest.mark.parametrize("n", [4, 16, 64])
    def test_polynomial_exactness(self, n):
        q = Quadrature.gauss_legendre(n)
        for k in range(2 * n):
            assert q(q.nodes ** k) == pytest.approx(1 / (k + 1), abs=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(["bures", "uniform", "step:0.5"]))
    def test_linearity(self, a, b, spec):
        p = parse_prior(spec)
        f = lambda r: np.cos(3 * r)
        g = lambda r: r ** 3 + 1
        lhs = integrate(p, lambda r: a * f(r) + b * g(r))
        rhs = a * integrate(p, f) + b * integrate(p, g)
        assert abs(lhs - rhs) <= 1e-12 * (abs(a) + abs(b) + 1)

    def test_vector_valued(self):
        out = integrate(uniform_prior(), lambda r: np.stack([r, r * r], axis=-1))
        np.testing.assert_allclose(out, [0.5, 1 / 3], atol=1e-13)

    def test_nonconvergence_carries_estimates(self):
        with pytest.raises(QuadratureError) as exc:
            integrate(uniform_prior(), lambda r: np.sin(1 / (r + 1e-9)), max_nodes=128)
        assert exc.value.last_estimates[1] is not None


class TestPriorFiles:
    def test_round_trip(self, tmp_path):
        f = tmp_path / "p.txt"
        r = np.linspace(0, 1, 11)
        f.write_text("# uniform\n" + "\n".join(f"{x} 1.0" for x in r) + "\n")
        p = load_prior_file(f)
        assert p.name == "file:p.txt"
        assert p.mean_r == pytest.approx(0.5, abs=1e-6)

    def test_bad_line_number(self, tmp_path):
        f = tmp_path / "bad.txt"
        f.write_text("0 1\n# note\n0.5 1\n0.7 oops\n1 1\n")
        with pytest.raises(PriorFileError) as exc:
            load_prior_file(f)
        assert exc.value.line == 4

    def test_parse_specs(self):
        assert parse_prior("bures").name == "bures"
        assert parse_prior("step:0.25").upper == pytest.approx(0.25)
        with pytest.raises(DomainError):
            parse_prior("gaussian")
