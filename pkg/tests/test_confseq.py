import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predseq import confseq as cs
from predseq import gaussian as g
from predseq.errors import ConfigError
from predseq.normal import norm_ppf, upper_quantile
from predseq.rng import stream


class TestOneSided:
    def test_formula(self):
        want = (30.0 - math.sqrt(200) * upper_quantile(0.0475) + math.sqrt(150) * norm_ppf(0.05)) / 50
        assert cs.ci_one_sided_mean(30.0, 50, 200, 0.05, 0.95) == pytest.approx(want, rel=1e-14)

    def test_final_look_is_fixed_bound(self):
        assert cs.ci_one_sided_mean(20.0, 100, 100, 0.05, 0.95) == pytest.approx(
            0.2 - upper_quantile(0.0475) / 10, rel=1e-14)

    def test_gamma_one(self):
        assert cs.ci_one_sided_mean(5.0, 10, 100, 0.05, 1.0) == -math.inf
        assert cs.ci_one_sided_mean(5.0, 100, 100, 0.05, 1.0) == pytest.approx(0.05 - 1.6448536269514722 / 10)

    def test_approaches_minus_infinity(self):
        bounds = [cs.ci_one_sided_mean(5.0, 10, 100, 0.05, gm) for gm in (0.9, 0.99, 0.999, 0.9999)]
        assert np.all(np.diff(bounds) < 0)

    @settings(max_examples=200, deadline=None)
    @given(n=st.integers(1, 99), s=st.floats(-30, 30), theta0=st.floats(-2, 2))
    def test_dual_to_the_test(self, n, s, theta0):
        # theta0 is excluded exactly when the shifted test has crossed gamma
        lower = cs.ci_one_sided_mean(s, n, 100, 0.05, 0.9)
        q = g.q_one_sided(s - n * theta0, n, 100, 0.045)
        if abs(theta0 - lower) > 1e-9:
            assert (q >= 0.9) == (theta0 < lower)

    def test_bad_look(self):
        with pytest.raises(ConfigError):
            cs.ci_one_sided_mean(0.0, 0, 10, 0.05, 0.9)


class TestTwoSided:
    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(1, 100), x=st.floats(-3, 3))
    def test_ordered(self, n, x):
        lo, hi = cs.ci_two_sided_mean(x, n, 100, 0.05, 0.95)
        assert lo < hi

    def test_final_look(self):
        lo, hi = cs.ci_two_sided_mean(0.3, 100, 100, 0.05, 0.95)
        z = upper_quantile(0.0475 / 2)
        assert (lo, hi) == pytest.approx((0.3 - z / 10, 0.3 + z / 10), rel=1e-14)

    def test_vectorised(self):
        lo, hi = cs.ci_two_sided_mean(np.zeros(3), np.array([10, 50, 100]), 100, 0.05, 0.95)
        assert np.all(np.diff(hi - lo) < 0)

    def test_coverage(self):
        rng = stream(41, 0)
        x = rng.standard_normal((4000, 200)) + 0.3
        n = np.arange(1, 201)
        xbar = np.cumsum(x, axis=1) / n
        lo, hi = cs.ci_two_sided_mean(xbar, n, 200, 0.05, 0.95)
        covered = ((lo <= 0.3) & (0.3 <= hi)).all(axis=1).mean()
        assert covered >= 0.95 - 3 * math.sqrt(0.05 * 0.95 / 4000)


class TestDfBand:
    def test_halfwidth_formula(self):
        h = cs.df_band_halfwidth(40, 100, 0.05, 0.95)
        want = 2.5 * cs.kolmogorov_quantile(1 - 0.0475 / 2, 100) + 1.5 * cs.kolmogorov_quantile(0.95, 60)
        assert h == pytest.approx(want, rel=1e-14)

    def test_final_look(self):
        assert cs.df_band_halfwidth(100, 100, 0.05, 0.95) == cs.kolmogorov_quantile(1 - 0.0475 / 2, 100)

    def test_quantile_matches_simulation(self):
        exact = cs.kolmogorov_quantile(0.9, 15)
        assert cs.simulated_kolmogorov_quantile(0.9, 15, 200_000, stream(42, 0)) == pytest.approx(exact, abs=0.003)

    def test_clipped(self):
        lo, hi = cs.ci_df_band([0.0, 0.5, 1.0], 10, 100, 0.05, 0.95)
        assert lo.min() >= 0.0 and hi.max() <= 1.0
        assert lo[0] == 0.0 and hi[2] == 1.0

    def test_missing_quantile(self):
        with pytest.raises(ConfigError, match="quantile"):
            cs.df_band_halfwidth(5, 10, 0.05, 0.95, quantile=None)

    def test_custom_quantile(self):
        h = cs.df_band_halfwidth(5, 10, 0.05, 0.95, quantile=lambda p, m: 0.1)
        assert h == pytest.approx(2 * 0.1 + 1 * 0.1)


class TestGeneralInversion:
    @pytest.mark.parametrize("t,n", [(3.0, 10), (-5.0, 40), (12.0, 99), (20.0, 100)])
    def test_matches_one_sided(self, t, n):
        res = cs.ci_general_invert(t, n, 100, 0.05, 0.95)
        assert res.is_interval and res.upper == math.inf
        assert res.lower == pytest.approx(cs.ci_one_sided_mean(t, n, 100, 0.05, 0.95), abs=1e-12)

    def test_family_check(self):
        with pytest.raises(ConfigError, match="boundary decomposition"):
            cs.ci_general_invert(1.0, 5, 10, 0.05, 0.9, family=object())

    def test_non_interval_detected(self):
        class Wavy(cs.NormalMeanInversion):
            def full(self, q, theta, n_max):
                return 10 * math.sin(theta) + q

            def rest(self, q, theta, m):
                return 0.0

        res = cs.ci_general_invert(0.0, 5, 10, 0.05, 0.9, family=Wavy(), grid=np.linspace(0.1, 12, 2000))
        assert not res.is_interval and res.sign_changes >= 3
