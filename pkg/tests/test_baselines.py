import math

import numpy as np
import pytest
from scipy import integrate

from predseq import baselines as bl
from predseq.errors import ConfigError, DataError
from predseq.rng import stream


class TestEValue:
    @pytest.mark.parametrize("x", [-2.0, 0.0, 0.7, 3.0])
    def test_first_value(self, x):
        assert math.exp(bl.log_e_value(x, 1)) == pytest.approx(math.exp(x * x / 4) / math.sqrt(2), rel=1e-14)

    @pytest.mark.parametrize("n", [0, 1, 9, 400])
    def test_zero_sum(self, n):
        assert math.exp(bl.log_e_value(0.0, n)) == pytest.approx(1 / math.sqrt(n + 1), rel=1e-14)

    @pytest.mark.parametrize("n", [1, 5, 50])
    def test_unit_mean_under_null(self, n):
        def integrand(t):
            return math.exp(bl.log_e_value(t, n) - t * t / (2 * n)) / math.sqrt(2 * math.pi * n)

        val, _ = integrate.quad(integrand, -np.inf, np.inf)
        assert val == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("n,t", [(1, 0.5), (10, -3.0), (40, 8.0)])
    def test_one_step_martingale(self, n, t):
        def integrand(x):
            return math.exp(bl.log_e_value(t + x, n + 1) - x * x / 2) / math.sqrt(2 * math.pi)

        val, _ = integrate.quad(integrand, -np.inf, np.inf)
        assert val == pytest.approx(math.exp(bl.log_e_value(t, n)), rel=1e-9)


class TestState:
    def test_update(self):
        s = bl.e_start()
        for x in (1.0, 0.5, -0.2):
            s = bl.e_update(s, x)
        assert (s.n, s.t_n) == (3, pytest.approx(1.3))
        assert s.log_e == pytest.approx(bl.log_e_value(1.3, 3))

    def test_threshold_twenty(self):
        edge = math.sqrt(2 * 2 * (math.log(20) + 0.5 * math.log(2)))
        assert bl.e_decide(bl.e_update(bl.e_start(), edge + 1e-9), 0.05) == "reject"
        assert bl.e_decide(bl.e_update(bl.e_start(), edge - 1e-6), 0.05) == "continue"

    def test_overflow_guard(self):
        assert bl.EProcessState(1, 100.0, 1000.0).e_n == math.inf

    def test_bad_inputs(self):
        with pytest.raises(DataError):
            bl.e_update(bl.e_start(), math.inf)
        with pytest.raises(ConfigError):
            bl.e_decide(bl.e_start(), 1.5)


class TestPaths:
    def test_first_crossing(self):
        sums = np.array([[0.0, 10.0, 0.0], [0.0, 0.0, 0.0]])
        reject, first = bl.e_first_crossing(sums, 0.05)
        assert reject.tolist() == [True, False] and first.tolist() == [2, 0]

    def test_type_one(self):
        rng = stream(61, 0)
        sums = np.cumsum(rng.standard_normal((20_000, 500)), axis=1)
        rate = bl.e_first_crossing(sums, 0.05)[0].mean()
        assert rate <= 0.05

    def test_paths_match_scalar(self):
        sums = np.array([[0.5, 1.0, 3.0]])
        assert bl.e_paths(sums)[0, 2] == pytest.approx(bl.log_e_value(3.0, 3))
