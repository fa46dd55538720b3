import json
import math
import warnings

import numpy as np
import pytest

from predseq import gaussian as g
from predseq import mc
from predseq.errors import ConfigError, NumericalError
from predseq.rng import stream

AT = 0.0475


def closed_form_setup(t, n, n_max):
    region = mc.Region("upper", math.sqrt(n_max) * g.upper_quantile(AT))
    return {"t": t}, mc.gaussian_completion(n, n_max), mc.sum_statistic, region


class TestRegion:
    def test_kinds(self):
        t = np.array([-3.0, 0.0, 2.0])
        assert mc.Region("upper", 0.0).contains(t).tolist() == [False, False, True]
        assert mc.Region("upper", 0.0, strict=False).contains(t).tolist() == [False, True, True]
        assert mc.Region("lower", 0.0).contains(t).tolist() == [True, False, False]
        assert mc.Region("two_sided", 2.5).contains(t).tolist() == [True, False, False]

    def test_unknown(self):
        with pytest.raises(ConfigError):
            mc.Region("sideways")


class TestEstimateQ:
    def test_everything_region(self, rng):
        s, samp, stat, _ = closed_form_setup(0.0, 5, 10)
        assert mc.estimate_q(s, samp, stat, mc.Region("everything"), 500, rng).q_hat == 1.0

    def test_complete_sample_is_indicator(self, rng):
        # nothing left to simulate: every completion is the observed value
        region = mc.Region("upper", 1.0)
        est = mc.estimate_q({"t": 2.0}, lambda s, k, r: np.zeros((k, 0)), mc.sum_statistic, region, 100, rng)
        assert (est.q_hat, est.std_err) == (1.0, 0.0)

    @pytest.mark.parametrize("t,n", [(0.0, 0), (3.0, 20), (-2.0, 35), (9.0, 45)])
    def test_matches_closed_form(self, t, n):
        exact = g.q_one_sided(t, n, 50, AT)
        est = mc.estimate_q(*closed_form_setup(t, n, 50), 100_000, stream(5, n))
        se = max(est.std_err, math.sqrt(exact * (1 - exact) / 100_000))
        assert abs(est.q_hat - exact) <= 4 * se + 1e-12

    def test_std_err_formula(self, rng):
        est = mc.estimate_q(*closed_form_setup(2.0, 20, 50), 4000, rng)
        assert est.std_err == pytest.approx(math.sqrt(est.q_hat * (1 - est.q_hat) / 4000))
        assert est.b == 4000

    def test_chunking_is_invisible(self):
        a = mc.estimate_q(*closed_form_setup(1.0, 10, 30), 3000, stream(9, 0))
        b = mc.estimate_q(*closed_form_setup(1.0, 10, 30), 3000, stream(9, 0), chunk=700)
        assert a.q_hat == b.q_hat

    def test_complement(self, rng):
        args = closed_form_setup(1.0, 10, 30)
        q = mc.estimate_q(*args, 5000, stream(2, 0)).q_hat
        qc = mc.estimate_q(*args, 5000, stream(2, 0), complement=True).q_hat
        assert q + qc == pytest.approx(1.0)

    def test_error_shrinks_as_root_b(self):
        # log-log slope of the empirical spread against B is -1/2
        exact = g.q_one_sided(2.0, 20, 40, AT)
        bs = np.array([250, 1000, 4000, 16000])
        spread = []
        for b in bs:
            draws = [mc.estimate_q(*closed_form_setup(2.0, 20, 40), int(b), stream(77, int(b), i)).q_hat
                     for i in range(300)]
            spread.append(math.sqrt(np.mean((np.array(draws) - exact) ** 2)))
        slope = np.polyfit(np.log(bs), np.log(spread), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)

    def test_b_floor(self, rng):
        with pytest.raises(ConfigError):
            mc.estimate_q(*closed_form_setup(0.0, 1, 5), 0, rng)


class TestCalibration:
    def test_floor(self, rng):
        with pytest.raises(NumericalError, match="b_cal"):
            mc.calibrate_critical_value(lambda k, r: r.standard_normal(k), None, 0.05, 199, rng)

    def test_normal_quantile(self):
        res = mc.calibrate_critical_value(lambda k, r: r.standard_normal(k), None, 0.05, 200_000, stream(3, 0))
        assert res.c == pytest.approx(1.6449, abs=0.015)
        assert res.achieved_level_estimate <= 0.05

    @pytest.mark.parametrize("strict", [True, False])
    def test_conservative_with_ties(self, strict):
        stats = np.repeat(np.arange(10.0), 100)
        c, achieved = mc.conservative_critical_value(stats, 0.15, strict=strict)
        assert achieved <= 0.15
        hits = np.count_nonzero(stats > c) if strict else np.count_nonzero(stats >= c)
        assert hits / stats.size == achieved

    def test_smallest_conservative_cut(self):
        stats = np.arange(1.0, 101.0)
        c, achieved = mc.conservative_critical_value(stats, 0.05)
        assert (c, achieved) == (95.0, 0.05)

    def test_json_round_trip(self, tmp_path):
        res = mc.CalibrationResult(2.04, 0.0475, 0.0474, 200_000, True, "pooled_normal", {"n_max": 50}, 7)
        assert json.loads(res.to_json())["alpha_tilde"] == 0.0475
        assert mc.CalibrationResult.from_json(res.to_json()) == res
        path = tmp_path / "cal.json"
        res.save(path)
        assert mc.CalibrationResult.load(path) == res


class TestPooledNormal:
    def test_summary_and_update_agree(self):
        x = [0.3, -1.2, 2.0, 0.7]
        y = [1.1, 0.0, -0.4, 0.9]
        s = mc.pooled_normal_summary([], [])
        for a, b in zip(x, y):
            s = mc.pooled_normal_update(s, a, b)
        ref = mc.pooled_normal_summary(x, y)
        for key in ref:
            assert s[key] == pytest.approx(ref[key])

    def test_pooled_moments(self):
        theta, s2 = mc.pooled_moments(mc.pooled_normal_summary([0.0, 2.0], [1.0, 3.0]))
        assert (theta, s2) == (1.5, 2.0)

    def test_step_draws_around_pooled_mean(self):
        draw = mc.pooled_normal_step(mc.pooled_normal_summary([0.0, 2.0], [1.0, 3.0]))
        rng = stream(4, 0)
        pairs = np.array([draw(rng) for _ in range(20_000)])
        assert pairs.mean() == pytest.approx(1.5, abs=0.03)
        assert pairs.var() == pytest.approx(2.0, rel=0.05)

    def test_degenerate(self):
        flat = mc.pooled_normal_summary([1.0, 1.0], [1.0, 1.0])
        with pytest.raises(NumericalError, match="degenerate"):
            mc.pooled_normal_step(flat)
        with pytest.warns(RuntimeWarning, match="flooring"):
            draw = mc.pooled_normal_step(flat, floor=True)
        assert draw(stream(0, 0))[0] == pytest.approx(1.0)

    def test_too_few_pairs(self):
        with pytest.raises(NumericalError):
            mc.pooled_moments(mc.pooled_normal_summary([1.0], [2.0]))

    def test_t_statistic(self):
        s = mc.pooled_normal_summary([0.0, 2.0], [1.0, 3.0])
        t = mc.pooled_t_statistic(s["mean_x"], s["m2_x"], s["mean_y"], s["m2_y"], 2)
        assert t == pytest.approx(-1.0 / (math.sqrt(2.0) * 1.0))

    def test_sampler_reaches_n_max(self, rng):
        s = mc.pooled_normal_summary([0.0, 2.0, 1.0], [1.0, 3.0, 0.5])
        out = mc.pooled_normal_sampler(8)(s, 5, rng)
        assert len(out) == 4 and out[0].shape == (5,)

    @pytest.mark.slow
    def test_type_one(self):
        # full procedure with the calibrated cut, simulated under the null
        n_max, c = 10, 2.3
        cal = mc.calibrate_critical_value(lambda k, r: np.abs(mc.pooled_normal_null(n_max)(k, r)), None, AT,
                                          100_000, stream(31, 0))
        assert abs(cal.c - c) < 0.15
        reps, rejected = 2000, 0
        for r in range(reps):
            rng = stream(31, 1, r)
            x, y = rng.standard_normal(n_max), rng.standard_normal(n_max)
            hit = False
            for n in range(2, n_max):
                s = mc.pooled_normal_summary(x[:n], y[:n])
                q = mc.estimate_q(s, mc.pooled_normal_sampler(n_max), mc.pooled_normal_final_statistic(n_max),
                                  mc.Region("two_sided", cal.c), 400, rng).q_hat
                if q >= 0.95:
                    hit = True
                    break
            s = mc.pooled_normal_summary(x, y)
            final = abs(mc.pooled_t_statistic(s["mean_x"], s["m2_x"], s["mean_y"], s["m2_y"], n_max)) > cal.c
            rejected += hit or bool(final)
        rate = rejected / reps
        assert rate <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)


class TestBernoulli:
    def test_pooled_rate(self):
        assert mc.pooled_rate({"n": 5, "s_x": 1, "s_y": 2}) == pytest.approx(0.3)

    def test_step_rate(self):
        draw = mc.pooled_bernoulli_step({"n": 5, "s_x": 1, "s_y": 2})
        rng = stream(8, 0)
        assert np.mean([draw(rng) for _ in range(20_000)]) == pytest.approx(0.3, abs=0.01)

    def test_all_zero_no_nan(self, rng):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            t = mc.bernoulli_statistic(0, 0, 10)
            s_x, s_y = mc.pooled_bernoulli_sampler(10)({"n": 5, "s_x": 0, "s_y": 0}, 50, rng)
        assert t == 0.0 and not s_x.any() and not s_y.any()

    def test_statistic_value(self):
        # |3-7| / sqrt(2*10*0.5*0.5)
        assert mc.bernoulli_statistic(3, 7, 10) == pytest.approx(4 / math.sqrt(5))

    def test_no_pairs(self):
        with pytest.raises(NumericalError):
            mc.pooled_rate({"n": 0, "s_x": 0, "s_y": 0})


class TestMle:
    def test_hand_trace(self):
        # increments: 0; 2*1 - 1/2; -3*1.5 - 1.5^2/2
        s = mc.mle_summary([1.0, 2.0, -3.0])
        assert s == {"n": 3, "sum": 0.0, "log_ratio": pytest.approx(1.5 - 5.625)}
        assert mc.mle_ratio_statistic([1.0, 2.0, -3.0]) == pytest.approx(-4.125)

    def test_negative_mean_enters_null_fit(self):
        # previous mean -1: tilde 0, hat -1, increment x*1 - (0 - 1)/2
        assert mc.mle_summary([-1.0, 0.5])["log_ratio"] == pytest.approx(1.0)

    def test_update_matches_summary(self):
        vals = [0.2, -0.7, 1.9, 0.4]
        s = mc.mle_summary([])
        for v in vals:
            s = mc.mle_update(s, v)
        assert s["log_ratio"] == pytest.approx(mc.mle_summary(vals)["log_ratio"])

    def test_step_uses_null_fit(self):
        rng = stream(6, 0)
        draw = mc.constrained_mle_step([-2.0, -1.0])
        assert np.mean([draw(rng) for _ in range(20_000)]) == pytest.approx(-1.5, abs=0.03)
        draw = mc.constrained_mle_step([2.0, 1.0])
        assert np.mean([draw(rng) for _ in range(20_000)]) == pytest.approx(0.0, abs=0.03)


class TestGroupMeans:
    def test_hand_value(self):
        assert mc.group_mean_z(1.0, 0.5, 4, 4, 1.0, 1.0) == pytest.approx(0.5 / math.sqrt(0.5))

    def test_unequal_switch(self):
        pooled = mc.group_mean_z(1.0, 0.5, 4, 2, 1.0, 3.0)
        welch = mc.group_mean_z(1.0, 0.5, 4, 2, 1.0, 3.0, unequal=True)
        assert pooled == pytest.approx(0.5 / (math.sqrt(1.5) * math.sqrt(0.75)))
        assert welch == pytest.approx(0.5 / math.sqrt(1.75))

    def test_zero_variance(self):
        assert mc.group_mean_z(1.0, 1.0, 3, 3, 0.0, 0.0) == 0.0
        with pytest.raises(NumericalError):
            mc.group_mean_z(1.0, 2.0, 3, 3, 0.0, 0.0)

    def test_small_groups(self):
        with pytest.raises(ConfigError):
            mc.group_mean_z(1.0, 2.0, 1, 3, 1.0, 1.0)
