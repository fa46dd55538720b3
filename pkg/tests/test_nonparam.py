import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from predseq import nonparam as npm
from predseq.errors import DataError
from predseq.rng import stream


class TestEcdf:
    def test_right_continuous(self):
        f = npm.Ecdf([3.0, 1.0, 2.0, 2.0])
        assert f(np.array([0.5, 1.0, 2.0, 2.5, 3.0])).tolist() == [0.0, 0.25, 0.75, 0.75, 1.0]
        assert f.support.tolist() == [1.0, 2.0, 3.0]

    def test_rejects_empty_and_nan(self):
        with pytest.raises(DataError):
            npm.Ecdf([])
        with pytest.raises(DataError):
            npm.Ecdf([1.0, math.nan])

    @settings(max_examples=100, deadline=None)
    @given(a=st.lists(st.floats(-5, 5), min_size=1, max_size=20),
           b=st.lists(st.floats(-5, 5), min_size=1, max_size=20))
    def test_mixture_is_pooled_ecdf(self, a, b):
        grid = np.linspace(-6, 6, 49)
        mixed = npm.Ecdf(a).mixture(npm.Ecdf(b))(grid)
        assert np.array_equal(mixed, npm.Ecdf(a + b)(grid))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
    def test_monotone_in_unit_interval(self, values):
        f = npm.Ecdf(values)(np.linspace(-6, 6, 101))
        assert np.all(np.diff(f) >= 0) and f[0] == 0.0 and f[-1] == 1.0


class TestKsOneSample:
    def test_statistic_matches_scipy(self, rng):
        x = rng.standard_normal(37)
        want = stats.kstest(x, "norm").statistic
        assert npm.ks_one_sample_statistic(stats.norm.cdf(x)) == pytest.approx(want, abs=1e-14)

    def test_complete_sample_indicator(self, rng):
        u = np.linspace(0.05, 0.95, 10)
        d = npm.ks_one_sample_statistic(u)
        assert npm.ks1_q(u, 10, d, 100, rng).q_hat == 1.0
        assert npm.ks1_q(u, 10, d + 1e-9, 100, rng).q_hat == 0.0

    def test_empty_start_equals_level(self):
        c = npm.ks1_critical_value(20, 0.05)
        est = npm.ks1_q([], 20, c, 200_000, stream(21, 0))
        assert abs(est.q_hat - 0.05) <= 4 * est.std_err

    def test_pivotal(self):
        # Q depends on the data only through F0(x)
        x = stream(22, 0).standard_normal(8)
        a = npm.ks1_q(x, 25, 0.3, 5000, stream(22, 1), cdf=stats.norm.cdf)
        b = npm.ks1_q(np.exp(x), 25, 0.3, 5000, stream(22, 1), cdf=stats.lognorm(1).cdf)
        assert a == b

    def test_bad_inputs(self, rng):
        with pytest.raises(DataError):
            npm.ks1_q(np.full(5, 0.5), 4, 0.3, 10, rng)


class TestKsTwoSample:
    def test_statistic_matches_scipy(self, rng):
        x, y = rng.standard_normal(30), rng.standard_normal(45) + 0.3
        assert npm.ks2_statistic(x, y) == pytest.approx(stats.ks_2samp(x, y).statistic, abs=1e-14)

    def test_ties(self):
        assert npm.ks2_statistic([1, 1, 2], [1, 2, 2]) == pytest.approx(1 / 3)

    def test_critical_value(self):
        assert npm.ks2_critical_value(500, 500, 0.05) == pytest.approx(0.086, abs=5e-4)

    def test_decided_early(self, rng):
        est = npm.ks2_q_time([0.1] * 5, [], 0.2, 5, 5, 1.0, 0.9, 100, rng)
        assert est.q_hat == 1.0

    def test_horizon_indicator(self, rng):
        est = npm.ks2_q_time([0.1, 0.4], [0.5, 0.9], 1.0, 2, 2, 1.0, 0.5, 100, rng)
        assert (est.q_hat, est.b) == (1.0, 0)

    def test_start_matches_null_law(self):
        # at t = 0 nothing is observed: Q is P(D >= c) for the two-sample null law
        c = 0.5
        est = npm.ks2_q_time([], [], 0.0, 10, 10, 1.0, c, 100_000, stream(23, 0))
        sims = npm.ks2_null_statistics(10, 10, 100_000, stream(23, 1))
        ref = np.mean(sims >= c - 1e-12)
        assert abs(est.q_hat - ref) <= 5 * est.std_err

    def test_rejects_late_event(self, rng):
        with pytest.raises(DataError, match="beyond"):
            npm.ks2_q_time([0.6], [], 0.5, 3, 3, 1.0, 0.5, 10, rng)


class TestContinuousEvent:
    def test_strict_region(self, rng):
        x, y = [0.1, 0.2], [0.8, 0.9]
        d = npm.ks2_statistic(x, y)
        assert npm.continuous_event_q_t(x, y, 1.0, 2, d, 1, rng).q_hat == 0.0
        assert npm.continuous_event_q_t(x, y, 1.0, 2, d - 1e-9, 1, rng).q_hat == 1.0

    def test_martingale_step(self):
        # E[Q_{t+dt} | F_t] = Q_t with new events drawn from the completion law
        n, c, t, dt = 6, 0.5, 0.3, 0.2
        x, y = [0.05, 0.2], [0.25]
        q_t = npm.continuous_event_q_t(x, y, t, n, c, 200_000, stream(24, 0)).q_hat
        rng = stream(24, 1)
        vals = []
        for _ in range(2000):
            ux = rng.uniform(t, 1.0, n - len(x))
            uy = rng.uniform(t, 1.0, n - len(y))
            nx = x + sorted(ux[ux <= t + dt])
            ny = y + sorted(uy[uy <= t + dt])
            vals.append(npm.continuous_event_q_t(nx, ny, t + dt, n, c, 400, rng).q_hat)
        se = np.std(vals) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - q_t) <= 4 * se + 0.002


class TestLogrank:
    @pytest.fixture
    def toy(self):
        # month 1: X dies (3 v 3 at risk); month 2: Y dies (2 v 3)
        return npm.EventTable([[1, 0], [0, 1]], [[0, 0], [0, 0]], (3, 3))

    def test_hand_value(self, toy):
        # O-E = 0.5 - 0.4, V = 0.25 + 0.24
        assert npm.logrank_statistic(toy) == pytest.approx(0.1**2 / 0.49, rel=1e-14)
        assert npm.logrank_z(toy) == pytest.approx(0.1 / 0.7, rel=1e-14)

    def test_matches_scipy(self, rng):
        n = 80
        tx = np.ceil(rng.exponential(6.0, n))
        ty = np.ceil(rng.exponential(9.0, n))
        ex, ey = tx <= 10, ty <= 10
        tx, ty = np.minimum(tx, 10), np.minimum(ty, 10)
        table = npm.EventTable.from_records(
            np.r_[np.zeros(n), np.ones(n)].astype(int), np.r_[tx, ty].astype(int), np.r_[ex, ey], (n, n), 10)
        ref = stats.logrank(stats.CensoredData(uncensored=tx[ex], right=tx[~ex]),
                            stats.CensoredData(uncensored=ty[ey], right=ty[~ey]))
        assert npm.logrank_statistic(table) == pytest.approx(ref.statistic**2, rel=1e-10)

    def test_symmetric_is_zero(self):
        t = npm.EventTable([[2, 1, 3], [2, 1, 3]], [[0, 1, 0], [0, 1, 0]], (10, 10))
        assert npm.logrank_statistic(t) == 0.0

    def test_no_deaths(self):
        assert npm.logrank_statistic(npm.EventTable.empty((5, 5), 3)) == 0.0

    def test_overdrawn_group(self):
        with pytest.raises(DataError, match="exceed"):
            npm.EventTable([[2, 1], [0, 0]], [[0, 0], [0, 0]], (2, 2))

    def test_critical_value(self):
        assert npm.logrank_critical_value(0.0475) == pytest.approx(3.9275889244899779, rel=1e-12)

    def test_final_indicator(self, rng, toy):
        assert npm.logrank_q_t(toy, 2, 0.02, 100, rng).q_hat == 1.0
        assert npm.logrank_q_t(toy, 2, 0.03, 100, rng).q_hat == 0.0

    def test_zero_death_warning(self, rng):
        with pytest.warns(RuntimeWarning, match="no deaths"):
            est = npm.logrank_q_t(npm.EventTable.empty((20, 20), 4), 1, 3.84, 200, rng)
        assert 0.0 <= est.q_hat <= 1.0

    def test_future_events_rejected(self, rng, toy):
        with pytest.raises(DataError, match="after month"):
            npm.logrank_q_t(toy, 1, 3.84, 10, rng)

    def test_through(self, toy):
        assert toy.through(1).deaths.tolist() == [[1, 0], [0, 0]]

    @pytest.mark.slow
    def test_null_type_one(self):
        # equal hazards; looks after months 1..J-1 then the final test
        sizes, j, hz, reps = (60, 60), 5, 0.08, 400
        c = npm.logrank_critical_value(0.0475)
        rejected = 0
        for r in range(reps):
            rng = stream(25, r)
            months = [np.minimum(rng.geometric(hz, s), j + 1) for s in sizes]
            groups = np.r_[np.zeros(sizes[0]), np.ones(sizes[1])].astype(int)
            m = np.r_[months[0], months[1]]
            full = npm.EventTable.from_records(groups, np.minimum(m, j), m <= j, sizes, j)
            hit = False
            for t in range(1, j):
                q = npm.logrank_q_t(full.through(t), t, c, 300, rng).q_hat
                if q >= 0.95:
                    hit = True
                    break
            rejected += hit or npm.logrank_statistic(full) > c
        rate = rejected / reps
        assert rate <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)


def _exact_discrete_q(events, n, periods, c, q=0.5):
    """P(S_T > c | observed counts) by enumerating every binomial path."""
    ev = np.asarray(events, dtype=np.int64).reshape(2, -1)
    t = ev.shape[1]
    if t == periods:
        return float(npm.discrete_event_statistic(ev, n) > c)
    left = n - ev.sum(axis=1)
    total = 0.0
    for a, b in itertools.product(range(left[0] + 1), range(left[1] + 1)):
        w = stats.binom.pmf(a, left[0], q) * stats.binom.pmf(b, left[1], q)
        total += w * _exact_discrete_q(np.c_[ev, [a, b]], n, periods, c, q)
    return total


class TestDiscreteEvent:
    def test_statistic_hand_value(self):
        # p_X = (1/4, 1/3), p_Y = (2/4, 0/2)
        ev = np.array([[1, 1], [2, 0]])
        assert npm.discrete_event_statistic(ev, 4) == pytest.approx(0.25 + 1 / 3)

    def test_exhausted_group_contributes_zero(self):
        ev = np.array([[2, 0], [1, 1]])
        assert npm.discrete_event_statistic(ev, 2) == pytest.approx(0.5 + 1.0)

    @pytest.mark.parametrize("events", [np.zeros((2, 0)), [[1], [0]], [[1, 0], [0, 2]], [[0, 1, 1], [2, 0, 0]]])
    def test_matches_enumeration(self, events):
        exact = _exact_discrete_q(events, 3, 4, 1.0)
        est = npm.discrete_event_q_t(np.asarray(events).reshape(2, -1), 3, 4, 1.0, 200_000, stream(26, 0))
        assert abs(est.q_hat - exact) <= 4 * max(est.std_err, 1e-3)

    def test_martingale_by_enumeration(self):
        q0 = _exact_discrete_q(np.zeros((2, 0)), 3, 3, 0.9)
        q1 = sum(stats.binom.pmf(a, 3, 0.5) * stats.binom.pmf(b, 3, 0.5) * _exact_discrete_q([[a], [b]], 3, 3, 0.9)
                 for a in range(4) for b in range(4))
        assert q1 == pytest.approx(q0, abs=1e-14)

    def test_completion_shape_and_counts(self, rng):
        full = npm.discrete_event_complete([[1], [2]], 4, 5, 50, rng)
        assert full.shape == (50, 2, 5)
        assert (full[:, :, 0] == [1, 2]).all()
        assert (full.sum(axis=2) <= 4).all()

    def test_validation(self, rng):
        with pytest.raises(DataError):
            npm.discrete_event_q_t(np.array([[3, 2], [0, 0]]), 4, 5, 1.0, 10, rng)
        with pytest.raises(DataError):
            npm.discrete_event_q_t(np.zeros((2, 6), dtype=int), 4, 5, 1.0, 10, rng)


class TestSurvivalIO:
    CSV = "id,group,time,event_flag\n1,A,0.5,1\n2,B,3.2,0\n3,A,14.9,1\n4,B,20,1\n"

    def test_read(self):
        d = npm.read_survival_csv(io.StringIO(self.CSV))
        assert d.labels == ("A", "B") and d.group_sizes() == (2, 2)
        assert d.months(15).tolist() == [1, 4, 15, 15]

    def test_labels_choose_order(self):
        d = npm.read_survival_csv(io.StringIO(self.CSV), labels=["B", "A"])
        assert d.group.tolist() == [1, 0, 1, 0]

    def test_table_censors_beyond_horizon(self):
        t = npm.read_survival_csv(io.StringIO(self.CSV)).table(15)
        assert t.deaths.sum() == 2 and t.censored[1, 14] == 1

    def test_round_trip(self, tmp_path):
        d = npm.simulate_survival(stream(27, 0), sizes=(30, 40), n_periods=6)
        path = tmp_path / "surv.csv"
        npm.write_survival_csv(path, d)
        back = npm.read_survival_csv(path, labels=d.labels)
        assert back.group.tolist() == d.group.tolist()
        assert np.array_equal(back.table(6).deaths, d.table(6).deaths)

    @pytest.mark.parametrize("row,line", [("5,A,-1,1", 3), ("5,A,x,1", 3), ("5,A,2,7", 3)])
    def test_errors_carry_line(self, row, line):
        text = "id,group,time,event_flag\n1,A,1,1\n" + row + "\n"
        with pytest.raises(DataError) as err:
            npm.read_survival_csv(io.StringIO(text + "6,B,1,0\n"))
        assert err.value.line == line

    def test_missing_column(self):
        with pytest.raises(DataError, match="columns"):
            npm.read_survival_csv(io.StringIO("id,group,time\n1,A,2\n"))

    def test_three_groups(self):
        with pytest.raises(DataError, match="two groups"):
            npm.read_survival_csv(io.StringIO(self.CSV + "5,C,1,1\n"))

    def test_simulated_death_fractions(self):
        d = npm.simulate_survival(stream(28, 0), sizes=(20000, 20000), death_fractions=(0.2, 0.25))
        table = d.table(15)
        frac = table.deaths.sum(axis=1) / 20000
        assert frac == pytest.approx([0.2 * 0.98, 0.25 * 0.98], abs=0.012)
