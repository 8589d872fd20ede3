import math
import warnings

import numpy as np
import pytest

from redline_ensemble.chain import EntropyTrace
from redline_ensemble.diagnostics import (
    CompactnessSummary,
    EnsembleReport,
    format_p,
    gelman_rubin,
    machine_p,
    one_sample_t_test,
    summarize,
)
from redline_ensemble.errors import ContractError, DegenerateVarianceError

from .oracles import gelman_rubin_loops

# frozen from an independent mpmath incomplete-beta evaluation
T_ONE_TO_FIVE = 4.242640687119285
P_ONE_TO_FIVE = 0.0132355995636827


def trace(values, chain_id=0, steps=100):
    return EntropyTrace(chain_id, 0, list(values), list(range(len(values))), total_steps=steps)


class TestGelmanRubin:
    def test_hand_case(self):
        assert gelman_rubin([[1, 2, 3], [2, 3, 4]]) == pytest.approx(7 / 6, rel=1e-12)

    def test_identical_chains(self):
        row = [0.3, 0.1, 0.7, 0.2, 0.5]
        n = len(row)
        assert gelman_rubin([row] * 4) == pytest.approx((n - 1) / n, rel=1e-12)

    def test_constant_chains(self):
        with pytest.raises(DegenerateVarianceError):
            gelman_rubin([[0, 0, 0, 0], [1, 1, 1, 1]])

    def test_shape_preconditions(self):
        with pytest.raises(ContractError):
            gelman_rubin([[1, 2, 3]])
        with pytest.raises(ContractError):
            gelman_rubin([[1], [2]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m, n = rng.integers(2, 8), rng.integers(2, 30)
            X = rng.normal(size=(m, n)) + rng.normal(size=(m, 1))
            assert gelman_rubin(X) == pytest.approx(gelman_rubin_loops(X.tolist()), rel=1e-12)

    def test_shift_and_scale(self):
        X = np.random.default_rng(1).normal(size=(4, 20))
        r = gelman_rubin(X)
        assert gelman_rubin(X + 17.5) == pytest.approx(r, rel=1e-10)
        assert gelman_rubin(X * -3.25) == pytest.approx(r, rel=1e-12)


class TestTTest:
    def test_hand_case(self):
        t, p = one_sample_t_test([1, 2, 3, 4, 5], 0)
        assert t == pytest.approx(T_ONE_TO_FIVE, rel=1e-12)
        assert p == pytest.approx(P_ONE_TO_FIVE, rel=1e-9)

    def test_mean_equals_baseline(self):
        t, p = one_sample_t_test([0.1, 0.2, 0.3], 0.2)
        assert t == pytest.approx(0, abs=1e-12)
        assert p == pytest.approx(1.0)

    def test_antisymmetric(self):
        x = np.array([0.4, 0.1, 0.35, 0.2, 0.3])
        t1, p1 = one_sample_t_test(x, 0.15)
        t2, p2 = one_sample_t_test(0.3 - x, 0.15)
        assert t2 == pytest.approx(-t1, rel=1e-12) and p2 == pytest.approx(p1, rel=1e-12)

    def test_zero_variance(self):
        with pytest.raises(DegenerateVarianceError):
            one_sample_t_test([0.2, 0.2, 0.2], 0.1)

    def test_too_few(self):
        with pytest.raises(ContractError):
            one_sample_t_test([0.2], 0.1)

    def test_floor(self):
        x = 0.2 + np.random.default_rng(0).normal(scale=0.01, size=5000)
        t, p = one_sample_t_test(x, 0.5)
        assert t < -100 and p < 2.2e-16
        assert format_p(p) == "<2.2e-16" and machine_p(p) == 0.0
        assert format_p(0.0132) == "0.0132" and machine_p(0.0132) == 0.0132


class TestSummarize:
    def test_atlanta_style_difference(self):
        # the published row is rounded: 0.190 - 0.178 is 0.012, so use unrounded
        # values that print as the same baseline, mean and AD columns
        baseline, target = 0.1896, 0.1784
        rng = np.random.default_rng(3)
        raw = [rng.normal(size=40) for _ in range(3)]
        pooled = np.concatenate(raw)
        traces = [trace(target + 0.01 * (r - pooled.mean()) / pooled.std(), i) for i, r in enumerate(raw)]
        rep = summarize(traces, baseline, region="Atlanta")
        assert (f"{rep.baseline:.3f}", f"{rep.ensemble_mean:.3f}", f"{rep.abs_difference:.3f}") == ("0.190", "0.178", "0.011")
        assert rep.n_samples == 120 and rep.n_chains == 3
        assert rep.r_hat is not None and rep.sqrt_r_hat == pytest.approx(math.sqrt(rep.r_hat))
        assert rep.t_value < 0 and 0 <= rep.p_value <= 1

    def test_rounded_inputs_give_exact_difference(self):
        rep = summarize([trace([0.177, 0.179]), trace([0.176, 0.180], 1)], 0.190)
        assert rep.abs_difference == pytest.approx(0.012, abs=1e-12)

    def test_mean_equals_baseline(self):
        rep = summarize([trace([0.1, 0.3]), trace([0.2, 0.2], 1)], 0.2)
        assert rep.abs_difference == pytest.approx(0, abs=1e-15)

    def test_single_chain_warns(self):
        with pytest.warns(RuntimeWarning, match="single chain"):
            rep = summarize([trace([0.1, 0.2, 0.4])], 0.5)
        assert rep.r_hat is None and rep.converged is None
        assert rep.p_value < 1

    def test_empty(self):
        with pytest.raises(ContractError):
            summarize([], 0.2)

    def test_serialization(self):
        comp = CompactnessSummary(0.7, 0.75, 0.6, 0.7, False)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = summarize([trace([0.1, 0.2, 0.15]), trace([0.12, 0.22, 0.11], 1)], 0.9, comp, "Toy")
        d = rep.to_json()
        assert d["compactness"]["passed"] is False
        assert d["total_steps"] == 200 and d["p_value_display"] == format_p(rep.p_value)
        assert len(rep.csv_row()) == len(EnsembleReport.CSV_COLUMNS)
        assert rep.table_line().startswith("Toy:")
