"""Importance sampling and single-site MH over traces."""

import json
import math

import numpy as np
import pytest
from scipy import stats

from spcf_kit.inference import (
    InitFailure, export_csv, export_jsonl, histogram, importance_sample,
    trace_mh,
)
from spcf_kit.parser import parse


class TestImportance:
    def test_score_mean_posterior(self, programs):
        res = importance_sample(programs["score_mean"], 20_000, rng_seed=1)
        assert res.posterior_mean() == pytest.approx(2.0 / 3.0, abs=0.01)
        assert 0 < res.ess <= 20_000

    def test_unweighted_program_has_full_ess(self):
        prog = parse("sample")
        res = importance_sample(prog, 3000, rng_seed=2)
        assert res.ess == pytest.approx(3000)
        assert res.posterior_mean() == pytest.approx(0.5, abs=0.02)
        assert all(s.weight == 1.0 for s in res.samples)

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_failed_runs_carry_zero_weight(self, programs):
        res = importance_sample(programs["neg_score"], 20, rng_seed=3)
        assert all(s.weight == 0.0 for s in res.samples)

    def test_low_ess_warns(self, programs):
        with pytest.warns(UserWarning, match="ESS"):
            importance_sample(programs["neg_score"], 50, rng_seed=4)

    def test_determinism(self, programs):
        a = importance_sample(programs["score_mean"], 100, rng_seed=5)
        b = importance_sample(programs["score_mean"], 100, rng_seed=5)
        assert a == b


class TestMH:
    def test_score_mean_posterior(self, programs):
        res = trace_mh(programs["score_mean"], 30_000, rng_seed=1)
        assert res.posterior_mean() == pytest.approx(2.0 / 3.0, abs=0.02)
        assert 0.1 < res.acceptance_rate <= 1.0

    def test_is_and_mh_agree_within_errors(self, programs):
        n = 20_000
        is_res = importance_sample(programs["score_mean"], n, rng_seed=6)
        mh_res = trace_mh(programs["score_mean"], n, rng_seed=6)
        vals = np.array([s.value for s in is_res.samples])
        wts = np.array([s.weight for s in is_res.samples])
        mu = float((vals * wts).sum() / wts.sum())
        se_is = float(np.sqrt(np.sum(wts ** 2 * (vals - mu) ** 2))
                      / wts.sum())
        mh_vals = np.array([s.value for s in mh_res.samples])
        se_mh = float(mh_vals.std() / math.sqrt(len(mh_vals) / 20))
        gap = abs(is_res.posterior_mean() - mh_res.posterior_mean())
        assert gap <= 3 * (se_is + se_mh)

    def test_zero_sigma_chain_is_constant(self, programs):
        res = trace_mh(programs["score_mean"], 200, rng_seed=2,
                       proposal_sigma=0.0)
        first = res.samples[0]
        assert all(s.trace == first.trace for s in res.samples)

    def test_zero_weight_states_never_entered(self, programs):
        # the else branch of the diagonal program scores 0: the chain must
        # stay inside {s1 <= s2} forever
        res = trace_mh(programs["diagonal"], 3000, rng_seed=3)
        for s in res.samples:
            assert s.weight == 1.0
            assert s.trace[0] <= s.trace[1]

    def test_stationary_density_matches_weight(self, programs):
        # chi-squared goodness of fit of thinned chain samples against the
        # closed-form posterior density 2s on (0,1)
        res = trace_mh(programs["score_mean"], 40_000, rng_seed=4)
        vals = np.array([s.value for s in res.samples])[::10]
        edges = np.linspace(0.0, 1.0, 11)
        counts, _ = np.histogram(vals, bins=edges)
        expected = (edges[1:] ** 2 - edges[:-1] ** 2) * len(vals)
        stat, p = stats.chisquare(counts, expected)
        assert p > 0.01

    def test_init_failure_on_zero_weight_program(self):
        prog = parse("score(0)")
        with pytest.raises(InitFailure):
            trace_mh(prog, 10, rng_seed=5, init_tries=20)

    def test_dimension_changing_moves_happen(self, programs):
        res = trace_mh(programs["geometric"], 4000, rng_seed=6)
        lens = {len(s.trace) for s in res.samples}
        assert len(lens) > 1  # the chain visits several trace dimensions


class TestHistogram:
    def test_uniform_weights_bin_evenly(self):
        prog = parse("sample * 3")
        from spcf_kit.inference import importance_sample as isamp
        res = isamp(prog, 30_000, rng_seed=7)
        hist = histogram(res.samples, 3, (0.0, 3.0))
        assert hist.total_weight == pytest.approx(30_000)
        for m in hist.masses:
            assert m == pytest.approx(10_000, rel=0.05)

    def test_single_sample_all_in_one_bin(self):
        from spcf_kit.inference import PosteriorSample
        hist = histogram([PosteriorSample(0.7, 2.0, (0.7,))], 4, (0.0, 1.0))
        assert hist.masses == (0.0, 0.0, 2.0, 0.0)
        assert hist.mode_bin() == (0.5, 0.75)

    def test_empty_samples_error(self):
        with pytest.raises(ValueError):
            histogram([], 3, (0.0, 1.0))
        from spcf_kit.inference import PosteriorSample
        with pytest.raises(ValueError):
            histogram([PosteriorSample(None, 0.0, ())], 3, (0.0, 1.0))

    def test_bins_validated(self):
        from spcf_kit.inference import PosteriorSample
        with pytest.raises(ValueError):
            histogram([PosteriorSample(0.5, 1.0, (0.5,))], 0, (0.0, 1.0))

    def test_csv_and_jsonl_exports(self, tmp_path, programs):
        res = importance_sample(programs["score_mean"], 50, rng_seed=8)
        hist = histogram(res.samples, 5, (0.0, 1.0))
        csv_path = tmp_path / "h.csv"
        export_csv(hist, str(csv_path))
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "bin_lo,bin_hi,mass"
        assert len(lines) == 6
        lo, hi, mass = lines[1].split(",")
        assert float(hi) == 0.2
        jsonl_path = tmp_path / "s.jsonl"
        export_jsonl(res.samples, str(jsonl_path))
        rows = [json.loads(l) for l in jsonl_path.read_text().splitlines()]
        assert len(rows) == 50
        assert set(rows[0]) == {"value", "weight", "trace_len"}
