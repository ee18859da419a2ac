import json

import numpy as np
import pytest

from srtlab.analysis import (
    AnalysisParams,
    apply_gains_to_manifest,
    logs_from_flat_table,
    observations_from_logs,
    run_analysis,
    write_report,
)
from srtlab.engine import SentenceRef
from srtlab.sessionlog import LogError, write_flat_table
from srtlab.simulate import SimulatedListener, run_simulated_session
from srtlab.staircase import StaircaseConfig
from srtlab.stats import anova_oneway

POOL = [SentenceRef(f"s{i:03d}", 3 + i % 5) for i in range(50)]


def campaign(n_sessions, true_srt=-2.0, seed0=0, blocks=2, slope_b=1.0,
             cohort="x", sentence_offsets=None):
    config = StaircaseConfig(blocks=blocks)
    logs = []
    for i in range(n_sessions):
        listener = SimulatedListener(true_srt=true_srt, slope_b=slope_b,
                                     rng_seed=seed0 + i,
                                     sentence_offsets=sentence_offsets or {})
        logs.append(run_simulated_session(
            config, listener, POOL, seed=seed0 + i,
            session_id=f"{cohort}-{i:03d}",
            patient={"code": f"{cohort}-{i:03d}", "cohort": cohort},
        ))
    return logs


class TestObservations:
    def test_training_and_aborted_attempts_are_dropped(self):
        logs = campaign(2, seed0=10)
        pairs = observations_from_logs(logs, AnalysisParams())
        assert pairs
        trained = sum(1 for log in logs for t in log.trials() if t["is_training"])
        scored = sum(len(log.scored_trials()) for log in logs)
        assert trained > 0
        assert len(pairs) == scored

    def test_participant_exclusion(self):
        logs = campaign(3, seed0=20)
        excluded = logs[0].header["patient"]["code"]
        pairs = observations_from_logs(
            logs, AnalysisParams(exclude_participants=(excluded,))
        )
        assert excluded not in {p for p, _ in pairs}

    def test_sentence_exclusion(self):
        logs = campaign(2, seed0=30)
        pairs_all = observations_from_logs(logs, AnalysisParams())
        victim = pairs_all[0][1].sentence_id
        pairs = observations_from_logs(
            logs, AnalysisParams(exclude_sentences=(victim,))
        )
        assert victim not in {o.sentence_id for _, o in pairs}

    def test_atsl_is_level_minus_block_srt(self):
        logs = campaign(1, seed0=40)
        log = logs[0]
        srt = {r["block"]: r["srt"] for r in log.block_results() if r["valid"]}
        pairs = observations_from_logs(logs, AnalysisParams())
        by_key = {}
        for t in log.scored_trials():
            if t["block"] in srt:
                by_key.setdefault(t["sentence_id"], []).append(
                    t["level"] - srt[t["block"]]
                )
        seen = {}
        for _, o in pairs:
            seen.setdefault(o.sentence_id, []).append(o.atsl)
        assert seen == pytest.approx(by_key)


class TestCohortInvariance:
    def test_atsl_washes_out_a_constant_srt_offset(self):
        """Two cohorts whose thresholds differ by a fixed shift: the raw
        presentation levels separate them sharply, the adjusted levels do not."""
        f_raw, p_adj = [], []
        for seed in (1, 2, 3):
            kids = campaign(6, true_srt=1.0, seed0=100 * seed, cohort="child")
            adults = campaign(6, true_srt=-4.0, seed0=100 * seed + 50,
                              cohort="adult")
            raw_groups, adj_groups = [], []
            for logs in (kids, adults):
                raw, adj = [], []
                for log in logs:
                    srt = {r["block"]: r["srt"] for r in log.block_results()
                           if r["valid"]}
                    for t in log.scored_trials():
                        if t["block"] in srt:
                            raw.append(t["level"])
                            adj.append(t["level"] - srt[t["block"]])
                raw_groups.append(raw)
                adj_groups.append(adj)
            f_raw.append(anova_oneway(raw_groups).f)
            p_adj.append(anova_oneway(adj_groups).p_value)
        assert min(f_raw) > 100.0
        assert max(p_adj) > 0.01
        assert np.median(p_adj) > 0.05


@pytest.fixture(scope="module")
def report():
    rng = np.random.default_rng(60)
    offsets = {ref.sentence_id: float(rng.normal(0, 1.5)) for ref in POOL}
    logs = campaign(25, seed0=200, sentence_offsets=offsets)
    return run_analysis(logs, AnalysisParams(n_select=25))


class TestRunAnalysis:
    def test_shapes(self, report):
        assert len(report.fits) == 50
        assert len(report.selection.selected_ids) == 25
        assert set(report.gains) == set(report.selection.selected_ids)
        assert report.anova_participant is not None
        assert report.anova_sentence is not None
        assert report.anova_word_count is not None

    def test_equalized_slope_not_flatter(self, report):
        assert report.slope_equalized >= report.slope_all

    def test_report_files(self, report, tmp_path):
        write_report(report, tmp_path)
        fits_lines = (tmp_path / "fits.tsv").read_text().strip().splitlines()
        assert len(fits_lines) == 51
        selection = json.loads((tmp_path / "selection.json").read_text())
        assert selection["n_selected"] == 25
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert stats["participants"]

    def test_gains_into_manifest(self, report, tmp_path, manifest_corpus):
        out = tmp_path / "adjusted.tsv"
        gains = {"s001": 2.5}
        apply_gains_to_manifest(manifest_corpus.root, gains, out)
        lines = out.read_text().splitlines()
        row = next(line for line in lines if line.startswith("s001\t"))
        assert "2.500000" in row


class TestFlatTable:
    def test_round_trip_matches_log_analysis(self, tmp_path):
        logs = campaign(4, seed0=300)
        table = tmp_path / "trials.tsv"
        write_flat_table(logs, table)
        rebuilt = logs_from_flat_table(table, StaircaseConfig(blocks=2))
        direct = observations_from_logs(logs, AnalysisParams())
        via_table = observations_from_logs(rebuilt, AnalysisParams())
        assert len(direct) == len(via_table)
        key = lambda pair: (pair[0], pair[1].sentence_id, pair[1].atsl)
        for a, b in zip(sorted(direct, key=key), sorted(via_table, key=key)):
            assert a[0] == b[0]
            assert a[1].atsl == pytest.approx(b[1].atsl, abs=1e-9)
            assert a[1].words_correct == b[1].words_correct

    def test_tampered_levels_are_rejected(self, tmp_path):
        logs = campaign(1, seed0=400)
        table = tmp_path / "trials.tsv"
        write_flat_table(logs, table)
        lines = table.read_text().splitlines()
        parts = lines[5].split("\t")
        parts[4] = repr(float(parts[4]) + 2.0)     # corrupt one level
        lines[5] = "\t".join(parts)
        table.write_text("\n".join(lines) + "\n")
        with pytest.raises(LogError):
            logs_from_flat_table(table, StaircaseConfig(blocks=2))
