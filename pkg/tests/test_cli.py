import json
from pathlib import Path

import pytest

from srtlab.cli import main
from srtlab.corpus import load_corpus, make_synthetic_corpus
from srtlab.sessionlog import read_log, validate_log


def run(argv):
    return main([str(a) for a in argv])


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def raw_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("raw")
    return make_synthetic_corpus(root, n_sentences=8, seed=21, story_seconds=2.0,
                                 seconds_per_word=0.1)


class TestPrepareAudio:
    def test_prepares_and_is_deterministic(self, raw_corpus, tmp_path):
        out1, out2 = tmp_path / "p1", tmp_path / "p2"
        assert run(["prepare-audio", "--input", raw_corpus.root,
                    "--output", out1]) == 0
        assert run(["prepare-audio", "--input", raw_corpus.root,
                    "--output", out2]) == 0
        assert tree_bytes(out1) == tree_bytes(out2)

        prepared = load_corpus(out1)
        import numpy as np

        levels = [s.rms_db for s in prepared.sentences]
        levels += [s.rms_db for s in prepared.stories]
        # padding adds silence, which lowers whole-file RMS below the
        # normalization point; the spread is what normalization controls
        assert np.all(np.isfinite(levels))
        assert prepared.calibration is not None
        assert prepared.hrirs is not None

    def test_missing_input_is_validation_error(self, tmp_path, capsys):
        code = run(["prepare-audio", "--input", tmp_path / "nope",
                    "--output", tmp_path / "out"])
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"]["code"] == "validation"


class TestSimulate:
    def test_campaign_writes_valid_logs_and_summary(self, manifest_corpus, tmp_path):
        out = tmp_path / "sim"
        code = run(["simulate", "--corpus", manifest_corpus.root, "--output", out,
                    "--runs", 3, "--true-srt", -2, "--seed", 5, "--blocks", 2])
        assert code == 0
        logs = sorted((out / "logs").glob("*.ndjson"))
        assert len(logs) == 3
        for path in logs:
            validate_log(read_log(path))
        summary = json.loads((out / "summary.json").read_text())
        assert summary["sessions"] == 3
        assert summary["blocks"] == 6

    def test_seeded_campaign_is_reproducible(self, manifest_corpus, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["simulate", "--corpus", manifest_corpus.root,
                        "--output", out, "--runs", 2, "--seed", 11,
                        "--blocks", 1]) == 0
            outs.append(tree_bytes(out))
        assert outs[0] == outs[1]

    def test_convergence_summary(self, manifest_corpus, tmp_path):
        out = tmp_path / "conv"
        code = run(["simulate", "--corpus", manifest_corpus.root, "--output", out,
                    "--runs", 40, "--true-srt", -2, "--slope-b", 0.5,
                    "--seed", 1, "--blocks", 1])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert abs(summary["srt_mean"] - 63.0) <= 1.0


@pytest.fixture(scope="module")
def small_campaign(tmp_path_factory):
    root = tmp_path_factory.mktemp("campaign")
    corpus = make_synthetic_corpus(root / "corpus", n_sentences=40, seed=31,
                                   with_audio=False)
    out = root / "sim"
    assert run(["simulate", "--corpus", corpus.root, "--output", out,
                "--runs", 30, "--true-srt", -2, "--seed", 13,
                "--sentence-sd", 1.5, "--listener-sd", 1.0,
                "--blocks", 2]) == 0
    return corpus, out


class TestAnalyze:
    def test_analyze_logs_end_to_end(self, small_campaign, tmp_path):
        corpus, sim_out = small_campaign
        out = tmp_path / "analysis"
        code = run(["analyze", "--logs", sim_out / "logs", "--output", out,
                    "--n-select", 20, "--corpus", corpus.root])
        assert code == 0, "analyze failed"
        fits = (out / "fits.tsv").read_text().strip().splitlines()
        assert fits[0].startswith("sentence_id\t")
        assert len(fits) == 41   # header + one row per sentence
        selection = json.loads((out / "selection.json").read_text())
        assert selection["n_selected"] == 20
        assert len(selection["selected_ids"]) == 20
        gains = (out / "gains.tsv").read_text().strip().splitlines()
        assert len(gains) == 21
        stats = json.loads((out / "stats.json").read_text())
        assert stats["observations"] > 0
        adjusted = (out / "sentences_adjusted.tsv").read_text().splitlines()
        assert len(adjusted) == 41

    def test_flat_table_round_trip(self, small_campaign, tmp_path):
        corpus, sim_out = small_campaign
        from srtlab.sessionlog import read_log, write_flat_table

        logs = [read_log(p) for p in sorted((sim_out / "logs").glob("*.ndjson"))]
        table = tmp_path / "trials.tsv"
        write_flat_table(logs, table)
        out = tmp_path / "analysis-table"
        code = run(["analyze", "--table", table, "--output", out, "--n-select", 20])
        assert code == 0
        selection = json.loads((out / "selection.json").read_text())
        assert selection["n_selected"] == 20

    def test_exclusions_are_honored(self, small_campaign, tmp_path):
        corpus, sim_out = small_campaign
        out = tmp_path / "excl"
        code = run(["analyze", "--logs", sim_out / "logs", "--output", out,
                    "--n-select", 20, "--exclude-sentences", "s001,s002"])
        assert code == 0
        fits = (out / "fits.tsv").read_text()
        assert "\ns001\t" not in fits and not fits.startswith("s001\t")

    def test_missing_logs_is_validation_error(self, tmp_path, capsys):
        code = run(["analyze", "--logs", tmp_path / "nothing",
                    "--output", tmp_path / "out"])
        assert code == 2

    def test_impossible_selection_is_runtime_failure(self, small_campaign,
                                                     tmp_path, capsys):
        corpus, sim_out = small_campaign
        code = run(["analyze", "--logs", sim_out / "logs",
                    "--output", tmp_path / "out", "--n-select", 500])
        assert code == 3
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"]["code"] == "runtime"

    def test_analyze_is_reproducible(self, small_campaign, tmp_path):
        corpus, sim_out = small_campaign
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run(["analyze", "--logs", sim_out / "logs", "--output", out,
                        "--n-select", 20]) == 0
            outs.append(tree_bytes(out))
        assert outs[0] == outs[1]


class TestCalibrateCheck:
    def test_renders_reference_signals(self, raw_corpus, tmp_path):
        out = tmp_path / "cal"
        code = run(["calibrate-check", "--corpus", raw_corpus.root,
                    "--output", out, "--level", 65])
        assert code == 0
        assert (out / "warning_tone.wav").exists()
        assert (out / "reference_sentence.wav").exists()
        readings = json.loads((out / "readings.json").read_text())
        assert readings["expected_db_spl"]["reference_sentence.wav"] == 65.0

        from srtlab.audio import read_wav, rms_db

        ref = read_wav(out / "reference_sentence.wav")
        assert rms_db(ref) == pytest.approx(65.0 - 100.0, abs=1e-6)
