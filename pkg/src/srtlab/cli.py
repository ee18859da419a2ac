"""Batch entry points.

Subcommands: ``prepare-audio`` (corpus preparation), ``simulate`` (seeded
listener campaigns), ``analyze`` (fits, selection, gains, statistics),
``serve`` (the session HTTP service) and ``calibrate-check`` (reference
renders for a level meter).  Every numeric protocol default is a flag, and a
JSON config file can preload any of them; flags win over the file.

Exit codes: 0 success, 2 validation error, 3 runtime failure.  Failures
print one machine-readable JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    AnalysisParams,
    apply_gains_to_manifest,
    logs_from_flat_table,
    run_analysis,
    write_report,
)
from .audio import AudioBuffer, apply_gain_db, rms_db, synthesize_warning_tone, write_wav
from .corpus import CorpusError, load_corpus, prepare_corpus
from .sessionlog import LogError, read_log, write_log
from .simulate import SimulatedListener, run_simulated_session, summarize_sessions
from .staircase import StaircaseConfig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class CliError(Exception):
    """Validation problem: bad flag value, missing file, malformed input."""


_CONFIG_FIELDS = (
    ("competing_level", float), ("training_snr", float), ("training_trials", int),
    ("big_step", float), ("small_step", float), ("block_length", int),
    ("blocks", int), ("next_block_offset", float), ("level_min", float),
    ("level_max", float), ("min_midpoints", int),
)


def _add_staircase_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("staircase overrides")
    for name, typ in _CONFIG_FIELDS:
        group.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)


def _staircase_config(args: argparse.Namespace, file_config: dict) -> StaircaseConfig:
    values = dict(file_config.get("staircase", {}))
    for name, _ in _CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    try:
        return StaircaseConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad staircase configuration: {exc}")


def _load_file_config(args: argparse.Namespace) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise CliError(f"config file {path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}")


def _existing_dir(value: str) -> Path:
    path = Path(value)
    if not path.is_dir():
        raise CliError(f"directory {path} does not exist")
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srtlab")
    parser.add_argument("--config", help="JSON file preloading any flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-audio", help="normalize, pad and stage a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--headroom-db", type=float, default=7.0)
    p.add_argument("--sentence-pad-ms", type=float, default=500.0)
    p.add_argument("--story-pad-ms", type=float, default=100.0)
    p.add_argument("--bit-depth", choices=("int16", "float32"), default="int16")

    p = sub.add_parser("simulate", help="run seeded simulated sessions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--true-srt", type=float, default=-2.0,
                   help="listener 50%% point as SNR relative to the competing level")
    p.add_argument("--slope-b", type=float, default=0.5)
    p.add_argument("--listener-sd", type=float, default=0.0,
                   help="between-run spread of the true threshold")
    p.add_argument("--sentence-sd", type=float, default=0.0,
                   help="per-sentence threshold offsets, for equalization studies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--condition", default="SV0")
    p.add_argument("--retry-cap", type=int, default=5)
    _add_staircase_flags(p)

    p = sub.add_parser("analyze", help="fit, select and equalize from session logs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--logs", nargs="+", help="session log files or directories")
    src.add_argument("--table", help="flat trial table (one row per trial)")
    p.add_argument("--output", required=True)
    p.add_argument("--n-select", type=int, default=120)
    p.add_argument("--r2-min", type=float, default=0.5)
    p.add_argument("--exclude-sentences", default="",
                   help="comma-separated sentence ids to drop before fitting")
    p.add_argument("--exclude-participants", default="")
    p.add_argument("--corpus", help="corpus dir whose manifest receives the gains")
    _add_staircase_flags(p)

    p = sub.add_parser("serve", help="run the session HTTP service")
    p.add_argument("--corpus", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8343)
    p.add_argument("--ui", help="directory of built console assets to mount at /ui")
    p.add_argument("--verify-replay", action="store_true")

    p = sub.add_parser("calibrate-check", help="render meter-verification signals")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--level", type=float, default=65.0)
    p.add_argument("--sentence-id", default=None)
    return parser


def cmd_prepare_audio(args, file_config) -> int:
    in_dir = _existing_dir(args.input)
    prepare_corpus(in_dir, Path(args.output), headroom_db=args.headroom_db,
                   sentence_pad_ms=args.sentence_pad_ms,
                   story_pad_ms=args.story_pad_ms, bit_depth=args.bit_depth)
    print(f"prepared corpus written to {args.output}")
    return EXIT_OK


def cmd_simulate(args, file_config) -> int:
    config = _staircase_config(args, file_config)
    corpus = load_corpus(_existing_dir(args.corpus), with_audio=False)
    refs = corpus.sentence_refs()
    out = Path(args.output)
    (out / "logs").mkdir(parents=True, exist_ok=True)

    rng = np.random.Generator(np.random.PCG64(args.seed))
    sentence_offsets = {}
    if args.sentence_sd > 0:
        sentence_offsets = {
            ref.sentence_id: float(rng.normal(0.0, args.sentence_sd)) for ref in refs
        }
    logs = []
    for run in range(args.runs):
        true_srt = args.true_srt
        if args.listener_sd > 0:
            true_srt += float(rng.normal(0.0, args.listener_sd))
        listener = SimulatedListener(
            true_srt=true_srt, slope_b=args.slope_b,
            rng_seed=args.seed * 1_000_003 + run,
            sentence_offsets=sentence_offsets,
        )
        log = run_simulated_session(
            config, listener, refs,
            seed=args.seed * 7_919 + run,
            session_id=f"sim-{run:04d}",
            patient={"code": f"sim-{run:04d}", "cohort": "simulated"},
            condition=args.condition,
            retry_cap=args.retry_cap,
        )
        write_log(log, out / "logs" / f"{log.session_id}.ndjson")
        logs.append(log)

    summary = summarize_sessions(logs)
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    print(f"{summary.sessions} sessions, {summary.valid_blocks}/{summary.blocks} "
          f"valid blocks, SRT mean {summary.srt_mean:.2f} dB SPL "
          f"(sd {summary.srt_sd:.2f}), {summary.restarts} restarts")
    return EXIT_OK


def _collect_logs(paths) -> list:
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.rglob("*.ndjson")))
        elif path.exists():
            files.append(path)
        else:
            raise CliError(f"log path {path} does not exist")
    if not files:
        raise CliError("no session logs found")
    return [read_log(f) for f in files]


def cmd_analyze(args, file_config) -> int:
    params = AnalysisParams(
        n_select=args.n_select,
        r2_min=args.r2_min,
        exclude_sentences=tuple(s for s in args.exclude_sentences.split(",") if s),
        exclude_participants=tuple(s for s in args.exclude_participants.split(",") if s),
    )
    if args.table:
        if not Path(args.table).exists():
            raise CliError(f"table {args.table} does not exist")
        config = _staircase_config(args, file_config)
        logs = logs_from_flat_table(args.table, config)
    else:
        logs = _collect_logs(args.logs)
    report = run_analysis(logs, params)
    out = Path(args.output)
    write_report(report, out)
    if args.corpus:
        apply_gains_to_manifest(_existing_dir(args.corpus), report.gains,
                                out / "sentences_adjusted.tsv")
    print(f"fitted {len(report.fits)} sentences from {report.observations} "
          f"observations; selected {len(report.selection.selected_ids)}; "
          f"averaged midpoint slope {report.slope_all:.4f} -> "
          f"{report.slope_equalized:.4f} per dB")
    return EXIT_OK


def cmd_serve(args, file_config) -> int:
    import uvicorn

    from .service import SessionStore, create_app

    corpus = load_corpus(_existing_dir(args.corpus), with_audio=True)
    store = SessionStore(Path(args.sessions), corpus,
                         verify_replay=args.verify_replay)
    app = create_app(store, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_calibrate_check(args, file_config) -> int:
    corpus = load_corpus(_existing_dir(args.corpus), with_audio=True)
    if corpus.calibration is None:
        raise CliError("corpus has no calibration file")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)

    tone = synthesize_warning_tone(corpus.calibration)
    write_wav(out / "warning_tone.wav", tone, "float32")

    asset = (corpus.sentence(args.sentence_id) if args.sentence_id
             else corpus.sentences[0])
    if asset.audio is None:
        raise CliError(f"{asset.sentence_id} has no audio")
    wanted_dbfs = corpus.calibration.dbfs_for(args.level)
    scaled = apply_gain_db(asset.audio, wanted_dbfs - rms_db(asset.audio))
    stereo = AudioBuffer(
        np.column_stack([scaled.samples, scaled.samples]), scaled.sample_rate
    )
    write_wav(out / "reference_sentence.wav", stereo, "float32")

    (out / "readings.json").write_text(json.dumps({
        "calibration": corpus.calibration.to_dict(),
        "expected_db_spl": {
            "warning_tone.wav": 60.0,
            "reference_sentence.wav": args.level,
        },
        "reference_sentence": asset.sentence_id,
    }, indent=2) + "\n")
    print(f"verification renders written to {out}")
    return EXIT_OK


_COMMANDS = {
    "prepare-audio": cmd_prepare_audio,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "serve": cmd_serve,
    "calibrate-check": cmd_calibrate_check,
}


def _emit_error(code: str, message: str) -> None:
    print(json.dumps({"error": {"code": code, "message": message}}), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_config = _load_file_config(args)
        return _COMMANDS[args.command](args, file_config)
    except (CliError, CorpusError, LogError) as exc:
        _emit_error("validation", str(exc))
        return EXIT_VALIDATION
    except Exception as exc:   # noqa: BLE001 - the CLI boundary reports and exits
        _emit_error("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
