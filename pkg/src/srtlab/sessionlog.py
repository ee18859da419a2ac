"""Append-only session logs.

One newline-delimited JSON file per session: a header record followed by
trial, event, block-result and end records in the order they happened.  The
format is the single interchange surface between live testing, the simulator
and the analysis pipeline, and every consumer reads it unchanged.

Rows are serialized compactly with sorted keys, so identical sessions produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .staircase import (
    Phase,
    SRTEstimate,
    StaircaseConfig,
    StaircaseState,
    compute_srt,
    extend_block,
    init_block,
    record_response,
)

SCHEMA = "srt-session/1"

ROW_KINDS = {"header", "block_start", "trial", "event", "block_result", "end"}
EVENT_NAMES = {
    "reversal_positive", "reversal_negative", "level_clamped",
    "restart", "block_extended", "session_failed",
}


class LogError(Exception):
    pass


def dump_row(row: dict) -> str:
    return json.dumps(row, sort_keys=True, separators=(",", ":"))


def config_to_dict(config: StaircaseConfig) -> dict:
    return {
        "competing_level": config.competing_level,
        "training_snr": config.training_snr,
        "training_trials": config.training_trials,
        "big_step": config.big_step,
        "small_step": config.small_step,
        "block_length": config.block_length,
        "blocks": config.blocks,
        "next_block_offset": config.next_block_offset,
        "level_min": config.level_min,
        "level_max": config.level_max,
        "min_midpoints": config.min_midpoints,
    }


def config_from_dict(data: dict) -> StaircaseConfig:
    return StaircaseConfig(**data)


def make_header(session_id: str, created_at: str, patient: dict, condition: str,
                config: StaircaseConfig, seed: int, retry_cap: int,
                extend_until_valid: bool = False,
                calibration: Optional[dict] = None) -> dict:
    return {
        "kind": "header",
        "schema": SCHEMA,
        "session_id": session_id,
        "created_at": created_at,
        "patient": patient,
        "condition": condition,
        "config": config_to_dict(config),
        "seed": seed,
        "retry_cap": retry_cap,
        "extend_until_valid": extend_until_valid,
        "calibration": calibration,
    }


@dataclass
class SessionLog:
    header: dict
    rows: list[dict] = field(default_factory=list)

    @property
    def session_id(self) -> str:
        return self.header["session_id"]

    @property
    def config(self) -> StaircaseConfig:
        return config_from_dict(self.header["config"])

    @property
    def status(self) -> str:
        for row in reversed(self.rows):
            if row["kind"] == "end":
                return row["status"]
        return "incomplete"

    def trials(self) -> list[dict]:
        return [r for r in self.rows if r["kind"] == "trial"]

    def block_results(self) -> list[dict]:
        return [r for r in self.rows if r["kind"] == "block_result"]

    def final_attempts(self) -> dict[int, int]:
        """Highest attempt number seen per block."""
        attempts: dict[int, int] = {}
        for row in self.rows:
            if "block" in row and "attempt" in row:
                attempts[row["block"]] = max(attempts.get(row["block"], 1), row["attempt"])
        return attempts

    def scored_trials(self) -> list[dict]:
        """Trial rows that enter analysis: final attempt of each block, training excluded."""
        finals = self.final_attempts()
        return [
            t for t in self.trials()
            if not t["is_training"] and t["attempt"] == finals[t["block"]]
        ]

    def dumps(self) -> str:
        lines = [dump_row(self.header)]
        lines.extend(dump_row(r) for r in self.rows)
        if self.status == "incomplete":
            lines.append(dump_row({"kind": "end", "status": "incomplete", "reason": None}))
        return "\n".join(lines) + "\n"


def write_log(log: SessionLog, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(log.dumps())


def read_log(path: Path | str) -> SessionLog:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise LogError(f"{path}: empty session log")
    header = json.loads(lines[0])
    if header.get("kind") != "header" or header.get("schema") != SCHEMA:
        raise LogError(f"{path}: not a {SCHEMA} log")
    rows = [json.loads(line) for line in lines[1:] if line.strip()]
    for row in rows:
        if row.get("kind") not in ROW_KINDS:
            raise LogError(f"{path}: unknown row kind {row.get('kind')!r}")
    return SessionLog(header, rows)


def validate_log(log: SessionLog) -> None:
    """Schema-level checks every consumer relies on."""
    for row in log.rows:
        kind = row["kind"]
        if kind == "trial":
            for key in ("block", "attempt", "trial", "sentence_id", "level",
                        "snr", "words_total", "words_correct", "is_training"):
                if key not in row:
                    raise LogError(f"trial row missing {key!r}")
            if not 0 <= row["words_correct"] <= row["words_total"]:
                raise LogError("trial row has words_correct out of range")
            expected_snr = row["level"] - log.config.competing_level
            if abs(row["snr"] - expected_snr) > 1e-9:
                raise LogError("trial row snr does not match level - competing_level")
        elif kind == "event" and row.get("name") not in EVENT_NAMES:
            raise LogError(f"unknown event name {row.get('name')!r}")


@dataclass
class BlockReplay:
    block: int
    attempt: int
    state: StaircaseState
    estimate: Optional[SRTEstimate]


def replay_staircase(log: SessionLog) -> list[BlockReplay]:
    """Refold every block of a log through the staircase engine.

    Each trial row is fed back into a fresh per-block state; the recorded
    level must match the level the engine proposes at that point.  This is
    the event-sourcing check: the log alone reproduces the full track.
    """
    config = log.config
    replays: dict[tuple[int, int], BlockReplay] = {}
    anchors: dict[int, float] = {}
    for row in log.trials():
        key = (row["block"], row["attempt"])
        if key not in replays:
            prev = anchors.get(row["block"] - 1) if row["block"] > 1 else None
            state = init_block(config, row["block"], prev)
            replays[key] = BlockReplay(row["block"], row["attempt"], state, None)
        rep = replays[key]
        if rep.state.phase is Phase.COMPLETE:
            # log went past the nominal length: the block was extended
            extend_block(rep.state)
        if abs(rep.state.current_level - row["level"]) > 1e-9:
            raise LogError(
                f"block {row['block']} attempt {row['attempt']} trial {row['trial']}: "
                f"logged level {row['level']} but replay proposes {rep.state.current_level}"
            )
        record_response(rep.state, row["sentence_id"], row["words_total"],
                        row["words_correct"])
        if rep.state.phase is Phase.COMPLETE:
            rep.estimate = compute_srt(rep.state)
            if rep.estimate.value is not None:
                anchors[row["block"]] = rep.estimate.value
            elif rep.state.trials:
                anchors[row["block"]] = rep.state.trials[-1].level
    return sorted(replays.values(), key=lambda r: (r.block, r.attempt))


FLAT_COLUMNS = ("participant", "block", "trial", "sentence_id", "level",
                "words_total", "words_correct", "training")


def write_flat_table(logs: Iterable[SessionLog], path: Path | str) -> None:
    """Flatten logs into the one-row-per-trial text table (final attempts only)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(FLAT_COLUMNS)]
    for log in logs:
        participant = log.header.get("patient", {}).get("code") or log.session_id
        finals = log.final_attempts()
        for t in log.trials():
            if t["attempt"] != finals[t["block"]]:
                continue
            lines.append("\t".join([
                str(participant), str(t["block"]), str(t["trial"]),
                t["sentence_id"], repr(float(t["level"])),
                str(t["words_total"]), str(t["words_correct"]),
                "1" if t["is_training"] else "0",
            ]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_flat_table(path: Path | str) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != FLAT_COLUMNS:
        raise LogError(f"{path}: expected header {' '.join(FLAT_COLUMNS)}")
    rows = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(FLAT_COLUMNS):
            raise LogError(f"{path}: malformed row {line!r}")
        rows.append({
            "participant": parts[0],
            "block": int(parts[1]),
            "trial": int(parts[2]),
            "sentence_id": parts[3],
            "level": float(parts[4]),
            "words_total": int(parts[5]),
            "words_correct": int(parts[6]),
            "training": parts[7] == "1",
        })
    return rows
