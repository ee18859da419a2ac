"""Examiner-facing session service.

A :class:`SessionStore` owns the live sessions: it persists every scored
trial to an append-only log before acknowledging it, serializes submissions
per session, and feeds a sequence-numbered event stream that the console UI
renders from.  ``create_app`` wraps a store into the HTTP API:

* ``POST /sessions`` - open a session (patient data, condition, overrides)
* ``GET  /sessions/{id}`` - full public state snapshot
* ``POST /sessions/{id}/trials`` - score the pending trial (idempotent)
* ``GET  /sessions/{id}/events`` - server-sent event stream
* ``GET  /sessions/{id}/export`` - the session log file
* ``GET  /sessions/{id}/trial-audio`` - rendered stereo WAV of the pending trial

All adaptive logic lives server-side; clients only display state.
"""

from __future__ import annotations

import json
import os
import re
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse, Response, StreamingResponse
from pydantic import BaseModel

from .audio import CONDITIONS, assemble_trial, wav_bytes
from .corpus import Corpus, CorpusError
from .engine import RUNNING, PendingTrial, SessionEngine, SessionError
from .sessionlog import SessionLog, dump_row, make_header, read_log, replay_staircase
from .staircase import StaircaseConfig

_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class _LiveSession:
    session_id: str
    header: dict
    engine: SessionEngine
    path: Path
    keys_path: Path
    lock: threading.Lock = field(default_factory=threading.Lock)
    cond: threading.Condition = field(default_factory=threading.Condition)
    events: list[dict] = field(default_factory=list)
    seen_keys: dict[str, dict] = field(default_factory=dict)
    flushed_rows: int = 0
    audio_cache: Optional[tuple[tuple, bytes]] = None


class SessionStore:
    """Thread-safe registry of live sessions backed by one log file each."""

    def __init__(self, sessions_dir: Path | str, corpus: Optional[Corpus] = None,
                 verify_replay: bool = False,
                 on_trial_ready: Optional[Callable[[str, PendingTrial], None]] = None):
        self.dir = Path(sessions_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.corpus = corpus
        self.verify_replay = verify_replay
        self.on_trial_ready = on_trial_ready
        self._sessions: dict[str, _LiveSession] = {}
        self._registry_lock = threading.Lock()
        self._reload()

    # -- lifecycle -----------------------------------------------------------

    def _require_corpus(self) -> Corpus:
        if self.corpus is None:
            raise ServiceError(400, "configuration", "no corpus loaded")
        if self.corpus.calibration is None:
            raise ServiceError(400, "configuration", "corpus has no calibration file")
        return self.corpus

    def create_session(self, patient: dict, condition: str = "SV0",
                       config_overrides: Optional[dict] = None,
                       seed: Optional[int] = None,
                       session_id: Optional[str] = None,
                       created_at: Optional[str] = None,
                       retry_cap: int = 5,
                       extend_until_valid: bool = False) -> dict:
        corpus = self._require_corpus()
        if condition not in CONDITIONS:
            raise ServiceError(400, "validation",
                               f"unknown condition {condition!r}; one of {sorted(CONDITIONS)}")
        try:
            config = StaircaseConfig(**(config_overrides or {}))
        except (TypeError, ValueError) as exc:
            raise ServiceError(400, "validation", f"bad staircase config: {exc}")
        if session_id is None:
            session_id = "sess-" + uuid.uuid4().hex[:12]
        if not _ID_RE.match(session_id):
            raise ServiceError(400, "validation", "session_id must be [A-Za-z0-9_-]{1,64}")
        with self._registry_lock:
            if session_id in self._sessions:
                raise ServiceError(409, "conflict", f"session {session_id} already exists")
            if seed is None:
                seed = int.from_bytes(os.urandom(4), "big")
            engine = SessionEngine(config, corpus.sentence_refs(), seed=seed,
                                   retry_cap=retry_cap,
                                   extend_until_valid=extend_until_valid)
            header = make_header(
                session_id=session_id,
                created_at=created_at or datetime.now(timezone.utc)
                .strftime("%Y-%m-%dT%H:%M:%SZ"),
                patient=patient,
                condition=condition,
                config=config,
                seed=seed,
                retry_cap=retry_cap,
                extend_until_valid=extend_until_valid,
                calibration=corpus.calibration.to_dict(),
            )
            live = _LiveSession(
                session_id=session_id,
                header=header,
                engine=engine,
                path=self.dir / f"{session_id}.ndjson",
                keys_path=self.dir / f"{session_id}.keys",
            )
            self._persist_header(live)
            self._flush_rows(live)
            self._sessions[session_id] = live
        self._publish_rows(live, live.engine.rows)
        self._publish_trial_ready(live)
        return self.public_state(session_id)

    def _reload(self) -> None:
        for path in sorted(self.dir.glob("*.ndjson")):
            log = read_log(path)
            live = self._rebuild(log, path)
            self._sessions[live.session_id] = live

    def _rebuild(self, log: SessionLog, path: Path) -> _LiveSession:
        if self.corpus is None:
            raise ServiceError(500, "configuration",
                               "cannot reopen sessions without the corpus")
        header = log.header
        config = log.config
        engine = SessionEngine(config, self.corpus.sentence_refs(),
                               seed=header["seed"], retry_cap=header["retry_cap"],
                               extend_until_valid=header.get("extend_until_valid", False))
        for row in log.trials():
            pending = engine.pending_trial()
            if (pending is None or pending.sentence_id != row["sentence_id"]
                    or abs(pending.level - row["level"]) > 1e-9):
                raise ServiceError(500, "corrupt",
                                   f"{path.name}: log does not replay against the corpus")
            engine.submit(row["words_correct"])
        live = _LiveSession(
            session_id=log.session_id, header=header, engine=engine, path=path,
            keys_path=path.with_suffix(".keys"),
        )
        live.flushed_rows = len(engine.rows)
        if live.keys_path.exists():
            for line in live.keys_path.read_text().splitlines():
                if line.strip():
                    live.seen_keys[line.strip()] = {"replayed": True}
        self._replay_events(live)
        return live

    def _replay_events(self, live: _LiveSession) -> None:
        self._publish_rows(live, live.engine.rows)
        self._publish_trial_ready(live)

    # -- persistence ----------------------------------------------------------

    def _persist_header(self, live: _LiveSession) -> None:
        with live.path.open("w") as fh:
            fh.write(dump_row(live.header) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _flush_rows(self, live: _LiveSession) -> None:
        new = live.engine.rows[live.flushed_rows:]
        if not new:
            return
        with live.path.open("a") as fh:
            for row in new:
                fh.write(dump_row(row) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        live.flushed_rows = len(live.engine.rows)

    def _remember_key(self, live: _LiveSession, key: str, ack: dict) -> None:
        live.seen_keys[key] = ack
        with live.keys_path.open("a") as fh:
            fh.write(key + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- events ----------------------------------------------------------------

    def _publish(self, live: _LiveSession, event: str, data: dict) -> None:
        with live.cond:
            live.events.append({"seq": len(live.events), "event": event, "data": data})
            live.cond.notify_all()

    def _publish_rows(self, live: _LiveSession, rows: list[dict]) -> None:
        for row in rows:
            kind = row["kind"]
            if kind == "trial":
                self._publish(live, "scored", row)
            elif kind == "event":
                if row["name"] in ("reversal_positive", "reversal_negative"):
                    self._publish(live, "reversal", row)
                elif row["name"] == "restart":
                    self._publish(live, "restart", row)
            elif kind == "block_result":
                self._publish(live, "block-complete", row)
            elif kind == "end":
                self._publish(live, "session-complete", row)

    def _publish_trial_ready(self, live: _LiveSession) -> None:
        pending = live.engine.pending_trial()
        if pending is None:
            return
        self._publish(live, "trial-ready", self._pending_dict(live, pending))
        if self.on_trial_ready is not None:
            self.on_trial_ready(live.session_id, pending)

    def _pending_dict(self, live: _LiveSession, pending: PendingTrial) -> dict:
        text = ""
        if self.corpus is not None:
            try:
                text = self.corpus.sentence(pending.sentence_id).text
            except CorpusError:
                text = ""
        return {
            "block": pending.block, "attempt": pending.attempt,
            "trial": pending.trial_index, "sentence_id": pending.sentence_id,
            "text": text, "words_total": pending.words_total,
            "level": pending.level, "snr": pending.snr,
            "is_training": pending.is_training,
        }

    # -- queries ----------------------------------------------------------------

    def _get(self, session_id: str) -> _LiveSession:
        live = self._sessions.get(session_id)
        if live is None:
            raise ServiceError(404, "not_found", f"unknown session {session_id}")
        return live

    def public_state(self, session_id: str) -> dict:
        live = self._get(session_id)
        engine = live.engine
        pending = engine.pending_trial()
        track = [
            {k: row[k] for k in ("block", "attempt", "trial", "sentence_id",
                                 "level", "snr", "words_total", "words_correct",
                                 "is_training")}
            for row in engine.rows if row["kind"] == "trial"
        ]
        reversals = [
            {"block": r["block"], "attempt": r["attempt"], "trial": r.get("trial"),
             "kind": r["name"], "level": r.get("level")}
            for r in engine.rows
            if r["kind"] == "event" and r["name"] in ("reversal_positive",
                                                      "reversal_negative")
        ]
        restarts = [
            {"block": r["block"], "attempt": r["attempt"], "trial": r.get("trial")}
            for r in engine.rows
            if r["kind"] == "event" and r["name"] == "restart"
        ]
        block_srts = [row for row in engine.rows if row["kind"] == "block_result"]
        return {
            "session_id": live.session_id,
            "created_at": live.header["created_at"],
            "patient": live.header["patient"],
            "condition": live.header["condition"],
            "config": live.header["config"],
            "status": engine.status,
            "fail_reason": engine.fail_reason,
            "block": engine.block,
            "attempt": engine.attempt,
            "phase": engine.state.phase.value,
            "scored_in_block": engine.state.scored_trials,
            "block_length": engine.config.block_length,
            "blocks": engine.config.blocks,
            "pending": self._pending_dict(live, pending) if pending else None,
            "track": track,
            "reversals": reversals,
            "restarts": restarts,
            "block_srts": block_srts,
            "last_seq": len(live.events) - 1,
        }

    # -- commands ----------------------------------------------------------------

    def submit_trial(self, session_id: str, words_correct: int,
                     idempotency_key: str,
                     expected: Optional[dict] = None) -> dict:
        live = self._get(session_id)
        if not idempotency_key:
            raise ServiceError(400, "validation", "idempotency_key is required")
        with live.lock:
            if idempotency_key in live.seen_keys:
                ack = dict(self.public_state(session_id))
                ack["replayed"] = True
                return ack
            engine = live.engine
            pending = engine.pending_trial()
            if engine.status != RUNNING or pending is None:
                raise ServiceError(409, "conflict", f"session is {engine.status}")
            if expected is not None:
                got = (pending.block, pending.attempt, pending.trial_index)
                want = (expected.get("block"), expected.get("attempt"),
                        expected.get("trial"))
                if got != want:
                    raise ServiceError(
                        409, "conflict",
                        f"pending trial is block {got[0]} attempt {got[1]} "
                        f"trial {got[2]}, not {want}",
                    )
            if not 0 <= words_correct <= pending.words_total:
                raise ServiceError(
                    400, "validation",
                    f"words_correct must be within 0..{pending.words_total}",
                )
            scored = self._pending_dict(live, pending)
            try:
                new_rows = engine.submit(words_correct)
            except SessionError as exc:
                raise ServiceError(409, "conflict", str(exc))
            self._flush_rows(live)
            if self.verify_replay:
                self._assert_replay(live)
            ack = {
                "replayed": False,
                "scored": scored,
                "words_correct": words_correct,
                "events": [r for r in new_rows if r["kind"] != "trial"],
                "state": None,
            }
            self._remember_key(live, idempotency_key, ack)
        self._publish_rows(live, new_rows)
        self._publish_trial_ready(live)
        ack["state"] = self.public_state(session_id)
        return ack

    def _assert_replay(self, live: _LiveSession) -> None:
        log = SessionLog(live.header, list(live.engine.rows))
        replay_staircase(log)

    def export_session(self, session_id: str) -> str:
        live = self._get(session_id)
        with live.lock:
            log = SessionLog(live.header, list(live.engine.rows))
            return log.dumps()

    def events_since(self, session_id: str, since: int) -> list[dict]:
        live = self._get(session_id)
        with live.cond:
            return list(live.events[since:])

    def wait_events(self, session_id: str, cursor: int, timeout: float) -> list[dict]:
        live = self._get(session_id)
        with live.cond:
            if cursor >= len(live.events):
                live.cond.wait(timeout)
            return list(live.events[cursor:])

    def render_trial_audio(self, session_id: str, bit_depth: str = "int16") -> bytes:
        live = self._get(session_id)
        corpus = self._require_corpus()
        if corpus.hrirs is None or not corpus.stories:
            raise ServiceError(400, "configuration",
                               "corpus has no stories or impulse responses")
        with live.lock:
            pending = live.engine.pending_trial()
            if pending is None:
                raise ServiceError(409, "conflict", "no trial awaiting presentation")
            cache_key = (pending.block, pending.attempt, pending.trial_index, bit_depth)
            if live.audio_cache and live.audio_cache[0] == cache_key:
                return live.audio_cache[1]
            asset = corpus.sentence(pending.sentence_id)
            if asset.audio is None:
                raise ServiceError(400, "configuration",
                                   f"{asset.sentence_id} has no audio")
            condition = CONDITIONS[live.header["condition"]]
            stories = corpus.stories_for(condition.same_voice)
            offsets = live.engine.story_offsets
            story_offsets = [
                int(frac * s.audio.n_samples) for frac, s in zip(offsets, stories)
            ]
            rendered = assemble_trial(
                target_samples=asset.audio.samples,
                eq_gain_db=asset.eq_gain_db,
                stories=[s.audio for s in stories],
                condition=condition,
                hrirs=corpus.hrirs,
                calibration=corpus.calibration,
                target_level=pending.level,
                competing_level=live.engine.config.competing_level,
                story_offsets=story_offsets,
                sample_rate=asset.audio.sample_rate,
                trial_name=f"{session_id} block {pending.block} trial {pending.trial_index}",
            )
            data = wav_bytes(rendered, bit_depth)
            live.audio_cache = (cache_key, data)
            return data


# -- HTTP layer ------------------------------------------------------------------


class CreateSessionRequest(BaseModel):
    patient: dict = {}
    condition: str = "SV0"
    config: Optional[dict] = None
    seed: Optional[int] = None
    session_id: Optional[str] = None
    created_at: Optional[str] = None
    retry_cap: int = 5
    extend_until_valid: bool = False


class SubmitTrialRequest(BaseModel):
    words_correct: int
    idempotency_key: str
    expected: Optional[dict] = None


def create_app(store: SessionStore, ui_dir: Optional[Path | str] = None) -> FastAPI:
    app = FastAPI(title="srtlab session service")
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return Response(
            content=json.dumps({"error": {"code": exc.code, "message": exc.message}}),
            status_code=exc.status,
            media_type="application/json",
        )

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        return store.create_session(
            patient=req.patient, condition=req.condition,
            config_overrides=req.config, seed=req.seed,
            session_id=req.session_id, created_at=req.created_at,
            retry_cap=req.retry_cap, extend_until_valid=req.extend_until_valid,
        )

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.public_state(session_id)

    @app.post("/sessions/{session_id}/trials")
    def submit_trial(session_id: str, req: SubmitTrialRequest):
        return store.submit_trial(session_id, req.words_correct,
                                  req.idempotency_key, req.expected)

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str):
        content = store.export_session(session_id)
        return PlainTextResponse(content, media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, since: int = Query(0, ge=0),
               max_events: Optional[int] = Query(None, ge=1),
               poll_s: float = Query(10.0, gt=0.0, le=60.0)):
        store.public_state(session_id)  # 404 before the stream starts

        def stream():
            cursor = since
            sent = 0
            while True:
                batch = store.wait_events(session_id, cursor, timeout=poll_s)
                if not batch:
                    yield ": keepalive\n\n"
                    continue
                for item in batch:
                    cursor = item["seq"] + 1
                    payload = json.dumps(item["data"], sort_keys=True)
                    yield f"id: {item['seq']}\nevent: {item['event']}\ndata: {payload}\n\n"
                    sent += 1
                    if max_events is not None and sent >= max_events:
                        return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/trial-audio")
    def trial_audio(session_id: str, format: str = Query("int16")):
        if format not in ("int16", "float32"):
            raise HTTPException(400, "format must be int16 or float32")
        data = store.render_trial_audio(session_id, format)
        return Response(content=data, media_type="audio/wav")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
