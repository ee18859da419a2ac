"""Block sequencing on top of the staircase state machine.

The engine owns what a whole test session needs beyond a single block:
the seeded sentence draw, training restarts with their retry cap, chaining
each block's start level off the previous threshold, and the append-only
row stream that becomes the session log.  Both the live service and the
simulated-listener harness drive sessions exclusively through this class,
which is why their logs are interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import staircase
from .staircase import Event, Phase, SRTEstimate, StaircaseConfig


class SessionError(Exception):
    pass


@dataclass(frozen=True)
class SentenceRef:
    sentence_id: str
    words_total: int


@dataclass(frozen=True)
class PendingTrial:
    block: int
    attempt: int
    trial_index: int
    sentence_id: str
    words_total: int
    level: float
    snr: float
    is_training: bool


@dataclass(frozen=True)
class BlockOutcome:
    block: int
    attempt: int
    estimate: SRTEstimate


RUNNING = "running"
COMPLETE = "complete"
FAILED = "failed"

EXTENSION_CAP_FACTOR = 3    # extended blocks stop at 3x the nominal length


class SessionEngine:
    """Deterministic session driver: same seed and responses, same rows."""

    def __init__(self, config: StaircaseConfig, sentences: Sequence[SentenceRef],
                 seed: int, retry_cap: int = 5, extend_until_valid: bool = False):
        if not sentences:
            raise SessionError("sentence pool is empty")
        if retry_cap < 1:
            raise SessionError("retry_cap must be >= 1")
        self.config = config
        self.retry_cap = retry_cap
        self.extend_until_valid = extend_until_valid
        self.rows: list[dict] = []
        self.block_outcomes: list[BlockOutcome] = []
        self.status = RUNNING
        self.fail_reason: Optional[str] = None

        self._pool = list(sentences)
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._order: list[int] = []
        self._pending: Optional[PendingTrial] = None
        self._prev_srt: Optional[float] = None
        self.block = 1
        self.attempt = 1
        self.state = staircase.init_block(config, 1)
        self._start_block_rows()
        self._draw_pending()

    # -- public surface ----------------------------------------------------

    @property
    def story_offsets(self) -> tuple[float, float]:
        return self._story_offsets

    def pending_trial(self) -> Optional[PendingTrial]:
        return self._pending

    def submit(self, words_correct: int) -> list[dict]:
        """Score the pending trial; returns the rows this response produced."""
        if self.status != RUNNING:
            raise SessionError(f"session is {self.status}")
        pending = self._pending
        if pending is None:
            raise SessionError("no trial awaiting a response")
        if not 0 <= words_correct <= pending.words_total:
            raise SessionError(
                f"words_correct {words_correct} outside 0..{pending.words_total}"
            )
        start = len(self.rows)
        events = staircase.record_response(
            self.state, pending.sentence_id, pending.words_total, words_correct
        )
        trial = self.state.trials[-1]
        self.rows.append({
            "kind": "trial",
            "block": self.block,
            "attempt": self.attempt,
            "trial": trial.trial_index,
            "sentence_id": trial.sentence_id,
            "level": trial.level,
            "snr": trial.snr,
            "words_total": trial.words_total,
            "words_correct": trial.words_correct,
            "is_training": trial.is_training,
        })
        self._pending = None
        for event in events:
            if event in (Event.REVERSAL_POSITIVE, Event.REVERSAL_NEGATIVE):
                self._event(event.value, trial=trial.trial_index,
                            level=self.state.reversals[-1].level)
            elif event is Event.LEVEL_CLAMPED:
                self._event("level_clamped", trial=trial.trial_index,
                            level=self.state.current_level)

        if Event.RESTART_REQUIRED in events:
            self._handle_restart(trial.trial_index)
        elif Event.BLOCK_COMPLETE in events:
            self._handle_block_complete()
        else:
            self._draw_pending()
        return self.rows[start:]

    # -- internals ----------------------------------------------------------

    def _event(self, name: str, **extra) -> None:
        row = {"kind": "event", "name": name, "block": self.block,
               "attempt": self.attempt}
        row.update(extra)
        self.rows.append(row)

    def _start_block_rows(self) -> None:
        self._story_offsets = (float(self._rng.random()), float(self._rng.random()))
        self.rows.append({
            "kind": "block_start",
            "block": self.block,
            "attempt": self.attempt,
            "story_offsets": list(self._story_offsets),
        })

    def _draw_pending(self) -> None:
        if not self._order:
            self._order = list(self._rng.permutation(len(self._pool)))
        ref = self._pool[self._order.pop(0)]
        level = staircase.propose_level(self.state)
        self._pending = PendingTrial(
            block=self.block,
            attempt=self.attempt,
            trial_index=len(self.state.trials) + 1,
            sentence_id=ref.sentence_id,
            words_total=ref.words_total,
            level=level,
            snr=level - self.config.competing_level,
            is_training=self.state.phase is Phase.TRAINING,
        )

    def _fail(self, reason: str) -> None:
        self.status = FAILED
        self.fail_reason = reason
        self._pending = None
        self._event("session_failed", reason=reason)
        self.rows.append({"kind": "end", "status": "failed", "reason": reason})

    def _handle_restart(self, trial_index: int) -> None:
        self._event("restart", trial=trial_index, reason="training_failure")
        if self.attempt >= self.retry_cap:
            self._fail(f"block {self.block} restarted {self.attempt} times")
            return
        self.attempt += 1
        self.state = staircase.init_block(self.config, self.block, self._prev_srt)
        self._start_block_rows()
        self._draw_pending()

    def _handle_block_complete(self) -> None:
        estimate = staircase.compute_srt(self.state)
        scored = self.state.scored_trials
        if (not estimate.valid and self.extend_until_valid
                and scored < EXTENSION_CAP_FACTOR * self.config.block_length):
            staircase.extend_block(self.state)
            self._event("block_extended", scored=scored)
            self._draw_pending()
            return
        self.rows.append({
            "kind": "block_result",
            "block": self.block,
            "attempt": self.attempt,
            "srt": estimate.value,
            "midpoints": list(estimate.midpoints),
            "n_midpoints": estimate.n_midpoints,
            "valid": estimate.valid,
        })
        self.block_outcomes.append(BlockOutcome(self.block, self.attempt, estimate))
        # anchor the next block on the estimate, or on the track's last level
        # when no reversal pair ever formed
        if estimate.value is not None:
            self._prev_srt = estimate.value
        else:
            self._prev_srt = self.state.trials[-1].level
        if self.block >= self.config.blocks:
            self.status = COMPLETE
            self._pending = None
            self.rows.append({"kind": "end", "status": "complete", "reason": None})
            return
        self.block += 1
        self.attempt = 1
        self.state = staircase.init_block(self.config, self.block, self._prev_srt)
        self._start_block_rows()
        self._draw_pending()
