"""Synthetic respondents for end-to-end verification without human listeners.

Word recognition is modeled as independent Bernoulli draws: at a presented
level the probability of repeating any single word correctly follows a
logistic curve centered on the listener's true threshold, and the number of
correct words in a sentence is binomial.  Driving the session engine with
such a listener produces logs indistinguishable in shape from live ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from .engine import RUNNING, SentenceRef, SessionEngine
from .sessionlog import SessionLog, make_header
from .staircase import StaircaseConfig


@dataclass
class SimulatedListener:
    """Logistic word-recognition model.

    ``true_srt`` is the 50% point expressed relative to the reference level
    handed to :meth:`respond` (with the competing level as reference it is a
    signal-to-noise ratio).  ``sentence_offsets`` shifts individual
    sentences' thresholds, which is what the intelligibility-equalization
    pipeline needs to have something to correct.
    """

    true_srt: float
    slope_b: float = 0.5
    rng_seed: int = 0
    sentence_offsets: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.slope_b <= 0:
            raise ValueError("slope_b must be positive")
        self._rng = np.random.Generator(np.random.PCG64(self.rng_seed))

    def p_correct(self, level: float, srt_reference: float,
                  sentence_id: Optional[str] = None) -> float:
        x = level - srt_reference
        offset = self.sentence_offsets.get(sentence_id, 0.0) if sentence_id else 0.0
        return float(expit(self.slope_b * (x - self.true_srt - offset)))

    def respond(self, level: float, srt_reference: float, words_total: int,
                sentence_id: Optional[str] = None) -> int:
        """Number of correctly repeated words for one presentation."""
        if words_total < 1:
            raise ValueError("words_total must be >= 1")
        p = self.p_correct(level, srt_reference, sentence_id)
        return int(self._rng.binomial(words_total, p))


def run_simulated_session(config: StaircaseConfig,
                          listener: SimulatedListener,
                          sentences: Sequence[SentenceRef],
                          *,
                          seed: int = 0,
                          session_id: str = "sim-0",
                          created_at: str = "1970-01-01T00:00:00Z",
                          patient: Optional[dict] = None,
                          condition: str = "SV0",
                          retry_cap: int = 5,
                          extend_until_valid: bool = False) -> SessionLog:
    """Drive a full session and return its log.

    The listener's threshold is referenced to the competing level, so its
    ``true_srt`` reads as an SNR.  A session that keeps failing training
    past the retry cap comes back with status ``failed`` rather than raising.
    """
    engine = SessionEngine(config, sentences, seed=seed, retry_cap=retry_cap,
                           extend_until_valid=extend_until_valid)
    header = make_header(
        session_id=session_id,
        created_at=created_at,
        patient=patient or {"code": session_id},
        condition=condition,
        config=config,
        seed=seed,
        retry_cap=retry_cap,
        extend_until_valid=extend_until_valid,
    )
    while engine.status == RUNNING:
        pending = engine.pending_trial()
        correct = listener.respond(pending.level, config.competing_level,
                                   pending.words_total, pending.sentence_id)
        engine.submit(correct)
    return SessionLog(header, list(engine.rows))


@dataclass(frozen=True)
class SimulationSummary:
    sessions: int
    failed_sessions: int
    blocks: int
    valid_blocks: int
    restarts: int
    srt_mean: float
    srt_sd: float

    def to_dict(self) -> dict:
        return {
            "sessions": self.sessions,
            "failed_sessions": self.failed_sessions,
            "blocks": self.blocks,
            "valid_blocks": self.valid_blocks,
            "restarts": self.restarts,
            "srt_mean": self.srt_mean,
            "srt_sd": self.srt_sd,
        }


def summarize_sessions(logs: Sequence[SessionLog]) -> SimulationSummary:
    """Convergence report over a batch of simulated sessions."""
    srts = []
    restarts = 0
    blocks = 0
    valid = 0
    failed = 0
    for log in logs:
        if log.status == "failed":
            failed += 1
        for row in log.rows:
            if row["kind"] == "block_result":
                blocks += 1
                if row["valid"]:
                    valid += 1
                    srts.append(row["srt"])
            elif row["kind"] == "event" and row["name"] == "restart":
                restarts += 1
    mean = float(np.mean(srts)) if srts else math.nan
    sd = float(np.std(srts, ddof=1)) if len(srts) > 1 else math.nan
    return SimulationSummary(len(logs), failed, blocks, valid, restarts, mean, sd)
