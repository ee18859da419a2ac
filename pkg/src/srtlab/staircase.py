"""Adaptive level-tracking state machine for speech-in-noise blocks.

A block starts with fixed-level training trials (block 1 only), descends in
big steps while the listener repeats more than half of the words, switches to
small steps at the first positive reversal, and keeps tracking until the
configured number of scored trials has been presented.  The block threshold
is the mean of the midpoints of successive positive/negative reversal pairs.

Everything here is deterministic: the same configuration and response
sequence always produce the same trial, reversal and threshold record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class Phase(str, Enum):
    TRAINING = "training"
    BIG_STEP = "big_step"
    SMALL_STEP = "small_step"
    COMPLETE = "complete"
    RESTART_REQUIRED = "restart_required"


class Direction(str, Enum):
    DOWN = "down"
    UP = "up"
    NONE = "none"


class ReversalKind(str, Enum):
    POSITIVE = "positive"   # descent turned into ascent (first sub-50% response)
    NEGATIVE = "negative"   # ascent turned into descent


class StaircaseError(Exception):
    """Contract violation while driving a staircase block."""


@dataclass(frozen=True)
class StaircaseConfig:
    competing_level: float = 65.0       # dB SPL, fixed level of the competing stream
    training_snr: float = 7.0           # dB above competing level for training trials
    training_trials: int = 3
    big_step: float = 4.0               # dB, used until the first positive reversal
    small_step: float = 2.0             # dB, used afterwards
    block_length: int = 31              # scored (non-training) trials per block
    blocks: int = 6
    next_block_offset: float = 3.0      # dB above previous block threshold
    level_min: float = 30.0             # dB SPL clamp floor
    level_max: float = 85.0             # dB SPL clamp ceiling
    min_midpoints: int = 3

    def __post_init__(self):
        if not self.big_step > self.small_step > 0:
            raise ValueError("steps must satisfy big_step > small_step > 0")
        start = self.competing_level + self.training_snr
        if not (self.level_min < start <= self.level_max):
            raise ValueError(
                "training level %.1f dB SPL outside clamp range (%.1f, %.1f]"
                % (start, self.level_min, self.level_max)
            )
        if self.min_midpoints < 1:
            raise ValueError("min_midpoints must be >= 1")
        if self.training_trials < 0 or self.block_length < 1 or self.blocks < 1:
            raise ValueError("counts must be positive")

    def clamp(self, level: float) -> float:
        return min(self.level_max, max(self.level_min, level))


@dataclass(frozen=True)
class TrialRecord:
    block_index: int
    trial_index: int            # 1-based within the block, training included
    sentence_id: str
    level: float                # dB SPL of the target sentence
    snr: float                  # level - competing_level
    words_total: int
    words_correct: int
    is_training: bool

    def __post_init__(self):
        if not 0 <= self.words_correct <= self.words_total:
            raise ValueError("words_correct must be within 0..words_total")


@dataclass(frozen=True)
class Reversal:
    kind: ReversalKind
    level: float                # presented level at the trial that turned the track
    trial_index: int


@dataclass(frozen=True)
class SRTEstimate:
    value: Optional[float]      # None when no complete reversal pair exists
    midpoints: tuple[float, ...]
    n_midpoints: int
    valid: bool


class Event(str, Enum):
    REVERSAL_POSITIVE = "reversal_positive"
    REVERSAL_NEGATIVE = "reversal_negative"
    RESTART_REQUIRED = "restart_required"
    BLOCK_COMPLETE = "block_complete"
    LEVEL_CLAMPED = "level_clamped"


@dataclass
class StaircaseState:
    config: StaircaseConfig
    block_index: int
    phase: Phase
    current_level: float
    last_direction: Direction = Direction.NONE
    trials: list[TrialRecord] = field(default_factory=list)
    reversals: list[Reversal] = field(default_factory=list)
    clamp_hits: int = 0
    target_scored: Optional[int] = None    # overrides config.block_length when extended

    @property
    def scored_trials(self) -> int:
        return sum(1 for t in self.trials if not t.is_training)

    @property
    def training_done(self) -> int:
        return sum(1 for t in self.trials if t.is_training)

    @property
    def active(self) -> bool:
        return self.phase not in (Phase.COMPLETE, Phase.RESTART_REQUIRED)


def init_block(config: StaircaseConfig, block_index: int,
               prev_srt: Optional[float] = None) -> StaircaseState:
    """Open a fresh block.

    Block 1 starts in the training phase at ``competing_level + training_snr``
    (with ``training_trials == 0`` it starts directly in the big-step phase).
    Later blocks need the previous block's threshold and start small-stepping
    at ``prev_srt + next_block_offset``, clamped to the configured range.
    """
    if block_index < 1:
        raise StaircaseError("block_index is 1-based")
    if block_index == 1:
        if prev_srt is not None:
            raise StaircaseError("block 1 takes no previous threshold")
        phase = Phase.TRAINING if config.training_trials > 0 else Phase.BIG_STEP
        level = config.clamp(config.competing_level + config.training_snr)
        return StaircaseState(config, block_index, phase, level)
    if prev_srt is None:
        raise StaircaseError("blocks beyond the first need the previous block's SRT")
    level = config.clamp(prev_srt + config.next_block_offset)
    return StaircaseState(config, block_index, Phase.SMALL_STEP, level)


def propose_level(state: StaircaseState) -> float:
    """Level at which the next sentence should be presented. Idempotent."""
    if not state.active:
        raise StaircaseError(f"no further trials in phase {state.phase.value}")
    return state.current_level


def record_response(state: StaircaseState, sentence_id: str, words_total: int,
                    words_correct: int) -> list[Event]:
    """Score one presented sentence and advance the track.

    The response rate decides the next level: above 50% moves one step down,
    below 50% one step up, exactly 50% keeps the level and the previous
    direction.  The step size is the big step until the first positive
    reversal and the small step from then on.  Training responses never move
    the level; a failed training trial aborts the block.

    Returns the events raised by this response (reversal, clamping, restart,
    block completion), in the order they occurred.
    """
    if not state.active:
        raise StaircaseError(f"cannot record a response in phase {state.phase.value}")
    if words_total < 1:
        raise StaircaseError("words_total must be >= 1")
    if not 0 <= words_correct <= words_total:
        raise StaircaseError("words_correct must be within 0..words_total")

    cfg = state.config
    level = state.current_level
    is_training = state.phase is Phase.TRAINING
    trial = TrialRecord(
        block_index=state.block_index,
        trial_index=len(state.trials) + 1,
        sentence_id=sentence_id,
        level=level,
        snr=level - cfg.competing_level,
        words_total=words_total,
        words_correct=words_correct,
        is_training=is_training,
    )
    state.trials.append(trial)
    events: list[Event] = []
    rate = words_correct / words_total

    if is_training:
        if rate < 0.5:
            state.phase = Phase.RESTART_REQUIRED
            events.append(Event.RESTART_REQUIRED)
            return events
        if state.training_done >= cfg.training_trials:
            state.phase = Phase.BIG_STEP
        return events

    if rate > 0.5:
        new_direction = Direction.DOWN
    elif rate < 0.5:
        new_direction = Direction.UP
    else:
        new_direction = state.last_direction

    # The track enters every block descending from a suprathreshold anchor,
    # so the first sub-50% response always counts as a positive reversal.
    effective_prev = state.last_direction
    if effective_prev is Direction.NONE:
        effective_prev = Direction.DOWN
    if new_direction is not Direction.NONE and new_direction is not effective_prev:
        if new_direction is Direction.UP:
            kind = ReversalKind.POSITIVE
            if state.phase is Phase.BIG_STEP:
                state.phase = Phase.SMALL_STEP
            events.append(Event.REVERSAL_POSITIVE)
        else:
            kind = ReversalKind.NEGATIVE
            events.append(Event.REVERSAL_NEGATIVE)
        state.reversals.append(Reversal(kind, level, trial.trial_index))

    step = cfg.big_step if state.phase is Phase.BIG_STEP else cfg.small_step
    if rate > 0.5:
        next_level = level - step
    elif rate < 0.5:
        next_level = level + step
    else:
        next_level = level      # exactly half: held, direction only retained
    if not cfg.level_min <= next_level <= cfg.level_max:
        # hold rather than land on the bound, so steps never change size
        next_level = level
        state.clamp_hits += 1
        events.append(Event.LEVEL_CLAMPED)
    state.current_level = next_level
    state.last_direction = new_direction

    if state.scored_trials >= (state.target_scored or cfg.block_length):
        state.phase = Phase.COMPLETE
        events.append(Event.BLOCK_COMPLETE)
    return events


def extend_block(state: StaircaseState, extra_trials: int = 1) -> None:
    """Reopen a completed block for more small-step trials.

    Opt-in clinical mode for blocks that finished without enough reversal
    pairs; the fixed-length protocol never calls this.
    """
    if state.phase is not Phase.COMPLETE:
        raise StaircaseError("only a completed block can be extended")
    if extra_trials < 1:
        raise StaircaseError("extension must add at least one trial")
    state.target_scored = state.scored_trials + extra_trials
    state.phase = Phase.SMALL_STEP


def compute_srt(state: StaircaseState) -> SRTEstimate:
    """Block threshold: mean of the midpoints of positive/negative pairs.

    Each midpoint averages a positive reversal level with the level of the
    negative reversal that follows it; a trailing unpaired positive reversal
    is ignored.  The estimate is flagged invalid (never raised) when fewer
    than ``min_midpoints`` pairs exist, letting the caller decide whether the
    block has to be rerun.
    """
    midpoints: list[float] = []
    pending_positive: Optional[float] = None
    for rev in state.reversals:
        if rev.kind is ReversalKind.POSITIVE:
            pending_positive = rev.level
        elif pending_positive is not None:
            midpoints.append((pending_positive + rev.level) / 2.0)
            pending_positive = None
    value = math.fsum(midpoints) / len(midpoints) if midpoints else None
    return SRTEstimate(
        value=value,
        midpoints=tuple(midpoints),
        n_midpoints=len(midpoints),
        valid=len(midpoints) >= state.config.min_midpoints,
    )
