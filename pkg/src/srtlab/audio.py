"""Stimulus preparation and trial rendering.

Signals are float64 arrays in [-1, 1] full scale; 16-bit PCM appears only at
file boundaries.  Acoustic presentation levels (dB SPL) map to digital levels
(dBFS) through a calibration constant: a signal whose RMS sits at 0 dBFS
plays at ``spl_at_fullscale`` dB SPL.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

DEFAULT_SAMPLE_RATE = 44100


class AudioError(Exception):
    pass


class ClippingError(AudioError):
    """The mixed render exceeded digital full scale."""


def db_to_gain(db: float) -> float:
    return 10.0 ** (db / 20.0)


def gain_to_db(gain: float) -> float:
    return 20.0 * math.log10(gain)


@dataclass
class AudioBuffer:
    """A mono ``(n,)`` or stereo ``(n, 2)`` float signal plus its sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim not in (1, 2):
            raise AudioError("samples must be 1-D (mono) or 2-D (n, channels)")
        if self.samples.ndim == 2 and self.samples.shape[1] not in (1, 2):
            raise AudioError("only mono or stereo buffers are supported")
        if not np.all(np.isfinite(self.samples)):
            raise AudioError("samples must be finite")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate)


def rms_db(buffer: AudioBuffer) -> float:
    """RMS level in dBFS over all samples of all channels."""
    if buffer.n_samples == 0:
        raise AudioError("cannot measure the level of an empty buffer")
    mean_square = float(np.mean(np.square(buffer.samples)))
    if mean_square == 0.0:
        raise AudioError("all-zero buffer has no defined level")
    return 10.0 * math.log10(mean_square)


def apply_gain_db(buffer: AudioBuffer, gain_db: float) -> AudioBuffer:
    return AudioBuffer(buffer.samples * db_to_gain(gain_db), buffer.sample_rate)


def normalize_corpus(buffers: Sequence[AudioBuffer], headroom_db: float = 7.0) -> np.ndarray:
    """Per-item gains that equalize RMS across a corpus.

    All items (sentences and competing stories alike) are driven to the mean
    of their measured RMS levels, then attenuated by ``headroom_db`` so that
    later impulse-response convolution cannot saturate.  Returns the gain
    table in dB, aligned with the input order.
    """
    if not buffers:
        raise AudioError("normalize_corpus needs at least one item")
    levels = np.array([rms_db(b) for b in buffers])
    target = float(np.mean(levels))
    return target - levels - headroom_db


def pad_silence(buffer: AudioBuffer, pre_ms: float, post_ms: float) -> AudioBuffer:
    """Surround a buffer with exact zero padding.

    The pad lengths are ``round(ms * fs / 1000)`` samples, so 100 ms at
    44.1 kHz adds exactly 4410 samples on that side.
    """
    if pre_ms < 0 or post_ms < 0:
        raise AudioError("padding must be non-negative")
    n_pre = int(round(pre_ms * buffer.sample_rate / 1000.0))
    n_post = int(round(post_ms * buffer.sample_rate / 1000.0))
    if buffer.samples.ndim == 1:
        widths = (n_pre, n_post)
    else:
        widths = ((n_pre, n_post), (0, 0))
    return AudioBuffer(np.pad(buffer.samples, widths), buffer.sample_rate)


def trim_padding(buffer: AudioBuffer, pre_ms: float, post_ms: float) -> AudioBuffer:
    """Inverse of :func:`pad_silence`; recovers the original buffer bit-exactly."""
    n_pre = int(round(pre_ms * buffer.sample_rate / 1000.0))
    n_post = int(round(post_ms * buffer.sample_rate / 1000.0))
    if n_pre + n_post > buffer.n_samples:
        raise AudioError("trim exceeds buffer length")
    stop = buffer.n_samples - n_post
    return AudioBuffer(buffer.samples[n_pre:stop].copy(), buffer.sample_rate)


@dataclass(frozen=True)
class Calibration:
    """dB SPL produced by a 0 dBFS RMS signal, per output channel."""

    spl_at_fullscale_left: float
    spl_at_fullscale_right: float

    def __post_init__(self):
        if not (math.isfinite(self.spl_at_fullscale_left)
                and math.isfinite(self.spl_at_fullscale_right)):
            raise AudioError("calibration constants must be finite")

    @property
    def effective(self) -> float:
        return (self.spl_at_fullscale_left + self.spl_at_fullscale_right) / 2.0

    def dbfs_for(self, level_db_spl: float) -> float:
        """Digital RMS target that plays at the requested acoustic level."""
        return level_db_spl - self.effective

    def to_dict(self) -> dict:
        return {
            "spl_at_fullscale": {
                "left": self.spl_at_fullscale_left,
                "right": self.spl_at_fullscale_right,
            }
        }

    @staticmethod
    def from_dict(data: Mapping) -> "Calibration":
        spl = data["spl_at_fullscale"]
        return Calibration(float(spl["left"]), float(spl["right"]))

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def load(path: Path | str) -> "Calibration":
        return Calibration.from_dict(json.loads(Path(path).read_text()))


def synthesize_warning_tone(calibration: Calibration, level_db_spl: float = 60.0,
                            freq_hz: float = 1000.0, dur_ms: float = 200.0,
                            sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Stereo attention tone: a Hann-windowed sine burst.

    The raised-cosine envelope spans the full duration and is zero at both
    endpoints.  Each channel is scaled through its own calibration constant
    so the burst reaches ``level_db_spl`` at either ear.
    """
    if dur_ms <= 0:
        raise AudioError("tone duration must be positive")
    if freq_hz >= sample_rate / 2:
        raise AudioError("tone frequency must stay below Nyquist")
    n = int(round(dur_ms * sample_rate / 1000.0))
    t = np.arange(n) / sample_rate
    tone = np.sin(2.0 * np.pi * freq_hz * t) * np.hanning(n)
    measured = rms_db(AudioBuffer(tone, sample_rate))
    gains = [
        db_to_gain(level_db_spl - spl - measured)
        for spl in (calibration.spl_at_fullscale_left, calibration.spl_at_fullscale_right)
    ]
    stereo = np.column_stack([tone * gains[0], tone * gains[1]])
    return AudioBuffer(stereo, sample_rate)


FRONT = 0.0
LEFT = 90.0
RIGHT = -90.0


@dataclass
class HrirSet:
    """Impulse-response pairs for the three virtual source positions."""

    responses: dict[float, tuple[np.ndarray, np.ndarray]]
    sample_rate: int = DEFAULT_SAMPLE_RATE

    REQUIRED = (FRONT, LEFT, RIGHT)

    def __post_init__(self):
        missing = [az for az in self.REQUIRED if az not in self.responses]
        if missing:
            raise AudioError(f"HRIR set is missing azimuths {missing}")
        self.responses = {
            az: (np.asarray(l, dtype=np.float64), np.asarray(r, dtype=np.float64))
            for az, (l, r) in self.responses.items()
        }

    @staticmethod
    def identity(sample_rate: int = DEFAULT_SAMPLE_RATE) -> "HrirSet":
        """Unit impulses everywhere; spatialization becomes a pass-through."""
        delta = np.array([1.0])
        return HrirSet({az: (delta, delta) for az in HrirSet.REQUIRED}, sample_rate)


def spatialize(mono: AudioBuffer, hrirs: HrirSet, azimuth: float) -> AudioBuffer:
    """Place a mono signal at a virtual azimuth by ear-pair convolution.

    Output channels are the full linear convolutions (length input + IR - 1);
    no normalization is applied here.
    """
    if mono.channels != 1:
        raise AudioError("spatialize expects a mono input")
    if mono.sample_rate != hrirs.sample_rate:
        raise AudioError("sample rate mismatch between signal and HRIR set")
    if azimuth not in hrirs.responses:
        raise AudioError(f"no impulse response for azimuth {azimuth}")
    left_ir, right_ir = hrirs.responses[azimuth]
    left = fftconvolve(mono.samples, left_ir, mode="full")
    right = fftconvolve(mono.samples, right_ir, mode="full")
    return AudioBuffer(np.column_stack([left, right]), mono.sample_rate)


@dataclass(frozen=True)
class SpatialCondition:
    """Which voices tell the competing stories, and from where."""

    name: str
    distractor_azimuths: tuple[float, float]
    same_voice: bool
    target_azimuth: float = FRONT

    def __post_init__(self):
        if self.target_azimuth != FRONT:
            raise AudioError("the target is always presented from the front")
        if len(self.distractor_azimuths) != 2:
            raise AudioError("exactly two competing stories are required")


SV0 = SpatialCondition("SV0", (FRONT, FRONT), same_voice=True)
DV0 = SpatialCondition("DV0", (FRONT, FRONT), same_voice=False)
SV90 = SpatialCondition("SV90", (LEFT, RIGHT), same_voice=True)
DV90 = SpatialCondition("DV90", (LEFT, RIGHT), same_voice=False)
CONDITIONS = {c.name: c for c in (SV0, DV0, SV90, DV90)}
LOW_CUE = SV0


def _loop_slice(samples: np.ndarray, start: int, length: int) -> np.ndarray:
    """Seamlessly looping window of a mono signal."""
    if samples.shape[0] == 0:
        raise AudioError("cannot loop an empty story")
    idx = (start + np.arange(length)) % samples.shape[0]
    return samples[idx]


def assemble_trial(target_samples: np.ndarray, eq_gain_db: float,
                   stories: Sequence[AudioBuffer], condition: SpatialCondition,
                   hrirs: HrirSet, calibration: Calibration,
                   target_level: float, competing_level: float,
                   story_offsets: Sequence[int] = (0, 0),
                   sample_rate: int = DEFAULT_SAMPLE_RATE,
                   tone_level: float = 60.0, tone_freq: float = 1000.0,
                   tone_dur_ms: float = 200.0, gap_ms: float = 500.0,
                   combined_competing: bool = True,
                   trial_name: str = "trial") -> AudioBuffer:
    """Render one complete trial: warning tone, gap, then the spatialized
    sentence mixed over two continuously looping competing stories.

    The sentence is scaled (including its intelligibility-equalization gain)
    so its spatialized RMS plays at ``target_level`` dB SPL.  The two story
    streams either share one gain chosen so their summed long-term RMS sits at
    ``competing_level`` (default) or are each scaled to that level
    individually.  Raises :class:`ClippingError` if the mix exceeds full
    scale, naming the offending trial.
    """
    if len(stories) != 2:
        raise AudioError("assemble_trial needs exactly two competing stories")
    for s in stories:
        if s.sample_rate != sample_rate:
            raise AudioError("story sample rate mismatch")

    tone = synthesize_warning_tone(calibration, tone_level, tone_freq,
                                   tone_dur_ms, sample_rate)
    gap = int(round(gap_ms * sample_rate / 1000.0))

    target = spatialize(AudioBuffer(target_samples, sample_rate), hrirs,
                        condition.target_azimuth)
    if np.any(target.samples):
        wanted_dbfs = calibration.dbfs_for(target_level + eq_gain_db)
        target = apply_gain_db(target, wanted_dbfs - rms_db(target))

    total = tone.n_samples + gap + target.n_samples
    out = np.zeros((total, 2))
    out[: tone.n_samples] = tone.samples
    out[tone.n_samples + gap:] = target.samples

    spatial_stories = []
    long_term_powers = []
    for story, azimuth, offset in zip(stories, condition.distractor_azimuths,
                                      story_offsets):
        looped = _loop_slice(story.samples, int(offset), total)
        rendered = spatialize(AudioBuffer(looped, sample_rate), hrirs, azimuth)
        spatial_stories.append(rendered.samples[:total])
        # long-term power of the looping stream, measured on the full story
        full = spatialize(story, hrirs, azimuth)
        long_term_powers.append(float(np.mean(np.square(full.samples))))

    if combined_competing:
        # one shared gain so the summed streams reach competing_level
        combined_db = 10.0 * math.log10(sum(long_term_powers))
        gain = db_to_gain(calibration.dbfs_for(competing_level) - combined_db)
        for rendered in spatial_stories:
            out += rendered * gain
    else:
        for power, rendered in zip(long_term_powers, spatial_stories):
            stream_db = 10.0 * math.log10(power)
            gain = db_to_gain(calibration.dbfs_for(competing_level) - stream_db)
            out += rendered * gain

    peak = float(np.max(np.abs(out))) if out.size else 0.0
    if peak > 1.0:
        raise ClippingError(
            f"{trial_name}: mix peaks at {gain_to_db(peak):+.2f} dBFS above full scale"
        )
    return AudioBuffer(out, sample_rate)


def _quantize(buffer: AudioBuffer, bit_depth: str) -> np.ndarray:
    if bit_depth == "int16":
        clipped = np.clip(buffer.samples, -1.0, 1.0)
        return np.round(clipped * 32767.0).astype(np.int16)
    if bit_depth == "float32":
        return buffer.samples.astype(np.float32)
    raise AudioError(f"unsupported bit depth {bit_depth!r}")


def write_wav(path: Path | str, buffer: AudioBuffer, bit_depth: str = "int16") -> None:
    """Write a buffer as WAV, quantizing deterministically for ``int16``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, buffer.sample_rate, _quantize(buffer, bit_depth))


def wav_bytes(buffer: AudioBuffer, bit_depth: str = "int16") -> bytes:
    """In-memory WAV encoding, for serving renders over HTTP."""
    import io

    bio = io.BytesIO()
    wavfile.write(bio, buffer.sample_rate, _quantize(buffer, bit_depth))
    return bio.getvalue()


def read_wav(path: Path | str) -> AudioBuffer:
    rate, data = wavfile.read(Path(path))
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"unsupported WAV sample format {data.dtype}")
    return AudioBuffer(samples, int(rate))
