"""Corpus layout, manifests and the batch preparation pipeline.

A corpus directory holds four text artifacts next to its WAV files:

* ``sentences.tsv``  - sentence_id, text, word_count, wav_path, rms_db, eq_gain_db
* ``stories.tsv``    - story_id, voice, wav_path, rms_db
* ``hrirs.tsv``      - azimuth, wav_path (stereo WAV, left channel = left ear)
* ``calibration.json`` - per-channel dB SPL of a full-scale signal

Paths are relative to the directory.  ``prepare_corpus`` turns a raw
recording drop into a presentation-ready corpus: equalized RMS across all
material, fixed headroom attenuation, silence padding, and manifests whose
levels are re-measured from the quantized files actually written.

``make_synthetic_corpus`` builds a fully self-consistent artificial corpus
(speech-shaped noise, looping stories, a small mirror-symmetric impulse
response set) for simulations, demos and tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .audio import (
    AudioBuffer,
    Calibration,
    HrirSet,
    apply_gain_db,
    normalize_corpus,
    pad_silence,
    read_wav,
    rms_db,
    write_wav,
)
from .engine import SentenceRef

SENTENCE_COLUMNS = ("sentence_id", "text", "word_count", "wav_path", "rms_db", "eq_gain_db")
STORY_COLUMNS = ("story_id", "voice", "wav_path", "rms_db")
HRIR_COLUMNS = ("azimuth", "wav_path")

RMS_TOLERANCE_DB = 0.01     # manifest level vs recomputation from samples


class CorpusError(Exception):
    pass


@dataclass
class SentenceAsset:
    sentence_id: str
    text: str
    word_count: int
    wav_path: str = ""
    rms_db: Optional[float] = None
    eq_gain_db: float = 0.0
    audio: Optional[AudioBuffer] = None

    def __post_init__(self):
        if self.word_count != len(self.text.split()):
            raise CorpusError(
                f"{self.sentence_id}: word_count {self.word_count} does not match "
                f"text {self.text!r}"
            )

    def ref(self) -> SentenceRef:
        return SentenceRef(self.sentence_id, self.word_count)


@dataclass
class StoryAsset:
    story_id: str
    voice: str
    wav_path: str = ""
    rms_db: Optional[float] = None
    audio: Optional[AudioBuffer] = None


@dataclass
class Corpus:
    root: Path
    sentences: list[SentenceAsset]
    stories: list[StoryAsset]
    hrirs: Optional[HrirSet] = None
    calibration: Optional[Calibration] = None

    def sentence_refs(self) -> list[SentenceRef]:
        return [s.ref() for s in self.sentences]

    def sentence(self, sentence_id: str) -> SentenceAsset:
        for s in self.sentences:
            if s.sentence_id == sentence_id:
                return s
        raise CorpusError(f"unknown sentence {sentence_id!r}")

    def stories_for(self, same_voice: bool, target_voice: str = "A") -> list[StoryAsset]:
        """Two competing stories matching the requested voice condition."""
        if same_voice:
            pool = [s for s in self.stories if s.voice == target_voice]
        else:
            pool = [s for s in self.stories if s.voice != target_voice]
        if len(pool) < 2:
            raise CorpusError(
                f"need two {'same' if same_voice else 'different'}-voice stories, "
                f"found {len(pool)}"
            )
        return pool[:2]


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def _write_tsv(path: Path, columns: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _read_tsv(path: Path, columns: Sequence[str]) -> list[dict]:
    if not path.exists():
        raise CorpusError(f"missing manifest {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != tuple(columns):
            raise CorpusError(f"{path}: expected columns {columns}")
        return [dict(zip(columns, row)) for row in reader]


def save_manifests(corpus: Corpus) -> None:
    _write_tsv(corpus.root / "sentences.tsv", SENTENCE_COLUMNS, [
        (s.sentence_id, s.text, str(s.word_count), s.wav_path,
         _fmt(s.rms_db), _fmt(s.eq_gain_db))
        for s in corpus.sentences
    ])
    _write_tsv(corpus.root / "stories.tsv", STORY_COLUMNS, [
        (s.story_id, s.voice, s.wav_path, _fmt(s.rms_db)) for s in corpus.stories
    ])


def load_corpus(root: Path | str, with_audio: bool = True) -> Corpus:
    """Read a corpus directory; validates manifest levels against the files."""
    root = Path(root)
    sentences = []
    for row in _read_tsv(root / "sentences.tsv", SENTENCE_COLUMNS):
        asset = SentenceAsset(
            sentence_id=row["sentence_id"],
            text=row["text"],
            word_count=int(row["word_count"]),
            wav_path=row["wav_path"],
            rms_db=float(row["rms_db"]) if row["rms_db"] else None,
            eq_gain_db=float(row["eq_gain_db"]) if row["eq_gain_db"] else 0.0,
        )
        if with_audio and asset.wav_path:
            asset.audio = read_wav(root / asset.wav_path)
            measured = rms_db(asset.audio)
            if asset.rms_db is not None and abs(measured - asset.rms_db) > RMS_TOLERANCE_DB:
                raise CorpusError(
                    f"{asset.sentence_id}: manifest says {asset.rms_db:.3f} dBFS "
                    f"but file measures {measured:.3f}"
                )
        sentences.append(asset)
    if not sentences:
        raise CorpusError(f"{root}: corpus has no sentences")

    stories = []
    stories_path = root / "stories.tsv"
    if stories_path.exists():
        for row in _read_tsv(stories_path, STORY_COLUMNS):
            story = StoryAsset(
                story_id=row["story_id"],
                voice=row["voice"],
                wav_path=row["wav_path"],
                rms_db=float(row["rms_db"]) if row["rms_db"] else None,
            )
            if with_audio and story.wav_path:
                story.audio = read_wav(root / story.wav_path)
            stories.append(story)

    hrirs = None
    hrir_path = root / "hrirs.tsv"
    if hrir_path.exists() and with_audio:
        responses = {}
        sample_rate = None
        for row in _read_tsv(hrir_path, HRIR_COLUMNS):
            buf = read_wav(root / row["wav_path"])
            if buf.channels != 2:
                raise CorpusError(f"HRIR {row['wav_path']} must be stereo")
            responses[float(row["azimuth"])] = (buf.samples[:, 0], buf.samples[:, 1])
            sample_rate = buf.sample_rate
        hrirs = HrirSet(responses, sample_rate)

    calibration = None
    cal_path = root / "calibration.json"
    if cal_path.exists():
        calibration = Calibration.load(cal_path)
    return Corpus(root, sentences, stories, hrirs, calibration)


def prepare_corpus(input_dir: Path | str, output_dir: Path | str,
                   headroom_db: float = 7.0,
                   sentence_pad_ms: float = 500.0,
                   story_pad_ms: float = 100.0,
                   bit_depth: str = "int16") -> Corpus:
    """Normalize, attenuate and pad a raw corpus into presentation form.

    Every sentence and story is driven to the corpus mean RMS minus the
    headroom, then padded with silence on both sides (500 ms around
    sentences, 100 ms around stories by default).  The output manifests
    carry levels measured from the written files, so a reload validates.
    """
    raw = load_corpus(input_dir, with_audio=True)
    items: list[AudioBuffer] = []
    for s in raw.sentences:
        if s.audio is None:
            raise CorpusError(f"{s.sentence_id}: no audio to prepare")
        items.append(s.audio)
    for s in raw.stories:
        if s.audio is None:
            raise CorpusError(f"{s.story_id}: no audio to prepare")
        items.append(s.audio)
    gains = normalize_corpus(items, headroom_db)

    out_root = Path(output_dir)
    (out_root / "wav").mkdir(parents=True, exist_ok=True)
    prepared = Corpus(out_root, [], [], None, raw.calibration)
    idx = 0
    for s in raw.sentences:
        buf = pad_silence(apply_gain_db(s.audio, float(gains[idx])),
                          sentence_pad_ms, sentence_pad_ms)
        rel = f"wav/{s.sentence_id}.wav"
        write_wav(out_root / rel, buf, bit_depth)
        prepared.sentences.append(SentenceAsset(
            sentence_id=s.sentence_id,
            text=s.text,
            word_count=s.word_count,
            wav_path=rel,
            rms_db=rms_db(read_wav(out_root / rel)),
            eq_gain_db=s.eq_gain_db,
        ))
        idx += 1
    for s in raw.stories:
        buf = pad_silence(apply_gain_db(s.audio, float(gains[idx])),
                          story_pad_ms, story_pad_ms)
        rel = f"wav/{s.story_id}.wav"
        write_wav(out_root / rel, buf, bit_depth)
        prepared.stories.append(StoryAsset(
            story_id=s.story_id,
            voice=s.voice,
            wav_path=rel,
            rms_db=rms_db(read_wav(out_root / rel)),
        ))
        idx += 1

    for extra in ("hrirs.tsv", "calibration.json"):
        src = Path(input_dir) / extra
        if src.exists():
            (out_root / extra).write_bytes(src.read_bytes())
    if (Path(input_dir) / "hrirs.tsv").exists():
        for row in _read_tsv(Path(input_dir) / "hrirs.tsv", HRIR_COLUMNS):
            src = Path(input_dir) / row["wav_path"]
            dst = out_root / row["wav_path"]
            dst.parent.mkdir(parents=True, exist_ok=True)
            dst.write_bytes(src.read_bytes())
    save_manifests(prepared)
    return load_corpus(out_root)


# -- synthetic corpus --------------------------------------------------------

_SYLLABLES = ("pa", "to", "mi", "ra", "su", "ve", "lo", "da", "ni", "ca",
              "fe", "bo", "ju", "ti", "ma", "re")

DEFAULT_WORD_MIX = {3: 9, 4: 49, 5: 77, 6: 46, 7: 6}


def _word_counts(n_sentences: int, mix: dict[int, int],
                 rng: np.random.Generator) -> list[int]:
    weights = np.array(list(mix.values()), dtype=float)
    weights /= weights.sum()
    counts = rng.choice(list(mix.keys()), size=n_sentences, p=weights)
    return [int(c) for c in counts]


def _pseudo_word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), n))


def _speech_like(rng: np.random.Generator, seconds: float, sample_rate: int,
                 syllable_rate: float = 4.0) -> np.ndarray:
    """Lowpassed noise with syllabic amplitude modulation, peak-limited."""
    n = int(round(seconds * sample_rate))
    noise = rng.standard_normal(n)
    smoothed = lfilter([1.0], [1.0, -0.97], noise)
    t = np.arange(n) / sample_rate
    envelope = 0.35 + 0.65 * 0.5 * (1 - np.cos(2 * np.pi * syllable_rate * t))
    signal = smoothed * envelope
    return 0.25 * signal / np.max(np.abs(signal))


def _synthetic_hrirs(sample_rate: int) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Small mirror-symmetric set: front is diotic, lateral adds delay + shadow."""
    front = np.zeros(16)
    front[0] = 0.9
    front[12] = 0.2
    near = np.zeros(16)
    near[0] = 1.0
    far = np.zeros(16)
    far[8] = 0.45
    return {
        0.0: (front.copy(), front.copy()),
        90.0: (near.copy(), far.copy()),      # source on the left
        -90.0: (far.copy(), near.copy()),
    }


def make_synthetic_corpus(out_dir: Path | str, n_sentences: int = 187,
                          seed: int = 2024, sample_rate: int = 44100,
                          with_audio: bool = True,
                          story_seconds: float = 12.0,
                          seconds_per_word: float = 0.35,
                          spl_at_fullscale: float = 100.0,
                          word_mix: Optional[dict[int, int]] = None) -> Corpus:
    """Write a complete artificial corpus directory.

    With ``with_audio=False`` only the sentence manifest is produced (ids,
    pseudo-text and word counts), which is all a simulation campaign needs.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    counts = _word_counts(n_sentences, word_mix or DEFAULT_WORD_MIX, rng)

    corpus = Corpus(out_root, [], [], None, None)
    for i, wc in enumerate(counts, start=1):
        sid = f"s{i:03d}"
        text = " ".join(_pseudo_word(rng) for _ in range(wc))
        asset = SentenceAsset(sentence_id=sid, text=text, word_count=wc)
        if with_audio:
            dur = 0.3 + seconds_per_word * wc
            samples = _speech_like(rng, dur, sample_rate)
            gain_db = float(rng.uniform(-8.0, 0.0))
            buf = apply_gain_db(AudioBuffer(samples, sample_rate), gain_db)
            rel = f"wav/{sid}.wav"
            write_wav(out_root / rel, buf, "int16")
            asset.wav_path = rel
            asset.rms_db = rms_db(read_wav(out_root / rel))
            asset.audio = read_wav(out_root / rel)
        corpus.sentences.append(asset)

    if with_audio:
        voices = [("storyA1", "A"), ("storyA2", "A"), ("storyB1", "B"), ("storyC1", "C")]
        for story_id, voice in voices:
            samples = _speech_like(rng, story_seconds, sample_rate, syllable_rate=3.0)
            rel = f"wav/{story_id}.wav"
            write_wav(out_root / rel, AudioBuffer(samples, sample_rate), "int16")
            corpus.stories.append(StoryAsset(
                story_id=story_id, voice=voice, wav_path=rel,
                rms_db=rms_db(read_wav(out_root / rel)),
            ))

        hrir_rows = []
        for azimuth, (left, right) in _synthetic_hrirs(sample_rate).items():
            rel = f"wav/hrir_{int(azimuth):+04d}.wav"
            write_wav(out_root / rel,
                      AudioBuffer(np.column_stack([left, right]), sample_rate),
                      "float32")
            hrir_rows.append((f"{azimuth:g}", rel))
        _write_tsv(out_root / "hrirs.tsv", HRIR_COLUMNS, hrir_rows)
        Calibration(spl_at_fullscale, spl_at_fullscale).save(out_root / "calibration.json")

    save_manifests(corpus)
    return load_corpus(out_root, with_audio=with_audio)
