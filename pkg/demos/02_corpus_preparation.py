"""Prepare a corpus for presentation and render one spatialized trial.

Builds a small artificial corpus (speech-shaped noise standing in for the
recorded sentences), then runs the standard preparation: equalize RMS across
all material, attenuate by 7 dB of convolution headroom, pad sentences with
500 ms and stories with 100 ms of silence.  Finally one complete trial
(warning tone, gap, sentence over two looping stories) is rendered to a WAV
you can listen to.
"""

import tempfile
from pathlib import Path

import numpy as np

from srtlab import assemble_trial, rms_db, write_wav
from srtlab.audio import CONDITIONS
from srtlab.corpus import make_synthetic_corpus, prepare_corpus

work = Path(tempfile.mkdtemp(prefix="srtlab-demo-"))
raw = make_synthetic_corpus(work / "raw", n_sentences=10, seed=3,
                            story_seconds=4.0)
print(f"raw corpus at {raw.root}")
print("raw sentence RMS (dBFS):",
      " ".join(f"{s.rms_db:.1f}" for s in raw.sentences[:6]), "...")

prepared = prepare_corpus(raw.root, work / "prepared")
print(f"\nprepared corpus at {prepared.root}")
print("prepared sentence RMS:",
      " ".join(f"{s.rms_db:.1f}" for s in prepared.sentences[:6]), "...")
first_raw = raw.sentences[0].audio
first_prep = prepared.sentences[0].audio
added = first_prep.n_samples - first_raw.n_samples
print(f"padding added {added} samples "
      f"({added / first_prep.sample_rate * 1000:.0f} ms of silence total)")

condition = CONDITIONS["SV0"]
asset = prepared.sentences[0]
stories = prepared.stories_for(condition.same_voice)
trial = assemble_trial(
    target_samples=asset.audio.samples,
    eq_gain_db=asset.eq_gain_db,
    stories=[s.audio for s in stories],
    condition=condition,
    hrirs=prepared.hrirs,
    calibration=prepared.calibration,
    target_level=72.0,
    competing_level=65.0,
    story_offsets=(1234, 9876),
)
out = work / "trial.wav"
write_wav(out, trial, "float32")
print(f"\nrendered {trial.duration_s:.2f} s trial "
      f"(overall RMS {rms_db(trial):.1f} dBFS, peak "
      f"{np.max(np.abs(trial.samples)):.3f}) -> {out}")
