import pytest

from srtlab.corpus import make_synthetic_corpus


@pytest.fixture(scope="session")
def audio_corpus(tmp_path_factory):
    """Small but fully populated corpus: audio, stories, HRIRs, calibration."""
    root = tmp_path_factory.mktemp("audio-corpus")
    return make_synthetic_corpus(root, n_sentences=12, seed=11, story_seconds=3.0,
                                 seconds_per_word=0.12)


@pytest.fixture(scope="session")
def manifest_corpus(tmp_path_factory):
    """Full-size sentence manifest without audio, for simulation campaigns."""
    root = tmp_path_factory.mktemp("manifest-corpus")
    return make_synthetic_corpus(root, n_sentences=187, seed=7, with_audio=False)
