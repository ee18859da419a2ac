"""srtlab: adaptive speech-in-noise testing and sentence-equivalence analysis.

The package splits into a deterministic staircase engine, an audio pipeline
for corpus preparation and spatialized trial rendering, the psychometric
analysis stack (logistic fits, sentence selection, intelligibility
equalization, screening statistics), a simulated-listener harness, and a
session service with an HTTP API for the examiner console.
"""

from .audio import (
    AudioBuffer,
    AudioError,
    Calibration,
    ClippingError,
    CONDITIONS,
    HrirSet,
    LOW_CUE,
    SpatialCondition,
    assemble_trial,
    normalize_corpus,
    pad_silence,
    read_wav,
    rms_db,
    spatialize,
    synthesize_warning_tone,
    trim_padding,
    write_wav,
)
from .corpus import Corpus, CorpusError, SentenceAsset, StoryAsset, load_corpus, \
    make_synthetic_corpus, prepare_corpus
from .engine import PendingTrial, SentenceRef, SessionEngine, SessionError
from .psychometrics import (
    AnalysisError,
    PsychometricFit,
    SelectionResult,
    TrialObservation,
    averaged_curve_slope,
    compute_atsl,
    equalization_gains,
    fit_logistic,
    select_sentences,
)
from .sessionlog import SessionLog, read_log, replay_staircase, write_log
from .simulate import SimulatedListener, run_simulated_session, summarize_sessions
from .staircase import (
    Direction,
    Event,
    Phase,
    Reversal,
    ReversalKind,
    SRTEstimate,
    StaircaseConfig,
    StaircaseError,
    StaircaseState,
    TrialRecord,
    compute_srt,
    init_block,
    propose_level,
    record_response,
)
from .stats import AnovaResult, StatsError, TukeyResult, anova_oneway, tukey_hsd

__version__ = "0.1.0"
