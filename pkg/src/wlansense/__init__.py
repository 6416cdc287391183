"""Beam-space WLAN sensing: synthetic CSI, phase sanitization, MUSIC AoA,
window features and SVM motion detection."""

__version__ = "0.1.0"

from .aoa import (
    AoaEstimate, CorrelationEstimate, MusicEstimator, SpatialSpectrum, calibrate_phase,
    eigendecompose, estimate_correlation, music_spectrum, pick_peaks, smooth_coherence,
)
from .channel import (
    ArrayGeometry, BeamPattern, CsiFrame, Path, PathSet, Scenario, steering_vector,
    synthesize_frame, synthesize_sequence,
)
from .config import PipelineConfig
from .detector import (
    DetectionEvent, LinearSVMDetector, SvmModel, aoa_change, detect, detection_report, train_svm,
)
from .exceptions import (
    ConfigurationError, DataError, DegenerateSampleError, DeliveryError, ParseError,
    SchemaError, StageError, TrainingError, WlanSenseError,
)
from .features import FeatureVector, motion_indicator, phase_svr, rss_ratio, rss_std
from .harness import ExperimentPlan, run_cross_setup_matrix, run_feature_comparison
from .pipeline import FeatureExtractor, FeatureStream, run_pipeline
from .publish import publish_events
from .sanitize import PhaseSanitizer, SanitizedFrame, estimate_sto, sanitize_frame, unwrap_phase
