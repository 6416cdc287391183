"""Flat key-value pipeline configuration."""

from dataclasses import asdict, dataclass, fields
from typing import Optional

from .aoa import COHERENCE_MODES
from .channel import ArrayGeometry
from .exceptions import ConfigurationError
from .features import DEFAULT_LAYOUT, FEATURE_NAMES
from .validation import check_int, check_positive, load_mapping

DETECTOR_MODES = ("svm", "threshold")
MAX_INFLIGHT_WINDOWS = 4


@dataclass(frozen=True)
class PipelineConfig:
    # array and OFDM numerology
    num_antennas: int = 4
    element_spacing: float = 0.0252
    carrier_freq: float = 5.745e9
    num_subcarriers: int = 53
    subcarrier_spacing: float = 312.5e3
    beam_pattern: str = "identity"
    beam_steer_deg: Optional[tuple] = None
    # windowing and AoA
    window: int = 7
    stride: Optional[int] = None
    n_paths: int = 2
    grid_step: float = 0.5
    coherence: str = "fb"
    warmup_windows: int = 1
    phase_offsets_rad: Optional[tuple] = None
    smooth_amplitude: bool = True
    # features and decision
    rss_ratio_linear: bool = False
    feature_layout: tuple = DEFAULT_LAYOUT
    detector_mode: str = "svm"
    threshold_deg: float = 5.0
    threshold_sustain: int = 2
    # transport
    stream_endpoint: str = "127.0.0.1:5555"
    max_inflight: int = MAX_INFLIGHT_WINDOWS

    def __post_init__(self):
        check_int(self.window, "window", minimum=2)
        check_int(self.n_paths, "n_paths", minimum=1)
        check_int(self.num_subcarriers, "num_subcarriers", minimum=2)
        check_int(self.warmup_windows, "warmup_windows", minimum=0)
        check_int(self.threshold_sustain, "threshold_sustain", minimum=1)
        check_positive(self.grid_step, "grid_step")
        check_positive(self.subcarrier_spacing, "subcarrier_spacing")
        check_positive(self.threshold_deg, "threshold_deg", strict=False)
        ArrayGeometry(self.num_antennas, self.element_spacing, self.carrier_freq)
        if self.n_paths >= self.num_antennas:
            raise ConfigurationError("n_paths must be smaller than num_antennas")
        if self.stride is not None:
            check_int(self.stride, "stride", minimum=1)
        if self.coherence not in COHERENCE_MODES:
            raise ConfigurationError(f"coherence must be one of {COHERENCE_MODES}")
        if self.detector_mode not in DETECTOR_MODES:
            raise ConfigurationError(f"detector_mode must be one of {DETECTOR_MODES}")
        if self.beam_pattern not in ("identity", "cardioid"):
            raise ConfigurationError("beam_pattern must be 'identity' or 'cardioid'")
        check_int(self.max_inflight, "max_inflight", minimum=1)
        if self.max_inflight > MAX_INFLIGHT_WINDOWS:
            raise ConfigurationError(f"max_inflight is capped at {MAX_INFLIGHT_WINDOWS} windows")
        layout = tuple(self.feature_layout)
        bad = [name for name in layout if name not in FEATURE_NAMES]
        if bad or not layout:
            raise ConfigurationError(f"unknown features in feature_layout: {bad}")
        object.__setattr__(self, "feature_layout", layout)
        for name in ("phase_offsets_rad", "beam_steer_deg"):
            value = getattr(self, name)
            if value is not None:
                value = tuple(float(v) for v in value)
                if len(value) != self.num_antennas:
                    raise ConfigurationError(f"{name} needs one value per antenna")
                object.__setattr__(self, name, value)
        host, _, port = self.stream_endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigurationError(f"stream_endpoint must be host:port, got {self.stream_endpoint!r}")

    @property
    def effective_stride(self):
        return self.window if self.stride is None else self.stride

    @property
    def geometry(self):
        return ArrayGeometry(self.num_antennas, self.element_spacing, self.carrier_freq)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc or {})
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        for key in ("feature_layout", "phase_offsets_rad", "beam_steer_deg"):
            if isinstance(doc.get(key), list):
                doc[key] = tuple(doc[key])
        return cls(**doc)

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(load_mapping(path))

    def to_dict(self):
        doc = asdict(self)
        for key, value in doc.items():
            if isinstance(value, tuple):
                doc[key] = list(value)
        return doc
