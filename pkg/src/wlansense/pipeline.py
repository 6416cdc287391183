"""Streaming composition: sanitize, calibrate, window, MUSIC, features, decide.

:class:`FeatureStream` holds the sliding history of ``2T + 1`` frames needed
for one decision (the current window, the previous window and one extra frame
for the phase-variance ratio). The same class produces training features in
:class:`FeatureExtractor` and live features in :func:`run_pipeline`, so both
see identical numbers.

Stages are chained generators: a window is fully processed before the next
frame is pulled, so at most one window is ever in flight.
"""

from collections import deque
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .aoa import (
    apply_calibration, calibrate_phase, estimate_correlation, music_spectrum, pick_peaks,
    smooth_coherence,
)
from .channel import CsiFrame
from .config import PipelineConfig
from .detector import DetectionEvent, detect, match_aoa
from .exceptions import ConfigurationError, DegenerateSampleError, StageError, WlanSenseError
from .features import (
    DEFAULT_LAYOUT, FeatureVector, feature_matrix, motion_indicator, phase_svr, rss_mean,
    rss_ratio, rss_std,
)
from .sanitize import SanitizedFrame, sanitize_frame


def estimate_window(config, frames):
    """MUSIC angles of one window of sanitized frames."""
    R = estimate_correlation(frames)
    if config.coherence != "none":
        R = smooth_coherence(R, subarray=config.coherence == "fbss")
    spectrum = music_spectrum(R, config.geometry, config.n_paths, config.grid_step)
    return pick_peaks(spectrum, config.n_paths, t=frames[-1].t)


def warmup_offsets(frames, window):
    """Antenna phase offsets from consecutive warm-up windows of a static broadside scene."""
    frames = list(frames)
    return calibrate_phase([estimate_correlation(frames[i:i + window])
                            for i in range(0, len(frames), window)])


def _check_antennas(frame, config):
    csi = frame.csi_clean if isinstance(frame, SanitizedFrame) else frame.csi
    if csi.shape[0] != config.num_antennas:
        raise ConfigurationError(
            f"frame has {csi.shape[0]} antennas, configuration expects {config.num_antennas}")


def _sanitized(frame, raw, config):
    """Sanitize a calibrated raw frame; already sanitized frames pass through."""
    if isinstance(frame, SanitizedFrame):
        return frame
    clean = sanitize_frame(frame, raw, smooth=config.smooth_amplitude)
    raw.append(frame)
    return clean


class FeatureStream:
    """Incremental per-window feature computation over a frame stream.

    ``phase_offsets`` fixes the antenna calibration. Without it the first
    ``config.warmup_windows`` windows are buffered, used for calibration, and
    then replayed through the normal path.
    """

    def __init__(self, config=None, phase_offsets=None):
        self.config = config or PipelineConfig()
        T = self.config.window
        if phase_offsets is None and self.config.phase_offsets_rad is not None:
            phase_offsets = self.config.phase_offsets_rad
        if phase_offsets is None and self.config.warmup_windows == 0:
            phase_offsets = np.zeros(self.config.num_antennas)
        self.phase_offsets = None if phase_offsets is None else np.asarray(phase_offsets, dtype=float)
        self._warmup = []
        self._raw = deque(maxlen=T - 1)
        self.history = deque(maxlen=2 * T + 1)
        self._aoa_cache = deque(maxlen=4)
        self.frames_seen = 0
        self.windows_emitted = 0
        self._until_emit = None

    @property
    def ready(self):
        return len(self.history) == self.history.maxlen

    def ingest(self, frame):
        """Add one raw frame; returns True when it completed a decision point."""
        _check_antennas(frame, self.config)
        self.frames_seen += 1
        if self.phase_offsets is None:
            self._warmup.append(frame)
            if len(self._warmup) < self.config.warmup_windows * self.config.window:
                return False
            self.phase_offsets = warmup_offsets(self._warmup, self.config.window)
            buffered, self._warmup = self._warmup, []
            due = False
            for f in buffered:
                due = self._advance(f)
            return due
        return self._advance(frame)

    def _advance(self, frame):
        calibrated = _calibrate_frame(frame, self.phase_offsets)
        self.history.append(_sanitized(calibrated, self._raw, self.config))
        if not self.ready:
            return False
        if self._until_emit is None:
            self._until_emit = 0
        due = self._until_emit == 0
        self._until_emit = (self._until_emit - 1) % self.config.effective_stride
        return due

    def push(self, frame):
        """Ingest a frame and return a FeatureVector when one is due, else None."""
        if self.ingest(frame):
            self.windows_emitted += 1
            return self.current()
        return None

    def _estimate(self, frames):
        # Cache by frame identity: with stride T the current window becomes the next previous one.
        for first, last, est in self._aoa_cache:
            if first is frames[0] and last is frames[-1]:
                return est
        est = estimate_window(self.config, frames)
        self._aoa_cache.append((frames[0], frames[-1], est))
        return est

    def current_estimates(self):
        T = self.config.window
        hist = list(self.history)
        return self._estimate(hist[-2 * T:-T]), self._estimate(hist[-T:])

    def current(self):
        """Features of the current window (the last ``T`` frames of the history)."""
        if not self.ready:
            raise ConfigurationError(f"need {self.history.maxlen} frames, have {len(self.history)}")
        cfg = self.config
        T = cfg.window
        hist = list(self.history)
        prev, cur = hist[-2 * T:-T], hist[-T:]
        est_prev, est_cur = self.current_estimates()
        flags = []
        if est_cur.underresolved:
            flags.append("underresolved")
        match = match_aoa(est_prev, est_cur)
        if match.unmatched:
            flags.append("aoa_unmatched")
        deltas = list(match.deltas) + [None] * 2
        angles = list(est_cur.angles) + [None] * 2

        rss_all = np.array([f.rss_db for f in hist])
        rss_cur = rss_all[-T:]
        # Undefined statistics fall back to their no-change value and are flagged.
        try:
            ratio = rss_ratio(rss_all[-(T + 2):], linear=cfg.rss_ratio_linear)
        except DegenerateSampleError:
            ratio = float(T + 1)
            flags.append("degenerate:rss_ratio")
        try:
            mi = motion_indicator(np.stack([f.amplitude for f in prev]),
                                  np.stack([f.amplitude for f in cur]))
        except DegenerateSampleError:
            mi = 0.0
            flags.append("degenerate:motion_indicator")
        try:
            svr = phase_svr(np.stack([f.phase for f in hist[-(2 * T + 1):-T]]),
                            np.stack([f.phase for f in hist[-(T + 1):]]))
        except DegenerateSampleError:
            svr = np.ones(cfg.num_antennas)
            flags.append("degenerate:svr")

        labels = [f.label for f in cur]
        label = None if any(lab is None for lab in labels) else sum(labels) * 2 > len(labels)
        return FeatureVector(
            t=cur[-1].t, aoa1=angles[0], aoa2=angles[1] if cfg.n_paths > 1 else None,
            aoa_delta1=deltas[0], aoa_delta2=deltas[1] if cfg.n_paths > 1 else None,
            rss_mean=rss_mean(rss_cur), rss_ratio=ratio, rss_std=rss_std(rss_cur),
            motion_indicator=mi, svr=tuple(float(v) for v in svr), flags=tuple(flags),
            label=label,
        )


def episode_features(frames, config=None, phase_offsets=None, lookback=0):
    """Features at the end of a finite frame sequence.

    With ``lookback > 0`` the features ``lookback`` frames before the end are
    returned too, as ``[earlier, last]``.
    """
    stream = FeatureStream(config, phase_offsets)
    frames = list(frames)
    out = []
    for i, frame in enumerate(frames):
        stream.ingest(frame)
        if lookback and i == len(frames) - 1 - lookback:
            out.append(stream.current())
    out.append(stream.current())
    return out if lookback else out[0]


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Transform episodes (sequences of raw frames) into feature rows.

    Each episode needs at least ``2 * window + 1`` frames; its row describes
    the final window. Missing AoA entries are NaN in the output.
    """

    def __init__(self, window=7, n_paths=2, grid_step=0.5, coherence="fb",
                 rss_ratio_linear=False, smooth_amplitude=True, phase_offsets=None,
                 num_antennas=4, element_spacing=0.0252, carrier_freq=5.745e9,
                 layout=DEFAULT_LAYOUT):
        self.window = window
        self.n_paths = n_paths
        self.grid_step = grid_step
        self.coherence = coherence
        self.rss_ratio_linear = rss_ratio_linear
        self.smooth_amplitude = smooth_amplitude
        self.phase_offsets = phase_offsets
        self.num_antennas = num_antennas
        self.element_spacing = element_spacing
        self.carrier_freq = carrier_freq
        self.layout = layout

    def config(self):
        return PipelineConfig(
            num_antennas=self.num_antennas, element_spacing=self.element_spacing,
            carrier_freq=self.carrier_freq, window=self.window, n_paths=self.n_paths,
            grid_step=self.grid_step, coherence=self.coherence,
            rss_ratio_linear=self.rss_ratio_linear, smooth_amplitude=self.smooth_amplitude,
            warmup_windows=0, feature_layout=tuple(self.layout),
        )

    def fit(self, X, y=None):
        self.config()
        return self

    def extract(self, X):
        cfg = self.config()
        offsets = self.phase_offsets if self.phase_offsets is not None else np.zeros(cfg.num_antennas)
        return [episode_features(ep, cfg, offsets) for ep in X]

    def transform(self, X):
        vectors = self.extract(X)
        return feature_matrix(vectors, tuple(self.layout))[0]


def run_pipeline(config, frames, model=None):
    """Yield one :class:`DetectionEvent` per decision stride.

    ``frames`` may be any iterable of CsiFrame, including a lazy
    :func:`~wlansense.formats.parse_frames` generator; a parse error surfaces
    as a :class:`StageError` naming the window being filled, after every
    earlier event has been yielded.
    """
    config = config or PipelineConfig()
    if config.detector_mode == "svm":
        if model is None:
            raise ConfigurationError("svm detector mode needs a trained model")
        if tuple(model.layout) != tuple(config.feature_layout):
            raise ConfigurationError(
                f"model layout {model.layout} does not match configured {config.feature_layout}")
    stream = FeatureStream(config)
    recent = deque(maxlen=config.threshold_sustain)
    iterator = iter(frames)
    window = 0
    while True:
        stage = "parse"
        try:
            frame = next(iterator)
        except StopIteration:
            return
        except WlanSenseError as exc:
            raise StageError(stage, window, exc) from exc
        try:
            stage = "features"
            fv = stream.push(frame)
            if fv is None:
                continue
            stage = "detect"
            if config.detector_mode == "svm":
                event = detect(model, fv)
            else:
                event = _threshold_event(fv, recent, config)
        except WlanSenseError as exc:
            raise StageError(stage, window, exc) from exc
        window += 1
        yield event


def _threshold_event(fv, recent, config):
    known = [d for d in (fv.aoa_delta1, fv.aoa_delta2) if d is not None]
    delta = max(known) if known else 0.0
    recent.append(delta)
    score = min(recent) - config.threshold_deg if len(recent) == recent.maxlen else -config.threshold_deg
    return DetectionEvent(t=fv.t, motion=score > 0, score=float(score), aoa_delta=float(delta),
                          contributing={"aoa_delta": float(delta)}, flags=fv.flags)


def _calibrate_frame(frame, offsets):
    if isinstance(frame, SanitizedFrame):
        # Sanitization removes one slope and offset shared by all antennas, so
        # per-antenna offsets survive it and can be removed afterwards.
        return replace(frame, csi_clean=apply_calibration(frame.csi_clean, offsets))
    return CsiFrame(
        t=frame.t, csi=apply_calibration(frame.csi, offsets), rss_db=frame.rss_db,
        subcarrier_spacing=frame.subcarrier_spacing, meta=frame.meta, label=frame.label,
    )


def calibrated_frames(config, frames):
    """Yield frames with the antenna phase offsets removed.

    Offsets come from the configuration, or from the first
    ``warmup_windows`` windows, which are then replayed calibrated.
    """
    offsets = config.phase_offsets_rad
    if offsets is None and config.warmup_windows == 0:
        offsets = np.zeros(config.num_antennas)
    warmup = []
    for frame in frames:
        _check_antennas(frame, config)
        if offsets is not None:
            yield _calibrate_frame(frame, offsets)
            continue
        warmup.append(frame)
        if len(warmup) == config.warmup_windows * config.window:
            offsets = warmup_offsets(warmup, config.window)
            for f in warmup:
                yield _calibrate_frame(f, offsets)
            warmup = []


def iter_aoa(config, frames):
    """One :class:`~wlansense.aoa.AoaEstimate` per window of ``T`` sanitized frames, every stride."""
    config = config or PipelineConfig()
    T = config.window
    raw = deque(maxlen=T - 1)
    window = deque(maxlen=T)
    count = 0
    for frame in calibrated_frames(config, frames):
        window.append(_sanitized(frame, raw, config))
        count += 1
        if count >= T and (count - T) % config.effective_stride == 0:
            yield estimate_window(config, list(window))
