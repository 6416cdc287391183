"""Per-window motion features from RSS, CSI amplitude and sanitized CSI phase.

All features compare two adjacent intervals of ``T`` frames: a trailing
(previous) window and the current one.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, DegenerateSampleError, PreconditionError
from .validation import check_finite

RSS_GUARD = 1e-9
SVR_GUARD = 1e-12

FEATURE_NAMES = (
    "aoa_delta1", "aoa_delta2", "rss_mean", "rss_std", "rss_ratio", "motion_indicator", "svr",
)
DEFAULT_LAYOUT = ("aoa_delta1", "aoa_delta2", "rss_std", "rss_ratio", "motion_indicator", "svr")
AOA_FEATURES = ("aoa_delta1", "aoa_delta2")


def rss_ratio(rss_db, linear=False):
    """Sum of adjacent-frame RSS ratios ``sum_i RSS(i) / RSS(i-1)``.

    By default the dB values are divided as they are; ``linear=True`` converts
    them to linear power first.
    """
    rss = check_finite(rss_db, "rss window", ndim=1)
    if rss.size < 2:
        raise PreconditionError("rss_ratio needs at least two samples")
    if linear:
        rss = 10.0 ** (rss / 10.0)
    if np.any(np.abs(rss) <= RSS_GUARD):
        raise DegenerateSampleError("RSS sample too close to zero for a ratio")
    return float(np.sum(rss[1:] / rss[:-1]))


def rss_std(rss_db):
    """Sample standard deviation (``ddof=1``) of the RSS window in dB."""
    rss = check_finite(rss_db, "rss window", ndim=1)
    if rss.size < 2:
        raise PreconditionError("rss_std needs at least two samples")
    return float(np.std(rss, ddof=1))


def rss_mean(rss_db):
    rss = check_finite(rss_db, "rss window", ndim=1)
    if rss.size < 1:
        raise PreconditionError("rss_mean needs at least one sample")
    return float(np.mean(rss))


def _pearson_rows(x, y):
    """Row-wise Pearson correlation; NaN where either row has (relatively) zero variance."""
    xc = x - x.mean(axis=-1, keepdims=True)
    yc = y - y.mean(axis=-1, keepdims=True)
    sx = np.sqrt(np.sum(xc * xc, axis=-1))
    sy = np.sqrt(np.sum(yc * yc, axis=-1))
    scale_x = 1e-12 * np.sqrt(x.shape[-1]) * np.max(np.abs(x), axis=-1)
    scale_y = 1e-12 * np.sqrt(y.shape[-1]) * np.max(np.abs(y), axis=-1)
    ok = (sx > scale_x) & (sy > scale_y)
    out = np.full(x.shape[:-1], np.nan)
    out[ok] = np.sum(xc * yc, axis=-1)[ok] / (sx[ok] * sy[ok])
    return out


def motion_indicator(window_a, window_b):
    """Motion indicator in [0, 1] from time and frequency amplitude correlation.

    ``window_a`` and ``window_b`` are amplitude stacks of shape (T, M, S) for
    the previous and the current window.

    * time term: per antenna, Pearson correlation between the frame-aligned
      (T x S) amplitude blocks of the two windows, averaged over antennas;
    * frequency term: Pearson correlation between the amplitude vectors of
      adjacent subcarriers within ``window_b``, averaged over (antenna, frame).

    Zero-variance terms are skipped; a term with nothing left is dropped.
    ``MI = 1 - clip(min(terms), 0, 1)``.
    """
    a = check_finite(window_a, "window_a", ndim=3)
    b = check_finite(window_b, "window_b", ndim=3)
    if a.shape != b.shape:
        raise PreconditionError(f"window shapes differ: {a.shape} vs {b.shape}")
    n_t, n_m, _ = a.shape
    blocks_a = np.transpose(a, (1, 0, 2)).reshape(n_m, -1)
    blocks_b = np.transpose(b, (1, 0, 2)).reshape(n_m, -1)
    rho_time = _pearson_rows(blocks_a, blocks_b)
    rho_freq = _pearson_rows(b[:, :, :-1], b[:, :, 1:])
    terms = [np.nanmean(r) for r in (rho_time, rho_freq) if np.any(np.isfinite(r))]
    if not terms:
        raise DegenerateSampleError("all amplitude series have zero variance")
    return float(1.0 - np.clip(min(terms), 0.0, 1.0))


def phase_svr(window_prev, window_next):
    """Short-term variance ratio of sanitized phase, one value per antenna.

    Both windows have shape (T+1, M, S). Per (subcarrier, antenna) the term is
    ``std(next)/std(prev) * sum(next)/sum(prev)``; terms whose trailing std or
    sum is within ``1e-12`` of zero are skipped and the rest averaged over
    subcarriers. An antenna left without terms takes the mean of the others.
    """
    prev = check_finite(window_prev, "window_prev", ndim=3)
    nxt = check_finite(window_next, "window_next", ndim=3)
    if prev.shape != nxt.shape:
        raise PreconditionError(f"window shapes differ: {prev.shape} vs {nxt.shape}")
    sd_prev, sd_next = prev.std(axis=0), nxt.std(axis=0)
    sum_prev, sum_next = prev.sum(axis=0), nxt.sum(axis=0)
    ok = (sd_prev > SVR_GUARD) & (np.abs(sum_prev) > SVR_GUARD)
    if not np.any(ok):
        raise DegenerateSampleError("trailing phase window has zero spread or zero sum everywhere")
    terms = np.where(ok, (sd_next / np.where(ok, sd_prev, 1.0)) * (sum_next / np.where(ok, sum_prev, 1.0)), 0.0)
    counts = ok.sum(axis=1)
    svr = np.full(prev.shape[1], np.nan)
    has = counts > 0
    svr[has] = terms[has].sum(axis=1) / counts[has]
    svr[~has] = svr[has].mean()
    return svr


@dataclass(frozen=True)
class FeatureVector:
    """Features of one decision window.

    AoA entries are ``None`` when the estimate was underresolved.
    """

    t: int
    aoa1: Optional[float]
    aoa2: Optional[float]
    aoa_delta1: Optional[float]
    aoa_delta2: Optional[float]
    rss_mean: float
    rss_ratio: float
    rss_std: float
    motion_indicator: float
    svr: tuple
    flags: tuple = ()
    label: Optional[bool] = None

    @property
    def svr_mean(self):
        return float(np.mean(self.svr))

    def value(self, name):
        if name == "svr":
            return self.svr_mean
        if name not in FEATURE_NAMES:
            raise ConfigurationError(f"unknown feature '{name}'")
        return getattr(self, name)

    def to_array(self, layout=DEFAULT_LAYOUT, impute=None):
        """Feature values in ``layout`` order; missing AoA entries become NaN
        unless ``impute`` (aligned with ``layout``) supplies replacements."""
        out = np.empty(len(layout))
        for i, name in enumerate(layout):
            v = self.value(name)
            if v is None:
                v = np.nan if impute is None else impute[i]
            out[i] = v
        return out

    def to_dict(self):
        return {
            "t": self.t, "aoa1": self.aoa1, "aoa2": self.aoa2,
            "aoa_delta1": self.aoa_delta1, "aoa_delta2": self.aoa_delta2,
            "rss_mean": self.rss_mean, "rss_ratio": self.rss_ratio, "rss_std": self.rss_std,
            "motion_indicator": self.motion_indicator, "svr": list(self.svr),
            "flags": list(self.flags), "label": self.label,
        }

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc["svr"] = tuple(doc["svr"])
        doc["flags"] = tuple(doc.get("flags", ()))
        return cls(**doc)


def feature_matrix(vectors, layout=DEFAULT_LAYOUT):
    """Stack feature vectors into ``(X, y)``; ``y`` is None if any label is missing."""
    X = np.array([v.to_array(layout) for v in vectors]).reshape(len(vectors), len(layout))
    labels = [v.label for v in vectors]
    y = None if any(lab is None for lab in labels) else np.array(labels, dtype=bool)
    return X, y
