"""Angle-of-arrival estimation with MUSIC.

Every per-subcarrier CSI vector of a ``T``-frame window is one snapshot of the
spatial correlation matrix. The ``M - L`` eigenvectors with the smallest
eigenvalues span the noise subspace ``E``; the pseudo-spectrum

    P(theta) = 1 / (a(theta)^H E E^H a(theta))

is scanned on a uniform grid with the plain (unweighted) steering vector and
its highest local maxima are reported. With beam-steered elements the peaks are
a stable signature of the path geometry rather than calibrated bearings.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .channel import ArrayGeometry, uniform_grid
from .exceptions import DataError, PreconditionError
from .validation import check_int, check_stack

DENOMINATOR_FLOOR = 1e-18
COHERENCE_MODES = ("none", "fb", "fbss")


@dataclass(frozen=True, eq=False)
class CorrelationEstimate:
    R: np.ndarray
    num_frames_used: int
    t: int = 0

    @property
    def size(self):
        return self.R.shape[0]


@dataclass(frozen=True, eq=False)
class SpatialSpectrum:
    angle_grid: np.ndarray
    values: np.ndarray
    saturated: bool = False

    @property
    def step(self):
        return float(self.angle_grid[1] - self.angle_grid[0])


@dataclass(frozen=True)
class AoaEstimate:
    angles: tuple
    peak_values: tuple
    t: int = 0
    underresolved: bool = False

    def __len__(self):
        return len(self.angles)

    def to_dict(self):
        return {"t": self.t, "angles_deg": list(self.angles), "peaks": list(self.peak_values),
                "underresolved": self.underresolved}


def estimate_correlation(window, t=None):
    """Sample correlation ``R = 1/(T*S) * sum_{t,s} y y^H`` over all snapshots.

    ``window`` is a sequence of frames (raw or sanitized) or a complex array of
    shape (T, M, S).
    """
    stack = check_stack(window)
    n_frames, _, n_sc = stack.shape
    R = np.einsum("tms,tns->mn", stack, stack.conj()) / (n_frames * n_sc)
    R = 0.5 * (R + R.conj().T)
    if t is None:
        t = getattr(window[0], "t", 0) if not isinstance(window, np.ndarray) else 0
    return CorrelationEstimate(R=R, num_frames_used=n_frames, t=int(t))


def _as_matrix(R):
    if isinstance(R, CorrelationEstimate):
        return R.R
    R = np.asarray(R, dtype=np.complex128)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DataError(f"correlation matrix must be square, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise DataError("correlation matrix contains non-finite entries")
    return R


def forward_backward(R):
    """``(R + J conj(R) J) / 2`` with ``J`` the exchange matrix."""
    return 0.5 * (R + np.flip(R).conj())


def subarray_smoothing(R, subarray_size):
    """Average the ``M - subarray_size + 1`` overlapping forward subarray blocks."""
    m = R.shape[0]
    n_sub = m - subarray_size + 1
    if subarray_size < 2 or n_sub < 1:
        raise PreconditionError(f"subarray size must lie in [2, {m}], got {subarray_size}")
    out = np.zeros((subarray_size, subarray_size), dtype=R.dtype)
    for i in range(n_sub):
        out += R[i:i + subarray_size, i:i + subarray_size]
    return out / n_sub


def smooth_coherence(estimate, subarray=False, subarray_size=None):
    """Forward-backward averaging, optionally followed by subarray smoothing.

    Subarray smoothing shrinks the matrix to ``subarray_size`` (default
    ``M - 1``) elements and needs ``M >= 3``.
    """
    R = _as_matrix(estimate)
    out = forward_backward(R)
    if subarray:
        if R.shape[0] < 3:
            raise PreconditionError("subarray smoothing needs at least three antennas")
        out = subarray_smoothing(out, subarray_size or R.shape[0] - 1)
    out = 0.5 * (out + out.conj().T)
    if isinstance(estimate, CorrelationEstimate):
        return CorrelationEstimate(out, estimate.num_frames_used, estimate.t)
    return CorrelationEstimate(out, 0, 0)


def eigendecompose(R):
    """Hermitian eigendecomposition, eigenvalues descending.

    Each eigenvector is scaled so that its first non-negligible component is
    real and positive, which makes the output deterministic.
    """
    vals, vecs = np.linalg.eigh(_as_matrix(R))
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    for k in range(vecs.shape[1]):
        v = vecs[:, k]
        idx = np.flatnonzero(np.abs(v) > 1e-12)
        if idx.size:
            ref = v[idx[0]]
            vecs[:, k] = v * (abs(ref) / ref)
    return vals, vecs


def music_spectrum(estimate, geometry=None, n_paths=2, grid_step=0.5):
    """MUSIC pseudo-spectrum on a uniform grid over [-90, 90] degrees.

    The array size is taken from the correlation matrix, so subarray-smoothed
    matrices are scanned with the matching shorter steering vector.
    """
    R = _as_matrix(estimate)
    m = R.shape[0]
    geometry = geometry or ArrayGeometry(num_antennas=max(m, 2))
    check_int(n_paths, "n_paths", minimum=1)
    if n_paths >= m:
        raise PreconditionError(f"L={n_paths} must be smaller than the array size {m}")
    _, vecs = eigendecompose(R)
    noise = vecs[:, n_paths:]
    grid = uniform_grid(grid_step)
    A = geometry.steering_matrix(grid, num_elements=m)
    denom = np.sum(np.abs(noise.conj().T @ A) ** 2, axis=0)
    saturated = bool(np.any(denom < DENOMINATOR_FLOOR))
    return SpatialSpectrum(grid, 1.0 / np.maximum(denom, DENOMINATOR_FLOOR), saturated)


def _local_maxima(values):
    """Indices of interior local maxima; a flat top counts once at its leftmost index."""
    peaks = []
    n = values.size
    i = 1
    while i < n - 1:
        if values[i] > values[i - 1]:
            j = i
            while j + 1 < n and values[j + 1] == values[i]:
                j += 1
            if j + 1 < n and values[j + 1] < values[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def parabolic_vertex(y0, y1, y2):
    """Offset of the parabola vertex through three equispaced samples, in steps."""
    denom = y0 - 2.0 * y1 + y2
    if denom == 0 or not np.isfinite(denom):
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))


def pick_peaks(spectrum, n_paths=2, t=0):
    """Return the ``n_paths`` highest local maxima, refined by parabolic interpolation.

    Equal heights are ordered by smaller angle first. Fewer maxima than
    requested sets ``underresolved``.
    """
    values = np.asarray(spectrum.values, dtype=float)
    grid = np.asarray(spectrum.angle_grid, dtype=float)
    step = grid[1] - grid[0]
    peaks = _local_maxima(values)
    peaks.sort(key=lambda i: (-values[i], grid[i]))
    chosen = peaks[:n_paths]
    angles, heights = [], []
    for i in chosen:
        shift = parabolic_vertex(values[i - 1], values[i], values[i + 1])
        angles.append(float(grid[i] + shift * step))
        heights.append(float(values[i]))
    return AoaEstimate(tuple(angles), tuple(heights), t=int(t),
                       underresolved=len(chosen) < n_paths)


def calibrate_phase(warmup):
    """Per-antenna phase offsets from warm-up correlation matrices of a static scene.

    The offsets are the phases of the first column of the averaged matrix,
    i.e. each element's phase relative to element 0, whose offset is zero.
    """
    mats = [_as_matrix(w) for w in warmup]
    if not mats:
        raise PreconditionError("phase calibration needs at least one warm-up window")
    R = np.mean(mats, axis=0)
    offsets = np.angle(R[:, 0])
    offsets[0] = 0.0
    return offsets


def apply_calibration(csi, offsets):
    """Multiply antenna ``m`` by ``exp(-1j * offsets[m])``; works on (M, S) or (T, M, S)."""
    csi = np.asarray(csi)
    rot = np.exp(-1j * np.asarray(offsets, dtype=float))
    return csi * rot[:, None]


def orthogonality_diagnostic(geometry, pattern, angles):
    """Largest off-diagonal magnitude of the normalised Gram matrix of the
    beam-weighted steering vectors at ``angles`` (0 means mutually orthogonal).
    """
    cols = []
    for theta in angles:
        v = pattern.response(theta) * geometry.steering_matrix([theta])[:, 0]
        cols.append(v / np.linalg.norm(v))
    G = np.abs(np.stack(cols, axis=1).conj().T @ np.stack(cols, axis=1))
    np.fill_diagonal(G, 0.0)
    return float(G.max()) if G.size else 0.0


class MusicEstimator(BaseEstimator):
    """Window-level MUSIC estimator.

    ``fit`` runs the one-off phase calibration on warm-up windows of a static
    scene (skipped when ``calibrate=False``); ``predict`` returns the
    dominant angles of every window, NaN where fewer than ``n_paths`` peaks
    were found.

    Windows are complex arrays of shape (T, M, S) or sequences of frames.
    """

    def __init__(self, n_paths=2, grid_step=0.5, coherence="fb", num_antennas=4,
                 element_spacing=0.0252, carrier_freq=5.745e9, calibrate=True):
        self.n_paths = n_paths
        self.grid_step = grid_step
        self.coherence = coherence
        self.num_antennas = num_antennas
        self.element_spacing = element_spacing
        self.carrier_freq = carrier_freq
        self.calibrate = calibrate

    @property
    def geometry(self):
        return ArrayGeometry(self.num_antennas, self.element_spacing, self.carrier_freq)

    def _check_params(self):
        if self.coherence not in COHERENCE_MODES:
            raise PreconditionError(f"coherence must be one of {COHERENCE_MODES}")
        check_int(self.n_paths, "n_paths", minimum=1)

    def fit(self, X, y=None):
        self._check_params()
        windows = list(X)
        if self.calibrate:
            self.phase_offsets_ = calibrate_phase([estimate_correlation(w) for w in windows])
        else:
            self.phase_offsets_ = np.zeros(self.num_antennas)
        return self

    def correlation(self, window):
        stack = check_stack(window)
        if stack.shape[1] != self.num_antennas:
            raise DataError(f"expected {self.num_antennas} antennas, got {stack.shape[1]}")
        offsets = getattr(self, "phase_offsets_", None)
        if offsets is not None:
            stack = apply_calibration(stack, offsets)
        est = estimate_correlation(stack)
        if self.coherence == "none":
            return est
        return smooth_coherence(est, subarray=self.coherence == "fbss")

    def spectrum(self, window):
        self._check_params()
        return music_spectrum(self.correlation(window), self.geometry, self.n_paths, self.grid_step)

    def estimate(self, window, t=0):
        return pick_peaks(self.spectrum(window), self.n_paths, t=t)

    def predict(self, X):
        check_is_fitted(self, "phase_offsets_")
        out = np.full((len(X), self.n_paths), np.nan)
        for i, window in enumerate(X):
            est = self.estimate(window)
            out[i, :len(est)] = est.angles
        return out
