"""CSI phase sanitization and amplitude smoothing.

Raw CSI phase carries a linear-in-frequency slope from the sampling time
offset (STO) plus a random per-packet offset. Both are modelled as::

    phi[m, s] = true_phase[m, s] - (2*pi*s*f_delta*tau + xi),   s = 0..S-1

and removed by a single ordinary-least-squares line fitted jointly over all
antennas and subcarriers of a frame.
"""

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .channel import SUBCARRIER_SPACING, WINDOW, CsiFrame
from .exceptions import DataError, PreconditionError
from .validation import check_finite, check_positive, check_stack


@dataclass(eq=False)
class SanitizedFrame:
    """A frame after phase sanitization and amplitude smoothing.

    ``phase`` keeps the unwrapped sanitized phase, which may exceed ``[-pi, pi]``
    and therefore cannot always be recovered from ``csi_clean``.
    """

    t: int
    csi_clean: np.ndarray
    phase: np.ndarray
    tau_hat: float
    xi_hat: float
    rss_db: float
    subcarrier_spacing: float = SUBCARRIER_SPACING
    meta: str = ""
    label: Optional[bool] = None

    @property
    def amplitude(self):
        return np.abs(self.csi_clean)

    def __eq__(self, other):
        if not isinstance(other, SanitizedFrame):
            return NotImplemented
        return (self.t == other.t and np.array_equal(self.csi_clean, other.csi_clean)
                and np.array_equal(self.phase, other.phase)
                and self.tau_hat == other.tau_hat and self.xi_hat == other.xi_hat
                and self.rss_db == other.rss_db
                and self.subcarrier_spacing == other.subcarrier_spacing
                and self.meta == other.meta and self.label == other.label)


def unwrap_phase(raw_phase, align_antennas=True):
    """Unwrap phase along the subcarrier axis of each antenna.

    With ``align_antennas`` the first subcarrier is also unwrapped across the
    antennas and each row shifted by the matching multiple of ``2*pi``; this
    keeps inter-antenna phase differences continuous from packet to packet.
    A 1-D input is treated as a single antenna.
    """
    arr = np.asarray(raw_phase, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DataError("phase contains non-finite entries")
    if np.any(np.abs(arr) > np.pi + 1e-9):
        raise DataError("raw phase must be wrapped to [-pi, pi]")
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    out = np.unwrap(arr, axis=1)
    if align_antennas and out.shape[0] > 1:
        anchor = np.unwrap(out[:, 0])
        out = out + (anchor - out[:, 0])[:, None]
    return out[0] if squeeze else out


def _subcarrier_index(num_subcarriers):
    return np.arange(num_subcarriers, dtype=float)


def estimate_sto(unwrapped, f_delta=SUBCARRIER_SPACING):
    """Fit ``(tau, xi)`` minimising ``sum (phi[m, s] + 2*pi*s*f_delta*tau + xi)**2``.

    One slope and one intercept are shared by all antennas. Returns the STO in
    seconds and the constant offset in radians.
    """
    phi = np.atleast_2d(check_finite(unwrapped, "unwrapped phase"))
    f_delta = check_positive(f_delta, "f_delta")
    num_sc = phi.shape[1]
    if num_sc < 2:
        raise PreconditionError("STO regression needs at least two subcarriers")
    s = _subcarrier_index(num_sc)
    s_c = s - s.mean()
    row_means = phi.mean(axis=0)
    slope = float(np.dot(s_c, row_means - row_means.mean()) / np.dot(s_c, s_c))
    intercept = float(row_means.mean() - slope * s.mean())
    tau = -slope / (2 * np.pi * f_delta)
    xi = -intercept
    return tau, xi


def sanitize_phase(unwrapped, tau_hat, xi_hat, f_delta=SUBCARRIER_SPACING):
    """Remove the fitted offset line: ``phi + 2*pi*s*f_delta*tau_hat + xi_hat``."""
    phi = check_finite(unwrapped, "unwrapped phase")
    s = _subcarrier_index(phi.shape[-1])
    return phi + 2 * np.pi * s * f_delta * tau_hat + xi_hat


def triangular_weights(length):
    """Weights ``1, 2, ..., ceil(T/2), ..., 2, 1`` normalised to sum to one."""
    i = np.arange(length)
    w = np.minimum(i + 1, length - i).astype(float)
    return w / w.sum()


def smooth_amplitude(window):
    """Triangular-weighted moving average of ``|Y|`` over a window of frames."""
    stack = check_stack(window)
    w = triangular_weights(stack.shape[0])
    return np.tensordot(w, np.abs(stack), axes=1)


def sanitize_frame(frame, history=None, smooth=True, align_antennas=True):
    """Sanitize one frame.

    ``history`` holds the preceding raw frames (oldest first); when ``smooth``
    is set the amplitude is averaged over ``history + [frame]``.
    """
    unwrapped = unwrap_phase(np.angle(frame.csi), align_antennas=align_antennas)
    tau, xi = estimate_sto(unwrapped, frame.subcarrier_spacing)
    phase = sanitize_phase(unwrapped, tau, xi, frame.subcarrier_spacing)
    if smooth and history:
        amp = smooth_amplitude(list(history) + [frame])
    else:
        amp = np.abs(frame.csi)
    return SanitizedFrame(
        t=frame.t, csi_clean=amp * np.exp(1j * phase), phase=phase, tau_hat=tau, xi_hat=xi,
        rss_db=frame.rss_db, subcarrier_spacing=frame.subcarrier_spacing, meta=frame.meta,
        label=frame.label,
    )


def sanitize_stream(frames, window=WINDOW, smooth=True):
    """Lazily sanitize a frame stream, smoothing amplitudes over the last ``window`` frames."""
    history = deque(maxlen=max(window - 1, 0))
    for frame in frames:
        yield sanitize_frame(frame, history if window > 1 else None, smooth=smooth)
        if history.maxlen:
            history.append(frame)


class PhaseSanitizer(TransformerMixin, BaseEstimator):
    """Array front-end to the sanitizer.

    ``transform`` maps a complex CSI stack of shape (frames, antennas,
    subcarriers) to the sanitized stack, smoothing amplitudes causally over
    ``window`` frames when ``smooth`` is set.
    """

    def __init__(self, subcarrier_spacing=SUBCARRIER_SPACING, window=WINDOW, smooth=True):
        self.subcarrier_spacing = subcarrier_spacing
        self.window = window
        self.smooth = smooth

    def fit(self, X, y=None):
        check_stack(X, "X")
        return self

    def transform(self, X):
        stack = check_stack(X, "X")
        frames = [CsiFrame(t=i, csi=c, rss_db=0.0, subcarrier_spacing=self.subcarrier_spacing)
                  for i, c in enumerate(stack)]
        return np.stack([f.csi_clean for f in sanitize_stream(frames, self.window, self.smooth)])

    def offsets(self, X):
        """Per-frame ``(tau_hat, xi_hat)`` as an array of shape (frames, 2)."""
        stack = check_stack(X, "X")
        return np.array([estimate_sto(unwrap_phase(np.angle(c)), self.subcarrier_spacing)
                         for c in stack])
