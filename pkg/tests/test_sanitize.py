import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wlansense.channel import CsiFrame
from wlansense.exceptions import DataError, PreconditionError
from wlansense.sanitize import (
    PhaseSanitizer, estimate_sto, sanitize_frame, sanitize_phase, sanitize_stream,
    smooth_amplitude, triangular_weights, unwrap_phase,
)

F_DELTA = 312.5e3
S = np.arange(53)


def linear_phase(tau, xi, num_antennas=4, num_subcarriers=53):
    s = np.arange(num_subcarriers)
    return np.tile(-(2 * np.pi * s * F_DELTA * tau + xi), (num_antennas, 1))


def test_unwrap_constant_unchanged():
    phase = np.full((4, 53), 0.3)
    assert np.array_equal(unwrap_phase(phase), phase)


def test_unwrap_two_samples():
    # -3 + 2*pi
    np.testing.assert_allclose(unwrap_phase(np.array([3.0, -3.0])), [3.0, 3.283185307179586],
                               rtol=1e-15)


def test_unwrap_rejects_nan_and_unwrapped_input():
    with pytest.raises(DataError):
        unwrap_phase(np.array([[0.0, np.nan]]))
    with pytest.raises(DataError):
        unwrap_phase(np.array([[0.0, 4.0]]))


@given(st.integers(min_value=0, max_value=2 ** 31))
@settings(max_examples=50)
def test_unwrap_adds_multiples_of_two_pi(seed):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(-np.pi, np.pi, (4, 53))
    out = unwrap_phase(raw)
    k = (out - raw) / (2 * np.pi)
    assert np.all(np.abs(k - np.round(k)) < 1e-9)
    assert np.all(np.abs(np.diff(out, axis=1)) <= np.pi + 1e-12)


@pytest.mark.parametrize("tau", [10e-9, 50e-9, 200e-9])
@pytest.mark.parametrize("xi", [-np.pi / 2, 0.7])
def test_sto_recovered_exactly(tau, xi):
    tau_hat, xi_hat = estimate_sto(linear_phase(tau, xi), F_DELTA)
    assert abs(tau_hat - tau) <= 1e-12 * tau
    assert abs(xi_hat - xi) <= 1e-12 * abs(xi)


def test_sto_offset_sign():
    # phi = -2*pi*s*f*50ns - 0.7: the objective's minimiser has xi = +0.7.
    tau_hat, xi_hat = estimate_sto(linear_phase(50e-9, 0.7), F_DELTA)
    assert tau_hat == pytest.approx(50e-9, rel=1e-12)
    assert xi_hat == pytest.approx(0.7, rel=1e-12)


def test_sto_zero_phase():
    assert estimate_sto(np.zeros((4, 53)), F_DELTA) == (0.0, 0.0)


def test_sto_needs_two_subcarriers():
    with pytest.raises(PreconditionError):
        estimate_sto(np.zeros((4, 1)), F_DELTA)


def test_sto_matches_independent_least_squares():
    rng = np.random.default_rng(5)
    phi = rng.normal(size=(4, 53))
    # Regress phi on [-2*pi*s*f_delta, -1]: the minimiser of sum (phi + 2*pi*s*f*tau + xi)^2.
    A = np.column_stack([-2 * np.pi * np.tile(S, 4) * F_DELTA, -np.ones(4 * 53)])
    (tau, xi), *_ = np.linalg.lstsq(A, phi.ravel(), rcond=None)
    tau_hat, xi_hat = estimate_sto(phi, F_DELTA)
    assert tau_hat == pytest.approx(tau, rel=1e-10)
    assert xi_hat == pytest.approx(xi, rel=1e-10)


def test_sanitize_linear_phase_to_zero():
    phi = linear_phase(50e-9, -0.7)
    tau, xi = estimate_sto(phi, F_DELTA)
    np.testing.assert_allclose(sanitize_phase(phi, tau, xi, F_DELTA), 0.0, atol=1e-12)


def test_sanitize_keeps_orthogonal_residual():
    rng = np.random.default_rng(1)
    r = rng.normal(size=(4, 53))
    # Remove the projection of the antenna-mean onto {1, s} so the pooled fit sees nothing.
    mean = r.mean(axis=0)
    A = np.column_stack([np.ones(53), S])
    coef, *_ = np.linalg.lstsq(A, mean, rcond=None)
    r -= (A @ coef)[None, :]
    phi = linear_phase(30e-9, 0.4) + r
    tau, xi = estimate_sto(phi, F_DELTA)
    np.testing.assert_allclose(sanitize_phase(phi, tau, xi, F_DELTA), r, atol=1e-10)


@given(st.integers(min_value=0, max_value=2 ** 31))
@settings(max_examples=30)
def test_sanitize_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=(4, 53)) + linear_phase(rng.uniform(0, 2e-7), rng.uniform(-3, 3))
    once = sanitize_phase(phi, *estimate_sto(phi, F_DELTA), F_DELTA)
    tau2, xi2 = estimate_sto(once, F_DELTA)
    assert abs(tau2 * 2 * np.pi * F_DELTA) < 1e-9 and abs(xi2) < 1e-9
    np.testing.assert_allclose(sanitize_phase(once, tau2, xi2, F_DELTA), once, atol=1e-9)


def test_sto_error_shrinks_with_more_subcarriers():
    errors = []
    for n_sc in (8, 16, 32, 64):
        err = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            phi = linear_phase(50e-9, 0.3, num_subcarriers=n_sc) + 0.1 * rng.normal(size=(4, n_sc))
            err.append(abs(estimate_sto(phi, F_DELTA)[0] - 50e-9))
        errors.append(np.mean(err))
    assert all(a > b for a, b in zip(errors, errors[1:]))


def test_triangular_weights():
    np.testing.assert_allclose(triangular_weights(3), [0.25, 0.5, 0.25])
    np.testing.assert_allclose(triangular_weights(7) * 16, [1, 2, 3, 4, 3, 2, 1])
    assert triangular_weights(1).tolist() == [1.0]


def test_smooth_amplitude_examples():
    frames = [np.full((4, 53), a, dtype=complex) for a in (1.0, 2.0, 3.0)]
    np.testing.assert_allclose(smooth_amplitude(frames), 2.0, rtol=1e-15)
    single = np.random.default_rng(0).normal(size=(4, 53)) + 0j
    np.testing.assert_allclose(smooth_amplitude([single]), np.abs(single))
    same = [single] * 7
    np.testing.assert_allclose(smooth_amplitude(same), np.abs(single), rtol=1e-14)
    with pytest.raises(PreconditionError):
        smooth_amplitude([])


def _frame(t, phase, amp=1.0):
    return CsiFrame(t=t, csi=amp * np.exp(1j * phase), rss_db=-40.0)


def test_sanitize_frame_removes_slope_and_keeps_amplitude():
    true = np.outer(np.arange(4) * 0.3, np.ones(53))
    raw = np.angle(np.exp(1j * (true + linear_phase(120e-9, 2.0))))
    amp = np.random.default_rng(2).uniform(0.5, 1.5, (4, 53))
    out = sanitize_frame(_frame(0, raw, amp), smooth=False)
    np.testing.assert_allclose(out.amplitude, amp, rtol=1e-12)
    s_c = S - S.mean()
    slope = np.dot(out.phase.mean(axis=0), s_c) / np.dot(s_c, s_c)
    assert abs(slope) < 1e-9
    # Inter-antenna differences are untouched.
    np.testing.assert_allclose(np.diff(out.phase, axis=0), np.diff(true, axis=0), atol=1e-9)


def test_sanitize_stream_smooths_causally():
    frames = [_frame(t, np.zeros((4, 53)), amp=float(t + 1)) for t in range(3)]
    out = list(sanitize_stream(frames, window=3))
    assert out[0].amplitude[0, 0] == pytest.approx(1.0)
    assert out[2].amplitude[0, 0] == pytest.approx(2.0)


def test_phase_sanitizer_estimator():
    rng = np.random.default_rng(0)
    X = np.exp(1j * (linear_phase(40e-9, 0.5)[None] + 0.01 * rng.normal(size=(5, 4, 53))))
    est = PhaseSanitizer(window=1)
    Y = est.fit_transform(X)
    assert Y.shape == X.shape
    np.testing.assert_allclose(np.abs(Y), np.abs(X))
    np.testing.assert_allclose(est.offsets(X)[:, 0], 40e-9, rtol=1e-2)
    assert est.get_params()["window"] == 1
