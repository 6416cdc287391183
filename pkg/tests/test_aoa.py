import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import two_path_window
from wlansense.aoa import (
    AoaEstimate, MusicEstimator, SpatialSpectrum, apply_calibration, calibrate_phase,
    eigendecompose, estimate_correlation, forward_backward, music_spectrum, orthogonality_diagnostic,
    parabolic_vertex, pick_peaks, smooth_coherence, subarray_smoothing,
)
from wlansense.channel import (
    ArrayGeometry, BeamPattern, Path, PathSet, PathSpec, Scenario, synthesize_frame,
    synthesize_sequence, uniform_grid,
)
from wlansense.exceptions import DataError, PreconditionError


def single_source(theta, num_frames=1):
    geom = ArrayGeometry()
    rng = np.random.default_rng(0)
    gamma = np.exp(2j * np.pi * rng.random(53))
    return [synthesize_frame(geom, BeamPattern.identity(4), PathSet((Path(theta, gamma),)), t=t)
            for t in range(num_frames)]


def test_correlation_outer_product():
    y = np.array([1, 1j, -1, -1j])
    est = estimate_correlation(y.reshape(1, 4, 1))
    np.testing.assert_allclose(est.R, np.outer(y, y.conj()))
    assert np.trace(est.R).real == pytest.approx(4.0)
    assert np.linalg.matrix_rank(est.R) == 1


def test_correlation_of_zero_is_zero():
    assert not estimate_correlation(np.zeros((7, 4, 53), dtype=complex)).R.any()


def test_correlation_of_white_noise_is_identity():
    rng = np.random.default_rng(0)
    X = (rng.standard_normal((200, 4, 53)) + 1j * rng.standard_normal((200, 4, 53))) / np.sqrt(2)
    assert np.linalg.norm(estimate_correlation(X).R - np.eye(4)) < 0.1


def test_correlation_rejects_mixed_shapes():
    with pytest.raises(DataError):
        estimate_correlation([np.ones((4, 53)), np.ones((4, 52))])


@given(st.integers(min_value=0, max_value=2 ** 31))
@settings(max_examples=50)
def test_correlation_is_hermitian_psd(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
    R = estimate_correlation(X).R
    assert np.allclose(R, R.conj().T, atol=1e-12)
    vals = np.linalg.eigvalsh(R)
    assert vals.min() >= -1e-9 * vals.max()


def test_eigendecompose_sorted_and_sign_fixed():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    vals, vecs = eigendecompose(A @ A.conj().T)
    assert np.all(np.diff(vals) <= 0)
    first = vecs[0]
    assert np.allclose(first.imag, 0) and np.all(first.real > 0)


def test_forward_backward_fixed_points():
    np.testing.assert_allclose(smooth_coherence(np.eye(4)).R, np.eye(4))
    # Persymmetric Hermitian Toeplitz matrix is unchanged.
    c = np.array([2.0, 0.5 + 0.2j, 0.1 - 0.1j, 0.05j])
    T = np.array([[c[j - i] if j >= i else np.conj(c[i - j]) for j in range(4)] for i in range(4)])
    np.testing.assert_allclose(forward_backward(T), T, atol=1e-12)


@given(st.integers(min_value=0, max_value=2 ** 31))
@settings(max_examples=50)
def test_forward_backward_preserves_trace_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    R = A @ A.conj().T
    out = smooth_coherence(R).R
    assert np.trace(out).real == pytest.approx(np.trace(R).real, rel=1e-12)
    assert np.allclose(out, out.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(out).min() >= -1e-9 * np.linalg.eigvalsh(out).max()


def test_subarray_smoothing_shapes():
    assert subarray_smoothing(np.eye(4), 3).shape == (3, 3)
    with pytest.raises(PreconditionError):
        subarray_smoothing(np.eye(4), 5)
    with pytest.raises(PreconditionError):
        smooth_coherence(np.eye(2), subarray=True)


@pytest.mark.parametrize("theta", [-60.0, -20.0, 0.0, 20.0, 45.5, 70.0])
def test_music_single_source_saturates_at_truth(theta):
    spec = music_spectrum(estimate_correlation(single_source(theta)), n_paths=1)
    assert spec.saturated
    assert spec.angle_grid[np.argmax(spec.values)] == theta


def test_music_pure_noise_is_flat():
    spec = music_spectrum(0.3 * np.eye(4), n_paths=2)
    assert spec.values.max() / spec.values.min() <= 1 + 1e-6


def test_music_scale_invariance():
    R = estimate_correlation(two_path_window((-25.0, 25.0), noise_power=0.01)).R
    a = music_spectrum(R).values
    b = music_spectrum(7.5 * R).values
    assert np.argmax(a) == np.argmax(b)


def test_music_rejects_too_many_paths():
    with pytest.raises(PreconditionError):
        music_spectrum(np.eye(4), n_paths=4)


def test_spectrum_values_positive_finite():
    spec = music_spectrum(estimate_correlation(two_path_window((-25.0, 25.0), noise_power=0.01)))
    assert np.all(np.isfinite(spec.values)) and np.all(spec.values > 0)
    assert spec.step == 0.5


def test_music_error_shrinks_with_noise():
    def err(noise):
        out = []
        for seed in range(50):
            frames = two_path_window((-25.0, 25.0), noise_power=noise, seed=seed)
            est = pick_peaks(music_spectrum(estimate_correlation(frames)), 2)
            out.append(np.mean(np.abs(np.sort(est.angles) - [-25.0, 25.0])) if len(est) == 2 else 90.0)
        return np.mean(out)
    assert err(1e-6) < err(1e-2)


def test_parabolic_vertex_example():
    spec = SpatialSpectrum(np.array([9.5, 10.0, 10.5, 11.0, 11.5]),
                           np.array([0.5, 1.0, 3.0, 2.0, 0.5]))
    est = pick_peaks(spec, 1)
    assert est.angles[0] == pytest.approx(10.583333333333334, abs=1e-12)
    assert parabolic_vertex(1.0, 1.0, 1.0) == 0.0


def test_pick_peaks_underresolved():
    grid = uniform_grid(0.5)
    values = 1.0 / (1.0 + (grid - grid[140]) ** 2)
    est = pick_peaks(SpatialSpectrum(grid, values), 2)
    assert est.underresolved and len(est) == 1
    assert est.angles[0] == pytest.approx(grid[140])


def test_pick_peaks_twin_tie_break():
    grid = uniform_grid(0.5)
    values = 1.0 / (1.0 + (np.abs(grid) - 30.0) ** 2)
    est = pick_peaks(SpatialSpectrum(grid, values), 2)
    assert est.angles == pytest.approx((-30.0, 30.0))
    assert not est.underresolved


def test_pick_peaks_plateau_counts_once():
    grid = np.arange(-2.0, 2.5, 0.5)
    values = np.array([0, 1, 2, 2, 2, 1, 0, 0, 0], dtype=float)
    est = pick_peaks(SpatialSpectrum(grid, values), 2)
    assert len(est) == 1 and est.underresolved


def test_calibration_recovers_injected_offsets():
    offsets = (0.0, 0.4, -0.2, 1.1)
    scene = Scenario(paths=(PathSpec(0.0, 1.0),), antenna_phase_offsets=offsets)
    frames, _ = synthesize_sequence(scene, 7, seed=0)
    est = calibrate_phase([estimate_correlation(frames)])
    np.testing.assert_allclose(est, offsets, atol=1e-6)
    fixed = [apply_calibration(f.csi, est) for f in frames]
    np.testing.assert_allclose(calibrate_phase([estimate_correlation(fixed)]), 0.0, atol=1e-9)


def test_calibration_of_calibrated_array_is_zero():
    np.testing.assert_allclose(calibrate_phase([estimate_correlation(single_source(0.0, 3))]),
                               0.0, atol=1e-9)
    with pytest.raises(PreconditionError):
        calibrate_phase([])


def test_orthogonality_diagnostic():
    geom = ArrayGeometry()
    value = orthogonality_diagnostic(geom, BeamPattern.identity(4), [-30.0, 30.0])
    assert 0.0 <= value <= 1.0
    # Steering vectors at generic angles are not orthogonal.
    assert orthogonality_diagnostic(geom, BeamPattern.identity(4), [10.0, 37.0]) > 0.1
    assert orthogonality_diagnostic(geom, BeamPattern.identity(4), [0.0, 0.0]) == pytest.approx(1.0)


def test_music_estimator_api():
    windows = [two_path_window((-25.0, 25.0), noise_power=1e-4, seed=s) for s in range(3)]
    est = MusicEstimator(calibrate=False).fit(windows)
    pred = est.predict(windows)
    assert pred.shape == (3, 2)
    np.testing.assert_allclose(np.sort(pred, axis=1), [[-25.0, 25.0]] * 3, atol=0.5)
    assert est.get_params()["n_paths"] == 2


def test_music_runtime_per_window():
    frames = two_path_window((-25.0, 25.0), noise_power=1e-3)
    start = time.perf_counter()
    for _ in range(20):
        pick_peaks(music_spectrum(smooth_coherence(estimate_correlation(frames))), 2)
    assert (time.perf_counter() - start) / 20 < 1.0


def test_aoa_estimate_record():
    est = AoaEstimate((10.0, -5.0), (3.0, 2.0), t=4)
    assert est.to_dict() == {"t": 4, "angles_deg": [10.0, -5.0], "peaks": [3.0, 2.0],
                             "underresolved": False}
