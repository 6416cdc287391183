import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wlansense.aoa import AoaEstimate
from wlansense.detector import (
    AoaThresholdDetector, DetectionEvent, LinearSVMDetector, SvmModel, aoa_change, detect,
    detection_report, evaluate, match_aoa, train_svm,
)
from wlansense.exceptions import ConfigurationError, PreconditionError, TrainingError
from wlansense.features import FeatureVector


def toy_corpus(n=60, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2 == 1
    x1 = np.where(y, rng.uniform(1.2, 3.0, n), rng.uniform(-3.0, -1.2, n))
    X = np.column_stack([x1, rng.normal(size=n)])
    return X, y


def test_aoa_change_examples():
    assert aoa_change(AoaEstimate((10.0, -30.0), (1, 1)), AoaEstimate((10.0, -30.0), (1, 1))) == 0.0
    assert aoa_change((10.0, -30.0), (12.0, -30.0)) == pytest.approx(2.0)
    m = match_aoa((10.0, -30.0), (11.0,))
    assert m.deltas == (1.0,) and m.unmatched == 1
    assert m.max_change == 90.0
    assert np.isnan(aoa_change((), ()))


@given(st.lists(st.floats(-89, 89), max_size=3), st.lists(st.floats(-89, 89), max_size=3))
def test_aoa_change_symmetric(a, b):
    x, y = aoa_change(a, b), aoa_change(b, a)
    assert (np.isnan(x) and np.isnan(y)) or x == pytest.approx(y)


def test_train_separable_toy():
    X, y = toy_corpus()
    model = train_svm(X, y, C=1.0, epochs=50, seed=0)
    assert np.all((model.decision_function(X) > 0) == y)
    assert np.all(model.feature_stds > 0)


def test_train_single_class():
    X, _ = toy_corpus()
    with pytest.raises(TrainingError):
        train_svm(X, np.zeros(len(X), dtype=bool))


def test_label_flip_negates_weights():
    X, y = toy_corpus(seed=3)
    a = train_svm(X, y, epochs=100, seed=4)
    b = train_svm(X, ~y, epochs=100, seed=4)
    np.testing.assert_allclose(b.weights, -a.weights, rtol=1e-3)
    assert b.bias == pytest.approx(-a.bias, rel=1e-3, abs=1e-12)


def test_training_is_bit_deterministic():
    X, y = toy_corpus(seed=5)
    a = train_svm(X, y, epochs=30, seed=1)
    b = train_svm(X, y, epochs=30, seed=1)
    assert a.to_json() == b.to_json()


def test_decisions_invariant_to_feature_scale():
    X, y = toy_corpus(seed=6)
    a = train_svm(X, y, epochs=40, seed=2)
    b = train_svm(3.7 * X, y, epochs=40, seed=2)
    assert np.array_equal(a.decision_function(X) > 0, b.decision_function(3.7 * X) > 0)


def test_model_json_round_trip():
    X, y = toy_corpus()
    model = train_svm(X, y, epochs=10, layout=("rss_std", "motion_indicator"), trained_on="toy")
    again = SvmModel.from_dict(model.to_dict())
    assert again == model and again.layout == ("rss_std", "motion_indicator")


def test_sklearn_detector():
    X, y = toy_corpus()
    clf = LinearSVMDetector(epochs=20).fit(X, y)
    assert clf.score(X, y) == 1.0
    assert clf.get_params()["C"] == 1.0
    same = LinearSVMDetector.from_model(clf.model_)
    assert np.array_equal(same.predict(X), clf.predict(X))


def test_threshold_detector_needs_sustained_change():
    X = np.array([[6.0, 7.0], [6.0, 2.0], [1.0, 9.0]])
    assert AoaThresholdDetector(5.0, 2).fit(X).predict(X).tolist() == [True, False, False]


def _fv(**kw):
    base = dict(t=0, aoa1=10.0, aoa2=-30.0, aoa_delta1=0.5, aoa_delta2=0.2, rss_mean=-40.0,
                rss_ratio=8.0, rss_std=0.1, motion_indicator=0.1, svr=(1.0,) * 4)
    base.update(kw)
    return FeatureVector(**base)


def _model():
    layout = ("aoa_delta1", "aoa_delta2", "rss_std")
    rng = np.random.default_rng(0)
    y = np.arange(80) % 2 == 1
    X = np.column_stack([np.where(y, 4.0, 0.2), np.where(y, 3.0, 0.2), np.where(y, 0.5, 0.05)])
    X = X + 0.05 * rng.normal(size=X.shape)
    return train_svm(X, y, epochs=30, layout=layout)


def test_detect_scores_and_flags():
    model = _model()
    quiet = detect(model, _fv())
    assert not quiet.motion and quiet.score < 0 and quiet.aoa_delta == 0.5
    loud = detect(model, _fv(aoa_delta1=4.0, aoa_delta2=3.0, rss_std=0.5))
    assert loud.motion and loud.score > 0
    imputed = detect(model, _fv(aoa2=None, aoa_delta2=None))
    assert "imputed:aoa_delta2" in imputed.flags
    recomputed = detect(model, _fv(aoa1=14.0, aoa2=-30.0), prev_aoa=(10.0, -30.0))
    assert recomputed.aoa_delta == pytest.approx(4.0)


def test_detect_midpoint_has_small_margin():
    model = _model()
    mid = detect(model, _fv(aoa_delta1=2.1, aoa_delta2=1.6, rss_std=0.275))
    far = detect(model, _fv(aoa_delta1=4.0, aoa_delta2=3.0, rss_std=0.5))
    assert abs(mid.score) < abs(far.score) / 2


def test_detect_rejects_nan():
    with pytest.raises(ConfigurationError):
        detect(_model(), _fv(rss_std=float("nan")))


def test_event_round_trip():
    ev = DetectionEvent(t=3, motion=True, score=0.4, aoa_delta=2.0, contributing={"rss_std": 1.2},
                        flags=("underresolved",))
    assert DetectionEvent.from_dict(ev.to_dict()) == ev


def test_detection_report_baselines():
    y = np.array([True, False] * 10)
    perfect = detection_report(y, y)
    assert (perfect.accuracy, perfect.missed_detection_prob, perfect.false_alarm_prob) == (1.0, 0.0, 0.0)
    always = detection_report(y, np.ones_like(y))
    assert (always.accuracy, always.missed_detection_prob, always.false_alarm_prob) == (0.5, 0.0, 1.0)
    with pytest.raises(PreconditionError):
        detection_report([], [])


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
@settings(max_examples=100)
def test_accuracy_identity(pairs):
    y, p = np.array(pairs).T
    r = detection_report(y, p)
    p_motion = y.mean()
    assert r.accuracy == pytest.approx(
        1 - (r.missed_detection_prob * p_motion + r.false_alarm_prob * (1 - p_motion)), abs=1e-12)
    assert r.total == len(y)


def test_evaluate_model():
    X, y = toy_corpus()
    model = train_svm(X, y, epochs=20)
    assert evaluate(model, X, y).accuracy == 1.0
