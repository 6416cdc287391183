"""Motion/no-motion decisions from window features.

The classifier is a linear soft-margin SVM trained by stochastic subgradient
descent on the primal hinge objective ``0.5*||w||^2 + C*sum(hinge)`` over
z-scored features. Training is deterministic for a given seed.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigurationError, PreconditionError, TrainingError
from .features import AOA_FEATURES, DEFAULT_LAYOUT

LAYOUT_VERSION = 1
UNMATCHED_CHANGE_DEG = 90.0


@dataclass(frozen=True)
class AoaMatch:
    """Greedy nearest-angle matching of two estimates.

    ``deltas[i]`` is the absolute change of the i-th current angle (the
    surrogate 90 degrees when it has no partner).
    """

    deltas: tuple
    unmatched: int

    @property
    def max_change(self):
        vals = list(self.deltas) + [UNMATCHED_CHANGE_DEG] * (1 if self.unmatched else 0)
        return max(vals) if vals else float("nan")


def match_aoa(prev, curr):
    prev_angles = list(getattr(prev, "angles", prev) or ())
    curr_angles = list(getattr(curr, "angles", curr) or ())
    pairs = sorted(
        (abs(c - p), j, i) for i, p in enumerate(prev_angles) for j, c in enumerate(curr_angles)
    )
    used_prev, deltas = set(), {}
    for dist, j, i in pairs:
        if j in deltas or i in used_prev:
            continue
        deltas[j] = dist
        used_prev.add(i)
    unmatched = (len(curr_angles) - len(deltas)) + (len(prev_angles) - len(used_prev))
    return AoaMatch(
        tuple(deltas.get(j, UNMATCHED_CHANGE_DEG) for j in range(len(curr_angles))), unmatched,
    )


def aoa_change(prev, curr):
    """Largest matched AoA change in degrees; NaN when both estimates are empty."""
    return match_aoa(prev, curr).max_change


def _to_pm1(y):
    y = np.asarray(y)
    if y.dtype == bool:
        return np.where(y, 1.0, -1.0)
    classes = np.unique(y)
    if set(classes.tolist()) <= {-1, 1}:
        return y.astype(float)
    if set(classes.tolist()) <= {0, 1}:
        return np.where(y == 1, 1.0, -1.0)
    raise TrainingError(f"labels must be boolean, 0/1 or -1/+1, got {classes}")


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    layout: tuple = DEFAULT_LAYOUT
    trained_on: str = ""
    hyper: dict = field(default_factory=dict)
    layout_version: int = LAYOUT_VERSION

    def __post_init__(self):
        n = len(self.layout)
        for name in ("weights", "feature_means", "feature_stds"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ConfigurationError(f"{name} must have length {n}, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.feature_stds <= 0):
            raise ConfigurationError("feature_stds must be positive")
        object.__setattr__(self, "layout", tuple(self.layout))

    def standardize(self, X):
        return (np.asarray(X, dtype=float) - self.feature_means) / self.feature_stds

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.layout):
            raise ConfigurationError(
                f"model expects {len(self.layout)} features {self.layout}, got {X.shape[-1]}")
        return self.standardize(X) @ self.weights + self.bias

    def to_dict(self):
        return {
            "layout_version": self.layout_version,
            "layout": list(self.layout),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "trained_on": self.trained_on,
            "hyper": dict(self.hyper),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("layout_version") != LAYOUT_VERSION:
            raise ConfigurationError(f"unsupported model layout version {doc.get('layout_version')}")
        return cls(
            weights=np.array(doc["weights"], dtype=float), bias=float(doc["bias"]),
            feature_means=np.array(doc["feature_means"], dtype=float),
            feature_stds=np.array(doc["feature_stds"], dtype=float),
            layout=tuple(doc["layout"]), trained_on=doc.get("trained_on", ""),
            hyper=dict(doc.get("hyper", {})),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def __eq__(self, other):
        if not isinstance(other, SvmModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def train_svm(X, y, C=1.0, epochs=200, seed=0, layout=None, trained_on=""):
    """Fit a linear SVM by Pegasos-style subgradient descent.

    The objective ``0.5*||w||^2 + C*sum_i max(0, 1 - y_i*(w.x_i + b))`` is
    rescaled to ``lam/2*||w||^2 + mean(hinge)`` with ``lam = 1/(C*n)``; each
    epoch visits the samples in a seeded random order with step size
    ``1/(lam*step)``. The bias is an extra coordinate of ``w`` on a constant
    feature. The returned weights average the iterates of the second half of
    training.
    """
    X, y = check_X_y(X, y, dtype=float)
    y = _to_pm1(y)
    if np.unique(y).size < 2:
        raise TrainingError("training corpus must contain both motion and static examples")
    if C <= 0 or epochs < 1:
        raise ConfigurationError("C must be positive and epochs at least 1")
    n, d = X.shape
    layout = tuple(layout) if layout is not None else tuple(f"x{i}" for i in range(d))
    if len(layout) != d:
        raise ConfigurationError(f"layout has {len(layout)} names for {d} features")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds > 1e-12, stds, 1.0)
    Z = np.hstack([(X - means) / stds, np.ones((n, 1))])
    rows = [row.tolist() for row in Z]
    labels = y.tolist()

    lam = 1.0 / (C * n)
    rng = np.random.default_rng(seed)
    w = [0.0] * (d + 1)
    avg = [0.0] * (d + 1)
    n_avg = 0
    step = 0
    half = (epochs * n) // 2
    for _ in range(epochs):
        for i in rng.permutation(n).tolist():
            step += 1
            eta = 1.0 / (lam * step)
            zi, yi = rows[i], labels[i]
            margin = yi * sum(a * b for a, b in zip(w, zi))
            shrink = 1.0 - eta * lam
            if margin < 1.0:
                g = eta * yi
                w = [shrink * wk + g * zk for wk, zk in zip(w, zi)]
            else:
                w = [shrink * wk for wk in w]
            if step > half:
                n_avg += 1
                avg = [a + (wk - a) / n_avg for a, wk in zip(avg, w)]
    avg = np.array(avg)
    return SvmModel(
        weights=avg[:d], bias=float(avg[d]), feature_means=means, feature_stds=stds,
        layout=layout, trained_on=trained_on, hyper={"C": C, "epochs": epochs, "seed": seed},
    )


class LinearSVMDetector(ClassifierMixin, BaseEstimator):
    """Linear SVM motion detector with built-in feature standardization.

    ``predict`` returns booleans (True = motion); ``decision_function`` the
    signed margin.
    """

    def __init__(self, C=1.0, epochs=200, random_state=0, layout=None):
        self.C = C
        self.epochs = epochs
        self.random_state = random_state
        self.layout = layout

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.model_ = train_svm(X, y, C=self.C, epochs=self.epochs, seed=self.random_state,
                                layout=self.layout)
        self.classes_ = np.array([False, True])
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model):
        est = cls(C=model.hyper.get("C", 1.0), epochs=model.hyper.get("epochs", 200),
                  random_state=model.hyper.get("seed", 0), layout=model.layout)
        est.model_ = model
        est.classes_ = np.array([False, True])
        est.n_features_in_ = len(model.layout)
        return est

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return self.model_.decision_function(X)

    def predict(self, X):
        return self.decision_function(X) > 0


class AoaThresholdDetector(ClassifierMixin, BaseEstimator):
    """Threshold-only AoA monitor.

    Each row of ``X`` holds the AoA changes of consecutive windows (oldest
    first); motion is declared when the last ``sustain`` changes all exceed
    ``threshold_deg``.
    """

    def __init__(self, threshold_deg=5.0, sustain=2):
        self.threshold_deg = threshold_deg
        self.sustain = sustain

    def fit(self, X, y=None):
        check_array(X, dtype=float)
        self.classes_ = np.array([False, True])
        return self

    def decision_function(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] < self.sustain:
            raise ConfigurationError(f"need {self.sustain} consecutive AoA changes per row")
        return np.min(X[:, -self.sustain:], axis=1) - self.threshold_deg

    def predict(self, X):
        return self.decision_function(X) > 0


@dataclass(frozen=True)
class DetectionEvent:
    t: int
    motion: bool
    score: float
    aoa_delta: float
    contributing: dict
    flags: tuple = ()

    def to_dict(self):
        return {"t": self.t, "motion": self.motion, "score": self.score,
                "aoa_delta": self.aoa_delta, "contributing": dict(self.contributing),
                "flags": list(self.flags)}

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc["flags"] = tuple(doc.get("flags", ()))
        doc["contributing"] = dict(doc["contributing"])
        return cls(**doc)


def detect(model, fv, prev_aoa=None):
    """Score one feature vector.

    When ``prev_aoa`` is given the AoA deltas are recomputed against it.
    Missing AoA components are imputed with the training means and flagged.
    """
    flags = list(fv.flags)
    deltas = {"aoa_delta1": fv.aoa_delta1, "aoa_delta2": fv.aoa_delta2}
    if prev_aoa is not None:
        curr = [a for a in (fv.aoa1, fv.aoa2) if a is not None]
        match = match_aoa(prev_aoa, curr)
        for k, name in enumerate(AOA_FEATURES):
            deltas[name] = match.deltas[k] if k < len(match.deltas) else None
        if match.unmatched:
            flags.append("aoa_unmatched")
    values = []
    for i, name in enumerate(model.layout):
        v = deltas[name] if name in deltas else fv.value(name)
        if v is None and name in AOA_FEATURES:
            v = float(model.feature_means[i])
            flags.append(f"imputed:{name}")
        if v is None or not np.isfinite(v):
            raise ConfigurationError(f"feature '{name}' is not finite")
        values.append(float(v))
    x = np.array(values)
    score = float(model.decision_function(x))
    known = [d for d in deltas.values() if d is not None]
    return DetectionEvent(
        t=fv.t, motion=score > 0, score=score, aoa_delta=float(max(known)) if known else 0.0,
        contributing=dict(zip(model.layout, model.standardize(x).tolist())),
        flags=tuple(dict.fromkeys(flags)),
    )


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    missed_detection_prob: float
    false_alarm_prob: float
    true_positive: int
    false_negative: int
    false_positive: int
    true_negative: int

    @property
    def total(self):
        return self.true_positive + self.false_negative + self.false_positive + self.true_negative

    def to_dict(self):
        return {
            "accuracy": self.accuracy, "missed_detection_prob": self.missed_detection_prob,
            "false_alarm_prob": self.false_alarm_prob, "true_positive": self.true_positive,
            "false_negative": self.false_negative, "false_positive": self.false_positive,
            "true_negative": self.true_negative,
        }


def detection_report(y_true, y_pred):
    """Accuracy, missed-detection and false-alarm probabilities.

    A probability conditioned on an absent class is reported as 0.
    """
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    if y_true.size == 0:
        raise PreconditionError("cannot evaluate an empty corpus")
    if y_true.shape != y_pred.shape:
        raise PreconditionError("label and prediction arrays differ in shape")
    tp = int(np.sum(y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    fp = int(np.sum(~y_true & y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    pos, neg = tp + fn, fp + tn
    return EvaluationReport(
        accuracy=(tp + tn) / y_true.size,
        missed_detection_prob=fn / pos if pos else 0.0,
        false_alarm_prob=fp / neg if neg else 0.0,
        true_positive=tp, false_negative=fn, false_positive=fp, true_negative=tn,
    )


def evaluate(model, X, y):
    """Evaluate a fitted detector (or an :class:`SvmModel`) on a labeled corpus."""
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise PreconditionError("cannot evaluate an empty corpus")
    if isinstance(model, SvmModel):
        pred = model.decision_function(X) > 0
    else:
        pred = model.predict(X)
    return detection_report(y, pred)
