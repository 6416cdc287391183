"""Synthetic train/validate experiments and their report tables.

A *setup* is one simulated deployment: a fixed path geometry, beam pattern
and hardware offsets. Each labeled example is an *episode* of ``2T + 1``
frames (previous window, current window and one extra frame for the phase
variance ratio) in which the subject either moves for the whole episode or
is absent. Per-episode jitter of the path angles and phases keeps episodes
independent; everything is derived from integer seeds so reports are
reproducible byte for byte.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (
    ArrayGeometry, MotionSegment, PathSpec, Scenario, _pattern_from_spec, synthesize_sequence,
)
from .config import PipelineConfig
from .detector import detection_report, train_svm
from .exceptions import ConfigurationError
from .features import DEFAULT_LAYOUT, FEATURE_NAMES, feature_matrix
from .pipeline import episode_features, warmup_offsets
from .validation import check_int, load_mapping

SPLITS = {"train": 0, "test": 1, "calibration": 2}


@dataclass(frozen=True)
class SetupSpec:
    """One simulated deployment.

    Motion episodes drift the paths listed in ``drift_paths`` (all when None)
    by a per-frame amount drawn uniformly from ``drift_deg`` with a random
    sign, and jitter their complex gains by ``gain_jitter``.
    """

    name: str
    paths: tuple
    pattern: object = "identity"
    noise_power: float = 1e-6
    drift_deg: tuple = (0.3, 1.0)
    drift_paths: Optional[tuple] = None
    gain_jitter: float = 0.05
    aoa_jitter_deg: float = 4.0
    sto_max_s: float = 100e-9
    antenna_phase_offsets: Optional[tuple] = None

    def __post_init__(self):
        if not self.name or "+" in self.name:
            raise ConfigurationError(f"setup name must be non-empty and free of '+', got {self.name!r}")
        paths = tuple(p if isinstance(p, PathSpec) else PathSpec(**p) for p in self.paths)
        if not paths:
            raise ConfigurationError(f"setup {self.name} has no paths")
        object.__setattr__(self, "paths", paths)
        lo, hi = (float(v) for v in self.drift_deg)
        if not 0 <= lo <= hi:
            raise ConfigurationError("drift_deg must be an increasing pair of non-negative numbers")
        object.__setattr__(self, "drift_deg", (lo, hi))
        for name in ("drift_paths", "antenna_phase_offsets"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))
        _pattern_from_spec(self.pattern, ArrayGeometry())

    def scenario(self, rng, motion, num_frames):
        """Draw one episode's scenario."""
        jitter = rng.uniform(-self.aoa_jitter_deg, self.aoa_jitter_deg, len(self.paths))
        phases = rng.uniform(-np.pi, np.pi, len(self.paths))
        paths = tuple(
            PathSpec(float(np.clip(p.aoa_deg + j, -85.0, 85.0)), p.gain, float(ph), p.delay_s)
            for p, j, ph in zip(self.paths, jitter, phases)
        )
        segments = ()
        if motion:
            moving = tuple(range(len(paths))) if self.drift_paths is None else self.drift_paths
            lo, hi = self.drift_deg
            drift = rng.uniform(lo, hi, len(moving)) * rng.choice([-1.0, 1.0], len(moving))
            segments = (MotionSegment(0, num_frames - 1, tuple(float(d) for d in drift),
                                      self.gain_jitter, moving),)
        return Scenario(
            paths=paths, pattern=_pattern_from_spec(self.pattern, ArrayGeometry()),
            segments=segments, noise_power=self.noise_power, sto_max_s=self.sto_max_s,
            random_phase_offset=True, antenna_phase_offsets=self.antenna_phase_offsets,
            meta=self.name,
        )

    def to_dict(self):
        return {
            "name": self.name,
            "paths": [{"aoa_deg": p.aoa_deg, "gain": p.gain, "phase_rad": p.phase_rad,
                       "delay_s": p.delay_s} for p in self.paths],
            "pattern": self.pattern, "noise_power": self.noise_power,
            "drift_deg": list(self.drift_deg),
            "drift_paths": None if self.drift_paths is None else list(self.drift_paths),
            "gain_jitter": self.gain_jitter, "aoa_jitter_deg": self.aoa_jitter_deg,
            "sto_max_s": self.sto_max_s,
            "antenna_phase_offsets": (None if self.antenna_phase_offsets is None
                                      else list(self.antenna_phase_offsets)),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(f"invalid setup: {exc}") from None


# Two deployments with different dominant angles, reflection strengths and
# radiation patterns. In S1 both paths move visibly; in S2 only the weaker
# reflection moves, more slowly, under a steered cardioid pattern.
S1 = SetupSpec(
    name="S1",
    paths=(PathSpec(20.0, 0.01, 0.0, 0.0), PathSpec(-35.0, 0.006, 0.0, 60e-9)),
    noise_power=1e-6, drift_deg=(0.3, 1.0), gain_jitter=0.05,
    antenna_phase_offsets=(0.0, 0.4, -0.2, 1.1),
)
S2 = SetupSpec(
    name="S2",
    paths=(PathSpec(-10.0, 0.01, 0.0, 0.0), PathSpec(45.0, 0.008, 0.0, 80e-9)),
    pattern={"type": "cardioid", "steer_deg": [-30.0, -10.0, 10.0, 30.0], "gain": 0.5},
    noise_power=4e-6, drift_deg=(0.1, 0.4), drift_paths=(1,), gain_jitter=0.15,
    antenna_phase_offsets=(0.0, -0.7, 0.3, 0.9),
)
DEFAULT_SETUPS = (S1, S2)


def episode_seed(seed, setup_index, split, index):
    """Independent 32-bit seed for one episode of one corpus."""
    return int(np.random.SeedSequence([seed, setup_index, SPLITS[split], index]).generate_state(1)[0])


def make_episode(setup, motion, seed, window=7):
    """Frames of one labeled episode (``2 * window + 1`` frames)."""
    rng = np.random.default_rng(seed)
    num_frames = 2 * window + 1
    scenario = setup.scenario(rng, motion, num_frames)
    frames, _ = synthesize_sequence(scenario, num_frames, int(rng.integers(2 ** 32)), window=window)
    return frames


def make_corpus(setup, num_windows, seed, split="train", setup_index=0, window=7):
    """Balanced labeled episodes: odd indices carry motion."""
    check_int(num_windows, "num_windows", minimum=2)
    episodes = []
    labels = np.zeros(num_windows, dtype=bool)
    for i in range(num_windows):
        labels[i] = i % 2 == 1
        episodes.append(make_episode(setup, labels[i], episode_seed(seed, setup_index, split, i), window))
    return episodes, labels


def calibrate_setup(setup, seed=0, window=7, warmup_windows=1):
    """Antenna phase offsets from a static line-of-sight capture at broadside."""
    scene = Scenario(
        paths=(PathSpec(0.0, setup.paths[0].gain),),
        pattern=_pattern_from_spec(setup.pattern, ArrayGeometry()),
        noise_power=setup.noise_power, antenna_phase_offsets=setup.antenna_phase_offsets,
        meta=f"{setup.name}-calibration",
    )
    frames, _ = synthesize_sequence(scene, window * warmup_windows,
                                    episode_seed(seed, 0, "calibration", 0), window=window)
    return warmup_offsets(frames, window)


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything that determines the two report tables."""

    setups: tuple = DEFAULT_SETUPS
    features: tuple = FEATURE_NAMES
    layout: tuple = DEFAULT_LAYOUT
    comparison_setup: Optional[str] = None
    train_windows: int = 400
    test_windows: int = 600
    seeds: tuple = (0,)
    window: int = 7
    C: float = 1.0
    epochs: int = 100
    out_dir: Optional[str] = None

    def __post_init__(self):
        setups = tuple(s if isinstance(s, SetupSpec) else SetupSpec.from_dict(s) for s in self.setups)
        names = [s.name for s in setups]
        if len(setups) < 2 or len(set(names)) != len(names):
            raise ConfigurationError("a plan needs at least two distinctly named setups")
        object.__setattr__(self, "setups", setups)
        for name in ("features", "layout"):
            value = tuple(getattr(self, name))
            bad = [f for f in value if f not in FEATURE_NAMES]
            if bad or not value:
                raise ConfigurationError(f"unknown features in {name}: {bad}")
            object.__setattr__(self, name, value)
        if self.comparison_setup is not None and self.comparison_setup not in names:
            raise ConfigurationError(f"comparison_setup {self.comparison_setup!r} is not a setup name")
        check_int(self.train_windows, "train_windows", minimum=2)
        check_int(self.test_windows, "test_windows", minimum=2)
        check_int(self.window, "window", minimum=2)
        check_int(self.epochs, "epochs", minimum=1)
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigurationError("a plan needs at least one seed")
        object.__setattr__(self, "seeds", seeds)

    @property
    def config(self):
        return PipelineConfig(window=self.window, warmup_windows=0, feature_layout=self.layout)

    def setup(self, name):
        for s in self.setups:
            if s.name == name:
                return s
        raise ConfigurationError(f"unknown setup {name!r}")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc or {})
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(f"invalid experiment plan: {exc}") from None

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(load_mapping(path))

    def to_dict(self):
        return {
            "setups": [s.to_dict() for s in self.setups], "features": list(self.features),
            "layout": list(self.layout), "comparison_setup": self.comparison_setup,
            "train_windows": self.train_windows, "test_windows": self.test_windows,
            "seeds": list(self.seeds), "window": self.window, "C": self.C,
            "epochs": self.epochs, "out_dir": self.out_dir,
        }


@dataclass
class FeatureCache:
    """Feature vectors per (setup, seed, split); corpora are generated once."""

    plan: ExperimentPlan
    _store: dict = field(default_factory=dict)

    def vectors(self, setup_name, seed, split):
        key = (setup_name, seed, split)
        if key not in self._store:
            plan = self.plan
            index = [s.name for s in plan.setups].index(setup_name)
            setup = plan.setups[index]
            n = plan.train_windows if split == "train" else plan.test_windows
            offsets = calibrate_setup(setup, seed, plan.window)
            episodes, labels = make_corpus(setup, n, seed, split, index, plan.window)
            vectors = [episode_features(ep, plan.config, offsets) for ep in episodes]
            assert [v.label for v in vectors] == labels.tolist()
            self._store[key] = vectors
        return self._store[key]


def _design(vectors, layout, fill=None):
    X, y = feature_matrix(vectors, layout)
    if fill is None:
        fill = np.nanmean(X, axis=0) if X.size else np.zeros(len(layout))
        fill = np.where(np.isfinite(fill), fill, 0.0)
    X = np.where(np.isnan(X), fill[None, :], X)
    return X, y, fill


def _fit_and_score(plan, train_vectors, test_vectors, layout, seed, trained_on):
    Xtr, ytr, fill = _design(train_vectors, layout)
    Xte, yte, _ = _design(test_vectors, layout, fill)
    model = train_svm(Xtr, ytr, C=plan.C, epochs=plan.epochs, seed=seed, layout=layout,
                      trained_on=trained_on)
    return detection_report(yte, model.decision_function(Xte) > 0)


def _pooled_row(reports):
    tp = sum(r.true_positive for r in reports)
    fn = sum(r.false_negative for r in reports)
    fp = sum(r.false_positive for r in reports)
    tn = sum(r.true_negative for r in reports)
    total = tp + fn + fp + tn
    return {
        "accuracy": (tp + tn) / total,
        "missed_detection_prob": fn / (tp + fn) if tp + fn else 0.0,
        "false_alarm_prob": fp / (fp + tn) if fp + tn else 0.0,
        "true_positive": tp, "false_negative": fn, "false_positive": fp, "true_negative": tn,
        "windows": total,
        "accuracy_by_seed": [r.accuracy for r in reports],
    }


def run_feature_comparison(plan, cache=None):
    """Single-feature detector accuracy on one setup (matched train/test).

    Returns a dict with the setup name and one row per feature; counts and
    probabilities are pooled over the plan's seeds.
    """
    cache = cache or FeatureCache(plan)
    name = plan.comparison_setup or plan.setups[0].name
    rows = []
    for feature in plan.features:
        reports = [
            _fit_and_score(plan, cache.vectors(name, seed, "train"), cache.vectors(name, seed, "test"),
                           (feature,), seed, name)
            for seed in plan.seeds
        ]
        rows.append({"feature": feature, **_pooled_row(reports)})
    return {"setup": name, "seeds": list(plan.seeds), "rows": rows}


def run_cross_setup_matrix(plan, cache=None):
    """Train on each setup and on all setups pooled; validate on every setup.

    Validation always uses held-out test corpora, so the matched cells are
    the diagonal of the matrix.
    """
    cache = cache or FeatureCache(plan)
    names = [s.name for s in plan.setups]
    sources = [(n,) for n in names] + [tuple(names)]
    rows = []
    for source in sources:
        trained_on = "+".join(source)
        for target in names:
            reports = []
            for seed in plan.seeds:
                train = [v for n in source for v in cache.vectors(n, seed, "train")]
                reports.append(_fit_and_score(plan, train, cache.vectors(target, seed, "test"),
                                              plan.layout, seed, trained_on))
            kind = "pooled" if len(source) > 1 else ("matched" if source == (target,) else "cross")
            rows.append({"train": trained_on, "validate": target, "kind": kind, **_pooled_row(reports)})
    return {"layout": list(plan.layout), "seeds": list(plan.seeds), "rows": rows}


def check_orderings(table1, table2, margin_pp=10.0, tolerance_pp=1.0):
    """Qualitative orderings the tables are expected to show; returns a dict of booleans."""
    acc1 = {r["feature"]: r["accuracy"] for r in table1["rows"]}
    out = {}
    if "rss_mean" in acc1:
        for f in ("aoa_delta1", "aoa_delta2"):
            if f in acc1:
                out[f"{f}_beats_rss_mean"] = acc1[f] - acc1["rss_mean"] >= margin_pp / 100
    cells = {(r["train"], r["validate"]): r["accuracy"] for r in table2["rows"]}
    names = sorted({r["validate"] for r in table2["rows"]})
    pooled = next(r["train"] for r in table2["rows"] if r["kind"] == "pooled")
    for target in names:
        cross = [cells[(src, target)] for src in names if src != target]
        out[f"matched_{target}_ge_cross"] = all(cells[(target, target)] >= c for c in cross)
        out[f"pooled_{target}_ge_cross"] = all(
            cells[(pooled, target)] >= c - tolerance_pp / 100 for c in cross)
    return out


def _fmt(value):
    return f"{value:.4f}"


def format_table1(table):
    header = f"{'feature':<18} {'accuracy':>9} {'missed':>9} {'false_al':>9} {'windows':>8}"
    lines = [f"single-feature detectors, setup {table['setup']}, seeds {table['seeds']}", header,
             "-" * len(header)]
    for r in table["rows"]:
        lines.append(f"{r['feature']:<18} {_fmt(r['accuracy']):>9} {_fmt(r['missed_detection_prob']):>9} "
                     f"{_fmt(r['false_alarm_prob']):>9} {r['windows']:>8}")
    return "\n".join(lines) + "\n"


def format_table2(table):
    header = (f"{'train':<10} {'validate':<9} {'kind':<8} {'accuracy':>9} {'missed':>9} "
              f"{'false_al':>9} {'windows':>8}")
    lines = [f"train/validate matrix, layout {','.join(table['layout'])}, seeds {table['seeds']}",
             header, "-" * len(header)]
    for r in table["rows"]:
        lines.append(f"{r['train']:<10} {r['validate']:<9} {r['kind']:<8} {_fmt(r['accuracy']):>9} "
                     f"{_fmt(r['missed_detection_prob']):>9} {_fmt(r['false_alarm_prob']):>9} "
                     f"{r['windows']:>8}")
    return "\n".join(lines) + "\n"


def write_reports(out_dir, table1=None, table2=None):
    """Write ``table1``/``table2`` as ``.json`` and aligned ``.txt``; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for stem, table, fmt in (("table1", table1, format_table1), ("table2", table2, format_table2)):
        if table is None:
            continue
        path = os.path.join(out_dir, stem)
        with open(path + ".json", "w") as fh:
            fh.write(json.dumps(table, sort_keys=True, indent=2, allow_nan=False) + "\n")
        with open(path + ".txt", "w") as fh:
            fh.write(fmt(table))
        written += [path + ".json", path + ".txt"]
    return written


def run_suite(plan, out_dir=None):
    """Both tables from one shared feature cache; writes reports when a directory is given."""
    cache = FeatureCache(plan)
    table1 = run_feature_comparison(plan, cache)
    table2 = run_cross_setup_matrix(plan, cache)
    out_dir = out_dir or plan.out_dir
    if out_dir:
        write_reports(out_dir, table1, table2)
    return table1, table2
