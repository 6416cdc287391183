"""Synthetic beam-weighted multipath CSI.

The received CSI on subcarrier ``s`` is the superposition of ``L`` plane-wave
paths, each seen through the per-element antenna response of the beam pattern::

    h_s = sum_l  w(theta_l) * a(theta_l, f_s) * gamma[l, s]

with ``a`` the uniform-linear-array steering vector. Frames additionally carry
receiver artefacts (sampling time offset, random phase offset, fixed per-antenna
phase offsets) and circular complex Gaussian noise, so that every downstream
stage has a ground truth to be tested against.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, DomainError, PreconditionError
from .validation import check_csi_matrix, check_int, check_positive, load_mapping

SPEED_OF_LIGHT = 2.998e8
SUBCARRIER_SPACING = 312.5e3
NUM_SUBCARRIERS = 53
WINDOW = 7


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear receive array."""

    num_antennas: int = 4
    element_spacing: float = 0.0252
    carrier_freq: float = 5.745e9

    def __post_init__(self):
        check_int(self.num_antennas, "num_antennas", minimum=2)
        check_positive(self.element_spacing, "element_spacing")
        check_positive(self.carrier_freq, "carrier_freq")

    @property
    def speed_of_light(self):
        return SPEED_OF_LIGHT

    def phase_shift(self, theta_deg, freq=None):
        """Inter-element phase shift ``2*pi*D*sin(theta)*f/c`` in radians."""
        freq = self.carrier_freq if freq is None else freq
        return 2 * np.pi * self.element_spacing * np.sin(np.deg2rad(theta_deg)) * freq / SPEED_OF_LIGHT

    def steering_matrix(self, angles_deg, freq=None, num_elements=None):
        """Steering vectors for every angle as columns, shape (elements, angles).

        No domain check: used for grid scans that include the endfire points.
        """
        m = np.arange(self.num_antennas if num_elements is None else num_elements)
        phi = self.phase_shift(np.atleast_1d(np.asarray(angles_deg, dtype=float)), freq)
        return np.exp(-1j * np.outer(m, phi))

    def to_dict(self):
        return {
            "num_antennas": self.num_antennas,
            "element_spacing": self.element_spacing,
            "carrier_freq": self.carrier_freq,
        }


def steering_vector(geometry, theta, f_s=None):
    """Return the steering vector ``exp(-1j*m*phi(theta))`` for ``m = 0..M-1``.

    Parameters
    ----------
    geometry : ArrayGeometry
    theta : float
        Angle of arrival in degrees, strictly inside (-90, 90).
    f_s : float, optional
        Frequency in hertz; defaults to the carrier frequency.
    """
    theta = float(theta)
    if not -90.0 < theta < 90.0:
        raise DomainError(f"theta must lie in the open interval (-90, 90) degrees, got {theta}")
    if f_s is not None:
        check_positive(f_s, "f_s")
    return geometry.steering_matrix([theta], f_s)[:, 0]


def uniform_grid(step=0.5):
    step = check_positive(step, "grid_step")
    n = int(round(180.0 / step))
    if not np.isclose(n * step, 180.0):
        raise ConfigurationError(f"grid step {step} does not divide 180 degrees")
    return np.linspace(-90.0, 90.0, n + 1)


@dataclass(frozen=True, eq=False)
class BeamPattern:
    """Per-element complex antenna responses sampled on a uniform angle grid.

    ``responses[i, m]`` is the response of element ``m`` at ``angle_grid[i]``.
    """

    angle_grid: np.ndarray
    responses: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        grid = np.asarray(self.angle_grid, dtype=float)
        resp = np.asarray(self.responses, dtype=np.complex128)
        if grid.ndim != 1 or grid.size < 2:
            raise ConfigurationError("angle_grid must be a 1-D array with at least two points")
        steps = np.diff(grid)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0]):
            raise ConfigurationError("angle_grid must be uniform and strictly increasing")
        if grid[0] < -90.0 - 1e-9 or grid[-1] > 90.0 + 1e-9:
            raise ConfigurationError("angle_grid must lie within [-90, 90]")
        if resp.ndim != 2 or resp.shape[0] != grid.size:
            raise ConfigurationError(f"responses must have shape ({grid.size}, M), got {resp.shape}")
        mag = np.abs(resp)
        if not np.all(np.isfinite(mag)) or np.any(mag <= 0):
            raise ConfigurationError("beam responses must be finite with positive magnitude")
        object.__setattr__(self, "angle_grid", grid)
        object.__setattr__(self, "responses", resp)

    @property
    def num_antennas(self):
        return self.responses.shape[1]

    @property
    def step(self):
        return float(self.angle_grid[1] - self.angle_grid[0])

    @classmethod
    def identity(cls, num_antennas=4, step=0.5):
        grid = uniform_grid(step)
        return cls(grid, np.ones((grid.size, num_antennas), dtype=np.complex128), name="identity")

    @classmethod
    def cardioid(cls, steer_deg, gain=0.5, step=0.5):
        """Cardioid family ``gain * (1 + cos(theta - steer_m))`` per element."""
        steer = np.asarray(steer_deg, dtype=float)
        if steer.ndim != 1 or np.any(np.abs(steer) >= 90):
            raise ConfigurationError("steer_deg must be a list of angles inside (-90, 90)")
        check_positive(gain, "gain")
        grid = uniform_grid(step)
        resp = gain * (1.0 + np.cos(np.deg2rad(grid[:, None] - steer[None, :])))
        return cls(grid, resp.astype(np.complex128), name="cardioid")

    def index_of(self, theta):
        idx = int(np.argmin(np.abs(self.angle_grid - theta)))
        if abs(self.angle_grid[idx] - theta) > self.step / 2 + 1e-9:
            raise ConfigurationError(f"angle {theta} is not covered by the beam-pattern grid")
        return idx

    def response(self, theta):
        """Element responses at the grid point nearest to ``theta``."""
        return self.responses[self.index_of(theta)]


@dataclass(frozen=True, eq=False)
class Path:
    aoa_deg: float
    gamma: np.ndarray

    @classmethod
    def from_gain(cls, aoa_deg, gain, num_subcarriers=NUM_SUBCARRIERS, phase_rad=0.0,
                  delay_s=0.0, subcarrier_spacing=SUBCARRIER_SPACING):
        """Path with ``gamma[s] = gain * exp(j*phase) * exp(-j*2*pi*s*f_delta*delay)``."""
        s = np.arange(num_subcarriers)
        gamma = gain * np.exp(1j * phase_rad) * np.exp(-2j * np.pi * s * subcarrier_spacing * delay_s)
        return cls(float(aoa_deg), gamma)


@dataclass(frozen=True, eq=False)
class PathSet:
    """The ``L`` dominant paths of one frame."""

    paths: tuple
    min_separation: float = 0.5

    def __post_init__(self):
        paths = tuple(self.paths)
        if not paths:
            raise ConfigurationError("a path set needs at least one path")
        sizes = {np.asarray(p.gamma).shape for p in paths}
        if len(sizes) != 1 or len(next(iter(sizes))) != 1:
            raise ConfigurationError("all paths need 1-D gamma vectors of equal length")
        angles = np.array([p.aoa_deg for p in paths])
        if np.any(np.abs(angles) >= 90):
            raise DomainError("path angles must lie in (-90, 90) degrees")
        if len(paths) > 1:
            diffs = np.abs(angles[:, None] - angles[None, :])[np.triu_indices(len(paths), 1)]
            if np.any(diffs < self.min_separation):
                raise ConfigurationError(
                    f"path angles must differ by at least {self.min_separation} degrees")
        object.__setattr__(self, "paths", paths)

    def __len__(self):
        return len(self.paths)

    @property
    def angles(self):
        return np.array([p.aoa_deg for p in self.paths])

    @property
    def gamma(self):
        """Complex attenuations, shape (L, S)."""
        return np.stack([np.asarray(p.gamma, dtype=np.complex128) for p in self.paths])


@dataclass(eq=False)
class CsiFrame:
    """One PPDU observation: CSI matrix of shape (antennas, subcarriers)."""

    t: int
    csi: np.ndarray
    rss_db: float
    subcarrier_spacing: float = SUBCARRIER_SPACING
    meta: str = ""
    label: Optional[bool] = None

    def __post_init__(self):
        self.csi = check_csi_matrix(self.csi)
        self.rss_db = float(self.rss_db)

    @property
    def num_antennas(self):
        return self.csi.shape[0]

    @property
    def num_subcarriers(self):
        return self.csi.shape[1]

    def __eq__(self, other):
        if not isinstance(other, CsiFrame):
            return NotImplemented
        return (self.t == other.t and np.array_equal(self.csi, other.csi)
                and self.rss_db == other.rss_db
                and self.subcarrier_spacing == other.subcarrier_spacing
                and self.meta == other.meta and self.label == other.label)


def rss_from_csi(csi):
    power = float(np.mean(np.abs(csi) ** 2))
    return 10.0 * np.log10(max(power, 1e-30))


def subcarrier_frequencies(geometry, num_subcarriers, subcarrier_spacing=SUBCARRIER_SPACING):
    s = np.arange(num_subcarriers) - (num_subcarriers - 1) / 2
    return geometry.carrier_freq + s * subcarrier_spacing


def synthesize_frame(geometry, pattern, paths, noise_power=0.0, t=0, *, rng=None,
                     subcarrier_spacing=SUBCARRIER_SPACING, sto_s=0.0, phase_offset_rad=0.0,
                     antenna_phase_offsets=None, wideband=False, meta="sim", label=None):
    """Build one noisy CSI frame from a path set.

    Receiver artefacts follow the sanitizer's model: subcarrier ``s`` (0-based)
    is rotated by ``-(2*pi*s*f_delta*sto_s + phase_offset_rad)`` and antenna
    ``m`` by ``antenna_phase_offsets[m]``. With ``wideband=False`` every
    subcarrier uses the carrier frequency in the steering vector (narrowband
    array model).
    """
    if pattern is None:
        pattern = BeamPattern.identity(geometry.num_antennas)
    if pattern.num_antennas != geometry.num_antennas:
        raise ConfigurationError("beam pattern and geometry disagree on the antenna count")
    if len(paths) >= geometry.num_antennas:
        raise ConfigurationError(
            f"L={len(paths)} paths need L < M_R={geometry.num_antennas} antennas")
    noise_power = check_positive(noise_power, "noise_power", strict=False)
    gamma = paths.gamma
    num_sc = gamma.shape[1]
    if num_sc < 2:
        raise ConfigurationError("at least two subcarriers are required")

    if wideband:
        freqs = subcarrier_frequencies(geometry, num_sc, subcarrier_spacing)
        csi = np.zeros((geometry.num_antennas, num_sc), dtype=np.complex128)
        for path, g in zip(paths.paths, gamma):
            steer = geometry.steering_matrix(np.full(num_sc, path.aoa_deg), freqs)
            csi += pattern.response(path.aoa_deg)[:, None] * steer * g[None, :]
    else:
        steer = np.stack([pattern.response(p.aoa_deg) for p in paths.paths], axis=1)
        steer = steer * geometry.steering_matrix(paths.angles)
        csi = steer @ gamma

    if antenna_phase_offsets is not None:
        offsets = np.asarray(antenna_phase_offsets, dtype=float)
        if offsets.shape != (geometry.num_antennas,):
            raise ConfigurationError("antenna_phase_offsets needs one value per antenna")
        csi = csi * np.exp(1j * offsets)[:, None]
    if sto_s or phase_offset_rad:
        s = np.arange(num_sc)
        csi = csi * np.exp(-1j * (2 * np.pi * s * subcarrier_spacing * sto_s + phase_offset_rad))[None, :]
    if noise_power > 0:
        rng = np.random.default_rng(rng)
        noise = rng.standard_normal(csi.shape) + 1j * rng.standard_normal(csi.shape)
        csi = csi + np.sqrt(noise_power / 2) * noise
    return CsiFrame(t=int(t), csi=csi, rss_db=rss_from_csi(csi),
                    subcarrier_spacing=subcarrier_spacing, meta=meta, label=label)


@dataclass(frozen=True)
class PathSpec:
    aoa_deg: float
    gain: float = 1.0
    phase_rad: float = 0.0
    delay_s: float = 0.0


@dataclass(frozen=True)
class MotionSegment:
    """Frames ``start..stop`` (inclusive) carry motion.

    Affected paths drift by ``aoa_drift_deg`` per frame (scalar, or one value
    per affected path) and their gain is multiplied by ``1 + gain_jitter * n``
    with ``n`` a fresh standard complex Gaussian draw per frame.
    """

    start: int
    stop: int
    aoa_drift_deg: object = 0.0
    gain_jitter: float = 0.0
    paths: Optional[tuple] = None

    def __post_init__(self):
        check_int(self.start, "segment start", minimum=0)
        check_int(self.stop, "segment stop", minimum=0)
        if self.stop < self.start:
            raise ConfigurationError(f"segment stop {self.stop} precedes start {self.start}")
        check_positive(self.gain_jitter, "gain_jitter", strict=False)

    def covers(self, t):
        return self.start <= t <= self.stop


_SCENARIO_KEYS = {
    "geometry", "pattern", "paths", "segments", "num_subcarriers", "subcarrier_spacing",
    "noise_power", "sto_max_s", "random_phase_offset", "antenna_phase_offsets", "wideband", "meta",
}


@dataclass(frozen=True)
class Scenario:
    """Declarative description of a synthetic capture."""

    paths: tuple
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    pattern: Optional[BeamPattern] = None
    segments: tuple = ()
    num_subcarriers: int = NUM_SUBCARRIERS
    subcarrier_spacing: float = SUBCARRIER_SPACING
    noise_power: float = 0.0
    sto_max_s: float = 0.0
    random_phase_offset: bool = False
    antenna_phase_offsets: Optional[tuple] = None
    wideband: bool = False
    meta: str = "sim"

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        unknown = set(doc) - _SCENARIO_KEYS
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            geometry = ArrayGeometry(**doc.pop("geometry", {}))
            pattern = _pattern_from_spec(doc.pop("pattern", "identity"), geometry)
            paths = tuple(PathSpec(**p) for p in doc.pop("paths", ()))
            segments = []
            for seg in doc.pop("segments", ()):
                seg = dict(seg)
                if isinstance(seg.get("aoa_drift_deg"), list):
                    seg["aoa_drift_deg"] = tuple(seg["aoa_drift_deg"])
                if seg.get("paths") is not None:
                    seg["paths"] = tuple(seg["paths"])
                segments.append(MotionSegment(**seg))
            if doc.get("antenna_phase_offsets") is not None:
                doc["antenna_phase_offsets"] = tuple(doc["antenna_phase_offsets"])
            return cls(paths=paths, geometry=geometry, pattern=pattern,
                       segments=tuple(segments), **doc)
        except TypeError as exc:
            raise ConfigurationError(f"invalid scenario: {exc}") from None


def _pattern_from_spec(spec, geometry):
    if spec is None or spec == "identity":
        return BeamPattern.identity(geometry.num_antennas)
    if isinstance(spec, dict) and spec.get("type") == "cardioid":
        steer = spec.get("steer_deg")
        if steer is None or len(steer) != geometry.num_antennas:
            raise ConfigurationError("cardioid pattern needs one steer_deg entry per antenna")
        return BeamPattern.cardioid(steer, gain=spec.get("gain", 0.5))
    raise ConfigurationError(f"unknown beam pattern spec: {spec!r}")


def load_scenario(path):
    """Read a YAML/JSON scenario file; returns ``(scenario, seed, num_frames)``."""
    doc = load_mapping(path)
    seed = doc.pop("seed", 0)
    num_frames = doc.pop("num_frames", 100)
    return Scenario.from_dict(doc), seed, num_frames


def synthesize_sequence(scenario, num_frames, seed, window=WINDOW):
    """Generate ``num_frames`` frames and the per-frame motion labels.

    Returns
    -------
    frames : list of CsiFrame
    labels : ndarray of bool, True on frames covered by a motion segment
    """
    if not scenario.paths:
        raise ConfigurationError("scenario has no paths")
    check_int(num_frames, "num_frames")
    if num_frames < window:
        raise PreconditionError(f"num_frames={num_frames} is shorter than the window T={window}")
    geometry = scenario.geometry
    pattern = scenario.pattern or BeamPattern.identity(geometry.num_antennas)
    n_paths = len(scenario.paths)
    if n_paths >= geometry.num_antennas:
        raise ConfigurationError(f"L={n_paths} paths need L < M_R={geometry.num_antennas}")
    rng = np.random.default_rng(seed)

    base_gamma = np.stack([
        Path.from_gain(p.aoa_deg, p.gain, scenario.num_subcarriers, p.phase_rad, p.delay_s,
                       scenario.subcarrier_spacing).gamma
        for p in scenario.paths
    ])
    base_angles = np.array([p.aoa_deg for p in scenario.paths], dtype=float)
    drift_total = np.zeros(n_paths)
    frames, labels = [], np.zeros(num_frames, dtype=bool)

    for t in range(num_frames):
        gamma = base_gamma.copy()
        for seg in scenario.segments:
            if not seg.covers(t):
                continue
            labels[t] = True
            affected = range(n_paths) if seg.paths is None else seg.paths
            drift = np.broadcast_to(np.asarray(seg.aoa_drift_deg, dtype=float), (len(affected),))
            for k, ell in enumerate(affected):
                drift_total[ell] += drift[k]
            if seg.gain_jitter > 0:
                jitter = rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)
                scale = np.ones(n_paths, dtype=np.complex128)
                for ell in affected:
                    scale[ell] = 1.0 + seg.gain_jitter * jitter[ell] / np.sqrt(2)
                gamma = gamma * scale[:, None]
        angles = np.clip(base_angles + drift_total, -89.0, 89.0)
        pathset = PathSet(tuple(Path(a, g) for a, g in zip(angles, gamma)), min_separation=0.0)
        sto = rng.uniform(0.0, scenario.sto_max_s) if scenario.sto_max_s > 0 else 0.0
        xi = rng.uniform(-np.pi, np.pi) if scenario.random_phase_offset else 0.0
        frames.append(synthesize_frame(
            geometry, pattern, pathset, scenario.noise_power, t, rng=rng,
            subcarrier_spacing=scenario.subcarrier_spacing, sto_s=sto, phase_offset_rad=xi,
            antenna_phase_offsets=scenario.antenna_phase_offsets, wideband=scenario.wideband,
            meta=scenario.meta, label=bool(labels[t]),
        ))
    return frames, labels
