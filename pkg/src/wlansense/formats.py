"""Newline-delimited JSON record formats.

Frame record (one PPDU per line)::

    {"t": int, "rss_db": float, "csi": [[[re, im], ...S], ...M],
     "label": bool | null, "meta": str, "f_delta_hz": float}

Sanitized frames add ``tau_hat_s``, ``xi_hat_rad`` and ``phase_rad`` (the
unwrapped sanitized phase, M x S). ``label``, ``meta`` and ``f_delta_hz`` are
optional. Floats are written with full double precision (``repr``), complex
numbers as ``[re, im]`` pairs.
"""

import json

import numpy as np

from .aoa import AoaEstimate
from .channel import SUBCARRIER_SPACING, CsiFrame
from .detector import DetectionEvent, SvmModel
from .exceptions import DataError, ParseError, SchemaError
from .features import FeatureVector
from .sanitize import SanitizedFrame

FRAME_FIELDS = {"t", "rss_db", "csi", "label", "meta", "f_delta_hz"}
SANITIZED_FIELDS = FRAME_FIELDS | {"tau_hat_s", "xi_hat_rad", "phase_rad"}


def dumps(doc):
    return json.dumps(doc, allow_nan=False, separators=(",", ":"))


def _complex_to_json(mat):
    return np.stack([mat.real, mat.imag], axis=-1).tolist()


def frame_to_dict(frame):
    if isinstance(frame, SanitizedFrame):
        doc = {"t": frame.t, "rss_db": frame.rss_db, "csi": _complex_to_json(frame.csi_clean)}
    else:
        doc = {"t": frame.t, "rss_db": frame.rss_db, "csi": _complex_to_json(frame.csi)}
    doc["label"] = frame.label
    doc["meta"] = frame.meta
    doc["f_delta_hz"] = frame.subcarrier_spacing
    if isinstance(frame, SanitizedFrame):
        doc["tau_hat_s"] = frame.tau_hat
        doc["xi_hat_rad"] = frame.xi_hat
        doc["phase_rad"] = frame.phase.tolist()
    return doc


def _number(doc, key, line, required=True, default=None):
    if key not in doc:
        if required:
            raise SchemaError("missing", field=key, line=line)
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected a number, got {type(value).__name__}", field=key, line=line)
    if not np.isfinite(value):
        raise SchemaError("not finite", field=key, line=line)
    return value


def _parse_csi(value, line, shape=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("expected nested arrays of [re, im] pairs", field="csi", line=line) from None
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise SchemaError(f"expected shape (M, S, 2), got {arr.shape}", field="csi", line=line)
    if arr.shape[1] < 2:
        raise SchemaError("at least two subcarriers are required", field="csi", line=line)
    if shape is not None and arr.shape[:2] != tuple(shape):
        raise SchemaError(
            f"expected {shape[0]} antennas x {shape[1]} subcarriers, got {arr.shape[0]} x {arr.shape[1]}",
            field="csi", line=line)
    if not np.all(np.isfinite(arr)):
        raise SchemaError("non-finite entries", field="csi", line=line)
    return arr[..., 0] + 1j * arr[..., 1]


def frame_from_dict(doc, line=None, shape=None):
    """Validate one frame record; returns a CsiFrame or, with STO fields, a SanitizedFrame."""
    if not isinstance(doc, dict):
        raise SchemaError("record must be a JSON object", line=line)
    sanitized = "tau_hat_s" in doc
    allowed = SANITIZED_FIELDS if sanitized else FRAME_FIELDS
    extra = set(doc) - allowed
    if extra:
        raise SchemaError("unknown field", field=sorted(extra)[0], line=line)
    t = doc.get("t")
    if isinstance(t, bool) or not isinstance(t, int):
        raise SchemaError("expected an integer frame index", field="t", line=line)
    rss = _number(doc, "rss_db", line)
    if "csi" not in doc:
        raise SchemaError("missing", field="csi", line=line)
    csi = _parse_csi(doc["csi"], line, shape)
    label = doc.get("label")
    if label is not None and not isinstance(label, bool):
        raise SchemaError("expected a boolean or null", field="label", line=line)
    meta = doc.get("meta", "")
    if not isinstance(meta, str):
        raise SchemaError("expected a string", field="meta", line=line)
    f_delta = _number(doc, "f_delta_hz", line, required=False, default=SUBCARRIER_SPACING)
    if not sanitized:
        return CsiFrame(t=t, csi=csi, rss_db=rss, subcarrier_spacing=f_delta, meta=meta, label=label)
    tau = _number(doc, "tau_hat_s", line)
    xi = _number(doc, "xi_hat_rad", line)
    if "phase_rad" in doc:
        try:
            phase = np.asarray(doc["phase_rad"], dtype=float)
        except (TypeError, ValueError):
            raise SchemaError("expected a numeric matrix", field="phase_rad", line=line) from None
        if phase.shape != csi.shape or not np.all(np.isfinite(phase)):
            raise SchemaError("must be a finite M x S matrix", field="phase_rad", line=line)
    else:
        phase = np.angle(csi)
    return SanitizedFrame(t=t, csi_clean=csi, phase=phase, tau_hat=tau, xi_hat=xi, rss_db=rss,
                          subcarrier_spacing=f_delta, meta=meta, label=label)


def iter_json_lines(lines):
    """Yield ``(line_number, object)`` for every non-blank line."""
    for number, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        if not raw.strip():
            continue
        try:
            yield number, json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", line=number) from None


def parse_frames(lines, num_antennas=None, num_subcarriers=None):
    """Lazily parse frame records, validating that every frame has the same shape.

    The expected shape comes from the arguments, or from the first frame.
    Errors carry the offending line number; earlier frames have already been
    yielded by then.
    """
    shape = None
    if num_antennas is not None and num_subcarriers is not None:
        shape = (num_antennas, num_subcarriers)
    for number, doc in iter_json_lines(lines):
        if shape is None and num_antennas is not None and isinstance(doc, dict):
            try:
                shape = (num_antennas, len(doc["csi"][0]))
            except (KeyError, IndexError, TypeError):
                pass
        frame = frame_from_dict(doc, line=number, shape=shape)
        if shape is None:
            shape = frame.csi_clean.shape if isinstance(frame, SanitizedFrame) else frame.csi.shape
        yield frame


def _parse_with(lines, builder, kind):
    for number, doc in iter_json_lines(lines):
        try:
            yield builder(doc)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise SchemaError(f"invalid {kind} record: {exc}", line=number) from None


def aoa_from_dict(doc):
    return AoaEstimate(tuple(float(a) for a in doc["angles_deg"]),
                       tuple(float(p) for p in doc["peaks"]), t=int(doc["t"]),
                       underresolved=bool(doc["underresolved"]))


def parse_aoa(lines):
    return _parse_with(lines, aoa_from_dict, "AoA")


def parse_features(lines):
    return _parse_with(lines, FeatureVector.from_dict, "feature")


def parse_events(lines):
    return _parse_with(lines, DetectionEvent.from_dict, "event")


def to_record(obj):
    if isinstance(obj, (CsiFrame, SanitizedFrame)):
        return frame_to_dict(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def write_jsonl(records, fh):
    """Write one compact JSON object per line; returns the number written."""
    count = 0
    for rec in records:
        fh.write(dumps(to_record(rec)) + "\n")
        count += 1
    return count


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(model.to_json() + "\n")


def load_model(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"model file is not valid JSON ({exc.msg})", line=exc.lineno) from None
    try:
        return SvmModel.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"invalid model document: {exc}") from None
