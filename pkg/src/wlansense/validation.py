"""Input validation helpers shared by the estimators and the functional API."""

import re

import numpy as np
import yaml

from .exceptions import ConfigurationError, DataError, PreconditionError


def check_csi_matrix(csi, name="csi", min_subcarriers=2):
    """Return ``csi`` as a finite complex (antennas, subcarriers) array."""
    arr = np.asarray(csi)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-D (antennas, subcarriers), got shape {arr.shape}")
    if arr.shape[1] < min_subcarriers:
        raise DataError(f"{name} needs at least {min_subcarriers} subcarriers, got {arr.shape[1]}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def check_finite(values, name="values", ndim=None):
    arr = np.asarray(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def check_stack(window, name="window"):
    """Stack a window of frames (objects or arrays) into a (T, M, S) complex array.

    Frame objects contribute their ``csi_clean`` attribute if present, else ``csi``.
    """
    if isinstance(window, np.ndarray):
        arr = window
        if arr.ndim == 2:
            arr = arr[None]
    else:
        mats = []
        for item in window:
            mat = getattr(item, "csi_clean", None)
            if mat is None:
                mat = getattr(item, "csi", item)
            mats.append(np.asarray(mat))
        if not mats:
            raise PreconditionError(f"{name} is empty")
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise DataError(f"{name} frames differ in shape: {sorted(shapes)}")
        arr = np.stack(mats)
    if arr.ndim != 3 or arr.shape[0] == 0:
        raise DataError(f"{name} must have shape (frames, antennas, subcarriers), got {arr.shape}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name, strict=True):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a number, got {value!r}") from None
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ConfigurationError(f"{name} must be {bound}, got {value}")
    return value


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads "1e-6" as a string; accept exponents without a decimal point.
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?(?:[eE][-+]?[0-9]+)?
                |[-+]?\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                |[-+]?\.(?:inf|Inf|INF)
                |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def load_mapping(path):
    """Load a YAML (or JSON) key-value document; an empty file gives ``{}``."""
    with open(path) as fh:
        doc = yaml.load(fh, Loader=_Loader)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path} must hold a key-value mapping")
    return doc
