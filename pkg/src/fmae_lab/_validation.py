"""Input validation helpers shared by the estimators and functional API."""
import hashlib

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ShapeMismatch


def check_signal(x, name="x"):
    """Return ``x`` as a finite, non-empty 1-D float64 array."""
    arr = check_array(
        np.asarray(x, dtype=np.float64).reshape(1, -1),
        dtype=np.float64,
        ensure_all_finite=True,
        input_name=name,
    )
    return arr[0]


def check_signal_batch(X, name="X"):
    """Validate a batch of equal-length signals, shape (n_signals, n_samples)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return check_array(X, dtype=np.float64, ensure_all_finite=True, input_name=name)


def check_matrix(m, name="matrix", ndim=2):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != ndim:
        raise ShapeMismatch(f"{name} must be {ndim}-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


def check_same_shape(a, b, names=("target", "prediction")):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")


def array_digest(*arrays, extra=b""):
    """Hex sha256 over the raw bytes of ``arrays`` (float64, C order)."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    h.update(extra)
    return h.hexdigest()


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
