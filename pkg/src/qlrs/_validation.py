import numpy as np
from sklearn.utils import check_array


def check_bits(b, size=None, name="b"):
    """Return ``b`` as a float64 vector of +/-1 entries."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {b.shape}")
    if size is not None and b.shape[0] != size:
        raise ValueError(f"{name} has length {b.shape[0]}, expected {size}")
    if not np.all(np.abs(b) == 1.0):
        raise ValueError(f"{name} entries must be -1 or +1")
    return b


def check_statistic(Y, size):
    """Validate matched-filter outputs; returns (2-D array, was_1d)."""
    Y = np.asarray(Y, dtype=np.float64)
    one_d = Y.ndim == 1
    Y = check_array(np.atleast_2d(Y), dtype=np.float64, ensure_min_samples=1)
    if Y.shape[1] != size:
        raise ValueError(f"statistic has {Y.shape[1]} entries per row, channel has {size} bits")
    return Y, one_d


def check_square(M, name):
    M = check_array(M, dtype=np.float64)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def sign(x):
    """Hard decision with sign(0) := +1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)
