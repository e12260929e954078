"""Input validation helpers used across the package."""
import numbers

import numpy as np

from .exceptions import DimensionError, DomainError


def check_resolution(N, minimum=1):
    if isinstance(N, bool) or not isinstance(N, numbers.Integral):
        raise DomainError(f"resolution must be an integer, got {N!r}")
    if N < minimum:
        raise DomainError(f"resolution must be >= {minimum}, got {N}")
    return int(N)


def check_grid_field(f, vertex_count, name="field"):
    """Return ``f`` as a float vector of length ``vertex_count``.

    A 2-D ``(N, N)`` array is accepted and flattened in row-major order,
    which matches the flat vertex index ``v1 * N + v2``.
    """
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 2 and arr.shape[0] * arr.shape[1] == vertex_count and arr.shape[0] == arr.shape[1]:
        arr = arr.reshape(-1)
    if arr.ndim != 1 or arr.shape[0] != vertex_count:
        raise DimensionError(
            f"{name} must have length {vertex_count}, got shape {np.shape(f)}"
        )
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def check_vertices(v, N):
    """Return integer vertex coordinates of shape ``(..., 2)`` reduced mod N."""
    arr = np.asarray(v)
    if arr.shape[-1:] != (2,):
        raise DimensionError(f"vertex must have trailing dimension 2, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("vertex coordinates must be integers")
        arr = arr.astype(np.int64)
    return np.mod(arr.astype(np.int64), N)


def check_points(x):
    """Return torus points of shape ``(..., 2)`` as floats."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (2,):
        raise DimensionError(f"points must have trailing dimension 2, got shape {arr.shape}")
    return arr


def check_increasing(values, name="N_list", min_length=1):
    vals = [int(v) for v in values]
    if len(vals) < min_length:
        raise DomainError(f"{name} needs at least {min_length} entries")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise DomainError(f"{name} must be strictly increasing, got {vals}")
    return vals
