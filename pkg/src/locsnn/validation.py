"""Input validation helpers shared by the estimators and the core API."""

import numpy as np


def check_spike_grid(grid, n_taxels=None, n_steps=None):
    """Coerce ``grid`` to a binary uint8 array of shape (N, T).

    Args:
        grid: array-like of 0/1 values.
        n_taxels: required N, or None to accept any.
        n_steps: required T, or None to accept any.

    Returns:
        np.ndarray of dtype uint8.
    """
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise ValueError(f"spike grid must be 2-d, got shape {arr.shape}")
    if n_taxels is not None and arr.shape[0] != n_taxels:
        raise ValueError(f"expected {n_taxels} taxels, got {arr.shape[0]}")
    if n_steps is not None and arr.shape[1] != n_steps:
        raise ValueError(f"expected {n_steps} time bins, got {arr.shape[1]}")
    if arr.dtype != np.uint8:
        vals = np.unique(arr)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("spike grid must contain only 0 and 1")
        arr = arr.astype(np.uint8)
    return arr


def as_batch(X):
    """Stack input into a (B, N, T) uint8 batch.

    Accepts a single (N, T) grid, a (B, N, T) array, or a sequence of
    grids / objects with a ``spikes`` attribute (event streams).
    """
    if hasattr(X, "spikes"):
        X = [X.spikes]
    arr = np.asarray(X) if not isinstance(X, (list, tuple)) else None
    if arr is not None and arr.ndim == 2:
        X = arr[None, ...]
    elif arr is not None and arr.ndim == 3:
        X = arr
    else:
        grids = [x.spikes if hasattr(x, "spikes") else np.asarray(x) for x in X]
        shapes = {g.shape for g in grids}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent grid shapes in batch: {sorted(shapes)}")
        X = np.stack(grids)
    if X.ndim != 3:
        raise ValueError(f"batch must have shape (B, N, T), got {X.shape}")
    out = np.empty(X.shape, dtype=np.uint8)
    for b in range(X.shape[0]):
        out[b] = check_spike_grid(X[b])
    return out


def check_labels(y, n_samples=None):
    """Coerce labels to a 1-d int array and verify the sample count."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-d, got shape {arr.shape}")
    if n_samples is not None and arr.shape[0] != n_samples:
        raise ValueError(f"expected {n_samples} labels, got {arr.shape[0]}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == arr.astype(np.int64)):
            raise ValueError("labels must be integers")
    return arr.astype(np.int64)
