"""Snapshot POD of output-function data.

Snapshots are standardized per function (spatial mean removed, divided by
the population spatial standard deviation), the covariance surrogate
T = (1/N) Vs^T Vs is eigen-decomposed, and the modes with the largest
eigenvalues are kept. The raw (unstandardized) pointwise mean of the
training outputs is carried alongside as the mean function phi0: the
standard POD trunk adds it to predictions, the modified POD trunk keeps
it as an extra basis column.

Mode signs are normalized (first nonzero entry positive) so results do
not depend on the eigensolver's sign choices.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

# Relative threshold below which a snapshot's spatial stddev counts as zero.
_DEGENERATE_TOL = 1e-12


class PODBasis:
    """Mean function, orthonormal spatial modes, and their eigenvalues,
    all sampled on the output locations Y."""

    def __init__(self, mean_function, modes, eigenvalues, y_locations=None):
        self.mean_function = np.ascontiguousarray(mean_function, dtype=np.float64)
        self.modes = np.ascontiguousarray(modes, dtype=np.float64)
        self.eigenvalues = np.ascontiguousarray(eigenvalues, dtype=np.float64)
        self.y_locations = (
            None if y_locations is None
            else np.ascontiguousarray(y_locations, dtype=np.float64)
        )
        if self.modes.ndim != 2 or self.modes.shape[0] != self.mean_function.shape[0]:
            raise DataError("POD modes and mean function must share the location axis")
        if self.eigenvalues.shape[0] != self.modes.shape[1]:
            raise DataError("one eigenvalue per mode required")

    @property
    def n_locations(self):
        return self.modes.shape[0]

    @property
    def n_modes(self):
        return self.modes.shape[1]


def compute_pod(v_snapshots: np.ndarray, p: int, y_locations=None) -> PODBasis:
    """POD basis with ``p`` modes from an (N, N_y) snapshot matrix.

    ``p`` modes cover both trunk flavors: the standard trunk uses the
    first p columns, the modified trunk uses phi0 plus the first p-1.
    Raises DataError for a constant snapshot (zero spatial stddev).
    """
    v = np.asarray(v_snapshots, dtype=np.float64)
    if v.ndim != 2:
        raise DataError(f"snapshot matrix must be 2-d, got shape {v.shape}")
    n, n_y = v.shape
    if n < 2:
        raise DataError("need at least 2 snapshots")
    p = int(p)
    if p < 1 or p > min(n, n_y):
        raise ValueError(f"p={p} out of range [1, {min(n, n_y)}]")

    mu = v.mean(axis=1)
    sigma = v.std(axis=1)  # population convention (divide by N_y)
    floor = _DEGENERATE_TOL * np.maximum(1.0, np.abs(v).max(axis=1))
    degenerate = sigma <= floor
    if np.any(degenerate):
        i = int(np.flatnonzero(degenerate)[0])
        raise DataError(f"degenerate snapshot {i}: zero spatial standard deviation")

    v_std = (v - mu[:, None]) / sigma[:, None]
    t = v_std.T @ v_std / n
    eigvals, eigvecs = np.linalg.eigh(t)  # ascending
    order = np.argsort(eigvals)[::-1][:p]
    eigvals = np.maximum(eigvals[order], 0.0)
    modes = eigvecs[:, order]
    modes = _fix_signs(modes)
    phi0 = v.mean(axis=0)
    return PODBasis(phi0, modes, eigvals, y_locations)


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    modes = modes.copy()
    for j in range(modes.shape[1]):
        col = modes[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0.0:
            modes[:, j] = -col
    return modes


def standardize_snapshots(v_snapshots: np.ndarray) -> np.ndarray:
    """Per-snapshot standardization used by compute_pod, exposed for tests."""
    v = np.asarray(v_snapshots, dtype=np.float64)
    mu = v.mean(axis=1)
    sigma = v.std(axis=1)
    return (v - mu[:, None]) / sigma[:, None]


def trunk_matrix(basis: PODBasis, p: int, modified: bool):
    """Trunk columns over all of Y, scaled by 1/p, plus the additive
    offset vector (None for the modified flavor, which folds phi0 into
    the columns instead)."""
    p = int(p)
    if modified:
        if p - 1 > basis.n_modes:
            raise ValueError(f"basis has {basis.n_modes} modes, need {p - 1}")
        cols = np.concatenate([basis.mean_function[:, None], basis.modes[:, : p - 1]], axis=1)
        return cols / p, None
    if p > basis.n_modes:
        raise ValueError(f"basis has {basis.n_modes} modes, need {p}")
    return basis.modes[:, :p] / p, basis.mean_function


def pod_trunk_eval(basis: PODBasis, y_index: int, p: int, modified: bool) -> np.ndarray:
    """One trunk row at training location ``y_index`` (scaled by 1/p).

    For the standard flavor the mean function is not part of the row; it
    is the additive offset ``basis.mean_function[y_index]``.
    """
    y_index = int(y_index)
    if y_index < 0 or y_index >= basis.n_locations:
        raise IndexError(
            f"y_index {y_index} out of range [0, {basis.n_locations}); "
            "POD modes exist only at training sample locations"
        )
    cols, _ = trunk_matrix(basis, p, modified)
    return cols[y_index]
