"""Fixed-radius neighbor search with a hard cap per point.

Every point gets a row of up to `n_max` neighbor slots.  Slot 0 is
always the point itself; the remaining slots hold neighbors within the
(inclusive) radius, ascending by squared distance with exact ties
broken by original point index, truncated at the cap.  Unused slots
are padded with index 0, valid=False and zero relative position, so
downstream code can gather unconditionally and mask.

Two implementations with identical output: a uniform-grid hash (cell
size = radius, so the 3x3 cell block around a point covers its ball)
and an O(N^2) brute force kept as the correctness reference.  Both
compute squared distances with the same expression so that distance
ties land on bitwise-equal floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError


@dataclass
class Neighborhood:
    indices: np.ndarray  # (N, n_max) int64, slot 0 = self
    valid: np.ndarray    # (N, n_max) bool
    rel_pos: np.ndarray  # (N, n_max, 2) anchor minus neighbor, 0 where invalid

    def __post_init__(self):
        if self.indices.shape != self.valid.shape or \
                self.rel_pos.shape != self.indices.shape + (2,):
            raise ValidationError("neighborhood array shapes disagree")

    @property
    def n_points(self) -> int:
        return self.indices.shape[0]

    @property
    def n_slots(self) -> int:
        return self.indices.shape[1]


def _check_inputs(points: np.ndarray, radius: float, n_max: int) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValidationError(f"points must be (N, 2), got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValidationError("non-finite point coordinates")
    if radius <= 0.0:
        raise ConfigError(f"radius must be positive, got {radius}")
    if n_max < 1:
        raise ConfigError(f"n_max must be >= 1, got {n_max}")
    return points


def _finish(points, indices, valid) -> Neighborhood:
    rel = points[:, None, :] - points[indices]
    rel[~valid] = 0.0
    return Neighborhood(indices, valid, rel)


def ball_query(points, radius: float, n_max: int) -> Neighborhood:
    """Grid-accelerated search; output contract identical to brute force."""
    points = _check_inputs(points, radius, n_max)
    n = len(points)
    indices = np.zeros((n, n_max), dtype=np.int64)
    valid = np.zeros((n, n_max), dtype=bool)
    if n == 0:
        return Neighborhood(indices, valid, np.zeros((0, n_max, 2)))
    indices[:, 0] = np.arange(n)
    valid[:, 0] = True
    if n_max == 1 or n == 1:
        return _finish(points, indices, valid)

    r2 = radius * radius
    keep = n_max - 1
    # cell slightly wider than the radius so floor() rounding can never
    # push a boundary point outside the 3x3 candidate block
    cell = radius * (1.0 + 1e-9)
    cells = np.floor(points / cell).astype(np.int64)
    cells -= cells.min(axis=0)
    span = int(cells[:, 1].max()) + 1
    key = cells[:, 0] * span + cells[:, 1]
    order = np.lexsort((np.arange(n), key))
    sorted_key = key[order]
    starts = np.flatnonzero(np.r_[True, sorted_key[1:] != sorted_key[:-1]])
    ends = np.r_[starts[1:], n]
    table = {}
    for s, e in zip(starts, ends):
        members = order[s:e]
        k = int(sorted_key[s])
        table[(k // span, k % span)] = members

    offsets = [(da, db) for da in (-1, 0, 1) for db in (-1, 0, 1)]
    for (ca, cb), anchors in table.items():
        blocks = [table.get((ca + da, cb + db)) for da, db in offsets]
        cand = np.concatenate([b for b in blocks if b is not None])
        diff = points[anchors][:, None, :] - points[cand][None, :, :]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
        for row, anchor in enumerate(anchors):
            within = d2[row] <= r2
            within[cand == anchor] = False
            sel = cand[within]
            dd = d2[row][within]
            best = sel[np.lexsort((sel, dd))[:keep]]
            m = len(best)
            indices[anchor, 1:1 + m] = best
            valid[anchor, 1:1 + m] = True
    return _finish(points, indices, valid)


def ball_query_bruteforce(points, radius: float, n_max: int) -> Neighborhood:
    """Reference implementation: full distance matrix, row by row."""
    points = _check_inputs(points, radius, n_max)
    n = len(points)
    indices = np.zeros((n, n_max), dtype=np.int64)
    valid = np.zeros((n, n_max), dtype=bool)
    if n == 0:
        return Neighborhood(indices, valid, np.zeros((0, n_max, 2)))
    r2 = radius * radius
    keep = n_max - 1
    for i in range(n):
        diff = points[i] - points
        d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
        within = d2 <= r2
        within[i] = False
        others = np.flatnonzero(within)
        best = others[np.lexsort((others, d2[others]))[:keep]]
        indices[i, 0] = i
        valid[i, 0] = True
        m = len(best)
        indices[i, 1:1 + m] = best
        valid[i, 1:1 + m] = True
    return _finish(points, indices, valid)
