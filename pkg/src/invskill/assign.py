"""Forward/inverse correspondence via linear sum assignment.

Forward demonstration ``i`` and inverse demonstration ``j`` are compared by
the distance between ``forward.s_final`` and ``inverse.s_init``; the
bijection of minimum total distance defines the paired dataset.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Demonstration, PairedDataset, Role
from .errors import DimMismatch, InvalidCost, RoleError, SizeMismatch


class Dissimilarity(enum.Enum):
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray

    def __post_init__(self):
        c = np.array(self.entries, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] == 0:
            raise SizeMismatch(f"cost matrix must be square and nonempty, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidCost("cost matrix has non-finite entries")
        if np.any(c < 0):
            raise InvalidCost("cost matrix has negative entries")
        c.setflags(write=False)
        object.__setattr__(self, "entries", c)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class Assignment:
    perm: tuple[int, ...]
    total_cost: float


def build_cost_matrix(
    forwards: Sequence[Demonstration],
    inverses: Sequence[Demonstration],
    metric: Dissimilarity = Dissimilarity.EUCLIDEAN,
) -> CostMatrix:
    """Pairwise ``||forwards[i].s_final - inverses[j].s_init||``."""
    if len(forwards) != len(inverses):
        raise SizeMismatch(f"{len(forwards)} forward vs {len(inverses)} inverse demonstrations")
    if not forwards:
        raise SizeMismatch("need at least one demonstration per side")
    if any(d.role is not Role.FORWARD for d in forwards):
        raise RoleError("forward list contains a non-forward demonstration")
    if any(d.role is not Role.INVERSE for d in inverses):
        raise RoleError("inverse list contains a non-inverse demonstration")
    dims = {d.d_s for d in forwards} | {d.d_s for d in inverses}
    if len(dims) != 1:
        raise DimMismatch(f"inconsistent environment-state dimensions {sorted(dims)}")
    if metric is not Dissimilarity.EUCLIDEAN:
        raise ValueError(f"unsupported metric {metric}")

    finals = np.stack([d.s_final for d in forwards])
    inits = np.stack([d.s_init for d in inverses])
    diff = finals[:, None, :] - inits[None, :, :]
    return CostMatrix(np.sqrt(np.sum(diff * diff, axis=-1)))


def _hungarian(c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Shortest augmenting path with potentials, rows added one at a time.
    # Index 0 is a sentinel column; returns row->col, row duals, col duals.
    n = c.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: 1-based row on column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            cols = np.nonzero(free)[0]
            cur = c[i0 - 1, cols - 1] - u[i0] - v[cols]
            better = cur < minv[cols]
            minv[cols[better]] = cur[better]
            way[cols[better]] = j0
            k = int(np.argmin(minv[cols]))
            delta = minv[cols[k]]
            j1 = int(cols[k])
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    perm[owner[1:] - 1] = np.arange(n)
    return perm, u[1:], v[1:]


def _lexicographic_refine(tight: np.ndarray, perm: np.ndarray) -> np.ndarray:
    # Among perfect matchings of the tight-edge graph, pick the one whose
    # row->col sequence is lexicographically smallest.
    n = perm.size
    perm = perm.copy()
    row_of = np.empty(n, dtype=np.int64)
    row_of[perm] = np.arange(n)
    adj = [np.nonzero(tight[i])[0] for i in range(n)]

    for i in range(n):
        for j in adj[i]:
            if j >= perm[i]:
                break
            # Alternating path from row_of[j] back to column perm[i], using rows > i.
            target = perm[i]
            start = row_of[j]
            if start <= i:
                continue
            parent: dict[int, tuple[int, int]] = {}
            seen_rows = {start}
            stack = [start]
            found = -1
            while stack and found < 0:
                r = stack.pop()
                for col in adj[r]:
                    if col == j:
                        continue
                    if col == target:
                        parent[-1] = (r, col)
                        found = r
                        break
                    nr = row_of[col]
                    if nr > i and nr not in seen_rows:
                        seen_rows.add(nr)
                        parent[nr] = (r, col)  # r takes col away from nr
                        stack.append(nr)
            if found < 0:
                continue
            # Walk back from the row that takes ``target`` to ``start``.
            r, col = parent[-1]
            while True:
                perm[r] = col
                row_of[col] = r
                if r == start:
                    break
                r, col = parent[r]
            perm[i] = j
            row_of[j] = i
            break
    return perm


def solve_assignment(cost: CostMatrix | np.ndarray) -> Assignment:
    """Minimum-cost bijection between rows (forward) and columns (inverse).

    Among optimal assignments the lexicographically smallest ``perm`` is
    returned, i.e. lowest forward index first gets the lowest inverse index.
    """
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(cost)
    c = cost.entries
    n = c.shape[0]
    perm, u, v = _hungarian(c)
    total = _total(c, perm)

    scale = max(1.0, float(np.max(np.abs(c))))
    tight = np.abs(c - u[:, None] - v[None, :]) <= 1e-10 * scale
    tight[np.arange(n), perm] = True
    refined = _lexicographic_refine(tight, perm)
    refined_total = _total(c, refined)
    if refined_total <= total:
        perm, total = refined, refined_total
    return Assignment(tuple(int(j) for j in perm), total)


def _total(c: np.ndarray, perm: np.ndarray) -> float:
    total = 0.0
    for i, j in enumerate(perm):
        total += float(c[i, j])
    return total


def pair_demonstrations(
    forwards: Sequence[Demonstration], inverses: Sequence[Demonstration]
) -> PairedDataset:
    """Optimally match forward to inverse demonstrations.

    Auxiliary (forward-only) demonstrations must not be passed here.
    """
    cost = build_cost_matrix(forwards, inverses)
    a = solve_assignment(cost)
    pairs = tuple((forwards[i], inverses[j]) for i, j in enumerate(a.perm))
    per_pair = tuple(float(cost.entries[i, j]) for i, j in enumerate(a.perm))
    return PairedDataset(pairs, a.total_cost, per_pair)


def write_cost_csv(cost: CostMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["forward"] + [f"inverse_{j}" for j in range(cost.n)])
        for i, row in enumerate(cost.entries):
            w.writerow([i] + [format(float(x), ".17g") for x in row])
