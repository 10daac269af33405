"""Breadth-first truncated trees of finite cone type."""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import MalformedInputError, ResourceError
from .matrix import SubstitutionMatrix, sphere_counts

DEFAULT_VERTEX_CAP = 10**7


@dataclass(frozen=True, eq=False)
class TruncatedTree:
    """A finite rooted labelled tree stored as flat arrays in breadth-first order.

    The children of vertex ``x`` are ``child_start[x]:child_stop[x]``.
    ``potential`` is per vertex; ``weight[x]`` is the weight of the edge from
    ``x`` to its parent (``weight[0]`` is unused and set to 1).
    """

    labels: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    child_start: np.ndarray
    child_stop: np.ndarray
    depth_cap: int
    potential: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("labels", "parent", "depth", "child_start", "child_stop", "potential", "weight"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def root(self) -> int:
        return 0

    @property
    def level_offsets(self) -> np.ndarray:
        """``level_offsets[d]:level_offsets[d+1]`` are the vertices of sphere ``d``."""
        return np.searchsorted(self.depth, np.arange(self.depth_cap + 2), side="left")

    @property
    def decorated(self) -> bool:
        return self.potential is not None or self.weight is not None

    def children(self, x: int) -> range:
        return range(int(self.child_start[x]), int(self.child_stop[x]))

    def census(self, n: int, label_count: int) -> np.ndarray:
        """Per-label vertex counts of sphere ``n``."""
        off = self.level_offsets
        return np.bincount(self.labels[off[n]:off[n + 1]], minlength=label_count)

    def decorate(self, potential=None, weight=None) -> "TruncatedTree":
        n = len(self)
        pot = None if potential is None else np.array(potential, dtype=float).reshape(n)
        w = None if weight is None else np.array(weight, dtype=float).reshape(n)
        if w is not None:
            w[0] = 1.0
        return replace(self, potential=pot, weight=w)

    def undecorated(self) -> "TruncatedTree":
        return replace(self, potential=None, weight=None)

    def same_shape(self, other: "TruncatedTree") -> bool:
        return (
            self.depth_cap == other.depth_cap
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.parent, other.parent)
        )

    @classmethod
    def from_parents(cls, parents, labels=None, depth_cap=None) -> "TruncatedTree":
        """Build from a breadth-first parent list (``parents[0]`` is ignored)."""
        parents = np.asarray(parents, dtype=np.int64).copy()
        n = parents.shape[0]
        if n == 0:
            raise MalformedInputError("a tree needs at least a root")
        parents[0] = -1
        if n > 1 and (np.any(parents[1:] < 0) or np.any(np.diff(parents[1:]) < 0)
                      or np.any(parents[1:] >= np.arange(1, n))):
            raise MalformedInputError("parents are not in breadth-first order")
        depth = np.zeros(n, dtype=np.int64)
        for x in range(1, n):
            depth[x] = depth[parents[x]] + 1
        if np.any(np.diff(depth) < 0):
            raise MalformedInputError("depths are not nondecreasing")
        counts = np.bincount(parents[1:], minlength=n) if n > 1 else np.zeros(1, np.int64)
        stop = 1 + np.cumsum(counts)
        start = stop - counts
        # Leaves point at the position where their children would begin.
        labels = np.zeros(n, np.int64) if labels is None else np.asarray(labels, np.int64).copy()
        cap = int(depth[-1]) if depth_cap is None else int(depth_cap)
        return cls(labels, parents, depth, start.astype(np.int64), stop.astype(np.int64), cap)


def projected_size(M: SubstitutionMatrix, root_label, R: int) -> int:
    return sum(sum(sphere_counts(M, root_label, n)) for n in range(R + 1))


class LevelBuilder:
    """Grows breadth-first levels from per-(label, configuration) child patterns.

    ``patterns[label]`` is a list of child-label tuples, each already sorted by
    increasing label.
    """

    def __init__(self, patterns):
        flat, start, length, owner = [], [], [], []
        self.offset = []
        for label, confs in enumerate(patterns):
            self.offset.append(len(start))
            for conf in confs:
                start.append(len(flat))
                length.append(len(conf))
                flat.extend(conf)
        self.flat = np.asarray(flat, dtype=np.int64)
        self.start = np.asarray(start, dtype=np.int64)
        self.length = np.asarray(length, dtype=np.int64)
        self.offset = np.asarray(self.offset, dtype=np.int64)

    def expand(self, labels: np.ndarray, choice: Optional[np.ndarray] = None):
        """Return (per-vertex child counts, concatenated child labels)."""
        pid = self.offset[labels] if choice is None else self.offset[labels] + choice
        counts = self.length[pid]
        total = int(counts.sum())
        first = np.cumsum(counts) - counts
        idx = np.repeat(self.start[pid] - first, counts) + np.arange(total)
        return counts, self.flat[idx]


def assemble(levels, counts_per_level, depth_cap: int) -> TruncatedTree:
    """Stitch label arrays and child counts (one per level) into a tree."""
    labels = np.concatenate(levels)
    n = labels.shape[0]
    sizes = np.array([lv.shape[0] for lv in levels], dtype=np.int64)
    level_start = np.concatenate([[0], np.cumsum(sizes)])
    depth = np.repeat(np.arange(len(levels), dtype=np.int64), sizes)
    counts = np.zeros(n, dtype=np.int64)
    for d, c in enumerate(counts_per_level):
        counts[level_start[d]:level_start[d + 1]] = c
    stop = 1 + np.cumsum(counts)
    start = stop - counts
    parent = np.empty(n, dtype=np.int64)
    parent[0] = -1
    parent[1:] = np.repeat(np.arange(n, dtype=np.int64), counts)
    return TruncatedTree(labels, parent, depth, start, stop, depth_cap)


def cone_patterns(M: SubstitutionMatrix):
    """One child pattern per label: the column of ``M`` written out by label."""
    return [[tuple(np.repeat(np.arange(M.label_count), M.children[k]).tolist())]
            for k in range(M.label_count)]


def build_tree(M: SubstitutionMatrix, root_label, R: int, vertex_cap: int = DEFAULT_VERTEX_CAP) -> TruncatedTree:
    """Truncation of ``T(M, root_label)`` to spheres ``0..R``.

    Children are grouped by increasing label.  Raises :class:`ResourceError`
    before allocating anything if the tree would exceed ``vertex_cap``.
    """
    if R < 0:
        raise MalformedInputError("depth must be nonnegative")
    j = M.label_index(root_label)
    projected = projected_size(M, j, R)
    if projected > vertex_cap:
        raise ResourceError(
            f"tree of depth {R} would have {projected} vertices (cap {vertex_cap})", projected)
    builder = LevelBuilder(cone_patterns(M))
    levels = [np.array([j], dtype=np.int64)]
    counts = []
    for _ in range(R):
        c, nxt = builder.expand(levels[-1])
        counts.append(c)
        levels.append(nxt)
    return assemble(levels, counts, R)
