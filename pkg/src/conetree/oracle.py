"""Exact forward Green functions of finite trees by leaf-to-root elimination."""
from typing import List, Optional, Sequence

import numpy as np

from .green import DEFAULT_SETTINGS, SolverSettings, solve_green
from .hyperbolic import check_half_plane, gamma
from .errors import PreconditionError
from .matrix import SubstitutionMatrix
from .tree import TruncatedTree


def _child_sums(values, starts, counts):
    """Sum ``values`` over consecutive child segments; empty segments give 0."""
    out = np.zeros(counts.shape[0], dtype=values.dtype)
    full = counts > 0
    if np.any(full):
        out[full] = np.add.reduceat(values, starts[full])
    return out


def eliminate(tree: TruncatedTree, z, potential=None, weight=None, leaf_term=None) -> np.ndarray:
    """Forward Green function at every vertex of ``tree``.

    ``leaf_term`` (one complex number per label) is added to the denominator
    of every vertex on the last sphere; it stands for forward trees hanging
    below the truncation.  ``None`` means the tree simply ends there.
    """
    off = tree.level_offsets
    pot = tree.potential if potential is None else potential
    w = tree.weight if weight is None else weight
    w2 = None if w is None else w * w
    g = np.empty(len(tree), dtype=complex)
    for d in range(tree.depth_cap, -1, -1):
        a, b = off[d], off[d + 1]
        if a == b:
            continue
        denom = np.full(b - a, z, dtype=complex)
        if pot is not None:
            denom -= pot[a:b]
        c0, c1 = off[min(d + 1, tree.depth_cap + 1)], off[min(d + 2, tree.depth_cap + 1)]
        if c1 > c0:
            kids = g[c0:c1] if w2 is None else w2[c0:c1] * g[c0:c1]
            starts = tree.child_start[a:b] - c0
            denom += _child_sums(kids, starts, tree.child_stop[a:b] - tree.child_start[a:b])
        if leaf_term is not None and d == tree.depth_cap:
            denom += np.asarray(leaf_term)[tree.labels[a:b]]
        g[a:b] = -1.0 / denom
    return g


def exact_forward_green(tree: TruncatedTree, z, leaf_term=None) -> complex:
    """Forward Green function at the root of a (possibly decorated) finite tree.

    Applies the one-step recursion from the deepest sphere upward, which is
    Gaussian elimination of ``H - z`` ordered leaves to root.  Missing
    decorations default to zero potential and unit weights.
    """
    z = complex(z)
    check_half_plane(z)
    return complex(eliminate(tree, z, leaf_term=leaf_term)[0])


def forward_green_by_generation(M: SubstitutionMatrix, root_label, R: int, z,
                                potential=None, tail=None) -> complex:
    """Root Green function of ``T(M, root_label)`` cut at depth ``R`` without
    materialising the tree.

    Vertices sharing label and generation have identical forward trees, so one
    value per (generation, label) suffices.  ``potential[n, j]`` is an optional
    generation/label potential; ``tail`` is the per-label Green vector hanging
    below generation ``R`` (``None`` for a free cut).
    """
    z = complex(z)
    check_half_plane(z)
    A = M.children.astype(float)
    L = M.label_count
    below = np.zeros(L, dtype=complex) if tail is None else A @ np.asarray(tail, dtype=complex)
    g = None
    for n in range(R, -1, -1):
        denom = z + below if g is None else z + A @ g
        if potential is not None and n < len(potential):
            denom = denom - np.asarray(potential[n], dtype=float)
        g = -1.0 / denom
    return complex(g[M.label_index(root_label)])


def dense_forward_green(tree: TruncatedTree, z, leaf_term=None) -> complex:
    """Independent oracle: assemble ``H - z`` and solve for the root column
    with Gaussian elimination and partial pivoting (pure Python)."""
    n = len(tree)
    z = complex(z)
    pot = tree.potential if tree.potential is not None else np.zeros(n)
    w = tree.weight if tree.weight is not None else np.ones(n)
    a = [[0j] * n for _ in range(n)]
    for x in range(n):
        a[x][x] = complex(pot[x]) - z
        if leaf_term is not None and tree.depth[x] == tree.depth_cap:
            a[x][x] -= complex(leaf_term[tree.labels[x]])
        p = int(tree.parent[x])
        if p >= 0:
            a[x][p] = a[p][x] = complex(w[x])
    rhs = [0j] * n
    rhs[0] = 1.0 + 0j
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        a[col], a[piv] = a[piv], a[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            if f:
                for c in range(col, n):
                    a[r][c] -= f * a[col][c]
                rhs[r] -= f * rhs[col]
    x = [0j] * n
    for r in range(n - 1, -1, -1):
        s = rhs[r] - sum(a[r][c] * x[c] for c in range(r + 1, n))
        x[r] = s / a[r][r]
    return x[0]


def convergence_study(M: SubstitutionMatrix, root_label, z, depths: Sequence[int],
                      settings: SolverSettings = DEFAULT_SETTINGS) -> List[float]:
    """gamma distance between the depth-``R`` truncation and the fixed point,
    for each ``R`` in ``depths``."""
    z = complex(z)
    if z.imag < 0.1:
        raise PreconditionError("convergence study needs Im z >= 0.1")
    j = M.label_index(root_label)
    ref = solve_green(M, z, settings).values[j]
    return [float(gamma(forward_green_by_generation(M, j, R, z), ref)) for R in depths]
