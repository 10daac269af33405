"""Multi-type Galton-Watson trees compared against a tree of finite cone type."""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from . import rng
from .errors import MalformedInputError, PreconditionError, ResourceError
from .green import DEFAULT_SETTINGS, SolverSettings, solve_continued
from .hyperbolic import gamma
from .matrix import SubstitutionMatrix
from .oracle import eliminate
from .perturbation import SAMPLE_VERTEX_CAP, _check_boundary, _moment_values, chunks, run_samples
from .reports import MomentEntry
from .tree import DEFAULT_VERTEX_CAP, LevelBuilder, TruncatedTree, assemble, build_tree

Config = Tuple[int, ...]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BranchingProcess:
    """Finite-support offspring laws, one per label.

    ``laws[i]`` is a tuple of ``(s, probability)`` pairs where ``s[l]`` counts
    the label-``l`` children of a label-``i`` vertex.  Support points are kept
    in lexicographic order.
    """

    laws: Tuple[Tuple[Tuple[Config, float], ...], ...]

    def __post_init__(self):
        L = len(self.laws)
        if L == 0:
            raise MalformedInputError("a branching process needs at least one label")
        canon = []
        for i, law in enumerate(self.laws):
            merged: Dict[Config, float] = {}
            for s, prob in law:
                s = tuple(int(x) for x in s)
                if len(s) != L or any(x < 0 for x in s):
                    raise MalformedInputError(f"label {i}: bad offspring vector {s}")
                if not 0 < prob <= 1:
                    raise MalformedInputError(f"label {i}: probability {prob} outside (0, 1]")
                merged[s] = merged.get(s, 0.0) + float(prob)
            if not merged:
                raise MalformedInputError(f"label {i} has an empty offspring law")
            if abs(sum(merged.values()) - 1.0) > 1e-12:
                raise MalformedInputError(f"label {i}: probabilities sum to {sum(merged.values())}")
            canon.append(tuple(sorted(merged.items())))
        object.__setattr__(self, "laws", tuple(canon))

    @property
    def label_count(self) -> int:
        return len(self.laws)

    def law(self, i: int) -> Dict[Config, float]:
        return dict(self.laws[i])

    def b2(self) -> bool:
        """No label can be childless."""
        return all(sum(s) > 0 for law in self.laws for s, _ in law)

    def b1(self, p: float = 2.0) -> bool:
        """Finite ``p``-th moment of the offspring number; automatic for finite support."""
        return all(math.isfinite(sum(q * sum(s) ** p for s, q in law)) for law in self.laws)

    def mean_matrix(self) -> np.ndarray:
        """``mean[l, i]``: expected label-``l`` children of a label-``i`` vertex."""
        out = np.zeros((self.label_count, self.label_count))
        for i, law in enumerate(self.laws):
            for s, q in law:
                out[:, i] += q * np.asarray(s)
        return out

    def projected_size(self, root_label: int, R: int) -> float:
        c = np.zeros(self.label_count)
        c[root_label] = 1.0
        total = 1.0
        mean = self.mean_matrix()
        for _ in range(R):
            c = mean @ c
            total += c.sum()
        return total


def embed_substitution(M: SubstitutionMatrix) -> BranchingProcess:
    """Deterministic process: a label-``i`` vertex always has the offspring of ``M``."""
    return BranchingProcess(tuple(((tuple(int(x) for x in M.children[i]), 1.0),)
                                  for i in range(M.label_count)))


def d_p_distance(b1: BranchingProcess, b2: BranchingProcess, p: float) -> float:
    """``max_i sum_s |P1_i(s) - P2_i(s)| * |s|_1 ** p`` over the union of supports."""
    if b1.label_count != b2.label_count:
        raise MalformedInputError("processes have different label sets")
    if not p > 1:
        raise PreconditionError("d_p needs p > 1")
    worst = 0.0
    for law1, law2 in zip(b1.laws, b2.laws):
        d1, d2 = dict(law1), dict(law2)
        total = 0.0
        for s in sorted(set(d1) | set(d2)):
            total += abs(d1.get(s, 0.0) - d2.get(s, 0.0)) * float(sum(s)) ** p
        worst = max(worst, total)
    return worst


def tail_weight(law: Sequence[Tuple[Config, float]], max_offspring: int, p: float) -> float:
    """d_p error from dropping configurations with more than ``max_offspring`` children."""
    return sum(q * float(sum(s)) ** p for s, q in law if sum(s) > max_offspring)


@dataclass(frozen=True, eq=False)
class RealizationSample:
    tree: TruncatedTree
    seed: int
    sample_index: int


def _patterns(b: BranchingProcess):
    return [[tuple(np.repeat(np.arange(b.label_count), s).tolist()) for s, _ in law]
            for law in b.laws]


def _cdfs(b: BranchingProcess):
    return [np.cumsum([q for _, q in law]) for law in b.laws]


def _choose(labels, u, cdfs):
    choice = np.zeros(labels.shape[0], dtype=np.int64)
    for label in np.unique(labels):
        mask = labels == label
        cdf = cdfs[label]
        choice[mask] = np.minimum(np.searchsorted(cdf, u[mask], side="right"), len(cdf) - 1)
    return choice


def sample_realization(b: BranchingProcess, root_label: int, R: int, seed: int, sample_index: int,
                       vertex_cap: int = DEFAULT_VERTEX_CAP, _builder=None) -> RealizationSample:
    """One realization cut at depth ``R``.

    Vertex ``x`` (breadth-first index) picks its configuration with draw ``x``
    of the stream keyed by ``(seed, sample_index)``.  Children are laid out by
    increasing label, exactly like :func:`~conetree.tree.build_tree`.
    """
    if not 0 <= root_label < b.label_count:
        raise MalformedInputError(f"root label {root_label} out of range")
    projected = b.projected_size(root_label, R)
    if projected > vertex_cap:
        raise ResourceError(f"expected {projected:.0f} vertices exceeds cap {vertex_cap}",
                            int(projected))
    builder, cdfs = _builder or (LevelBuilder(_patterns(b)), _cdfs(b))
    gen = rng.stream(seed, sample_index, rng.REALIZATION)
    levels = [np.array([root_label], dtype=np.int64)]
    counts = []
    total = 1
    for _ in range(R):
        labels = levels[-1]
        choice = _choose(labels, gen.random(labels.shape[0]), cdfs)
        c, nxt = builder.expand(labels, choice)
        total += nxt.shape[0]
        if total > vertex_cap:
            raise ResourceError(f"realization exceeded cap {vertex_cap}", total)
        counts.append(c)
        levels.append(nxt)
    return RealizationSample(assemble(levels, counts, R), seed, sample_index)


def first_configurations(b: BranchingProcess, root_label: int, n_samples: int, seed: int) -> List[Config]:
    """Root offspring configuration of ``n_samples`` depth-1 realizations.

    Reads only the root's draw of each stream, so it agrees with
    :func:`sample_realization` without building the trees.
    """
    cdfs = _cdfs(b)
    root = np.array([root_label], dtype=np.int64)
    support = [s for s, _ in b.laws[root_label]]
    out = []
    for i in range(n_samples):
        u = rng.stream(seed, i, rng.REALIZATION).random(1)
        out.append(support[int(_choose(root, u, cdfs)[0])])
    return out


@dataclass(frozen=True)
class FitResult:
    statistic: float
    p_value: float
    dof: int
    observed: Tuple[int, ...]
    expected: Tuple[float, ...]


def goodness_of_fit(b: BranchingProcess, root_label: int, n_samples: int, seed: int,
                    model: BranchingProcess = None) -> FitResult:
    """Chi-square test of sampled root configurations against ``model`` (default ``b``)."""
    model = b if model is None else model
    law = model.laws[root_label]
    if n_samples * min(q for _, q in law) < 50:
        raise PreconditionError("need at least 50 expected samples per support point")
    support = [s for s, _ in law]
    index = {s: k for k, s in enumerate(support)}
    observed = np.zeros(len(support), dtype=np.int64)
    for s in first_configurations(b, root_label, n_samples, seed):
        if s not in index:
            raise PreconditionError(f"sampled configuration {s} outside the model support")
        observed[index[s]] += 1
    expected = n_samples * np.array([q for _, q in law])
    if len(support) == 1:
        return FitResult(0.0, 1.0, 0, tuple(observed.tolist()), tuple(expected.tolist()))
    res = stats.chisquare(observed, expected)
    return FitResult(float(res.statistic), float(res.pvalue), len(support) - 1,
                     tuple(observed.tolist()), tuple(expected.tolist()))


def good_part(tree: TruncatedTree, reference: TruncatedTree, depth: int) -> bool:
    """True when spheres ``0..depth`` of both trees coincide label by label."""
    a, b = tree.level_offsets, reference.level_offsets
    if tree.depth_cap < depth or reference.depth_cap < depth:
        raise PreconditionError("trees are shallower than the good-part depth")
    return a[depth + 1] == b[depth + 1] and np.array_equal(tree.labels[:a[depth + 1]],
                                                           reference.labels[:b[depth + 1]])


def _gw_chunk(args):
    b, j, R, z, seed, indices, ref, leaf_term, p, good_ref, good_depth, cap = args
    helper = (LevelBuilder(_patterns(b)), _cdfs(b))
    vals, good = [], []
    try:
        for i in indices:
            t = sample_realization(b, j, R, seed, i, cap, helper).tree
            g = complex(eliminate(t, z, leaf_term=leaf_term)[0])
            vals.append((float(gamma(g, ref)) ** p, good_part(t, good_ref, good_depth)))
    except Exception as exc:  # noqa: BLE001
        return vals, exc
    return vals, None


def gw_moment_statistic(b: BranchingProcess, M_ref: SubstitutionMatrix, root_label, z, p: float = 2.0,
                        n_samples: int = 100, R: int = 10, seed: int = 0,
                        boundary: str = "reference", good_depth: int = 2,
                        settings: SolverSettings = DEFAULT_SETTINGS, workers: int = 1,
                        vertex_cap: int = SAMPLE_VERTEX_CAP) -> MomentEntry:
    """Mean of ``gamma(G_theta, G_L) ** p`` over realizations of ``b``.

    ``G_L`` is the fixed-point Green function of ``M_ref``.  Extras report the
    share of realizations whose first ``good_depth`` spheres match
    ``T(M_ref)``, ``d_p(b, b_M)`` and the same statistic for ``T(M_ref)``
    itself (``truncation_error``, the zero-disorder baseline).
    """
    if b.label_count != M_ref.label_count:
        raise MalformedInputError("process and reference matrix use different label sets")
    if not p > 1 or n_samples < 2:
        raise PreconditionError("need p > 1 and at least two samples")
    _check_boundary(boundary)
    z = complex(z)
    j = M_ref.label_index(root_label)
    exact = solve_continued(M_ref, z, settings).values
    leaf_term = M_ref.children.astype(float) @ exact if boundary == "reference" else None
    ref_tree = build_tree(M_ref, j, R, vertex_cap)
    good_ref = build_tree(M_ref, j, min(good_depth, R))
    baseline = complex(eliminate(ref_tree, z, leaf_term=leaf_term)[0])
    jobs = [(b, j, R, z, seed, idx, exact[j], leaf_term, p, good_ref, good_depth, vertex_cap)
            for idx in chunks(n_samples, workers)]
    pairs = run_samples(_gw_chunk, jobs, workers)
    G = np.array([v for v, _ in pairs])
    mean, stderr = _moment_values(G)
    extras = {
        "good_fraction": float(np.mean([g for _, g in pairs])),
        "d_p": d_p_distance(b, embed_substitution(M_ref), p),
        "truncation_error": float(gamma(baseline, exact[j])) ** p,
    }
    return MomentEntry(z.imag, z.real, n_samples, mean, stderr, float(p), 0.0, R, seed,
                       boundary, extras)


def defect_process(M: SubstitutionMatrix, q: float, extra_label: int = 0) -> BranchingProcess:
    """With probability ``q`` a vertex gets one extra child of ``extra_label``."""
    laws = []
    for i in range(M.label_count):
        s = tuple(int(x) for x in M.children[i])
        t = list(s)
        t[extra_label] += 1
        laws.append(((s, 1.0 - q), (tuple(t), q)) if q > 0 else ((s, 1.0),))
    return BranchingProcess(tuple(laws))


def monotonicity_probe(M: SubstitutionMatrix, root_label, z, q_small: float = 0.05,
                       q_large: float = 0.3, p: float = 2.0, n_samples: int = 200, R: int = 10,
                       seed: int = 0, **kw) -> bool:
    """Soft check that the moment grows with the defect probability.

    Logs a warning instead of raising when the ordering fails.
    """
    small = gw_moment_statistic(defect_process(M, q_small), M, root_label, z, p, n_samples, R,
                                seed, **kw)
    large = gw_moment_statistic(defect_process(M, q_large), M, root_label, z, p, n_samples, R,
                                seed, **kw)
    ok = small.mean <= large.mean
    if not ok:
        log.warning("moment for q=%g (%g) exceeds moment for q=%g (%g)",
                    q_small, small.mean, q_large, large.mean)
    return ok
