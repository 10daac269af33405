"""Random and radially symmetric perturbations of trees of finite cone type.

The random operator acts as

    (H f)(x) = sum_{y ~ x} (1 + lam * theta_{xy}) f(y) + lam * v_x f(x)

where the edge variable ``theta`` of an edge is attached to its lower
(child) vertex.  Decorations are drawn i.i.d. per vertex with a law that
depends on the vertex label.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import rng
from .errors import MalformedInputError, MomentBatchError, PreconditionError
from .green import (DEFAULT_SETTINGS, BandList, SolverSettings, detect_bands, solve_continued,
                    spectral_edge_set)
from .hyperbolic import gamma
from .matrix import SubstitutionMatrix
from .oracle import eliminate, forward_green_by_generation
from .reports import MomentEntry, MomentReport, boundedness_flag
from .tree import TruncatedTree, build_tree, projected_size

SAMPLE_VERTEX_CAP = 2**20
MAX_HEURISTIC_DEPTH = 60
BOUNDARIES = ("reference", "free")


@dataclass(frozen=True)
class Uniform:
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self):
        if not -1.0 <= self.low <= self.high <= 1.0:
            raise MalformedInputError(f"uniform law must sit inside [-1, 1], got [{self.low}, {self.high}]")

    @property
    def degenerate(self) -> bool:
        return self.low == self.high

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    def ppf(self, u):
        return self.low + (self.high - self.low) * u


@dataclass(frozen=True)
class Discrete:
    values: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if not self.values or len(self.values) != len(self.probs):
            raise MalformedInputError("discrete law needs matching values and probabilities")
        if any(not -1.0 < v < 1.0 for v in self.values):
            raise MalformedInputError("discrete law values must lie in (-1, 1)")
        if any(p <= 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise MalformedInputError("discrete law probabilities must be positive and sum to 1")

    @property
    def degenerate(self) -> bool:
        return len(set(self.values)) == 1

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def ppf(self, u):
        cdf = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(self.values) - 1)
        return np.asarray(self.values)[idx]


Law = Union[Uniform, Discrete]


def point_mass(value: float = 0.0) -> Discrete:
    return Discrete((value,), (1.0,))


@dataclass(frozen=True)
class PerturbationModel:
    """Coupling ``lam`` and per-label laws of the potential and edge variables."""

    lam: float
    v: Tuple[Law, ...]
    theta: Tuple[Law, ...]
    scheme: str = "iid-per-vertex"

    def __post_init__(self):
        object.__setattr__(self, "v", tuple(self.v))
        object.__setattr__(self, "theta", tuple(self.theta))
        if not self.lam >= 0:
            raise MalformedInputError("coupling must be nonnegative")
        if len(self.v) != len(self.theta):
            raise MalformedInputError("v and theta need one law per label")
        if self.scheme != "iid-per-vertex":
            raise MalformedInputError(f"unsupported independence scheme {self.scheme!r}")

    @classmethod
    def iid(cls, lam: float, label_count: int, v: Law = Uniform(), theta: Law = Uniform()):
        return cls(lam, (v,) * label_count, (theta,) * label_count)

    @property
    def label_count(self) -> int:
        return len(self.v)

    def is_trivial(self) -> bool:
        """True when every decoration is exactly zero potential and unit weight."""
        if self.lam == 0:
            return True
        laws = self.v + self.theta
        return all(law.degenerate and law.ppf(0.5) == 0 for law in laws)


@dataclass(frozen=True)
class RadialPotential:
    """``values[n][j]`` is the potential on label-``j`` vertices of generation ``n``;
    zero beyond the table."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 2:
            raise MalformedInputError("radial potential must be a generations x labels table")
        if np.any(np.abs(arr) > 1.0):
            raise MalformedInputError("radial potential values must lie in [-1, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def cutoff(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_function(cls, fn, label_count: int, cutoff: int) -> "RadialPotential":
        return cls(np.array([[fn(j, n) for j in range(label_count)] for n in range(cutoff)]))


def _draw(labels: np.ndarray, laws, u: np.ndarray) -> np.ndarray:
    out = np.empty(u.shape[0])
    for label in np.unique(labels):
        mask = labels == label
        out[mask] = laws[label].ppf(u[mask])
    return out


def sample_decorations(tree: TruncatedTree, model: PerturbationModel, seed: int,
                       sample_index: int) -> TruncatedTree:
    """Decorate ``tree`` with potential ``lam * v_x`` and edge weight ``1 + lam * theta_x``.

    Vertex ``x`` uses draws ``2x`` and ``2x + 1`` of the stream keyed by
    ``(seed, sample_index)``.
    """
    n = len(tree)
    if model.lam == 0:
        return tree.decorate(np.zeros(n), np.ones(n))
    if int(tree.labels.max()) >= model.label_count:
        raise MalformedInputError("tree uses labels the model has no law for")
    u = rng.vertex_uniforms(seed, sample_index, rng.DECORATIONS, 0, n, 2)
    v = _draw(tree.labels, model.v, u[:, 0])
    theta = _draw(tree.labels, model.theta, u[:, 1])
    return tree.decorate(model.lam * v, 1.0 + model.lam * theta)


@lru_cache(maxsize=4)
def _layout(entries: bytes, L: int, root: int, R: int, cap: int) -> TruncatedTree:
    M = SubstitutionMatrix(np.frombuffer(entries, dtype=np.int64).reshape(L, L))
    return build_tree(M, root, R, cap)


def layout(M: SubstitutionMatrix, root_label, R: int, vertex_cap: int = SAMPLE_VERTEX_CAP) -> TruncatedTree:
    j = M.label_index(root_label)
    return _layout(M.entries.tobytes(), M.label_count, j, R, vertex_cap)


def _check_boundary(boundary):
    if boundary not in BOUNDARIES:
        raise MalformedInputError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")


def _reference(M, z, settings):
    return solve_continued(M, z, settings).values


def perturbed_green(M: SubstitutionMatrix, root_label, R: int, model: PerturbationModel, z,
                    seed: int, sample_index: int, boundary: str = "reference",
                    settings: SolverSettings = DEFAULT_SETTINGS,
                    vertex_cap: int = SAMPLE_VERTEX_CAP, reference=None) -> complex:
    """Root Green function of one decorated sample of the depth-``R`` truncation.

    With ``boundary="reference"`` the vertices of sphere ``R`` keep their
    unperturbed forward trees, i.e. the perturbation lives on generations
    ``0..R``.  With ``boundary="free"`` the tree ends at sphere ``R``.
    A trivial model skips sampling and evaluates one value per
    (generation, label), so any depth is affordable.
    """
    _check_boundary(boundary)
    z = complex(z)
    j = M.label_index(root_label)
    tail = None
    if boundary == "reference":
        tail = _reference(M, z, settings) if reference is None else reference
    if model.is_trivial():
        return forward_green_by_generation(M, j, R, z, tail=tail)
    tree = layout(M, j, R, vertex_cap)
    dec = sample_decorations(tree, model, seed, sample_index)
    leaf_term = None if tail is None else M.children.astype(float) @ tail
    return complex(eliminate(dec, z, leaf_term=leaf_term)[0])


def _moment_values(G: np.ndarray):
    n = G.shape[0]
    scale = float(G.max()) if n else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        mean = float(np.mean(G)) if n else 0.0
        stderr = float(np.std(G, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return mean, stderr
    scaled = G / scale
    mean = scale * float(np.mean(scaled))
    stderr = scale * float(np.std(scaled, ddof=1)) / math.sqrt(n)
    return mean, stderr


def _sample_chunk(args):
    M, j, R, model, z, seed, indices, boundary, settings, cap, tail, base, p = args
    out = []
    try:
        for i in indices:
            g = perturbed_green(M, j, R, model, z, seed, i, boundary, settings, cap, tail)
            out.append(float(gamma(g, base)) ** p)
    except Exception as exc:  # noqa: BLE001 - surfaced with partial results
        return out, exc
    return out, None


def run_samples(fn, jobs, workers):
    """Run chunked sample jobs, concatenating results in job order."""
    values = []
    if workers <= 1:
        results = map(fn, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(fn, jobs)
    try:
        for part, exc in results:
            values.extend(part)
            if exc is not None:
                raise MomentBatchError(f"batch aborted after {len(values)} samples: {exc}",
                                       values, exc)
    finally:
        if workers > 1:
            pool.shutdown()
    return values


def chunks(n: int, workers: int):
    return [list(c) for c in np.array_split(np.arange(n), max(1, workers)) if len(c)]


def moment_statistic(M: SubstitutionMatrix, root_label, z, model: PerturbationModel, p: float = 2.0,
                     n_samples: int = 100, R: int = 10, seed: int = 0, boundary: str = "reference",
                     settings: SolverSettings = DEFAULT_SETTINGS, workers: int = 1,
                     vertex_cap: int = SAMPLE_VERTEX_CAP) -> MomentEntry:
    """Empirical mean and standard error of ``gamma(G_omega, G_ref) ** p``.

    ``G_ref`` is the unperturbed evaluation of the same truncation; its own
    distance to the fixed point is reported as ``truncation_error``.  Samples
    use indices ``0..n_samples-1`` and are aggregated in index order.
    """
    if not p > 1:
        raise PreconditionError("moment exponent p must exceed 1")
    if n_samples < 2:
        raise PreconditionError("need at least two samples")
    _check_boundary(boundary)
    rng.check_seed(seed)
    z = complex(z)
    j = M.label_index(root_label)
    exact = _reference(M, z, settings)
    tail = exact if boundary == "reference" else None
    base = forward_green_by_generation(M, j, R, z, tail=tail)
    if not model.is_trivial():
        layout(M, j, R, vertex_cap)  # surface the size check before any sampling
    jobs = [(M, j, R, model, z, seed, idx, boundary, settings, vertex_cap, tail, base, p)
            for idx in chunks(n_samples, workers)]
    G = np.array(run_samples(_sample_chunk, jobs, workers))
    mean, stderr = _moment_values(G)
    extras = {"truncation_error": float(gamma(base, exact[j])) ** p}
    return MomentEntry(z.imag, z.real, n_samples, mean, stderr, float(p), float(model.lam), R,
                       seed, boundary, extras)


def depth_heuristic(M: SubstitutionMatrix, root_label, eta: float,
                    vertex_cap: int = SAMPLE_VERTEX_CAP, max_depth: int = MAX_HEURISTIC_DEPTH) -> int:
    """``min(ceil(5 / eta), max_depth, deepest R that fits vertex_cap)``."""
    target = min(int(math.ceil(5.0 / eta)), max_depth)
    R = 0
    while R < target and projected_size(M, root_label, R + 1) <= vertex_cap:
        R += 1
    return R


def check_energy(M: SubstitutionMatrix, E: float, bands: BandList, band_margin: float):
    if not bands.contains(E):
        raise PreconditionError(f"energy {E} is not inside a detected band {bands.intervals}")
    for s in spectral_edge_set(M, bands):
        if abs(E - s) < band_margin:
            raise PreconditionError(f"energy {E} is within {band_margin} of exceptional energy {s}")


def eta_sweep(M: SubstitutionMatrix, root_label, E: float, model: PerturbationModel, p: float = 2.0,
              eta_schedule: Sequence[float] = (0.1, 0.03, 0.01, 3e-3, 1e-3), n_samples: int = 100,
              R: Optional[int] = None, seed: int = 0, boundary: str = "reference",
              settings: SolverSettings = DEFAULT_SETTINGS, workers: int = 1,
              vertex_cap: int = SAMPLE_VERTEX_CAP, bands: Optional[BandList] = None,
              band_margin: float = 0.1, boundedness_factor: float = 2.0,
              check: bool = True) -> MomentReport:
    """One :func:`moment_statistic` entry per ``eta``; flags whether the last two
    means agree within ``boundedness_factor``.

    ``R=None`` picks the depth per ``eta`` with :func:`depth_heuristic`.
    """
    j = M.label_index(root_label)
    if check:
        if bands is None:
            bands = detect_bands(M, settings=settings, root_label=j)
        check_energy(M, E, bands, band_margin)
    entries = []
    for eta in eta_schedule:
        depth = R if R is not None else depth_heuristic(M, j, eta, vertex_cap)
        entries.append(moment_statistic(M, j, complex(E, eta), model, p, n_samples, depth, seed,
                                        boundary, settings, workers, vertex_cap))
    flag = boundedness_flag(entries, boundedness_factor)
    params = {"energy": E, "root_label": j, "boundedness_factor": boundedness_factor,
              "band_margin": band_margin, "depth_rule": "fixed" if R is not None else "heuristic"}
    return MomentReport("random", entries, flag, params)


def radial_green(M: SubstitutionMatrix, root_label, potential: RadialPotential, lam: float, z,
                 settings: SolverSettings = DEFAULT_SETTINGS, reference=None) -> complex:
    """Root Green function under a radially label-symmetric potential.

    Runs the generation recursion from the cutoff ``N`` up to the root; below
    the cutoff the forward trees are unperturbed and contribute the
    fixed-point Green vector exactly.
    """
    z = complex(z)
    j = M.label_index(root_label)
    if potential.values.shape[1] != M.label_count:
        raise MalformedInputError("radial potential needs one column per label")
    tail = _reference(M, z, settings) if reference is None else np.asarray(reference)
    N = potential.cutoff
    if N == 0:
        return complex(tail[j])
    return forward_green_by_generation(M, j, N - 1, z, potential=lam * potential.values, tail=tail)


def radial_sweep(M: SubstitutionMatrix, root_label, potential: RadialPotential, lam: float, E: float,
                 eta_schedule: Sequence[float], p: float = 2.0,
                 settings: SolverSettings = DEFAULT_SETTINGS,
                 boundedness_factor: float = 2.0) -> MomentReport:
    """Radial Green function along an eta schedule, one deterministic entry per eta.

    ``mean`` holds ``gamma(G_v, G_L) ** p``; the extras carry ``G_v`` itself.
    """
    j = M.label_index(root_label)
    entries = []
    green = None
    for eta in eta_schedule:
        z = complex(E, eta)
        green = solve_continued(M, z, settings, green)
        g = radial_green(M, j, potential, lam, z, settings, green.values)
        dist = float(gamma(g, green.values[j])) ** p
        extras = {"re": g.real, "im": g.imag, "im_unperturbed": float(green.values[j].imag)}
        entries.append(MomentEntry(eta, E, 1, dist, 0.0, float(p), float(lam), potential.cutoff,
                                   0, "reference", extras))
    flag = boundedness_flag(entries, boundedness_factor)
    return MomentReport("radial", entries, flag, {"energy": E, "root_label": j})
