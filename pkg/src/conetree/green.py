"""Label-indexed forward Green function of the unperturbed tree.

For a vertex of label ``j`` the forward Green function solves

    -1 / G_j = z + sum_k children[j, k] * G_k

and is the unique solution with every component in the upper half-plane.
The solver alternates damped fixed-point steps of the recursion map with
safeguarded Newton steps; convergence is measured in the gamma semi-metric.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConvergenceError, NumericalDomainError, PreconditionError
from .hyperbolic import IM_FLOOR, check_half_plane, gamma
from .matrix import SubstitutionMatrix

DEFAULT_SCHEDULE = (1.0, 0.1, 0.01, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-12
    max_iterations: int = 100_000
    damping: float = 1.0
    eta_floor: float = 1e-6
    eta_schedule: Tuple[float, ...] = DEFAULT_SCHEDULE
    indicator_threshold: Optional[float] = None
    endpoint_tol: float = 1e-4

    def __post_init__(self):
        sched = tuple(float(e) for e in self.eta_schedule)
        object.__setattr__(self, "eta_schedule", sched)
        if not 0 < self.damping <= 1:
            raise PreconditionError("damping must lie in (0, 1]")
        if self.tolerance <= 0 or self.max_iterations < 1 or self.eta_floor <= 0:
            raise PreconditionError("tolerance, max_iterations and eta_floor must be positive")
        if any(b >= a for a, b in zip(sched, sched[1:])) or not sched:
            raise PreconditionError("eta_schedule must be strictly decreasing")
        if sched[-1] != self.eta_floor:
            raise PreconditionError("eta_schedule must end at eta_floor")

    @property
    def threshold(self) -> float:
        if self.indicator_threshold is not None:
            return self.indicator_threshold
        return 10.0 * math.sqrt(self.eta_floor)

    def with_eta_floor(self, eta: float) -> "SolverSettings":
        """Same settings with the schedule cut off at ``eta``."""
        sched = tuple(e for e in self.eta_schedule if e > eta) + (float(eta),)
        return replace(self, eta_floor=float(eta), eta_schedule=sched)


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True, eq=False)
class GreenVector:
    z: complex
    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    def __getitem__(self, j):
        return self.values[j]

    def __len__(self):
        return self.values.shape[0]


def recursion_map(M: SubstitutionMatrix, z, g):
    """Apply the label recursion once: ``-1 / (z + children @ g)``."""
    return -1.0 / (z + M.children.astype(float) @ g)


def fixed_point_residual(M: SubstitutionMatrix, green: GreenVector) -> float:
    """``max_j gamma(G_j, Phi_j(G))``, evaluated independently of the solver."""
    return float(np.max(gamma(green.values, recursion_map(M, green.z, green.values))))


def _newton(A, z, g, current):
    """Safeguarded Newton step on ``g (z + A g) + 1 = 0``; None if rejected."""
    s = z + A @ g
    F = g * s + 1.0
    J = np.diag(s) + g[:, None] * A
    try:
        dx = np.linalg.solve(J, -F)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(dx)):
        return None
    t = 1.0
    for _ in range(6):
        cand = g + t * dx
        if np.all(cand.imag > IM_FLOOR):
            phi = -1.0 / (z + A @ cand)
            if np.all(phi.imag > IM_FLOOR):
                res = float(np.max(gamma(cand, phi)))
                if res < current:
                    return cand
        t *= 0.5
    return None


def _polish(A, z, g, step):
    # gamma is quadratic in the distance, so the stopping rule alone leaves
    # about sqrt(tolerance) relative error; a few Newton steps remove it.
    for _ in range(4):
        cand = _newton(A, z, g, step)
        if cand is None:
            break
        g = cand
        step = float(np.max(gamma(g, -1.0 / (z + A @ g))))
    return g, step


def solve_green(M: SubstitutionMatrix, z, settings: SolverSettings = DEFAULT_SETTINGS,
                warm_start=None) -> GreenVector:
    """Forward Green function per label at ``z`` (``Im z > 0``).

    Iterates until two successive iterates are within ``settings.tolerance``
    in every component, measured with :func:`~conetree.hyperbolic.gamma`.

    Raises
    ------
    ConvergenceError
        ``max_iterations`` exhausted; carries the last iterate.
    NumericalDomainError
        An iterate lost its positive imaginary part.
    """
    z = complex(z)
    check_half_plane(z)
    A = M.children.astype(float)
    if warm_start is None:
        g = np.full(M.label_count, 1j)
    else:
        g = np.array(warm_start.values if isinstance(warm_start, GreenVector) else warm_start,
                     dtype=complex)
        check_half_plane(g)
    damping = settings.damping
    prev = math.inf
    step = math.inf
    for it in range(1, settings.max_iterations + 1):
        phi = -1.0 / (z + A @ g)
        if not np.all(phi.imag > IM_FLOOR):
            raise NumericalDomainError(f"iterate left the upper half-plane at z={z}")
        step = float(np.max(gamma(g, phi)))
        if step < settings.tolerance:
            g, step = _polish(A, z, g, step)
            return GreenVector(z, -1.0 / (z + A @ g), it, step)
        cand = _newton(A, z, g, step)
        if cand is not None:
            g = cand
            continue
        if step > prev:
            damping = max(damping / 2, 1.0 / 64)
        prev = step
        g = (1.0 - damping) * g + damping * phi
    raise ConvergenceError(
        f"no convergence at z={z} after {settings.max_iterations} iterations (step {step:.3g})",
        last=g, residual=step, z=z)


def solve_continued(M: SubstitutionMatrix, z, settings: SolverSettings = DEFAULT_SETTINGS,
                    warm_start=None) -> GreenVector:
    """Solve at ``z`` by descending the eta schedule from above ``Im z``."""
    z = complex(z)
    green = warm_start
    for eta in settings.eta_schedule:
        if eta <= z.imag:
            break
        green = solve_green(M, complex(z.real, eta), settings, green)
    return solve_green(M, z, settings, green)


def _solve_energies(args):
    M, energies, settings = args
    out = []
    for E in energies:
        try:
            out.append(solve_continued(M, complex(E, settings.eta_floor), settings))
        except ConvergenceError as exc:
            raise ConvergenceError(f"E={E}, eta={exc.z.imag}: {exc}", last=exc.last,
                                   residual=exc.residual, z=exc.z) from exc
    return out


def green_on_grid(M: SubstitutionMatrix, energies: Sequence[float],
                  settings: SolverSettings = DEFAULT_SETTINGS, workers: int = 1) -> List[GreenVector]:
    """Green vectors at ``E + i*eta_floor`` for every energy of the grid.

    Each energy runs its own eta continuation, so the output does not depend
    on ``workers``.
    """
    energies = [float(E) for E in energies]
    if workers <= 1 or len(energies) < 2:
        return _solve_energies((M, energies, settings))
    chunks = np.array_split(np.arange(len(energies)), workers)
    jobs = [(M, [energies[i] for i in c], settings) for c in chunks if len(c)]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_solve_energies, jobs):
            out.extend(part)
    return out


@dataclass(frozen=True)
class BandList:
    intervals: Tuple[Tuple[float, float], ...]
    label: int = 0
    eta_floor: float = 1e-6

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def endpoints(self) -> List[float]:
        return [e for ab in self.intervals for e in ab]

    def contains(self, E: float) -> bool:
        return any(a <= E <= b for a, b in self.intervals)


def operator_norm_bound(M: SubstitutionMatrix) -> float:
    """Crude bound on the adjacency operator norm: maximal degree plus one."""
    return float(M.out_degree.max() + 1 + 1)


def _in_band(M, j, E, settings) -> bool:
    # Inside a band Im G barely moves when eta shrinks tenfold; outside it
    # scales with eta.  The ratio is free of the component's amplitude, so
    # every label sees the edge at the same place.
    eta = settings.eta_floor
    coarse = solve_continued(M, complex(E, 10 * eta), settings)
    fine = solve_green(M, complex(E, eta), settings, coarse)
    return fine.values[j].imag > 0.5 * coarse.values[j].imag


def detect_bands(M: SubstitutionMatrix, window: Optional[Tuple[float, float]] = None,
                 coarse_step: float = 0.01, settings: SolverSettings = DEFAULT_SETTINGS,
                 root_label=0, workers: int = 1) -> BandList:
    """Spectral bands read off the root component of the Green function.

    Grid points count as inside when ``Im G_j(E + i eta_floor)`` exceeds the
    indicator threshold.  Each edge is then bisected to
    ``settings.endpoint_tol`` using the ratio ``Im G_j(eta) / Im G_j(10 eta)``,
    which stays near 1 inside the spectrum and near 0.1 outside.
    """
    j = M.label_index(root_label)
    if window is None:
        r = operator_norm_bound(M)
        window = (-r, r)
    lo, hi = float(window[0]), float(window[1])
    n = int(math.floor((hi - lo) / coarse_step + 1e-9)) + 1
    grid = lo + coarse_step * np.arange(n)
    if grid[-1] < hi - 1e-12:
        grid = np.append(grid, hi)
    greens = green_on_grid(M, grid, settings, workers)
    thr = settings.threshold
    inside = np.array([g.values[j].imag > thr for g in greens])

    def refine(inner, outer):
        # Push the outer end further out if the grid threshold misjudged it.
        step = outer - inner
        while _in_band(M, j, outer, settings) and lo - abs(step) <= outer <= hi + abs(step):
            inner, outer = outer, outer + step
        while abs(outer - inner) > settings.endpoint_tol:
            mid = 0.5 * (inner + outer)
            if _in_band(M, j, mid, settings):
                inner = mid
            else:
                outer = mid
        return 0.5 * (inner + outer)

    intervals = []
    i = 0
    while i < len(grid):
        if not inside[i]:
            i += 1
            continue
        start = i
        while i < len(grid) and inside[i]:
            i += 1
        left = grid[0] if start == 0 else refine(grid[start], grid[start - 1])
        right = grid[-1] if i == len(grid) else refine(grid[i - 1], grid[i])
        if intervals and left <= intervals[-1][1]:
            left = intervals.pop()[0]
        if right > left:
            intervals.append((float(left), float(right)))
    return BandList(tuple(intervals), j, settings.eta_floor)


def spectral_edge_set(M: SubstitutionMatrix, bands: BandList) -> List[float]:
    """Operational exceptional energy set: band endpoints, plus 0 unless regular."""
    pts = set(bands.endpoints())
    if not M.is_regular():
        pts.add(0.0)
    return sorted(pts)


@dataclass(frozen=True, eq=False)
class DOSCurve:
    energies: np.ndarray
    rho: np.ndarray
    label: int
    eta_floor: float

    def integral(self) -> float:
        return float(np.trapezoid(self.rho, self.energies))

    def cumulative(self) -> np.ndarray:
        dE = np.diff(self.energies)
        steps = 0.5 * (self.rho[1:] + self.rho[:-1]) * dE
        return np.concatenate([[0.0], np.cumsum(steps)])


def dos(M: SubstitutionMatrix, root_label, energies, settings: SolverSettings = DEFAULT_SETTINGS,
        workers: int = 1) -> DOSCurve:
    """Density of the root spectral measure, ``Im G_j(E + i eta_floor) / pi``."""
    j = M.label_index(root_label)
    energies = np.asarray(energies, dtype=float)
    greens = green_on_grid(M, energies, settings, workers)
    rho = np.array([g.values[j].imag for g in greens]) / math.pi
    return DOSCurve(energies, rho, j, settings.eta_floor)


@dataclass(frozen=True)
class GreenBoundReport:
    max_ratio: float
    worst_z: complex
    worst_label: int
    samples: int

    @property
    def ok(self) -> bool:
        return self.max_ratio <= 1.0 + 1e-9


def verify_green_bound(M: SubstitutionMatrix, zs, settings: SolverSettings = DEFAULT_SETTINGS) -> GreenBoundReport:
    """Largest ``|G_j(z)| * sqrt(M_jj)`` over the sample points and labels."""
    diag = np.sqrt(np.diagonal(M.entries).astype(float))
    best = (-1.0, None, -1)
    count = 0
    for z in zs:
        z = complex(z)
        if z.imag < settings.eta_floor:
            raise PreconditionError(f"sample {z} below eta_floor {settings.eta_floor}")
        g = solve_continued(M, z, settings)
        ratios = np.abs(g.values) * diag
        k = int(np.argmax(ratios))
        if ratios[k] > best[0]:
            best = (float(ratios[k]), z, k)
        count += 1
    return GreenBoundReport(best[0], best[1], best[2], count)
