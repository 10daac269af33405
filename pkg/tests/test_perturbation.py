import math

import numpy as np
import pytest

from conetree.errors import MalformedInputError, PreconditionError, ResourceError
from conetree.green import SolverSettings, solve_green
from conetree.hyperbolic import gamma, phi_step
from conetree.oracle import exact_forward_green, forward_green_by_generation
from conetree.perturbation import (
    Discrete,
    PerturbationModel,
    RadialPotential,
    Uniform,
    depth_heuristic,
    eta_sweep,
    moment_statistic,
    perturbed_green,
    point_mass,
    radial_green,
    radial_sweep,
    sample_decorations,
)
from conetree.tree import build_tree


def test_laws_validate():
    with pytest.raises(MalformedInputError):
        Uniform(-2, 0)
    with pytest.raises(MalformedInputError):
        Discrete((1.0,), (1.0,))
    with pytest.raises(MalformedInputError):
        Discrete((0.1, 0.2), (0.5, 0.4))
    with pytest.raises(MalformedInputError):
        PerturbationModel(-0.1, (Uniform(),), (Uniform(),))


def test_zero_coupling_decorations_are_exact(fib):
    tree = build_tree(fib, 0, 5)
    dec = sample_decorations(tree, PerturbationModel.iid(0.0, 2), seed=3, sample_index=9)
    assert np.all(dec.potential == 0.0)
    assert np.all(dec.weight == 1.0)


def test_decorations_deterministic(fib):
    tree = build_tree(fib, 0, 6)
    model = PerturbationModel.iid(0.3, 2)
    a = sample_decorations(tree, model, 11, 4)
    b = sample_decorations(tree, model, 11, 4)
    assert a.potential.tobytes() == b.potential.tobytes()
    assert a.weight.tobytes() == b.weight.tobytes()
    c = sample_decorations(tree, model, 11, 5)
    assert not np.array_equal(a.potential, c.potential)


def test_decorations_traversal_independent(binary):
    # the first vertices of a deeper tree get the same draws
    model = PerturbationModel.iid(0.5, 1)
    small = sample_decorations(build_tree(binary, 0, 3), model, 2, 0)
    big = sample_decorations(build_tree(binary, 0, 6), model, 2, 0)
    n = len(small.potential)
    assert np.array_equal(small.potential, big.potential[:n])
    assert np.array_equal(small.weight[1:], big.weight[1:n])


def test_uniform_potential_mean(binary):
    tree = build_tree(binary, 0, 16)  # 131071 vertices
    lam = 0.1
    dec = sample_decorations(tree, PerturbationModel.iid(lam, 1), 0, 0)
    v = dec.potential / lam
    assert len(v) >= 10 ** 5
    assert abs(v.mean()) < 0.01
    assert v.min() >= -1 and v.max() <= 1
    theta = (dec.weight[1:] - 1) / lam
    assert abs(theta.mean()) < 0.01


def test_label_dependent_laws(fib):
    model = PerturbationModel(1.0, (point_mass(0.5), point_mass(-0.25)), (Uniform(0, 0),) * 2)
    dec = sample_decorations(build_tree(fib, 0, 4), model, 0, 0)
    expected = np.where(dec.labels == 0, 0.5, -0.25)
    assert np.array_equal(dec.potential, expected)


def test_discrete_law_frequencies():
    law = Discrete((-0.5, 0.5), (0.2, 0.8))
    u = np.random.default_rng(1).random(10 ** 5)
    draws = law.ppf(u)
    assert abs(np.mean(draws == 0.5) - 0.8) < 0.005


def test_zero_coupling_reaches_fixed_point(binary):
    model = PerturbationModel.iid(0.0, 1)
    g = perturbed_green(binary, 0, 40, model, 1j, seed=5, sample_index=0, boundary="free")
    assert abs(g - 0.5j) < 1e-8


def test_zero_coupling_equals_unperturbed_truncation(fib):
    model = PerturbationModel.iid(0.0, 2)
    z = 0.7 + 0.05j
    for boundary in ("free", "reference"):
        g = perturbed_green(fib, 0, 6, model, z, 1, 3, boundary)
        tail = None if boundary == "free" else solve_green(fib, 0.7 + 0.05j).values
        assert gamma(g, forward_green_by_generation(fib, 0, 6, z, tail=tail)) == 0.0


def test_degenerate_zero_laws_reduce_exactly(fib):
    zero = PerturbationModel(0.4, (point_mass(),) * 2, (Uniform(0, 0),) * 2)
    assert zero.is_trivial()
    z = 0.2 + 0.1j
    g = perturbed_green(fib, 1, 5, zero, z, 0, 0, "free")
    assert g == exact_forward_green(build_tree(fib, 1, 5), z)


def test_perturbed_matches_materialised_oracle(fib):
    model = PerturbationModel.iid(0.3, 2)
    z = -0.4 + 0.02j
    g = perturbed_green(fib, 0, 5, model, z, 7, 2, "free")
    dec = sample_decorations(build_tree(fib, 0, 5), model, 7, 2)
    assert g == exact_forward_green(dec, z)


@pytest.mark.slow
def test_weak_coupling_samples_stay_in_half_plane(binary):
    model = PerturbationModel.iid(0.05, 1)
    ref = solve_green(binary, 1j).values
    vals = [perturbed_green(binary, 0, 20, model, 1j, 0, i, "free", vertex_cap=2 ** 22,
                            reference=ref) for i in range(1000)]
    assert all(v.imag > 0 for v in vals)


def test_sample_indices_are_exchangeable(fib):
    model = PerturbationModel.iid(0.2, 2)
    z = 0.3 + 0.05j
    idx = [4, 0, 7, 2]
    a = [perturbed_green(fib, 0, 6, model, z, 9, i) for i in idx]
    b = {i: perturbed_green(fib, 0, 6, model, z, 9, i) for i in sorted(idx)}
    assert a == [b[i] for i in idx]


def test_moment_zero_coupling_is_exactly_zero(fib):
    e = moment_statistic(fib, 0, 0.5 + 0.01j, PerturbationModel.iid(0.0, 2), R=8, n_samples=10)
    assert e.mean == 0.0 and e.stderr == 0.0


def test_moment_preconditions(binary):
    model = PerturbationModel.iid(0.1, 1)
    with pytest.raises(PreconditionError):
        moment_statistic(binary, 0, 1j, model, p=1.0)
    with pytest.raises(PreconditionError):
        moment_statistic(binary, 0, 1j, model, n_samples=1)


def test_moment_doubling_consistent(binary):
    model = PerturbationModel.iid(0.05, 1)
    z = 0.5 + 0.05j
    a = moment_statistic(binary, 0, z, model, 2, 200, R=8, seed=1)
    b = moment_statistic(binary, 0, z, model, 2, 400, R=8, seed=1)
    assert abs(a.mean - b.mean) <= 4 * math.hypot(a.stderr, b.stderr)


def test_moment_regression_baseline(binary):
    # The nominal depth 30 does not fit in memory; depth 12 is the recorded run.
    model = PerturbationModel.iid(0.01, 1)
    with pytest.raises(ResourceError):
        moment_statistic(binary, 0, 0.5 + 0.01j, model, 2, 2000, R=30)
    e = moment_statistic(binary, 0, 0.5 + 0.01j, model, 2, 2000, R=12, seed=0)
    assert math.isfinite(e.mean)
    assert e.mean == pytest.approx(6.060164891908346e-08, rel=1e-9)


def test_moments_finite_close_to_axis(binary):
    s = SolverSettings().with_eta_floor(1e-8)
    e = moment_statistic(binary, 0, 0.5 + 1e-8j, PerturbationModel.iid(0.2, 1), 2, 20, R=8,
                         settings=s)
    assert math.isfinite(e.mean) and math.isfinite(e.stderr)


def test_depth_heuristic(binary, fib):
    assert depth_heuristic(binary, 0, 1.0) == 5
    assert depth_heuristic(binary, 0, 1e-3) == 19
    assert depth_heuristic(binary, 0, 1e-3, vertex_cap=10 ** 30) == 60


def test_sweep_zero_coupling(binary):
    rep = eta_sweep(binary, 0, 0.0, PerturbationModel.iid(0.0, 1), 2, (0.1, 0.01, 1e-3),
                    n_samples=5)
    assert rep.means == [0.0, 0.0, 0.0]
    assert rep.flag == "bounded"


def test_sweep_rejects_exceptional_energy(fib):
    with pytest.raises(PreconditionError):
        eta_sweep(fib, 0, 0.05, PerturbationModel.iid(0.01, 2), n_samples=2)
    with pytest.raises(PreconditionError):
        eta_sweep(fib, 0, 5.0, PerturbationModel.iid(0.01, 2), n_samples=2)


def test_sweep_strong_coupling_reports(binary):
    rep = eta_sweep(binary, 0, 0.0, PerturbationModel.iid(0.9, 1), 2, (0.1, 0.03), 20, R=6)
    assert rep.flag in ("bounded", "unbounded")
    assert len(rep.rows()) == 2


def test_radial_zero_potential(fib):
    pot = RadialPotential(np.zeros((5, 2)))
    z = 0.3 + 0.01j
    assert radial_green(fib, 0, pot, 0.7, z) == pytest.approx(solve_green(fib, z).values[0],
                                                              abs=1e-12)


def test_radial_single_generation(fib):
    c, lam, z = 0.6, 0.5, 0.3 + 0.1j
    pot = RadialPotential(np.array([[c, c]]))
    G = solve_green(fib, z).values
    expected = phi_step(z, lam * c, [(2.0, G[0]), (1.0, G[1])])
    assert radial_green(fib, 0, pot, lam, z) == pytest.approx(expected, rel=1e-12)


def test_radial_decaying_potential_keeps_density(fib):
    pot = RadialPotential.from_function(lambda j, n: (-1) ** n / (n + 1), 2, 200)
    rep = radial_sweep(fib, 0, pot, 0.5, 1.0, (1e-1, 1e-2, 1e-3, 1e-4, 1e-5))
    ims = [e.extras["im"] for e in rep.entries]
    assert min(ims) > 0.1
    assert rep.flag == "bounded"


def test_radial_potential_bounds():
    with pytest.raises(MalformedInputError):
        RadialPotential(np.array([[1.5]]))
