import cmath
import math

import numpy as np
import pytest

from conetree.errors import ConvergenceError, PreconditionError
from conetree.green import (
    SolverSettings,
    detect_bands,
    dos,
    fixed_point_residual,
    green_on_grid,
    operator_norm_bound,
    solve_continued,
    solve_green,
    spectral_edge_set,
    verify_green_bound,
)
from conetree.hyperbolic import gamma
from conetree.matrix import substitution_matrix


def regular_closed_form(d, z):
    """Upper half-plane root of d G^2 + z G + 1 = 0."""
    roots = np.roots([d, z, 1])
    return complex(roots[np.argmax(roots.imag)])


def test_closed_form_helper_is_a_root():
    g = regular_closed_form(2, 1j)
    assert abs(2 * g * g + 1j * g + 1) < 1e-14
    assert g == pytest.approx(0.5j)


@pytest.mark.parametrize("z", [1j, 3j, 0.7 + 0.2j, -2 + 0.05j])
def test_binary_tree_matches_quadratic(binary, z):
    g = solve_green(binary, z)
    assert g.values[0] == pytest.approx(regular_closed_form(2, z), abs=1e-10)


def test_binary_at_three_i(binary):
    g = solve_green(binary, 3j)
    assert g.values[0].imag == pytest.approx((-3 + math.sqrt(17)) / 4, rel=1e-10)
    assert abs(g.values[0].real) < 1e-12


def test_fibonacci_residual_and_bound(fib):
    g = solve_green(fib, 2j)
    G0, G1 = g.values
    # independent substitution into the recursion written out by hand
    assert abs(-1 / G0 - (2j + 2 * G0 + G1)) < 1e-10
    assert abs(-1 / G1 - (2j + G0 + G1)) < 1e-10
    assert abs(G0) <= 1 / math.sqrt(2) and abs(G1) <= 1
    assert fixed_point_residual(fib, g) < 1e-10


def test_initialisations_agree(fib):
    s = SolverSettings()
    for z in (0.3 + 0.01j, 2 + 1j, -1.5 + 0.1j):
        a = solve_green(fib, z, s, warm_start=np.array([1j, 1j]))
        b = solve_green(fib, z, s, warm_start=np.array([2j, 2j]))
        assert np.max(gamma(a.values, b.values)) < 10 * s.tolerance


def test_iteration_limit_raises(fib):
    s = SolverSettings(max_iterations=1)
    with pytest.raises(ConvergenceError) as info:
        solve_green(fib, 0.1 + 1e-6j, s)
    assert info.value.last is not None


def test_settings_validation():
    with pytest.raises(PreconditionError):
        SolverSettings(eta_schedule=(1.0, 1.0, 1e-6))
    with pytest.raises(PreconditionError):
        SolverSettings(damping=0)
    s = SolverSettings().with_eta_floor(1e-3)
    assert s.eta_schedule == (1.0, 0.1, 0.01, 1e-3)
    assert s.threshold == pytest.approx(10 * math.sqrt(1e-3))


def test_grid_inside_and_outside_band(binary):
    inside, outside = green_on_grid(binary, [0.0, 4.0])
    assert inside.values[0].imag == pytest.approx(1 / math.sqrt(2), abs=1e-3)
    assert outside.values[0].imag < 1e-3


def test_grid_at_unit_eta_equals_direct(fib):
    s = SolverSettings(eta_floor=1.0, eta_schedule=(1.0,))
    g = green_on_grid(fib, [0.4], s)[0]
    assert np.array_equal(g.values, solve_green(fib, 0.4 + 1j, s).values)


def test_grid_independent_of_workers(fib):
    s = SolverSettings().with_eta_floor(1e-3)
    E = np.linspace(-3, 3, 7)
    one = green_on_grid(fib, E, s, workers=1)
    two = green_on_grid(fib, E, s, workers=2)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(one, two))


def test_continuation_reaches_floor(fib):
    g = solve_continued(fib, 0.5 + 1e-6j)
    assert np.all(g.values.imag > 0)
    assert g.z == 0.5 + 1e-6j


def test_bands_regular_trees(binary):
    bands = detect_bands(binary, (-4, 4), 0.05)
    assert len(bands) == 1
    a, b = bands.intervals[0]
    assert a == pytest.approx(-2 * math.sqrt(2), abs=1e-3)
    assert b == pytest.approx(2 * math.sqrt(2), abs=1e-3)


def test_edge_set_adds_zero_only_off_regular(fib, binary):
    fb = detect_bands(fib, coarse_step=0.05)
    assert 0.0 in spectral_edge_set(fib, fb)
    bb = detect_bands(binary, coarse_step=0.05)
    assert 0.0 not in spectral_edge_set(binary, bb)


def test_dos_values(binary):
    s = SolverSettings().with_eta_floor(1e-6)
    curve = dos(binary, 0, [0.0, 4.0], s)
    assert curve.rho[0] == pytest.approx(1 / (math.pi * math.sqrt(2)), abs=1e-3)
    assert curve.rho[1] < 1e-3
    assert np.all(curve.rho >= 0)


def test_dos_integral_fibonacci(fib):
    s = SolverSettings().with_eta_floor(1e-3)
    r = operator_norm_bound(fib)
    grid = np.arange(-r, r + 1e-9, 0.01)
    curve = dos(fib, 1, grid, s)
    assert curve.integral() == pytest.approx(1.0, abs=0.02)
    assert curve.cumulative()[-1] == pytest.approx(curve.integral(), rel=1e-12)


def test_green_bound_examples(binary, fib, rng):
    rep = verify_green_bound(binary, [1j])
    assert rep.max_ratio == pytest.approx(0.5 * math.sqrt(2), rel=1e-10)
    far = verify_green_bound(binary, [100j])
    assert far.max_ratio < 0.02
    zs = rng.uniform(-10, 10, 200) + 1j * rng.uniform(1e-4, 10, 200)
    assert verify_green_bound(fib, zs).ok


def test_herglotz_positivity(fib, rng):
    for z in rng.uniform(-4, 4, 20) + 1j * rng.uniform(1e-3, 2, 20):
        assert np.all(solve_continued(fib, z).values.imag > 0)
