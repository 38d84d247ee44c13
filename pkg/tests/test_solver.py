import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixreg.errors import ConvergenceError, QuadratureError, ResourceLimitError
from mixreg.geometry import ball
from mixreg.grid import GridFunction
from mixreg.kernels import make_fractional
from mixreg.solver import (assemble, comparison_check, solve_hjb, solve_linear,
                           solve_semilinear)

B1 = ball()
K15 = make_fractional(1.5)


@pytest.fixture(scope="module")
def laplace32():
    return assemble(B1, None, 0.0, 1 / 32)


@pytest.fixture(scope="module")
def mixed32():
    return assemble(B1, K15, 0.5, 1 / 32, A0=1.0)


@pytest.fixture(scope="module")
def mixed16():
    return assemble(B1, K15, 0.5, 1 / 16, A0=1.0)


@pytest.fixture(scope="module")
def torsion32(laplace32):
    return solve_linear(laplace32, -1.0)


def test_local_operator_annihilates_affine(laplace32):
    A = laplace32
    g = lambda p: 1 + 2 * p[..., 0] - p[..., 1]
    u = g(A.points)
    out = A.apply(u) + A.boundary_term(g)
    assert np.max(np.abs(out)) < 1e-9


def test_row_sums_vanish(mixed16):
    rng = np.random.default_rng(0)
    for p in rng.choice(mixed16.size, 100, replace=False):
        nodes, cross, tail = mixed16.row(int(p))
        total = sum(nodes.values()) + sum(c for _, c in cross) + tail
        assert abs(total) < 1e-8 * max(abs(v) for v in nodes.values())


def test_off_diagonal_entries_nonnegative(mixed16):
    rng = np.random.default_rng(1)
    for p in rng.choice(mixed16.size, 30, replace=False):
        nodes, cross, tail = mixed16.row(int(p))
        idx = tuple(np.argwhere(mixed16.interior)[p])
        assert all(v >= 0 for key, v in nodes.items() if key != idx)
        assert all(c >= 0 for _, c in cross) and tail >= 0


def test_torsion_anchor():
    A = assemble(B1, None, 0.0, 1 / 64)
    rep = solve_linear(A, -1.0)
    assert rep.solution.at((0.0, 0.0)) == pytest.approx(0.25, abs=5e-3)
    exact = (1 - (A.points**2).sum(-1)) / 4
    assert np.max(np.abs(rep.interior_values - exact)) < 1e-10
    assert rep.certificate.passed


def test_manufactured_convergence():
    # u = (1 - |x|^2) e^{x1} vanishes on the circle; the nodal error drops ~4x per halving
    exact = lambda p: (1 - (p**2).sum(-1)) * np.exp(p[..., 0])
    lap = lambda p: np.exp(p[..., 0]) * ((1 - (p**2).sum(-1)) - 4 * p[..., 0] - 4)
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        A = assemble(B1, None, 0.0, h)
        errs.append(np.max(np.abs(solve_linear(A, lap).interior_values - exact(A.points))))
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_zero_data_gives_zero(laplace32):
    rep = solve_linear(laplace32, 0.0)
    assert np.all(rep.interior_values == 0)


def test_mixed_problem_positive_and_below_torsion(mixed32):
    rep = solve_linear(mixed32, -1.0)
    assert np.all(rep.interior_values > 0)
    assert rep.solution.at((0.0, 0.0)) < 0.25


def test_assemble_rejects_bad_a():
    with pytest.raises(QuadratureError):
        assemble(B1, K15, 2.0, 1 / 16, A0=1.0)
    with pytest.raises(QuadratureError):
        assemble(B1, None, 0.5, 1 / 16)


def test_memory_cap():
    with pytest.raises(ResourceLimitError):
        assemble(B1, K15, 0.5, 1 / 32, memory_cap=1000)


def test_semilinear_reduces_to_linear(laplace32, torsion32):
    rep = solve_semilinear(laplace32, None, -1.0, tol=1e-10)
    assert np.max(np.abs(rep.interior_values - torsion32.interior_values)) < 1e-8


def test_semilinear_contraction(laplace32):
    rep = solve_semilinear(laplace32, None, lambda u: -1 + 0.1 * u, tol=1e-8)
    assert rep.iterations <= 50
    assert rep.extra["contracted"]


def test_semilinear_gradient_term_adds_forcing(laplace32, torsion32):
    # Δu = -1 - 0.1|Du| pushes u above the torsion function
    rep = solve_semilinear(laplace32, lambda s: 0.1 * s, -1.0, tol=1e-9)
    u0 = rep.solution.at((0.0, 0.0))
    assert torsion32.solution.at((0.0, 0.0)) < u0 < 0.25 * 1.1
    # still radial: compare the four axis points
    vals = [rep.solution.at(p) for p in ((0.5, 0), (-0.5, 0), (0, 0.5), (0, -0.5))]
    assert np.ptp(vals) < 1e-8


def test_semilinear_divergence_raises(laplace32):
    with pytest.raises(ConvergenceError) as exc:
        solve_semilinear(laplace32, None, lambda u: -1 - 50 * u, maxiter=30)
    assert exc.value.history


def test_hjb_singleton_control(laplace32):
    # convention: L u + min max {b·Du + f} = 0, so {b=0, f} solves L u = -f
    rep = solve_hjb(laplace32, [[((0.0, 0.0), -1.0)]])
    lin = solve_linear(laplace32, 1.0)
    assert np.max(np.abs(rep.interior_values - lin.interior_values)) < 1e-9


def test_hjb_symmetric_controls(laplace32):
    controls = [[((0.5, 0.0), -1.0), ((-0.5, 0.0), -1.0)]]
    rep = solve_hjb(laplace32, controls)
    u = rep.solution
    mirrored = u.values[::-1, :]
    assert np.max(np.abs(u.values - mirrored)) < 1e-6
    assert all(b <= a + 1e-12 for a, b in zip(rep.history, rep.history[1:]))


def test_comparison_certificates(torsion32):
    u = torsion32.solution
    sup = GridFunction(u.lattice, u.values + 0.1, u.far_value)
    assert comparison_check(u, sup).passed
    bad = comparison_check(sup, u)
    assert not bad.passed and bad.witness is not None


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_discrete_operator_is_monotone(mixed16, seed):
    # u <= v with equality at a node implies L_h u <= L_h v there
    A = mixed16
    rng = np.random.default_rng(seed)
    u = rng.normal(size=A.size)
    v = u + np.abs(rng.normal(size=A.size))
    p = rng.integers(A.size)
    v[p] = u[p]
    assert A.apply(u)[p] <= A.apply(v)[p] + 1e-9


@settings(max_examples=10, deadline=None)
@given(st.floats(-2.0, 2.0))
def test_linearity_in_source(c):
    A = assemble(B1, None, 0.0, 1 / 16)
    base = solve_linear(A, -1.0).interior_values
    rep = solve_linear(A, -c)
    assert np.allclose(rep.interior_values, c * base, atol=1e-9)
