import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixreg.errors import GeometryError
from mixreg.geometry import ball, collar_region
from mixreg.grid import GridFunction, Lattice
from mixreg.kernels import make_fractional
from mixreg.regularity import (boundary_harnack, gradient_holder_fit, harnack_ladder,
                               interior_gradient_scaling, lipschitz_norm, oscillation_decay,
                               power_fit, quotient_field, quotient_holder_fit, regularity_suite)
from mixreg.solver import assemble, solve_linear

B1 = ball()


def torsion(p):
    return np.maximum(1 - np.sum(p**2, -1), 0.0) / 4


@pytest.fixture(scope="module")
def lat64():
    return Lattice.covering((-1.05, -1.05), (1.05, 1.05), 1 / 64)


@pytest.fixture(scope="module")
def solved_torsion():
    return solve_linear(assemble(B1, None, 0.0, 1 / 64), -1.0).solution


def test_lipschitz_of_torsion(solved_torsion):
    assert lipschitz_norm(solved_torsion) == pytest.approx(0.5, abs=0.02)


def test_lipschitz_simple_fields(lat64):
    assert lipschitz_norm(GridFunction.from_function(lat64, lambda p: 3 * p[..., 0])) == pytest.approx(3.0)
    assert lipschitz_norm(GridFunction(lat64, np.zeros(lat64.shape))) == 0.0


def test_quotient_of_torsion(solved_torsion):
    v = quotient_field(solved_torsion, B1)
    i = solved_torsion.lattice.index_of((0.90625, 0.0))
    assert v.values[i] == pytest.approx((1 + 0.90625) / 4, abs=solved_torsion.h)


def test_quotient_of_distance_powers(lat64):
    d = GridFunction.from_function(lat64, B1.delta)
    v = quotient_field(d, B1)
    inside, flagged = v.meta["inside"], v.meta["flagged"]
    np.testing.assert_allclose(v.values[inside & ~flagged], 1.0, atol=1e-12)
    # extrapolated nodes inherit the interpolation error of the curved boundary
    np.testing.assert_allclose(v.values[flagged], 1.0, atol=lat64.h)
    d2 = GridFunction.from_function(lat64, lambda p: B1.delta(p) ** 2)
    v2 = quotient_field(d2, B1)
    direct = inside & ~v2.meta["flagged"]
    np.testing.assert_allclose(v2.values[direct], v2.meta["delta"][direct], atol=1e-12)


def test_constant_field_has_infinite_tau(lat64):
    c = GridFunction(lat64, np.ones(lat64.shape), 1.0)
    fit = oscillation_decay(c, B1, (1.0, 0.0), levels=2)
    assert fit.tau == math.inf
    assert all(r["osc"] == 0 for r in fit.rows)


def test_synthetic_sqrt_profile_tau():
    lat = Lattice.covering((0.7, -0.3), (1.02, 0.3), 1 / 1024)
    s = GridFunction.from_function(lat, lambda p: B1.delta(p) ** 0.5)
    fit = oscillation_decay(s, B1, (1.0, 0.0), rho1=0.25, levels=5, ratio=2)
    assert fit.tau == pytest.approx(0.5, abs=0.05)


def test_torsion_quotient_tau_saturates():
    lat = Lattice.covering((-1.05, -1.05), (1.05, 1.05), 1 / 512)
    v = quotient_field(GridFunction.from_function(lat, torsion), B1)
    fit = oscillation_decay(v, B1, (1.0, 0.0), levels=5, ratio=2)
    assert fit.tau == pytest.approx(1.0, abs=0.1)
    assert fit.monotone


def test_too_few_levels_raises(lat64):
    s = GridFunction.from_function(lat64, lambda p: B1.delta(p) ** 0.5)
    with pytest.raises(GeometryError):
        oscillation_decay(s, B1, (1.0, 0.0), rho1=0.02, levels=3)


def test_harnack_constant_and_torsion(lat64):
    one = GridFunction(lat64, np.ones(lat64.shape), 1.0)
    reg = collar_region(B1, (1.0, 0.0), 0.2, lattice=lat64)
    assert boundary_harnack(one, reg).ratio == 1.0
    lat = Lattice.covering((-1.05, -1.05), (1.05, 1.05), 1 / 256)
    v = quotient_field(GridFunction.from_function(lat, torsion), B1)
    res = boundary_harnack(v, collar_region(B1, (1.0, 0.0), 0.2, lattice=lat))
    assert res.positive and res.ratio <= 1.2


def test_harnack_requires_same_lattice(lat64):
    other = Lattice.covering((-1, -1), (1, 1), 1 / 32)
    v = GridFunction(lat64, np.ones(lat64.shape))
    with pytest.raises(GeometryError):
        boundary_harnack(v, collar_region(B1, (1.0, 0.0), 0.2, lattice=other))


def test_harnack_ladder_additive_constant(lat64):
    v = quotient_field(GridFunction.from_function(lat64, torsion), B1)
    lad = harnack_ladder(v, B1, (1.0, 0.0), [0.2, 0.1])
    for row in lad.rows:
        assert row.sup <= lad.C_fit * (row.inf + row.scale**lad.alpha_hat) + 1e-12


def test_gradient_holder_affine_saturates(lat64):
    u = GridFunction.from_function(lat64, lambda p: 1 + 3 * p[..., 0] - p[..., 1])
    fit = gradient_holder_fit(u, B1)
    assert fit.saturated and fit.exponent == 1.0


def test_gradient_holder_torsion(solved_torsion):
    assert gradient_holder_fit(solved_torsion, B1).exponent >= 0.9


def test_gradient_holder_mixed_problem():
    u = solve_linear(assemble(B1, make_fractional(1.5), 1.0, 1 / 64, A0=1.0), -1.0).solution
    fit = gradient_holder_fit(u, B1)
    assert fit.exponent > 0 and fit.fit.r2 >= 0.9


def test_quotient_holder_of_pure_power():
    lat = Lattice.covering((-1.05, -1.05), (1.05, 1.05), 1 / 128)
    s = GridFunction.from_function(lat, lambda p: B1.delta(p) ** 0.5)
    assert quotient_holder_fit(s, B1).exponent == pytest.approx(0.5, abs=0.05)


def test_gradient_scaling_examples(lat64):
    c = GridFunction(lat64, np.ones(lat64.shape), 1.0)
    assert all(r["max_grad"] == 0 for r in interior_gradient_scaling(c, B1).rows)
    lat = Lattice.covering((-1.05, -1.05), (1.05, 1.05), 1 / 128)
    s = GridFunction.from_function(lat, lambda p: B1.delta(p) ** 0.5)
    assert interior_gradient_scaling(s, B1).exponent == pytest.approx(-0.5, abs=0.05)
    v = quotient_field(GridFunction.from_function(lat, torsion), B1)
    assert interior_gradient_scaling(v, B1).exponent == pytest.approx(0.0, abs=0.05)


def test_suite_on_torsion(solved_torsion):
    rep = regularity_suite(solved_torsion, B1, x0=(1.0, 0.0))
    d = rep.to_dict()
    assert d["tau_fit"] > 0 and rep.kappa_fit > 0 and rep.gamma_fit > 0
    assert rep.oscillation_csv().startswith("scale,sup,inf,osc")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.01, 10.0))
def test_power_fit_recovers_exponent(p, c):
    x = np.geomspace(1e-3, 1, 8)
    fit = power_fit(x, c * x**p)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.3, 0.9))
def test_holder_of_distance_power(beta):
    lat = Lattice.covering((-1.05, -1.05), (1.05, 1.05), 1 / 64)
    s = GridFunction.from_function(lat, lambda p: B1.delta(p) ** beta)
    assert quotient_holder_fit(s, B1).exponent == pytest.approx(beta, abs=0.05)
