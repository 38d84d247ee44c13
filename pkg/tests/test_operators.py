import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mixreg.errors import QuadratureError
from mixreg.geometry import ball
from mixreg.grid import GridFunction, Lattice
from mixreg.kernels import make_fractional, make_subordinate
from mixreg.operators import (QuadratureScheme, apply_L, apply_nonlocal, apply_z_bracket,
                              l_delta_profile, nonlocal_eval, scaled_nonlocal_eval, z_bracket)

B1 = ball()
TRUNCATED = make_fractional(1.0, 1.0, 1.0)


def field(lat, fn, far=None):
    return GridFunction.from_function(lat, fn, far_value=far)


@pytest.fixture(scope="module")
def box():
    return Lattice.covering([-1, -1], [1, 1], 1 / 32)


def test_constant_is_annihilated_exactly(box):
    u = field(box, lambda x: np.full(x.shape[:-1], 3.0), far=3.0)
    assert np.all(apply_nonlocal(make_fractional(1.5), u) == 0.0)


def test_affine_is_annihilated(box):
    q = QuadratureScheme(R_trunc=0.5)
    u = field(box, lambda x: 1 + 3 * x[..., 0])
    assert abs(nonlocal_eval(make_fractional(1.5), u, [0.0, 0.0], q)) < 1e-10
    Lu = apply_L(1.0, make_fractional(1.5), u, q)
    assert np.nanmax(np.abs(Lu)) < 1e-10


def test_unknown_far_field_needs_truncation(box):
    u = field(box, lambda x: x[..., 0])
    with pytest.raises(QuadratureError):
        apply_nonlocal(make_fractional(1.5), u)


def test_quadratic_oracle_pointwise():
    lat = Lattice.covering([-1, -1], [1, 1], 1 / 128)
    u = field(lat, lambda x: (x**2).sum(-1))
    assert nonlocal_eval(TRUNCATED, u, [0.0, 0.0]) == pytest.approx(2 * math.pi, rel=0.01)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_quadratic_refinement_order(alpha):
    # exact value 2pi/(2-alpha); the near-field cut limits the order to 2-alpha
    k = make_fractional(alpha, 1.0, 1.0)
    hs = [1 / 32, 1 / 64, 1 / 128, 1 / 256]
    err = []
    for h in hs:
        lat = Lattice.covering([-1, -1], [1, 1], h)
        val = nonlocal_eval(k, field(lat, lambda x: (x**2).sum(-1)), [0.0, 0.0])
        err.append(abs(val - 2 * math.pi / (2 - alpha)))
    order = stats.linregress(np.log(hs), np.log(err)).slope
    assert order == pytest.approx(2 - alpha, abs=0.05)
    if alpha <= 1:
        assert order >= 1


def test_quadratic_L_includes_laplacian():
    lat = Lattice.covering([-2, -2], [2, 2], 1 / 64)
    u = field(lat, lambda x: (x**2).sum(-1))
    Lu = apply_L(1.0, TRUNCATED, u)
    i = lat.index_of((0.0, 0.0))
    assert Lu[i] == pytest.approx(4 + 2 * math.pi, rel=0.01)


def test_field_and_pointwise_evaluation_agree():
    lat = Lattice.covering([-1, -1], [1, 1], 1 / 32)
    u = field(lat, lambda x: np.maximum(1 - (x**2).sum(-1), 0.0), far=0.0)
    k = make_fractional(1.5)
    I = apply_nonlocal(k, u)
    for x in ([0.0, 0.0], [0.5, -0.25], [0.90625, 0.0]):
        assert I[lat.index_of(x)] == pytest.approx(nonlocal_eval(k, u, x), rel=1e-9, abs=1e-9)


def test_torsion_local_operator():
    lat = Lattice.covering([-1, -1], [1, 1], 1 / 64)
    u = field(lat, lambda x: np.maximum((1 - (x**2).sum(-1)) / 4, 0.0), far=0.0)
    Lu = apply_L(0.0, None, u, domain=B1)
    assert np.nanmax(np.abs(Lu + 1)) <= 5e-3


def test_scaled_operator_unit_scale():
    lat = Lattice.covering([-1, -1], [1, 1], 1 / 32)
    u = field(lat, lambda x: np.maximum(1 - (x**2).sum(-1), 0.0), far=0.0)
    k = make_fractional(1.5)
    assert scaled_nonlocal_eval(k, 1.0, u, [0.25, 0.0]) == nonlocal_eval(k, u, [0.25, 0.0])


def test_scaled_operator_identity():
    # v(y) = u(r y) with u = |x|^2 and a kernel truncated at 1:
    # r^{2-alpha} I_r v(x) = r^2 I u(r x), both sides by lattice quadrature
    r, h = 0.5, 1 / 128
    k = make_fractional(1.5, 1.0, 1.0)
    lat = Lattice.covering([-2.5, -2.5], [2.5, 2.5], h)
    v = field(lat, lambda x: ((r * x) ** 2).sum(-1))
    lhs = r ** (2 - 1.5) * scaled_nonlocal_eval(k, r, v, [0.0, 0.0])
    lat_u = Lattice.covering([-2, -2], [2, 2], r * h)
    u = field(lat_u, lambda x: (x**2).sum(-1))
    rhs = r**2 * nonlocal_eval(k, u, [0.0, 0.0])
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_z_bracket_basic_identities():
    lat = Lattice.covering([-1.5, -1.5], [1.5, 1.5], 1 / 32)
    q = QuadratureScheme(R_trunc=0.5)
    k = make_fractional(1.5)
    d = field(lat, lambda x: B1.delta(x))
    const = field(lat, lambda x: np.full(x.shape[:-1], 2.0))
    affine = field(lat, lambda x: 1 - 2 * x[..., 1])
    assert z_bracket(const, d, k, [0.25, 0.125], q) == 0.0
    assert z_bracket(d, d, k, [0.25, 0.125], q) >= 0.0
    # v varies only along e2 and the partner is x1: the bracket vanishes by symmetry
    x1 = field(lat, lambda x: x[..., 0])
    assert abs(z_bracket(affine, x1, k, [0.0, 0.0], q)) < 1e-10
    Z = apply_z_bracket(d, d, k, q)
    assert np.nanmin(Z) >= -1e-12


def test_l_delta_profile_rates():
    p = l_delta_profile(B1, make_fractional(1.5), 1.0, samples=2, levels=12)
    assert p.exponent == pytest.approx(-0.5, abs=0.15)
    p0 = l_delta_profile(B1, make_fractional(0.5), 1.0, samples=2, levels=12)
    assert abs(p0.exponent) < 0.15


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.sampled_from([0.5, 1.0, 1.5]))
def test_affine_annihilation_property(c0, c1, c2, alpha):
    lat = Lattice.covering([-0.75, -0.75], [0.75, 0.75], 1 / 16)
    u = field(lat, lambda x: c0 + c1 * x[..., 0] + c2 * x[..., 1])
    val = nonlocal_eval(make_fractional(alpha), u, [0.0, 0.0], QuadratureScheme(R_trunc=0.5))
    assert abs(val) < 1e-10 * (1 + abs(c0) + abs(c1) + abs(c2))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_monotone_in_neighbour_values(seed):
    # raising u away from x can only raise I u(x)
    rng = np.random.default_rng(seed)
    lat = Lattice.covering([-0.5, -0.5], [0.5, 0.5], 1 / 16)
    base = rng.normal(size=lat.shape)
    bump = np.abs(rng.normal(size=lat.shape))
    i = lat.index_of((0.0, 0.0))
    bump[i] = 0.0
    k = make_subordinate(0.3, 0.7)
    q = QuadratureScheme(R_trunc=0.4)
    lo = nonlocal_eval(k, GridFunction(lat, base, None), [0.0, 0.0], q)
    hi = nonlocal_eval(k, GridFunction(lat, base + bump, None), [0.0, 0.0], q)
    assert hi >= lo - 1e-12
