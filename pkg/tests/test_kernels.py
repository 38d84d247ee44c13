import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mixreg.errors import KernelError
from mixreg.kernels import (check_assumption, make_fractional, make_subordinate, modified_kernel,
                            sphere_area, theta, theta_integral)


def theta_by_quadrature(dom, xi):
    """Radial quadrature of ∫_{|z|>xi} min(1,|z|) k̂(z) dz."""
    w = sphere_area(dom.n)
    f = lambda r: min(1.0, r) * float(dom.profile(r)) * w * r ** (dom.n - 1)
    pieces = [(xi, 1.0), (1.0, np.inf)] if xi < 1 else [(xi, np.inf)]
    return sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0] for a, b in pieces)


def test_fractional_values():
    assert make_fractional(1.5)(np.array([1.0, 0.0])) == pytest.approx(1.0)
    assert make_fractional(1.5, 1.0, 1.0)(np.array([2.0, 0.0])) == 0.0
    assert make_fractional(0.5, 2.0, n=1)(np.array([0.5])) == pytest.approx(2 * 0.5**-1.5)


def test_subordinate_reduces_to_power():
    assert make_subordinate(0.5, 0.5, n=1)(np.array([1.0])) == pytest.approx(2.0)


def test_subordinate_radially_decreasing():
    k = make_subordinate(0.3, 0.7)
    r = np.geomspace(1e-3, 10, 400)
    assert np.all(np.diff(k.profile(r)) < 0)
    assert k.strictly_decreasing


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0])
def test_subordinate_scaling_bound(r):
    k = make_subordinate(0.3, 0.7)
    rng = np.random.default_rng(1)
    y = rng.normal(size=(100, 2)) * 2
    lhs = r ** (2 + k.alpha) * k(r * y)
    assert np.all(lhs <= k.dominating(y) * (1 + 1e-12))


@pytest.mark.parametrize("alpha", [0.0, 2.0, 2.5, -1.0])
def test_alpha_range_rejected(alpha):
    with pytest.raises(KernelError, match=r"alpha must lie in \(0,2\)"):
        make_fractional(alpha)


def test_theta_closed_form_example():
    dom = make_fractional(1.5).dominating
    body = 2 * math.pi / 0.5 * (0.25**-0.5 - 1)
    assert body == pytest.approx(4 * math.pi)
    # Θ integrates over all |z| > ξ, so the mass beyond radius one is included
    assert theta(dom, 0.25) == pytest.approx(body + dom.tail_mass, rel=1e-12)
    assert theta(dom, 0.25) == pytest.approx(theta_by_quadrature(dom, 0.25), rel=1e-10)


def test_theta_at_one_is_tail_mass():
    for k in (make_fractional(0.7), make_fractional(1.5), make_subordinate(0.3, 0.7)):
        assert theta(k.dominating, 1.0) == pytest.approx(k.dominating.tail_mass)


def test_theta_one_dimensional_log_case():
    dom = make_fractional(1.0, n=1).dominating
    assert theta(dom, math.exp(-1)) == pytest.approx(theta_by_quadrature(dom, math.exp(-1)), rel=1e-10)
    assert theta(dom, math.exp(-1)) == pytest.approx(4.0)


def test_theta_rejects_nonpositive():
    with pytest.raises(KernelError):
        theta(make_fractional(1.0).dominating, 0.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_theta_integral_matches_quadrature(alpha):
    dom = make_fractional(alpha).dominating
    for s in (1e-4, 0.1, 0.7, 1.0):
        ref = integrate.quad(lambda t: theta(dom, t), 0, s, limit=200, points=[s * 1e-6])[0]
        assert theta_integral(dom, s) == pytest.approx(ref, rel=1e-7)
    assert theta_integral(dom, 0.0) == 0.0


def test_modified_kernel():
    base = make_fractional(1.5)
    mk = modified_kernel(base, 0.1, 0.5)
    assert mk(np.array([0.2, 0.0])) == pytest.approx(0.2**-2.5)
    y = np.array([[0.01, 0.0], [0.05, 0.02]])
    assert np.all(mk(y) >= base(y))
    with pytest.raises(KernelError):
        modified_kernel(base, 0.1, 1.5)


def test_assumption_sampling():
    rep = check_assumption(make_fractional(1.5), samples=10_000, seed=0)
    assert rep.violations_a == 0
    sub = check_assumption(make_subordinate(0.3, 0.7), seed=0)
    assert math.isfinite(sub.rho_estimate)
    mk = check_assumption(modified_kernel(make_fractional(1.5), 0.1, 0.5), seed=0)
    assert math.isfinite(mk.rho_estimate)


def test_truncated_kernel_skips_empty_pairs():
    rep = check_assumption(make_fractional(1.5, 1.0, 0.1), samples=4000, beta=10.0, seed=3)
    assert rep.skipped_zero_pairs > 0
    assert rep.to_dict()["skipped_zero_pairs"] == rep.skipped_zero_pairs


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(1e-4, 0.99), st.floats(1e-4, 0.99))
def test_theta_is_decreasing(alpha, a, b):
    dom = make_fractional(alpha).dominating
    lo, hi = sorted((a, b))
    assert theta(dom, lo) >= theta(dom, hi) - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(1e-3, 1.0), st.floats(0.1, 5.0))
def test_fractional_scaling_is_exact(alpha, r, rad):
    k = make_fractional(alpha)
    y = np.array([rad, 0.0])
    assert r ** (2 + alpha) * k(r * y) == pytest.approx(float(k(y)), rel=1e-10)
