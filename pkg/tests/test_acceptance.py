"""Acceptance suite: one or more tests per criterion, summarised by conftest."""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml
from scipy import integrate

from mixreg.barriers import build_exp_barrier, verify_supersolution
from mixreg.cli import parse_config, run
from mixreg.geometry import ball, ellipse, smoothed_distance
from mixreg.grid import GridFunction, Lattice
from mixreg.kernels import make_fractional, make_subordinate, sphere_area, theta
from mixreg.operators import (QuadratureScheme, apply_L, apply_nonlocal, apply_z_bracket,
                              l_delta_profile, nonlocal_eval, pairing)
from mixreg.overdetermined import moving_plane_scan, serrin_solve, symmetry_report
from mixreg.regularity import interior_gradient_scaling
from mixreg.solver import assemble, solve_linear

pytestmark = pytest.mark.acceptance

DEMO = Path(__file__).resolve().parents[1] / "demos" / "configs"
B1 = ball()
START = time.perf_counter()


def load(name):
    return parse_config(yaml.safe_load((DEMO / name).read_text()))


def summary(path):
    return json.loads((Path(path) / "summary.json").read_text())


@pytest.fixture(scope="module")
def torsion64():
    t0 = time.perf_counter()
    res = serrin_solve(B1, None, 0.0, h=1 / 64)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ellipse64():
    return serrin_solve(ellipse(1.3, 1.0), None, 0.0, h=1 / 64)


@pytest.fixture(scope="module")
def mixed_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mixed")
    status = run(load("mixed_regularity.yaml"), "regularity", out)
    return status, out


# 1 ---------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_torsion_anchor(detail):
    t0 = time.perf_counter()
    rep = solve_linear(assemble(B1, None, 0.0, 1 / 64), -1.0)
    elapsed = time.perf_counter() - t0
    u0 = rep.solution.at((0.0, 0.0))
    detail(f"u(0)={u0:.6f} solve {elapsed:.2f}s")
    assert u0 == pytest.approx(0.25, abs=5e-3)
    assert elapsed <= 30


@pytest.mark.criterion(1)
def test_torsion_normal_derivative(torsion64, detail):
    res, elapsed = torsion64
    detail(f"mean={res.mean:.5f} dev={res.rel_deviation:.2e} total {elapsed:.2f}s")
    assert res.mean == pytest.approx(0.5, rel=0.02)
    assert res.rel_deviation <= 0.02
    assert elapsed <= 30


# 2 ---------------------------------------------------------------------------


@pytest.mark.criterion(2)
@pytest.mark.parametrize("kernel", [make_fractional(0.5), make_fractional(1.0),
                                    make_fractional(1.5), make_subordinate(0.3, 0.7)],
                         ids=["frac0.5", "frac1.0", "frac1.5", "subordinate"])
def test_affine_annihilation(kernel, detail):
    lat = Lattice.covering([-1, -1], [1, 1], 1 / 32)
    # far_value None: the field is affine everywhere, not cut off outside the box
    u = GridFunction.from_function(lat, lambda x: 1 + 2 * x[..., 0] - 3 * x[..., 1],
                                   far_value=None)
    q = QuadratureScheme(R_trunc=0.5)
    I = apply_nonlocal(kernel, u, q)
    L = apply_L(1.0, kernel, u, q)
    err = max(np.nanmax(np.abs(I)), np.nanmax(np.abs(L)))
    assert np.count_nonzero(np.isfinite(I)) > 0
    detail(f"max |I u|,|L u| = {err:.1e}")
    assert err < 1e-10


# 3 ---------------------------------------------------------------------------


def theta_by_quadrature(dom, xi):
    w = sphere_area(dom.n)
    f = lambda r: min(1.0, r) * float(dom.profile(r)) * w * r ** (dom.n - 1)
    pieces = [(xi, 1.0), (1.0, np.inf)] if xi < 1 else [(xi, np.inf)]
    return sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0] for a, b in pieces)


@pytest.mark.criterion(3)
def test_theta_closed_form(detail):
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5):
        dom = make_fractional(alpha).dominating
        for xi in (0.01, 0.3, 2.5):
            ref = theta_by_quadrature(dom, xi)
            worst = max(worst, abs(theta(dom, xi) - ref) / ref)
    detail(f"max rel err {worst:.1e} over 9 cases")
    assert worst <= 1e-6


# 4 ---------------------------------------------------------------------------


@pytest.mark.criterion(4)
def test_quadratic_oracle(detail):
    lat = Lattice.covering([-1, -1], [1, 1], 1 / 128)
    u = GridFunction.from_function(lat, lambda x: (x**2).sum(-1))
    val = nonlocal_eval(make_fractional(1.0, 1.0, 1.0), u, [0.0, 0.0])
    detail(f"I|x|^2(0)={val:.5f} vs 2pi, rel {abs(val / (2 * math.pi) - 1):.1e}")
    assert val == pytest.approx(2 * math.pi, rel=0.01)


# 5 ---------------------------------------------------------------------------


@pytest.mark.criterion(5)
def test_l_delta_rate_alpha_15(detail):
    p = l_delta_profile(B1, make_fractional(1.5), 1.0, samples=2, levels=14)
    detail(f"exponent {p.exponent:.3f} (target -0.5)")
    assert p.exponent == pytest.approx(-0.5, abs=0.15)


@pytest.mark.criterion(5)
def test_l_delta_bounded_alpha_05(detail):
    p = l_delta_profile(B1, make_fractional(0.5), 1.0, samples=2, levels=14)
    for rid in (0, 1):
        vals = np.array([r[1] for r in sorted(p.rows, key=lambda r: -r[0]) if r[2] == rid])
        inc = np.abs(np.diff(vals[-9:]))
        ratio = float(np.max(inc[1:] / inc[:-1]))
        # a geometric tail bounds the limit
        limit = vals[-1] + inc[-1] * ratio / (1 - ratio)
        detail(f"ray {rid}: last {vals[-1]:.4f} ratio {ratio:.3f} limit<= {limit:.4f}")
        assert ratio < 0.9
        assert limit <= 1.1 * vals[-1]
    assert abs(p.exponent) < 0.15


@pytest.mark.criterion(5)
def test_l_delta_log_alpha_1(detail):
    p = l_delta_profile(B1, make_fractional(1.0), 1.0, samples=2, levels=14)
    detail(f"log fit R^2 {p.log_r2:.5f}")
    assert p.log_r2 >= 0.95


# 6 ---------------------------------------------------------------------------


@pytest.mark.criterion(6)
@pytest.mark.parametrize("r", [0.25, 0.5, 1.0])
def test_exp_barrier(r, detail):
    k = make_fractional(1.5)
    rep = verify_supersolution(build_exp_barrier(r, 2, 1.0, k), k, 1.0)
    detail(f"r={r}: min L phi {rep.details['min_L']:.3e}, tol c*h={rep.tolerance:.2e}, "
           f"{rep.nodes_checked} nodes")
    assert rep.passed


# 7 ---------------------------------------------------------------------------


@pytest.mark.criterion(7)
def test_product_rule(detail):
    k = make_fractional(1.5, 1.0, 1.0)
    q = QuadratureScheme(R_trunc=1.0)
    h = 1 / 128
    lat = Lattice.covering([-2.2, -2.2], [2.2, 2.2], h)
    P = lat.points()
    d = smoothed_distance(B1, B1.rho / 2)(P)
    v = np.cos(P[..., 0])
    a = 1.0
    L = lambda w: apply_L(a, k, GridFunction(lat, w, None), q)
    V, D = GridFunction(lat, v, None), GridFunction(lat, d, None)
    res = (L(v * d) - d * L(v) - v * L(d) - 2 * pairing(v, d, h, None, None)
           - a * apply_z_bracket(V, D, k, q))
    m = B1.contains(P) & np.isfinite(res)
    err = float(np.max(np.abs(res[m])))
    detail(f"max residual {err:.1e} on {int(m.sum())} nodes")
    assert m.sum() > 0 and err <= 1e-4


# 8 ---------------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_mixed_regularity_suite(mixed_run, detail):
    status, out = mixed_run
    assert status == 0
    s = summary(out)
    rows = (out / "harnack.csv").read_text().strip().splitlines()[1:]
    detail(f"tau {s['tau_fit']:.3f} (R^2 {s['tau_r2']:.3f}) kappa {s['kappa_fit']:.3f} "
           f"gamma {s['gamma_fit']:.3f} harnack {s['harnack_max_ratio']:.3f} over {len(rows)} scales")
    assert s["tau_fit"] > 0 and s["tau_r2"] >= 0.9
    assert s["kappa_fit"] > 0 and s["gamma_fit"] > 0
    assert len(rows) == 4 and s["harnack_max_ratio"] <= 2
    assert s["flags"]["oscillation_monotone"] == "pass"


# 9 ---------------------------------------------------------------------------


@pytest.mark.criterion(9)
def test_gradient_scaling_synthetic(detail):
    lat = Lattice.covering((-1.05, -1.05), (1.05, 1.05), 1 / 128)
    s = GridFunction.from_function(lat, lambda p: B1.delta(p) ** 0.5)
    e = interior_gradient_scaling(s, B1).exponent
    detail(f"exponent {e:.4f} (target -0.5)")
    assert e == pytest.approx(-0.5, abs=0.05)


@pytest.mark.criterion(9)
def test_gradient_scaling_solved(mixed_run, detail):
    s = summary(mixed_run[1])
    e, kap = s["gradient_scaling_exponent"], s["kappa_fit"]
    detail(f"e {e:.3f} >= kappa-1.1 = {kap - 1.1:.3f}")
    assert e >= kap - 1 - 0.1


# 10 --------------------------------------------------------------------------


@pytest.mark.criterion(10)
def test_serrin_constancy(torsion64, ellipse64, detail):
    ball_dev, ell_dev = torsion64[0].rel_deviation, ellipse64.rel_deviation
    detail(f"ball dev {ball_dev:.2e}, ellipse dev {ell_dev:.2e} ({ell_dev / ball_dev:.0f}x)")
    assert ball_dev <= 0.02
    assert ell_dev >= 10 * ball_dev


@pytest.mark.criterion(10)
def test_ball_moving_plane(torsion64, detail):
    u = torsion64[0].solution
    scan = moving_plane_scan(u, B1, (1.0, 0.0), tol=1e-3)
    positive = [r["min_v"] for r in scan.rows if r["lambda"] > 0]
    detail(f"lambda0 {scan.lambda0:.4f} (h={u.h:.4f}), min v over lambda>0 {min(positive):.2e}")
    assert abs(scan.lambda0) <= u.h
    assert min(positive) >= -1e-3


@pytest.mark.criterion(10)
def test_ball_radial_monotone(torsion64, detail):
    res = torsion64[0]
    rep = symmetry_report(res.solution, B1, res)
    detail(f"{rep.monotonicity_violations} violations, angular dev {rep.angular_deviation:.1e}")
    assert rep.monotonicity_violations == 0


# 11 --------------------------------------------------------------------------


@pytest.mark.criterion(11)
@pytest.mark.parametrize("name", ["torsion.yaml", "serrin_ball.yaml", "serrin_ellipse.yaml",
                                  "barriers.yaml", "mixed_regularity.yaml"])
def test_rerun_hash_identical(name, mixed_run, tmp_path, detail):
    command = {"barriers.yaml": "barriers", "mixed_regularity.yaml": "regularity"}.get(name, "solve")
    if name == "mixed_regularity.yaml":
        first = mixed_run[1]
    else:
        first = tmp_path / "a"
        assert run(load(name), command, first) == 0
    second = tmp_path / "b"
    assert run(load(name), command, second) == 0
    m1 = (first / "MANIFEST.json").read_bytes()
    m2 = (second / "MANIFEST.json").read_bytes()
    files = json.loads(m1)["files"]
    same = all((first / f).read_bytes() == (second / f).read_bytes() for f in files)
    detail(f"{name}: {len(files)} files, manifest equal {m1 == m2}")
    assert m1 == m2 and same


# runtime ---------------------------------------------------------------------


@pytest.mark.criterion(10)
def test_acceptance_runtime(detail):
    elapsed = time.perf_counter() - START
    detail(f"acceptance suite {elapsed:.0f}s single-threaded")
    assert elapsed <= 600
