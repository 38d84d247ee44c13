"""Serrin-type experiment: normal-derivative constancy, moving planes,
Hopf and corner-growth checks, and radial symmetry of solutions.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import KernelError, MixregError
from .geometry import Domain, as_points
from .grid import GridFunction
from .kernels import Kernel
from .regularity import power_fit
from .solver import Certificate, SolveReport, assemble, solve_linear, solve_semilinear

log = logging.getLogger(__name__)


class PositivityError(MixregError, ValueError):
    """A solution expected to be positive inside the domain is not."""


# ---------------------------------------------------------------------------
# reflections


@dataclass(frozen=True)
class ReflectionFrame:
    """Hyperplane ``{x·e = λ}`` with unit normal ``e``."""

    e: tuple
    lam: float

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float)
        nrm = float(np.linalg.norm(e))
        if nrm == 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "e", tuple(float(c) for c in e / nrm))

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.e)

    def height(self, x) -> np.ndarray:
        """``x·e - λ``; positive on the half-space ``H``."""
        return as_points(x, len(self.e)) @ self.direction - self.lam

    def in_halfspace(self, x) -> np.ndarray:
        return self.height(x) > 0


def reflect(frame: ReflectionFrame, x) -> np.ndarray:
    """``x - 2(x·e)e + 2λe``."""
    e = frame.direction
    x = as_points(x, len(e))
    return x - 2 * (x @ e)[..., None] * e + 2 * frame.lam * e


def _evaluator(u):
    if isinstance(u, GridFunction):
        return u.interpolate
    return lambda p: np.asarray(u(p), dtype=float)


def antisymmetric_field(u, frame: ReflectionFrame, x) -> np.ndarray:
    """``v(x) = u(x) - u(x̄)``, odd under the reflection by construction.

    The difference is always formed at the representative lying in the
    closed half-space ``x·e >= λ`` and negated for points below the plane,
    so ``v(x̄) = -v(x)`` holds exactly for every evaluated pair.
    """
    ev = _evaluator(u)
    x = as_points(x, len(frame.e))
    flat = x.reshape(-1, x.shape[-1])
    up = frame.height(flat) >= 0
    rep = np.where(up[:, None], flat, reflect(frame, flat))
    w = ev(rep) - ev(reflect(frame, rep))
    return np.where(up, w, -w).reshape(x.shape[:-1])


# ---------------------------------------------------------------------------
# Serrin solve


@dataclass
class SerrinResult:
    """Solution with its inward normal derivative sampled on the boundary.

    Attributes
    ----------
    report : SolveReport
    boundary, normals : ndarray
    trace : ndarray
        ``∂u/∂n`` along the inward normal at each boundary sample.
    mean, max_deviation, rel_deviation : float
    """

    report: SolveReport
    boundary: np.ndarray
    normals: np.ndarray
    trace: np.ndarray
    mean: float
    max_deviation: float
    rel_deviation: float
    step: float

    @property
    def solution(self) -> GridFunction:
        return self.report.solution

    def to_dict(self) -> dict:
        return {"mean_normal_derivative": self.mean, "max_deviation": self.max_deviation,
                "rel_deviation": self.rel_deviation, "samples": int(len(self.trace)),
                "step": self.step, "solve": self.report.to_dict()}

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.boundary.shape[1]
        w.writerow([f"x{i + 1}" for i in range(n)] + ["normal_derivative"])
        for p, d in zip(self.boundary, self.trace):
            w.writerow([repr(float(c)) for c in p] + [repr(float(d))])
        return buf.getvalue()


def boundary_frame(domain: Domain, m: int):
    """``m`` boundary samples with their inward unit normals."""
    pts = domain.boundary_points(m)
    if domain.n == 1:
        nrm = np.sign(np.asarray(domain.center) - pts)
    elif domain.kind == "ball":
        nrm = (np.asarray(domain.center) - pts) / domain.radius
    else:
        t = 2 * np.pi * np.arange(m) / m
        nrm = domain.normal_at(t)
    return pts, nrm


def normal_derivative(u: GridFunction, domain: Domain, m: int = 64, step: float | None = None):
    """One-sided second-order ``∂u/∂n`` from ``u(p + t n)`` and ``u(p + 2t n)``.

    Uses ``u(p) = 0`` on the boundary and ``t = 3h`` by default, so both
    samples sit in cells whose corners are interior nodes.
    """
    t = 3 * u.h if step is None else step
    pts, nrm = boundary_frame(domain, m)
    u1 = u.interpolate(pts + t * nrm)
    u2 = u.interpolate(pts + 2 * t * nrm)
    return pts, nrm, (4 * u1 - u2) / (2 * t), t


def serrin_solve(domain: Domain, k: Kernel | None, a: float, H=None, f=-1.0,
                 h: float = 1 / 64, tol: float = 1e-10, samples: int = 64,
                 A0: float | None = None) -> SerrinResult:
    """Solve ``L u + H(|Du|) = f(u)`` with zero exterior data and measure ``∂u/∂n``.

    Raises
    ------
    KernelError
        If ``a > 0`` and the kernel is not radial and strictly decreasing.
    PositivityError
        If the solution is not positive at every interior node.
    """
    if a > 0:
        if k is None or not (k.radial and k.strictly_decreasing):
            raise KernelError("kernel must be radial and strictly decreasing")
    A = assemble(domain, k, a, h, A0=A0)
    if H is None and not callable(f):
        rep = solve_linear(A, f, tol=tol)
    else:
        rep = solve_semilinear(A, H, f, tol=max(tol, 1e-10))
    interior = rep.interior_values
    if interior.size and float(interior.min()) <= 0:
        i = int(np.argmin(interior))
        raise PositivityError(f"solution is not positive inside: u={interior[i]:.3g} "
                              f"at {A.points[i].tolist()}")
    pts, nrm, tr, t = normal_derivative(rep.solution, domain, samples)
    mean = float(tr.mean())
    dev = float(np.max(np.abs(tr - mean)))
    return SerrinResult(rep, pts, nrm, tr, mean, dev, dev / abs(mean), t)


# ---------------------------------------------------------------------------
# moving planes


@dataclass
class MovingPlaneState:
    """Anti-symmetric field on the reflected cap for one plane position."""

    lam: float
    frame: ReflectionFrame
    nodes: np.ndarray
    v: np.ndarray
    min_v: float
    situation: str

    @property
    def max_abs_v(self) -> float:
        return float(np.max(np.abs(self.v))) if self.v.size else 0.0


@dataclass
class ScanResult:
    """Moving-plane scan table and critical position.

    Attributes
    ----------
    rows : list of dict
        ``lambda, min_v, max_abs_v, nodes, situation_a, situation_b``.
    lambda0 : float or None
        First plane position (descending) where a situation triggered.
    situation : str
        ``"A"``, ``"B"``, ``"AB"`` or ``"none"``.
    nonnegative : bool
        ``min v >= -tol`` for every scanned ``λ > λ0``.
    state : MovingPlaneState or None
        Field at ``λ0``.
    """

    rows: list
    lambda0: float | None
    situation: str
    nonnegative: bool
    tol: float
    state: MovingPlaneState | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"lambda0": self.lambda0, "situation": self.situation,
                "nonnegative": self.nonnegative, "tol": self.tol,
                "max_abs_v_at_lambda0": None if self.state is None else self.state.max_abs_v,
                "steps": len(self.rows)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["lambda", "min_v", "max_abs_v", "nodes", "situation_a", "situation_b"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([repr(float(r["lambda"])), repr(float(r["min_v"])),
                        repr(float(r["max_abs_v"])), int(r["nodes"]),
                        int(r["situation_a"]), int(r["situation_b"])])
        return buf.getvalue()


def _cap_state(u, domain, frame, pts):
    """Nodes of the reflected cap ``R(Ω ∩ H)`` and ``v`` on them."""
    below = frame.height(pts) < 0
    cand = pts[below]
    refl = reflect(frame, cand)
    inside = domain.level(refl) > 0
    nodes = cand[inside]
    v = antisymmetric_field(u, frame, nodes) if len(nodes) else np.zeros(0)
    return nodes, v


def _situation_a(domain, frame, bpts, h):
    """Reflected boundary of the cap within ``h^2`` of ``∂Ω`` away from the plane."""
    far = frame.height(bpts) > 2 * h
    if not np.any(far):
        return False, math.inf
    q = reflect(frame, bpts[far])
    gap = float(np.min(domain.signed_boundary_distance(q)))
    return gap <= h * h, gap


def _situation_b(domain, frame, bpts, bnrm, h):
    """Plane meets ``∂Ω`` at a point where the normal is within ``h`` of tangential."""
    s = frame.height(bpts)
    s_next = np.roll(s, -1)
    cross = np.flatnonzero((s == 0) | (s * s_next < 0))
    if cross.size == 0:
        return False, math.inf
    e = frame.direction
    best = math.inf
    for i in cross:
        j = (i + 1) % len(s)
        w = 0.0 if s[i] == s[j] else s[i] / (s[i] - s[j])
        nv = (1 - w) * bnrm[i] + w * bnrm[j]
        nv = nv / np.linalg.norm(nv)
        best = min(best, abs(float(nv @ e)))
    return best <= h, best


def moving_plane_scan(u: GridFunction, domain: Domain, e, lambdas=None, tol: float = 1e-3,
                      step: float | None = None, lam_min: float | None = None,
                      boundary_samples: int = 2048) -> ScanResult:
    """Slide the plane ``{x·e = λ}`` down from the top of the domain.

    Each step builds ``v_λ = u - u∘R_λ`` on the reflected cap nodes and runs
    the two detectors. The default λ grid descends from
    ``l = sup_Ω x·e`` with step ``h/4`` to the midpoint of the domain's
    extent in direction ``e`` minus ``2h``.

    Raises
    ------
    ValueError
        If a reflected point falls outside the data lattice.
    """
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    h = u.h
    bpts, bnrm = boundary_frame(domain, boundary_samples)
    heights = bpts @ e
    top, bottom = float(heights.max()), float(heights.min())
    if lambdas is None:
        ds = h / 4 if step is None else step
        stop = 0.5 * (top + bottom) - 2 * h if lam_min is None else lam_min
        lambdas = top - ds * np.arange(1, int(math.floor((top - stop) / ds)) + 1)
    inside = domain.level(u.lattice.points()) > 0
    pts = u.lattice.points()[inside]
    rows = []
    lambda0, situation, state = None, "none", None
    for lam in lambdas:
        frame = ReflectionFrame(tuple(e), float(lam))
        nodes, v = _cap_state(u, domain, frame, pts)
        a_hit, a_gap = _situation_a(domain, frame, bpts, h)
        b_hit, b_gap = _situation_b(domain, frame, bpts, bnrm, h)
        min_v = float(v.min()) if v.size else 0.0
        rows.append({"lambda": float(lam), "min_v": min_v,
                     "max_abs_v": float(np.max(np.abs(v))) if v.size else 0.0,
                     "nodes": int(len(v)), "situation_a": a_hit, "situation_b": b_hit,
                     "a_gap": a_gap, "b_gap": b_gap})
        if a_hit or b_hit:
            lambda0 = float(lam)
            situation = ("A" if a_hit else "") + ("B" if b_hit else "")
            state = MovingPlaneState(float(lam), frame, nodes, v, min_v, situation)
            break
    above = rows if lambda0 is None else rows[:-1]
    nonneg = all(r["min_v"] >= -tol for r in above)
    return ScanResult(rows, lambda0, situation, nonneg, float(tol), state)


# ---------------------------------------------------------------------------
# narrow-domain principle, Hopf ratio, corner growth


def linearized_coefficient(f, u_x, u_xbar, fprime=None, floor: float = 1e-12) -> np.ndarray:
    """``c = (f(u) - f(ū)) / (u - ū)``, with ``f'`` (or a secant) where ``|u - ū| < floor``."""
    u_x = np.asarray(u_x, dtype=float)
    u_xbar = np.asarray(u_xbar, dtype=float)
    du = u_x - u_xbar
    close = np.abs(du) < floor
    safe = np.where(close, 1.0, du)
    c = (f(u_x) - f(u_xbar)) / safe
    if np.any(close):
        mid = 0.5 * (u_x + u_xbar)[close]
        if fprime is not None:
            c[close] = fprime(mid)
        else:
            c[close] = (f(mid + floor) - f(mid - floor)) / (2 * floor)
    return c


def narrow_domain_check(points, v, frame: ReflectionFrame, region, c=None, h: float = 1.0,
                        tol: float = 1e-9, max_measure: float | None = None) -> Certificate:
    """Discrete anti-symmetric narrow-domain principle on ``H = {x·e > λ}``.

    Since ``v = u - u∘R`` is nonnegative on the reflected cap, pass the
    frame ``(-e, -λ)`` of a scan so that ``H`` is the side containing it.

    Parameters
    ----------
    points : array (m, n)
        Nodes of ``H`` where ``v`` is known.
    v : array (m,)
    region : bool array (m,)
        Nodes of the narrow set ``D``.
    c : array (m,), optional
        Zeroth-order coefficient; its positive part enters the bound.
    max_measure : float, optional
        Smallness threshold for ``|D|``; the certificate is marked not
        applicable above it.

    Raises
    ------
    ValueError
        If a node of ``D`` lies outside ``H``.
    """
    points = np.asarray(points, dtype=float)
    v = np.asarray(v, dtype=float)
    region = np.asarray(region, dtype=bool)
    if np.any(frame.height(points[region]) <= 0):
        raise ValueError("narrow region must lie inside the half-space")
    n = points.shape[1]
    measure = float(np.count_nonzero(region)) * h**n
    outside_ok = bool(np.all(v[~region] >= -tol))
    neg = np.maximum(-v, 0.0)
    sup_neg = float(neg.max()) if neg.size else 0.0
    cplus = 0.0 if c is None else float(np.max(np.maximum(np.asarray(c)[region], 0.0), initial=0.0))
    ln = float((np.sum(neg[region] ** n) * h**n) ** (1.0 / n))
    rhs = cplus * ln
    applicable = outside_ok and (max_measure is None or measure <= max_measure)
    passed = sup_neg <= tol
    wit = None
    if not passed:
        i = int(np.argmax(neg))
        wit = {"node": points[i].tolist(), "value": float(v[i])}
    details = {"measure": measure, "sup_negative_part": sup_neg, "c_plus": cplus,
               "negative_part_Ln": ln, "bound_rhs": rhs,
               "C_fit": sup_neg / rhs if rhs > 0 else None, "hypothesis_outside_D": outside_ok}
    return Certificate("narrow-domain", applicable, passed, wit, details)


def _t_grid(t_grid, h, label):
    t = np.sort(np.asarray(t_grid, dtype=float))[::-1]
    if h is not None:
        keep = t >= 2 * h * (1 - 1e-12)
        if not np.all(keep):
            log.warning("%s: dropping %d t values below 2h", label, int(np.count_nonzero(~keep)))
        t = t[keep]
    if t.size < 3:
        raise ValueError("need at least three t values at or above 2h")
    return t


@dataclass
class HopfResult:
    """``v(x0 + t n)/t`` along a decreasing ``t`` grid."""

    estimate: float
    rows: list
    degenerate: bool

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "rows": self.rows, "degenerate": self.degenerate}


def hopf_ratio(v, x0, normal, t_grid, h: float | None = None, tol: float = 1e-8) -> HopfResult:
    """Liminf estimate of ``v(x0 + t n)/t`` from the three smallest ``t``.

    ``normal`` points into the region where ``v > 0``. ``v`` is a
    GridFunction (interpolated) or a callable; ``h`` defaults to the grid
    spacing and ``t`` values below ``2h`` are dropped.
    """
    if h is None and isinstance(v, GridFunction):
        h = v.h
    t = _t_grid(t_grid, h, "hopf_ratio")
    x0 = np.asarray(x0, dtype=float)
    nrm = np.asarray(normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    vals = _evaluator(v)(x0 + t[:, None] * nrm)
    ratios = vals / t
    est = float(np.min(ratios[-3:]))
    rows = [{"t": float(a), "value": float(b), "ratio": float(c)} for a, b, c in zip(t, vals, ratios)]
    return HopfResult(est, rows, abs(est) <= tol)


@dataclass
class CornerResult:
    """Fit ``v(t η̄) ≈ A t^p`` along the corner direction."""

    exponent: float
    coefficient: float
    r2: float
    rows: list
    vanishing: bool

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "coefficient": self.coefficient, "r2": self.r2,
                "rows": self.rows, "vanishing": self.vanishing}


def corner_growth(v, p0, e1, e2, t_grid, h: float | None = None, tol: float = 1e-8) -> CornerResult:
    """Growth of ``v`` along ``η̄ = e2 - e1`` from the tangency point ``p0``.

    ``e1`` is the plane normal and ``e2`` the tangent direction pointing
    into the domain. When ``|v| <= tol`` at every sample the field is
    reported as vanishing (``A = 0``, exponent NaN).
    """
    if h is None and isinstance(v, GridFunction):
        h = v.h
    t = _t_grid(t_grid, h, "corner_growth")
    eta = np.asarray(e2, dtype=float) - np.asarray(e1, dtype=float)
    vals = _evaluator(v)(np.asarray(p0, dtype=float) + t[:, None] * eta)
    rows = [{"t": float(a), "value": float(b)} for a, b in zip(t, vals)]
    if np.all(np.abs(vals) <= tol):
        return CornerResult(math.nan, 0.0, math.nan, rows, True)
    fit = power_fit(t, np.abs(vals))
    return CornerResult(fit.exponent, math.exp(fit.intercept), fit.r2, rows, False)


# ---------------------------------------------------------------------------
# symmetry


@dataclass
class SymmetryReport:
    """Radial symmetry and monotonicity of a solution about a fitted centre."""

    center: list
    angular_deviation: float
    monotonicity_violations: int
    profile: list
    trivial: bool
    normal_deviation: float | None = None

    def to_dict(self) -> dict:
        return {"center": self.center, "angular_deviation": self.angular_deviation,
                "monotonicity_violations": self.monotonicity_violations,
                "profile": self.profile, "trivial": self.trivial,
                "normal_deviation": self.normal_deviation}


def symmetry_report(u: GridFunction, domain: Domain, serrin: SerrinResult | None = None,
                    rings: int = 24, angles: int = 256, tol: float = 1e-12) -> SymmetryReport:
    """Fit the centre minimising angular variance of ``u`` on circles.

    ``angular_deviation`` is the largest ring range ``max - min`` divided
    by ``max |u|``; monotonicity counts increases of the ring means with
    radius beyond ``tol * max|u|``.
    """
    scale = float(np.max(np.abs(u.values)))
    ndev = None if serrin is None else serrin.rel_deviation
    c0 = np.asarray(domain.center, dtype=float)
    if scale == 0:
        return SymmetryReport(c0.tolist(), 0.0, 0, [], True, ndev)
    rmax = 0.9 * domain.inradius
    radii = rmax * (np.arange(1, rings + 1) / rings)
    th = 2 * np.pi * np.arange(angles) / angles
    circ = np.stack([np.cos(th), np.sin(th)], -1)

    def rings_at(c):
        pts = c[None, None, :] + radii[:, None, None] * circ[None]
        return u.interpolate(pts.reshape(-1, 2)).reshape(rings, angles)

    def spread(c):
        return float(np.sum(np.var(rings_at(np.asarray(c)), axis=1)))

    opt = minimize(spread, c0, method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-16, "maxiter": 400})
    c = np.asarray(opt.x) if spread(opt.x) < spread(c0) else c0
    vals = rings_at(c)
    dev = float(np.max(vals.max(axis=1) - vals.min(axis=1))) / scale
    means = vals.mean(axis=1)
    center_val = float(u.interpolate(c[None])[0])
    prof = np.concatenate([[center_val], means])
    viol = int(np.count_nonzero(np.diff(prof) > tol * scale))
    profile = [{"radius": 0.0, "mean": center_val}] + [
        {"radius": float(r), "mean": float(m)} for r, m in zip(radii, means)]
    return SymmetryReport(c.tolist(), dev, viol, profile, False, ndev)
