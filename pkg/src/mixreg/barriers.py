"""Explicit barrier functions and their numerical verification.

Two families are provided:

* :class:`ExpBarrier`, the Gaussian bump ``φ_r = v_r / r`` with
  ``v_r = e^{-η q} - e^{-η (4r)^2}``, a subsolution of the mixed operator on
  the annulus ``B_{4r} \\ B_r``;
* :class:`PsiBarrier`, the concave profile ``ψ̃`` and the collar
  supersolution ``Φ_r = ψ̃(min(δ/r, σ1))``.

Each barrier can be checked against its claimed sign with
:func:`verify_supersolution`, which returns a :class:`ViolationReport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import GeometryError, KernelError
from .geometry import Domain, as_points, inward_normal
from .grid import GridFunction, Lattice
from .kernels import DominatingKernel, Kernel, sphere_area, theta, theta_integral
from .operators import QuadratureScheme, apply_L, polar_nonlocal

LOG_FOUR_THIRDS = math.log(4.0 / 3.0)


# ---------------------------------------------------------------------------
# Gaussian bump


def exp_barrier_constant(dom: DominatingKernel, r: float) -> float:
    """Integral constant ``κ_L`` of the bump barrier at scale ``r``.

    Sum of ``∫_{|y|<r} 2|y|^2 k̂``, ``(8r)^2 ∫_{r<|y|<1} Λ|y|^{-n-α}`` and
    ``(8r)^2 ∫_{|y|>1} J``, divided by ``r^{2-α}``. Each piece is a closed
    form moment of the dominating kernel.
    """
    n, a, lam = dom.n, dom.alpha, dom.Lambda
    w = sphere_area(n)
    inner = 2 * w * lam * r ** (2 - a) / (2 - a)
    middle = (8 * r) ** 2 * w * lam * (r ** (-a) - 1) / a
    outer = (8 * r) ** 2 * dom.tail_mass
    return (inner + middle + outer) / r ** (2 - a)


@dataclass(frozen=True)
class ExpBarrier:
    """Bump ``φ_r = v_r / r`` with ``v_r = e^{-η q(x)} - e^{-η(4r)^2}``.

    Attributes
    ----------
    r : float
        Scale, in ``(0, 1]``.
    eta : float
        ``(n + A0 κ_L) / r^2``.
    kappa_L : float
        Integral constant from :func:`exp_barrier_constant`.
    n, A0 : int, float
    center : ndarray
    """

    r: float
    eta: float
    kappa_L: float
    n: int
    A0: float
    center: np.ndarray = field(default=None, repr=False)

    def _sq(self, x):
        x = as_points(x, self.n)
        c = np.zeros(self.n) if self.center is None else np.asarray(self.center)
        return np.sum((x - c) ** 2, axis=-1)

    def v(self, x) -> np.ndarray:
        """``v_r`` at points of shape ``(..., n)``."""
        q = np.minimum(self._sq(x), 2 * (4 * self.r) ** 2)
        return np.exp(-self.eta * q) - math.exp(-self.eta * (4 * self.r) ** 2)

    def __call__(self, x) -> np.ndarray:
        """``φ_r = v_r / r``."""
        return self.v(x) / self.r

    @property
    def far_value(self) -> float:
        """Value of ``φ_r`` beyond ``|x| = 4√2 r``."""
        e = self.eta * (4 * self.r) ** 2
        return (math.exp(-2 * e) - math.exp(-e)) / self.r

    @property
    def bump_bound(self) -> float:
        """``κ̃ = η(4r)^2 / r``, so that ``0 <= φ_r <= κ̃`` on ``B_r``."""
        return self.eta * (4 * self.r) ** 2 / self.r

    def lower_bound_gap(self, x) -> np.ndarray:
        """Slack in ``v_r(x) >= 5ηr e^{-η(4r)^2} (4r - |x|)`` for ``|x| <= 4r``.

        Both sides are divided by ``e^{-η(4r)^2}`` so that the comparison
        survives the underflow of the exponentials for large ``η``.
        """
        sq = self._sq(x)
        if np.any(sq > (4 * self.r) ** 2 * (1 + 1e-12)):
            raise GeometryError("lower bound only holds on B_{4r}")
        with np.errstate(over="ignore"):
            lhs = np.expm1(self.eta * ((4 * self.r) ** 2 - sq))
        rhs = 5 * self.eta * self.r * (4 * self.r - np.sqrt(sq))
        return lhs - rhs

    def grid(self, h: float) -> GridFunction:
        """``φ_r`` sampled on a lattice covering ``[-6r, 6r]^n`` around the centre."""
        c = np.zeros(self.n) if self.center is None else np.asarray(self.center)
        lat = Lattice.covering(c - 6 * self.r, c + 6 * self.r, h)
        return GridFunction.from_function(lat, self, far_value=self.far_value)

    def to_dict(self) -> dict:
        return {"type": "exp", "r": self.r, "eta": self.eta, "kappa_L": self.kappa_L,
                "n": self.n, "A0": self.A0, "bump_bound": self.bump_bound,
                "far_value": self.far_value}


def build_exp_barrier(r: float, n: int, A0: float, k: Kernel, center=None) -> ExpBarrier:
    """Bump barrier at scale ``r`` for operators ``Δ + aI`` with ``a <= A0``."""
    if not 0 < r <= 1:
        raise GeometryError(f"r must lie in (0, 1], got {r}")
    if k.n != n:
        raise KernelError("kernel dimension does not match n")
    kl = exp_barrier_constant(k.dominating, r)
    eta = (n + A0 * kl) / r**2
    c = None if center is None else np.asarray(center, dtype=float)
    return ExpBarrier(float(r), float(eta), float(kl), int(n), float(A0), c)


# ---------------------------------------------------------------------------
# concave collar profile


@dataclass(frozen=True, eq=False)
class PsiBarrier:
    """Profile ``ψ̃(s) = ∫_0^s 2 e^{-q l - q ∫_0^l Θ} dl - s`` on ``[0, 1]``.

    Attributes
    ----------
    q : float
        Drift weight in the exponent.
    dom : DominatingKernel
        Kernel whose Θ enters the exponent.
    s_q : float
        Largest ``s <= 1`` with ``ψ̃'(s) >= 1/2``.
    sigma1 : float
        Cap ``min(s_q / 8, 1, collar_gamma)``.
    table_s, table_psi : ndarray
        Tabulation nodes (geometric towards 0) and values.
    """

    q: float
    dom: DominatingKernel
    s_q: float
    sigma1: float
    table_s: np.ndarray = field(repr=False)
    table_psi: np.ndarray = field(repr=False)
    _spline: CubicHermiteSpline = field(repr=False)

    def exponent(self, s):
        """``q s + q ∫_0^s Θ``."""
        s = np.asarray(s, dtype=float)
        return self.q * (s + theta_integral(self.dom, s))

    def derivative(self, s):
        """``ψ̃'(s) = 2 e^{-q s - q ∫_0^s Θ} - 1``."""
        return 2 * np.exp(-self.exponent(s)) - 1

    def second_derivative(self, s):
        """``ψ̃''(s) = -2q (1 + Θ(s)) e^{-q s - q ∫_0^s Θ}`` for ``s > 0``."""
        s = np.asarray(s, dtype=float)
        th = np.vectorize(lambda t: theta(self.dom, t))(s)
        return -2 * self.q * (1 + th) * np.exp(-self.exponent(s))

    def __call__(self, s):
        """``ψ̃(s)`` for ``0 <= s <= 1``."""
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("psi is tabulated on [0, 1]")
        s0 = self.table_s[1]
        small = s < s0
        out = np.empty_like(s)
        out[~small] = self._spline(s[~small])
        # below the first node ψ̃' = 1 + O(s^{2-α}), so ψ̃ = s to rounding
        out[small] = s[small] * self.derivative(s[small] / 2)
        return out

    @property
    def cap(self) -> float:
        return float(self(self.sigma1))

    def distance_profile(self, domain: Domain, r: float):
        """Field ``Φ_r(x) = ψ̃(min(δ(x)/r, σ1))`` as a callable."""
        def phi(x):
            s = np.minimum(domain.delta(x) / r, self.sigma1)
            return self(s)
        return phi

    def to_dict(self) -> dict:
        return {"type": "psi", "q": self.q, "s_q": self.s_q, "sigma1": self.sigma1,
                "cap": self.cap, "dominating": self.dom.to_dict()}


def _psi_table(q, dom, smax, nodes=1500, order=16):
    s = np.concatenate([[0.0], np.geomspace(1e-14, smax, nodes)])
    xg, wg = np.polynomial.legendre.leggauss(order)
    lo, hi = s[:-1], s[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    ls = mid[:, None] + half[:, None] * xg[None]
    dpsi = 2 * np.exp(-q * (ls + theta_integral(dom, ls))) - 1
    pieces = (half[:, None] * wg[None] * dpsi).sum(axis=1)
    return s, np.concatenate([[0.0], np.cumsum(pieces)])


def build_psi_barrier(q: float, dom: DominatingKernel, collar_gamma: float | None = None) -> PsiBarrier:
    """Tabulate ``ψ̃`` and locate ``s(q)`` and ``σ1``.

    ``s(q)`` solves ``q (s + ∫_0^s Θ) = log(4/3)``, the point where
    ``ψ̃'`` drops to ``1/2``; it is capped at 1.

    Raises
    ------
    KernelError
        If ``q <= 0``.
    """
    if not q > 0:
        raise KernelError(f"q must be positive, got {q}")
    g = lambda s: q * (s + float(theta_integral(dom, s))) - LOG_FOUR_THIRDS  # noqa: E731
    s_q = 1.0 if g(1.0) <= 0 else brentq(g, 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=500)
    sigma1 = min(s_q / 8, 1.0, math.inf if collar_gamma is None else collar_gamma)
    s, psi = _psi_table(q, dom, 1.0)
    dpsi = 2 * np.exp(-q * (s + theta_integral(dom, s))) - 1
    spline = CubicHermiteSpline(s[1:], psi[1:], dpsi[1:])
    return PsiBarrier(float(q), dom, float(s_q), float(sigma1), s, psi, spline)


# ---------------------------------------------------------------------------
# verification


@dataclass
class ViolationReport:
    """Outcome of checking a claimed inequality at a set of nodes.

    Attributes
    ----------
    region : str
    claim : str
    max_violation : float
        Largest amount by which the claim fails (0 when it holds everywhere).
    worst_node : list of float or None
    excluded_nodes : int
        Nodes dropped from the check, such as those too close to a kink.
    nodes_checked : int
    tolerance : float
    violating : list
        Coordinates of nodes violating by more than the tolerance (at most 20).
    """

    region: str
    claim: str
    max_violation: float
    worst_node: list | None
    excluded_nodes: int
    nodes_checked: int
    tolerance: float
    violating: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.nodes_checked > 0 and self.max_violation <= self.tolerance

    def to_dict(self) -> dict:
        return {"region": self.region, "claim": self.claim,
                "max_violation": self.max_violation, "worst_node": self.worst_node,
                "excluded_nodes": self.excluded_nodes, "nodes_checked": self.nodes_checked,
                "tolerance": self.tolerance, "passed": self.passed,
                "violating": self.violating, "details": self.details}


def _report(region, claim, pts, slack, tol, excluded, details=None) -> ViolationReport:
    """Build a report from ``slack`` (negative where the claim fails)."""
    viol = np.maximum(-np.asarray(slack, dtype=float), 0.0)
    if viol.size == 0:
        return ViolationReport(region, claim, 0.0, None, excluded, 0, tol, [], details or {})
    i = int(np.argmax(viol))
    bad = pts[viol > tol][:20]
    return ViolationReport(region, claim, float(viol[i]), [float(c) for c in pts[i]],
                           excluded, int(viol.size), float(tol),
                           [[float(c) for c in p] for p in bad], details or {})


def _verify_exp(b: ExpBarrier, k, a, h, tol_const):
    h = b.r / 64 if h is None else h
    u = b.grid(h)
    # beyond 10r every jump from the annulus lands where φ_r is constant
    q = QuadratureScheme(R_trunc=10 * b.r)
    Lu = apply_L(a, k, u, q)
    pts = u.lattice.points()
    c = np.zeros(b.n) if b.center is None else np.asarray(b.center)
    rad = np.linalg.norm(pts - c, axis=-1)
    mask = (rad > b.r) & (rad < 4 * b.r)
    return _report("annulus B_4r minus closed B_r", "L phi_r >= 0", pts[mask], Lu[mask],
                   tol_const * h, 0, {"h": h, "min_L": float(Lu[mask].min()),
                                      "barrier": b.to_dict()})


def _distance_laplacian(domain: Domain, x) -> float:
    """``Δδ`` at an interior point close to the boundary."""
    if domain.n == 1:
        return 0.0
    if domain.kind == "ball":
        rad = float(np.linalg.norm(x - np.asarray(domain.center)))
        return -(domain.n - 1) / rad
    _, t = domain.project(x[None])
    kap = float(domain.curvature_at(t)[0])
    return -kap / (1 - kap * float(domain.delta(x)))


def collar_sample_points(domain: Domain, x0, width: float, levels: int = 6) -> np.ndarray:
    """Points of ``B_width(x0) ∩ Ω`` at depths ``width/2^j`` with three lateral offsets."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    nrm = np.atleast_1d(inward_normal(domain, x0))
    if domain.n == 1:
        tans = [np.zeros(1)]
    else:
        tan = np.array([-nrm[1], nrm[0]])
        tans = [-0.4 * tan, 0 * tan, 0.4 * tan]
    pts = []
    for j in range(1, levels + 1):
        d = width * 2.0**-j
        for tv in tans:
            p = x0 + d * nrm + width * tv
            if np.linalg.norm(p - x0) < width and domain.delta(p) > 0:
                pts.append(p)
    return np.array(pts)


def _verify_psi(b: PsiBarrier, domain, k, a, x0, r, points, angles, rel_tol):
    if domain is None or x0 is None or r is None:
        raise ValueError("psi barrier verification needs domain, x0 and r")
    width = b.sigma1 / 8 * r
    pts = collar_sample_points(domain, x0, width) if points is None else as_points(points, domain.n)
    phi = b.distance_profile(domain, r)
    c = np.asarray(domain.center)
    slack, claims, values = [], [], []
    for x in pts:
        d = float(domain.delta(x))
        s = d / r
        lap = float(b.second_derivative(s)) / r**2 + float(b.derivative(s)) * _distance_laplacian(domain, x) / r
        nl = 0.0
        if a > 0:
            outer = float(np.linalg.norm(x - c)) + domain.diameter
            edge = r * b.sigma1
            breaks = (d, edge - d, edge + d)
            nl = polar_nonlocal(phi, x, k, 0.5 * d, lap, 0.0, outer, angles, breaks)
        val = lap + a * nl
        bound = -theta(b.dom, s) / r**2
        values.append(val)
        claims.append(bound)
        # relative slack: the claim is an upper bound on a quantity of size |bound|
        slack.append((bound - val) / abs(bound))
    return _report("collar D_(eta r)", "L Phi_r <= -Theta(delta/r)/r^2", pts, np.array(slack),
                   rel_tol, 0, {"r": r, "width": width, "values": values, "bounds": claims,
                                "barrier": b.to_dict()})


def verify_supersolution(barrier, k: Kernel, a: float, domain: Domain | None = None, *,
                         h: float | None = None, x0=None, r: float | None = None,
                         points=None, lower: float | None = None, mask=None,
                         tol_const: float = 1.0, rel_tol: float = 1e-3,
                         angles: int = 512) -> ViolationReport:
    """Check a barrier's claimed inequality for ``L = Δ + aI``.

    Parameters
    ----------
    barrier : ExpBarrier, PsiBarrier or GridFunction
        ``ExpBarrier``: ``L_h φ_r >= 0`` on the lattice annulus nodes at
        spacing ``h`` (default ``r/64``), with tolerance ``tol_const * h``.
        ``PsiBarrier``: ``LΦ_r <= -Θ(δ/r)/r^2`` at points of the collar
        ``B_{σ1 r/8}(x0) ∩ Ω`` (or at ``points``), evaluated by polar
        quadrature; slack is relative to the bound, tolerance ``rel_tol``.
        ``GridFunction``: ``L_h u >= lower`` at ``mask`` nodes (all nodes
        whose stencil stays in known data when ``mask`` is None).
    """
    if isinstance(barrier, ExpBarrier):
        return _verify_exp(barrier, k, a, h, tol_const)
    if isinstance(barrier, PsiBarrier):
        return _verify_psi(barrier, domain, k, a, x0, r, points, angles, rel_tol)
    if isinstance(barrier, GridFunction):
        if lower is None:
            raise ValueError("grid function check needs a lower bound")
        Lu = apply_L(a, k, barrier, QuadratureScheme(R_trunc=None if barrier.far_value is not None
                                                      else k.support))
        m = np.isfinite(Lu) if mask is None else (np.asarray(mask, bool) & np.isfinite(Lu))
        pts = barrier.lattice.points()
        return _report("grid nodes", f"L u >= {lower}", pts[m], Lu[m] - lower,
                       tol_const * barrier.h, int(np.count_nonzero(~m)))
    raise TypeError(f"cannot verify {type(barrier).__name__}")


# ---------------------------------------------------------------------------
# logarithmic inequality


@dataclass
class LogInequalityReport:
    """Check of ``log(rz) >= r^ζ log z`` for ``z >= 1/(θr)``."""

    theta: float
    zeta: float
    r_theta: float
    rows: list
    violations: list

    def to_dict(self) -> dict:
        return {"theta": self.theta, "zeta": self.zeta, "r_theta": self.r_theta,
                "rows": self.rows, "violations": self.violations}


def log_threshold(theta_: float, zeta: float) -> float:
    """Smallest root ``r_θ`` of ``log θ / log(rθ) = r^ζ`` in ``(0, 1)``.

    Below ``r_θ`` the left side dominates; the root is bracketed by a scan
    on a logarithmic grid and refined by bisection.
    """
    if not (0 < theta_ < 1 and 0 < zeta < 1):
        raise ValueError("theta and zeta must lie in (0, 1)")
    g = lambda r: math.log(theta_) / math.log(r * theta_) - r**zeta  # noqa: E731
    grid = np.geomspace(1e-300, 1 - 1e-9, 4000)
    vals = np.array([g(r) for r in grid])
    sign = np.nonzero((vals[:-1] > 0) & (vals[1:] <= 0))[0]
    if sign.size == 0:
        return 1.0
    i = int(sign[0])
    return float(brentq(g, grid[i], grid[i + 1], xtol=1e-300, rtol=1e-14))


def log_inequality_check(theta_: float, zeta: float, r_grid=None,
                         z_multipliers=(1.0, 10.0, 1e3)) -> LogInequalityReport:
    """Evaluate ``log(rz) - r^ζ log z`` on ``z = m/(θr)``.

    ``r_grid`` defaults to ``(r_θ/2, r_θ/4)``. Rows with a negative
    difference are listed as violations; for ``r > r_θ`` they are expected.
    """
    rt = log_threshold(theta_, zeta)
    r_grid = (rt / 2, rt / 4) if r_grid is None else r_grid
    rows, bad = [], []
    for r in r_grid:
        for m in z_multipliers:
            z = m / (theta_ * r)
            gap = math.log(r * z) - r**zeta * math.log(z)
            row = {"r": float(r), "z": float(z), "gap": float(gap), "below_threshold": bool(r < rt)}
            rows.append(row)
            if gap < 0:
                bad.append(row)
    return LogInequalityReport(theta_, zeta, rt, rows, bad)
