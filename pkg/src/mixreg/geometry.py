"""Implicit domains, the distance to the complement, and boundary collars.

Three shape families are supported: balls (``n = 1`` or ``2``), ellipses and
star-shaped perturbations of a disc. Distances for the curved 2-d shapes are
computed by projecting onto a parametrised boundary curve with a damped
Newton iteration seeded from a coarse angular scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from .errors import GeometryError, ProjectionError
from .grid import Lattice

_SCAN_ANGLES = 256
_NEWTON_MAXIT = 60
_CHUNK = 4096


def as_points(x, n: int) -> np.ndarray:
    """Coerce input to an array of points with trailing axis of length ``n``."""
    arr = np.asarray(x, dtype=float)
    if n == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != n:
        raise GeometryError(f"expected points with {n} coordinates, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Domain:
    """Bounded smooth domain given by a shape specification.

    Use the factories :func:`ball`, :func:`ellipse` and :func:`star` rather
    than the constructor.

    Attributes
    ----------
    kind : {"ball", "ellipse", "star"}
    n : int
        Spatial dimension (1 only for balls).
    center : tuple of float
    radius : float
        Ball radius, or the base radius ``r0`` of a star shape.
    semi_axes : tuple of float
        Ellipse semi-axes along x1 and x2.
    coeffs : tuple of (int, float)
        Star perturbation modes ``(m, eps_m)`` in ``r0 (1 + sum eps_m cos(m t))``.
    """

    kind: str
    n: int = 2
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    semi_axes: tuple = (1.0, 1.0)
    coeffs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("ball", "ellipse", "star"):
            raise GeometryError(f"unknown shape {self.kind!r}")
        if self.n not in (1, 2):
            raise GeometryError("only dimensions 1 and 2 are supported")
        if len(self.center) != self.n:
            raise GeometryError("center must have n coordinates")
        if self.kind != "ball" and self.n != 2:
            raise GeometryError(f"{self.kind} domains are two-dimensional")
        if self.radius <= 0 or min(self.semi_axes) <= 0:
            raise GeometryError("radii and semi-axes must be positive")
        if self.kind == "star":
            bend = sum(eps * m * m for m, eps in self.coeffs)
            if abs(bend) >= 0.2:
                raise GeometryError("star perturbation needs |sum eps_m m^2| < 0.2")
            if sum(abs(eps) for _, eps in self.coeffs) >= 1:
                raise GeometryError("star radius must stay positive")

    # ------------------------------------------------------------------
    # boundary curve (2-d)

    def curve(self, t):
        """Boundary point and its first two parameter derivatives at ``t``."""
        t = np.asarray(t, dtype=float)
        cos, sin = np.cos(t), np.sin(t)
        c0 = np.asarray(self.center)
        if self.kind == "ellipse":
            a, b = self.semi_axes
            p = np.stack([a * cos, b * sin], -1)
            d1 = np.stack([-a * sin, b * cos], -1)
            return p + c0, d1, -p
        if self.kind == "ball":
            r, r1, r2 = self.radius * np.ones_like(t), np.zeros_like(t), np.zeros_like(t)
        else:
            r = np.ones_like(t)
            r1 = np.zeros_like(t)
            r2 = np.zeros_like(t)
            for m, eps in self.coeffs:
                r = r + eps * np.cos(m * t)
                r1 = r1 - eps * m * np.sin(m * t)
                r2 = r2 - eps * m * m * np.cos(m * t)
            r, r1, r2 = self.radius * r, self.radius * r1, self.radius * r2
        u = np.stack([cos, sin], -1)
        du = np.stack([-sin, cos], -1)
        p = r[..., None] * u
        d1 = r1[..., None] * u + r[..., None] * du
        d2 = r2[..., None] * u + 2 * r1[..., None] * du - r[..., None] * u
        return p + c0, d1, d2

    def curvature_at(self, t) -> np.ndarray:
        """Signed curvature of the boundary, positive where the domain is convex."""
        _, d1, d2 = self.curve(t)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def normal_at(self, t) -> np.ndarray:
        """Unit inward normal at parameter ``t`` (counter-clockwise curve)."""
        _, d1, _ = self.curve(t)
        nrm = np.stack([-d1[..., 1], d1[..., 0]], -1)
        return nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)

    def boundary_points(self, m: int) -> np.ndarray:
        """``m`` boundary samples (both endpoints in 1-d)."""
        if self.n == 1:
            c = self.center[0]
            return np.array([[c - self.radius], [c + self.radius]])
        t = 2 * np.pi * np.arange(m) / m
        return self.curve(t)[0]

    # ------------------------------------------------------------------
    # membership and projection

    def level(self, x) -> np.ndarray:
        """Implicit function, positive inside, zero on the boundary, negative outside."""
        x = as_points(x, self.n)
        d = x - np.asarray(self.center)
        if self.kind == "ball":
            return self.radius - np.linalg.norm(d, axis=-1)
        if self.kind == "ellipse":
            a, b = self.semi_axes
            return 1.0 - (d[..., 0] / a) ** 2 - (d[..., 1] / b) ** 2
        theta = np.arctan2(d[..., 1], d[..., 0])
        r = self.radius * (1 + sum(eps * np.cos(m * theta) for m, eps in self.coeffs))
        return r - np.linalg.norm(d, axis=-1)

    def contains(self, x) -> np.ndarray:
        return self.level(x) > 0

    def project(self, x):
        """Closest boundary point to each ``x``.

        Returns
        -------
        p : ndarray
            Boundary points, same shape as ``x``.
        t : ndarray or None
            Curve parameters of ``p`` (``None`` in 1-d).
        """
        x = as_points(x, self.n)
        c0 = np.asarray(self.center)
        if self.n == 1:
            left, right = c0 - self.radius, c0 + self.radius
            p = np.where(np.abs(x - left) <= np.abs(x - right), left, right)
            return p, None
        if self.kind == "ball":
            d = x - c0
            t = np.arctan2(d[..., 1], d[..., 0])
            return self.curve(t)[0], t
        shape = x.shape[:-1]
        flat = x.reshape(-1, 2)
        t = np.empty(flat.shape[0])
        for s in range(0, flat.shape[0], _CHUNK):
            t[s:s + _CHUNK] = self._newton_project(flat[s:s + _CHUNK])
        t = t.reshape(shape)
        return self.curve(t)[0], t

    def _newton_project(self, pts: np.ndarray) -> np.ndarray:
        ts = 2 * np.pi * np.arange(_SCAN_ANGLES) / _SCAN_ANGLES
        samples = self.curve(ts)[0]
        d2 = ((pts[:, None, :] - samples[None]) ** 2).sum(-1)
        t = ts[np.argmin(d2, axis=1)]
        dt = 2 * np.pi / _SCAN_ANGLES
        res = np.full(t.shape, np.inf)
        for _ in range(_NEWTON_MAXIT):
            p, d1, d2c = self.curve(t)
            r = p - pts
            g = (r * d1).sum(-1)
            gp = (d1 * d1).sum(-1) + (r * d2c).sum(-1)
            step = np.where(gp > 0, -g / np.where(gp > 0, gp, 1.0), -np.sign(g) * dt)
            step = np.clip(step, -dt, dt)
            t = t + step
            res = np.abs(g) / np.linalg.norm(d1, axis=-1)
            if np.all(np.abs(step) < 1e-15) or np.all(res < 1e-14 * (1 + np.linalg.norm(r, axis=-1))):
                return t
        scale = 1 + np.linalg.norm(self.curve(t)[0] - pts, axis=-1)
        if np.all(res < 1e-11 * scale):
            return t
        raise ProjectionError("boundary projection did not converge", t, res)

    def boundary_distance(self, x) -> np.ndarray:
        """Unsigned distance to the boundary."""
        x = as_points(x, self.n)
        if self.kind == "ball":
            return np.abs(self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1))
        p, _ = self.project(x)
        return np.linalg.norm(x - p, axis=-1)

    def delta(self, x) -> np.ndarray:
        """Distance to the complement, clamped to zero outside."""
        x = as_points(x, self.n)
        if self.kind == "ball":
            return np.maximum(self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1), 0.0)
        inside = self.contains(x)
        out = np.zeros(x.shape[:-1])
        if np.any(inside):
            out[inside] = self.boundary_distance(x[inside])
        return out

    def signed_boundary_distance(self, x) -> np.ndarray:
        """Distance to the boundary, negative outside the domain."""
        x = as_points(x, self.n)
        return np.where(self.level(x) >= 0, 1.0, -1.0) * self.boundary_distance(x)

    # ------------------------------------------------------------------
    # scalar characteristics

    @cached_property
    def inradius(self) -> float:
        if self.kind == "ball":
            return float(self.radius)
        if self.kind == "ellipse":
            return float(min(self.semi_axes))
        lo, hi = self.bounding_box
        lat = Lattice.covering(lo, hi, float(np.max(hi - lo)) / 48)
        pts = lat.points().reshape(-1, 2)
        d = self.delta(pts)
        x0 = pts[np.argmax(d)]
        res = optimize.minimize(lambda z: -float(self.delta(z)), x0, method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-14})
        return float(-res.fun)

    @cached_property
    def min_curvature_radius(self) -> float:
        if self.n == 1:
            return np.inf
        if self.kind == "ball":
            return float(self.radius)
        if self.kind == "ellipse":
            a, b = self.semi_axes
            return float(min(a, b) ** 2 / max(a, b))
        t = 2 * np.pi * np.arange(8192) / 8192
        return float(1.0 / np.max(np.abs(self.curvature_at(t))))

    @cached_property
    def rho(self) -> float:
        """Radius below which the boundary collar inclusions are expected to hold."""
        return 0.5 * min(self.inradius, self.min_curvature_radius)

    def collar_radius(self, kappa: float = 0.05) -> float:
        """Largest collar radius for which both ball inclusions are guaranteed.

        Curvature pulls the boundary towards off-axis slab nodes by about
        ``s^2 / (2 r_c)``; keeping that below ``kappa R / 2`` for tangential
        offsets ``s`` up to ``kappa' R`` gives ``R <= kappa r_c / kappa'^2``.
        """
        kp = 0.5 + 2 * kappa
        return float(min(self.rho, kappa * self.min_curvature_radius / kp**2))

    @cached_property
    def bounding_box(self):
        c = np.asarray(self.center, dtype=float)
        if self.kind == "ball":
            return c - self.radius, c + self.radius
        if self.kind == "ellipse":
            ax = np.asarray(self.semi_axes, dtype=float)
            return c - ax, c + ax
        pts = self.boundary_points(4096)
        pad = 1e-3 * self.radius
        return pts.min(0) - pad, pts.max(0) + pad

    @cached_property
    def diameter(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        if self.kind == "ellipse":
            return 2.0 * max(self.semi_axes)
        pts = self.boundary_points(1024)
        return float(np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1).max()))

    def to_dict(self) -> dict:
        out = {"shape": self.kind, "n": self.n, "center": list(self.center)}
        if self.kind == "ball":
            out["radius"] = self.radius
        elif self.kind == "ellipse":
            out["semi_axes"] = list(self.semi_axes)
        else:
            out["r0"] = self.radius
            out["coeffs"] = {int(m): eps for m, eps in self.coeffs}
        return out


def ball(radius: float = 1.0, center=None, n: int = 2) -> Domain:
    center = tuple(float(c) for c in (center if center is not None else np.zeros(n)))
    return Domain("ball", n=n, center=center, radius=float(radius))


def ellipse(a: float, b: float, center=(0.0, 0.0)) -> Domain:
    return Domain("ellipse", n=2, center=tuple(map(float, center)), semi_axes=(float(a), float(b)))


def star(r0: float, coeffs, center=(0.0, 0.0)) -> Domain:
    """Star-shaped domain ``r(t) = r0 (1 + sum eps_m cos(m t))``.

    ``coeffs`` is a mapping or sequence of pairs ``m -> eps_m``.
    """
    items = coeffs.items() if isinstance(coeffs, dict) else coeffs
    modes = tuple(sorted((int(m), float(e)) for m, e in items))
    return Domain("star", n=2, center=tuple(map(float, center)), radius=float(r0), coeffs=modes)


def signed_distance(domain: Domain, x) -> np.ndarray | float:
    """Distance from ``x`` to the complement of the domain (zero outside).

    Raises
    ------
    ProjectionError
        If the boundary projection fails to converge.
    """
    out = domain.delta(x)
    return float(out) if np.ndim(out) == 0 else out


def _check_on_boundary(domain: Domain, x0, tol: float = 1e-8) -> np.ndarray:
    x0 = as_points(x0, domain.n).reshape(domain.n)
    gap = float(domain.boundary_distance(x0))
    if gap > tol:
        raise GeometryError(f"point {x0} is {gap:.3e} away from the boundary")
    return x0


def inward_normal(domain: Domain, x0) -> np.ndarray:
    """Unit inward normal at a boundary point."""
    x0 = _check_on_boundary(domain, x0)
    c = np.asarray(domain.center)
    if domain.n == 1:
        return np.sign(c - x0)
    if domain.kind == "ball":
        v = c - x0
        return v / np.linalg.norm(v)
    _, t = domain.project(x0)
    nrm = domain.normal_at(t)
    if not np.isfinite(nrm).all():
        raise GeometryError("degenerate boundary gradient")
    return nrm


def _smooth_step(s):
    """Blend profile and its first two derivatives on ``[0, 1]``.

    ``P'(s) = (1 - s)^3 (1 + 3 s)`` decreases from 1 to 0 with vanishing
    second derivative at both ends, so the blend is C^2.
    """
    s = np.clip(s, 0.0, 1.0)
    p = s - 2 * s**3 + 2 * s**4 - 0.6 * s**5
    p1 = (1 - s) ** 3 * (1 + 3 * s)
    p2 = -12 * s * (1 - s) ** 2
    return p, p1, p2


#: Supremum of ``|P''|`` on ``[0, 1]``; the blend's curvature bound is this over ``rho1``.
BLEND_CURVATURE = 16.0 / 9.0


@dataclass(frozen=True)
class SmoothedDistance:
    """C^2 modification of the distance: equal to it below ``rho1``, constant above ``2 rho1``.

    Calling the object evaluates the field; :meth:`gradient` and
    :meth:`laplacian` use the exact boundary curvature at the projection.
    """

    domain: Domain
    rho1: float

    @property
    def cap(self) -> float:
        return self.rho1 * 1.4

    @property
    def curvature_bound(self) -> float:
        return BLEND_CURVATURE / self.rho1

    def profile(self, d):
        """Blend ``S(d)`` with ``S'`` and ``S''`` as functions of the raw distance."""
        d = np.asarray(d, dtype=float)
        s = (d - self.rho1) / self.rho1
        p, p1, p2 = _smooth_step(s)
        below = d < self.rho1
        val = np.where(below, d, self.rho1 * (1 + p))
        der = np.where(below, 1.0, p1)
        der2 = np.where(below, 0.0, p2 / self.rho1)
        return val, der, der2

    def __call__(self, x) -> np.ndarray:
        return self.profile(self.domain.delta(x))[0]

    def _frame(self, x):
        x = as_points(x, self.domain.n)
        dom = self.domain
        d = dom.delta(x)
        if dom.n == 1:
            c = dom.center[0]
            grad = np.sign(c - x)
            return d, grad, np.zeros_like(d)
        p, t = dom.project(x)
        kappa = dom.curvature_at(t)
        grad = dom.normal_at(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = -kappa / (1 - kappa * d)
        return d, grad, lap

    def gradient(self, x) -> np.ndarray:
        d, grad, _ = self._frame(x)
        _, s1, _ = self.profile(d)
        g = s1[..., None] * grad
        return np.where((d > 0)[..., None], g, 0.0)

    def laplacian(self, x) -> np.ndarray:
        d, _, lap = self._frame(x)
        _, s1, s2 = self.profile(d)
        out = np.where(s1 > 0, s1 * lap, 0.0) + s2
        return np.where(d > 0, out, 0.0)


def smoothed_distance(domain: Domain, rho1: float) -> SmoothedDistance:
    """Build the C^2 distance field with collar width ``rho1``.

    Raises
    ------
    GeometryError
        If ``rho1`` is not smaller than the inradius.
    """
    if not 0 < rho1 < domain.inradius:
        raise GeometryError(f"collar width {rho1} must lie in (0, inradius={domain.inradius})")
    return SmoothedDistance(domain, float(rho1))


@dataclass
class CollarRegion:
    """Boundary collar around ``x0`` sampled on a lattice.

    Attributes
    ----------
    d_r, d_plus, d_half : ndarray of bool
        Node masks of ``B_R(x0) ∩ Ω``, of the interior slab
        ``B_{κ'R}(x0) ∩ {(x - x0)·n ≥ 2κR} ∩ Ω``, and of ``B_{R/2}(x0) ∩ Ω``.
    y_star, shifted : ndarray
        For nodes of ``d_half`` (in mask order) the nearest boundary point
        and that point pushed ``4κR`` along its inward normal.
    """

    x0: np.ndarray
    R: float
    kappa: float
    kappa_prime: float
    normal: np.ndarray
    lattice: Lattice
    d_r: np.ndarray
    d_plus: np.ndarray
    d_half: np.ndarray
    y_star: np.ndarray
    shifted: np.ndarray
    delta: np.ndarray = field(repr=False)


def _ball_in_collar(domain, x0, R, c, r, tol):
    return (np.linalg.norm(c - x0, axis=-1) + r <= R + tol) & (domain.delta(c) >= r - tol)


def _ball_in_slab(domain, x0, nrm, kappa, kp, R, c, r, tol):
    return (
        (np.linalg.norm(c - x0, axis=-1) + r <= kp * R + tol)
        & ((c - x0) @ nrm - r >= 2 * kappa * R - tol)
        & (domain.delta(c) >= r - tol)
    )


def collar_region(domain: Domain, x0, R: float, kappa: float = 0.05,
                  lattice: Lattice | None = None, h: float | None = None) -> CollarRegion:
    """Sample the collar regions around a boundary point and check their inclusions.

    Parameters
    ----------
    domain : Domain
    x0 : array_like
        Boundary point (within 1e-8).
    R : float
        Collar radius, at most ``domain.rho``.
    kappa : float
        Slab constant in ``(0, 1/16)``.
    lattice : Lattice, optional
        Nodes to classify. Defaults to a lattice of spacing ``h`` (default
        ``R / 64``) covering ``B_R(x0)``.

    Raises
    ------
    GeometryError
        On bad parameters or when one of the two ball inclusions fails on
        the sampled nodes. The message names the failing inclusion.
    """
    if not 0 < kappa < 1 / 16:
        raise GeometryError(f"kappa must lie in (0, 1/16), got {kappa}")
    if R <= 0 or R > domain.rho * (1 + 1e-12):
        raise GeometryError(f"R={R} exceeds the inclusion radius rho={domain.rho:.6g}")
    x0 = _check_on_boundary(domain, x0)
    nrm = np.atleast_1d(inward_normal(domain, x0))
    kp = 0.5 + 2 * kappa
    if lattice is None:
        lattice = Lattice.covering(x0 - R, x0 + R, h if h is not None else R / 64)
    pts = lattice.points()
    dist = np.linalg.norm(pts - x0, axis=-1)
    near = dist < R
    delta = np.zeros(lattice.shape)
    delta[near] = domain.delta(pts[near])
    inside = delta > 0
    d_r = near & inside
    d_plus = (dist < kp * R) & inside & ((pts - x0) @ nrm >= 2 * kappa * R)
    d_half = (dist < R / 2) & inside
    tol = 1e-12 * max(R, 1.0)

    ys = pts[d_plus]
    ok = _ball_in_collar(domain, x0, R, ys, kappa * R, tol)
    if not ok.all():
        bad = ys[~ok][0]
        raise GeometryError(f"interior-ball inclusion B_(kappa R)(y) in D_R fails at y={bad}")

    yh = pts[d_half]
    if domain.n == 1:
        y_star, _ = domain.project(yh)
        n_star = np.sign(np.asarray(domain.center) - y_star)
    else:
        y_star, t = domain.project(yh)
        n_star = domain.normal_at(t) if domain.kind != "ball" else (
            (np.asarray(domain.center) - y_star) / domain.radius)
    shifted = y_star + 4 * kappa * R * n_star
    shallow = delta[d_half] < 4 * kappa * R
    z = shifted[shallow]
    ok = _ball_in_collar(domain, x0, R, z, 4 * kappa * R, tol) & _ball_in_slab(
        domain, x0, nrm, kappa, kp, R, z, kappa * R, tol)
    if not ok.all():
        bad = yh[shallow][~ok][0]
        raise GeometryError(f"shifted-ball inclusion fails for y={bad} (R too large)")
    deep = yh[~shallow]
    in_slab = (np.linalg.norm(deep - x0, axis=-1) < kp * R) & ((deep - x0) @ nrm >= 2 * kappa * R)
    if not in_slab.all():
        bad = deep[~in_slab][0]
        raise GeometryError(f"shifted-ball inclusion fails: deep node y={bad} is outside the slab")
    return CollarRegion(x0, float(R), float(kappa), kp, nrm, lattice, d_r, d_plus, d_half,
                        y_star, shifted, delta)
