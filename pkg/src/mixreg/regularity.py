"""Measured regularity of solutions: Lipschitz bounds, Hölder exponents of
``u/δ`` and ``Du``, boundary Harnack ratios and interior gradient scaling.

All exponents come from closed-form least-squares fits in log-log
coordinates and are reported with their R² and the scale range used. They
are measurements, not the constants of any existence statement.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import GeometryError
from .geometry import CollarRegion, Domain, collar_region, inward_normal
from .grid import GridFunction

log = logging.getLogger(__name__)

#: Lattice directions used to form difference pairs at a given distance.
PAIR_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))


@dataclass
class PowerFit:
    """Least-squares fit ``log y = exponent * log x + intercept``.

    ``exponent`` is ``inf`` when every ``y`` vanishes (nothing to fit).
    """

    exponent: float
    intercept: float
    r2: float
    stderr: float
    scale_range: tuple
    points: int

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "intercept": self.intercept, "r2": self.r2,
                "stderr": self.stderr, "scale_range": list(self.scale_range),
                "points": self.points}


def power_fit(x, y, saturated: float = math.inf) -> PowerFit:
    """Fit ``y ≈ A x^p`` over entries with ``y > 0``.

    Returns ``exponent = saturated`` when all ``y`` are zero and NaN when
    fewer than two positive entries remain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = (float(x.min()), float(x.max())) if x.size else (math.nan, math.nan)
    if x.size and np.all(y <= 1e-300):
        return PowerFit(saturated, -math.inf, 1.0, 0.0, rng, int(x.size))
    keep = y > 1e-300
    if np.count_nonzero(keep) < 2:
        return PowerFit(math.nan, math.nan, math.nan, math.nan, rng, int(np.count_nonzero(keep)))
    fit = stats.linregress(np.log(x[keep]), np.log(y[keep]))
    r2 = float(fit.rvalue**2) if np.isfinite(fit.rvalue) else 1.0
    return PowerFit(float(fit.slope), float(fit.intercept), r2, float(fit.stderr), rng,
                    int(np.count_nonzero(keep)))


def _shift_pairs(values: np.ndarray, mask: np.ndarray, offset):
    """Values at node pairs ``(x, x + offset)`` with both ends in ``mask``."""
    sl_a, sl_b = [], []
    for o, s in zip(offset, values.shape[:mask.ndim]):
        if o >= 0:
            sl_a.append(slice(0, s - o))
            sl_b.append(slice(o, s))
        else:
            sl_a.append(slice(-o, s))
            sl_b.append(slice(0, s + o))
    sl_a, sl_b = tuple(sl_a), tuple(sl_b)
    both = mask[sl_a] & mask[sl_b]
    return values[sl_a][both], values[sl_b][both]


def _directions(n):
    if n == 1:
        return ((1,),)
    if n == 2:
        return PAIR_DIRECTIONS
    return tuple(tuple(int(i == j) for i in range(n)) for j in range(n))


# ---------------------------------------------------------------------------
# Lipschitz norm


def lipschitz_norm(u: GridFunction, samples: int = 2000, seed: int = 0) -> float:
    """Largest difference quotient of ``u`` over axis neighbours and random pairs."""
    v = u.values
    best = 0.0
    for ax in range(v.ndim):
        d = np.abs(np.diff(v, axis=ax))
        if d.size:
            best = max(best, float(d.max()) / u.h)
    if samples > 0 and v.size > 1:
        rng = np.random.default_rng(seed)
        pts = u.lattice.points().reshape(-1, v.ndim)
        flat = v.ravel()
        i = rng.integers(0, flat.size, samples)
        j = rng.integers(0, flat.size, samples)
        dist = np.linalg.norm(pts[i] - pts[j], axis=-1)
        ok = dist > 0
        if np.any(ok):
            best = max(best, float(np.max(np.abs(flat[i] - flat[j])[ok] / dist[ok])))
    return best


# ---------------------------------------------------------------------------
# the quotient u / δ


def quotient_field(u: GridFunction, domain: Domain) -> GridFunction:
    """``v = u/δ`` on interior nodes.

    Nodes with ``δ >= h`` use the quotient directly. Nodes closer to the
    boundary take a linear extrapolation of ``u(p + t n)/t`` from
    ``t = h, 2h`` along the inward normal at their boundary projection and
    are flagged, as are nodes lying on the boundary. Exterior nodes hold 0. ``meta`` carries the masks
    ``inside``, ``flagged`` and the distance array ``delta``.
    """
    pts = u.lattice.points()
    delta = domain.delta(pts)
    inside = (delta > 0) | (np.abs(domain.level(pts)) <= 1e-12)
    h = u.h
    v = np.zeros(u.lattice.shape)
    direct = delta >= h
    v[direct] = u.values[direct] / delta[direct]
    flagged = inside & ~direct
    if np.any(flagged):
        near = pts[flagged]
        p, nrm = _projection_frame(domain, near)
        u1 = u.interpolate(p + h * nrm)
        u2 = u.interpolate(p + 2 * h * nrm)
        q1, q2 = u1 / h, u2 / (2 * h)
        d = delta[flagged]
        v[flagged] = q1 + (q2 - q1) * (d - h) / h
    meta = {"inside": inside, "flagged": flagged, "delta": delta}
    return GridFunction(u.lattice, v, far_value=None, meta=meta)


def _projection_frame(domain: Domain, pts):
    if domain.n == 1:
        p, _ = domain.project(pts)
        nrm = np.sign(np.asarray(domain.center) - p)
        return p, nrm
    p, t = domain.project(pts)
    if domain.kind == "ball":
        nrm = (np.asarray(domain.center) - p) / domain.radius
    else:
        nrm = domain.normal_at(t)
    return p, nrm


def _field_masks(v: GridFunction, domain: Domain):
    """Usable-node mask and distances of a field.

    Nodes of the closed domain count, so boundary nodes of a field that is
    defined there (such as a synthetic profile) contribute their values.
    Only nodes flagged by :func:`quotient_field` (extrapolated quotients)
    are dropped.
    """
    pts = v.lattice.points()
    delta = v.meta.get("delta")
    if delta is None:
        delta = domain.delta(pts)
    inside = (delta > 0) | (np.abs(domain.level(pts)) <= 1e-12)
    flagged = v.meta.get("flagged", np.zeros_like(inside))
    return inside & ~flagged, delta, int(np.count_nonzero(flagged))


# ---------------------------------------------------------------------------
# oscillation decay


@dataclass
class OscillationFit:
    """Oscillation of ``v`` over shrinking collars ``B_{R_k}(x0) ∩ Ω``.

    Attributes
    ----------
    tau : float
        Fitted exponent of ``osc_k`` against ``R_k`` (``inf`` if all vanish).
    fit : PowerFit
    rows : list of dict
        ``scale, sup, inf, osc, nodes`` per level.
    monotone : bool
        Whether ``osc_k`` is non-increasing in ``k``.
    excluded_nodes : int
    """

    tau: float
    fit: PowerFit
    rows: list
    monotone: bool
    excluded_nodes: int
    ratio: float

    def to_dict(self) -> dict:
        return {"tau": self.tau, "fit": self.fit.to_dict(), "rows": self.rows,
                "monotone": self.monotone, "excluded_nodes": self.excluded_nodes,
                "ratio": self.ratio}


def oscillation_decay(v: GridFunction, domain: Domain, x0, rho1: float | None = None,
                      levels: int = 5, ratio: float = 4.0, min_nodes: int = 20) -> OscillationFit:
    """``sup - inf`` of ``v`` over ``D_{R_k}``, ``R_k = ρ1 / ratio^k``.

    Nodes flagged by :func:`quotient_field` (``δ < h``) are excluded.
    Levels with fewer than ``min_nodes`` nodes are dropped with a warning.
    """
    if levels < 2:
        raise ValueError("need at least two levels")
    rho1 = domain.rho / 2 if rho1 is None else rho1
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    usable, _, excluded = _field_masks(v, domain)
    pts = v.lattice.points()
    dist = np.linalg.norm(pts - x0, axis=-1)
    rows = []
    for kk in range(levels):
        R = rho1 / ratio**kk
        sel = usable & (dist < R)
        cnt = int(np.count_nonzero(sel))
        if cnt < min_nodes:
            log.warning("oscillation_decay: level %d (R=%.3g) has %d nodes; truncating", kk, R, cnt)
            break
        vals = v.values[sel]
        rows.append({"scale": R, "sup": float(vals.max()), "inf": float(vals.min()),
                     "osc": float(vals.max() - vals.min()), "nodes": cnt})
    if len(rows) < 2:
        raise GeometryError("fewer than two oscillation levels contain enough nodes")
    osc = np.array([r["osc"] for r in rows])
    fit = power_fit([r["scale"] for r in rows], osc)
    monotone = bool(np.all(np.diff(osc) <= 1e-14 * max(1.0, float(osc.max()))))
    return OscillationFit(fit.exponent, fit, rows, monotone, excluded, float(ratio))


# ---------------------------------------------------------------------------
# boundary Harnack


@dataclass
class HarnackResult:
    """``sup v / inf v`` over the interior slab of a collar."""

    scale: float
    sup: float
    inf: float
    ratio: float
    nodes: int
    positive: bool

    def to_dict(self) -> dict:
        return {"scale": self.scale, "sup": self.sup, "inf": self.inf,
                "osc": self.sup - self.inf, "ratio": self.ratio, "nodes": self.nodes,
                "positive": self.positive}


def boundary_harnack(v: GridFunction, region: CollarRegion) -> HarnackResult:
    """Ratio of ``sup`` to ``inf`` of ``v`` over the slab nodes of ``region``.

    The region's lattice must be the lattice of ``v``. A non-positive
    infimum gives an infinite ratio with ``positive=False``.
    """
    if region.lattice != v.lattice:
        raise GeometryError("collar region was sampled on a different lattice")
    sel = region.d_plus
    flagged = v.meta.get("flagged")
    if flagged is not None:
        sel = sel & ~flagged
    if not np.any(sel):
        raise GeometryError("collar slab contains no nodes")
    vals = v.values[sel]
    hi, lo = float(vals.max()), float(vals.min())
    positive = lo > 0
    ratio = hi / lo if positive else math.inf
    return HarnackResult(region.R, hi, lo, ratio, int(vals.size), positive)


@dataclass
class HarnackLadder:
    """Boundary Harnack ratios across a ladder of collar radii.

    ``C_fit`` is the smallest constant with
    ``sup <= C (inf + R^alpha_hat)`` on every rung.
    """

    rows: list
    max_ratio: float
    C_fit: float
    alpha_hat: float

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "max_ratio": self.max_ratio,
                "C_fit": self.C_fit, "alpha_hat": self.alpha_hat}

    def to_csv(self) -> str:
        return _table_csv([r.to_dict() for r in self.rows])


def harnack_ladder(v: GridFunction, domain: Domain, x0, radii, kappa: float = 0.05,
                   alpha_hat: float = 0.5) -> HarnackLadder:
    """:func:`boundary_harnack` at each collar radius in ``radii``."""
    rows = []
    for R in radii:
        reg = collar_region(domain, x0, R, kappa, lattice=v.lattice)
        rows.append(boundary_harnack(v, reg))
    ratios = [r.ratio for r in rows]
    C = max(r.sup / (r.inf + r.scale**alpha_hat) for r in rows)
    return HarnackLadder(rows, float(max(ratios)), float(C), float(alpha_hat))


# ---------------------------------------------------------------------------
# Hölder exponents from dyadic pair distances


@dataclass
class HolderFit:
    """Max difference over dyadic pair distances and the fitted exponent."""

    exponent: float
    fit: PowerFit
    rows: list
    saturated: bool

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "fit": self.fit.to_dict(), "rows": self.rows,
                "saturated": self.saturated}


def _holder(values: np.ndarray, mask: np.ndarray, delta: np.ndarray, h: float,
            max_distance: float, min_pairs: int = 30) -> HolderFit:
    """Slope of ``log max|f(x) - f(y)|`` against ``log|x - y|``.

    ``values`` may carry a trailing vector axis (gradients). Pairs are
    lattice translates along axis and diagonal directions by ``2^j`` steps;
    each distance is its own bucket and needs ``min_pairs`` pairs. At
    distance ``d`` only pairs whose ends both satisfy ``δ >= d`` count, so
    each bucket sees the field at its own scale and a pure power ``δ^β``
    gives slope exactly ``β``.
    """
    n = mask.ndim
    rows = []
    m = 1
    while h * m <= max_distance:
        for e in _directions(n):
            off = tuple(m * c for c in e)
            dist = h * m * math.sqrt(sum(c * c for c in e))
            if dist > max_distance:
                continue
            a, b = _shift_pairs(values, mask & (delta >= dist), off)
            if len(a) < min_pairs:
                continue
            diff = np.abs(a - b) if values.ndim == n else np.linalg.norm(a - b, axis=-1)
            rows.append({"distance": dist, "max_diff": float(diff.max()), "pairs": int(len(a))})
        m *= 2
    rows.sort(key=lambda r: r["distance"])
    if len(rows) < 2:
        log.warning("holder fit: only %d distance buckets with %d pairs", len(rows), min_pairs)
    fit = power_fit([r["distance"] for r in rows], [r["max_diff"] for r in rows], saturated=1.0)
    saturated = bool(rows) and all(r["max_diff"] <= 1e-300 for r in rows)
    return HolderFit(fit.exponent, fit, rows, saturated)


def quotient_holder_fit(v: GridFunction, domain: Domain, max_distance: float | None = None,
                        min_pairs: int = 30) -> HolderFit:
    """Global Hölder exponent of ``u/δ`` over usable interior nodes."""
    usable, delta, _ = _field_masks(v, domain)
    md = domain.inradius / 4 if max_distance is None else max_distance
    return _holder(v.values, usable, delta, v.h, md, min_pairs)


def _gradient(values: np.ndarray, h: float) -> np.ndarray:
    return np.stack(np.gradient(values, h), axis=-1) if values.ndim > 1 else np.gradient(values, h)[..., None]


def gradient_holder_fit(u: GridFunction, domain: Domain, max_distance: float | None = None,
                        min_pairs: int = 30) -> HolderFit:
    """Hölder exponent of the central-difference gradient at nodes with ``δ >= 2h``.

    A constant gradient gives zero differences; the exponent then
    saturates at 1.
    """
    delta = domain.delta(u.lattice.points())
    mask = delta >= 2 * u.h
    grad = _gradient(u.values, u.h)
    md = domain.inradius / 4 if max_distance is None else max_distance
    return _holder(grad, mask, delta, u.h, md, min_pairs)


# ---------------------------------------------------------------------------
# interior gradient scaling


@dataclass
class ScalingTable:
    """``max |Dv|`` over ``{δ >= σ}`` for a ladder of σ and the fitted exponent."""

    exponent: float
    fit: PowerFit
    rows: list

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "fit": self.fit.to_dict(), "rows": self.rows}


def interior_gradient_scaling(v: GridFunction, domain: Domain, sigmas=None) -> ScalingTable:
    """Fit ``max_{δ >= σ} |Dv| ≈ C σ^e``.

    ``sigmas`` defaults to ``2^{-j} inradius/4`` down to ``4h``; values
    below ``4h`` are dropped.
    """
    h = v.h
    if sigmas is None:
        top = domain.inradius / 4
        sigmas = [top * 2.0**-j for j in range(12) if top * 2.0**-j >= 4 * h]
    sigmas = [s for s in sigmas if s >= 4 * h * (1 - 1e-12)]
    if len(sigmas) < 2:
        raise ValueError("need at least two scales of at least 4h")
    delta = v.meta.get("delta")
    if delta is None:
        delta = domain.delta(v.lattice.points())
    gnorm = np.linalg.norm(_gradient(v.values, h), axis=-1)
    rows = []
    for s in sigmas:
        sel = delta >= s
        rows.append({"sigma": float(s), "max_grad": float(gnorm[sel].max()) if np.any(sel) else 0.0,
                     "nodes": int(np.count_nonzero(sel))})
    fit = power_fit([r["sigma"] for r in rows], [r["max_grad"] for r in rows], saturated=0.0)
    return ScalingTable(fit.exponent, fit, rows)


# ---------------------------------------------------------------------------
# full report


def _table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scale", "sup", "inf", "osc", "ratio"])
    for r in rows:
        ratio = r.get("ratio", r["sup"] / r["inf"] if r["inf"] > 0 else math.inf)
        w.writerow([repr(float(r["scale"])), repr(float(r["sup"])), repr(float(r["inf"])),
                    repr(float(r["osc"])), repr(float(ratio))])
    return buf.getvalue()


@dataclass
class RegularityReport:
    """All regularity measurements for one solution field."""

    lipschitz_estimate: float
    oscillation: OscillationFit
    kappa: HolderFit
    gamma: HolderFit
    harnack: HarnackLadder
    scaling: ScalingTable
    extra: dict = field(default_factory=dict)

    @property
    def tau_fit(self) -> float:
        return self.oscillation.tau

    @property
    def kappa_fit(self) -> float:
        return self.kappa.exponent

    @property
    def gamma_fit(self) -> float:
        return self.gamma.exponent

    def to_dict(self) -> dict:
        o = self.oscillation.fit
        return {
            "lipschitz_estimate": self.lipschitz_estimate,
            "tau_fit": self.tau_fit,
            "tau_band": [self.tau_fit - 2 * o.stderr, self.tau_fit + 2 * o.stderr],
            "tau_r2": o.r2,
            "oscillation": self.oscillation.to_dict(),
            "kappa_fit": self.kappa_fit,
            "kappa": self.kappa.to_dict(),
            "gamma_fit": self.gamma_fit,
            "gamma": self.gamma.to_dict(),
            "harnack_table": self.harnack.to_dict(),
            "sigma_scaling_table": self.scaling.to_dict(),
            "extra": self.extra,
        }

    def oscillation_csv(self) -> str:
        rows = [dict(r, ratio=r["sup"] / r["inf"] if r["inf"] > 0 else math.inf)
                for r in self.oscillation.rows]
        return _table_csv(rows)


def regularity_suite(u: GridFunction, domain: Domain, x0=None, rho1: float | None = None,
                     levels: int = 5, ratio: float = 2.0, harnack_radii=None,
                     kappa: float = 0.05, alpha_hat: float = 0.5) -> RegularityReport:
    """Run every measurement on a solved field ``u`` (zero outside Ω).

    ``x0`` defaults to the first boundary sample; ``harnack_radii`` to up
    to four dyadic radii starting at ``domain.collar_radius(kappa)``, keeping
    those whose slab is at least two nodes wide.
    """
    if x0 is None:
        x0 = domain.boundary_points(1)[0]
    x0 = np.asarray(x0, dtype=float)
    v = quotient_field(u, domain)
    osc = oscillation_decay(v, domain, x0, rho1, levels, ratio)
    kap = quotient_holder_fit(v, domain)
    gam = gradient_holder_fit(u, domain)
    if harnack_radii is None:
        top = domain.collar_radius(kappa)
        kp = 0.5 + 2 * kappa
        harnack_radii = [top * 2.0**-j for j in range(4) if kp * top * 2.0**-j >= 2 * u.h]
    har = harnack_ladder(v, domain, x0, harnack_radii, kappa, alpha_hat)
    sca = interior_gradient_scaling(v, domain)
    nrm = inward_normal(domain, x0)
    extra = {"x0": [float(c) for c in x0], "inward_normal": np.atleast_1d(nrm).tolist(),
             "flagged_nodes": int(np.count_nonzero(v.meta["flagged"]))}
    return RegularityReport(lipschitz_norm(u), osc, kap, gam, har, sca, extra)
