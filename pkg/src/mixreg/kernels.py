"""Symmetric jump kernels, their dominating kernels, and the tail function Θ.

Every kernel here is radial with a profile that is a finite sum of truncated
power laws ``c * rho**(-p) * 1{rho <= cutoff}``. Radial moments then have
closed forms, which the quadrature and barrier code rely on.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import KernelError


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in ``R^n`` (2 for n=1, 2π for n=2)."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class PowerTerm:
    """Radial profile piece ``coef * rho**(-power)`` for ``rho <= cutoff``."""

    coef: float
    power: float
    cutoff: float = math.inf

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore"):
            val = self.coef * rho ** (-self.power)
        return np.where(rho <= self.cutoff, val, 0.0)

    def moment(self, n: int, p: float, r0: float, r1: float) -> float:
        """``ω_n ∫_{r0}^{r1} ρ^{n-1+p} term(ρ) dρ`` (may be ``inf``)."""
        r1 = min(r1, self.cutoff)
        if r1 <= r0:
            return 0.0
        e = n + p - self.power
        if e == 0:
            if r0 == 0 or math.isinf(r1):
                return math.inf
            val = math.log(r1 / r0)
        elif e > 0:
            if math.isinf(r1):
                return math.inf
            val = (r1**e - r0**e) / e
        else:
            if r0 == 0:
                return math.inf
            val = (r0**e - (0.0 if math.isinf(r1) else r1**e)) / (-e)
        return sphere_area(n) * self.coef * val


def _profile(terms, rho):
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    for t in terms:
        out = out + t(rho)
    return out


def _radius(y, n):
    y = np.asarray(y, dtype=float)
    if n == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        return np.abs(y)
    return np.linalg.norm(y, axis=-1)


@dataclass(frozen=True, eq=False)
class DominatingKernel:
    """``Λ|y|^{-n-α}`` inside the unit ball and an integrable tail ``J`` outside.

    Attributes
    ----------
    tail : tuple of PowerTerm
        Radial pieces of ``J``; only their values on ``|y| >= 1`` matter.
    """

    Lambda: float
    alpha: float
    n: int
    tail: tuple = ()

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise KernelError("alpha must lie in (0,2)")
        if self.Lambda <= 0:
            raise KernelError("Lambda must be positive")

    def profile(self, rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore"):
            inner = self.Lambda * rho ** (-self.n - self.alpha)
        return np.where(rho < 1, inner, _profile(self.tail, rho))

    def __call__(self, y):
        return self.profile(_radius(y, self.n))

    @property
    def tail_mass(self) -> float:
        """``∫_{|z|>=1} J(z) dz``, the constant ``κ1`` of Θ."""
        return float(sum(t.moment(self.n, 0.0, 1.0, math.inf) for t in self.tail))

    @property
    def truncated_second_moment(self) -> float:
        """``∫ (|y|^2 ∧ 1) k̂(y) dy``."""
        return sphere_area(self.n) * self.Lambda / (2 - self.alpha) + self.tail_mass

    def tail_beyond(self, radius: float) -> float:
        """``∫_{|z|>radius} k̂``, for ``radius >= 1``."""
        return float(sum(t.moment(self.n, 0.0, radius, math.inf) for t in self.tail))

    def to_dict(self) -> dict:
        return {"Lambda": self.Lambda, "alpha": self.alpha, "n": self.n,
                "tail": [asdict(t) for t in self.tail], "tail_mass": self.tail_mass}


@dataclass(frozen=True, eq=False)
class Kernel:
    """Radial symmetric jump density with an attached dominating kernel.

    Instances hash by identity, so quadrature caches keyed on them are
    safe.

    Attributes
    ----------
    terms : tuple of PowerTerm
        Profile pieces; ``k(y) = sum(term(|y|))``.
    alpha, Lambda : float
        Order and constant of the dominating kernel.
    dominating : DominatingKernel
    family : str
    params : dict
        Construction parameters, for reports.
    beta_infinite : bool
        Whether the comparability condition holds without a range limit.
    """

    n: int
    terms: tuple
    dominating: DominatingKernel
    family: str
    params: dict = field(default_factory=dict)
    beta_infinite: bool = False

    @property
    def alpha(self) -> float:
        return self.dominating.alpha

    @property
    def Lambda(self) -> float:
        return self.dominating.Lambda

    @property
    def radial(self) -> bool:
        return True

    @property
    def support(self) -> float:
        return max(t.cutoff for t in self.terms)

    @property
    def strictly_decreasing(self) -> bool:
        """Positive and strictly decreasing profile on ``(0, ∞)``."""
        return (any(math.isinf(t.cutoff) for t in self.terms)
                and all(t.coef > 0 and t.power > 0 for t in self.terms))

    @property
    def omega(self) -> float:
        return sphere_area(self.n)

    def profile(self, rho):
        return _profile(self.terms, rho)

    def __call__(self, y):
        """Density at displacement(s) ``y`` (trailing axis of length n, or scalars in 1-d)."""
        return self.profile(_radius(y, self.n))

    def moment(self, p: float, r0: float = 0.0, r1: float = math.inf) -> float:
        """``∫_{r0<|y|<r1} |y|^p k(y) dy``."""
        return float(sum(t.moment(self.n, p, r0, r1) for t in self.terms))

    def mass_beyond(self, radius: float) -> float:
        return self.moment(0.0, radius, math.inf)

    def scaled(self, r: float) -> "Kernel":
        """Kernel ``y -> r^{n+α} k(r y)`` used by the rescaled operators."""
        if not 0 < r <= 1:
            raise KernelError("scale r must lie in (0, 1]")
        na = self.n + self.alpha
        terms = tuple(PowerTerm(t.coef * r ** (na - t.power), t.power, t.cutoff / r)
                      for t in self.terms)
        params = dict(self.params, scale=r)
        return Kernel(self.n, terms, self.dominating, self.family + "-scaled", params,
                      self.beta_infinite)

    def to_dict(self) -> dict:
        return {"family": self.family, "n": self.n, "params": dict(self.params),
                "alpha": self.alpha, "Lambda": self.Lambda,
                "support": None if math.isinf(self.support) else self.support,
                "strictly_decreasing": self.strictly_decreasing,
                "beta_infinite": self.beta_infinite,
                "dominating": self.dominating.to_dict()}


def make_fractional(alpha: float, Lambda: float = 1.0, truncation: float | None = None,
                    n: int = 2) -> Kernel:
    """``Λ|y|^{-n-α}``, optionally restricted to the ball of radius ``truncation``."""
    if not 0 < alpha < 2:
        raise KernelError("alpha must lie in (0,2)")
    if Lambda <= 0:
        raise KernelError("Lambda must be positive")
    if truncation is not None and truncation <= 0:
        raise KernelError("truncation radius must be positive")
    cut = math.inf if truncation is None else float(truncation)
    term = PowerTerm(float(Lambda), n + alpha, cut)
    dom = DominatingKernel(float(Lambda), float(alpha), n, (PowerTerm(float(Lambda), n + alpha),))
    params = {"alpha": alpha, "Lambda": Lambda, "truncation": truncation}
    return Kernel(n, (term,), dom, "fractional", params, beta_infinite=truncation is None)


def make_subordinate(mu1: float, mu2: float, n: int = 2) -> Kernel:
    """``Ψ(|y|^{-2}) / |y|^n`` with ``Ψ(s) = s^{μ1} + s^{μ2}``.

    Rescaling by ``r <= 1`` with order ``α = 2 μ2`` is dominated by
    ``2|y|^{-n-2μ2}`` inside the unit ball and ``2|y|^{-n-2μ1}`` outside.
    """
    if not 0 < mu1 <= mu2 < 1:
        raise KernelError("need 0 < mu1 <= mu2 < 1")
    terms = (PowerTerm(1.0, n + 2 * mu1), PowerTerm(1.0, n + 2 * mu2))
    dom = DominatingKernel(2.0, 2 * mu2, n, (PowerTerm(2.0, n + 2 * mu1),))
    return Kernel(n, terms, dom, "subordinate", {"mu1": mu1, "mu2": mu2}, beta_infinite=True)


def modified_kernel(k: Kernel, beta_prime: float, zeta: float) -> Kernel:
    """Cut ``k`` at radius ``beta_prime`` and add the heavy tail ``|y|^{-n-ζ}``.

    The added tail makes comparability hold with no range restriction.
    """
    if not 0 < zeta < min(1.0, k.alpha):
        raise KernelError("zeta must lie in (0, min(1, alpha))")
    if beta_prime <= 0:
        raise KernelError("beta_prime must be positive")
    n = k.n
    cut = tuple(PowerTerm(t.coef, t.power, min(t.cutoff, beta_prime)) for t in k.terms)
    extra = PowerTerm(1.0, n + zeta)
    d = k.dominating
    dom = DominatingKernel(d.Lambda + 1.0, d.alpha, n, d.tail + (extra,))
    params = dict(k.params, base=k.family, beta_prime=beta_prime, zeta=zeta)
    return Kernel(n, cut + (extra,), dom, "modified", params, beta_infinite=True)


def theta(dom: DominatingKernel, xi: float) -> float:
    """``Θ(ξ) = ∫_{|z|>ξ} min{1,|z|} k̂(z) dz`` in closed form."""
    if xi <= 0:
        raise KernelError("theta needs xi > 0")
    if xi > 1:
        return dom.tail_beyond(xi)
    a, lam, w = dom.alpha, dom.Lambda, sphere_area(dom.n)
    k1 = dom.tail_mass
    if a > 1:
        return w * lam / (a - 1) * (xi ** (1 - a) - 1) + k1
    if a == 1:
        return -w * lam * math.log(xi) + k1
    return w * lam / (1 - a) * (1 - xi ** (1 - a)) + k1


def theta_integral(dom: DominatingKernel, s):
    """``∫_0^s Θ(τ) dτ`` for ``0 <= s <= 1`` (vectorised)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > 1):
        raise KernelError("theta_integral needs 0 <= s <= 1")
    a, lam, w = dom.alpha, dom.Lambda, sphere_area(dom.n)
    k1 = dom.tail_mass
    if a > 1:
        return w * lam / (a - 1) * (s ** (2 - a) / (2 - a) - s) + k1 * s
    if a == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            slog = np.where(s > 0, s * np.log(s), 0.0)
        return w * lam * (s - slog) + k1 * s
    return w * lam / (1 - a) * (s - s ** (2 - a) / (2 - a)) + k1 * s


@dataclass
class AssumptionReport:
    """Sampled evidence for the scaling domination and comparability conditions."""

    samples: int
    max_ratio_a: float
    violations_a: int
    rho_estimate: float
    beta: float
    skipped_zero_pairs: int
    infinite_ratios: int

    def to_dict(self) -> dict:
        def fin(v):
            return None if not math.isfinite(v) else v
        return {"samples": self.samples, "max_ratio_a": self.max_ratio_a,
                "violations": self.violations_a, "rho_estimate": fin(self.rho_estimate),
                "beta": fin(self.beta), "skipped_zero_pairs": self.skipped_zero_pairs,
                "infinite_ratios": self.infinite_ratios}


def _random_directions(rng, m, n):
    v = rng.standard_normal((m, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def check_assumption(k: Kernel, samples: int = 10_000, beta: float | None = None,
                     seed: int = 0) -> AssumptionReport:
    """Monte Carlo check of the kernel conditions.

    Part (a) samples ``r ∈ (0, 1]`` and ``y`` and records the largest
    ``r^{n+α} k(ry) / k̂(y)``. Part (b) samples ``x, y ∈ B_{r/2}``, ``z``
    outside ``B_r`` with ``|y - z| < beta`` and records the largest
    ``k(x-z) / k(y-z)``. Pairs where both densities vanish are skipped.

    Parameters
    ----------
    beta : float, optional
        Comparability range. Defaults to infinity when the kernel carries
        the unrestricted flag, else to the kernel's support radius.
    """
    rng = np.random.default_rng(seed)
    n = k.n
    r = 10 ** rng.uniform(-3, 0, samples)
    y = _random_directions(rng, samples, n) * (10 ** rng.uniform(-3, 2, samples))[:, None]
    lhs = r ** (n + k.alpha) * k(r[:, None] * y)
    rhs = k.dominating(y)
    ratio_a = lhs / rhs
    viol = int(np.sum(ratio_a > 1 + 1e-10))

    if beta is None:
        beta = math.inf if k.beta_infinite else k.support
    rr = 10 ** rng.uniform(-3, 0, samples)
    def in_ball(rad):
        u = rng.uniform(0, 1, samples) ** (1 / n)
        return _random_directions(rng, samples, n) * (rad * u)[:, None]
    x = in_ball(rr / 2)
    yy = in_ball(rr / 2)
    zlen = rr * 10 ** rng.uniform(0, 2, samples) * (1 + 1e-9)
    z = _random_directions(rng, samples, n) * zlen[:, None]
    keep = np.linalg.norm(yy - z, axis=1) < beta
    num = k(x - z)
    den = k(yy - z)
    both_zero = keep & (num == 0) & (den == 0)
    valid = keep & ~both_zero
    inf_ratio = valid & (den == 0)
    finite = valid & (den > 0)
    rho = float(np.max(num[finite] / den[finite])) if finite.any() else 1.0
    if inf_ratio.any():
        rho = math.inf
    return AssumptionReport(samples, float(ratio_a.max()), viol, rho, float(beta),
                            int(both_zero.sum()), int(inf_ratio.sum()))
