"""Monotone discretisation of ``L = Δ + aI`` on a domain and its solvers.

Unknowns live on interior lattice nodes. The Laplacian uses Shortley–Weller
arms at nodes next to the boundary (second order, monotone), the jump part
uses the lattice quadrature of :mod:`mixreg.operators`, and exterior data
enter through boundary crossings and exterior lattice nodes.

Linear systems are nonsymmetric (unequal arms), so they are solved with
GMRES, preconditioned by a sparse LU factorisation of everything except the
off-diagonal jump convolution.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConvergenceError, PolicyCycleError, QuadratureError, ResourceLimitError
from .geometry import Domain
from .grid import GridFunction, Lattice
from .kernels import Kernel
from .operators import (QuadratureScheme, apply_L, boundary_arms, convolver, lattice_laplacian,
                        stencil_for)

DEFAULT_MEMORY_CAP = 4 * 1024**3


def _as_field(f, points):
    """Scalar, callable or array → values at ``points``."""
    if callable(f):
        return np.asarray(f(points), dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(points.shape[:-1], float(arr))
    return arr


@dataclass(eq=False)
class DiscreteOperator:
    """Assembled ``L_h`` acting on interior unknowns.

    Attributes
    ----------
    lattice : Lattice
    interior : ndarray of bool
        Lattice mask of the unknowns.
    local : scipy.sparse.csr_matrix
        Shortley–Weller Laplacian among interior unknowns.
    crossings : list of (row, point, coefficient)
        Arrays coupling each row to boundary crossing points.
    neighbours : ndarray of int, shape (2n, N)
        Interior index of each axis neighbour, ``-1`` at crossings.
    arm_lengths : ndarray, shape (2n, N)
        Matching arm lengths (``h`` or the crossing distance).
    """

    domain: Domain
    kernel: Kernel | None
    a: float
    h: float
    C0: float
    q: QuadratureScheme
    lattice: Lattice
    interior: np.ndarray
    index: np.ndarray
    local: sparse.csr_matrix
    crossings: tuple
    neighbours: np.ndarray
    arm_lengths: np.ndarray
    near_lap: sparse.csr_matrix | None = None
    stencil: object = None
    _precond: object = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(self.interior.sum())

    @property
    def points(self) -> np.ndarray:
        return self.lattice.points()[self.interior]

    @property
    def metadata(self) -> dict:
        return {"h": self.h, "a": self.a, "C0": self.C0, "unknowns": self.size,
                "kernel": None if self.kernel is None else self.kernel.to_dict()}

    @property
    def jump_diagonal(self) -> float:
        """Diagonal contribution ``-(Σw + tail + 2n c_near / h²)`` of ``I_h``."""
        if self.a == 0:
            return 0.0
        st = self.stencil
        return -(st.mass + st.tail + 2 * self.lattice.ndim * st.c_near / self.h**2)

    def diagonal(self) -> np.ndarray:
        return self.local.diagonal() + self.a * self.jump_diagonal

    def embed(self, u_int, exterior=None) -> np.ndarray:
        """Lattice array with ``u_int`` inside and exterior values elsewhere."""
        full = np.zeros(self.lattice.shape)
        if exterior is not None:
            ext = _as_field(exterior, self.lattice.points())
            full[~self.interior] = ext[~self.interior]
        full[self.interior] = u_int
        return full

    def apply(self, u_int) -> np.ndarray:
        """``L_h`` on interior values with zero exterior data."""
        u_int = np.asarray(u_int, dtype=float)
        out = self.local @ u_int
        if self.a > 0:
            st = self.stencil
            full = self.embed(u_int)
            conv = convolver(st, self.lattice.shape)(full)[self.interior]
            out = out + self.a * (conv - (st.mass + st.tail) * u_int + st.c_near * (self.near_lap @ u_int))
        return out

    def boundary_term(self, exterior=None, far_value: float = 0.0) -> np.ndarray:
        """``L_h`` applied to the exterior data with zero interior values.

        ``exterior`` is a callable (evaluated at exterior nodes and boundary
        crossings), a constant, or ``None`` for zero data.
        """
        out = np.zeros(self.size)
        if exterior is None and far_value == 0:
            return out
        if exterior is not None:
            rows, pts, coef = self.crossings
            if len(rows):
                np.add.at(out, rows, coef * _as_field(exterior, pts))
        if self.a > 0:
            st = self.stencil
            full = self.embed(np.zeros(self.size), exterior)
            conv = convolver(st, self.lattice.shape)(full - far_value)
            lap = lattice_laplacian(full, self.h, far_value)
            jump = conv + far_value * st.mass + st.c_near * lap + st.tail * far_value
            out += self.a * jump[self.interior]
        return out

    def linear_operator(self, extra: sparse.spmatrix | None = None):
        def mv(v):
            r = self.apply(v)
            return r if extra is None else r + extra @ v
        return spla.LinearOperator((self.size, self.size), matvec=mv, dtype=float)

    def preconditioner_matrix(self) -> sparse.csc_matrix:
        """Everything except the off-diagonal jump convolution, as a sparse matrix."""
        P = self.local.copy()
        if self.a > 0:
            st = self.stencil
            P = P + self.a * (st.c_near * self.near_lap
                              - (st.mass + st.tail) * sparse.identity(self.size))
        return P.tocsc()

    def preconditioner(self, extra: sparse.spmatrix | None = None):
        if extra is None and self._precond is not None:
            return self._precond
        P = self.preconditioner_matrix()
        if extra is not None:
            P = (P + extra).tocsc()
        lu = spla.splu(P)
        M = spla.LinearOperator((self.size, self.size), matvec=lu.solve, dtype=float)
        if extra is None:
            self._precond = M
        return M

    # -- monotone first-order terms ------------------------------------

    def _neighbour_values(self, u_int, boundary=0.0):
        ext = np.append(u_int, boundary)
        return ext[self.neighbours]

    def upwind_gradient_norm(self, u_int) -> np.ndarray:
        """``sqrt(Σ_i max(D_i⁻u, -D_i⁺u, 0)²)`` with Shortley–Weller arms.

        Boundary neighbours take the value zero (Dirichlet data).
        """
        nb = self._neighbour_values(u_int)
        n = self.lattice.ndim
        acc = np.zeros(self.size)
        for ax in range(n):
            dplus = (nb[2 * ax] - u_int) / self.arm_lengths[2 * ax]
            dminus = (u_int - nb[2 * ax + 1]) / self.arm_lengths[2 * ax + 1]
            acc += np.maximum(np.maximum(dminus, -dplus), 0.0) ** 2
        return np.sqrt(acc)

    def drift_matrix(self, b: np.ndarray) -> sparse.csr_matrix:
        """Upwind matrix of ``b·Du`` for a drift field ``b`` of shape ``(N, n)``.

        Forward differences where ``b_i > 0`` and backward where ``b_i < 0``,
        so off-diagonal entries are nonnegative.
        """
        N = self.size
        rows, cols, vals = [], [], []
        diag = np.zeros(N)
        ar = np.arange(N)
        for ax in range(self.lattice.ndim):
            for s, coefs in ((0, np.maximum(b[:, ax], 0)), (1, np.maximum(-b[:, ax], 0))):
                c = coefs / self.arm_lengths[2 * ax + s]
                nb = self.neighbours[2 * ax + s]
                diag -= c
                ok = (nb >= 0) & (c != 0)
                rows.append(ar[ok])
                cols.append(nb[ok])
                vals.append(c[ok])
        rows.append(ar)
        cols.append(ar)
        vals.append(diag)
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(N, N))

    def upwind_drift(self, b: np.ndarray, u_int) -> np.ndarray:
        nb = self._neighbour_values(u_int)
        out = np.zeros(self.size)
        for ax in range(self.lattice.ndim):
            bp, bm = np.maximum(b[:, ax], 0), np.maximum(-b[:, ax], 0)
            out += bp * (nb[2 * ax] - u_int) / self.arm_lengths[2 * ax]
            out -= bm * (u_int - nb[2 * ax + 1]) / self.arm_lengths[2 * ax + 1]
        return out

    # -- inspection ------------------------------------------------------

    def row(self, p: int):
        """Coefficients of row ``p`` over lattice nodes and boundary crossings.

        Returns
        -------
        nodes : dict
            Lattice index tuple → coefficient (the diagonal is included).
        crossings : list of (point, coefficient)
        tail : float
            Coefficient of the far value (``a`` times the tail mass).
        """
        idx = tuple(np.argwhere(self.interior)[p])
        nodes: dict = {}
        loc = self.local.getrow(p)
        inv = np.argwhere(self.interior)
        for j, v in zip(loc.indices, loc.data):
            key = tuple(int(t) for t in inv[j])
            nodes[key] = nodes.get(key, 0.0) + v
        rows, pts, coef = self.crossings
        cross = [(pts[i], coef[i]) for i in np.flatnonzero(rows == p)]
        tail = 0.0
        if self.a > 0:
            st = self.stencil
            n = self.lattice.ndim
            for off, w in zip(st.offsets, st.weights):
                key = tuple(int(t) for t in np.asarray(idx) + off)
                nodes[key] = nodes.get(key, 0.0) + self.a * w
            eye = np.eye(n, dtype=int)
            for off in np.concatenate([eye, -eye]):
                key = tuple(int(t) for t in np.asarray(idx) + off)
                nodes[key] = nodes.get(key, 0.0) + self.a * st.c_near / self.h**2
            key = tuple(int(t) for t in idx)
            nodes[key] = nodes.get(key, 0.0) - self.a * (st.mass + st.tail + 2 * n * st.c_near / self.h**2)
            tail = self.a * st.tail
        return nodes, cross, tail

    def memory_estimate(self) -> int:
        return _memory_estimate(self.lattice, self.stencil)


def _memory_estimate(lattice: Lattice, stencil) -> int:
    nodes = lattice.size
    est = 8 * nodes * 40
    if stencil is not None:
        side = [s + stencil.dense.shape[0] - 1 for s in lattice.shape]
        est += 8 * stencil.dense.size * 2 + 16 * int(np.prod(side)) * 3
    return int(est)


def assemble(domain: Domain, k: Kernel | None, a: float, h: float, C0: float = 0.0,
             q: QuadratureScheme | None = None, A0: float | None = None,
             memory_cap: int = DEFAULT_MEMORY_CAP) -> DiscreteOperator:
    """Assemble ``L_h`` for ``domain`` on the lattice ``h Z^n``.

    Raises
    ------
    QuadratureError
        If ``a`` lies outside ``[0, A0]`` or a kernel is missing.
    ResourceLimitError
        If the estimated memory exceeds ``memory_cap`` bytes.
    """
    if a < 0 or (A0 is not None and a > A0):
        raise QuadratureError(f"a={a} must lie in [0, A0]")
    if a > 0 and k is None:
        raise QuadratureError("a > 0 needs a kernel")
    q = q or QuadratureScheme.for_domain(domain)
    lo, hi = domain.bounding_box
    lattice = Lattice.covering(np.asarray(lo) - 2 * h, np.asarray(hi) + 2 * h, h)
    stencil = stencil_for(k, lattice, q, 0.0) if a > 0 else None
    est = _memory_estimate(lattice, stencil)
    if est > memory_cap:
        raise ResourceLimitError(
            f"estimated memory {est / 2**20:.0f} MiB exceeds the cap; use a coarser h")
    arms = boundary_arms(domain, lattice)
    interior = arms.interior
    N = int(interior.sum())
    index = -np.ones(lattice.shape, dtype=int)
    index[interior] = np.arange(N)
    n = lattice.ndim

    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    c_rows, c_pts, c_coef = [], [], []
    neighbours = np.empty((2 * n, N), dtype=int)
    arm_len = np.empty((2 * n, N))
    for ax in range(n):
        hp = arms.arms[2 * ax][0][interior]
        hm = arms.arms[2 * ax + 1][0][interior]
        for s, sgn in ((0, 1), (1, -1)):
            arm, cross, xc = arms.arms[2 * ax + s]
            length = arm[interior]
            coef = 2.0 / ((hp + hm) * length)
            nb_idx = np.roll(index, -sgn, axis=ax)[interior]
            is_cross = cross[interior]
            nb_idx[is_cross] = -1
            neighbours[2 * ax + s] = nb_idx
            arm_len[2 * ax + s] = length
            diag -= coef
            ok = ~is_cross
            rows.append(np.flatnonzero(ok))
            cols.append(nb_idx[ok])
            vals.append(coef[ok])
            c_rows.append(np.flatnonzero(is_cross))
            c_pts.append(xc)
            c_coef.append(coef[is_cross])
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    vals.append(diag)
    local = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(N, N))
    crossings = (np.concatenate(c_rows), np.concatenate(c_pts), np.concatenate(c_coef))

    near_lap = None
    if a > 0:
        lr, lc, lv = [np.arange(N)], [np.arange(N)], [np.full(N, -2.0 * n / h**2)]
        for ax in range(n):
            for sgn in (1, -1):
                nb = np.roll(index, -sgn, axis=ax)[interior]
                ok = nb >= 0
                lr.append(np.flatnonzero(ok))
                lc.append(nb[ok])
                lv.append(np.full(ok.sum(), 1.0 / h**2))
        near_lap = sparse.csr_matrix((np.concatenate(lv), (np.concatenate(lr), np.concatenate(lc))),
                                     shape=(N, N))
    return DiscreteOperator(domain, k, float(a), float(h), float(C0), q, lattice, interior, index,
                            local, crossings, neighbours, arm_len, near_lap, stencil)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Certificate:
    """Outcome of a discrete maximum-principle or comparison check.

    Attributes
    ----------
    kind : str
    applicable : bool
        Whether the hypotheses of the check hold (e.g. one-signed data).
    passed : bool
    witness : dict or None
        First violating node with the compared values.
    details : dict
    """

    kind: str
    applicable: bool
    passed: bool
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "applicable": self.applicable, "passed": self.passed,
                "witness": self.witness, "details": self.details}


@dataclass
class SolveReport:
    """Result of a discrete solve.

    Attributes
    ----------
    solution : GridFunction
    residual : float
        Max interior residual recomputed from the returned field.
    iterations : int
    history : list of float
        Residual or update-size history of the outer loop.
    damping : list of float
        Damping factors used (Picard iterations only).
    certificate : Certificate or None
    operator : DiscreteOperator
    extra : dict
    """

    solution: GridFunction
    residual: float
    iterations: int
    history: list
    damping: list
    certificate: Certificate | None
    operator: DiscreteOperator = field(repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def interior_values(self) -> np.ndarray:
        return self.solution.values[self.operator.interior]

    def to_dict(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations,
                "history": [float(v) for v in self.history],
                "damping": [float(v) for v in self.damping],
                "certificate": None if self.certificate is None else self.certificate.to_dict(),
                "operator": self.operator.metadata, **self.extra}

    def solution_csv(self) -> str:
        """Node coordinates and values for every lattice node inside the domain."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.solution.lattice.ndim
        w.writerow([f"x{i + 1}" for i in range(n)] + ["u"])
        pts = self.operator.points
        for p, v in zip(pts, self.interior_values):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
        return buf.getvalue()


def _gmres(A: DiscreteOperator, b, tol_abs, maxiter, extra=None, x0=None):
    """GMRES with iterative refinement until ``max|b - A x| <= tol_abs``."""
    op = A.linear_operator(extra)
    M = A.preconditioner(extra)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    history = []
    total = 0
    for _ in range(maxiter):
        r = b - op @ x
        res = float(np.max(np.abs(r))) if r.size else 0.0
        history.append(res)
        if res <= tol_abs:
            return x, total, history
        count = [0]
        # unit-scale residual: Krylov norms of tiny data would underflow
        dx, info = spla.gmres(op, r / res, M=M, rtol=1e-12, atol=0.0, restart=60, maxiter=20,
                              callback=lambda _: count.__setitem__(0, count[0] + 1),
                              callback_type="pr_norm")
        total += count[0]
        x = x + res * dx
    raise ConvergenceError("linear solve did not reach the residual target", history)


def solve_linear(A: DiscreteOperator, f=0.0, exterior=None, tol: float = 1e-10,
                 maxiter: int = 50) -> SolveReport:
    """Solve ``L_h u = f`` inside, ``u = exterior`` outside.

    Parameters
    ----------
    f : float, callable or array over interior nodes
    exterior : callable, float or None
        Exterior data (zero when ``None``).
    tol : float
        Target ``max |L_h u - f| <= tol * max(||f||_∞, ||exterior terms||_∞)``.

    Raises
    ------
    ConvergenceError
        With the residual history when the target is not met.
    """
    pts = A.points
    fv = _as_field(f, pts)
    rhs = fv - A.boundary_term(exterior)
    scale = max(float(np.max(np.abs(fv))) if fv.size else 0.0,
                float(np.max(np.abs(rhs))) if rhs.size else 0.0)
    if scale == 0:
        u_int, its, hist = np.zeros(A.size), 0, [0.0]
    else:
        u_int, its, hist = _gmres(A, rhs, tol * scale, maxiter)
    sol = GridFunction(A.lattice, A.embed(u_int, exterior), 0.0)
    Lu = apply_L(A.a, A.kernel, sol, A.q, domain=A.domain,
                 boundary_data=_boundary_callable(exterior))
    res = float(np.max(np.abs(Lu[A.interior] - fv))) if A.size else 0.0
    cert = _max_principle(A, fv, sol, exterior)
    return SolveReport(sol, res, its, hist, [], cert, A)


def _boundary_callable(exterior):
    if exterior is None:
        return None
    if callable(exterior):
        return exterior
    return lambda pts: np.full(len(pts), float(exterior))


def _max_principle(A, fv, sol, exterior) -> Certificate:
    ext_vals = sol.values[~A.interior]
    u = sol.values[A.interior]
    lo = min(0.0, float(ext_vals.min()) if ext_vals.size else 0.0)
    hi = max(0.0, float(ext_vals.max()) if ext_vals.size else 0.0)
    scale = max(1.0, float(np.max(np.abs(sol.values))))
    tol = 1e-9 * scale
    pts = A.points
    if np.all(fv <= 0):
        bad = np.flatnonzero(u < lo - tol)
        claim = f"f <= 0 implies u >= {lo}"
    elif np.all(fv >= 0):
        bad = np.flatnonzero(u > hi + tol)
        claim = f"f >= 0 implies u <= {hi}"
    else:
        return Certificate("max-principle", False, True, None, {"claim": "f changes sign"})
    wit = None
    if bad.size:
        i = int(bad[0])
        wit = {"node": [float(c) for c in pts[i]], "value": float(u[i])}
    return Certificate("max-principle", True, bad.size == 0, wit, {"claim": claim})


def solve_semilinear(A: DiscreteOperator, H=None, f=-1.0, tol: float = 1e-8,
                     omega: float = 0.5, maxiter: int = 200, bound: float = 1e6,
                     linear_tol: float = 1e-11) -> SolveReport:
    """Damped Picard iteration for ``L_h u + H(|Du|_h) = f(u)``, zero exterior data.

    Each step solves ``L_h w = f(u_m) - H(|Du_m|_h)`` and sets
    ``u_{m+1} = u_m + ω (w - u_m)``. The damping is halved when the update
    grows. Iteration stops once ``max |w - u_m| <= tol``.

    Raises
    ------
    ConvergenceError
        When iterates exceed ``bound`` or ``maxiter`` is reached.
    """
    fn = f if callable(f) else (lambda u, c=float(f): np.full_like(u, c))
    Hn = H if H is not None else (lambda s: np.zeros_like(s))
    u = np.zeros(A.size)
    history, damping = [], []
    prev = math.inf
    its = 0
    for m in range(maxiter):
        rhs = fn(u) - Hn(A.upwind_gradient_norm(u))
        w, n_it, _ = _gmres(A, rhs, linear_tol * max(1.0, float(np.max(np.abs(rhs)))), 50, x0=u)
        its += n_it
        step = float(np.max(np.abs(w - u)))
        history.append(step)
        if step <= tol:
            u = w
            break
        if step > prev:
            omega *= 0.5
        damping.append(omega)
        prev = step
        u = u + omega * (w - u)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > bound:
            raise ConvergenceError("Picard iterates diverged", history)
    else:
        raise ConvergenceError("Picard iteration did not converge", history)
    sol = GridFunction(A.lattice, A.embed(u), 0.0)
    Lu = apply_L(A.a, A.kernel, sol, A.q, domain=A.domain)[A.interior]
    res = float(np.max(np.abs(Lu + Hn(A.upwind_gradient_norm(u)) - fn(u))))
    ratios = [b / a for a, b in zip(history[:-1], history[1:]) if a > 0]
    extra = {"picard_iterations": len(history), "contracted": bool(ratios and max(ratios[1:] or ratios) < 1),
             "linear_iterations": its}
    return SolveReport(sol, res, len(history), history, damping, None, A, extra)


def _control_values(spec, pts, n):
    b, f = spec
    bv = np.asarray(b(pts) if callable(b) else np.broadcast_to(np.asarray(b, float), (len(pts), n)),
                    dtype=float)
    fv = _as_field(f, pts)
    return bv, fv


def solve_hjb(A: DiscreteOperator, controls, tol: float = 1e-9, max_sweeps: int = 50,
              linear_tol: float = 1e-12) -> SolveReport:
    """Policy iteration for ``L_h u + min_μ max_ν {b_μν·Du + f_μν} = 0``.

    Parameters
    ----------
    controls : sequence of sequences of (b, f)
        ``controls[μ][ν]`` is a drift (vector or callable of points) and a
        source (scalar or callable).

    Raises
    ------
    PolicyCycleError
        If a policy recurs without convergence or ``max_sweeps`` is hit; the
        error carries the residual trace.
    """
    pts = A.points
    n = A.lattice.ndim
    table = [[_control_values(c, pts, n) for c in row] for row in controls]
    u = np.zeros(A.size)
    seen = {}
    history = []
    prev_key = None
    its = 0

    def hamiltonian(u):
        vals = np.array([[b_dot + fv for b_dot, fv in
                          ((A.upwind_drift(bv, u), fv) for bv, fv in row)] for row in table])
        inner = vals.max(axis=1)
        nu = vals.argmax(axis=1)
        mu = inner.argmin(axis=0)
        return inner.min(axis=0), mu, nu[mu, np.arange(A.size)]

    for sweep in range(max_sweeps):
        Hval, mu, nu = hamiltonian(u)
        res = float(np.max(np.abs(A.apply(u) + Hval)))
        history.append(res)
        key = (mu.tobytes(), nu.tobytes())
        if key == prev_key and res <= tol:
            break
        if key in seen and key != prev_key:
            raise PolicyCycleError(f"policy cycle detected at sweep {sweep}", history)
        seen[key] = sweep
        prev_key = key
        bsel = np.empty((A.size, n))
        fsel = np.empty(A.size)
        for i, row in enumerate(table):
            for j, (bv, fv) in enumerate(row):
                m = (mu == i) & (nu == j)
                bsel[m] = bv[m]
                fsel[m] = fv[m]
        D = A.drift_matrix(bsel)
        scale = max(1.0, float(np.max(np.abs(fsel))))
        u, n_it, _ = _gmres(A, -fsel, linear_tol * scale, 50, extra=D, x0=u)
        its += n_it
    else:
        raise PolicyCycleError("policy iteration hit the sweep limit", history)
    sol = GridFunction(A.lattice, A.embed(u), 0.0)
    Lu = apply_L(A.a, A.kernel, sol, A.q, domain=A.domain)[A.interior]
    final = float(np.max(np.abs(Lu + hamiltonian(u)[0])))
    return SolveReport(sol, final, len(history), history, [], None, A,
                       {"sweeps": len(history), "linear_iterations": its})


def comparison_check(sub: GridFunction, sup: GridFunction, A: DiscreteOperator | None = None,
                     margin: float = 0.0, tol: float = 0.0) -> Certificate:
    """Check ``sub <= sup`` on every node.

    When ``A`` is given the caller's hypothesis ``L_h sub >= L_h sup - margin``
    on interior nodes is also evaluated and reported in ``details``.
    """
    if sub.lattice != sup.lattice:
        raise ValueError("fields must share a lattice")
    diff = sub.values - sup.values
    bad = np.argwhere(diff > tol)
    wit = None
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        wit = {"index": list(idx), "node": [float(c) for c in sub.lattice.coord(idx)],
               "sub": float(sub.values[idx]), "sup": float(sup.values[idx])}
    details = {"max_excess": float(diff.max())}
    if A is not None:
        ls = apply_L(A.a, A.kernel, sub, A.q, domain=A.domain)[A.interior]
        lp = apply_L(A.a, A.kernel, sup, A.q, domain=A.domain)[A.interior]
        gap = float(np.max(lp - margin - ls))
        details.update({"hypothesis_gap": gap, "hypothesis_holds": gap <= 1e-9})
    return Certificate("comparison", True, bad.size == 0, wit, details)
