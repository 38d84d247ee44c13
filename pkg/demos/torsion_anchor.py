"""Torsion problem on the unit disc: the discrete solution against the exact one.

Run with ``python demos/torsion_anchor.py``.
"""
import numpy as np

from mixreg.geometry import ball
from mixreg.kernels import make_fractional
from mixreg.overdetermined import serrin_solve
from mixreg.solver import assemble, solve_linear

B1 = ball()

print("Δu = -1 in the unit disc, u = 0 outside; exact u = (1 - |x|^2)/4")
for h in (1 / 16, 1 / 32, 1 / 64):
    rep = solve_linear(assemble(B1, None, 0.0, h), -1.0)
    exact = (1 - (rep.solution.lattice.points() ** 2).sum(-1)) / 4
    inside = B1.contains(rep.solution.lattice.points())
    err = np.max(np.abs(rep.solution.values - exact)[inside])
    print(f"  h=1/{round(1 / h):<3d} u(0)={rep.solution.at((0.0, 0.0)):.6f}  max nodal error {err:.1e}")

res = serrin_solve(B1, None, 0.0, h=1 / 64)
print(f"normal derivative: mean {res.mean:.5f} (exact 0.5), relative spread {res.rel_deviation:.2e}")

print("\nadding the nonlocal part (a = 0.5, alpha = 1.5) lowers the solution:")
for a in (0.0, 0.25, 0.5, 1.0):
    k = make_fractional(1.5) if a > 0 else None
    rep = solve_linear(assemble(B1, k, a, 1 / 32, A0=1.0), -1.0)
    print(f"  a={a:<4} u(0)={rep.solution.at((0.0, 0.0)):.5f}")
