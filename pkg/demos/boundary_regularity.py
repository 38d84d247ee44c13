"""Boundary behaviour of the mixed problem: quotient u/δ and its exponents.

Runs the regularity suite on the solution of Δu + 0.5 I u = -1 in the unit
disc with a fractional kernel of order 1.5, and prints how ``|L δ|`` grows
towards the boundary for three kernel orders.

Run with ``python demos/boundary_regularity.py``.
"""
from mixreg.geometry import ball
from mixreg.kernels import make_fractional
from mixreg.operators import l_delta_profile
from mixreg.regularity import regularity_suite
from mixreg.solver import assemble, solve_linear

B1 = ball()

print("growth of |L δ| near the boundary (a = 1):")
for alpha in (0.5, 1.0, 1.5):
    p = l_delta_profile(B1, make_fractional(alpha), 1.0, samples=2, levels=12)
    print(f"  alpha={alpha}: power-law exponent {p.exponent:+.3f}, "
          f"log-fit slope {p.log_slope:.3f} (R^2 {p.log_r2:.3f})")

u = solve_linear(assemble(B1, make_fractional(1.5), 0.5, 1 / 128, A0=1.0), -1.0).solution
rep = regularity_suite(u, B1, x0=(1.0, 0.0), harnack_radii=[0.2, 0.1, 0.05, 0.025])
print("\nregularity of the mixed solution at h = 1/128:")
for key, val in rep.to_dict().items():
    if isinstance(val, (int, float)):
        print(f"  {key:28s} {val:.4g}")
