"""Minimal large solution on (0, 1) as a limit of truncated problems.

The data is +inf at x = 0 and 1 at x = 1.  Each rung of the ladder replaces
+inf by a finite level n; the solutions increase with n.  Near the blow-up
point x^2 u(x) approaches the half-line coefficient A for q = 2.  Levels stop
near h^(-1): past that, new rungs only raise the first few grid nodes above
any continuum bound, so the increments shrink slowly and never reach zero.

Run:  python3 demos/boundary_layer.py
"""
from blowup_lab import closedform, config, pde
from blowup_lab.diffusion import CoefficientField
from blowup_lab.geometry import Interval

q, h = 2.0, 1 / 1024
A = closedform.halfline_blowup_coefficient(q, 1.0)
bd = config.build_boundary(config.interval_boundary(None, 1.0), 1)
prob = pde.EllipticProblem(pde.Grid(Interval(0, 1), h), CoefficientField.brownian(1), closedform.power(q), bd)
levels = [2.0**k for k in range(1, 11)]
u, rec = pde.ladder_minimal(prob, levels)

print("level   sup relative increment (rho >= 4h)")
for n, inc in zip(levels[1:], rec.increments):
    print(f"{n:7.0f}  {inc:.3e}")

rho, prof = pde.boundary_layer_profile(u, (0.0,), (1.0,), q, rho_max=0.1)
print(f"\nA = {A:.4f}; x^2 u(x) / A along the layer:")
for r, p in list(zip(rho, prof))[15::16]:
    print(f"  x={r:.4f}  {p / A:.4f}")
