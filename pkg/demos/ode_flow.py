"""Backward ODE flow with no diffusion.

With a frozen state the backward equation reduces to dy = f(y) dt run backward
from a terminal value.  The implicit scheme converges at first order to the
closed-form flow.  Infinite terminal data is a fixed point of the discrete
step, so it is approached through large finite values instead.

Run:  python3 demos/ode_flow.py
"""
import math

from blowup_lab import bsde, closedform

gen = closedform.power(1.0)
exact = float(closedform.general_flow(gen, 2.0, 1.0))
print(f"closed form, xi=2, horizon 1: {exact:.6f}")
for dt in (4e-3, 2e-3, 1e-3, 5e-4):
    y0 = bsde.solve_pure_ode(gen, 2.0, 1.0, dt)
    print(f"  dt={dt:.0e}  Y0={y0:.6f}  error={abs(y0 - exact):.2e}")

print(f"\nclosed form from xi=+inf: {float(closedform.general_flow(gen, math.inf, 1.0)):.6f}")
for xi in (1e2, 1e4, 1e8):
    print(f"  xi={xi:.0e}  Y0={bsde.solve_pure_ode(gen, xi, 1.0, 1e-3):.6f}")
