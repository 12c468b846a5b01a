"""Monte Carlo and finite-difference tools for BSDEs with singular terminal
values on random horizons, and for the matching elliptic problems with
boundary blow-up."""

__version__ = "0.1.0"

from . import bsde, checks, closedform, config, diffusion, geometry, pde, reports, rng  # noqa: F401
