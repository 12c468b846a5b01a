"""Finite differences for -L u + kappa u|u|^q = 0 with Dirichlet data g ^ n.

Monotone scheme on uniform tensor grids over intervals and boxes: central
second differences for the (diagonal) diffusion, upwind first differences
for the drift.  The discrete operator is an M-matrix, so the discrete
comparison principle holds exactly and the truncation ladder is monotone.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .closedform import GeneratorSpec
from .diffusion import CoefficientField
from .geometry import Ball, BoundaryData, Box, Domain
from .reports import CheckReport


class NonDiagonalDiffusionError(ValueError):
    pass


class NewtonStagnationError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


class MonotonicityError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# grid and problem


class Grid:
    """Uniform tensor grid on an Interval or Box, boundary nodes on the faces."""

    def __init__(self, domain: Domain, h: float):
        if isinstance(domain, Ball) or not isinstance(domain, Box):
            raise TypeError("finite differences support Interval and Box domains only; use Monte Carlo for balls")
        if h <= 0:
            raise ValueError("h must be positive")
        self.domain = domain
        lo, hi = np.asarray(domain.lo, float), np.asarray(domain.hi, float)
        counts = np.rint((hi - lo) / h).astype(int)
        if np.any(counts < 2):
            raise ValueError("grid needs at least one interior node per axis")
        self.h = (hi - lo) / counts
        self.shape = tuple(int(c) + 1 for c in counts)
        self.axes = [np.linspace(lo[i], hi[i], self.shape[i]) for i in range(domain.dimension)]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        idx = np.indices(self.shape).reshape(domain.dimension, -1).T
        on_face = np.any((idx == 0) | (idx == np.asarray(self.shape) - 1), axis=1)
        self.boundary = on_face
        self.interior = ~on_face

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def strides(self):
        return [int(np.prod(self.shape[i + 1 :])) for i in range(self.dimension)]


@dataclass
class EllipticProblem:
    grid: Grid
    field: CoefficientField
    generator: GeneratorSpec
    boundary: BoundaryData
    truncation: float = math.inf
    max_iter: int = 100

    def __post_init__(self):
        if self.generator.kind != "power":
            raise ValueError("finite differences use the power generator")
        if self.generator.kappa > 0:
            a = self.field.covariance_diag(self.grid.points[self.grid.interior])
            if np.min(a) <= 0:
                raise ValueError("diffusion must be uniformly elliptic on the grid when kappa > 0")

    def with_truncation(self, n: float) -> "EllipticProblem":
        return EllipticProblem(self.grid, self.field, self.generator, self.boundary, n, self.max_iter)

    def with_boundary(self, boundary: BoundaryData) -> "EllipticProblem":
        return EllipticProblem(self.grid, self.field, self.generator, boundary, self.truncation, self.max_iter)

    def boundary_values(self) -> np.ndarray:
        pts = self.grid.points[self.grid.boundary]
        vals = np.minimum(self.boundary(pts), self.truncation)
        if not np.all(np.isfinite(vals)):
            raise ValueError("boundary data g ^ n must be finite at every boundary node")
        return vals


@dataclass
class SolutionField:
    grid: Grid
    values: np.ndarray
    residual: float
    iterations: int
    truncation: float
    clamp_active: bool = False
    history: list = field(default_factory=list)

    def interior_values(self):
        return self.values[self.grid.interior]

    def at(self, x) -> float:
        """Nodal value at x (must be a grid node up to rounding)."""
        x = np.atleast_1d(np.asarray(x, float))
        k = np.argmin(np.sum((self.grid.points - x) ** 2, axis=1))
        if np.max(np.abs(self.grid.points[k] - x)) > 1e-9 * (1 + np.max(np.abs(x))):
            raise ValueError(f"{x.tolist()} is not a grid node")
        return float(self.values[k])

    def interpolate(self, x) -> float:
        """Multilinear interpolation of the nodal values."""
        from scipy.interpolate import RegularGridInterpolator

        f = RegularGridInterpolator(self.grid.axes, self.values.reshape(self.grid.shape))
        return float(f(np.atleast_2d(np.asarray(x, float)))[0])

    def summary(self) -> dict:
        return {
            "truncation": None if math.isinf(self.truncation) else self.truncation,
            "residual": self.residual,
            "iterations": self.iterations,
            "clamp_active": self.clamp_active,
            "nodes": int(self.grid.size),
            "h": [float(v) for v in self.grid.h],
        }

    def to_csv(self, path):
        d = self.grid.dimension
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(d)] + ["u"])
            for p, u in zip(self.grid.points, self.values):
                w.writerow([repr(float(c)) for c in p] + [repr(float(u))])


# ---------------------------------------------------------------------------
# assembly


def assemble_operator(problem: EllipticProblem):
    """Matrices (A, B) with (-L_h u)_interior = A u_interior + B u_boundary.

    Rows use (a_ii / 2h^2)[-1, 2, -1] for diffusion.  For drift component
    b_i > 0 the row gains (b_i / h)[0, 1, -1] (forward difference), for
    b_i < 0 it gains (|b_i| / h)[-1, 1, 0]; both keep off-diagonals
    nonpositive.
    """
    grid, fld = problem.grid, problem.field
    if not getattr(fld, "diagonal", True):
        raise NonDiagonalDiffusionError("only diagonal diffusion is discretized; use the Monte Carlo solver")
    inner = np.flatnonzero(grid.interior)
    pts = grid.points[inner]
    a = fld.covariance_diag(pts)
    b = fld.drift(pts)
    rows, cols, vals = [], [], []
    diag = np.zeros(inner.size)
    for i, (h, stride) in enumerate(zip(grid.h, grid.strides())):
        diff = 0.5 * a[:, i] / h**2
        up = np.maximum(b[:, i], 0.0) / h
        down = np.maximum(-b[:, i], 0.0) / h
        diag += 2 * diff + up + down
        rows += [inner, inner]
        cols += [inner + stride, inner - stride]
        vals += [-(diff + up), -(diff + down)]
    rows.append(inner)
    cols.append(inner)
    vals.append(diag)
    full = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size)
    )
    full = full[inner]
    A = full[:, grid.interior].tocsc()
    B = full[:, grid.boundary].tocsr()
    return A, B


def is_m_matrix(A, tol: float = 0.0) -> bool:
    """Nonpositive off-diagonals and weak diagonal dominance (rows)."""
    A = sparse.csr_matrix(A)
    d = A.diagonal()
    off = A - sparse.diags(d)
    if off.nnz and off.data.max() > tol:
        return False
    return bool(np.all(d + np.asarray(off.sum(axis=1)).ravel() >= -tol * np.abs(d)))


# ---------------------------------------------------------------------------
# nonlinear solve


def solve_truncated(
    problem: EllipticProblem,
    initial: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    picard_sweeps: int = 3,
    operator=None,
) -> SolutionField:
    """Damped Newton for -L_h u + kappa u|u|^q = 0 with u = g ^ n on the boundary.

    Convergence is declared when the sup norm of the h^2-scaled residual is at
    most ``tol * (1 + n)``, where n is the largest boundary value.  Newton
    steps are halved (up to 30 times) whenever the residual grows.
    """
    grid = problem.grid
    q, kappa = problem.generator.q, problem.generator.kappa
    A, B = operator if operator is not None else assemble_operator(problem)
    g = problem.boundary_values()
    rhs = -(B @ g)
    scale = float(np.min(grid.h)) ** 2
    level = 1.0 + float(np.max(np.abs(g))) if g.size else 1.0

    def residual(u):
        return A @ u - rhs + kappa * u * np.abs(u) ** q

    if initial is None:
        u = np.zeros(int(grid.interior.sum()))
        for _ in range(picard_sweeps if kappa > 0 else 1):
            u = spsolve((A + sparse.diags(kappa * np.abs(u) ** q)).tocsc(), rhs)
    else:
        u = np.asarray(initial, float)[grid.interior].copy()

    history = []
    r = residual(u)
    rn = scale * float(np.max(np.abs(r))) if r.size else 0.0
    history.append(rn)
    it = 0
    while rn > tol * level:
        if it >= problem.max_iter:
            raise NewtonStagnationError(f"Newton did not converge in {problem.max_iter} iterations", history)
        J = (A + sparse.diags(kappa * (1 + q) * np.abs(u) ** q)).tocsc()
        step = spsolve(J, r)
        t = 1.0
        for _ in range(30):
            cand = u - t * step
            rc = residual(cand)
            rcn = scale * float(np.max(np.abs(rc)))
            if rcn < rn:
                break
            t *= 0.5
        else:
            raise NewtonStagnationError("line search failed to reduce the residual", history)
        u, r, rn = cand, rc, rcn
        history.append(rn)
        it += 1

    clamp = bool(np.any(u < 0))
    values = np.empty(grid.size)
    values[grid.boundary] = g
    values[grid.interior] = np.maximum(u, 0.0)
    return SolutionField(grid, values, rn, it, problem.truncation, clamp, history)


# ---------------------------------------------------------------------------
# ladder


@dataclass
class LadderRecord:
    levels: list
    increments: list  # sup relative increment on nodes with rho >= delta
    converged: bool
    delta: float
    fields: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "increments": self.increments,
            "converged": self.converged,
            "delta": self.delta,
            "fields": [f.summary() for f in self.fields],
        }


def ladder_minimal(
    problem: EllipticProblem,
    levels,
    delta: Optional[float] = None,
    tol: float = 1e-6,
    keep_fields: bool = False,
    monotone_tol: float = 1e-9,
):
    """Solve for each truncation level, warm-starting from the previous one.

    Returns (last field, LadderRecord).  Increments are relative,
    max (u_n' - u_n) / u_n' over interior nodes at distance >= delta from the
    boundary (default 4h).
    """
    levels = [float(v) for v in levels]
    if not levels or any(b <= a for a, b in zip(levels[:-1], levels[1:])):
        raise ValueError("levels must be strictly increasing")
    grid = problem.grid
    delta = 4 * float(np.max(grid.h)) if delta is None else float(delta)
    far = grid.interior & (problem.grid.domain.distance_to_boundary(grid.points) >= delta - 1e-12)
    op = assemble_operator(problem)
    prev = None
    fields, incs = [], []
    for n in levels:
        fld = solve_truncated(problem.with_truncation(n), initial=None if prev is None else prev.values, operator=op)
        if prev is not None:
            drop = prev.values - fld.values
            worst = float(np.max(drop[grid.interior])) if grid.interior.any() else 0.0
            if worst > monotone_tol * max(1.0, float(np.max(np.abs(fld.values[grid.interior])))):
                raise MonotonicityError(f"ladder decreased by {worst:.3e} between levels {prev.truncation} and {n}")
            if far.any():
                up = fld.values[far] - prev.values[far]
                incs.append(float(np.max(up / np.maximum(fld.values[far], 1e-300))))
            else:
                incs.append(0.0)
        fields.append(fld)
        prev = fld
    converged = bool(incs) and incs[-1] < tol
    record = LadderRecord(levels, incs, converged, delta, fields if keep_fields else [])
    return prev, record


def comparison_check(problem: EllipticProblem, lower: BoundaryData, upper: BoundaryData, tol: float = 1e-9):
    """Solve with both data sets and report max(u_lower - u_upper)."""
    op = assemble_operator(problem)
    u1 = solve_truncated(problem.with_boundary(lower), operator=op)
    u2 = solve_truncated(problem.with_boundary(upper), operator=op)
    pts = problem.grid.points[problem.grid.boundary]
    data_gap = float(np.max(np.minimum(lower(pts), problem.truncation) - np.minimum(upper(pts), problem.truncation)))
    worst = float(np.max(u1.values - u2.values))
    report = CheckReport("minimality_comparison", config={"nodes": int(problem.grid.size)})
    report.measured["max_difference"] = worst
    report.measured["max_data_difference"] = data_gap
    report.add("max_difference", worst, "<=", tol)
    return report


def boundary_layer_profile(fld: SolutionField, node, direction, q: float, rho_max: Optional[float] = None):
    """Samples (rho, rho^(2/q) u) along a grid line entering the domain at ``node``.

    ``direction`` must be a signed coordinate vector.
    """
    grid = fld.grid
    direction = np.asarray(direction, float).reshape(-1)
    nz = np.flatnonzero(direction)
    if nz.size != 1 or direction.size != grid.dimension:
        raise ValueError("direction must be aligned with a grid axis")
    axis, sign = int(nz[0]), int(np.sign(direction[nz[0]]))
    start = np.atleast_1d(np.asarray(node, float))
    vals = fld.values.reshape(grid.shape)
    idx = [int(np.argmin(np.abs(grid.axes[i] - start[i]))) for i in range(grid.dimension)]
    if not fld.grid.boundary.reshape(grid.shape)[tuple(idx)]:
        raise ValueError("profile must start at a boundary node")
    rho, prof = [], []
    for step in range(1, grid.shape[axis] - 1):
        j = list(idx)
        j[axis] += sign * step
        if not 0 < j[axis] < grid.shape[axis] - 1:
            break
        r = step * float(grid.h[axis])
        if rho_max is not None and r > rho_max + 1e-12:
            break
        rho.append(r)
        prof.append(r ** (2.0 / q) * vals[tuple(j)])
    return np.array(rho), np.array(prof)


def richardson_level(values, levels):
    """Aitken extrapolation of a ladder sequence at one node (last three levels)."""
    v = np.asarray(values, float)
    if v.size < 3:
        return float(v[-1])
    a, b, c = v[-3:]
    den = (c - b) - (b - a)
    if abs(den) < 1e-300 or (c - b) * (b - a) <= 0:
        return float(c)
    return float(c - (c - b) ** 2 / den)


def write_ladder_json(record: LadderRecord, path):
    with open(path, "w") as fh:
        json.dump(record.to_dict(), fh, indent=2, sort_keys=True)


def gnuplot_script(csv_path: str, dimension: int, title: str = "u") -> str:
    """A gnuplot script plotting the CSV written by SolutionField.to_csv."""
    if dimension == 1:
        body = f"plot '{csv_path}' using 1:2 with lines title '{title}'\n"
    else:
        body = f"set view map\nsplot '{csv_path}' using 1:2:3 with points palette pt 5 ps 0.5 title '{title}'\n"
    return "set datafile separator ','\nset key autotitle columnhead\n" + body
