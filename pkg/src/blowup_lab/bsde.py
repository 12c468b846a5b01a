"""Monte Carlo solvers for the BSDE with random horizon and singular terminal value.

    Y_t = xi + int_{t^tau}^tau f(Y_r) dr - int_{t^tau}^tau Z_r dB_r,   xi = g(X_tau),

with f(y) = -kappa y|y|^q (or a tabulated monotone generator).  The solution
is built through truncation: terminal values g ^ n for increasing n.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from . import closedform
from .closedform import GeneratorSpec, MajorantSpec
from .diffusion import CoefficientField, McEstimate, _as_start, _kernel, _Trace, simulate_batch
from .geometry import Ball, BoundaryData, Domain, Interval


class UnexitedFractionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# scalar backward step


def implicit_step(gen: GeneratorSpec, dt: float, target, tol: float = 1e-12, max_iter: int = 100):
    """Nonnegative root y of y - dt f(y) = target.

    The map y -> y - dt f(y) is strictly increasing, so the root is unique and
    lies in [0, target].  Safeguarded Newton; the residual tolerance is
    ``tol * max(1, target)``.  An infinite target has root +inf, so truncate
    infinite terminal data before stepping.
    """
    t = np.asarray(target, dtype=float)
    if np.any(t < 0):
        raise ValueError("target must be nonnegative")
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return t[()] if t.ndim == 0 else t.copy()
    if np.any(np.isinf(t)):
        out = np.full(t.shape, np.inf)
        finite = np.isfinite(t)
        out[finite] = implicit_step(gen, dt, t[finite], tol, max_iter)
        return out[()] if out.ndim == 0 else out
    if gen.kind == "power" and gen.q == 1 and gen.kappa > 0:
        # quadratic: y + c y^2 = t, in the cancellation-free form
        c = dt * gen.kappa
        y = 2 * t / (1 + np.sqrt(1 + 4 * c * t))
        return y[()] if y.ndim == 0 else y
    lo = np.zeros_like(t)
    hi = t.copy()
    y = t.copy()
    if gen.kind == "power" and gen.kappa > 0:
        # both t and (t / (dt kappa))^(1/(1+q)) bound the root from above
        y = np.minimum(y, (t / (dt * gen.kappa)) ** (1.0 / (1.0 + gen.q)))
        hi = y.copy()
    scale = np.maximum(1.0, t)
    for _ in range(max_iter):
        res = y - dt * gen.f(y) - t
        if np.all(np.abs(res) <= tol * scale):
            break
        lo = np.where(res < 0, y, lo)
        hi = np.where(res > 0, y, hi)
        slope = 1.0 - dt * gen.df(y)
        newton = y - res / slope
        inside = (newton > lo) & (newton < hi)
        nxt = np.where(inside, newton, 0.5 * (lo + hi))
        done = np.abs(res) <= tol * scale
        y = np.where(done, y, nxt)
    return y[()] if y.ndim == 0 else y


def solve_pure_ode(gen: GeneratorSpec, xi: float, horizon: float, dt: float) -> float:
    """Space-free implicit scheme: Y_N = xi, Y_k - dt f(Y_k) = Y_{k+1}; returns Y_0."""
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > 1e-9 * horizon:
        raise ValueError("horizon must be a multiple of dt")
    y = float(xi)
    for _ in range(steps):
        y = float(implicit_step(gen, dt, y))
    return y


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorSpec
    field: CoefficientField
    domain: Domain
    boundary: BoundaryData
    x: tuple
    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    truncation: float = math.inf
    t_max: float = 5.0
    n_bins: Optional[int] = None
    unexited_threshold: float = 1e-3
    estimate_z: bool = False
    z_eps: tuple = (2.0,)
    keep_slices: bool = False
    n_batches: int = 16

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        if self.dt <= 0 or self.t_max < self.dt:
            raise ValueError("need dt > 0 and t_max >= dt")
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")

    @property
    def bins(self) -> int:
        if self.n_bins is not None:
            return self.n_bins
        return 64 if self.domain.dimension == 1 else 32

    def echo(self) -> dict:
        return {
            "generator": self.generator.describe(),
            "field": self.field.describe(),
            "domain": describe_domain(self.domain),
            "x": list(self.x),
            "dt": self.dt,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "truncation": None if math.isinf(self.truncation) else self.truncation,
            "t_max": self.t_max,
            "n_bins": self.bins,
            "unexited_threshold": self.unexited_threshold,
        }


def describe_domain(domain: Domain) -> dict:
    if isinstance(domain, Interval):
        return {"type": "interval", "a": domain.a, "b": domain.b}
    if isinstance(domain, Ball):
        return {"type": "ball", "center": list(domain.center), "radius": domain.radius}
    return {"type": "box", "lo": list(domain.lo), "hi": list(domain.hi)}


def default_majorant(field: CoefficientField, domain: Domain, gen: GeneratorSpec) -> MajorantSpec:
    """Keller-Osserman majorant for the run; the ball formula where it applies."""
    kappa = gen.kappa if gen.kappa > 0 else 1.0
    if field.family in ("brownian", "scalar_sigma") and isinstance(domain, (Interval, Ball)):
        C = closedform.keller_osserman_constant(
            gen.q, domain.dimension, "brownian_ball", kappa=kappa, sigma_scale=field.sigma_sup
        )
        return MajorantSpec(C, gen.q, 0.0, "brownian_ball")
    b_sup = field.K_bound if field.K_bound is not None else field.sigma_sup
    trace = 0.0
    if isinstance(domain, Ball):
        trace = field.sigma_sup**2 * (domain.dimension - 1) * 2.0 / domain.radius
    C = closedform.keller_osserman_constant(
        gen.q,
        domain.dimension,
        "generic",
        kappa=kappa,
        sigma_sup=field.sigma_sup,
        b_sup=b_sup,
        theta_sup=domain.inradius,
        trace_bound=trace,
    )
    return MajorantSpec(C, gen.q, 0.0, "generic")


@dataclass
class BsdeRun:
    config: RunConfig
    y0_mean: float
    y0_stderr: float
    unexited_fraction: float
    y0_bracket: tuple
    majorant: MajorantSpec
    exit_samples: np.ndarray = field(repr=False)
    terminal_samples: np.ndarray = field(repr=False)
    slices: Optional[list] = field(default=None, repr=False)
    z_integrals: dict = field(default_factory=dict, repr=False)
    per_level: list = field(default_factory=list)
    phi0: Optional[dict] = None

    def majorant_at_start(self) -> float:
        rho = self.config.domain.distance_to_boundary(np.asarray(self.config.x))
        return float(closedform.majorant_value(self.majorant, rho))

    def diagnostics(self) -> dict:
        return {
            "y0_bracket": list(self.y0_bracket),
            "majorant_C": self.majorant.C,
            "majorant_at_x": self.majorant_at_start(),
            "mean_exit_time": float(np.mean(self.exit_samples)),
            "z_integrals": {str(k): asdict(v) for k, v in self.z_integrals.items()},
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config.echo(),
            "y0_mean": self.y0_mean,
            "y0_stderr": self.y0_stderr,
            "unexited_fraction": self.unexited_fraction,
            "per_level": self.per_level
            or [{"n": self.config.echo()["truncation"], "y0_mean": self.y0_mean, "y0_stderr": self.y0_stderr}],
            "phi0": self.phi0,
            "diagnostics": self.diagnostics(),
        }

    def slices_csv_rows(self):
        """Rows (t, bin_coord..., value, z..., count) of the per-time-slice value function."""
        if not self.slices:
            return []
        rows = []
        for k, sl in enumerate(self.slices):
            for j in range(sl["count"].size):
                rows.append(
                    [k * self.config.dt]
                    + list(np.atleast_1d(sl["position"][j]))
                    + [sl["value"][j]]
                    + list(np.atleast_1d(sl["z"][j]) if sl["z"] is not None else [])
                    + [int(sl["count"][j])]
                )
        return rows


# ---------------------------------------------------------------------------
# spatial binning regression


class _Bins:
    """Uniform tensor bins over the domain's bounding box."""

    def __init__(self, domain: Domain, n_bins: int):
        self.lo, self.hi = (np.asarray(v, dtype=float) for v in domain.bounding_box)
        self.d = domain.dimension
        self.n = n_bins
        self.width = (self.hi - self.lo) / n_bins
        self.centers = [self.lo[i] + (np.arange(n_bins) + 0.5) * self.width[i] for i in range(self.d)]

    def index(self, pts):
        cell = np.clip(((pts - self.lo) / self.width).astype(np.int64), 0, self.n - 1)
        flat = cell[:, 0]
        for i in range(1, self.d):
            flat = flat * self.n + cell[:, i]
        return flat

    @property
    def total(self) -> int:
        return self.n**self.d


class _Regression:
    """Bin averages of a target; evaluated by linear interpolation.

    1D interpolates between bin-mean positions; higher dimensions fill empty
    bins from the nearest populated bin and interpolate on bin centres.
    """

    def __init__(self, bins: _Bins, pts, values, field: CoefficientField, gen: GeneratorSpec, dt, want_z):
        idx = bins.index(pts)
        count = np.bincount(idx, minlength=bins.total)
        sums = np.bincount(idx, weights=values, minlength=bins.total)
        occupied = count > 0
        self.bins = bins
        self._idx = idx
        self._pts = pts
        self._weights = None
        value = np.zeros(bins.total)
        value[occupied] = implicit_step(gen, dt, sums[occupied] / count[occupied])
        self.count = count
        self.z = None
        if bins.d == 1:
            pos = np.bincount(idx, weights=pts[:, 0], minlength=bins.total)
            self.xs = pos[occupied] / count[occupied]
            self.vs = value[occupied]
            self.position = self.xs
            self.value = self.vs
            self.count = count[occupied]
            self._compact = np.cumsum(occupied) - 1
            if want_z:
                if self.xs.size > 1:
                    slope = np.gradient(self.vs, self.xs)
                else:
                    slope = np.zeros(1)
                self.z = slope * field.sigma_diag(self.xs[:, None])[:, 0]
        else:
            grid = value.reshape((bins.n,) * bins.d)
            occ = occupied.reshape(grid.shape)
            if not occ.all():
                # empty bins merged with the nearest populated neighbour
                _, nearest = ndimage.distance_transform_edt(~occ, return_indices=True)
                grid = grid[tuple(nearest)]
            self.grid = grid
            self.interp = RegularGridInterpolator(bins.centers, grid, bounds_error=False, fill_value=None)
            mesh = np.stack(np.meshgrid(*bins.centers, indexing="ij"), axis=-1).reshape(-1, bins.d)
            self.position = mesh[occupied]
            self.value = value[occupied]
            self.count = count[occupied]
            if want_z:
                grads = np.gradient(grid, *bins.centers) if bins.d > 1 else [np.gradient(grid, bins.centers[0])]
                g = np.stack([gr.reshape(-1) for gr in grads], axis=-1)
                self.z_full = g * field.sigma_diag(mesh)
                self.z = self.z_full[occupied]

    def _training_weights(self):
        """(left, w) such that the fit at training point i is (1-w) v[left] + w v[left+1]."""
        if self._weights is None:
            x = self._pts[:, 0]
            m = self.xs.size
            c = self._compact[self._idx]
            left = np.clip(np.where(x >= self.xs[c], c, c - 1), 0, m - 2)
            w = np.clip((x - self.xs[left]) / (self.xs[left + 1] - self.xs[left]), 0.0, 1.0)
            self._weights = (left, w)
        return self._weights

    def fitted(self, table=None):
        """The regression function (or ``table`` on the same nodes) at the training points.

        Same values as calling the object on the training points, but reuses
        their bin indices instead of searching.
        """
        if self.bins.d != 1:
            return self(self._pts) if table is None else self.z_at(self._pts)
        v = self.vs if table is None else table
        if self.xs.size == 1:
            return np.full(self._pts.shape[0], v[0])
        left, w = self._training_weights()
        return v[left] + w * (v[left + 1] - v[left])

    def __call__(self, pts):
        if self.bins.d == 1:
            return np.interp(pts[:, 0], self.xs, self.vs)
        first = [c[0] for c in self.bins.centers]
        last = [c[-1] for c in self.bins.centers]
        return self.interp(np.clip(pts, first, last))

    def z_at(self, pts):
        """Z at points, piecewise from the bins."""
        if self.bins.d == 1:
            if self.xs.size == 1:
                return np.zeros((pts.shape[0], 1))
            return np.interp(pts[:, 0], self.xs, self.z)[:, None]
        return self.z_full[self.bins.index(pts)]


# ---------------------------------------------------------------------------
# forward pass and backward induction


@dataclass
class _Store:
    trace: _Trace
    tau: np.ndarray
    exit_points: np.ndarray
    exited: np.ndarray
    final: np.ndarray
    exit_tau: list
    exit_pts: list
    batches: Optional[list] = None


def _forward(cfg: RunConfig) -> _Store:
    x = _as_start(cfg.domain, cfg.x)
    if cfg.domain.distance_to_boundary(x) <= 0:
        raise ValueError("start point must be interior")
    ids = np.arange(cfg.n_paths, dtype=np.int64)
    trace = _Trace([], [], [])
    tau, pts, exited, final = _kernel(
        cfg.field, cfg.domain, np.tile(x, (cfg.n_paths, 1)), ids, cfg.seed, cfg.dt, cfg.t_max, trace=trace
    )
    exit_tau, exit_pts = [], []
    for k, mask in enumerate(trace.exits):
        who = trace.ids[k][mask]
        exit_tau.append(tau[who])
        exit_pts.append(pts[who])
    trace.ids = [i.astype(np.int32) for i in trace.ids]
    return _Store(trace, tau, pts, exited, final, exit_tau, exit_pts)


def _backward(store: _Store, cfg: RunConfig, truncation: float, majorant: MajorantSpec, lower: bool = False):
    gen, dt = cfg.generator, cfg.dt
    bins = _Bins(cfg.domain, cfg.bins)
    states, exits = store.trace.states, store.trace.exits
    steps = len(states)
    z_eps = tuple(cfg.z_eps) if cfg.estimate_z else ()
    z_acc = {e: np.zeros(cfg.n_paths) for e in z_eps}
    slices = [] if cfg.keep_slices or cfg.estimate_z else None

    # ``carried`` holds values at states[k + 1], i.e. for the paths alive at
    # step k that do not leave during it
    carried = None
    if not np.any(exits[-1]):
        # the last record lists paths still alive at t_max
        steps -= 1
        if lower:
            carried = np.zeros(states[-1].shape[0])
        else:
            rho = cfg.domain._sd(states[-1])
            carried = np.minimum(truncation, closedform.majorant_value(majorant, rho))

    for k in range(steps - 1, -1, -1):
        X = states[k]
        mask = exits[k]
        targets = np.empty(X.shape[0])
        if np.any(mask):
            xi = np.minimum(cfg.boundary(store.exit_pts[k]), truncation)
            partial = np.clip(store.exit_tau[k] - k * dt, 0.0, dt)
            y = closedform.general_flow(gen, xi, partial)
            targets[mask] = y - dt * gen.f(y)
        if not np.all(mask):
            targets[~mask] = carried
        if k == 0:
            y0 = float(implicit_step(gen, dt, float(np.mean(targets))))
            break
        reg = _Regression(bins, X, targets, cfg.field, gen, dt, want_z=bool(z_eps))
        carried = reg.fitted()
        if slices is not None:
            slices.append({"position": reg.position, "value": reg.value, "z": reg.z, "count": reg.count})
        if z_eps:
            z = reg.fitted(reg.z) if cfg.domain.dimension == 1 else reg.z_at(X)
            weight = (z * z if z.ndim == 1 else np.sum(z * z, axis=1)) * dt
            rho = np.maximum(cfg.domain._sd(X), 0.0)
            slot = store.trace.ids[k]
            for e in z_eps:
                z_acc[e][slot] += weight * rho ** (4.0 / gen.q + e)

    if slices is not None:
        slices.reverse()
    return y0, slices, z_acc


def _restrict(store: _Store, keep: np.ndarray) -> _Store:
    """The part of a forward pass belonging to the paths flagged in ``keep``."""
    states, exits, ids, etau, epts = [], [], [], [], []
    for k in range(len(store.trace.states)):
        sel = keep[store.trace.ids[k]]
        ex = store.trace.exits[k]
        states.append(store.trace.states[k][sel])
        exits.append(ex[sel])
        ids.append(store.trace.ids[k][sel])
        sel_exit = sel[ex]
        etau.append(store.exit_tau[k][sel_exit])
        epts.append(store.exit_pts[k][sel_exit])
    while states and states[-1].shape[0] == 0:
        states.pop(), exits.pop(), ids.pop(), etau.pop(), epts.pop()
    return _Store(_Trace(states, exits, ids), store.tau, store.exit_points, store.exited, store.final, etau, epts)


def _batch_stderr(store: _Store, cfg: RunConfig, truncation: float, majorant: MajorantSpec) -> float:
    """Standard error of Y_0 from independent regressions on disjoint path batches."""
    # small runs use fewer batches, each with at least two paths
    B = min(cfg.n_batches, cfg.n_paths // 2)
    if B < 2:
        return math.nan
    sub = replace(cfg, n_paths=cfg.n_paths // B, estimate_z=False, keep_slices=False)
    if store.batches is None:
        label = np.arange(cfg.n_paths) % B
        store.batches = [_restrict(store, label == b) for b in range(B)]
    vals = [_backward(part, sub, truncation, majorant)[0] for part in store.batches]
    return float(np.std(vals, ddof=1) / math.sqrt(B))


def _finish(store: _Store, cfg: RunConfig, truncation: float, majorant: MajorantSpec) -> BsdeRun:
    unexited = float(np.mean(~store.exited))
    if unexited > cfg.unexited_threshold:
        raise UnexitedFractionError(
            f"unexited fraction {unexited:.2e} above threshold {cfg.unexited_threshold:.1e}; raise t_max"
        )
    y0, slices, z_acc = _backward(store, cfg, truncation, majorant)
    if unexited > 0:
        y_lo = _backward(store, cfg, truncation, majorant, lower=True)[0]
    else:
        y_lo = y0
    se = _batch_stderr(store, cfg, truncation, majorant)
    terminal = np.minimum(cfg.boundary(store.exit_points[store.exited]), truncation)
    z_integrals = {e: McEstimate.from_samples(v, cfg.seed) for e, v in z_acc.items()}
    return BsdeRun(
        config=replace(cfg, truncation=truncation),
        y0_mean=y0,
        y0_stderr=se,
        unexited_fraction=unexited,
        y0_bracket=(y_lo, y0),
        majorant=majorant,
        exit_samples=store.tau[store.exited],
        terminal_samples=terminal,
        slices=slices,
        z_integrals=z_integrals,
    )


def solve_regression(cfg: RunConfig, majorant: MajorantSpec | None = None) -> BsdeRun:
    """Y_0 at cfg.x by backward induction with binned conditional expectations.

    Terminal values are g(exit point) ^ n.  A path leaving during a step
    contributes the exact generator flow over the part of the step it was
    alive.  Paths still alive at t_max receive min(n, majorant) (upper end of
    the reported bracket) or 0 (lower end).
    """
    if math.isinf(cfg.truncation):
        raise ValueError("the regression solver needs a finite truncation level")
    majorant = majorant or default_majorant(cfg.field, cfg.domain, cfg.generator)
    store = _forward(cfg)
    return _finish(store, cfg, cfg.truncation, majorant)


# ---------------------------------------------------------------------------
# lower bound, residual identity, truncation ladder, Z diagnostic


def xi_lower_bound(
    field: CoefficientField,
    domain: Domain,
    boundary: BoundaryData,
    x,
    q: float,
    truncation: float = math.inf,
    dt: float = 1e-3,
    n_paths: int = 10_000,
    seed: int = 0,
    t_max: float = 5.0,
    adapt: float | None = 4.0,
    dt_min: float = 1e-8,
    generator: GeneratorSpec | None = None,
    unexited_threshold: float = 1e-3,
    workers: int = 1,
) -> McEstimate:
    """Monte Carlo mean of the flow value at time 0 along each path.

    For the power generator with kappa = 1 each sample is
    (q tau + (g(exit) ^ n)^-q)^(-1/q); other generators use the F-transform flow.
    """
    gen = generator or closedform.power(q)
    x = _as_start(domain, x)
    if domain.distance_to_boundary(x) <= 0:
        raise ValueError("start point must be interior")
    batch = simulate_batch(field, domain, x, dt, seed, n_paths, t_max, adapt=adapt, dt_min=dt_min, workers=workers)
    if batch.unexited_fraction > unexited_threshold:
        raise UnexitedFractionError(f"unexited fraction {batch.unexited_fraction:.2e} above threshold")
    ok = batch.exited
    xi = np.minimum(boundary(batch.exit_points[ok]), truncation)
    samples = closedform.general_flow(gen, xi, batch.tau_hat[ok])
    return McEstimate.from_samples(samples, seed)


def phi_residual(run: BsdeRun, alpha: float) -> dict:
    """Residual of the identity for 1/Y^q at time 0.

    Power generator, kappa = 1: Phi_0 = q E[tau] + E[(g ^ n)^-q] - Y_0^-q.
    Otherwise the F-transform form E[F(g ^ n) + tau] - F(Y_0) scaled by kappa q.
    """
    if alpha <= 0:
        raise ValueError("a positive lower bound alpha of the boundary data is required")
    gen = run.config.generator
    xi = run.terminal_samples
    if np.any(xi < alpha * (1 - 1e-12)):
        raise ValueError("boundary data below the declared alpha")
    tau = run.exit_samples
    scale = gen.kappa * gen.q if gen.kind == "power" else 1.0
    per_path = scale * (tau + closedform.f_transform(gen, xi))
    n = per_path.size
    mean = float(np.mean(per_path))
    se_paths = float(np.std(per_path, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    y0 = run.y0_mean
    fy = scale * float(closedform.f_transform(gen, y0))
    # |d F / dy| = 1 / |f(y)|
    se_y = scale * run.y0_stderr / abs(float(gen.f(y0)))
    value = mean - fy
    out = {"value": value, "stderr": math.hypot(se_paths, se_y), "sample_count": n}
    run.phi0 = out
    return out


@dataclass
class TruncationLadder:
    levels: list
    runs: list
    monotone_violations: list
    stabilized: bool
    stabilized_y0: Optional[float]

    @property
    def y0(self) -> np.ndarray:
        return np.array([r.y0_mean for r in self.runs])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([r.y0_stderr for r in self.runs])

    def per_level(self) -> list:
        return [{"n": n, "y0_mean": r.y0_mean, "y0_stderr": r.y0_stderr} for n, r in zip(self.levels, self.runs)]


def ladder_run(cfg: RunConfig, levels, tol: float = 1e-3, majorant: MajorantSpec | None = None) -> TruncationLadder:
    """Solve for every truncation level on one common set of paths."""
    levels = [float(v) for v in levels]
    if any(b <= a for a, b in zip(levels[:-1], levels[1:])) or not levels:
        raise ValueError("truncation levels must be strictly increasing")
    majorant = majorant or default_majorant(cfg.field, cfg.domain, cfg.generator)
    store = _forward(cfg)
    runs = [_finish(store, cfg, n, majorant) for n in levels]
    y = np.array([r.y0_mean for r in runs])
    se = np.array([r.y0_stderr for r in runs])
    violations = [
        i + 1 for i in range(len(runs) - 1) if y[i + 1] < y[i] - 3.0 * math.hypot(se[i], se[i + 1])
    ]
    stabilized, value = False, None
    inc = np.abs(np.diff(y))
    for i in range(1, inc.size):
        if inc[i - 1] < tol * abs(y[i]) and inc[i] < tol * abs(y[i + 1]):
            stabilized, value = True, float(y[i + 1])
            break
    ladder = TruncationLadder(levels, runs, violations, stabilized, value)
    for r in runs:
        r.per_level = ladder.per_level()
    return ladder


def weighted_z_diagnostic(run: BsdeRun, eps: float) -> McEstimate:
    """Estimate of E int_0^tau |Z_r|^2 rho(X_r)^(4/q + eps) dr from path-time sums."""
    if eps <= 1:
        raise ValueError("eps must exceed 1")
    if not run.config.estimate_z:
        raise ValueError("run has no Z estimates (set estimate_z=True)")
    for e, est in run.z_integrals.items():
        if abs(e - eps) < 1e-12:
            return est
    raise ValueError(f"eps={eps} not among the configured z_eps {tuple(run.z_integrals)}")
