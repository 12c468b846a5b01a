"""Killed diffusions: Euler-Maruyama paths stopped at the first exit time.

Paths are driven by counter-based Gaussian streams (:mod:`blowup_lab.rng`), so
path ``i`` of a batch with seed ``s`` is the same whatever the batch size, the
chunking or the number of worker threads.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .geometry import Box, Domain
from .reports import CheckReport

FAMILIES = ("brownian", "constant_drift", "linear_drift", "scalar_sigma", "tabulated")


# default smallest step of the boundary-adaptive scheme
DT_MIN = 1e-8


class SimulationError(RuntimeError):
    def __init__(self, message, step=None, path=None):
        super().__init__(message)
        self.step = step
        self.path = path


class UnexitedPathsError(ValueError):
    def __init__(self, count, total):
        super().__init__(f"{count} of {total} paths did not exit before t_max")
        self.count = count


@dataclass(frozen=True)
class CoefficientField:
    """Drift b and diffusion sigma of the SDE dX = b(X) dt + sigma(X) dB.

    Families
    --------
    brownian          b = 0, sigma = Id
    scalar_sigma      b = 0, sigma = s Id
    constant_drift    b = v, sigma = s Id
    linear_drift      b(x) = -lam (x - m), sigma = s Id
    tabulated         1D only; b and sigma linearly interpolated from node values
    """

    family: str
    dimension: int = 1
    sigma_scale: float = 1.0
    drift_vector: tuple = ()
    lam: float = 0.0
    center: tuple = ()
    nodes: tuple = ()
    drift_values: tuple = ()
    sigma_values: tuple = ()
    K_bound: Optional[float] = None
    alpha_ellipticity: Optional[float] = None
    K_lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown coefficient family {self.family!r}")
        if self.family == "tabulated":
            if self.dimension != 1:
                raise ValueError("tabulated coefficients are one-dimensional")
            if not (len(self.nodes) == len(self.drift_values) == len(self.sigma_values) >= 2):
                raise ValueError("tabulated coefficients need matching node/value lists")
            if np.any(np.diff(self.nodes) <= 0):
                raise ValueError("tabulated nodes must be increasing")

    # -- constructors -----------------------------------------------------
    @classmethod
    def brownian(cls, dimension=1, **declared):
        declared.setdefault("K_bound", 1.0)
        declared.setdefault("alpha_ellipticity", 1.0)
        declared.setdefault("K_lipschitz", 0.0)
        return cls("brownian", dimension, **declared)

    @classmethod
    def scalar_sigma(cls, s, dimension=1, **declared):
        declared.setdefault("K_bound", abs(s))
        declared.setdefault("alpha_ellipticity", s * s)
        declared.setdefault("K_lipschitz", 0.0)
        return cls("scalar_sigma", dimension, sigma_scale=float(s), **declared)

    @classmethod
    def constant_drift(cls, v, sigma=1.0, **declared):
        v = tuple(float(c) for c in np.atleast_1d(v))
        declared.setdefault("K_bound", float(np.linalg.norm(v)) + abs(sigma))
        declared.setdefault("alpha_ellipticity", sigma * sigma)
        declared.setdefault("K_lipschitz", 0.0)
        return cls("constant_drift", len(v), sigma_scale=float(sigma), drift_vector=v, **declared)

    @classmethod
    def linear_drift(cls, lam, m, sigma=1.0, **declared):
        m = tuple(float(c) for c in np.atleast_1d(m))
        declared.setdefault("alpha_ellipticity", sigma * sigma)
        declared.setdefault("K_lipschitz", 0.0)
        return cls("linear_drift", len(m), sigma_scale=float(sigma), lam=float(lam), center=m, **declared)

    @classmethod
    def tabulated(cls, nodes, drift, sigma, **declared):
        return cls(
            "tabulated",
            1,
            nodes=tuple(map(float, nodes)),
            drift_values=tuple(map(float, drift)),
            sigma_values=tuple(map(float, sigma)),
            **declared,
        )

    # -- evaluation ---------------------------------------------------------
    @property
    def scalar_noise(self) -> bool:
        return self.family != "tabulated"

    def drift(self, pts):
        pts = np.atleast_2d(pts)
        if self.family in ("brownian", "scalar_sigma"):
            return np.zeros_like(pts)
        if self.family == "constant_drift":
            return np.broadcast_to(np.asarray(self.drift_vector), pts.shape).copy()
        if self.family == "linear_drift":
            return -self.lam * (pts - np.asarray(self.center))
        return np.interp(pts[:, 0], self.nodes, self.drift_values)[:, None]

    def sigma_diag(self, pts):
        """Diagonal of sigma (all families here have diagonal sigma), shape (n, d)."""
        pts = np.atleast_2d(pts)
        if self.family == "brownian":
            return np.ones_like(pts)
        if self.family == "tabulated":
            return np.interp(pts[:, 0], self.nodes, self.sigma_values)[:, None]
        return np.full(pts.shape, self.sigma_scale)

    def diffusion(self, pts):
        """sigma(x) as an (n, d, d) array."""
        diag = self.sigma_diag(pts)
        out = np.zeros(diag.shape + (diag.shape[1],))
        idx = np.arange(diag.shape[1])
        out[:, idx, idx] = diag
        return out

    def covariance_diag(self, pts):
        """Diagonal of a = sigma sigma^T, shape (n, d)."""
        return self.sigma_diag(pts) ** 2

    def noise(self, pts, xi, h):
        return self.sigma_diag(pts) * np.sqrt(h)[:, None] * xi

    @property
    def sigma_sup(self) -> float:
        if self.family == "brownian":
            return 1.0
        if self.family == "tabulated":
            return float(np.max(np.abs(self.sigma_values)))
        return abs(self.sigma_scale)

    def describe(self) -> dict:
        out = {"family": self.family, "dimension": self.dimension}
        if self.family in ("scalar_sigma", "constant_drift", "linear_drift"):
            out["sigma"] = self.sigma_scale
        if self.family == "constant_drift":
            out["v"] = list(self.drift_vector)
        if self.family == "linear_drift":
            out.update(lam=self.lam, m=list(self.center))
        if self.family == "tabulated":
            out.update(nodes=list(self.nodes), drift=list(self.drift_values), sigma=list(self.sigma_values))
        return out


@dataclass
class StoppedPath:
    x: np.ndarray
    dt: float
    states: np.ndarray
    times: np.ndarray
    exit_time: float
    exit_point: np.ndarray
    exited: bool
    stream: rng.Stream


@dataclass
class PathBatch:
    x: np.ndarray
    dt: float
    seed: int
    path_ids: np.ndarray
    tau_hat: np.ndarray
    exit_points: np.ndarray
    exited: np.ndarray
    final_states: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return self.tau_hat.size

    @property
    def unexited_fraction(self) -> float:
        return float(np.mean(~self.exited))

    def require_exited(self):
        missing = int(np.count_nonzero(~self.exited))
        if missing:
            raise UnexitedPathsError(missing, len(self))

    def to_csv(self, path):
        d = self.exit_points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "tau_hat"] + [f"exit_coord_{i}" for i in range(d)] + ["exited"])
            for i in range(len(self)):
                w.writerow(
                    [int(self.path_ids[i]), repr(float(self.tau_hat[i]))]
                    + [repr(float(c)) for c in self.exit_points[i]]
                    + [int(self.exited[i])]
                )


@dataclass(frozen=True)
class McEstimate:
    mean: float
    standard_error: float
    sample_count: int
    seed: Optional[int] = None

    def __post_init__(self):
        if self.standard_error < 0 or self.sample_count < 1:
            raise ValueError("invalid Monte Carlo estimate")

    @classmethod
    def from_samples(cls, samples, seed=None):
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, n, seed)


# ---------------------------------------------------------------------------
# simulation kernel


@dataclass
class _Trace:
    """Per-step record kept for backward induction (fixed step only).

    ``states[k]`` are positions of the paths alive at step k, in a stable
    order; ``exits[k]`` flags which of those leave during step k.
    """

    states: list
    exits: list
    ids: list


def _step_sizes(field, sd, dt, adapt, dt_min):
    if adapt is None or field.sigma_sup == 0:
        return np.full(sd.shape, dt)
    scale = field.sigma_sup * adapt
    return np.clip((sd / scale) ** 2, dt_min, dt)


def _kernel(field, domain, x0, ids, seed, dt, t_max, adapt=None, dt_min=None, trace=None, path_log=None):
    """Advance every path to its exit time or t_max.

    Returns (tau_hat, exit_points, exited, final_states) aligned with ``ids``.
    """
    n, d = x0.shape
    tau = np.full(n, np.nan)
    exit_pts = np.full((n, d), np.nan)
    exited = np.zeros(n, dtype=bool)
    final = x0.copy()

    sd0 = domain._sd(x0)
    if np.any(sd0 < 0):
        bad = int(np.flatnonzero(sd0 < 0)[0])
        raise SimulationError("starting point outside the closed domain", step=0, path=int(ids[bad]))
    start_bd = sd0 <= 0.0
    if np.any(start_bd):
        tau[start_bd] = 0.0
        exit_pts[start_bd] = domain._proj(x0[start_bd])
        exited[start_bd] = True

    pos = np.flatnonzero(~start_bd)
    X = x0[pos].copy()
    sd = sd0[pos]
    t = np.zeros(pos.size)
    pid = ids[pos]
    k = 0
    while pos.size:
        h = _step_sizes(field, sd, dt, adapt, dt_min)
        xi = rng.normals(seed, pid, k, d)
        Xn = X + field.drift(X) * h[:, None] + field.noise(X, xi, h)
        if not np.all(np.isfinite(Xn)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(Xn), axis=1))[0])
            raise SimulationError(f"non-finite state at step {k + 1}", step=k + 1, path=int(pid[bad]))
        sdn = domain._sd(Xn)
        out = sdn <= 0.0
        if trace is not None:
            trace.states.append(X)
            trace.exits.append(out)
            trace.ids.append(pid)
        if path_log is not None:
            path_log.append(Xn[0].copy())
        if np.any(out):
            frac = sd[out] / (sd[out] - sdn[out])
            cross = X[out] + frac[:, None] * (Xn[out] - X[out])
            where = pos[out]
            tau[where] = t[out] + frac * h[out]
            exit_pts[where] = domain._proj(cross)
            final[where] = Xn[out]
            exited[where] = True
        keep = ~out
        t = t[keep] + h[keep]
        X, sd, pos, pid = Xn[keep], sdn[keep], pos[keep], pid[keep]
        k += 1
        # a small tolerance so that t_max = N * dt gives exactly N steps
        late = t >= t_max * (1 - 1e-12)
        if np.any(late):
            final[pos[late]] = X[late]
            tau[pos[late]] = t[late]
            if trace is not None and np.all(late):
                trace.states.append(X)
                trace.exits.append(np.zeros(X.shape[0], dtype=bool))
                trace.ids.append(pid)
            X, sd, pos, pid, t = X[~late], sd[~late], pos[~late], pid[~late], t[~late]
    return tau, exit_pts, exited, final


def _floor(dt, dt_min):
    return min(dt, DT_MIN if dt_min is None else dt_min)


def _as_start(domain, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != domain.dimension:
        raise ValueError(f"start point of length {x.size} for a {domain.dimension}-dimensional domain")
    return x


def simulate_to_exit(field, domain, x, dt, stream, t_max, adapt=None, dt_min=None) -> StoppedPath:
    """Simulate one path of the killed diffusion until it leaves the domain.

    ``adapt`` switches on local step refinement near the boundary: the step is
    ``clip((rho / (adapt * sigma_sup))**2, dt_min, dt)``.
    """
    if dt <= 0 or t_max < dt:
        raise ValueError("need dt > 0 and t_max >= dt")
    x = _as_start(domain, x)
    log = []
    tau, pts, ex, _ = _kernel(
        field, domain, x[None, :], np.array([stream.index]), stream.seed, dt, t_max,
        adapt, _floor(dt, dt_min), path_log=log,
    )
    states = np.vstack([x[None, :]] + [s[None, :] for s in log]) if log else x[None, :]
    if adapt is None:
        times = dt * np.arange(states.shape[0])
    else:
        times = np.full(states.shape[0], np.nan)
        times[0] = 0.0
    if ex[0]:
        states = states[:-1] if len(log) else states
        times = times[: states.shape[0]]
    return StoppedPath(x, dt, states, times, float(tau[0]), pts[0], bool(ex[0]), stream)


def simulate_batch(field, domain, x, dt, seed, n_paths, t_max, adapt=None, dt_min=None, workers=1) -> PathBatch:
    """Simulate ``n_paths`` independent paths; path i uses stream (seed, i)."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if dt <= 0 or t_max < dt:
        raise ValueError("need dt > 0 and t_max >= dt")
    x = _as_start(domain, x)
    ids = np.arange(n_paths, dtype=np.int64)

    def run(chunk):
        try:
            return _kernel(field, domain, np.tile(x, (chunk.size, 1)), chunk, seed, dt, t_max, adapt, _floor(dt, dt_min))
        except SimulationError as exc:
            raise SimulationError(f"path {exc.path}: {exc}", exc.step, exc.path) from exc

    if workers <= 1 or n_paths < 2 * workers:
        parts = [run(ids)]
    else:
        chunks = np.array_split(ids, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    tau, pts, ex, final = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return PathBatch(x, dt, seed, ids, tau, pts, ex, final)


# ---------------------------------------------------------------------------
# functionals of the exit time


def estimate_mean_exit_time(batch: PathBatch) -> McEstimate:
    batch.require_exited()
    return McEstimate.from_samples(batch.tau_hat, batch.seed)


def estimate_exp_moment(batch: PathBatch, beta: float) -> McEstimate:
    batch.require_exited()
    return McEstimate.from_samples(np.exp(beta * batch.tau_hat), batch.seed)


def estimate_inverse_power_moment(batch: PathBatch, q: float) -> McEstimate:
    """Sample mean of tau^(-1/q); multiply by rho(x)^(2/q) for the boundary band."""
    if q <= 0:
        raise ValueError("q must be positive")
    batch.require_exited()
    if np.any(batch.tau_hat <= 0):
        raise ValueError("zero exit time in sample (start on the boundary)")
    return McEstimate.from_samples(batch.tau_hat ** (-1.0 / q), batch.seed)


# ---------------------------------------------------------------------------
# coefficient conditions


def sample_closure(domain: Domain, resolution: int):
    """Tensor grid over the bounding box restricted to the closed domain."""
    lo, hi = domain.bounding_box
    axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, domain.dimension)
    if not isinstance(domain, Box):
        pts = pts[domain._sd(pts) >= 0]
    return pts, axes


def check_coefficients(field: CoefficientField, domain: Domain, grid_resolution: int = 65) -> CheckReport:
    """Sample b and sigma on a grid and compare with the declared (B), (E), (L) constants."""
    pts, axes = sample_closure(domain, grid_resolution)
    b = field.drift(pts)
    sig = field.diffusion(pts)
    sig_norm = np.linalg.norm(sig, ord=2, axis=(1, 2))
    bound = float(np.max(np.linalg.norm(b, axis=1) + sig_norm))
    a = sig @ np.transpose(sig, (0, 2, 1))
    alpha = float(np.min(np.linalg.eigvalsh(a)))

    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    sig_grid = field.diffusion(mesh.reshape(-1, domain.dimension)).reshape(mesh.shape[:-1] + sig.shape[1:])
    lip = 0.0
    for axis, ax in enumerate(axes):
        step = ax[1] - ax[0]
        diff = np.diff(sig_grid, axis=axis)
        ratios = np.linalg.norm(diff, ord=2, axis=(-2, -1)) / step
        lip = max(lip, float(np.max(ratios)))

    rep = CheckReport("coefficients", config={"field": field.describe(), "grid_resolution": grid_resolution})
    worst = {
        "boundedness": pts[int(np.argmax(np.linalg.norm(b, axis=1) + sig_norm))],
        "ellipticity": pts[int(np.argmin(np.linalg.eigvalsh(a)[:, 0]))],
    }
    rep.measured = {
        "K_bound": bound,
        "alpha_ellipticity": alpha,
        "K_lipschitz": lip,
        "worst_points": {k: v.tolist() for k, v in worst.items()},
    }
    declared_K = field.K_bound if field.K_bound is not None else math.inf
    declared_L = field.K_lipschitz if field.K_lipschitz is not None else math.inf
    declared_a = field.alpha_ellipticity or 0.0
    rep.add("boundedness", bound, "<=", declared_K * (1 + 1e-12))
    rep.add("ellipticity_positive", alpha, ">", 0.0)
    rep.add("ellipticity_declared", alpha, ">=", declared_a * (1 - 1e-12))
    rep.add("lipschitz", lip, "<=", declared_L * (1 + 1e-9) + 1e-12)
    return rep
