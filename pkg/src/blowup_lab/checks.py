"""Named invariant checks with pass/fail reports, and the fast/full suites.

Each check takes a configuration dict (merged over its defaults) and a seed,
and returns a :class:`~blowup_lab.reports.CheckReport` whose verdict can be
recomputed from the recorded numbers alone.  Statistical gates use three
standard errors throughout.
"""
from __future__ import annotations

import copy
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import bsde, closedform, config, pde
from .config import UNIT_INTERVAL, interval_boundary
from .diffusion import CoefficientField, simulate_batch
from .geometry import BoundaryData
from .reports import CheckReport

SEED_MOD = 2**32


class UnknownCheckError(KeyError):
    pass


@dataclass(frozen=True)
class Check:
    name: str
    func: object
    defaults: dict
    fast: dict
    summary: str


REGISTRY: dict = {}


def register(name, defaults, fast, summary):
    def deco(func):
        if name in REGISTRY:
            raise ValueError(f"check {name!r} registered twice")
        REGISTRY[name] = Check(name, func, defaults, fast, summary)
        return func

    return deco


def _subseed(seed, k):
    return (int(seed) + 7919 * k) % SEED_MOD


def _merge(defaults, cfg):
    out = copy.deepcopy(defaults)
    for k, v in (cfg or {}).items():
        if k not in defaults:
            warnings.warn(f"unknown configuration key {k!r} ignored", stacklevel=3)
            continue
        out[k] = v
    return out


def _levels(spec):
    """Levels given as a list, or as {"base": b, "min_exp": i, "max_exp": j}."""
    if isinstance(spec, dict):
        return [float(spec.get("base", 2.0)) ** k for k in range(int(spec["min_exp"]), int(spec["max_exp"]) + 1)]
    return [float(v) for v in spec]


def _problem(cfg):
    return config.build_problem(cfg)


def _majorant(fld, domain, gen):
    return bsde.default_majorant(fld, domain, gen)


def _pde_ladder(cfg, domain, fld, gen, bd, levels=None, keep=False):
    problem = pde.EllipticProblem(pde.Grid(domain, cfg["h"]), fld, gen, bd)
    return pde.ladder_minimal(problem, _levels(levels or cfg["levels"]), delta=cfg.get("delta"), keep_fields=keep)


def _bsde_config(cfg, domain, fld, gen, bd, x, seed, truncation, **extra):
    return bsde.RunConfig(
        generator=gen,
        field=fld,
        domain=domain,
        boundary=bd,
        x=x,
        dt=cfg["dt"],
        n_paths=int(cfg["n_paths"]),
        seed=seed,
        truncation=truncation,
        t_max=cfg["t_max"],
        n_batches=int(cfg.get("n_batches", 16)),
        **extra,
    )


def _rho(domain, pts):
    return domain.distance_to_boundary(np.asarray(pts, float))


# ---------------------------------------------------------------------------
# problem presets

BLOWUP_BOTH = {
    "domain": UNIT_INTERVAL,
    "field": {"family": "brownian"},
    "generator": {"q": 1.0, "kappa": 1.0},
    "boundary": interval_boundary(None, None),
}
BLOWUP_LEFT = {
    "domain": UNIT_INTERVAL,
    "field": {"family": "brownian"},
    "generator": {"q": 2.0, "kappa": 1.0},
    "boundary": interval_boundary(None, 1.0),
}
BOUNDED_ONE = {
    "domain": UNIT_INTERVAL,
    "field": {"family": "brownian"},
    "generator": {"q": 1.0, "kappa": 1.0},
    "boundary": {"default": 1.0},
}


def _with(base, **kw):
    out = copy.deepcopy(base)
    out.update(kw)
    return out


# ---------------------------------------------------------------------------
# keller_osserman


@register(
    "keller_osserman",
    _with(
        BLOWUP_BOTH,
        h=1 / 512,
        levels={"base": 2, "min_exp": 1, "max_exp": 20},
        delta=None,
        x=[0.1, 0.25, 0.5],
        bsde_levels=[64.0, 1024.0],
        n_paths=100_000,
        dt=1e-3,
        t_max=6.0,
        n_batches=16,
    ),
    {"h": 1 / 128, "levels": {"base": 2, "min_exp": 1, "max_exp": 12}, "x": [0.25, 0.5], "n_paths": 2000, "bsde_levels": [64.0]},
    "PDE ladder and BSDE Y0 below C / rho^(2/q)",
)
def keller_osserman(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    maj = _majorant(fld, domain, gen)
    rep = CheckReport("keller_osserman")
    rep.measured["C"] = maj.C
    u, _ = _pde_ladder(cfg, domain, fld, gen, bd)
    inner = u.grid.interior
    rho = _rho(domain, u.grid.points[inner])
    ratio = float(np.max(u.values[inner] * rho ** (2 / gen.q) / maj.C))
    rep.measured["pde_max_normalized"] = ratio
    rep.add("pde_max_rho^(2/q)u/C", ratio, "<=", 1.0)
    worst = -math.inf
    per_x = []
    for i, x in enumerate(cfg["x"]):
        run_cfg = _bsde_config(cfg, domain, fld, gen, bd, x, _subseed(seed, i), cfg["bsde_levels"][0])
        lad = bsde.ladder_run(run_cfg, cfg["bsde_levels"])
        bound = float(closedform.majorant_value(maj, _rho(domain, np.atleast_1d(x))))
        for n, r in zip(lad.levels, lad.runs):
            per_x.append({"x": x, "n": n, "y0": r.y0_mean, "stderr": r.y0_stderr, "bound": bound})
            worst = max(worst, (r.y0_mean - 3 * r.y0_stderr) / bound)
    rep.measured["bsde"] = per_x
    rep.add("bsde_max_(Y0-3se)/bound", worst, "<=", 1.0)
    return rep


# ---------------------------------------------------------------------------
# ladder_monotone


@register(
    "ladder_monotone",
    _with(
        _with(BLOWUP_LEFT, generator={"q": 1.0, "kappa": 1.0}),
        h=1 / 512,
        levels={"base": 4, "min_exp": 1, "max_exp": 8},
        delta=None,
        x=0.25,
        bsde_levels=[4.0, 16.0, 64.0, 256.0],
        n_paths=20_000,
        dt=1e-3,
        t_max=6.0,
        n_batches=16,
    ),
    {"h": 1 / 128, "n_paths": 2000},
    "u_n and Y0^n nondecreasing in n",
)
def ladder_monotone(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    rep = CheckReport("ladder_monotone")
    try:
        _, record = _pde_ladder(cfg, domain, fld, gen, bd, keep=True)
        fields = record.fields
        drop = max(float(np.max(a.values - b.values)) for a, b in zip(fields[:-1], fields[1:]))
    except pde.MonotonicityError as exc:
        rep.measured["pde_error"] = str(exc)
        drop = math.inf
    rep.measured["pde_max_decrease"] = drop
    rep.add("pde_max_decrease", drop, "<=", 1e-9)
    lad = bsde.ladder_run(_bsde_config(cfg, domain, fld, gen, bd, cfg["x"], seed, cfg["bsde_levels"][0]), cfg["bsde_levels"])
    y, se = lad.y0, lad.stderr
    gap = float(np.max((y[:-1] - y[1:]) - 3 * np.hypot(se[:-1], se[1:]))) if y.size > 1 else -math.inf
    rep.measured["bsde_per_level"] = lad.per_level()
    rep.measured["bsde_max_decrease_raw"] = float(np.max(y[:-1] - y[1:])) if y.size > 1 else 0.0
    rep.add("bsde_max_decrease_minus_3se", gap, "<=", 0.0)
    return rep


# ---------------------------------------------------------------------------
# xi_bound


@register(
    "xi_bound",
    _with(
        BLOWUP_BOTH,
        h=1 / 512,
        levels={"base": 2, "min_exp": 1, "max_exp": 20},
        delta=None,
        x=[0.25, 0.5, 0.75],
        n_paths=100_000,
        dt=1e-3,
        adapt=4.0,
        dt_min=1e-8,
        t_max=6.0,
        truncation=None,
    ),
    {"h": 1 / 128, "levels": {"base": 2, "min_exp": 1, "max_exp": 12}, "n_paths": 4000},
    "Monte Carlo flow lower bound Xi_0 below the PDE solution",
)
def xi_bound(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    rep = CheckReport("xi_bound")
    u, record = _pde_ladder(cfg, domain, fld, gen, bd, keep=True)
    trunc = math.inf if cfg["truncation"] is None else float(cfg["truncation"])
    worst = -math.inf
    rows = []
    for i, x in enumerate(cfg["x"]):
        est = bsde.xi_lower_bound(
            fld, domain, bd, [x], gen.q, trunc, cfg["dt"], int(cfg["n_paths"]), _subseed(seed, i),
            cfg["t_max"], cfg["adapt"], cfg["dt_min"], generator=gen, workers=workers,
        )
        seq = [f.interpolate([x]) for f in record.fields]
        u_last = seq[-1]
        rows.append(
            {"x": x, "xi": est.mean, "stderr": est.standard_error, "u": u_last,
             "u_extrapolated": pde.richardson_level(seq, record.levels)}
        )
        # the last ladder level is a lower estimate of the minimal solution,
        # so gating against it is the stricter choice
        worst = max(worst, est.mean - 3 * est.standard_error - u_last)
    rep.measured["points"] = rows
    rep.add("max(xi-3se-u)", worst, "<=", 0.0)
    return rep


# ---------------------------------------------------------------------------
# phi_sign


@register(
    "phi_sign",
    _with(
        BOUNDED_ONE,
        x=0.5,
        truncation=10.0,
        n_paths=50_000,
        dt=1e-3,
        t_max=6.0,
        n_batches=16,
        transport_drift=1.0,
        transport_paths=16,
    ),
    {"n_paths": 4000},
    "Phi_0 >= 0 and exact identity for deterministic transport",
)
def phi_sign(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    alpha = bd.min_value
    rep = CheckReport("phi_sign")
    run = bsde.solve_regression(_bsde_config(cfg, domain, fld, gen, bd, cfg["x"], seed, float(cfg["truncation"])))
    phi = bsde.phi_residual(run, alpha)
    rep.measured["phi"] = phi
    rep.measured["y0"] = {"value": run.y0_mean, "stderr": run.y0_stderr}
    rep.add("phi+3se", phi["value"] + 3 * phi["stderr"], ">=", 0.0)
    transport = CoefficientField.constant_drift([cfg["transport_drift"]] * domain.dimension, sigma=0.0)
    det_cfg = dict(cfg, n_paths=int(cfg["transport_paths"]), n_batches=0)
    det = bsde.solve_regression(_bsde_config(det_cfg, domain, transport, gen, bd, cfg["x"], seed, float(cfg["truncation"])))
    phi_det = bsde.phi_residual(det, alpha)
    rep.measured["phi_transport"] = phi_det["value"]
    rep.add("|phi_transport|", abs(phi_det["value"]), "<=", 5 * cfg["dt"])
    return rep


# ---------------------------------------------------------------------------
# lemma3_band and its degenerate negative control


def band_values(fld, domain, xs, qs, dt, n_paths, seed, t_max, adapt, dt_min, workers=1):
    """rho(x)^(2/q) E[tau^(-1/q)] with standard errors, one simulation per x."""
    vals = {q: [] for q in qs}
    errs = {q: [] for q in qs}
    for i, x in enumerate(xs):
        batch = simulate_batch(fld, domain, [x], dt, _subseed(seed, i), n_paths, t_max, adapt=adapt, dt_min=dt_min, workers=workers)
        batch.require_exited()
        rho = float(_rho(domain, np.atleast_1d(x)))
        tau = batch.tau_hat
        for q in qs:
            s = rho ** (2 / q) * tau ** (-1.0 / q)
            vals[q].append(float(np.mean(s)))
            errs[q].append(float(np.std(s, ddof=1) / math.sqrt(s.size)) if s.size > 1 else 0.0)
    return vals, errs


def band_criterion(values, ratio_bound=10.0):
    """max/min of the band values (inf if some value is not positive)."""
    v = np.asarray(values, float)
    if np.any(v <= 0):
        return math.inf
    return float(v.max() / v.min())


@register(
    "lemma3_band",
    {
        "domain": UNIT_INTERVAL,
        "field": {"family": "brownian"},
        "q": [1.0, 2.0],
        "x": [0.01, 0.02, 0.05, 0.1],
        "n_paths": 100_000,
        "dt": 1e-3,
        "adapt": 4.0,
        "dt_min": 1e-8,
        "t_max": 6.0,
    },
    {"n_paths": 4000},
    "rho^(2/q) E[tau^(-1/q)] in a positive band near the boundary",
)
def lemma3_band(cfg, seed, workers=1):
    domain = config.build_domain(cfg["domain"])
    fld = config.build_field(cfg["field"], domain.dimension)
    qs = [float(q) for q in cfg["q"]]
    vals, errs = band_values(fld, domain, cfg["x"], qs, cfg["dt"], int(cfg["n_paths"]), seed, cfg["t_max"], cfg["adapt"], cfg["dt_min"], workers)
    rep = CheckReport("lemma3_band")
    for q in qs:
        v, e = np.array(vals[q]), np.array(errs[q])
        rep.measured[f"q={q:g}"] = {"x": list(cfg["x"]), "values": v.tolist(), "stderr": e.tolist()}
        rep.add(f"q={q:g}:max/min", band_criterion(v), "<=", 10.0)
        rep.add(f"q={q:g}:min_value", float(v.min()), ">", 0.0)
        rel = float(np.max(e / np.abs(v))) if np.all(v != 0) else math.inf
        rep.add(f"q={q:g}:max_rel_stderr", rel, "<", 0.1)
    return rep


@register(
    "degenerate_sigma",
    {
        "domain": UNIT_INTERVAL,
        "q": 1.0,
        "x": [0.9, 0.95, 0.99, 0.998],
        "drift": 1.0,
        "n_paths": 8,
        "dt": 1e-3,
        "t_max": 2.0,
    },
    {},
    "sigma = 0, b = 1: the band collapses, so the band criterion must fail",
)
def degenerate_sigma(cfg, seed, workers=1):
    domain = config.build_domain(cfg["domain"])
    fld = CoefficientField.constant_drift([cfg["drift"]], sigma=0.0)
    q = float(cfg["q"])
    vals, _ = band_values(fld, domain, cfg["x"], [q], cfg["dt"], int(cfg["n_paths"]), seed, cfg["t_max"], None, None)
    v = np.array(vals[q])
    xs = np.array(cfg["x"], float)
    exact = (1 - xs) ** (1 / q)
    rep = CheckReport("degenerate_sigma")
    rep.measured["values"] = v.tolist()
    rep.measured["exact"] = exact.tolist()
    rep.add("max|value-(1-x)^(1/q)|", float(np.max(np.abs(v - exact))), "<=", 1e-9)
    rep.add("value_at_largest_x", float(v[np.argmax(xs)]), "<", 0.05)
    # negative control: the exit-time band must not hold here
    rep.add("band_max/min", band_criterion(v), "<=", 10.0, expected=False)
    return rep


# ---------------------------------------------------------------------------
# blowup_rate


@register(
    "blowup_rate",
    _with(
        BLOWUP_LEFT,
        h=1 / 4096,
        levels={"base": 2, "min_exp": 1, "max_exp": 14},
        delta=None,
        rho_min_cells=2,
        rho_max=0.1,
        halfline_band=[0.01, 0.03],
        refinements=2,
    ),
    {},
    "rho^(2/q) u in a two-sided band along the normal to the blow-up set",
)
def blowup_rate(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    maj = _majorant(fld, domain, gen)
    rep = CheckReport("blowup_rate")
    rep.measured["C"] = maj.C
    node = [float(v) for v in bd.blowup.regions[0].lo]
    inward = _inward_axis(domain, node)
    lows = []
    h = float(cfg["h"])
    for r in range(int(cfg["refinements"]) + 1):
        hr = h * 2**r
        u, _ = _pde_ladder(dict(cfg, h=hr), domain, fld, gen, bd)
        rho, prof = pde.boundary_layer_profile(u, node, inward, gen.q, rho_max=cfg["rho_max"])
        sel = rho >= cfg["rho_min_cells"] * hr - 1e-12
        lows.append(float(prof[sel].min()))
        if r == 0:
            finest, rho0, prof0 = u, rho, prof
    inner = finest.grid.interior
    rho_all = _rho(domain, finest.grid.points[inner])
    top = float(np.max(rho_all ** (2 / gen.q) * finest.values[inner]))
    rep.measured["profile"] = {"rho": rho0[:: max(1, rho0.size // 64)].tolist(), "value": prof0[:: max(1, rho0.size // 64)].tolist()}
    rep.measured["upper"] = top
    rep.measured["lower_band"] = lows
    rep.add("max rho^(2/q)u / C", top / maj.C, "<=", 1.0)
    rep.add("lower_band", lows[0], ">", 0.0)
    spread = (max(lows) - min(lows)) / max(lows) if max(lows) > 0 else math.inf
    rep.add("lower_band_relative_spread", spread, "<=", 0.1)
    if cfg["halfline_band"] and domain.dimension == 1 and fld.family in ("brownian", "scalar_sigma"):
        A = closedform.halfline_blowup_coefficient(gen.q, fld.sigma_sup, gen.kappa)
        lo, hi = cfg["halfline_band"]
        sel = (rho0 >= lo - 1e-12) & (rho0 <= hi + 1e-12)
        rep.measured["halfline_A"] = A
        rep.add("min profile/A on band", float(prof0[sel].min() / A), ">=", 0.9)
        rep.add("max profile/A on band", float(prof0[sel].max() / A), "<=", 1.1)
    return rep


def _inward_axis(domain, node):
    lo, hi = domain.bounding_box
    for i, c in enumerate(node):
        if abs(c - lo[i]) < 1e-12:
            v = np.zeros(domain.dimension)
            v[i] = 1
            return v
        if abs(c - hi[i]) < 1e-12:
            v = np.zeros(domain.dimension)
            v[i] = -1
            return v
    raise ValueError("blow-up node is not on a face of the box")


# ---------------------------------------------------------------------------
# boundary_continuity


@register(
    "boundary_continuity",
    _with(
        BLOWUP_LEFT,
        generator={"q": 1.0, "kappa": 1.0},
        boundary=interval_boundary(None, 2.0),
        h=1 / 256,
        levels={"base": 2, "min_exp": 1, "max_exp": 16},
        delta=None,
        min_distance=0.2,
    ),
    {"h": 1 / 128, "levels": {"base": 2, "min_exp": 1, "max_exp": 12}},
    "ladder solution attains g continuously away from the blow-up set",
)
def boundary_continuity(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    rep = CheckReport("boundary_continuity")
    h = float(cfg["h"])
    u, record = _pde_ladder(cfg, domain, fld, gen, bd, keep=True)
    fine, _ = _pde_ladder(dict(cfg, h=h / 2), domain, fld, gen, bd)
    nodes = _far_boundary_nodes(u.grid, bd, cfg["min_distance"])
    fine_nodes = _far_boundary_nodes(fine.grid, bd, cfg["min_distance"])
    if not nodes:
        raise ValueError("no boundary node at the requested distance from the blow-up set")
    # nodal values on the boundary against g, gated by the bounded-data grid error
    n0 = record.levels[-1]
    finite = BoundaryData(bd.default, bd.pieces, bd.affine, dimension=bd.dimension)
    coarse_b = pde.solve_truncated(pde.EllipticProblem(u.grid, fld, gen, finite, truncation=n0))
    fine_b = pde.solve_truncated(pde.EllipticProblem(fine.grid, fld, gen, finite, truncation=n0))
    grid_err = _grid_error(coarse_b, fine_b)
    nodal = max(abs(u.values[k] - g) for k, g in nodes)
    rep.add("max|u - g| at boundary nodes", nodal, "<=", 2 * grid_err)
    # the jump between g and the first interior node vanishes at first order
    jump_h = max(abs(_neighbour(u, k, 1) - g) for k, g in nodes)
    jump_h2 = max(abs(_neighbour(fine, k, 1) - g) for k, g in fine_nodes)
    ratio = jump_h2 / jump_h if jump_h > 0 else 0.0
    rep.add("boundary jump ratio h/2 : h", ratio, "<=", 0.6)
    last, prev = record.fields[-1], record.fields[-2]
    change = max(abs(_neighbour(last, k, 1) - _neighbour(prev, k, 1)) for k, g in nodes)
    rep.measured.update(
        last_ladder_change_next_to_boundary=change,
        bounded_grid_error=grid_err,
        jump_h=jump_h,
        jump_h2=jump_h2,
        extrapolation_gap=max(abs(_extrapolate(u, k) - g) for k, g in nodes),
        nodes=len(nodes),
    )
    return rep


def _far_boundary_nodes(grid, bd: BoundaryData, min_distance):
    out = []
    for k in np.flatnonzero(grid.boundary):
        p = grid.points[k]
        if float(bd.blowup.distance(p)) < min_distance:
            continue
        if _normal_axis(grid, k) is None:
            continue
        out.append((k, float(bd(p))))
    return out


def _normal_axis(grid, k):
    idx = np.unravel_index(k, grid.shape)
    faces = [(i, 1 if idx[i] == 0 else -1) for i in range(grid.dimension) if idx[i] in (0, grid.shape[i] - 1)]
    return faces[0] if len(faces) == 1 else None


def _neighbour(fld, k, j):
    axis, sign = _normal_axis(fld.grid, k)
    return fld.values[k + sign * j * fld.grid.strides()[axis]]


def _extrapolate(fld, k):
    """Quadratic extrapolation to boundary node k from three nodes along the inward normal."""
    grid = fld.grid
    axis, sign = _normal_axis(grid, k)
    stride = grid.strides()[axis]
    u1, u2, u3 = (fld.values[k + sign * j * stride] for j in (1, 2, 3))
    return 3 * u1 - 3 * u2 + u3


def _grid_error(coarse, fine):
    fv = fine.values.reshape(fine.grid.shape)
    sub = fv[tuple(slice(None, None, 2) for _ in range(fine.grid.dimension))].reshape(-1)
    return float(np.max(np.abs(sub - coarse.values)))


# ---------------------------------------------------------------------------
# minimality_comparison


@register(
    "minimality_comparison",
    _with(BLOWUP_LEFT, generator={"q": 1.0, "kappa": 1.0}, h=1 / 512, truncation=1024.0, shift=1.0),
    {"h": 1 / 128},
    "discrete comparison for g <= g + c, with the swapped order as negative control",
)
def minimality_comparison(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    shifted = shift_boundary(bd, float(cfg["shift"]))
    problem = pde.EllipticProblem(pde.Grid(domain, cfg["h"]), fld, gen, bd, truncation=float(cfg["truncation"]))
    rep = CheckReport("minimality_comparison")
    ok = pde.comparison_check(problem, bd, shifted)
    same = pde.comparison_check(problem, bd, bd)
    swapped = pde.comparison_check(problem, shifted, bd)
    rep.measured.update(
        max_difference=ok.measured["max_difference"],
        identical_difference=same.measured["max_difference"],
        swapped_difference=swapped.measured["max_difference"],
    )
    rep.add("max(u_g - u_g+c)", ok.measured["max_difference"], "<=", 1e-9)
    rep.add("max|u_g - u_g|", abs(same.measured["max_difference"]), "<=", 0.0)
    rep.add("swapped max(u_g+c - u_g)", swapped.measured["max_difference"], "<=", 1e-9, expected=False)
    return rep


def shift_boundary(bd: BoundaryData, c: float) -> BoundaryData:
    """g + c (the blow-up set is unchanged)."""
    pieces = tuple((r, v + c) for r, v in bd.pieces)
    return BoundaryData(bd.default + c, pieces, bd.affine, bd.blowup, bd.dimension, bd.match_tol)


# ---------------------------------------------------------------------------
# general_generator


@register(
    "general_generator",
    {
        "kappa": 2.0,
        "q": 1.0,
        "ode": {"xi": 2.0, "horizon": 1.0, "dt": 1e-3, "ratio_dts": [4e-3, 2e-3]},
        "f_grid": [1e-2, 1e2, 41],
        "keller_osserman": {},
        "blowup_rate": {
            "generator": {"q": 1.0, "kappa": 2.0},
            "levels": {"base": 2, "min_exp": 1, "max_exp": 24},
            "refinements": 0,
        },
        "xi_bound": {},
    },
    {
        "keller_osserman": REGISTRY["keller_osserman"].fast,
        "blowup_rate": {"generator": {"q": 1.0, "kappa": 2.0}, "levels": {"base": 2, "min_exp": 1, "max_exp": 24}, "refinements": 0},
        "xi_bound": REGISTRY["xi_bound"].fast,
    },
    "checks rerun with f(y) = -kappa y^(1+q), kappa != 1, and the F-transform flow",
)
def general_generator(cfg, seed, workers=1):
    kappa, q = float(cfg["kappa"]), float(cfg["q"])
    gen = closedform.power(q, kappa)
    rep = CheckReport("general_generator")
    # F closed form against direct quadrature of -int_y^inf dx / f(x)
    lo, hi, num = cfg["f_grid"]
    ys = np.geomspace(lo, hi, int(num))
    quad = np.array([integrate.quad(lambda s: 1.0 / (kappa * s ** (1 + q)), y, np.inf, epsabs=0, epsrel=1e-13)[0] for y in ys])
    rel = float(np.max(np.abs(closedform.f_transform(gen, ys) - quad) / quad))
    rep.measured["f_transform_max_rel_error"] = rel
    rep.add("F closed form vs quadrature", rel, "<=", 1e-8)
    # pure ODE
    o = cfg["ode"]
    exact = float(closedform.general_flow(gen, o["xi"], o["horizon"]))
    err = abs(bsde.solve_pure_ode(gen, o["xi"], o["horizon"], o["dt"]) - exact)
    e1, e2 = (abs(bsde.solve_pure_ode(gen, o["xi"], o["horizon"], d) - exact) for d in o["ratio_dts"])
    rep.measured["ode"] = {"exact": exact, "error": err, "ratio": e1 / e2}
    rep.add("ode |Y0 - F-flow|", err, "<=", 0.01)
    rep.add("ode error ratio >=", e1 / e2, ">=", 1.6)
    rep.add("ode error ratio <=", e1 / e2, "<=", 2.4)
    gspec = {"q": q, "kappa": kappa}
    for i, sub in enumerate(("keller_osserman", "blowup_rate", "xi_bound")):
        sub_cfg = dict(cfg[sub])
        sub_cfg.setdefault("generator", gspec)
        r = run_check(sub, sub_cfg, _subseed(seed, i + 1), workers=workers)
        rep.measured[sub] = r.measured
        if r.error:
            rep.error = f"{sub}: {r.error}"
        for c in r.conditions:
            rep.add(f"{sub}:{c.name}", c.value, c.op, c.bound, c.expected)
    return rep


# ---------------------------------------------------------------------------
# weighted_z


@register(
    "weighted_z",
    _with(
        BLOWUP_LEFT,
        x=0.5,
        levels=[32.0, 64.0, 128.0, 256.0, 512.0, 1024.0],
        eps=2.0,
        n_paths=20_000,
        dt=1e-3,
        t_max=6.0,
        n_batches=2,
    ),
    {"n_paths": 2000, "dt": 2e-3},
    "E int |Z|^2 rho^(4/q+eps) dt stable across truncation levels",
)
def weighted_z(cfg, seed, workers=1):
    domain, fld, gen, bd = _problem(cfg)
    levels = _levels(cfg["levels"])
    run_cfg = _bsde_config(cfg, domain, fld, gen, bd, cfg["x"], seed, levels[0], estimate_z=True, z_eps=(float(cfg["eps"]),))
    lad = bsde.ladder_run(run_cfg, levels)
    est = [bsde.weighted_z_diagnostic(r, float(cfg["eps"])) for r in lad.runs]
    v = np.array([e.mean for e in est])
    med = float(np.median(v))
    rep = CheckReport("weighted_z")
    rep.measured["levels"] = levels
    rep.measured["values"] = v.tolist()
    rep.measured["stderr"] = [e.standard_error for e in est]
    rep.add("max/median", float(v.max() / med), "<=", 2.0)
    rep.add("median/min", float(med / v.min()) if v.min() > 0 else math.inf, "<=", 2.0)
    return rep


# ---------------------------------------------------------------------------
# dispatch


def check_names():
    return list(REGISTRY)


def run_check(name, cfg=None, seed=0, workers=1, fast=False) -> CheckReport:
    """Run one registered check; errors become failed reports."""
    if name not in REGISTRY:
        raise UnknownCheckError(f"unknown check {name!r}; registered: {', '.join(REGISTRY)}")
    chk = REGISTRY[name]
    base = _merge(chk.defaults, chk.fast) if fast else chk.defaults
    merged = _merge(base, cfg)
    t0 = time.perf_counter()
    try:
        rep = chk.func(merged, int(seed), workers)
    except config.ConfigError:
        raise
    except Exception as exc:  # recorded as a failed report; the suite carries on
        rep = CheckReport(name, error=f"{type(exc).__name__}: {exc}")
    rep.name = name
    rep.config = merged
    rep.seed = int(seed)
    rep.wall_time = time.perf_counter() - t0
    return rep


SUITES = ("fast", "full")


def run_suite(suite="fast", seed=0, workers=1, names=None, overrides=None) -> list:
    """Run every registered check (or ``names``) and return reports in registry order.

    ``fast`` uses small sample sizes and coarse grids; ``full`` runs at the
    acceptance scale.  With workers > 1 checks run concurrently; the reports
    do not depend on the worker count.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    names = list(names or REGISTRY)
    overrides = overrides or {}

    def one(name):
        return run_check(name, overrides.get(name), seed, workers=1, fast=suite == "fast")

    if workers <= 1:
        return [one(n) for n in names]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, names))


def suite_passed(reports) -> bool:
    return all(r.verdict for r in reports)


def to_jsonl(reports) -> str:
    return "".join(r.to_json() + "\n" for r in reports)
