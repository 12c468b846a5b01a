"""JSON run configurations: parsing, validation and object construction.

A configuration is a flat JSON object.  Problem keys describe the domain,
coefficients, generator and boundary data; numeric keys tune the solvers.
Unknown keys are reported as warnings and otherwise ignored.

Example
-------
{"domain": {"type": "interval", "a": 0, "b": 1},
 "field": {"family": "brownian"},
 "generator": {"q": 1, "kappa": 1},
 "boundary": {"default": 1.0, "blowup": [{"lo": [0], "hi": [0]}]},
 "x": [0.5], "dt": 0.001, "n_paths": 10000}
"""
from __future__ import annotations

import hashlib
import json
import math

from . import closedform
from .diffusion import CoefficientField
from .geometry import Ball, BlowupSet, BoundaryData, BoxRegion, Box, CapRegion, Interval


class ConfigError(ValueError):
    pass


PROBLEM_KEYS = {"domain", "field", "generator", "boundary"}
NUMERIC_KEYS = {
    "x": None,
    "dt": 1e-3,
    "n_paths": 10_000,
    "t_max": 5.0,
    "truncation": None,
    "levels": None,
    "h": 1 / 256,
    "adapt": None,
    "dt_min": 1e-8,
    "n_bins": None,
    "n_batches": 16,
    "delta": None,
    "tol": 1e-6,
    "unexited_threshold": 1e-3,
    "estimate_z": False,
    "z_eps": [2.0],
    "alpha": None,
    "suite": "fast",
    "checks": None,
    "check_configs": None,
    "sweep": None,
    "ode": None,
    "seed": 0,
}
KNOWN_KEYS = PROBLEM_KEYS | set(NUMERIC_KEYS)


def unknown_keys(cfg: dict, known=KNOWN_KEYS) -> list:
    return sorted(k for k in cfg if k not in known)


def load(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _vec(v, name):
    try:
        return tuple(float(c) for c in (v if isinstance(v, (list, tuple)) else [v]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number or a list of numbers") from exc


def build_domain(spec: dict):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("domain needs a 'type' (interval, box or ball)")
    kind = spec["type"]
    try:
        if kind == "interval":
            return Interval(float(spec.get("a", 0.0)), float(spec.get("b", 1.0)))
        if kind == "box":
            return Box(_vec(spec["lo"], "domain.lo"), _vec(spec["hi"], "domain.hi"))
        if kind == "ball":
            return Ball(_vec(spec["center"], "domain.center"), float(spec["radius"]))
    except KeyError as exc:
        raise ConfigError(f"domain is missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc
    raise ConfigError(f"unknown domain type {kind!r}")


def build_field(spec: dict | None, dimension: int) -> CoefficientField:
    spec = dict(spec or {"family": "brownian"})
    family = spec.pop("family", "brownian")
    if "sigma_matrix" in spec:
        raise ConfigError("non-diagonal diffusion matrices are not supported; use diagonal families")
    declared = {k: spec.pop(k) for k in ("K_bound", "alpha_ellipticity", "K_lipschitz") if k in spec}
    try:
        if family == "brownian":
            fld = CoefficientField.brownian(dimension, **declared)
        elif family == "scalar_sigma":
            fld = CoefficientField.scalar_sigma(float(spec.pop("sigma")), dimension, **declared)
        elif family == "constant_drift":
            v = _vec(spec.pop("v"), "field.v")
            fld = CoefficientField.constant_drift(v, float(spec.pop("sigma", 1.0)), **declared)
        elif family == "linear_drift":
            m = _vec(spec.pop("m"), "field.m")
            fld = CoefficientField.linear_drift(float(spec.pop("lam")), m, float(spec.pop("sigma", 1.0)), **declared)
        elif family == "tabulated":
            fld = CoefficientField.tabulated(spec.pop("nodes"), spec.pop("drift"), spec.pop("sigma_values"), **declared)
        else:
            raise ConfigError(f"unknown coefficient family {family!r}")
    except KeyError as exc:
        raise ConfigError(f"field family {family!r} is missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid field: {exc}") from exc
    if spec:
        raise ConfigError(f"unknown field keys {sorted(spec)}")
    if fld.dimension != dimension:
        raise ConfigError(f"field dimension {fld.dimension} does not match the domain ({dimension})")
    return fld


def build_generator(spec: dict | None) -> closedform.GeneratorSpec:
    spec = spec or {}
    try:
        return closedform.GeneratorSpec(
            q=float(spec.get("q", 1.0)),
            kappa=float(spec.get("kappa", 1.0)),
            kind=spec.get("kind", "power"),
            nodes=tuple(spec.get("nodes", ())),
            values=tuple(spec.get("values", ())),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid generator: {exc}") from exc


def _region(spec, dimension):
    if "cap" in spec:
        c = spec["cap"]
        return CapRegion(_vec(c["center"], "cap.center"), float(c["radius"]), _vec(c["axis"], "cap.axis"), float(c["half_angle"]))
    lo = _vec(spec["lo"], "region.lo")
    hi = _vec(spec.get("hi", spec["lo"]), "region.hi")
    if len(lo) != dimension:
        raise ConfigError("region dimension does not match the domain")
    return BoxRegion(lo, hi)


def build_boundary(spec: dict | None, dimension: int) -> BoundaryData:
    spec = spec or {}
    try:
        blow = BlowupSet(tuple(_region(r, dimension) for r in spec.get("blowup", [])), dimension)
        pieces = tuple((_region(p, dimension), float(p["value"])) for p in spec.get("pieces", []))
        affine = None
        if "affine" in spec:
            coef, const = spec["affine"]
            affine = (_vec(coef, "affine coefficients"), float(const))
        default = spec.get("default", 1.0)
        if default in ("inf", "+inf") or (isinstance(default, float) and math.isinf(default)):
            # g = +inf everywhere: the whole boundary is the blow-up set
            raise ConfigError("use 'blowup' regions for infinite boundary values")
        return BoundaryData(float(default), pieces, affine, blow, dimension)
    except KeyError as exc:
        raise ConfigError(f"boundary is missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid boundary data: {exc}") from exc


def build_problem(cfg: dict):
    """(domain, field, generator, boundary) from a configuration."""
    for key in ("domain",):
        if key not in cfg:
            raise ConfigError(f"configuration needs '{key}'")
    domain = build_domain(cfg["domain"])
    fld = build_field(cfg.get("field"), domain.dimension)
    gen = build_generator(cfg.get("generator"))
    bd = build_boundary(cfg.get("boundary"), domain.dimension)
    _check_regions(bd, domain)
    return domain, fld, gen, bd


def _check_regions(bd: BoundaryData, domain):
    """Blow-up and data regions must lie on the boundary of the domain."""
    regions = list(bd.blowup.regions) + [r for r, _ in bd.pieces]
    for reg in regions:
        if isinstance(reg, CapRegion):
            if not isinstance(domain, Ball) or abs(reg.radius - domain.radius) > 1e-9 or any(
                abs(a - b) > 1e-9 for a, b in zip(reg.center, domain.center)
            ):
                raise ConfigError("cap regions must lie on the sphere bounding a ball domain")
            continue
        lo, hi = reg.lo, reg.hi
        probe = [lo, hi, tuple(0.5 * (a + b) for a, b in zip(lo, hi))]
        if any(abs(float(domain.signed_distance(p))) > 1e-9 for p in probe):
            raise ConfigError(f"region lo={list(lo)}, hi={list(hi)} does not lie on the domain boundary")


def numeric(cfg: dict, key: str):
    return cfg.get(key, NUMERIC_KEYS.get(key))


def start_points(cfg: dict, dimension: int) -> list:
    """The 'x' entry as a list of points (a single point is accepted)."""
    x = cfg.get("x")
    if x is None:
        raise ConfigError("configuration needs a start point 'x'")
    if dimension == 1 and all(isinstance(v, (int, float)) for v in x):
        return [(float(v),) for v in x]
    if all(isinstance(v, (int, float)) for v in x):
        return [tuple(float(v) for v in x)]
    return [tuple(float(c) for c in p) for p in x]


# ready-made problem dictionaries used by the checks and the demos

UNIT_INTERVAL = {"type": "interval", "a": 0.0, "b": 1.0}


def interval_boundary(left, right) -> dict:
    """Boundary dict on (0, 1) with values (or None for +inf) at both ends."""
    out = {"default": 1.0, "pieces": [], "blowup": []}
    for pt, val in ((0.0, left), (1.0, right)):
        if val is None:
            out["blowup"].append({"lo": [pt]})
        else:
            out["pieces"].append({"lo": [pt], "value": float(val)})
    return out
