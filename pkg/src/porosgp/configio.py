"""Versioned JSON run configurations.

A config is a single JSON object with 'schema_version' (currently 1) and a
'kind' of homogenize, optimize, pareto or check. File paths inside a config
resolve relative to the config file's own directory, so a config plus its
catalogue files relocate together.
"""

import hashlib
import json
import os

from . import macrofem
from .catalogue import CellTable, DesignSpace, VISCOSITY
from .errors import InvalidParams

SCHEMA_VERSION = 1
KINDS = ("homogenize", "optimize", "pareto", "check")


def sha256_of(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load_config(path):
    """Parse and validate one config file.

    Returns the config dict with two bookkeeping keys added: '_dir' (the
    directory paths resolve against) and '_sha256' (hash of the raw bytes,
    stamped into output headers).
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InvalidParams(f"config {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except ValueError as exc:
        raise InvalidParams(f"config {path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise InvalidParams(f"config {path}: top level must be an object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise InvalidParams(
            f"config {path}: schema_version must be {SCHEMA_VERSION}, "
            f"got {cfg.get('schema_version')!r}")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise InvalidParams(
            f"config {path}: kind must be one of {', '.join(KINDS)}, "
            f"got {kind!r}")
    cfg["_dir"] = os.path.dirname(os.path.abspath(path))
    cfg["_sha256"] = hashlib.sha256(raw).hexdigest()
    return cfg


def resolve_path(cfg, p):
    """Resolve a config-relative path."""
    return p if os.path.isabs(p) else os.path.join(cfg["_dir"], p)


def make_mesh(cfg):
    spec = cfg.get("mesh", {})
    return macrofem.MacroMesh(int(spec.get("nx", 15)),
                              int(spec.get("ny", 10)),
                              int(spec.get("nz", 2)))


def make_problem(cfg):
    """Macro problem from the 'problem' section (default block if absent).

    A custom problem lists clamps, tractions and pressures exactly as the
    problem constructor takes them; the default is the clamped block loaded
    from above with the two pressure patches.
    """
    spec = cfg.get("problem", {})
    mesh_spec = cfg.get("mesh", {})
    nx = int(mesh_spec.get("nx", 15))
    ny = int(mesh_spec.get("ny", 10))
    nz = int(mesh_spec.get("nz", 2))
    if spec.get("default", True):
        return macrofem.default_problem(nx, ny, nz,
                                        traction=spec.get("traction", 1.0))
    try:
        return macrofem.MacroProblem(macrofem.MacroMesh(nx, ny, nz),
                                     clamps=spec["clamps"],
                                     tractions=spec["tractions"],
                                     pressures=spec["pressures"])
    except KeyError as exc:
        raise InvalidParams(
            f"config: custom problem needs {exc.args[0]!r}") from exc


def make_space(cfg):
    """Design space from the 'catalogues' and 'design_space' sections."""
    paths = cfg.get("catalogues", {})
    if not paths:
        raise InvalidParams("config: optimization needs a 'catalogues' "
                            "section with 'cross' and/or 'sphere' paths")
    cross = sphere = None
    if "cross" in paths:
        cross = CellTable.load(resolve_path(cfg, paths["cross"]))
    if "sphere" in paths:
        sphere = CellTable.load(resolve_path(cfg, paths["sphere"]))
    ds = cfg.get("design_space", {})
    return DesignSpace(
        cross_table=cross, sphere_table=sphere,
        n_radii=int(ds.get("n_radii", 28)),
        n_angles=int(ds.get("n_angles", 180)),
        n_sphere=int(ds.get("n_sphere", 60)),
        viscosity=float(ds.get("viscosity", VISCOSITY)),
        gamma=float(ds.get("gamma", 0.0)),
        undrained_impermeable=bool(ds.get("undrained_type2", False)))


def optimizer_kwargs(cfg):
    """run_sgp keyword arguments from the 'optimizer' section."""
    opt = cfg.get("optimizer", {})
    budget = opt.get("rho_budget")
    return {
        "lam_phi": float(opt.get("lam_phi", 1.0)),
        "lam_psi": float(opt.get("lam_psi", 0.0)),
        "lam_reg": float(opt.get("lam_reg", 0.0)),
        "rho_budget": None if budget is None else float(budget),
        "k_max": int(opt.get("k_max", 50)),
        "eps_j": float(opt.get("eps_j", 0.0)),
        "max_retries": int(opt.get("max_retries", 10)),
        "filter_radius": float(opt.get("filter_radius", 1.3)),
        "rho_tol": float(opt.get("bisection_tol", 1e-3)),
    }


def initial_design(cfg, space, n_el):
    """Starting design: homogeneous parameters or explicit candidate ids."""
    from . import sgp

    spec = cfg.get("initial", {})
    if "ids" in spec:
        ids = spec["ids"]
        if len(ids) != n_el:
            raise InvalidParams(
                f"config: initial ids has {len(ids)} entries for "
                f"{n_el} elements")
        return sgp.Design.from_ids(space, ids)
    return sgp.Design.uniform_cross(
        space, n_el, r0=float(spec.get("r0", 0.15)),
        r1=float(spec.get("r1", 0.15)),
        angle_deg=float(spec.get("angle_deg", 0.0)))
