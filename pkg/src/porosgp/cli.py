"""Command line entry points: homogenize, optimize, pareto, check.

Every subcommand reads a JSON config (--config) and writes its results
under an output directory. History and catalogue outputs are bitwise
reproducible for identical configs; wall-clock timings go to a separate
file so they never perturb the reproducible ones.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, adjoint, catalogue, configio, kernels, macrofem
from . import sgp, tensors as tn, vtkio
from .errors import InvalidParams, PorosgpError

log = logging.getLogger("porosgp")

HISTORY_COLS = ("k", "J", "Phi", "Psi", "Xi", "rho", "lambda_rho",
                "lambda_g")


def _setup_logging():
    levels = {"debug": logging.DEBUG, "info": logging.INFO,
              "warning": logging.WARNING, "quiet": logging.ERROR}
    wanted = os.environ.get("POROSGP_LOG", "info").strip().lower()
    logging.basicConfig(level=levels.get(wanted, logging.INFO),
                        format="%(levelname)s %(message)s",
                        stream=sys.stderr)


def _stamp(cfg):
    return f"porosgp {__version__} config={cfg['_sha256']}"


def _out_dir(cfg, args, default="out"):
    if args.out:
        path = os.path.abspath(args.out)
    else:
        path = configio.resolve_path(cfg, cfg.get("output", {}).get(
            "dir", default))
    os.makedirs(path, exist_ok=True)
    return path


# ----------------------------------------------------------------------
# output writers

def _write_history(path, history, stamp):
    with open(path, "w") as fh:
        fh.write(f"# {stamp}\n")
        fh.write(",".join(HISTORY_COLS) + "\n")
        for row in history:
            cells = ["%d" % row["k"]] + ["%.17g" % row[c]
                                         for c in HISTORY_COLS[1:]]
            fh.write(",".join(cells) + "\n")


def _write_timings(path, timings, stamp):
    with open(path, "w") as fh:
        fh.write(f"# {stamp}\n")
        fh.write("k,seconds\n")
        for k, secs in timings:
            fh.write("%d,%.6f\n" % (k, secs))


def _design_params(design, space, initial_spec):
    """Per-element (type code, r0, r1, angle) arrays; -1 ids take the
    homogeneous initial parameters they were built from."""
    n_el = design.ids.size
    code = np.zeros(n_el, dtype=np.int64)
    r0 = np.empty(n_el)
    r1 = np.full(n_el, np.nan)
    ang = np.full(n_el, np.nan)
    for i, c in enumerate(design.ids):
        if c < 0:
            code[i] = 1
            r0[i] = float(initial_spec.get("r0", 0.15))
            r1[i] = float(initial_spec.get("r1", 0.15))
            ang[i] = float(initial_spec.get("angle_deg", 0.0))
        else:
            kind, p0, p1, deg = space.candidate_params([c])[0]
            code[i] = 1 if kind == "cross" else 2
            r0[i], r1[i], ang[i] = p0, p1, deg
    return code, r0, r1, ang


def _write_design_csv(path, design, space, initial_spec, stamp):
    code, r0, r1, ang = _design_params(design, space, initial_spec)
    names = {1: "cross", 2: "sphere"}
    with open(path, "w") as fh:
        fh.write(f"# {stamp}\n")
        fh.write("element,type,r0,r1,angle_deg,rho\n")
        for e in range(design.ids.size):
            fh.write("%d,%s,%.17g,%.17g,%.17g,%.17g\n"
                     % (e, names[code[e]], r0[e], r1[e], ang[e],
                        design.rho[e]))


def _write_fields(path_base, vtk_format, mesh, state, design, space,
                  initial_spec, stamp):
    code, r0, r1, ang = _design_params(design, space, initial_spec)
    point_data = {"displacement": state.u.reshape(-1, 3),
                  "pressure": state.p}
    cell_data = {
        "design_type": code.astype(float),
        "design_r0": r0, "design_r1": r1, "design_angle": ang,
        "design_rho": design.rho,
        "stiff_norm": np.sqrt(np.einsum("mij,mij->m", design.a, design.a)),
        "perm_trace": np.einsum("mii->m", design.k) / 3.0,
    }
    if vtk_format == "xml":
        path = path_base + ".vtu"
        vtkio.write_xml(path, mesh.nodes, mesh.elem_nodes, point_data,
                        cell_data, title=stamp)
    else:
        path = path_base + ".vtk"
        vtkio.write_legacy(path, mesh.nodes, mesh.elem_nodes, point_data,
                           cell_data, title=stamp)
    return path


# ----------------------------------------------------------------------
# subcommands

def cmd_homogenize(cfg, args):
    family = cfg.get("family")
    if family not in ("cross", "sphere"):
        raise InvalidParams("config: family must be 'cross' or 'sphere'")
    res = int(cfg.get("resolution", 32))
    nnodes = int(cfg.get("nodes", 11 if family == "cross" else 30))
    mat = cfg.get("material", {})
    dmat = tn.iso_stiffness(float(mat.get("E", catalogue.SOLID_E)),
                            float(mat.get("nu", catalogue.SOLID_NU)))
    if "out" not in cfg:
        raise InvalidParams("config: homogenize needs an 'out' file path")
    out = (os.path.join(os.path.abspath(args.out), os.path.basename(
        cfg["out"])) if args.out else configio.resolve_path(cfg, cfg["out"]))
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)

    tick = [time.perf_counter()]

    def progress(done, total, params):
        now = time.perf_counter()
        log.info("node %d/%d %s in %.1fs", done, total,
                 "(" + ", ".join("%.3f" % p for p in params) + ")",
                 now - tick[0])
        tick[0] = now

    t0 = time.perf_counter()
    builder = (catalogue.build_cross_table if family == "cross"
               else catalogue.build_sphere_table)
    table = builder(n=res, nnodes=nnodes, dmat=dmat, progress=progress)
    table.meta["tool"] = f"porosgp {__version__}"
    table.meta["config_sha256"] = cfg["_sha256"]
    table.save(out)
    csv_path = os.path.splitext(out)[0] + "_nodes.csv"
    table.dump_nodes_csv(csv_path)
    print("catalogue %s (%d nodes at n=%d) in %.1fs; nodes in %s"
          % (out, table.samples.reshape(-1, catalogue.NFIELDS).shape[0],
             res, time.perf_counter() - t0, csv_path))
    return 0


def _run_one(problem, space, cfg, args, out_dir, overrides=None):
    """One optimization run with all its file outputs; returns the result."""
    stamp = _stamp(cfg)
    out_spec = cfg.get("output", {})
    vtk_format = out_spec.get("vtk_format", "legacy")
    if vtk_format not in ("legacy", "xml"):
        raise InvalidParams("config: vtk_format must be 'legacy' or 'xml'")
    dump_every = (args.dump_every if args.dump_every is not None
                  else int(out_spec.get("dump_every", 0)))
    initial_spec = cfg.get("initial", {})
    kwargs = configio.optimizer_kwargs(cfg)
    if overrides:
        kwargs.update(overrides)
    start = configio.initial_design(cfg, space, problem.mesh.n_elems)

    timings = []
    tick = [time.perf_counter()]

    def on_iterate(k, row, design):
        now = time.perf_counter()
        timings.append((k, now - tick[0]))
        tick[0] = now
        log.info("k=%d J=%.6g Phi=%.6g Psi=%.6g rho=%.4f", k, row["J"],
                 row["Phi"], row["Psi"], row["rho"])
        if dump_every and k % dump_every == 0:
            st = macrofem.solve_state(problem, design.a, design.bv,
                                      design.k)
            _write_fields(os.path.join(out_dir, "fields_%04d" % k),
                          vtk_format, problem.mesh, st, design, space,
                          initial_spec, stamp)

    res = sgp.run_sgp(problem, space, threads=args.threads, start=start,
                      on_iterate=on_iterate, **kwargs)

    _write_history(os.path.join(out_dir, "history.csv"), res.history, stamp)
    _write_timings(os.path.join(out_dir, "timings.csv"), timings, stamp)
    _write_design_csv(os.path.join(out_dir, "design.csv"), res.design,
                      space, initial_spec, stamp)
    _write_fields(os.path.join(out_dir, "fields_final"), vtk_format,
                  problem.mesh, res.state, res.design, space, initial_spec,
                  stamp)
    last = res.history[-1]
    summary = {
        "version": __version__, "config_sha256": cfg["_sha256"],
        "status": res.status, "iterations": res.iterations,
        "scan_backend": kernels.scan_backend(), "threads": args.threads,
        "seed": args.seed,
        "J": last["J"], "Phi": last["Phi"], "Psi": last["Psi"],
        "Xi": last["Xi"], "rho": last["rho"],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return res


def cmd_optimize(cfg, args):
    out_dir = _out_dir(cfg, args)
    problem = configio.make_problem(cfg)
    space = configio.make_space(cfg)
    res = _run_one(problem, space, cfg, args, out_dir)
    last = res.history[-1]
    print("final J=%.17g Phi=%.17g Psi=%.17g (%s after %d iterations)"
          % (last["J"], last["Phi"], last["Psi"], res.status,
             res.iterations))
    return 0


def cmd_pareto(cfg, args):
    sweep = cfg.get("sweep")
    if not sweep:
        raise InvalidParams("config: pareto needs a nonempty 'sweep' list "
                            "of flux weights")
    out_dir = _out_dir(cfg, args)
    problem = configio.make_problem(cfg)
    space = configio.make_space(cfg)
    rows = []
    for lam_psi in sweep:
        sub = os.path.join(out_dir, "lam_psi_%g" % lam_psi)
        os.makedirs(sub, exist_ok=True)
        log.info("sweep point lam_psi=%g -> %s", lam_psi, sub)
        try:
            res = _run_one(problem, space, cfg, args, sub,
                           overrides={"lam_psi": float(lam_psi)})
            last = res.history[-1]
            rows.append((lam_psi, last["Phi"], last["Psi"], res.iterations,
                         res.status))
        except PorosgpError as exc:
            log.error("sweep point lam_psi=%g failed: %s", lam_psi, exc)
            rows.append((lam_psi, float("nan"), float("nan"), 0,
                         "error: %s" % exc))
    with open(os.path.join(out_dir, "pareto.csv"), "w") as fh:
        fh.write(f"# {_stamp(cfg)}\n")
        fh.write("lam_psi,Phi,Psi,iterations,status\n")
        for lam_psi, phi, psi, iters, status in rows:
            fh.write("%.17g,%.17g,%.17g,%d,%s\n"
                     % (lam_psi, phi, psi, iters, status))
    for lam_psi, phi, psi, iters, status in rows:
        print("lam_psi=%g Phi=%.6g Psi=%.6g iterations=%d %s"
              % (lam_psi, phi, psi, iters, status))
    return 0


# ----------------------------------------------------------------------
# verification checks

def _check_zero_pore():
    dmat = tn.iso_stiffness(catalogue.SOLID_E, catalogue.SOLID_NU)
    res = microcell_homogenize(np.ones((8, 8, 8), dtype=bool), dmat)
    err_a = (np.abs(res["A"] - dmat).max() / np.abs(dmat).max())
    err_c = np.abs(res["C"]).max()
    err_k = np.abs(res["K"]).max()
    err = max(err_a, err_c, err_k)
    return err <= 1e-8, err, "zero-pore cell reproduces the base material"


def _check_dual_forms():
    from .microcell import cross_cell
    dmat = tn.iso_stiffness(catalogue.SOLID_E, catalogue.SOLID_NU)
    res = microcell_homogenize(cross_cell(16, 0.15, 0.15), dmat)
    scale = max(np.abs(res["C"]).max(), 1e-12)
    err_c = np.abs(res["C"] - res["C_dual"]).max() / scale
    kdiag = np.diag(res["K"])
    err_k = np.abs(kdiag - res["K_diss"]).max() / max(kdiag.max(), 1e-12)
    ok = err_c <= 1e-6 and err_k <= 1e-4
    return ok, max(err_c, err_k), "coupling and permeability dual formulas"


def _random_state_arrays(rng, n_el):
    def spd(k, scale):
        m = rng.standard_normal((k, k))
        return scale * (m @ m.T + k * np.eye(k))

    a = np.stack([spd(6, 1.0) for _ in range(n_el)])
    b3 = np.stack([spd(3, 0.1) for _ in range(n_el)])
    k3 = np.stack([spd(3, 0.01) for _ in range(n_el)])
    return a, b3, k3


def _check_adjoint(seed, fd_step):
    problem = macrofem.default_problem(3, 2, 1)
    n_el = problem.mesh.n_elems
    rng = np.random.default_rng(seed)
    a, b3, k3 = _random_state_arrays(rng, n_el)
    bv = np.stack([tn.sym3_to_voigt(m) for m in b3])
    lam_phi, lam_psi = 1.0, -10.0

    def objective(a_e, bv_e, k_e):
        st = macrofem.solve_state(problem, a_e, bv_e, k_e)
        return lam_phi * st.phi + lam_psi * st.psi

    state = macrofem.solve_state(problem, a, bv, k3)
    ga, gb, gk = adjoint.adjoint_sensitivities(state, lam_phi, lam_psi)
    worst = 0.0
    for e in (0, n_el - 1):
        for i, j in ((0, 0), (0, 1)):
            d = np.zeros((6, 6))
            d[i, j] = d[j, i] = 1.0
            ap = a.copy()
            ap[e] = a[e] + fd_step * d
            am = a.copy()
            am[e] = a[e] - fd_step * d
            fd = (objective(ap, bv, k3)
                  - objective(am, bv, k3)) / (2 * fd_step)
            want = tn.frobenius(ga[e], d)
            worst = max(worst, abs(fd - want) / max(abs(want), 1e-8))
        for block, grad in ((1, gb), (2, gk)):
            d = np.zeros((3, 3))
            d[0, 0] = 1.0
            d[1, 0] = d[0, 1] = 0.5
            if block == 1:
                bp = b3.copy()
                bp[e] = b3[e] + fd_step * d
                bm = b3.copy()
                bm[e] = b3[e] - fd_step * d
                fd = (objective(a, np.stack([tn.sym3_to_voigt(m)
                                             for m in bp]), k3)
                      - objective(a, np.stack([tn.sym3_to_voigt(m)
                                               for m in bm]),
                                  k3)) / (2 * fd_step)
            else:
                kp = k3.copy()
                kp[e] = k3[e] + fd_step * d
                km = k3.copy()
                km[e] = k3[e] - fd_step * d
                fd = (objective(a, bv, kp)
                      - objective(a, bv, km)) / (2 * fd_step)
            want = tn.frobenius(grad[e], d)
            worst = max(worst, abs(fd - want) / max(abs(want), 1e-8))
    return worst <= 1e-5, worst, "adjoint gradients match differences"


def _check_model(seed, fd_step=1e-6):
    # differences on the closed-form model itself: no solver noise, so a
    # smaller step than the solver-based gradient check is appropriate
    problem = macrofem.default_problem(3, 2, 1)
    n_el = problem.mesh.n_elems
    rng = np.random.default_rng(seed + 1)
    a, b3, k3 = _random_state_arrays(rng, n_el)
    bv = np.stack([tn.sym3_to_voigt(m) for m in b3])
    labels = rng.uniform(0.0, 1.0, size=(n_el, 3))
    rho = rng.uniform(0.5, 1.0, size=n_el)
    feats = np.stack([catalogue.feature_row(a[e], b3[e], k3[e], labels[e],
                                            rho[e]) for e in range(n_el)])
    design = sgp.Design(np.arange(n_el, dtype=np.int64), feats, a, bv, k3,
                        rho, labels)
    lam_phi, lam_psi = 1.0, -10.0
    state = macrofem.solve_state(problem, a, bv, k3)
    j_val = lam_phi * state.phi + lam_psi * state.psi
    sens = adjoint.adjoint_sensitivities(state, lam_phi, lam_psi)
    weights = sgp.build_weights(design, sens)
    const = j_val - float(np.sum(weights * feats))
    snap = sgp.ModelSnapshot(1, weights, const, design, j_val, sens)

    err0 = abs(snap.model_value(feats) - j_val) / (1.0 + abs(j_val))
    worst = 0.0
    e = 2
    for block in range(3):
        k = 6 if block == 0 else 3
        d = np.zeros((k, k))
        d[0, 0] = 1.0
        d[0, 1] = d[1, 0] = 0.3

        def model_at(step):
            mats = [a[e].copy(), b3[e].copy(), k3[e].copy()]
            mats[block] = mats[block] + step * d
            rows = feats.copy()
            rows[e] = catalogue.feature_row(mats[0], mats[1], mats[2],
                                            labels[e], rho[e])
            return snap.model_value(rows)

        fd = (model_at(fd_step) - model_at(-fd_step)) / (2 * fd_step)
        want = tn.frobenius(sens[block][e], d)
        worst = max(worst, abs(fd - want) / max(abs(want), 1e-8))
    ok = err0 <= 1e-12 and worst <= 1e-6
    return ok, max(err0, worst), "separable model zeroth/first order"


def _check_catalogue(cfg):
    paths = cfg.get("catalogues", {})
    if not paths:
        return True, 0.0, "catalogue files (none configured)"
    lowest = np.inf
    for name, rel in sorted(paths.items()):
        table = catalogue.CellTable.load(configio.resolve_path(cfg, rel))
        amats = catalogue.unpack_fields(
            table.samples.reshape(-1, catalogue.NFIELDS))["A"]
        low = float(np.linalg.eigvalsh(amats).min())
        if low <= 0.0:
            return False, low, f"catalogue {name} stiffness is SPD"
        lowest = min(lowest, low)
    return True, lowest, "catalogue files load, verify and stay SPD"


def cmd_check(cfg, args):
    suite = [
        _check_zero_pore,
        _check_dual_forms,
        lambda: _check_adjoint(args.seed, args.fd_step),
        lambda: _check_model(args.seed),
        lambda: _check_catalogue(cfg),
    ]
    failures = 0
    for fun in suite:
        try:
            ok, err, label = fun()
            print("%s %s (err=%.3g)" % ("PASS" if ok else "FAIL", label,
                                        err))
        except PorosgpError as exc:
            ok = False
            print("FAIL %s" % exc)
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def microcell_homogenize(solid, dmat):
    from .microcell import homogenize_cell
    return homogenize_cell(solid, dmat, check=False)


# ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="porosgp",
        description="Two-scale porous material optimization: offline cell "
                    "homogenization and online design of a poroelastic "
                    "structure.")
    parser.add_argument("--version", action="version",
                        version=f"porosgp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "homogenize": "build a cell catalogue from a family spec",
        "optimize": "run the design optimization loop",
        "pareto": "sweep flux weights from a cold start",
        "check": "run fast self-verification on a small mesh",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True,
                        help="JSON run configuration")
        sp.add_argument("--out", default=None,
                        help="output directory (overrides the config)")
        sp.add_argument("--threads", type=int, default=1,
                        help="scan parallelism")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed for randomized checks")
        sp.add_argument("--dump-every", type=int, default=None,
                        dest="dump_every",
                        help="write fields every k-th accepted iterate")
        if name == "check":
            sp.add_argument("--fd-step", type=float, default=1e-4,
                            dest="fd_step",
                            help="central difference step of the "
                                 "solver-based gradient check; tightening "
                                 "it toward 1e-5 sharpens the reported "
                                 "errors")
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = configio.load_config(args.config)
        if cfg["kind"] != args.command:
            raise InvalidParams(
                f"config kind '{cfg['kind']}' does not match subcommand "
                f"'{args.command}'")
        handler = {"homogenize": cmd_homogenize, "optimize": cmd_optimize,
                   "pareto": cmd_pareto, "check": cmd_check}[args.command]
        return handler(cfg, args)
    except PorosgpError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
