"""Command-line front end: reproducible experiments from config files.

Subcommands: powerflow, certify, alpha-sweep, simulate, cross-scan.
Each run writes its delimited/structured outputs, a rendered figure per
result, and a manifest with the config hash and per-file checksums.

Exit codes: 0 success/certified, 1 not-certified/unstable,
2 input error, 3 numerical failure.
"""

import argparse
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .certificate import alpha_theory_all, certify
from .config import load_case_for, load_config, resolve_models
from .errors import (BracketError, CaseFileError, ConfigError, ConsistencyError,
                     DroopcertError, PowerFlowError)
from .grid import build_laplacian
from .oracle import (cross_coupling_scan, find_alpha_crit, simulate,
                     state_perturbation)
from .powerflow import PowerFlowSpec, ideal_reactive_power, perturb_reactive, solve
from . import plots


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    return path


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _utcnow():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_manifest(out_dir, cfg, seed, started, outputs):
    canonical = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    config_hash = hashlib.sha256(
        (canonical + f"|seed={seed}").encode()).hexdigest()
    manifest = {
        "schema_version": 1,
        "tool_version": __version__,
        "config_sha256": config_hash,
        "seed": seed,
        "started_utc": started,
        "finished_utc": _utcnow(),
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def _operating_point_payload(op, result=None):
    payload = {
        "schema_version": 1,
        "V": op.V.tolist(),
        "phi": op.phi.tolist(),
        "p": op.p.tolist(),
        "q": op.q.tolist(),
    }
    if result is not None:
        payload["iterations"] = result.iterations
        payload["residual"] = result.residual
    return payload


def _compute_op(cfg, case, seed, verbose):
    pf = cfg.powerflow
    grid = case.grid
    if pf.q_mode == "case":
        q_spec = case.q_set
    else:
        q_ideal, _ = ideal_reactive_power(grid, case.p_set, case.v_set, case.slack,
                                          tol=pf.tol, max_iter=pf.max_iter)
        if pf.q_mode == "ideal":
            q_spec = q_ideal
        else:
            q_spec = perturb_reactive(q_ideal, pf.perturb_magnitude, seed)
    spec = PowerFlowSpec(case.p_set, q_spec, case.slack, case.v_set)
    result = solve(grid, spec, tol=pf.tol, max_iter=pf.max_iter)
    if verbose:
        print(f"power flow: {result.iterations} iterations, "
              f"residual {result.residual:.3e}")
    return result


def cmd_powerflow(args, cfg, out_dir, seed):
    case = load_case_for(cfg)
    result = _compute_op(cfg, case, seed, args.verbose)
    outputs = [
        _write_json(os.path.join(out_dir, "operating_point.json"),
                    _operating_point_payload(result.op, result)),
        plots.voltage_profile(result.op, os.path.join(out_dir, "voltages.png")),
    ]
    print(f"converged in {result.iterations} iterations "
          f"(residual {result.residual:.3e})")
    return 0, outputs


def cmd_certify(args, cfg, out_dir, seed):
    case = load_case_for(cfg)
    result = _compute_op(cfg, case, seed, args.verbose)
    models = resolve_models(cfg, case.grid, result.op)
    report = certify(case.grid, result.op, models, contour=cfg.contour,
                     rx_ratio=cfg.rx_ratio)
    outputs = [
        _write_json(os.path.join(out_dir, "operating_point.json"),
                    _operating_point_payload(result.op, result)),
        _write_json(os.path.join(out_dir, "certificate.json"), report.to_dict()),
        plots.certificate_margins(report,
                                  os.path.join(out_dir, "certificate.png")),
    ]
    print(f"verdict: {report.verdict}")
    for kind, ident, condition in report.failure_attribution:
        label = ident + 1 if kind == "node" else f"{ident[0] + 1}-{ident[1] + 1}"
        print(f"  failing {kind} {label}: {condition}")
    return (0 if report.certified else 1), outputs


def cmd_alpha_sweep(args, cfg, out_dir, seed):
    case = load_case_for(cfg)
    grid = case.grid
    result = _compute_op(cfg, case, seed, args.verbose)
    op = result.op
    models = resolve_models(cfg, grid, op)
    theory = alpha_theory_all(build_laplacian(grid), op)
    sweep = cfg.alpha_sweep
    rows = []
    for n in range(grid.n_nodes):
        bracket = (theory[n] - sweep.bracket_half_width,
                   theory[n] + sweep.bracket_half_width)
        try:
            crit = find_alpha_crit(grid, op, models, n, bracket, xtol=sweep.xtol)
            ratio = crit / theory[n] if abs(theory[n]) > 1e-12 else float("nan")
            rows.append({"node": n + 1, "alpha_theory": float(theory[n]),
                         "alpha_crit": float(crit), "ratio": float(ratio),
                         "status": "ok"})
        except BracketError:
            rows.append({"node": n + 1, "alpha_theory": float(theory[n]),
                         "alpha_crit": float("nan"), "ratio": float("nan"),
                         "status": "bracket_error"})
        if args.verbose:
            print(f"node {n + 1}: {rows[-1]}")
    outputs = [
        _write_json(os.path.join(out_dir, "operating_point.json"),
                    _operating_point_payload(op, result)),
        _write_csv(os.path.join(out_dir, "alpha_sweep.csv"),
                   ["node", "alpha_theory", "alpha_crit", "ratio", "status"],
                   [[r["node"], r["alpha_theory"], r["alpha_crit"], r["ratio"],
                     r["status"]] for r in rows]),
        plots.alpha_sweep_scatter(rows, os.path.join(out_dir, "alpha_sweep.png")),
    ]
    flagged = sum(1 for r in rows if r["status"] != "ok")
    print(f"alpha sweep: {len(rows)} nodes, {flagged} flagged")
    return 0, outputs


def cmd_simulate(args, cfg, out_dir, seed):
    case = load_case_for(cfg)
    grid = case.grid
    result = _compute_op(cfg, case, seed, args.verbose)
    op = result.op
    models = resolve_models(cfg, grid, op)
    sim = cfg.simulate
    node = sim.perturb_node - 1
    if not 0 <= node < grid.n_nodes:
        raise ConfigError(f"simulate.perturb_node {sim.perturb_node} out of range")
    dV = np.zeros(grid.n_nodes)
    dV[node] = sim.perturb_voltage * op.V[node]
    pert = state_perturbation(grid, models, dV=dV)
    traj = simulate(grid, op, models, pert, t_end=sim.t_end, dt=sim.dt,
                    record_every=sim.record_every)
    n = grid.n_nodes
    header = (["time"] + [f"V{i + 1}" for i in range(n)]
              + [f"phi{i + 1}" for i in range(n)]
              + [f"p{i + 1}" for i in range(n)] + [f"q{i + 1}" for i in range(n)]
              + [f"x_{node_i + 1}_{name[1:]}" for node_i, name in traj.state_names
                 if name.startswith("x")]
              + ["status"])
    rows = []
    for i, t in enumerate(traj.times):
        status = "collapse" if (traj.collapsed and i == len(traj.times) - 1) else "ok"
        rows.append([t, *traj.V[i], *traj.phi[i], *traj.p[i], *traj.q[i],
                     *traj.x[i], status])
    outputs = [
        _write_csv(os.path.join(out_dir, "trajectory.csv"), header, rows),
        plots.trajectory_panels(traj, os.path.join(out_dir, "trajectory.png")),
    ]
    if traj.collapsed:
        print(f"voltage collapse at t = {traj.collapse_time:.6g} s")
        return 1, outputs
    print(f"simulated {traj.times[-1]:.6g} s, no collapse")
    return 0, outputs


def cmd_cross_scan(args, cfg, out_dir, seed):
    case = load_case_for(cfg)
    grid = case.grid
    result = _compute_op(cfg, case, seed, args.verbose)
    op = result.op
    models = resolve_models(cfg, grid, op)
    base = models[0]
    if not hasattr(base, "c_vp"):
        raise ConfigError("cross-scan needs a generalized_droop base model")
    scan_cfg = cfg.cross_scan
    cvp = np.linspace(scan_cfg.c_vp_min, scan_cfg.c_vp_max, scan_cfg.c_vp_steps)
    cwq = np.linspace(scan_cfg.c_wq_min, scan_cfg.c_wq_max, scan_cfg.c_wq_steps)
    scan = cross_coupling_scan(grid, op, base, cvp, cwq, contour=cfg.contour,
                               threads=args.threads)
    outputs = [
        _write_csv(os.path.join(out_dir, "cross_scan.csv"),
                   ["c_vp", "c_wq", "oracle_verdict", "certificate_verdict"],
                   [[r["c_vp"], r["c_wq"], r["oracle_verdict"],
                     r["certificate_verdict"]] for r in scan.records]),
        plots.cross_scan_map(scan.records, os.path.join(out_dir, "cross_scan.png")),
    ]
    certified = sum(1 for r in scan.records
                    if r["certificate_verdict"] == "certified_stable")
    print(f"scanned {len(scan.records)} points, {certified} certified, "
          f"subset property {'holds' if scan.subset_ok else 'VIOLATED'}")
    if not scan.subset_ok:
        # a certified-but-unstable cell falsifies the sufficiency contract
        return 3, outputs
    return 0, outputs


COMMANDS = {
    "powerflow": cmd_powerflow,
    "certify": cmd_certify,
    "alpha-sweep": cmd_alpha_sweep,
    "simulate": cmd_simulate,
    "cross-scan": cmd_cross_scan,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="droopcert",
        description="Stability certificates for droop-controlled grids, with "
                    "spectral-oracle and simulation cross-checks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("powerflow", "solve the operating point for a case"),
        ("certify", "evaluate the decentralized stability certificate"),
        ("alpha-sweep", "bisect per-node critical droop ratios vs the bounds"),
        ("simulate", "integrate the nonlinear model from a perturbed start"),
        ("cross-scan", "map oracle vs certificate over cross-coupling gains"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", default=None, help="output directory "
                       "(default: config's 'out')")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for scans (0 = auto)")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    started = _utcnow()
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.seed
        out_dir = args.out if args.out is not None else cfg.out
        os.makedirs(out_dir, exist_ok=True)
        code, outputs = COMMANDS[args.command](args, cfg, out_dir, seed)
        _write_manifest(out_dir, cfg, seed, started, outputs)
        return code
    except (ConfigError, CaseFileError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except PowerFlowError as exc:
        extra = f" (residual {exc.residual:.3e})" if exc.residual is not None else ""
        print(f"numerical failure: {exc}{extra}", file=sys.stderr)
        return 3
    except (BracketError, ConsistencyError, DroopcertError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
