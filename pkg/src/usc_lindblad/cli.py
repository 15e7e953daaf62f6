"""Command-line front end.

    usc-lindblad fit      --config cfg.json [--out dir] [--seed n]
    usc-lindblad simulate --config cfg.json --model model.json [--out dir]
    usc-lindblad oracle   --config cfg.json [--out dir]
    usc-lindblad compare  --a traj_a.csv --b traj_b.csv [--floor x] [--out dir]
    usc-lindblad sweep    --config cfg.json [--oracle-traj traj.csv] [--out dir]
    usc-lindblad preset   <name> [--out dir]

Exit codes: 0 success, 1 input error, 2 fit non-convergence, 3 resource cap.
Plot emission is best effort and never changes the exit status.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOCONV = 2
EXIT_RESOURCE = 3


def _stamp():
    return datetime.now(timezone.utc).isoformat()


def _outdir(cfg_outputs, override):
    out = Path(override) if override else Path(cfg_outputs)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_plot(fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except Exception as exc:  # plotting must never change the exit status
        print(f"warning: plot emission failed: {exc}", file=sys.stderr)


def _write_model_json(model, units, path):
    doc = model.to_dict()
    doc["units"] = units
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _read_model_json(path):
    from .spectral import ModeModel

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return ModeModel.from_dict(doc), doc.get("units")


def write_fit_report_csv(report, path, timestamp=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# generated={timestamp or _stamp()}\n")
        fh.write("region,omega,j_target,j_model,residual,threshold\n")
        for region, w, jt, jm, res, thr in report.rows():
            res_s = "" if res == "" else f"{res:.12g}"
            thr_s = "" if thr == "" else f"{thr:.12g}"
            fh.write(f"{region},{w:.12g},{jt:.12g},{jm:.12g},{res_s},{thr_s}\n")


def read_fit_report_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("region"):
                continue
            region, w, jt, jm, res, thr = line.rstrip("\n").split(",")
            rows.append((region, float(w), float(jt), float(jm),
                         float(res) if res else None, float(thr) if thr else None))
    return rows


def write_error_csv(report, path, timestamp=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# generated={timestamp or _stamp()} "
                 f"avg_rel_error={report.avg_rel_error:.12g} "
                 f"max_rel_error={report.max_rel_error:.12g} "
                 f"floor={report.normalization_floor:.12g}\n")
        fh.write("t,rel_error\n")
        for t, e in zip(report.times, report.rel_error_t):
            fh.write(f"{t:.12g},{e:.12g}\n")


def read_error_csv(path):
    """(times, rel_error, meta dict) from a compare output."""
    meta = {}
    times, errs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        meta[key] = val
                continue
            if line.startswith("t,"):
                continue
            t, e = line.rstrip("\n").split(",")
            times.append(float(t))
            errs.append(float(e))
    return np.array(times), np.array(errs), meta


def read_sweep_csv(path):
    from .metrics import SweepCell

    cells = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("n_modes"):
                continue
            n, thr, avg, mx, pos, neg = line.rstrip("\n").split(",")
            cells.append(SweepCell(int(n), float(thr), float(avg), float(mx),
                                   float(pos), float(neg), True))
    return cells


def cmd_fit(args) -> int:
    from .config import ConfigError, load_config
    from .fit import fit_model, fit_report
    from .svgplot import line_plot

    try:
        cfg = load_config(args.config, seed_override=args.seed)
        target = cfg.target()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = _outdir(cfg.outputs, args.out)
    res = fit_model(target, cfg.fit)
    rep = fit_report(res, target, cfg.fit)
    _write_model_json(res.model, cfg.units, out / "model.json")
    write_fit_report_csv(rep, out / "fit_report.csv")
    with open(out / "resonances.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("re,im\n")
        for z in rep.resonances:
            fh.write(f"{z.real:.12g},{z.imag:.12g}\n")
    _emit_plot(line_plot, out / "fit.svg",
               [(rep.pos_omega, np.maximum(rep.pos_target, 1e-300), "target"),
                (rep.pos_omega, np.maximum(rep.pos_model, 1e-300), "model")],
               title="spectral density fit", xlabel=f"omega [{cfg.units}]",
               ylabel=f"J [{cfg.units}]", logy=True)
    print(f"fit: pos_residual={res.pos_residual:.3e} "
          f"neg_violation={res.neg_violation:.3e} converged={res.converged}")
    if not res.converged:
        return EXIT_NOCONV
    return EXIT_OK if res.neg_violation == 0.0 else EXIT_NOCONV


def _simulate(cfg, model, out):
    from .dynamics import propagate, write_trajectory_csv
    from .fock import build_basis, build_hamiltonian, build_jump_operators, \
        initial_density_matrix
    from .svgplot import line_plot

    basis = build_basis(cfg.basis)
    h = build_hamiltonian(model, cfg.emitter, basis)
    jumps = build_jump_operators(model, basis)
    rho0 = initial_density_matrix(basis, cfg.emitter)
    traj = propagate(rho0, h, jumps, basis, cfg.t_grid(), tol=cfg.tol,
                     atol=cfg.atol)
    write_trajectory_csv(traj, out / "trajectory.csv", units=cfg.units)
    _emit_plot(line_plot, out / "trajectory.svg",
               [(traj.times, traj.emitter_population, "P_e"),
                (traj.times, traj.bath_photons, "P_bath")],
               title="emitter dynamics", xlabel="t [hbar/{}]".format(cfg.units))
    return traj


def cmd_simulate(args) -> int:
    from .config import ConfigError, load_config
    from .fock import BasisOverflowError

    try:
        cfg = load_config(args.config, seed_override=args.seed)
        model, model_units = _read_model_json(args.model)
        if model_units is not None and model_units != cfg.units:
            raise ConfigError(
                f"model units {model_units!r} do not match config units "
                f"{cfg.units!r}")
        if model.n_modes != cfg.basis.n_modes:
            from dataclasses import replace
            cfg.basis = replace(cfg.basis, n_modes=model.n_modes)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = _outdir(cfg.outputs, args.out)
    try:
        traj = _simulate(cfg, model, out)
    except BasisOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    print(f"simulate: P_e(t_max)={traj.emitter_population[-1]:.6f} "
          f"P_bath(t_max)={traj.bath_photons[-1]:.6f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .config import ConfigError, load_config
    from .dynamics import write_trajectory_csv
    from .fock import BasisOverflowError
    from .metrics import relative_error
    from .oracle import DiscretizationSpec, discretize, exact_propagate

    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if cfg.oracle is None:
            raise ConfigError("config has no oracle section")
        target = cfg.target()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = _outdir(cfg.outputs, args.out)
    try:
        model = discretize(target, cfg.oracle)
        traj = exact_propagate(model, cfg.emitter, cfg.oracle_basis,
                               cfg.t_grid(), tol=cfg.tol, atol=cfg.atol)
        if cfg.raw.get("oracle", {}).get("check_convergence", True):
            from dataclasses import replace
            half = DiscretizationSpec(cfg.oracle.omega_min, cfg.oracle.omega_max,
                                      max(cfg.oracle.n_points // 2, 2))
            half_basis = replace(cfg.oracle_basis, n_modes=half.n_points)
            traj_half = exact_propagate(discretize(target, half), cfg.emitter,
                                        half_basis, cfg.t_grid(), tol=cfg.tol,
                                        atol=cfg.atol)
            delta = float(np.abs(traj.emitter_population
                                 - traj_half.emitter_population).max())
            traj.flags.append(f"halving_sup_diff={delta:.6g}")
            print(f"oracle: n-halving sup diff {delta:.3e}")
    except BasisOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    for fl in traj.flags:
        print(f"oracle: flag {fl}")
    write_trajectory_csv(traj, out / "oracle_trajectory.csv", units=cfg.units)
    print(f"oracle: T_rec={traj.t_recurrence:.6g} "
          f"P_e(t_max)={traj.emitter_population[-1]:.6f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .dynamics import read_trajectory_csv
    from .metrics import relative_error

    try:
        traj_a = read_trajectory_csv(args.a)
        traj_b = read_trajectory_csv(args.b)
        rep = relative_error(traj_a, traj_b, floor=args.floor)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = _outdir(args.out or ".", args.out)
    write_error_csv(rep, out / "error.csv")
    print(f"compare: avg_rel_error={rep.avg_rel_error:.6g} "
          f"max_rel_error={rep.max_rel_error:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .config import ConfigError, load_config
    from .dynamics import read_trajectory_csv
    from .fock import BasisOverflowError
    from .metrics import SweepRunSpec, threshold_sweep, write_sweep_csv
    from .oracle import discretize, exact_propagate

    try:
        cfg = load_config(args.config, seed_override=args.seed)
        target = cfg.target()
        sweep_raw = cfg.raw.get("sweep")
        if not sweep_raw:
            raise ConfigError("config has no sweep section")
        n_list = [int(x) for x in sweep_raw["n_modes_list"]]
        thr_list = [float(x) for x in sweep_raw["threshold_list"]]
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = _outdir(cfg.outputs, args.out)
    try:
        if args.oracle_traj:
            oracle_traj = read_trajectory_csv(args.oracle_traj)
        else:
            if cfg.oracle is None:
                print("error: no oracle section and no --oracle-traj",
                      file=sys.stderr)
                return EXIT_INPUT
            model = discretize(target, cfg.oracle)
            oracle_traj = exact_propagate(model, cfg.emitter, cfg.oracle_basis,
                                          cfg.t_grid(), tol=cfg.tol,
                                          atol=cfg.atol)
        base = SweepRunSpec(fit=cfg.fit, emitter=cfg.emitter,
                            max_total_excitations=cfg.basis.max_total_excitations,
                            tol=cfg.tol, atol=cfg.atol,
                            max_states=cfg.basis.max_states)
        cells = threshold_sweep(target, oracle_traj, n_list, thr_list, base)
    except BasisOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    write_sweep_csv(cells, out / "sweep.csv")
    for c in cells:
        note = f" [{c.error}]" if c.error else ""
        print(f"sweep: N={c.n_modes} thr={c.threshold:.3g} "
              f"avg={c.avg_rel_error:.4g} pos={c.pos_residual:.3g} "
              f"neg={c.neg_violation:.3g}{note}")
    return EXIT_OK


def cmd_preset(args) -> int:
    from .config import ConfigError, builtin_preset

    try:
        doc = builtin_preset(args.name)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    dest = out / f"{args.name}.json"
    dest.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print(f"preset: wrote {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usc-lindblad",
        description="Spectral-density fits with lossy interacting modes and "
                    "Lindblad emitter dynamics in the ultrastrong-coupling "
                    "regime.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the fit rng seed")

    p = sub.add_parser("fit", help="fit a mode network to the target")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="propagate a fitted model")
    common(p)
    p.add_argument("--model", required=True, help="fitted model JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact discretized-continuum benchmark")
    common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="relative error between trajectories")
    p.add_argument("--a", required=True, help="trajectory CSV under test")
    p.add_argument("--b", required=True, help="reference trajectory CSV")
    p.add_argument("--floor", type=float, default=1e-3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="error vs (n_modes, threshold) table")
    common(p)
    p.add_argument("--oracle-traj", default=None,
                   help="reuse an oracle trajectory CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preset", help="write a bundled scenario config")
    p.add_argument("name", help="preset name (fig2, fig4-narrow, fig4-broad)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
