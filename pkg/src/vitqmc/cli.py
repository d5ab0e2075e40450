"""Command-line entry point: ``vitqmc {train,sweep,compare,exact,fssa,observe}``.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""
import argparse
import csv
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy.special

from . import __version__, config as config_mod
from ._accel import NUMBA_ENABLED, set_num_threads
from .ansatz import RBM, load_checkpoint
from .config import ConfigError
from .exact import MAX_SITES, exact_observables, exact_renyi2, ground_state, variational_energy
from .fssa import (CollapseError, FitConvergenceError, derived_critical_quantities, fit_critical,
                   read_dataset, write_collapsed, collapsed_points)
from .hamiltonian import NonFiniteAmplitudeError, all_configurations
from .observables import measure, order_wavevector, phase_factors
from .sr import SRSolveError, TrainingError, dump_json, load_sampler_state, train

log = logging.getLogger("vitqmc")

NUMERICAL_ERRORS = (TrainingError, SRSolveError, FitConvergenceError, CollapseError, NonFiniteAmplitudeError,
                    FloatingPointError, np.linalg.LinAlgError)
REFERENCE_VIT_PARAMETERS = 1133


# --------------------------------------------------------------------------
# shared helpers

def parse_grid(text):
    """``start:stop:step`` (stop included) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + k * step, 12) for k in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}; use start:stop:step or a,b,c") from None


def _config(args):
    cfg = config_mod.load(args.config) if getattr(args, "config", None) else config_mod.resolve()
    cfg = config_mod.apply_overrides(cfg, getattr(args, "set", None))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["output"] = args.out
    return cfg


def run_manifest(cfg, model, ansatz, command, **extra):
    return {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "config": cfg,
        "conventions": model.metadata(),
        "ansatz": {"kind": ansatz.kind, "hyperparameters": ansatz.hyperparameters(),
                   "parameter_count": ansatz.parameter_count, "breakdown": ansatz.layout.breakdown()},
        "numba": NUMBA_ENABLED,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **extra,
    }


def _append_rows(path, header, rows):
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _with_model(cfg, **model):
    out = json.loads(json.dumps(cfg))
    out["model"].update(model)
    return out


# --------------------------------------------------------------------------
# subcommands

def cmd_train(args):
    out = Path(args.out) if args.out else None
    start_iter, params, state = 0, None, None
    if args.resume:
        run_dir = Path(args.resume)
        cfg = json.loads((run_dir / "manifest.json").read_text())["config"]
        cfg = config_mod.apply_overrides(cfg, args.set)
        out = run_dir
        ansatz, params, ck = load_checkpoint(run_dir / "checkpoint")
        state = load_sampler_state(run_dir / "checkpoint")
        start_iter = int(ck["iteration"]) + 1
    else:
        cfg = _config(args)
        out = Path(cfg["output"])
        ansatz = config_mod.build_ansatz_from(cfg)
    model = config_mod.build_model(cfg)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "manifest.json", run_manifest(cfg, model, ansatz, "train"))
    result = train(model, ansatz, config_mod.build_sampler(cfg), config_mod.build_optimizer(cfg),
                   params=params, param_seed=cfg["seed"], state=state, start_iter=start_iter, out_dir=out,
                   time_budget=args.budget, clock="wall" if args.wall else "cpu")
    obs = measure(model, ansatz, result.params, config_mod.build_sampler(cfg), state=result.state.copy())
    obs.update(iterations=result.iterations, stopped_by_budget=result.stopped_by_budget, elapsed=result.elapsed)
    dump_json(out / "observables.json", obs)
    print(f"{out}: E = {obs['energy']:.8g} +- {obs['energy_err']:.2g}, V-score = {obs['v_score']:.3g}")
    return 0


def _single_run(cfg, out=None, budget=None, wall=False):
    model = config_mod.build_model(cfg)
    ansatz = config_mod.build_ansatz_from(cfg)
    result = train(model, ansatz, config_mod.build_sampler(cfg), config_mod.build_optimizer(cfg),
                   param_seed=cfg["seed"], out_dir=out, time_budget=budget, clock="wall" if wall else "cpu")
    return model, ansatz, result


SWEEP_HEADER = ("alpha", "J", "N", "q", "m2", "m2_err", "v_score", "energy", "status")


def cmd_sweep(args):
    cfg = _config(args)
    Js, alphas = parse_grid(args.J_grid), parse_grid(args.alpha_grid)
    if not Js or not alphas:
        raise ConfigError("sweep grids must be non-empty")
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / "sweep.csv"
    if table_path.exists():
        table_path.unlink()
    grid = np.full((len(alphas), len(Js)), np.nan)
    failures = 0
    for i, alpha in enumerate(alphas):
        for j, J in enumerate(Js):
            point = _with_model(cfg, alpha=alpha, J=J)
            q = order_wavevector(J)
            try:
                model, ansatz, result = _single_run(point)
                obs = measure(model, ansatz, result.params,
                              config_mod.build_sampler(point, seed=point["seed"] + 1), state=result.state)
                row = (alpha, J, model.n_sites, q, obs["m2"], obs["m2_err"], obs["v_score"], obs["energy"], "ok")
                grid[i, j] = obs["m2"]
            except NUMERICAL_ERRORS as exc:
                failures += 1
                log.warning("sweep point alpha=%g J=%g failed: %s", alpha, J, exc)
                row = (alpha, J, cfg["model"]["N"], q, float("nan"), float("nan"), float("nan"), float("nan"),
                       f"failed: {exc}")
            _append_rows(table_path, SWEEP_HEADER, [row])
    from .plots import heatmap
    heatmap(out / "sweep_m2.svg", alphas, Js, grid)
    model = config_mod.build_model(cfg)
    dump_json(out / "manifest.json", run_manifest(cfg, model, config_mod.build_ansatz_from(cfg), "sweep",
                                                  J_grid=Js, alpha_grid=alphas, failures=failures))
    print(f"{table_path}: {len(Js) * len(alphas)} points, {failures} failed")
    return 0


COMPARE_HEADER = ("J", "architecture", "density", "parameter_count", "iterations", "energy", "energy_err",
                  "v_score", "elapsed", "stopped_by_budget", "status")


def compare_architectures(cfg, densities):
    """(label, density, ansatz-config) for the ViT and one RBM per hidden-unit density."""
    vit = json.loads(json.dumps(cfg))
    vit["ansatz"] = {"type": "vit", "hyperparameters": cfg["ansatz"]["hyperparameters"]
                     if cfg["ansatz"]["type"] == "vit" else {}}
    out = [("vit", 0, config_mod.resolve(vit))]
    for d in densities:
        r = json.loads(json.dumps(cfg))
        r["ansatz"] = {"type": "rbm", "hyperparameters": {"density": d}}
        out.append((f"rbm{d}", d, config_mod.resolve(r)))
    return out


def cmd_compare(args):
    cfg = _config(args)
    if not args.budget > 0:
        raise ConfigError("budget must be > 0 seconds")
    Js = parse_grid(args.J_grid)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / "compare.csv"
    if table_path.exists():
        table_path.unlink()
    archs = compare_architectures(cfg, args.densities)
    curves = {label: ([], []) for label, _, _ in archs}
    counts = {}
    for J in Js:
        for label, density, acfg in archs:
            point = _with_model(acfg, J=J)
            ansatz = config_mod.build_ansatz_from(point)
            counts[label] = ansatz.parameter_count
            nan = float("nan")
            try:
                _, _, result = _single_run(point, budget=args.budget, wall=args.wall)
                last = result.trace[-1] if result.trace else {}
                row = (J, label, density, ansatz.parameter_count, result.iterations, last.get("energy", nan),
                       last.get("energy_err", nan), last.get("v_score", nan), float(result.elapsed),
                       result.stopped_by_budget, "ok")
            except NUMERICAL_ERRORS as exc:
                log.warning("compare point J=%g %s failed: %s", J, label, exc)
                row = (J, label, density, ansatz.parameter_count, 0, nan, nan, nan, nan, False, f"failed: {exc}")
            _append_rows(table_path, COMPARE_HEADER, [row])
            curves[label][0].append(J)
            curves[label][1].append(row[7])
    n = cfg["model"]["N"]
    vit = config_mod.build_ansatz_from(archs[0][2])
    better = {}
    for k, J in enumerate(Js):
        rbm_best = min((curves[l][1][k] for l, _, _ in archs[1:]), default=float("nan"))
        better[repr(J)] = bool(curves["vit"][1][k] < rbm_best)
    summary = {
        "parameter_counts": counts,
        "vit_breakdown": vit.layout.breakdown(),
        "reference_counts": {"vit": REFERENCE_VIT_PARAMETERS, "rbm1": RBM(n, density=1).parameter_count},
        "vit_lower_v_score_than_every_rbm": better,
        "budget_seconds": args.budget,
        "clock": "wall" if args.wall else "cpu",
    }
    dump_json(out / "compare_summary.json", summary)
    from .plots import lines
    lines(out / "compare_vscore.svg", {l: (np.array(x), np.array(y)) for l, (x, y) in curves.items()},
          ylabel="V-score", logy=True)
    model = config_mod.build_model(cfg)
    dump_json(out / "manifest.json", run_manifest(cfg, model, vit, "compare", J_grid=Js,
                                                  densities=list(args.densities), budget=args.budget))
    print(f"{table_path}: {len(Js)} J points x {len(archs)} architectures")
    return 0


def cmd_exact(args):
    cfg = _config(args)
    n = cfg["model"]["N"]
    if n > MAX_SITES:
        raise ConfigError(f"exact diagonalisation limited to N <= {MAX_SITES}, got N={n}")
    model = config_mod.build_model(cfg)
    sol = ground_state(model)
    q = order_wavevector(cfg["model"]["J"])
    report = {"N": n, "alpha": cfg["model"]["alpha"], "J": cfg["model"]["J"], "q": q,
              **exact_observables(sol, q, args.partition)}
    if args.checkpoint:
        ansatz, params, _ = load_checkpoint(args.checkpoint)
        lp = ansatz.log_psi(params, all_configurations(n))
        e_var = variational_energy(model, lp)
        psi = np.exp(lp - lp.max())
        psi /= np.linalg.norm(psi)
        report["checkpoint"] = {
            "path": str(args.checkpoint),
            "energy": e_var,
            "relative_energy_error": abs(e_var - sol.energy) / abs(sol.energy),
            "m2": float(np.sum(psi ** 2 * (all_configurations(n) @ phase_factors(n, q) / n) ** 2)),
            "renyi2": exact_renyi2(psi, n, args.partition),
        }
    text = json.dumps(report, indent=2, default=float)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_fssa(args):
    try:
        data = read_dataset(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    window = tuple(args.window) if args.window else None
    fit = fit_critical(data, args.guess, window=window, bootstrap=args.bootstrap, seed=args.seed or 0)
    norm = args.normalization if args.normalization else args.b + 2.0 * scipy.special.zeta(args.alpha)
    derived = derived_critical_quantities(fit.J_c, norm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {**fit.to_dict(), **derived, "normalization": norm, "input": str(args.input)}
    dump_json(out / "fit.json", report)
    _append_rows(out / "table.csv", ("J_c", "J_c_err", "h_tilde_c", "theta_c", "nu", "nu_err", "beta",
                                     "beta_err", "quality"),
                 [(fit.J_c, fit.J_c_err, derived["h_tilde_c"], derived["theta_c"], fit.nu, fit.nu_err, fit.beta,
                   fit.beta_err, fit.quality)])
    sub = data.window(*(window or (None, None)))
    write_collapsed(out / "collapsed.csv", sub, fit)
    from .plots import collapse
    collapse(out / "collapse.svg", collapsed_points(sub, fit),
             title=f"J_c={fit.J_c:.4g} nu={fit.nu:.3g} beta={fit.beta:.3g}")
    print(json.dumps(report, indent=2, default=float))
    return 0


OBSERVE_HEADER = ("J", "alpha", "N", "m2", "m2_err", "S2", "S2_err", "v_score")


def cmd_observe(args):
    run_dir = Path(args.run)
    try:
        cfg = json.loads((run_dir / "manifest.json").read_text())["config"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{run_dir}: not a run directory ({exc})") from exc
    cfg = config_mod.apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    model = config_mod.build_model(cfg)
    ansatz, params, _ = load_checkpoint(run_dir / "checkpoint")
    obs = measure(model, ansatz, params, config_mod.build_sampler(cfg, seed=cfg["seed"] + 1),
                  partition=args.partition)
    dump_json(run_dir / "observables.json", obs)
    m = cfg["model"]
    _append_rows(run_dir / "observables.csv", OBSERVE_HEADER,
                 [(m["J"], m["alpha"], m["N"], obs["m2"], obs["m2_err"], obs.get("renyi2", float("nan")),
                   obs.get("renyi2_err", float("nan")), obs["v_score"])])
    print(json.dumps(obs, indent=2, default=float))
    return 0


# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="vitqmc", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. model.N=10 (repeatable)")
        if out:
            sp.add_argument("--out", help="output directory (overrides config 'output')")

    t = sub.add_parser("train", help="optimise one ansatz with stochastic reconfiguration")
    common(t)
    t.add_argument("--resume", metavar="RUN_DIR", help="continue a run from its last checkpoint")
    t.add_argument("--budget", type=float, default=None, help="time budget in seconds")
    t.add_argument("--wall", action="store_true", help="budget counts wall-clock instead of CPU time")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="phase-diagram sweep over (alpha, J)")
    common(s)
    s.add_argument("--J-grid", required=True, dest="J_grid")
    s.add_argument("--alpha-grid", required=True, dest="alpha_grid")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="ViT against RBMs at a fixed time budget per J point")
    common(c)
    c.add_argument("--J-grid", required=True, dest="J_grid")
    c.add_argument("--budget", type=float, default=180.0, help="seconds per (J, architecture); default 180")
    c.add_argument("--wall", action="store_true", help="budget counts wall-clock instead of CPU time")
    c.add_argument("--densities", type=int, nargs="+", default=[1, 2, 4])
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("exact", help="exact-diagonalisation reference values")
    common(e)
    e.add_argument("--checkpoint", help="also evaluate this checkpoint exactly")
    e.add_argument("--partition", type=int, default=None, help="subsystem size for S_2 (default N/2)")
    e.set_defaults(func=cmd_exact)

    f = sub.add_parser("fssa", help="finite-size-scaling collapse of a CSV with columns N,J,value,error")
    f.add_argument("input")
    f.add_argument("--out", required=True)
    f.add_argument("--guess", type=float, nargs=3, required=True, metavar=("J_C", "NU", "BETA"))
    f.add_argument("--window", type=float, nargs=2, metavar=("J_LO", "J_HI"))
    f.add_argument("--alpha", type=float, default=6.0, help="decay exponent used for the normalisation")
    f.add_argument("--b", type=float, default=1.0, help="self-term weight used for the normalisation")
    f.add_argument("--normalization", type=float, default=None, help="explicit Kac normalisation")
    f.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for the errors")
    f.set_defaults(func=cmd_fssa)

    o = sub.add_parser("observe", help="measure observables of a trained run")
    o.add_argument("run", help="run directory written by 'train'")
    o.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    o.add_argument("--partition", type=int, default=None)
    o.set_defaults(func=cmd_observe)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_num_threads()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
