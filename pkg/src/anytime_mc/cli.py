"""Experiment runner.

Subcommands mirror the library's experiment surface: the two Gamma-study
validations, single-machine SMC, the simulated distributed runner, and a
Lorenz '96 dataset generator. Every run drops a config-echo JSON next to its
outputs; `replay <config.json>` reruns it and reproduces the CSVs byte for
byte. Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from anytime_mc import plot
from anytime_mc.diagnostics import GammaRef, wasserstein1
from anytime_mc.distsim import (ProcessorConfig, TimingModel, run_distributed,
                                wait_statistics)
from anytime_mc.gamma_study import (GammaStudyConfig, run_anytime_validation,
                                    run_multichain_validation)
from anytime_mc.models.integrator import StepSizeUnderflow
from anytime_mc.models.lgssm import (LgssmSpec, lgssm_exact_targets,
                                     lgssm_pseudomarginal_targets)
from anytime_mc.models.lorenz96 import (Lorenz96Spec, lorenz96_simulate_dataset,
                                        lorenz96_smc2_targets)
from anytime_mc.rng import stream
from anytime_mc.smc import (MoveConfig, ParticleCollapseError,
                            apportion_budget, run_smc)

# scale presets: flags left at None fall back to these
PRESETS = {
    "validate-anytime": {"desk": {"chains": 1 << 14},
                         "paper": {"chains": 1 << 18}},
    "validate-multichain": {"desk": {"chains": 1 << 14},
                            "paper": {"chains": 1 << 18}},
    "smc": {"desk": {"K": 128, "n_inner": 256},
            "paper": {"K": 1024, "n_inner": 1 << 20}},
    "dist": {"desk": {"K": 64, "n_inner": 256},
             "paper": {"K": 1024, "n_inner": 1 << 20}},
    "lorenz-data": {"desk": {}, "paper": {}},
}


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k]
                        for k in fieldnames])


def _echo_config(out, subcommand, params):
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump({"subcommand": subcommand, "params": params}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")


def _prepare(args, subcommand):
    params = {k: v for k, v in vars(args).items()
              if k not in ("func", "subcommand")}
    for key, val in PRESETS[subcommand][args.preset].items():
        if params.get(key) is None:
            params[key] = val
    os.makedirs(params["out"], exist_ok=True)
    _echo_config(params["out"], subcommand, params)
    return params


# -- gamma-study validations ---------------------------------------------------

def cmd_validate_anytime(args):
    params = _prepare(args, "validate-anytime")
    cfg = GammaStudyConfig(k=params["k"], theta=params["theta"],
                           rho=params["rho"], p_values=tuple(params["p"]),
                           replicates=params["chains"],
                           horizon=params["horizon"], seed=params["seed"])
    rows = run_anytime_validation(cfg)
    out = params["out"]
    _write_csv(os.path.join(out, "anytime.csv"),
               ["p", "t", "n_samples", "w1_alpha"], rows)
    for p in cfg.p_values:
        sub = [r for r in rows if r["p"] == p]
        plot.line_plot(os.path.join(out, f"anytime_p{p}.svg"),
                       [(f"p={p}", [r["t"] for r in sub],
                         [r["w1_alpha"] for r in sub])],
                       title="W1 to the length-biased law",
                       xlabel="virtual time", ylabel="W1", logy=True)
    return 0


def cmd_validate_multichain(args):
    params = _prepare(args, "validate-multichain")
    cfg = GammaStudyConfig(k=params["k"], theta=params["theta"],
                           rho=params["rho"], p_values=tuple(params["p"]),
                           replicates=params["chains"],
                           horizon=params["horizon"],
                           ensemble_sizes=tuple(params["sizes"]),
                           seed=params["seed"])
    for m in cfg.ensemble_sizes:
        if cfg.replicates % m:
            raise ValueError(f"chains must be divisible by ensemble size {m}")
    rows = run_multichain_validation(cfg)
    out = params["out"]
    _write_csv(os.path.join(out, "multichain.csv"),
               ["p", "K_plus_1", "t", "n_samples",
                "w1_uncorrected", "w1_corrected"], rows)
    # plateau fit against d1(alpha, pi) / (K+1), d1 from the quadrature oracle
    pi = cfg.target()
    fit = []
    for p in cfg.p_values:
        if p == 0:
            continue
        alpha = cfg.biased(p)
        upper = alpha.inv_cdf(1.0 - 1e-10)
        d1 = wasserstein1(alpha, pi, 0.0, float(upper), points=1 << 16)
        for m in cfg.ensemble_sizes:
            sub = [r["w1_uncorrected"] for r in rows
                   if r["p"] == p and r["K_plus_1"] == m
                   and 100 <= r["t"] <= cfg.horizon]
            plateau = float(np.mean(sub))
            pred = d1 / m
            fit.append({"p": p, "K_plus_1": m, "plateau": plateau,
                        "predicted": pred,
                        "rel_error": abs(plateau - pred) / pred})
    _write_csv(os.path.join(out, "plateau_fit.csv"),
               ["p", "K_plus_1", "plateau", "predicted", "rel_error"], fit)
    for p in cfg.p_values:
        series = []
        for m in cfg.ensemble_sizes:
            sub = [r for r in rows if r["p"] == p and r["K_plus_1"] == m]
            series.append((f"K+1={m} raw", [r["t"] for r in sub],
                           [r["w1_uncorrected"] for r in sub]))
        sub = [r for r in rows
               if r["p"] == p and r["K_plus_1"] == cfg.ensemble_sizes[-1]]
        series.append((f"K+1={cfg.ensemble_sizes[-1]} corrected",
                       [r["t"] for r in sub],
                       [r["w1_corrected"] for r in sub]))
        plot.line_plot(os.path.join(out, f"multichain_p{p}.svg"), series,
                       title="Pooled W1 to the target",
                       xlabel="virtual time", ylabel="W1", logy=True)
    return 0


# -- SMC runners ---------------------------------------------------------------

def _build_targets(params):
    seed = params["seed"]
    if params["model"] == "lgssm":
        spec = LgssmSpec().with_data(stream(seed, "lgssm", "data"))
        if params["variant"] == "exact":
            targets = lgssm_exact_targets(spec)
        else:
            targets = lgssm_pseudomarginal_targets(spec, M=params["m_inner"])
        return targets, spec, lambda s: s.a, "a"
    if params["model"] == "lorenz96":
        spec = Lorenz96Spec(rtol=1e-3, atol=1e-6).with_data(
            stream(seed, "l96", "data"))
        targets = lorenz96_smc2_targets(spec, n_inner=params["n_inner"],
                                        obs_floor=params["obs_floor"],
                                        crn_seed=stream(seed, "crn").integers(
                                            1 << 62))
        return targets, spec, lambda s: s.forcing, "F"
    raise ValueError(f"unknown model {params['model']!r}")


def _move_config(params, V):
    if params["mode"] == "fixed":
        return MoveConfig(mode="fixed", n_v=params["n_v"])
    sched = apportion_budget(params["budget"], V, params["schedule"],
                             params["c"])
    return MoveConfig(mode="anytime", schedule=sched, policy=params["policy"])


def _dump_posterior(out, system, extract, name):
    rows = [{"k": k, name: float(extract(p)),
             "log_weight": float(system.log_weights[k])}
            for k, p in enumerate(system.particles)]
    _write_csv(os.path.join(out, "posterior.csv"),
               ["k", name, "log_weight"], rows)


def cmd_smc(args):
    params = _prepare(args, "smc")
    targets, spec, extract, name = _build_targets(params)
    move = _move_config(params, targets.V)
    res = run_smc(targets, K=params["K"], move=move,
                  resampler=params["resampler"], seed=params["seed"])
    out = params["out"]
    _dump_posterior(out, res.system, extract, name)
    vals = np.array([extract(p) for p in res.system.particles])
    summary = {
        "config": params,
        "log_normalizer": res.log_normalizer,
        "posterior_mean": float(vals.mean()),
        "posterior_sd": float(vals.std()),
        "steps": res.records,
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _parse_contention(entries):
    """Each entry is proc:factor or proc:factor:start:end (end may be inf)."""
    windows = {}
    for e in entries or ():
        parts = e.split(":")
        if len(parts) not in (2, 4):
            raise ValueError(f"bad contention spec {e!r}")
        p, f = int(parts[0]), float(parts[1])
        a, b = (float(parts[2]), float(parts[3])) if len(parts) == 4 \
            else (0.0, math.inf)
        windows.setdefault(p, []).append((a, b, f))
    return windows


def cmd_dist(args):
    params = _prepare(args, "dist")
    targets, spec, extract, name = _build_targets(params)
    move = _move_config(params, targets.V)
    P = params["processors"]
    K = params["K"]
    shares = params["shares"] or [K // P] * P
    if sum(shares) != K:
        raise ValueError(f"shares {shares} do not sum to K={K}")
    contention = _parse_contention(params["contend"])
    procs = [ProcessorConfig(p, shares[p],
                             speed=params["speeds"][p] if params["speeds"]
                             else 1.0,
                             contention=tuple(contention.get(p, ())))
             for p in range(P)]
    res = run_distributed(targets, procs, move,
                          resampler=params["resampler"], seed=params["seed"],
                          timing=TimingModel())
    out = params["out"]
    _dump_posterior(out, res.system, extract, name)
    _write_csv(os.path.join(out, "profile.csv"),
               ["processor", "step", "phase", "start", "end"],
               [{"processor": r.processor, "step": r.step, "phase": r.phase,
                 "start": r.start, "end": r.end} for r in res.profile])
    plot.gantt_plot(os.path.join(out, "gantt.svg"), res.profile,
                    title=f"{params['mode']} moves, P={P}")
    vals = np.array([extract(p) for p in res.system.particles])
    summary = {
        "config": params,
        "log_normalizer": res.log_normalizer,
        "posterior_mean": float(vals.mean()),
        "posterior_sd": float(vals.std()),
        "wait": wait_statistics(res.profile),
        "steps": res.records,
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_lorenz_data(args):
    params = _prepare(args, "lorenz-data")
    spec = Lorenz96Spec(dim=params["dim"], f_true=params["f"],
                        n_obs=params["n_obs"])
    y, path = lorenz96_simulate_dataset(spec, stream(params["seed"],
                                                     "l96", "data"))
    out = params["out"]
    obs_rows = [{"t": (j + 1) * spec.obs_stride,
                 **{f"y{d + 1}": float(y[j, d])
                    for d in range(spec.n_obs_coords)}}
                for j in range(spec.n_obs)]
    _write_csv(os.path.join(out, "observations.csv"),
               ["t"] + [f"y{d + 1}" for d in range(spec.n_obs_coords)],
               obs_rows)
    path_rows = [{"t": (j + 1) * spec.obs_stride,
                  **{f"x{d + 1}": float(path[j, d])
                     for d in range(spec.dim)}}
                 for j in range(len(path))]
    _write_csv(os.path.join(out, "path.csv"),
               ["t"] + [f"x{d + 1}" for d in range(spec.dim)], path_rows)
    return 0


def cmd_replay(args):
    with open(args.config) as fh:
        echo = json.load(fh)
    params = dict(echo["params"])
    if args.out is not None:
        params["out"] = args.out
    ns = argparse.Namespace(**params)
    return COMMANDS[echo["subcommand"]](ns)


# -- parser ----------------------------------------------------------------

def _common(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="out")
    sp.add_argument("--preset", choices=("desk", "paper"), default="desk")


def _smc_flags(sp):
    sp.add_argument("--model", choices=("lgssm", "lorenz96"), default="lgssm")
    sp.add_argument("--variant", choices=("exact", "pseudomarginal"),
                    default="exact")
    sp.add_argument("--m-inner", dest="m_inner", type=int, default=64,
                    help="nested particles for the lgssm pseudomarginal variant")
    sp.add_argument("--n-inner", dest="n_inner", type=int, default=None,
                    help="nested particles for lorenz96")
    sp.add_argument("--obs-floor", dest="obs_floor", type=float, default=None)
    sp.add_argument("--K", type=int, default=None)
    sp.add_argument("--mode", choices=("fixed", "anytime"), default="fixed")
    sp.add_argument("--n-v", dest="n_v", type=int, default=10)
    sp.add_argument("--budget", type=float, default=300.0)
    sp.add_argument("--schedule", choices=("uniform", "linear"),
                    default="linear")
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--policy", choices=("fresh", "resume"), default="fresh")
    sp.add_argument("--resampler", default="systematic")


def build_parser():
    parser = argparse.ArgumentParser(prog="anytime-mc")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    sp = subs.add_parser("validate-anytime",
                         help="single-chain convergence to the biased law")
    sp.add_argument("--p", type=int, nargs="+", default=[0, 1, 2, 3])
    sp.add_argument("--chains", type=int, default=None)
    sp.add_argument("--horizon", type=int, default=200)
    sp.add_argument("--k", type=float, default=2.0)
    sp.add_argument("--theta", type=float, default=0.5)
    sp.add_argument("--rho", type=float, default=0.5)
    _common(sp)
    sp.set_defaults(func=cmd_validate_anytime)

    sp = subs.add_parser("validate-multichain",
                         help="length-bias correction across ensemble sizes")
    sp.add_argument("--p", type=int, nargs="+", default=[0, 1, 2, 3])
    sp.add_argument("--sizes", type=int, nargs="+",
                    default=[2, 4, 8, 16, 32])
    sp.add_argument("--chains", type=int, default=None)
    sp.add_argument("--horizon", type=int, default=200)
    sp.add_argument("--k", type=float, default=2.0)
    sp.add_argument("--theta", type=float, default=0.5)
    sp.add_argument("--rho", type=float, default=0.5)
    _common(sp)
    sp.set_defaults(func=cmd_validate_multichain)

    sp = subs.add_parser("smc", help="single-machine SMC on a named model")
    _smc_flags(sp)
    _common(sp)
    sp.set_defaults(func=cmd_smc)

    sp = subs.add_parser("dist", help="simulated distributed SMC")
    _smc_flags(sp)
    sp.add_argument("--processors", type=int, default=8)
    sp.add_argument("--shares", type=int, nargs="+", default=None)
    sp.add_argument("--speeds", type=float, nargs="+", default=None)
    sp.add_argument("--contend", nargs="+", default=None,
                    metavar="PROC:FACTOR[:START:END]")
    _common(sp)
    sp.set_defaults(func=cmd_dist)

    sp = subs.add_parser("lorenz-data", help="simulate a Lorenz '96 dataset")
    sp.add_argument("--f", type=float, default=4.8801)
    sp.add_argument("--dim", type=int, default=8)
    sp.add_argument("--n-obs", dest="n_obs", type=int, default=25)
    _common(sp)
    sp.set_defaults(func=cmd_lorenz_data)

    sp = subs.add_parser("replay", help="rerun from a config-echo JSON")
    sp.add_argument("config")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_replay)
    return parser


COMMANDS = {
    "validate-anytime": cmd_validate_anytime,
    "validate-multichain": cmd_validate_multichain,
    "smc": cmd_smc,
    "dist": cmd_dist,
    "lorenz-data": cmd_lorenz_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ParticleCollapseError, StepSizeUnderflow, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
