"""Command line entry point ``scatter``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .. import bounds as bnd
from ..coherence import (
    farfield_coherence_analytic, mutual_coherence, perturbation_coherence_bound,
    product_coherence_bound,
)
from ..errors import ConfigError, InvalidArgumentError, PreconditionError, ScatterError
from ..forward import add_noise, assemble_V, forward_full, read_measurement, write_measurement
from ..iht import IHTConfig, reconstruct
from .config import DESK, EXPERIMENT_IDS, PAPER, ExperimentConfig, format_order, load_config, preset
from .models import ScattererModel
from .runners import run_experiment, setup

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _config(args, experiment="custom") -> ExperimentConfig:
    data = load_config(args.config) if args.config else {}
    data.setdefault("experiment", experiment)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out_dir is not None:
        data["out_dir"] = args.out_dir
    return ExperimentConfig.from_dict(data)


def _out_dir(cfg):
    out = cfg.out_dir or "."
    os.makedirs(out, exist_ok=True)
    return out


def _truth(cfg, grid):
    """Ground-truth potential: ``params.model`` if given, else random voxels."""
    spec = dict(cfg.params.get("model") or {"kind": "random-voxels", "s": cfg.sparsity[0],
                                              "seed": cfg.seed})
    kind = spec.pop("kind", None)
    spec.setdefault("eta0", cfg.eta0[0])
    return ScattererModel(kind, spec).build(grid)


def cmd_forward(args):
    cfg = _config(args)
    grid, A, B, G = setup(cfg, cfg.data_n_per_side or cfg.n_per_side)
    pot = _truth(cfg, grid)
    Y = forward_full(A, assemble_V(pot), G, B)
    meas = add_noise(Y, cfg.noise_level, cfg.seed)
    path = os.path.join(_out_dir(cfg), "measurement.txt")
    write_measurement(path, meas)
    print(f"wrote {path} ({meas.shape[0]}x{meas.shape[1]}, support {pot.sparsity})")


def cmd_reconstruct(args):
    cfg = _config(args)
    grid, A, B, G = setup(cfg)
    truth = None
    if args.data:
        Y = read_measurement(args.data).data
    else:
        data_grid, A_d, B_d, G_d = setup(cfg, cfg.data_n_per_side or cfg.n_per_side)
        pot = _truth(cfg, data_grid)
        Y = add_noise(forward_full(A_d, assemble_V(pot), G_d, B_d), cfg.noise_level, cfg.seed).data
        if data_grid.n_voxels == grid.n_voxels:
            truth = assemble_V(pot)
    if Y.shape != (A.shape[0], B.shape[1]):
        raise ConfigError(f"data shape {Y.shape} does not match {cfg.n_meas}x{cfg.n_src} directions")
    thr = cfg.threshold or cfg.sparsity[0]
    out = _out_dir(cfg)
    for M in cfg.born_orders:
        tr = reconstruct(A, B, G, Y, IHTConfig(thr, M, cfg.iterations), truth=truth)
        path = os.path.join(out, f"trace_M{format_order(M)}.csv")
        tr.to_csv(path)
        print(f"M={format_order(M)}: final Y_err={tr.y_errs[-1]:.6g} -> {path}")


def cmd_coherence(args):
    cfg = _config(args)
    grid, A, B, _ = setup(cfg)
    rep = mutual_coherence(A)
    rep.add_bound("sinc(kh)", farfield_coherence_analytic(grid.kh))
    p = cfg.params
    s = cfg.sparsity[0]
    if "mu_H" in p:
        val = product_coherence_bound(p["mu_H"], rep.mu_exact, s)
        rep.add_bound("product", val, val >= 1.0)
    if "delta" in p:
        perturbation_coherence_bound(p["delta"], s, rep.mu_exact, report=rep)
    path = os.path.join(_out_dir(cfg), "coherence.json")
    rep.to_json(path)
    print(rep.to_json())


_BOUND_KEYS = ("mu_A", "mu_Bstar", "s", "delta", "gamma", "delta_n", "gamma_n", "v_inf", "v0_err",
               "noise_term", "n_iter")


def cmd_bounds(args):
    cfg = _config(args)
    p = dict(cfg.params)
    try:
        inp = bnd.BoundInputs(**{k: p[k] for k in _BOUND_KEYS if k in p})
    except TypeError as exc:
        raise ConfigError(f"bounds need params mu_A, mu_Bstar, s: {exc}") from None
    out = _out_dir(cfg)
    traces = []
    for fn in (bnd.linear_bound, bnd.second_born_bound, bnd.full_nonlinear_bound):
        try:
            t = fn(inp)
        except PreconditionError as exc:
            print(f"{fn.__name__}: skipped ({exc})")
            continue
        t.to_csv(os.path.join(out, f"bound_{t.name}.csv"))
        traces.append(t)
    report = bnd.constants_report(inp, traces)
    if "delta_2s" in p:
        report["rip"] = bnd.rip_constants(p["delta_2s"], p.get("rip_gamma", inp.gamma), inp.v_inf)._asdict()
    text = json.dumps(report, indent=2, default=lambda x: str(x))
    with open(os.path.join(out, "bounds.json"), "w") as fh:
        fh.write(text + "\n")
    print(text)


def cmd_experiment(args):
    overrides = load_config(args.config) if args.config else {}
    overrides.pop("experiment", None)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    cfg = preset(args.id, args.scale, overrides)
    if cfg.out_dir is None:
        cfg = cfg.replace(out_dir=os.path.join("results", args.id))
    res = run_experiment(cfg)
    print(json.dumps({"experiment": res.experiment, "out_dir": cfg.out_dir, "files": res.files},
                     indent=2))


def build_parser():
    ap = argparse.ArgumentParser(prog="scatter", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out-dir", dest="out_dir", help="output directory")
        p.add_argument("--scale", choices=(PAPER, DESK), default=DESK, help="preset scale")

    p = sub.add_parser("forward", help="simulate far-field data")
    common(p)
    p.set_defaults(func=cmd_forward)
    p = sub.add_parser("reconstruct", help="run IHT for each configured Born order")
    common(p)
    p.add_argument("--data", help="measurement file written by 'scatter forward'")
    p.set_defaults(func=cmd_reconstruct)
    p = sub.add_parser("coherence", help="coherence report for the configured geometry")
    common(p)
    p.set_defaults(func=cmd_coherence)
    p = sub.add_parser("bounds", help="evaluate convergence bounds from params")
    common(p)
    p.set_defaults(func=cmd_bounds)
    p = sub.add_parser("experiment", help="run a named study")
    p.add_argument("id", choices=EXPERIMENT_IDS)
    common(p)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScatterError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
