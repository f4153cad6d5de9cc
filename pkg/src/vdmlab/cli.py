"""Command-line entry point.

Every command writes its outputs plus a ``manifest.json`` into the output
directory. ``vdmlab --from-manifest DIR/manifest.json --out OTHER`` replays a
run from the resolved configuration recorded there.

Exit codes: 2 usage or parse error, 3 loss outside a VDM domain, 4 failed
check, 5 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io
from .checks import run_suite
from .config import ConfigError, load_config
from .errors import DomainError, InvalidSpec
from .experiments import ESCAPE_DEMOS, run_eigen_montecarlo, run_escape_demo, run_lr_equivalence_sweep
from .mlp import MlpSpec, TrainConfig, load_weights, make_dataset, save_weights, scan_trained, train
from .optim import Method
from .surfaces import SURFACES, get_surface
from .analysis import direction_scan
from .vdm import derivative_curve, parse_spec

EXIT_USAGE, EXIT_DOMAIN, EXIT_CHECK, EXIT_IO = 2, 3, 4, 5


class CheckFailed(Exception):
    pass


def _floats(text):
    return [float(t) for t in text.split(",")]


# -- vdm-plot ---------------------------------------------------------------

def resolve_vdm_plot(args):
    return {"spec": parse_spec(args.spec).to_string(), "from": args.lo, "to": args.hi, "n": args.n}


def execute_vdm_plot(cfg, out, threads):
    spec = parse_spec(cfg["spec"])
    grid = np.linspace(cfg["from"], cfg["to"], cfg["n"]) if cfg["n"] > 1 else np.array([cfg["from"]])
    rows = [(x, spec.value(x), d) for x, d in derivative_curve(spec, grid.tolist())]
    io.write_csv(out / "vdm_curve.csv", ["loss", "delta", "ddelta_dloss"], rows)
    return ["vdm_curve.csv"]


# -- simulate ----------------------------------------------------------------

def resolve_simulate(args):
    setup = ESCAPE_DEMOS[args.variant]
    return {
        "variant": args.variant,
        "vdm": parse_spec(args.vdm).to_string() if args.vdm else setup.vdm.to_string(),
        "lr": args.lr if args.lr is not None else setup.config.lr,
        "steps": args.steps if args.steps is not None else setup.config.max_steps,
        "p0": _floats(args.p0) if args.p0 else list(setup.p0),
    }


def execute_simulate(cfg, out, threads):
    demo = run_escape_demo(cfg["variant"], parse_spec(cfg["vdm"]), cfg["lr"], cfg["steps"], cfg["p0"])
    demo.original.to_csv(out / "original.csv")
    demo.deformed.to_csv(out / "deformed.csv")
    io.write_json(out / "endpoints.json", demo.summary())
    return ["original.csv", "deformed.csv", "endpoints.json"]


# -- montecarlo --------------------------------------------------------------

def resolve_montecarlo(args):
    return {"n": args.n, "seed": args.seed, "vdm": parse_spec(args.vdm).to_string()}


def execute_montecarlo(cfg, out, threads):
    report = run_eigen_montecarlo(cfg["n"], cfg["seed"], parse_spec(cfg["vdm"]), threads=threads)
    report.to_csv(out / "montecarlo.csv")
    io.write_json(out / "montecarlo.json", report.to_json())
    return ["montecarlo.csv", "montecarlo.json"]


# -- sweep -------------------------------------------------------------------

def resolve_sweep(args):
    return {
        "surface": get_surface(args.surface).name,
        "multipliers": _floats(args.multipliers),
        "vdms": [parse_spec(v).to_string() for v in args.vdms.split(";") if v.strip()],
        "n_inits": args.n_inits,
        "seed": args.seed,
    }


def execute_sweep(cfg, out, threads):
    result = run_lr_equivalence_sweep(
        get_surface(cfg["surface"]), cfg["multipliers"], [parse_spec(v) for v in cfg["vdms"]],
        cfg["n_inits"], cfg["seed"], threads=threads,
    )
    result.to_csv(out / "sweep.csv")
    return ["sweep.csv"]


# -- train -------------------------------------------------------------------

def resolve_train(args):
    cfg = load_config(args.config)
    if args.vdm:
        cfg["train"]["vdm"] = args.vdm
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.seed_given:
        cfg["train"]["seed"] = args.seed
    cfg["train"]["vdm"] = parse_spec(cfg["train"]["vdm"]).to_string()
    return cfg


def _build_training(cfg):
    m, d, t = cfg["model"], cfg["data"], cfg["train"]
    spec = MlpSpec(tuple(m["widths"]), m["init"])
    dataset = make_dataset(d["generator"], d["n_train"], d["n_test"], d["noise"], d["seed"])
    tc = TrainConfig(
        t["batch_size"], t["epochs"], t["lr"], t["momentum"], Method(t["method"]),
        tuple(t["milestones"]), t["gamma"], parse_spec(t["vdm"]), t["seed"],
    )
    return spec, dataset, tc


def execute_train(cfg, out, threads):
    spec, dataset, tc = _build_training(cfg)
    result = train(spec, dataset, tc)
    result.log_to_csv(out / "train_log.csv")
    save_weights(out / "weights.bin", spec, result.weights)
    io.write_json(out / "train_status.json", {"status": result.status, "message": result.message})
    if result.status == "domain_error":
        raise DomainError(result.message)
    return ["train_log.csv", "weights.bin", "train_status.json"]


# -- scan --------------------------------------------------------------------

def resolve_scan(args):
    cfg = {"seed": args.seed, "alpha_max": args.alpha_max, "n": args.n}
    if args.weights:
        cfg.update(weights=str(Path(args.weights).resolve()), data=load_config(args.config)["data"])
    elif args.surface:
        cfg.update(surface=get_surface(args.surface).name, point=_floats(args.point), normalization=args.normalization)
    else:
        raise ConfigError("scan needs --weights (with --config) or --surface with --point")
    return cfg


def execute_scan(cfg, out, threads):
    if "weights" in cfg:
        spec, weights = load_weights(cfg["weights"])
        d = cfg["data"]
        dataset = make_dataset(d["generator"], d["n_train"], d["n_test"], d["noise"], d["seed"])
        curve = scan_trained(weights, spec, dataset, cfg["seed"], cfg["alpha_max"], cfg["n"])
    else:
        surface = get_surface(cfg["surface"])
        curve = direction_scan(surface, surface.check(cfg["point"]), cfg["seed"], cfg["normalization"], cfg["alpha_max"], cfg["n"])
    curve.to_csv(out / "scan.csv")
    return ["scan.csv"]


# -- check -------------------------------------------------------------------

def resolve_check(args):
    return {"suite": args.suite}


def execute_check(cfg, out, threads):
    results = run_suite(cfg["suite"])
    for r in results:
        print(r.line())
    reports = []
    for r in results:
        for item in r.reports:
            rep = item[-1].to_json()
            rep["suite"] = r.name
            rep["labels"] = list(item[:-1])
            reports.append(rep)
        if not r.reports:
            reports.append({"check": r.name, "point": None, "lhs": None, "rhs": None, "residual": None,
                            "pass": r.passed, "detail": r.detail})
    name = f"check_{cfg['suite']}.json"
    io.write_json(out / name, reports)
    if not all(r.passed for r in results):
        raise CheckFailed(f"{sum(not r.passed for r in results)} check(s) failed")
    return [name]


COMMANDS = {
    "vdm-plot": (resolve_vdm_plot, execute_vdm_plot),
    "simulate": (resolve_simulate, execute_simulate),
    "montecarlo": (resolve_montecarlo, execute_montecarlo),
    "sweep": (resolve_sweep, execute_sweep),
    "train": (resolve_train, execute_train),
    "scan": (resolve_scan, execute_scan),
    "check": (resolve_check, execute_check),
}


class _SeedAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.seed_given = True


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, action=_SeedAction, help="master seed (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: $VDMLAB_OUT or ./out)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads; outputs do not depend on it")

    parser = argparse.ArgumentParser(prog="vdmlab", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--from-manifest", metavar="PATH", help="replay the run recorded in a manifest")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("vdm-plot", parents=[common], help="tabulate a VDM and its derivative")
    p.add_argument("--spec", required=True, help="identity | scale:c | ap:a1,a2,a3,a4 | le:e1,e2 | halfsq")
    p.add_argument("--from", dest="lo", type=float, default=0.0)
    p.add_argument("--to", dest="hi", type=float, default=5.0)
    p.add_argument("--n", type=int, default=501)

    p = sub.add_parser("simulate", parents=[common], help="two-parameter escape demos")
    p.add_argument("--variant", choices=sorted(ESCAPE_DEMOS), required=True)
    p.add_argument("--vdm", help="override the deformed arm's VDM")
    p.add_argument("--lr", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--p0", help="start point, e.g. -6,11")

    p = sub.add_parser("montecarlo", parents=[common], help="paired Hessian-eigenvalue Monte Carlo")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--vdm", default="le:1,0.99")

    p = sub.add_parser("sweep", parents=[common], help="constant learning-rate multipliers vs VDMs")
    p.add_argument("--surface", default="eig-round", choices=sorted(SURFACES))
    p.add_argument("--multipliers", default="0.5,1,2")
    p.add_argument("--vdms", default="le:1,0.99;scale:2", help="semicolon-separated VDM specs")
    p.add_argument("--n-inits", type=int, default=20)

    p = sub.add_parser("train", parents=[common], help="train the toy MLP")
    p.add_argument("--config", help="INI file with [model], [data], [train] sections")
    p.add_argument("--vdm")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("scan", parents=[common], help="1D loss scan along a seeded direction")
    p.add_argument("--weights", help="weights file written by train")
    p.add_argument("--config", help="training config naming the dataset")
    p.add_argument("--surface", choices=sorted(SURFACES))
    p.add_argument("--point")
    p.add_argument("--normalization", default="whole-vector", choices=["none", "whole-vector", "filter"])
    p.add_argument("--alpha-max", type=float, default=1.0)
    p.add_argument("--n", type=int, default=51)

    p = sub.add_parser("check", parents=[common], help="theorem and gradient verification suites")
    p.add_argument("--suite", choices=["theorem1", "theorem2", "gradcheck", "all"], default="all")
    return parser


def _run(command, cfg, out, threads, seed):
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    outputs = COMMANDS[command][1](cfg, out, threads)
    manifest = {
        "subcommand": command,
        "config": cfg,
        "seed": seed,
        "version": __version__,
        "outputs": outputs,
        "duration_s": time.perf_counter() - start,
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = getattr(args, "seed_given", False)
    seed = getattr(args, "seed", 0)
    args.seed = seed
    threads = max(1, getattr(args, "threads", 1))
    out_arg = getattr(args, "out", None)
    out = Path(out_arg) if out_arg else io.output_dir("out")
    try:
        if args.from_manifest:
            with open(args.from_manifest, encoding="utf-8") as fh:
                recorded = json.load(fh)
            command, cfg, seed = recorded["subcommand"], recorded["config"], recorded.get("seed", 0)
            if command not in COMMANDS:
                raise ConfigError(f"manifest names unknown command {command!r}")
        elif args.command:
            command = args.command
            cfg = COMMANDS[command][0](args)
        else:
            parser.print_usage(sys.stderr)
            print("vdmlab: error: a command or --from-manifest is required", file=sys.stderr)
            return EXIT_USAGE
        cfg = io.jsonable(cfg)
        _run(command, cfg, out, threads, seed)
    except DomainError as exc:
        print(f"vdmlab: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except CheckFailed as exc:
        print(f"vdmlab: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (InvalidSpec, ConfigError, KeyError, ValueError) as exc:
        print(f"vdmlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"vdmlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
