"""Command-line entry point: gen, fit, cv, eval, toymap.

Configuration is a single nested document (see DEFAULT_CONFIG).  Precedence is
command-line flags over config-file values over defaults; unknown keys in a
config file are rejected.  Every command writes the fully resolved config next
to its outputs so any run can be replayed, and all outputs are deterministic
given the config (wall-clock fields in traces and summaries excepted).

Exit codes: 0 success, 2 usage or config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import CsvParseError, DegenerateDataError, HkrrError
from .kernel import KernelConfig
from .modelsel import (CVGrid, cross_validate, init_candidates, mse, r2)
from .objective import (DEFAULT_JITTER, HyperModel, NystromObjective, SampleSet,
                        predict, uniform_centers)
from .optim import BacktrackConfig, FitConfig, agd_fit, varpro_fit
from .synthdata import GenSpec, gen_metadata, generate, read_csv, write_csv
from .toy2d import DEFAULT_BASIN_TOL, basin_map, trajectory

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

DEFAULT_CONFIG = {
    "seed": 0,
    "gen": {
        "dataset": "ds1", "D": 20, "d_star": 2, "m": 1000, "noise_ratio": 0.01,
    },
    "fit": {
        "algorithm": "agd", "d": 2, "m_tilde": 50, "lambda": 1e-7,
        "n_candidates": 10, "jitter": DEFAULT_JITTER,
        "max_iter": 2000, "n_alpha": 10, "grad_tol": 1e-8,
        "time_budget_ms": None, "alpha_step": "linesearch",
        "val_fraction": 0.2,
        "bt_u": {"rho": 0.5, "delta": 0.95, "c": 1e-4, "s_init": 0.1,
                 "s_max": 1e6, "max_shrinks": 60},
        "bt_v": {"rho": 0.5, "delta": 1.0, "c": 1e-4, "s_init": 0.05,
                 "s_max": 1e6, "max_shrinks": 60},
    },
    "cv": {
        "d_values": [2], "lambda_min": 1e-8, "lambda_max": 1e-2, "n_lambdas": 7,
        "jobs": 1,
    },
    "toymap": {
        "variant": "square", "x_range": [-3.0, 3.0], "y_range": [-3.0, 3.0],
        "resolution": 50, "tol": DEFAULT_BASIN_TOL, "jobs": 1,
        "trajectories": [],
    },
}


class ConfigError(ValueError):
    pass


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge_config(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return _merge_config(DEFAULT_CONFIG, doc)


def _apply_flag(cfg: dict, dotted: str, value) -> None:
    if value is None:
        return
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node[p]
    node[parts[-1]] = value


def _default_seed() -> int | None:
    env = os.environ.get("HKRR_SEED")
    return int(env) if env else None


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit_config(out_dir: Path, cfg: dict) -> None:
    _write_json(out_dir / "config.json", cfg)


def _fit_config_from(cfg_fit: dict, algorithm=None) -> FitConfig:
    return FitConfig(
        algorithm=algorithm or cfg_fit["algorithm"],
        n_alpha=int(cfg_fit["n_alpha"]),
        max_iter=int(cfg_fit["max_iter"]),
        time_budget_ms=cfg_fit["time_budget_ms"],
        grad_tol=float(cfg_fit["grad_tol"]),
        bt_u=BacktrackConfig(**cfg_fit["bt_u"]),
        bt_v=BacktrackConfig(**cfg_fit["bt_v"]),
        alpha_step=cfg_fit["alpha_step"],
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    for dotted, val in [("seed", args.seed), ("gen.dataset", args.dataset),
                        ("gen.D", args.D), ("gen.d_star", args.d_star),
                        ("gen.m", args.m), ("gen.noise_ratio", args.noise_ratio)]:
        _apply_flag(cfg, dotted, val)
    g = cfg["gen"]
    spec = GenSpec(dataset=g["dataset"], dim=int(g["D"]), d_star=int(g["d_star"]),
                   m=int(g["m"]), seed=int(cfg["seed"]),
                   noise_ratio=float(g["noise_ratio"]))
    data, b_true = generate(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "dataset.csv"
    meta_path = out / "dataset.meta.json"
    write_csv(data, csv_path)
    _write_json(meta_path, gen_metadata(spec, b_true))
    _emit_config(out, cfg)
    print(csv_path)
    print(meta_path)
    return EXIT_OK


def _holdout(data: SampleSet, frac: float, seed: int):
    # Internal split used only to score init candidates; the fit itself runs
    # on the full training set.
    from .rng import substream
    m = data.m
    n_val = max(1, int(frac * m))
    if n_val >= m:
        raise ConfigError("validation fraction leaves no training rows")
    perm = substream(seed, "fit-valsplit").permutation(m)
    return data.subset(perm[n_val:]), data.subset(perm[:n_val])


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    for dotted, val in [("seed", args.seed), ("fit.algorithm", args.algorithm),
                        ("fit.d", args.d), ("fit.m_tilde", args.m_tilde),
                        ("fit.lambda", getattr(args, "lam", None)),
                        ("fit.max_iter", args.max_iter), ("fit.n_alpha", args.n_alpha),
                        ("fit.grad_tol", args.grad_tol),
                        ("fit.time_budget_ms", args.time_budget_ms),
                        ("fit.alpha_step", args.alpha_step),
                        ("fit.n_candidates", args.n_candidates)]:
        _apply_flag(cfg, dotted, val)
    if args.algorithm == "varpro" and args.n_alpha is not None:
        print("warning: --n-alpha is ignored by varpro", file=sys.stderr)

    f = cfg["fit"]
    seed = int(cfg["seed"])
    train_full = read_csv(args.train)
    if args.val:
        score_train, score_val = train_full, read_csv(args.val)
    else:
        score_train, score_val = _holdout(train_full, float(f["val_fraction"]), seed)

    m_tilde = min(int(f["m_tilde"]), train_full.m)
    lam = float(f["lambda"])
    center_idx = uniform_centers(train_full.m, m_tilde, seed)
    center_x = train_full.x[center_idx]

    init = init_candidates(score_train, score_val, center_x, int(f["d"]),
                           n_candidates=int(f["n_candidates"]), lambda0=lam,
                           seed=seed, jitter=float(f["jitter"]))
    fit_cfg = _fit_config_from(f)
    obj = NystromObjective(train_full, center_x, KernelConfig(gamma=init.gamma0),
                           lam, jitter=float(f["jitter"]))
    if fit_cfg.algorithm == "varpro":
        b, alpha, trace = varpro_fit(obj, init.b0, fit_cfg)
    else:
        b, alpha, trace = agd_fit(obj, init.b0, np.zeros(m_tilde), fit_cfg)

    trunc_m = float(np.max(np.abs(train_full.y)))
    model = HyperModel(b=b, center_x=center_x, alpha=alpha,
                       kernel=KernelConfig(gamma=init.gamma0), lam=lam,
                       trunc_m=trunc_m,
                       center_indices=tuple(int(i) for i in center_idx))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "model.json", model.to_dict())
    trace.write_csv(out / "trace.csv")
    _write_json(out / "summary.json", {
        "algorithm": trace.algorithm,
        "final_loss": trace.final_loss,
        "initial_loss": trace.initial_loss,
        "iterations": trace.n_iterations,
        "termination": trace.termination,
        "stalled": trace.stalled,
        "gamma": init.gamma0,
        "lambda": lam,
        "m_tilde": m_tilde,
        "wall_ms": trace.wall_ms_total,
    })
    _emit_config(out, cfg)
    print(out / "model.json")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = load_config(args.config)
    for dotted, val in [("seed", args.seed), ("fit.algorithm", args.algorithm),
                        ("fit.m_tilde", args.m_tilde),
                        ("fit.max_iter", args.max_iter),
                        ("fit.n_alpha", args.n_alpha),
                        ("fit.n_candidates", args.n_candidates),
                        ("cv.lambda_min", args.lambda_min),
                        ("cv.lambda_max", args.lambda_max),
                        ("cv.n_lambdas", args.n_lambdas),
                        ("cv.jobs", args.jobs)]:
        _apply_flag(cfg, dotted, val)
    if args.d_values is not None:
        cfg["cv"]["d_values"] = [int(v) for v in args.d_values.split(",")]

    train = read_csv(args.train)
    val = read_csv(args.val)
    grid = CVGrid(d_values=tuple(cfg["cv"]["d_values"]),
                  lambda_min=float(cfg["cv"]["lambda_min"]),
                  lambda_max=float(cfg["cv"]["lambda_max"]),
                  n_lambdas=int(cfg["cv"]["n_lambdas"]))
    f = cfg["fit"]
    result = cross_validate(train, val, grid, _fit_config_from(f),
                            m_tilde=min(int(f["m_tilde"]), train.m),
                            seed=int(cfg["seed"]),
                            n_candidates=int(f["n_candidates"]),
                            jobs=int(cfg["cv"]["jobs"]),
                            jitter=float(f["jitter"]))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "cv_table.csv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("d,lambda,val_mse,val_r2,gamma,iterations,final_loss,termination,error\n")
        for c in result.rows:
            err = "" if c.error is None else c.error.replace(",", ";")
            fh.write(f"{c.d},{c.lam!r},{c.val_mse!r},{c.val_r2!r},{c.gamma!r},"
                     f"{c.n_iterations},{c.final_loss!r},{c.termination},{err}\n")
    _write_json(out / "model.json", result.model.to_dict())
    _write_json(out / "selected.json", {
        "d": result.selected_d, "lambda": result.selected_lambda,
        "val_mse": result.row(result.selected_d, result.selected_lambda).val_mse,
        "trunc_m": result.trunc_m,
    })
    _emit_config(out, cfg)
    print(table)
    print(out / "model.json")
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fh:
        model = HyperModel.from_dict(json.load(fh))
    data = read_csv(args.data)
    if data.dim != model.b.shape[1]:
        raise ConfigError(
            f"model expects dimension {model.b.shape[1]}, data has {data.dim}")
    pred = predict(model, data.x)
    payload = {"mse": mse(pred, data.y), "r2": r2(pred, data.y), "m_test": data.m}
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "eval.json", payload)
        _write_json(out / "config.json", {"model": str(args.model), "data": str(args.data)})
    return EXIT_OK


def cmd_toymap(args) -> int:
    cfg = load_config(args.config)
    for dotted, val in [("toymap.variant", args.variant),
                        ("toymap.resolution", args.resolution),
                        ("toymap.tol", args.tol), ("toymap.jobs", args.jobs),
                        ("fit.max_iter", args.max_iter)]:
        _apply_flag(cfg, dotted, val)
    if args.x_range is not None:
        cfg["toymap"]["x_range"] = [float(v) for v in args.x_range.split(",")]
    if args.y_range is not None:
        cfg["toymap"]["y_range"] = [float(v) for v in args.y_range.split(",")]
    if args.trajectory:
        cfg["toymap"]["trajectories"] = [
            [float(v) for v in spec.split(",")] for spec in args.trajectory]
    t = cfg["toymap"]
    if len(t["x_range"]) != 2 or len(t["y_range"]) != 2:
        raise ConfigError("ranges must be given as lo,hi")
    for traj in t["trajectories"]:
        if len(traj) != 2:
            raise ConfigError("trajectories must be given as x0,y0")

    fit_cfg = _fit_config_from(cfg["fit"])
    bm = basin_map(t["variant"], t["x_range"], t["y_range"], int(t["resolution"]),
                   fit_cfg=fit_cfg, tol=float(t["tol"]), jobs=int(t["jobs"]))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    basin_path = out / "basin.csv"
    with open(basin_path, "w", encoding="utf-8") as fh:
        fh.write("x0,y0,code\n")
        for x0, y0, code in bm.iter_cells():
            fh.write(f"{x0!r},{y0!r},{code}\n")
    _write_json(out / "basin.meta.json", {
        "variant": t["variant"], "x_range": t["x_range"], "y_range": t["y_range"],
        "resolution": int(t["resolution"]), "tol": float(t["tol"]),
        "fractions": bm.fractions(),
    })
    for i, (x0, y0) in enumerate(t["trajectories"]):
        for algo in ("varpro", "agd"):
            path = trajectory(t["variant"], x0, y0, algo, fit_cfg)
            with open(out / f"trajectory_{i}_{algo}.csv", "w", encoding="utf-8") as fh:
                fh.write("iter,x,y,f\n")
                for it, x, y, fval in path:
                    fh.write(f"{it},{x!r},{y!r},{fval!r}\n")
    _emit_config(out, cfg)
    print(basin_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkrr", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="JSON config file (defaults + overrides)")
        sp.add_argument("--seed", type=int, default=_default_seed(),
                        help="seed (env HKRR_SEED overrides the default)")
        sp.add_argument("--out", required=True, help="output directory")

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    add_common(g)
    g.add_argument("--dataset", choices=["ds1", "ds2"])
    g.add_argument("--D", type=int)
    g.add_argument("--d-star", dest="d_star", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--noise-ratio", dest="noise_ratio", type=float)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit one model on a training CSV")
    add_common(f)
    f.add_argument("--train", required=True)
    f.add_argument("--val", help="validation CSV for init scoring (default: internal holdout)")
    f.add_argument("--algorithm", choices=["varpro", "agd"])
    f.add_argument("--d", type=int)
    f.add_argument("--m-tilde", dest="m_tilde", type=int)
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--max-iter", dest="max_iter", type=int)
    f.add_argument("--n-alpha", dest="n_alpha", type=int)
    f.add_argument("--grad-tol", dest="grad_tol", type=float)
    f.add_argument("--time-budget-ms", dest="time_budget_ms", type=float)
    f.add_argument("--alpha-step", dest="alpha_step", choices=["linesearch", "lipschitz"])
    f.add_argument("--n-candidates", dest="n_candidates", type=int)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("cv", help="cross-validate over the (d, lambda) grid")
    add_common(c)
    c.add_argument("--train", required=True)
    c.add_argument("--val", required=True)
    c.add_argument("--d-values", help="comma-separated latent dimensions")
    c.add_argument("--lambda-min", dest="lambda_min", type=float)
    c.add_argument("--lambda-max", dest="lambda_max", type=float)
    c.add_argument("--n-lambdas", dest="n_lambdas", type=int)
    c.add_argument("--algorithm", choices=["varpro", "agd"])
    c.add_argument("--m-tilde", dest="m_tilde", type=int)
    c.add_argument("--max-iter", dest="max_iter", type=int)
    c.add_argument("--n-alpha", dest="n_alpha", type=int)
    c.add_argument("--n-candidates", dest="n_candidates", type=int)
    c.add_argument("--jobs", type=int)
    c.set_defaults(func=cmd_cv)

    e = sub.add_parser("eval", help="evaluate a model JSON on a dataset CSV")
    e.add_argument("--config", help=argparse.SUPPRESS)
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="optional output directory for eval.json")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("toymap", help="convergence map of the 2D toy landscapes")
    add_common(t)
    t.add_argument("--variant", choices=["square", "sigmoid"])
    t.add_argument("--x-range", dest="x_range", help="lo,hi")
    t.add_argument("--y-range", dest="y_range", help="lo,hi")
    t.add_argument("--resolution", type=int)
    t.add_argument("--tol", type=float)
    t.add_argument("--jobs", type=int)
    t.add_argument("--max-iter", dest="max_iter", type=int)
    t.add_argument("--trajectory", action="append",
                   help="x0,y0 start point; writes per-optimizer trace CSVs (repeatable)")
    t.set_defaults(func=cmd_toymap)
    return p


_NEGATIVE_VALUE_FLAGS = ("--x-range", "--y-range", "--trajectory")


def _merge_negative_values(argv):
    # argparse mistakes "-1.5,-1.5" for an option; fold such values into
    # --flag=value form so the exemplified syntax works
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok in _NEGATIVE_VALUE_FLAGS and i + 1 < len(argv)
                and argv[i + 1].startswith("-") and "," in argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(_merge_negative_values(list(argv)))
    try:
        return args.func(args)
    except (ConfigError, CsvParseError, DegenerateDataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HkrrError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
