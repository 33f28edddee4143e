"""Command line: ``lvggm <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure (artifacts written so far are kept).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .certificate import DegeneracyError, build_dual, find_certified_gamma, flat_block_instance, low_rank_part
from .config import ConfigError, apply_overrides, load_config
from .core import AtomicPSD, NumericalError, StructuralError, read_matrix, write_matrix
from .gauge import GaugeSpec
from .metrics import csv_text, eigvec_supports, match_atoms
from .render import write_heatmap
from .solver import fit_baseline, fit_decomposition, fit_lvggm
from .synth import ModelSpec, generate, load_model, save_model

log = logging.getLogger("lvggm")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


class InputError(ValueError):
    pass


# -- helpers -----------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _read_sigma(path) -> np.ndarray:
    try:
        return read_matrix(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def _truth(path) -> tuple:
    """``(model, S_true)`` from a directory written by ``synth``."""
    d = Path(path)
    try:
        model = load_model(d / "K.txt", d / "structure.json")
    except OSError as exc:
        raise InputError(f"{d}: not a synth output directory ({exc.strerror})") from None
    return model, model.K_OO


def _fit_settings(args) -> dict:
    fit = {"loss": args.loss, "seed": args.seed}
    if getattr(args, "weights", None):
        fit["weights"] = args.weights
    elif getattr(args, "k", None):
        fit["k"] = args.k
    else:
        raise InputError("give --k or --weights sqrt")
    for key in ("outer_iters", "max_atoms", "max_fw_iters", "tpi_restarts"):
        value = getattr(args, key, None)
        if value is not None:
            fit[key] = value
    if getattr(args, "exact_lmo", False):
        fit["exact_lmo"] = True
    return fit


def _add_solver_flags(p: argparse.ArgumentParser, grid: bool = False) -> None:
    p.add_argument("--loss", default="sm", help="sm (score matching) or taylor")
    if not grid:
        p.add_argument("--lambda", dest="lam", type=float, required=True)
        p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--k", type=int, help="atom sparsity for the fixed gauge")
    p.add_argument("--weights", choices=["sqrt"], help="weighted gauge with w_k = sqrt(k)")
    p.add_argument("--outer-iters", type=int)
    p.add_argument("--max-atoms", type=int)
    p.add_argument("--max-fw-iters", type=int)
    p.add_argument("--tpi-restarts", type=int)
    p.add_argument("--exact-lmo", action="store_true", help="exhaustive oracle (small problems only)")
    p.add_argument("--seed", type=int, default=0)


# -- subcommands -------------------------------------------------------------------------

def synth_to(out: Path, spec: ModelSpec, population: bool = False, render: bool = True) -> pl.GridContext:
    out.mkdir(parents=True, exist_ok=True)
    data = generate(spec)
    model = data.model
    save_model(model, out / "K.txt", out / "structure.json")
    sigma = np.linalg.inv(data.Sigma_inv) if population else data.Sigma_hat
    write_matrix(out / "sigma.txt", sigma)
    write_matrix(out / "S_true.txt", data.S_true)
    pl.dump_json(out / "spec.json", {
        "model": spec.kind.value, "seed": spec.seed, "n_samples": spec.n_samples, "p": spec.p,
        "group_sizes": list(spec.group_sizes), "ridge": spec.ridge, "min_eig": spec.min_eig,
        "population": population,
    })
    if render:
        write_heatmap(out / "K_true.svg", pl.latent_first(model.K_full, model.observed, model.hidden),
                      split=model.h, title="|K| true, latent first")
    return pl.GridContext(sigma, data.S_true, [list(g) for g in model.groups])


def _model_spec(section: dict) -> ModelSpec:
    keys = ("seed", "n_samples", "ridge", "min_eig", "max_degree", "edge_prob", "p", "group_sizes", "overlap")
    return ModelSpec(section.get("model", "tree3"), **{k: section[k] for k in keys if k in section})


def cmd_synth(args) -> int:
    spec = ModelSpec(args.model, seed=args.seed, n_samples=args.n)
    synth_to(Path(args.out), spec, population=args.population, render=not args.no_render)
    print(f"wrote {args.out}")
    return EXIT_OK


def _write_eval(out: Path, row: dict) -> None:
    pl.dump_json(out / "metrics.json", row)
    (out / "metrics.csv").write_text(csv_text([row]))


def cmd_fit(args) -> int:
    sigma = _read_sigma(args.input)
    cfg = pl.solver_config({**_fit_settings(args), "lambda": args.lam, "gamma": args.gamma},
                           sigma.shape[0])
    est = fit_lvggm(sigma, cfg)
    out = Path(args.out)
    gauge = {"w": "sqrt"} if args.weights else cfg.gauge.to_dict()
    pl.write_estimate(out, est, {"gauge": gauge}, render=not args.no_render)
    if args.truth:
        model, S_true = _truth(args.truth)
        _write_eval(out, pl.evaluate(est.S, est.L.supports, S_true, model.groups))
    print(f"{len(est.L)} atoms, objective {est.objective_trace[-1]:.6g}, wrote {out}")
    return EXIT_OK


def cmd_fit_baseline(args) -> int:
    sigma = _read_sigma(args.input)
    b = fit_baseline(sigma, args.lam, args.gamma, loss_kind=args.loss, iters=args.iters)
    out = Path(args.out)
    pl.write_baseline(out, b, render=not args.no_render)
    if args.truth:
        model, S_true = _truth(args.truth)
        _write_eval(out, pl.evaluate(b.S, eigvec_supports(b.eigvecs, b.rank), S_true, model.groups))
    print(f"rank {b.rank}, objective {b.objective_trace[-1]:.6g}, wrote {out}")
    return EXIT_OK


def run_grid_to(out: Path, ctx: pl.GridContext, lambdas, gammas, fit: dict, select: str | None,
                base_seed: int = 0, baseline: bool = False, threads: int | None = None) -> dict:
    """Grid search writing ``grid.csv``, per-cell artifacts and ``selected.json``."""
    out.mkdir(parents=True, exist_ok=True)
    ctx.out_dir = out / "cells"
    targets = pl.parse_select(select) if select else None
    tasks = pl.build_tasks(lambdas, gammas, fit, base_seed)
    if baseline:
        tasks += pl.build_tasks(lambdas, gammas, fit, base_seed, method="baseline", start=len(tasks))
    rows = pl.run_grid(tasks, ctx, threads)
    (out / "grid.csv").write_text(pl.grid_csv(rows))
    summary = {"cells": len(rows), "failed": sum(r["status"] != "ok" for r in rows)}
    for method in ("lvggm", "baseline") if baseline else ("lvggm",):
        sub = [r for r in rows if r["method"] == method]
        if targets:
            summary[f"selected_{method}"] = pl.select_cell(sub, targets)
        if ctx.groups is not None:
            summary[f"best_recovery_{method}"] = pl.best_recovery(sub)
    summary["targets"] = targets
    pl.dump_json(out / "selected.json", summary)
    return summary


def cmd_grid(args) -> int:
    sigma = _read_sigma(args.input)
    ctx = pl.GridContext(sigma)
    if args.truth:
        model, S_true = _truth(args.truth)
        ctx.S_true, ctx.groups = S_true, [list(g) for g in model.groups]
    summary = run_grid_to(Path(args.out), ctx, _floats(args.lambdas), _floats(args.gammas),
                          _fit_settings(args), args.select, args.seed, args.baseline, args.threads)
    sel = summary.get("selected_lvggm")
    if sel:
        print(f"selected cell {sel['cell']}: lambda={sel['lambda']} gamma={sel['gamma']} "
              f"nnz={sel['nnz']} atoms={sel['atoms']}")
    print(f"{summary['cells']} cells ({summary['failed']} failed), wrote {args.out}")
    return EXIT_NUMERICAL if summary["failed"] == summary["cells"] else EXIT_OK


def _load_blocks(path) -> list:
    with open(path) as fh:
        doc = json.load(fh)
    L = AtomicPSD.from_json(json.dumps(doc))
    return [(a.support, a.u) for a in L.atoms]


def certify_to(out: Path, S_star, blocks, gamma, orientation: str, decompose: bool = False,
               coefficients=None) -> dict:
    """Certificate report (and optionally a decomposition check) under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    if gamma is None or gamma == "scan":
        rep = find_certified_gamma(S_star, blocks, orientation=orientation)
    else:
        rep = build_dual(S_star, blocks, float(gamma), orientation=orientation)
    (out / "certificate.json").write_text(rep.to_json() + "\n")
    result = {"passed": rep.passed, "gamma": rep.gamma, "min_margin": rep.min_margin,
              "l3_regime": rep.l3_regime}
    if decompose:
        S_solver = S_star if orientation == "difference" else -np.asarray(S_star)
        L_star = low_rank_part(blocks, coefficients)
        p = L_star.shape[0]
        k = len(blocks[0][0])
        est = fit_decomposition(S_solver - L_star, rep.gamma, GaugeSpec.fixed(k))
        thr = 1e-6 * float(np.max(np.abs(est.S)))
        sup_ok = bool(np.array_equal(np.abs(est.S) > thr, S_solver != 0))
        match = match_atoms(est.L, [I for I, _ in blocks])
        result["decomposition"] = {
            "support_S_exact": sup_ok,
            "atoms": len(est.L),
            "atom_supports_exact": match.all_matched(len(blocks), 1.0) and len(est.L) == len(blocks),
            "max_error_S": float(np.max(np.abs(est.S - S_solver))),
            "max_error_L": float(np.max(np.abs(est.L_dense - L_star))),
            "p": p,
        }
    pl.dump_json(out / "summary.json", result)
    return result


def cmd_certify(args) -> int:
    coefficients = None
    if args.flat:
        p, k, r = (int(x) for x in args.flat.split(","))
        S_star, blocks = flat_block_instance(p, k, r, np.random.default_rng(args.seed), sign=-1)
        orientation = "difference"
    elif args.truth:
        model, S_true = _truth(args.truth)
        La = model.latent_atoms()
        S_star, blocks, orientation = S_true, [(a.support, a.u) for a in La], "difference"
        coefficients = La.coefficients
    elif args.S and args.blocks:
        S_star, blocks = read_matrix(args.S), _load_blocks(args.blocks)
        orientation = args.orientation
    else:
        raise InputError("give --flat p,k,r, --truth DIR, or --S and --blocks")
    gamma = None if args.gamma in (None, "scan") else float(args.gamma)
    res = certify_to(Path(args.out), S_star, blocks, gamma, orientation, args.decompose, coefficients)
    print(f"pass={res['passed']} gamma={res['gamma']:.6g} min_margin={res['min_margin']:.3g} "
          f"(L3 {res['l3_regime']})")
    return EXIT_OK


def cmd_eval(args) -> int:
    est_dir = Path(args.estimate)
    S = read_matrix(est_dir / "S.txt")
    if (est_dir / "atoms.json").exists():
        supports = AtomicPSD.from_json((est_dir / "atoms.json").read_text()).supports
    else:
        L = read_matrix(est_dir / "L.txt")
        vals, vecs = np.linalg.eigh(L)
        order = np.argsort(vals)[::-1]
        rank = int(np.sum(vals > 1e-8 * max(vals.max(initial=0.0), 1.0)))
        supports = eigvec_supports(vecs[:, order], rank)
    model, S_true = _truth(args.truth)
    row = pl.evaluate(S, supports, S_true, model.groups, args.threshold)
    out = Path(args.out) if args.out else est_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_eval(out, row)
    print(csv_text([row]), end="")
    return EXIT_OK


def cmd_render(args) -> int:
    M = read_matrix(args.matrix)
    write_heatmap(args.out, M, split=args.split, title=args.title)
    return EXIT_OK


def cmd_run(args) -> int:
    doc = load_config(args.config)
    if args.set:
        doc = apply_overrides(doc, args.set)
    output = doc.get("output", {})
    out = Path(args.out or output.get("dir", "lvggm-out"))
    render = output.get("render", True)
    out.mkdir(parents=True, exist_ok=True)
    pl.dump_json(out / "config.json", doc)
    ctx = None
    fit = dict(doc.get("fit", {}))
    if "synth" in doc:
        s = doc["synth"]
        ctx = synth_to(out / "synth", _model_spec(s), s.get("population", False), render)
        ctx.threshold = output.get("threshold")
    elif "input" in fit:
        ctx = pl.GridContext(_read_sigma(fit["input"]), threshold=output.get("threshold"))
    if "fit" in doc and "lambda" in fit:
        if ctx is None:
            raise ConfigError("[fit] needs [synth] or fit.input", str(args.config))
        cfg = pl.solver_config(fit, ctx.Sigma_hat.shape[0])
        est = fit_lvggm(ctx.Sigma_hat, cfg)
        pl.write_estimate(out / "fit", est, render=render)
        if ctx.groups is not None:
            _write_eval(out / "fit", pl.evaluate(est.S, est.L.supports, ctx.S_true, ctx.groups, ctx.threshold))
    if "baseline" in doc:
        if ctx is None:
            raise ConfigError("[baseline] needs [synth] or fit.input", str(args.config))
        b_cfg = doc["baseline"]
        b = fit_baseline(ctx.Sigma_hat, b_cfg["lambda"], b_cfg["gamma"],
                         loss_kind=b_cfg.get("loss", fit.get("loss", "sm")), iters=b_cfg.get("iters", 50))
        pl.write_baseline(out / "baseline", b, render=render)
        if ctx.groups is not None:
            _write_eval(out / "baseline", pl.evaluate(b.S, eigvec_supports(b.eigvecs, b.rank), ctx.S_true,
                                                      ctx.groups, ctx.threshold))
    if "grid" in doc:
        if ctx is None:
            raise ConfigError("[grid] needs [synth] or fit.input", str(args.config))
        g = doc["grid"]
        grid_fit = {k: v for k, v in fit.items() if k not in ("lambda", "gamma", "input")}
        summary = run_grid_to(out / "grid", ctx, g["lambdas"], g["gammas"], grid_fit, g.get("select"),
                              g.get("seed", 0), g.get("baseline", False), g.get("threads"))
        if summary["failed"] == summary["cells"]:
            log.error("every grid cell failed")
            return EXIT_NUMERICAL
    if "certify" in doc:
        c = doc["certify"]
        source = c.get("source", "flat")
        coefficients = None
        if source == "flat":
            S_star, blocks = flat_block_instance(c.get("p", 40), c.get("k", 10), c.get("r", 2),
                                                 np.random.default_rng(c.get("seed", 0)),
                                                 jitter=c.get("jitter", 0.1), sign=-1)
        elif source == "truth":
            if "synth" not in doc:
                raise ConfigError("certify.source = 'truth' needs a [synth] table", str(args.config))
            model, _ = _truth(out / "synth")
            La = model.latent_atoms()
            S_star, blocks, coefficients = model.K_OO, [(a.support, a.u) for a in La], La.coefficients
        else:
            raise ConfigError(f"certify.source must be 'flat' or 'truth', got {source!r}", str(args.config))
        certify_to(out / "certify", S_star, blocks, c.get("gamma"), "difference",
                   c.get("decompose", False), coefficients)
    print(f"wrote {out}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lvggm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a ground-truth model and its sample covariance")
    p.add_argument("--model", required=True, choices=["tree3", "tree3uneven", "overlap4", "er"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="sample size (default 50 p, 2000 for er)")
    p.add_argument("--population", action="store_true", help="write the exact covariance instead")
    p.add_argument("--no-render", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit the sparse plus sparse-factor low-rank model")
    p.add_argument("--input", required=True, help="covariance matrix file")
    _add_solver_flags(p)
    p.add_argument("--truth", help="synth directory to evaluate against")
    p.add_argument("--no-render", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-baseline", help="fit the l1 + trace baseline")
    p.add_argument("--input", required=True)
    p.add_argument("--loss", default="sm")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--truth")
    p.add_argument("--no-render", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_baseline)

    p = sub.add_parser("grid", help="grid search over lambda and gamma")
    p.add_argument("--input", required=True)
    p.add_argument("--lambdas", required=True, help="comma-separated")
    p.add_argument("--gammas", required=True, help="comma-separated")
    _add_solver_flags(p, grid=True)
    p.add_argument("--select", help='targets, e.g. "nnz=88,atoms=3"')
    p.add_argument("--baseline", action="store_true", help="also run the l1 + trace baseline")
    p.add_argument("--threads", type=int, help="worker processes (capped by LVGGM_THREADS)")
    p.add_argument("--truth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("certify", help="build and check a dual certificate")
    p.add_argument("--flat", metavar="P,K,R", help="random instance with flat blocks")
    p.add_argument("--truth", help="synth directory: certify its ground truth")
    p.add_argument("--S", help="sparse part (matrix file)")
    p.add_argument("--blocks", help="blocks as an atoms JSON file")
    p.add_argument("--orientation", choices=["sum", "difference"], default="difference")
    p.add_argument("--gamma", help="value, or 'scan' (default) to search")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decompose", action="store_true", help="also run the decomposition check")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("eval", help="recovery metrics of an estimate directory")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="SVG heatmap of a matrix file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--split", type=int, default=0, help="draw guides after this many rows/columns")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("run", help="run a configured pipeline")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="TABLE.KEY=VALUE", help="override a config value")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, StructuralError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, DegeneracyError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
