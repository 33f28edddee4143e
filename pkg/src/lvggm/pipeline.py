"""Experiment plumbing shared by the command line and the reproduction tests:
fitting one grid cell, writing artifacts, grid search and cell selection."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Atom, AtomicPSD, Estimate, NumericalError, write_matrix
from .gauge import GaugeSpec
from .metrics import csv_text, default_threshold, eigvec_supports, match_atoms, reconstruct_complete, support_metrics
from .render import write_heatmap
from .solver import BaselineEstimate, SolverConfig, fit_baseline, fit_lvggm

log = logging.getLogger(__name__)

GRID_COLUMNS = [
    "cell", "method", "lambda", "gamma", "seed", "status", "nnz", "atoms", "precision", "recall",
    "f1", "jaccards", "min_jaccard", "groups_matched", "objective", "iterations", "converged",
]


def dump_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, shortest round-trip floats."""
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def cell_seed(base_seed: int, index: int) -> int:
    """Seed for grid cell ``index``; independent of execution order."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def thread_cap(requested: int | None = None) -> int:
    env = os.environ.get("LVGGM_THREADS")
    n = requested or (int(env) if env else (os.cpu_count() or 1))
    if env:
        n = min(n, int(env))
    return max(1, n)


def make_gauge(p: int, k: int | None = None, weights=None) -> GaugeSpec:
    """``k`` for the fixed-sparsity gauge; ``weights="sqrt"`` or a list for the weighted one."""
    if weights is not None:
        if isinstance(weights, str):
            if weights != "sqrt":
                raise ValueError(f"unknown weight scheme {weights!r} (expected 'sqrt' or a list)")
            return GaugeSpec.sqrt_weights(p)
        return GaugeSpec.weighted(weights)
    if k is None:
        raise ValueError("give either k or weights for the gauge")
    return GaugeSpec.fixed(k)


def solver_config(fit: dict, p: int, lam: float | None = None, gamma: float | None = None,
                  seed: int | None = None) -> SolverConfig:
    """:class:`SolverConfig` from a ``[fit]``-style mapping."""
    lam = fit.get("lambda") if lam is None else lam
    gamma = fit.get("gamma") if gamma is None else gamma
    if lam is None or gamma is None:
        raise ValueError("lambda and gamma are required")
    kwargs = {}
    for src, dst in [("outer_iters", "outer_iters"), ("ista_steps", "ista_steps_per_outer"),
                     ("fw_tol", "fw_tol"), ("max_atoms", "max_atoms"), ("max_fw_iters", "max_fw_iters"),
                     ("tpi_restarts", "tpi_restarts"), ("exact_lmo", "exact_lmo")]:
        if fit.get(src) is not None:
            kwargs[dst] = fit[src]
    return SolverConfig(lam=float(lam), gamma=float(gamma),
                        gauge=make_gauge(p, fit.get("k"), fit.get("weights")),
                        loss_kind=fit.get("loss", "sm"),
                        seed=int(fit.get("seed", 0) if seed is None else seed), **kwargs)


def nnz_offdiag(S, threshold: float) -> int:
    """Off-diagonal entries (both triangles) with ``|S_ij| > threshold``."""
    S = np.asarray(S)
    return int(np.sum(np.abs(S) > threshold) - np.sum(np.abs(np.diag(S)) > threshold))


def evaluate(S, supports, S_true=None, groups=None, threshold: float | None = None) -> dict:
    """Recovery metrics of one estimate against the truth (when given)."""
    thr = default_threshold(S) if threshold is None else threshold
    row = {"nnz": nnz_offdiag(S, thr), "atoms": len(supports)}
    if S_true is not None:
        m = support_metrics(S, S_true, thr)
        row.update(precision=m.precision, recall=m.recall, f1=m.f1)
    if groups is not None:
        match = match_atoms(supports, groups)
        jac = [0.0] * len(groups)
        for _, j, v in match.pairs:
            jac[j] = v
        row.update(jaccards=jac, min_jaccard=min(jac) if jac else 1.0,
                   groups_matched=sum(v == 1.0 for v in jac))
    return row


def baseline_atoms(b: BaselineEstimate) -> AtomicPSD:
    """Eigenpairs of the baseline ``L`` as full-support atoms (for reconstruction)."""
    p = b.L.shape[0]
    full = tuple(range(p))
    atoms = [Atom(full, b.eigvecs[:, i], float(b.eigvals[i])) for i in range(b.rank)]
    return AtomicPSD(atoms, p)


def latent_first(K_full, observed, hidden) -> np.ndarray:
    order = list(hidden) + list(observed)
    return np.asarray(K_full)[np.ix_(order, order)]


def write_estimate(out: Path, est: Estimate, extra: dict | None = None, render: bool = True) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "S.txt", est.S)
    (out / "atoms.json").write_text(est.L.to_json() + "\n")
    doc = est.summary()
    doc.update(extra or {})
    dump_json(out / "estimate.json", doc)
    K = reconstruct_complete(est.S, est.L)
    write_matrix(out / "K_complete.txt", K)
    if render:
        write_heatmap(out / "K_complete.svg", K, split=len(est.L), title="|K| estimated, latent first")


def write_baseline(out: Path, b: BaselineEstimate, extra: dict | None = None, render: bool = True) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "S.txt", b.S)
    write_matrix(out / "L.txt", b.L)
    doc = {"lambda": b.lam, "gamma": b.gamma, "rank": b.rank, "iterations": b.iterations,
           "converged": b.converged, "eigenvalues": [float(v) for v in b.eigvals[:b.rank]],
           "objective_trace": list(b.objective_trace)}
    doc.update(extra or {})
    dump_json(out / "estimate.json", doc)
    K = reconstruct_complete(b.S, baseline_atoms(b))
    write_matrix(out / "K_complete.txt", K)
    if render:
        write_heatmap(out / "K_complete.svg", K, split=b.rank, title="|K| l1+trace, latent first")


@dataclass
class GridTask:
    index: int
    method: str  # "lvggm" or "baseline"
    lam: float
    gamma: float
    seed: int
    fit: dict
    baseline: dict = field(default_factory=dict)


@dataclass
class GridContext:
    Sigma_hat: np.ndarray
    S_true: np.ndarray | None = None
    groups: list | None = None
    out_dir: Path | None = None
    threshold: float | None = None
    render: bool = False


def run_cell(task: GridTask, ctx: GridContext) -> dict:
    """Fit one cell; never raises, failures are reported in ``status``."""
    p = ctx.Sigma_hat.shape[0]
    row = {"cell": task.index, "method": task.method, "lambda": task.lam, "gamma": task.gamma,
           "seed": task.seed}
    cell_dir = None if ctx.out_dir is None else ctx.out_dir / f"cell_{task.index:03d}"
    try:
        if task.method == "baseline":
            b = fit_baseline(ctx.Sigma_hat, task.lam, task.gamma,
                             loss_kind=task.baseline.get("loss", task.fit.get("loss", "sm")),
                             iters=int(task.baseline.get("iters", 50)))
            supports = eigvec_supports(b.eigvecs, b.rank)
            row.update(evaluate(b.S, supports, ctx.S_true, ctx.groups, ctx.threshold))
            row.update(objective=b.objective_trace[-1], iterations=b.iterations, converged=b.converged)
            if cell_dir is not None:
                write_baseline(cell_dir, b, {"cell": task.index}, render=ctx.render)
        else:
            cfg = solver_config(task.fit, p, task.lam, task.gamma, task.seed)
            est = fit_lvggm(ctx.Sigma_hat, cfg)
            row.update(evaluate(est.S, est.L.supports, ctx.S_true, ctx.groups, ctx.threshold))
            row.update(objective=est.objective_trace[-1], iterations=est.iterations,
                       converged=est.converged)
            if cell_dir is not None:
                write_estimate(cell_dir, est, {"cell": task.index}, render=ctx.render)
        row["status"] = "ok"
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("cell %d failed: %s", task.index, exc)
        row["status"] = f"failed: {exc}"
    return row


def _run_cell_star(args):
    return run_cell(*args)


def build_tasks(lambdas, gammas, fit: dict, base_seed: int = 0, method: str = "lvggm",
                baseline: dict | None = None, start: int = 0) -> list[GridTask]:
    tasks = []
    for lam in lambdas:
        for gamma in gammas:
            idx = start + len(tasks)
            tasks.append(GridTask(idx, method, float(lam), float(gamma), cell_seed(base_seed, idx),
                                  fit, baseline or {}))
    return tasks


def run_grid(tasks: list[GridTask], ctx: GridContext, threads: int | None = None) -> list[dict]:
    """Run every cell, on a process pool when more than one worker is allowed.

    Rows come back sorted by cell index whatever the completion order.
    """
    n = min(thread_cap(threads), len(tasks)) if tasks else 1
    if n <= 1:
        rows = [run_cell(t, ctx) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_run_cell_star, [(t, ctx) for t in tasks]))
    return sorted(rows, key=lambda r: r["cell"])


def grid_csv(rows: list[dict]) -> str:
    return csv_text(rows, GRID_COLUMNS)


def parse_select(text: str) -> dict[str, float]:
    """``"nnz=88,atoms=3"`` to ``{"nnz": 88.0, "atoms": 3.0}``."""
    targets = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in ("nnz", "atoms"):
            raise ValueError(f"bad selection term {part!r}: use nnz=<int> and/or atoms=<int>")
        targets[key] = float(value)
    if not targets:
        raise ValueError("empty selection")
    return targets


def select_cell(rows: list[dict], targets: dict[str, float]) -> dict | None:
    """Successful cell minimizing the summed relative distance to the targets.

    Ties go to the lower cell index.
    """
    def distance(row):
        return sum(abs(row[k] - t) / max(abs(t), 1.0) for k, t in targets.items())

    ok = [r for r in rows if r.get("status") == "ok"]
    if not ok:
        return None
    return min(ok, key=lambda r: (distance(r), r["cell"]))


def best_recovery(rows: list[dict]) -> dict | None:
    """Successful cell with the best (min Jaccard, F1), for reporting."""
    ok = [r for r in rows if r.get("status") == "ok" and "min_jaccard" in r]
    if not ok:
        return None
    return max(ok, key=lambda r: (r["min_jaccard"], r.get("f1", 0.0), -r["cell"]))
