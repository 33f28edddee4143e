"""One check per acceptance criterion, each recording a PASS/FAIL line.

The reproduction checks (7 to 9) run full (lambda, gamma) grids on the
synthetic models and take several minutes in total.
"""

import math
import time

import numpy as np
import pytest

from lvggm.certificate import (
    constants_from, find_certified_gamma, flat_block_instance, low_rank_part, tau_values, theorem_constants,
)
from lvggm.core import Atom, AtomicPSD, materialize
from lvggm.gauge import GaugeSpec, omega_value, polar_exact, polar_tpi
from lvggm.losses import loss_grad, loss_value
from lvggm.metrics import match_atoms
from lvggm.solver import SolverConfig, fit_decomposition, fit_lvggm
from lvggm.synth import ModelSpec, generate, marginal_precision
from lvggm import pipeline as pl

from conftest import random_spd, random_symmetric, record_criterion, sym_finite_difference


def run_grid(kind, fit, lambdas, gammas, method="lvggm", seed=0):
    data = generate(ModelSpec(kind, seed=seed))
    ctx = pl.GridContext(data.Sigma_hat, data.S_true, [list(g) for g in data.model.groups])
    tasks = pl.build_tasks(lambdas, gammas, fit, method=method)
    return pl.run_grid(tasks, ctx)


def describe(row):
    if row is None:
        return "no successful cell"
    jac = ", ".join(f"{j:.2f}" for j in row["jaccards"])
    return (f"lambda={row['lambda']:.4g} gamma={row['gamma']:.4g} atoms={row['atoms']} "
            f"jaccards=[{jac}] f1={row['f1']:.3f}")


def test_criterion_01_gradients():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for kind in ("taylor", "sm"):
        for _ in range(20):
            Sigma = random_spd(rng, 8)
            M = random_symmetric(rng, 8)
            G = loss_grad(kind, M, Sigma)
            fd = sym_finite_difference(lambda X: loss_value(kind, X, Sigma), M)
            worst = max(worst, np.linalg.norm(G - fd) / np.linalg.norm(fd))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 5
    record_criterion(1, ok, f"max relative FD error {worst:.2e} (< 1e-6), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_polar_oracles():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    monotone = top_matches = tpi_below = True
    close, cases = 0, 0
    for _ in range(200):
        Y = random_symmetric(rng, 8)
        exact = [polar_exact(Y, k).value for k in range(1, 9)]
        monotone &= all(a <= b + 1e-12 for a, b in zip(exact, exact[1:]))
        top_matches &= abs(exact[-1] - max(np.linalg.eigvalsh(Y)[-1], 0.0)) <= 1e-10
        for k in range(1, 9):
            h = polar_tpi(Y, k, restarts=10, seed=k).value
            tpi_below &= h <= exact[k - 1] + 1e-10
            close += h >= 0.99 * exact[k - 1]
            cases += 1
    elapsed = time.perf_counter() - start
    frac = close / cases
    ok = monotone and top_matches and tpi_below and frac >= 0.9 and elapsed < 30
    record_criterion(2, ok, f"monotone={monotone} k=8 matches lambda+max={top_matches} tpi<=exact={tpi_below} "
                            f"tpi>=0.99 exact on {frac:.1%} (>= 90%), {elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_03_duality_inequality():
    rng = np.random.default_rng(3)
    p, worst = 8, -math.inf
    for _ in range(500):
        k = int(rng.integers(1, p + 1))
        Y = random_symmetric(rng, p)
        atoms = []
        for _ in range(int(rng.integers(1, 5))):
            support = tuple(sorted(rng.choice(p, size=int(rng.integers(1, k + 1)), replace=False).tolist()))
            u = np.zeros(p)
            u[list(support)] = rng.standard_normal(len(support))
            atoms.append(Atom(support, u / np.linalg.norm(u), float(rng.uniform(0.1, 2.0))))
        Z = AtomicPSD(atoms, p)
        gap = np.sum(Y * materialize(Z)) - polar_exact(Y, k).value * omega_value(Z, GaugeSpec.fixed(k))
        worst = max(worst, gap)
    ok = worst <= 1e-9
    record_criterion(3, ok, f"max <Y, Z> - polar(Y) omega(Z) over 500 pairs = {worst:.3e} (<= 1e-9)")
    assert ok


def test_criterion_04_solver_sanity():
    rng = np.random.default_rng(4)
    est = fit_lvggm(np.eye(6), SolverConfig(lam=0.1, gamma=1.0, gauge=GaugeSpec.fixed(3)))
    err = float(np.max(np.abs(est.S - 0.9 * np.eye(6))))
    traces = [est.objective_trace]
    for loss in ("sm", "taylor"):
        for gauge in (GaugeSpec.fixed(3), GaugeSpec.sqrt_weights(10)):
            Sigma = random_spd(rng, 10)
            traces.append(fit_lvggm(Sigma, SolverConfig(lam=0.05, gamma=0.5, gauge=gauge,
                                                        loss_kind=loss)).objective_trace)
    worst_step = max(max(np.diff(t), default=-math.inf) for t in traces)
    ok = err <= 1e-6 and len(est.L) == 0 and worst_step <= 1e-9
    record_criterion(4, ok, f"|S - 0.9 I|max = {err:.1e}, atoms = {len(est.L)}, "
                            f"largest objective increase over {len(traces)} fits = {worst_step:.1e} (<= 1e-9)")
    assert ok


def test_criterion_05_identifiability_round_trip():
    start = time.perf_counter()
    failures = []
    for seed in range(10):
        S_star, blocks = flat_block_instance(40, 10, 2, np.random.default_rng(seed), sign=-1)
        tau_bar, _, _ = tau_values(blocks)
        rep = find_certified_gamma(S_star, blocks, orientation="difference")
        L_star = low_rank_part(blocks)
        est = fit_decomposition(S_star - L_star, rep.gamma, GaugeSpec.fixed(10), lam=1e-4)
        thr = 1e-6 * float(np.max(np.abs(est.S)))
        supp_ok = np.array_equal(np.abs(est.S) > thr, S_star != 0)
        atoms_ok = len(est.L) == 2 and match_atoms(est.L, [I for I, _ in blocks]).all_matched(2, 1.0)
        err = max(np.max(np.abs(est.S - S_star)), np.max(np.abs(est.L_dense - L_star)))
        if not (tau_bar <= 1.3 and rep.passed and supp_ok and atoms_ok and err < 1e-2):
            failures.append(f"seed {seed}: tau={tau_bar:.3f} pass={rep.passed} supp={supp_ok} "
                            f"atoms={atoms_ok} err={err:.1e}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    record_criterion(5, ok, f"{10 - len(failures)}/10 instances certified and recovered exactly, "
                            f"{elapsed:.1f} s (< 60 s)" + (f"; {failures}" if failures else ""))
    assert ok


def test_criterion_06_theorem_constants():
    p = 100
    u = np.full(p, math.sqrt((1 - 2 / p) / (p - 1)))
    u[0] = math.sqrt(2 / p)
    c = theorem_constants(np.eye(p), [(tuple(range(p)), u)], mode="full_block")
    lo, hi = c.gamma_interval
    direct = constants_from(1, 2.0, 1.0, p, p).gamma_interval
    ok = (c.k0 == 1 and abs(c.tau_bar - 2) < 1e-12 and abs(lo - 0.05) < 1e-6
          and abs(hi - 0.98 / 1.2) < 1e-6 and direct == pytest.approx((lo, hi)))
    record_criterion(6, ok, f"alpha={c.alpha:.6f} interval=[{lo:.6f}, {hi:.6f}) (expected [0.05, 0.816667))")
    assert ok


@pytest.mark.slow
def test_criterion_07_model1_reproduction():
    start = time.perf_counter()
    lambdas, gammas = np.geomspace(0.02, 2.0, 10), np.geomspace(0.1, 3.0, 10)
    rows = run_grid("tree3", {"k": 15, "loss": "sm"}, lambdas, gammas)
    hits = [r for r in rows if r["status"] == "ok" and r["atoms"] == 3 and r["groups_matched"] == 3
            and r["f1"] >= 0.8]
    base = run_grid("tree3", {"loss": "sm"}, lambdas, gammas, method="baseline")
    rank3 = [r for r in base if r["status"] == "ok" and r["atoms"] == 3]
    best_base = pl.best_recovery(rank3)
    contrast = best_base is not None and best_base["groups_matched"] < 3
    elapsed = time.perf_counter() - start
    ok = bool(hits) and contrast and elapsed < 600
    record_criterion(7, ok, f"{len(hits)} of {len(rows)} cells give 3 exact atoms with F1 >= 0.8 "
                            f"(best: {describe(pl.best_recovery(rows))}); baseline rank-3 best cell "
                            f"inexact={contrast} ({describe(best_base)}); {elapsed:.0f} s (< 600 s)")
    assert ok


@pytest.mark.slow
def test_criterion_08_model3_weighted_gauge():
    start = time.perf_counter()
    # the weighted polar scans every sparsity level, so this grid is kept at 8 x 8 for the time budget
    rows = run_grid("overlap4", {"weights": "sqrt", "loss": "sm"}, np.geomspace(0.005, 0.2, 8),
                    np.geomspace(0.15, 3.0, 8))
    hits = [r for r in rows if r["status"] == "ok" and r["atoms"] == 4 and r["min_jaccard"] >= 0.8]
    elapsed = time.perf_counter() - start
    ok = bool(hits) and elapsed < 900
    record_criterion(8, ok, f"{len(hits)} of {len(rows)} cells give 4 atoms with Jaccard >= 0.8 "
                            f"(best: {describe(pl.best_recovery(rows))}); {elapsed:.0f} s (< 900 s)")
    assert ok


@pytest.mark.slow
def test_criterion_09_erdos_renyi_reproduction():
    start = time.perf_counter()
    rows = run_grid("er", {"k": 35, "loss": "sm"}, np.geomspace(0.02, 2.0, 10), np.geomspace(0.1, 3.0, 10))
    hits = [r for r in rows if r["status"] == "ok" and r["min_jaccard"] >= 0.9]
    elapsed = time.perf_counter() - start
    ok = bool(hits) and elapsed < 1200
    record_criterion(9, ok, f"{len(hits)} of {len(rows)} cells recover all 4 groups with Jaccard >= 0.9 "
                            f"(best: {describe(pl.best_recovery(rows))}); {elapsed:.0f} s (< 1200 s)")
    assert ok


def test_criterion_10_schur_consistency():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        p = int(rng.integers(2, 31))
        K = random_spd(rng, p)
        O = sorted(rng.choice(p, size=int(rng.integers(1, p + 1)), replace=False).tolist())
        oracle = np.linalg.inv(np.linalg.inv(K)[np.ix_(O, O)])
        worst = max(worst, float(np.max(np.abs(marginal_precision(K, O) - oracle))))
    ok = worst <= 1e-10
    record_criterion(10, ok, f"max |Schur - inverse-of-inverse| over 100 matrices = {worst:.1e} (<= 1e-10)")
    assert ok
