"""Alternating minimization for ``f(S - L) + lam * (gamma * ||S||_1 + Omega(L))``.

``S`` is updated by a fixed number of ISTA steps with ``L`` held fixed; ``L``
is updated by fully-corrective column generation with ``S`` held fixed: the
linear minimization oracle proposes a sparse rank-one atom, then every atom
coefficient is re-optimized by nonnegative coordinate descent.

Orientation: the model is ``M = S - L`` with ``L`` PSD, so the gradient of the
data fit with respect to ``L`` is ``-grad f(M)``. An atom ``u u^T`` decreases
the objective iff ``u^T grad f(M) u > lam * w``, hence the oracle is queried
on ``+grad f(M)``.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import Atom, AtomicPSD, Estimate, LossKind, NumericalError, StructuralError, as_symmetric, materialize
from .gauge import GaugeSpec, omega_value, polar
from .losses import QuadraticLoss

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    lam: float
    gamma: float
    gauge: GaugeSpec
    loss_kind: LossKind = LossKind.SCORE_MATCHING
    outer_iters: int = 50
    ista_steps_per_outer: int = 10
    fw_tol: float = 1e-6
    corrective_tol: float = 1e-10
    max_atoms: int = 40
    max_fw_iters: int = 10
    max_cd_sweeps: int = 5000
    rel_tol: float = 1e-9
    patience: int = 3
    tpi_restarts: int = 10
    tpi_max_iter: int = 200
    exact_lmo: bool = False
    seed: int = 0

    def __post_init__(self):
        self.loss_kind = LossKind.parse(self.loss_kind)
        if not self.loss_kind.quadratic:
            raise ValueError("the solver needs a quadratic loss (Taylor, score matching or Frobenius)")
        if self.lam < 0 or self.gamma <= 0:
            raise ValueError("lam must be nonnegative and gamma positive")


def soft_threshold(X, t):
    return np.sign(X) * np.maximum(np.abs(X) - t, 0.0)


def objective(loss: QuadraticLoss, S, L: AtomicPSD, cfg: SolverConfig) -> float:
    M = S - materialize(L)
    return loss.value(M) + cfg.lam * (cfg.gamma * float(np.abs(S).sum()) + omega_value(L, cfg.gauge))


def _as_loss(data, cfg: SolverConfig) -> QuadraticLoss:
    if isinstance(data, QuadraticLoss):
        return data
    return QuadraticLoss(cfg.loss_kind, data)


def ista_update_S(S, L, Sigma_hat, cfg: SolverConfig, steps: int | None = None) -> np.ndarray:
    """``steps`` proximal-gradient iterations on ``S`` with ``L`` fixed."""
    loss = _as_loss(Sigma_hat, cfg)
    L_dense = materialize(L) if isinstance(L, AtomicPSD) else np.asarray(L, dtype=float)
    S = np.array(S, dtype=float)
    if S.shape != L_dense.shape or S.shape[0] != loss.p:
        raise StructuralError("S, L and the data must share one dimension")
    eta = 1.0 / loss.lipschitz
    thr = eta * cfg.lam * cfg.gamma
    for _ in range(cfg.ista_steps_per_outer if steps is None else steps):
        S = soft_threshold(S - eta * loss.grad(S - L_dense), thr)
        S = 0.5 * (S + S.T)
    return S


def _weights(atoms, gauge: GaugeSpec) -> np.ndarray:
    return np.array([gauge.weight(a.k) for a in atoms], dtype=float)


def _corrective(loss, S, atoms, cfg) -> tuple[list[Atom], float]:
    """Re-optimize all coefficients; drop atoms whose coefficient vanishes."""
    if not atoms:
        return atoms, 0.0
    U = np.column_stack([a.u for a in atoms])
    H = loss.atom_gram(U)
    G = loss.grad(S)
    b = np.einsum("ij,ik,kj->j", U, G, U)
    g = -b + cfg.lam * _weights(atoms, cfg.gauge)
    c = np.array([a.c for a in atoms], dtype=float)
    c, _, resid = kernels.nn_coordinate_descent(H, g, c, cfg.corrective_tol, cfg.max_cd_sweeps)
    kept = [a.with_coefficient(ci) for a, ci in zip(atoms, c) if ci > cfg.corrective_tol]
    return kept, resid


def _consolidate(atoms, tol) -> list[Atom]:
    """Replace atoms sharing a support by the eigenvectors of their sum.

    This keeps the materialized matrix and the trace (hence the gauge value
    of the decomposition) unchanged while keeping atoms orthogonal per support.
    """
    groups = defaultdict(list)
    for a in atoms:
        groups[a.support].append(a)
    out = []
    for sup, grp in groups.items():
        if len(grp) == 1:
            out.append(grp[0])
            continue
        idx = list(sup)
        V = np.column_stack([a.u[idx] for a in grp])
        B = (V * np.array([a.c for a in grp])) @ V.T
        vals, vecs = np.linalg.eigh(0.5 * (B + B.T))
        for j in range(len(vals) - 1, -1, -1):
            if vals[j] <= tol * max(1.0, vals[-1]):
                break
            u = np.zeros(grp[0].dim)
            u[idx] = vecs[:, j]
            out.append(Atom(sup, u, float(vals[j])))
    return out


def _is_duplicate(atom: Atom, atoms) -> bool:
    for a in atoms:
        if a.support == atom.support and abs(float(a.u @ atom.u)) > 1.0 - 1e-8:
            return True
    return False


def fcg_update_L(S, L: AtomicPSD, Sigma_hat, cfg: SolverConfig, seed: int | None = None) -> AtomicPSD:
    """Fully-corrective column generation on ``L`` with ``S`` fixed."""
    loss = _as_loss(Sigma_hat, cfg)
    S = np.asarray(S, dtype=float)
    atoms = list(L.atoms)
    seed = cfg.seed if seed is None else seed
    atoms, _ = _corrective(loss, S, atoms, cfg)
    tpi = dict(restarts=cfg.tpi_restarts, max_iter=cfg.tpi_max_iter)
    for it in range(cfg.max_fw_iters):
        M = S - materialize(AtomicPSD(atoms, loss.p))
        G = loss.grad(M)
        r = polar(G, cfg.gauge, exact=cfg.exact_lmo, seed=seed + it, **tpi)
        if r.u is None or r.value <= cfg.lam * (1.0 + cfg.fw_tol):
            break
        if len(atoms) >= cfg.max_atoms:
            log.debug("atom budget %d reached", cfg.max_atoms)
            break
        new = Atom(r.support, r.u, 0.0)
        if _is_duplicate(new, atoms):
            # coefficients are not yet stationary; one more corrective pass then stop
            atoms, _ = _corrective(loss, S, atoms, cfg)
            break
        atoms, _ = _corrective(loss, S, atoms + [new], cfg)
        atoms = _consolidate(atoms, cfg.corrective_tol)
        atoms, _ = _corrective(loss, S, atoms, cfg)
    return AtomicPSD(atoms, loss.p)


def fit_lvggm(Sigma_hat, cfg: SolverConfig, init: tuple | None = None) -> Estimate:
    """Alternate ISTA on ``S`` and column generation on ``L`` from ``S = L = 0``.

    ``Sigma_hat`` may also be a :class:`QuadraticLoss` (for instance a
    Frobenius decomposition loss). ``init`` optionally warm-starts from a
    previous ``(S, L)``.
    """
    loss = _as_loss(Sigma_hat, cfg)
    p = loss.p
    if init is None:
        S, L = np.zeros((p, p)), AtomicPSD((), p)
    else:
        S, L = np.array(init[0], dtype=float), init[1]
    trace: list[float] = []
    stalled, converged, t = 0, False, 0
    for t in range(1, cfg.outer_iters + 1):
        S = ista_update_S(S, L, loss, cfg)
        L = fcg_update_L(S, L, loss, cfg, seed=cfg.seed + 7919 * t)
        obj = objective(loss, S, L, cfg)
        if not math.isfinite(obj):
            raise NumericalError(f"objective became non-finite at outer iteration {t} "
                                 f"(max|S| = {np.max(np.abs(S)):.3g}, atoms = {len(L)})")
        if trace:
            rel = (trace[-1] - obj) / max(abs(trace[-1]), 1.0)
            stalled = stalled + 1 if rel < cfg.rel_tol else 0
        trace.append(obj)
        if stalled >= cfg.patience:
            converged = True
            break
    return Estimate(S=S, L=L, lam=cfg.lam, gamma=cfg.gamma, loss_kind=loss.kind,
                    objective_trace=trace, iterations=t, converged=converged)


def fit_decomposition(M_target, gamma: float, gauge: GaugeSpec, lam: float = 1e-4,
                      n_stages: int = 8, stage_iters: int = 200, **cfg_kwargs) -> Estimate:
    """Split a known matrix as ``S - L`` with the Frobenius loss and small ``lam``.

    The regularization is decreased geometrically from the smallest value at
    which ``(0, 0)`` is optimal down to ``lam``, warm-starting every stage.
    """
    M_target = as_symmetric(M_target)
    loss = QuadraticLoss(LossKind.FROBENIUS, M_target)
    lam0 = max(float(np.max(np.abs(M_target))) / gamma,
               polar(-M_target, gauge).value, lam)
    lams = np.geomspace(lam0, lam, n_stages) if n_stages > 1 else np.array([lam])
    cfg_kwargs.setdefault("max_fw_iters", 5)
    est, init = None, None
    for lam_t in lams:
        cfg = SolverConfig(lam=float(lam_t), gamma=gamma, gauge=gauge, loss_kind=LossKind.FROBENIUS,
                           outer_iters=stage_iters, **cfg_kwargs)
        est = fit_lvggm(loss, cfg, init=init)
        init = (est.S, est.L)
    return est


@dataclass
class BaselineEstimate:
    """Dense ``(S, L)`` from the l1 + trace formulation, with ``L``'s eigenpairs."""

    S: np.ndarray
    L: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    lam: float
    gamma: float
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def rank(self) -> int:
        top = self.eigvals.max(initial=0.0)
        return int(np.sum(self.eigvals > 1e-8 * max(top, 1.0)))


def psd_soft_threshold(X, t):
    """Prox of ``t * tr(L) + indicator(L PSD)``: eigenvalues ``s -> max(s - t, 0)``."""
    vals, vecs = np.linalg.eigh(as_symmetric(X))
    vals = np.maximum(vals - t, 0.0)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def fit_baseline(Sigma_hat, lam: float, gamma: float, loss_kind=LossKind.SCORE_MATCHING,
                 iters: int = 50, steps_per_outer: int = 10, rel_tol: float = 1e-9,
                 patience: int = 3) -> BaselineEstimate:
    """l1 + trace penalty: alternating ISTA on ``S`` and PSD-prox steps on ``L``."""
    loss = Sigma_hat if isinstance(Sigma_hat, QuadraticLoss) else QuadraticLoss(loss_kind, Sigma_hat)
    p = loss.p
    eta = 1.0 / loss.lipschitz
    S, L = np.zeros((p, p)), np.zeros((p, p))
    trace, stalled, converged, t = [], 0, False, 0
    for t in range(1, iters + 1):
        for _ in range(steps_per_outer):
            S = soft_threshold(S - eta * loss.grad(S - L), eta * lam * gamma)
            S = 0.5 * (S + S.T)
        for _ in range(steps_per_outer):
            # d/dL f(S - L) = -grad f(M)
            L = psd_soft_threshold(L + eta * loss.grad(S - L), eta * lam)
        obj = loss.value(S - L) + lam * (gamma * float(np.abs(S).sum()) + float(np.trace(L)))
        if not math.isfinite(obj):
            raise NumericalError(f"baseline objective became non-finite at iteration {t}")
        if trace:
            rel = (trace[-1] - obj) / max(abs(trace[-1]), 1.0)
            stalled = stalled + 1 if rel < rel_tol else 0
        trace.append(obj)
        if stalled >= patience:
            converged = True
            break
    vals, vecs = np.linalg.eigh(L)
    order = np.argsort(vals)[::-1]
    return BaselineEstimate(S=S, L=L, eigvals=vals[order], eigvecs=vecs[:, order], lam=lam,
                            gamma=gamma, objective_trace=trace, iterations=t, converged=converged)
