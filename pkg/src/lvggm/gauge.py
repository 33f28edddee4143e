"""The sparse-PSD atomic gauge, its weighted variant and its polar.

The polar of the gauge at ``Y`` is the largest positive eigenvalue over all
``k x k`` principal submatrices of ``Y`` (zero when none is positive). It is
computed exactly by enumeration for small problems and approximately by a
multi-start truncated power iteration otherwise; the same routine serves as
the linear minimization oracle of the solver.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import AtomicPSD, DomainError, as_symmetric

EXACT_BUDGET = 10**6
_CHUNK = 20000


class CapacityError(RuntimeError):
    """Exhaustive enumeration would exceed the combinatorial budget."""


@dataclass(frozen=True)
class GaugeSpec:
    """Either a fixed sparsity ``k`` or a weight ``w[k-1]`` per sparsity level."""

    k: int | None = None
    w: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.k is None) == (self.w is None):
            raise ValueError("give exactly one of k (fixed sparsity) or w (weights)")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive")
        if self.w is not None:
            w = tuple(float(x) for x in self.w)
            if any(x <= 0 for x in w):
                raise ValueError("weights must be positive")
            if any(b < a for a, b in zip(w, w[1:])):
                raise ValueError("weights must be non-decreasing in the sparsity level")
            object.__setattr__(self, "w", w)

    @classmethod
    def fixed(cls, k: int) -> "GaugeSpec":
        return cls(k=int(k))

    @classmethod
    def weighted(cls, w) -> "GaugeSpec":
        return cls(w=tuple(w))

    @classmethod
    def sqrt_weights(cls, p: int) -> "GaugeSpec":
        return cls(w=tuple(math.sqrt(k) for k in range(1, p + 1)))

    @property
    def is_weighted(self) -> bool:
        return self.w is not None

    def weight(self, level: int) -> float:
        """Penalty on an atom whose support has ``level`` indices."""
        if self.w is None:
            if level > self.k:
                raise DomainError(f"atom with {level} indices exceeds the sparsity budget {self.k}")
            return 1.0
        if not 1 <= level <= len(self.w):
            raise DomainError(f"no weight for sparsity level {level}")
        return self.w[level - 1]

    def to_dict(self) -> dict:
        return {"k": self.k} if self.w is None else {"w": list(self.w)}


@dataclass(frozen=True)
class PolarResult:
    value: float
    u: np.ndarray | None
    support: tuple[int, ...] | None
    sparsity_level: int
    # u^T Y u before division by the level weight (equals value for a fixed k)
    raw_value: float | None = None
    heuristic: bool = False


def omega_value(L: AtomicPSD, spec: GaugeSpec) -> float:
    """Gauge value of the given decomposition (an upper bound on the gauge of ``L``)."""
    return float(sum(spec.weight(a.k) * a.c for a in L.atoms))


def lambda_plus_max(Y) -> float:
    Y = np.asarray(Y, dtype=float)
    if Y.size == 0:
        return 0.0
    return max(float(np.linalg.eigvalsh(Y)[-1]), 0.0)


def _orient(u: np.ndarray) -> np.ndarray:
    # sign convention: largest-magnitude entry positive (smallest index on ties)
    j = int(np.argmax(np.abs(u)))
    return -u if u[j] < 0 else u


def _top_eigpair(Y: np.ndarray, support) -> tuple[float, np.ndarray]:
    idx = list(support)
    sub = Y[np.ix_(idx, idx)]
    vals, vecs = np.linalg.eigh(sub)
    u = np.zeros(Y.shape[0])
    u[idx] = vecs[:, -1]
    u = _orient(u / np.linalg.norm(u))
    return float(vals[-1]), u


def _result(Y, value, support, level, heuristic, weight=1.0) -> PolarResult:
    if support is None or value <= 0.0:
        return PolarResult(0.0, None, None, level, 0.0, heuristic)
    lam, u = _top_eigpair(Y, support)
    raw = float(u @ Y @ u)
    return PolarResult(raw / weight, u, tuple(int(i) for i in support), level, raw, heuristic)


def polar_exact(Y, k: int, budget: int = EXACT_BUDGET) -> PolarResult:
    """Exhaustive polar: ``max_{|I| = k} lambda_max^+(Y_II)``.

    The lexicographically smallest maximizing support is returned.
    """
    Y = as_symmetric(Y)
    p = Y.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"sparsity level must lie in [1, {p}], got {k}")
    n_sub = math.comb(p, k)
    if n_sub > budget:
        raise CapacityError(f"C({p},{k}) = {n_sub} subsets exceed the budget {budget}; use polar_tpi")
    scale = max(1.0, float(np.max(np.abs(Y))))
    best_val, best_sup = 0.0, None
    combos = itertools.combinations(range(p), k)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        idx = np.array(chunk, dtype=np.intp)
        subs = Y[idx[:, :, None], idx[:, None, :]]
        tops = np.linalg.eigvalsh(subs)[:, -1]
        j = int(np.argmax(tops))
        # first maximizer within the chunk, up to rounding
        j = int(np.flatnonzero(tops >= tops[j] - 1e-12 * scale)[0])
        if tops[j] > best_val + 1e-12 * scale:
            best_val, best_sup = float(tops[j]), chunk[j]
    return _result(Y, best_val, best_sup, k, heuristic=False)


def polar_tpi(Y, k: int, restarts: int = 10, max_iter: int = 200, seed: int = 0,
              tol: float = 1e-10, shift: float | None = None, eig=None,
              stable_iters: int = 10, polish_steps: int = 20) -> PolarResult:
    """Heuristic polar via multi-start truncated power iteration.

    Starts are the canonical vectors of the ``k`` largest diagonal entries,
    the truncated leading eigenvector of ``Y``, and ``restarts`` seeded
    Gaussian vectors. Each run's support is refined by an exact eigenpair of
    the selected principal submatrix, so the value never exceeds the exact
    polar. A run stops early once its support is unchanged for
    ``stable_iters`` iterations. The best support is then polished: one
    truncated power step from its exact eigenvector proposes a new support,
    kept while it strictly improves the value (at most ``polish_steps``).
    ``eig`` may carry a precomputed ``(evals, evecs)`` of ``Y``.
    """
    Y = as_symmetric(Y)
    p = Y.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"sparsity level must lie in [1, {p}], got {k}")
    if k == p:
        lam, u = _top_eigpair(Y, range(p))
        sup = tuple(range(p))
        return _result(Y, lam, sup, k, heuristic=False)

    evals, evecs = np.linalg.eigh(Y) if eig is None else eig
    if shift is None:
        shift = max(0.0, -float(evals[0]))
    if evals[-1] <= 0.0:
        return PolarResult(0.0, None, None, k, 0.0, heuristic=True)
    Ys = Y + shift * np.eye(p)

    diag = np.diag(Y)
    order = np.lexsort((np.arange(p), -diag))
    starts = []
    for j in order[:k]:
        e = np.zeros(p)
        e[j] = 1.0
        starts.append(e)
    starts.append(evecs[:, -1].copy())
    rng = np.random.default_rng(seed)
    starts.extend(rng.standard_normal((restarts, p)))

    seen: dict[tuple, float] = {}
    for x0 in starts:
        x, _ = kernels.tpi_iterate(Ys, x0, k, max_iter, tol, stable_iters)
        if not np.any(x):
            continue
        sup = tuple(int(i) for i in kernels.top_k_indices(x, k))
        if sup not in seen:
            seen[sup] = lambda_plus_max(Y[np.ix_(sup, sup)])
    if not seen:
        return PolarResult(0.0, None, None, k, 0.0, heuristic=True)
    best_sup = min(seen, key=lambda s: (-seen[s], s))
    best_val = seen[best_sup]
    for _ in range(polish_steps):
        _, u = _top_eigpair(Y, best_sup)
        sup = tuple(int(i) for i in kernels.top_k_indices(Ys @ u, k))
        if sup in seen:
            break
        seen[sup] = lambda_plus_max(Y[np.ix_(sup, sup)])
        if seen[sup] <= best_val:
            break
        best_sup, best_val = sup, seen[sup]
    return _result(Y, best_val, best_sup, k, heuristic=True)


def polar_weighted(Y, w, exact: bool = True, budget: int = EXACT_BUDGET,
                   **tpi_kwargs) -> PolarResult:
    """Polar of the weighted gauge: ``max_k polar(Y, k) / w_k``.

    Levels are scanned in increasing order; since the weights are
    non-decreasing, scanning stops once ``lambda_max^+(Y) / w_k`` can no
    longer beat the best ratio found.
    """
    Y = as_symmetric(Y)
    p = Y.shape[0]
    w = np.asarray(w, dtype=float)
    if w.size < p:
        raise ValueError(f"need {p} weights, got {w.size}")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    eig = np.linalg.eigh(Y)
    top = max(float(eig[0][-1]), 0.0)
    best = PolarResult(0.0, None, None, 1, 0.0, heuristic=False)
    if top <= 0.0:
        return best
    monotone = bool(np.all(np.diff(w[:p]) >= 0))
    for k in range(1, p + 1):
        if monotone and top / w[k - 1] <= best.value:
            break
        if exact and math.comb(p, k) <= budget:
            r = polar_exact(Y, k, budget)
        else:
            r = polar_tpi(Y, k, eig=eig, **tpi_kwargs)
        ratio = r.value / w[k - 1]
        if ratio > best.value:
            best = PolarResult(ratio, r.u, r.support, k, r.raw_value, r.heuristic)
    return best


def polar(Y, spec: GaugeSpec, exact: bool = False, **tpi_kwargs) -> PolarResult:
    """Polar for a :class:`GaugeSpec`; heuristic unless ``exact``."""
    if spec.is_weighted:
        return polar_weighted(Y, spec.w, exact=exact, **tpi_kwargs)
    k = min(spec.k, np.asarray(Y).shape[0])
    if exact:
        return polar_exact(Y, k)
    return polar_tpi(Y, k, **tpi_kwargs)
