"""Ground-truth latent-variable models, marginalization and sampling.

Graphs over observed variables are random trees (degree-capped) or
Erdos-Renyi draws; each latent variable is joined to one group of observed
variables. Precision matrices are sparse Wishart draws ``K = B B^T`` where
``B`` is the incidence matrix of the graph with Gaussian weights.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import DomainError, GroundTruthModel, NumericalError, as_symmetric, write_matrix


class ModelKind(enum.Enum):
    TREE3 = "tree3"
    TREE3_UNEVEN = "tree3uneven"
    OVERLAP4 = "overlap4"
    ERDOS_RENYI = "er"


class GenerationError(RuntimeError):
    pass


@dataclass
class ModelSpec:
    kind: ModelKind
    seed: int = 0
    n_samples: int | None = None
    ridge: float = 1e-3
    min_eig: float = 1e-4
    max_degree: int = 5
    edge_prob: float = 0.01
    p: int | None = None
    group_sizes: list[int] | None = None
    overlap: int = 5
    max_retries: int = 100

    def __post_init__(self):
        self.kind = ModelKind(self.kind)
        if self.kind is ModelKind.ERDOS_RENYI:
            self.p = self.p or 160
            self.group_sizes = self.group_sizes or [35, 35, 35, 35]
        elif self.kind is ModelKind.TREE3:
            self.p = self.p or 45
            self.group_sizes = self.group_sizes or [15, 15, 15]
        elif self.kind is ModelKind.TREE3_UNEVEN:
            self.p = self.p or 45
            self.group_sizes = self.group_sizes or [20, 15, 10]
        else:
            self.p = self.p or 45
            self.group_sizes = self.group_sizes or [15, 15, 15, 15]
        if self.n_samples is None:
            self.n_samples = 2000 if self.kind is ModelKind.ERDOS_RENYI else 50 * self.p
        self.groups()  # validates sizes against p

    @property
    def h(self) -> int:
        return len(self.group_sizes)

    def groups(self) -> list[tuple[int, ...]]:
        """Observed indices attached to each latent variable."""
        if self.kind is ModelKind.OVERLAP4:
            # consecutive groups share `overlap` variables
            groups, start = [], 0
            for size in self.group_sizes:
                groups.append(tuple(range(start, start + size)))
                start += size - self.overlap
            if groups[-1][-1] != self.p - 1:
                raise ValueError(f"overlapping groups cover {groups[-1][-1] + 1} variables, not p = {self.p}")
            return groups
        total = sum(self.group_sizes)
        if total > self.p:
            raise ValueError(f"group sizes sum to {total} > p = {self.p}")
        if self.kind is not ModelKind.ERDOS_RENYI and total != self.p:
            raise ValueError(f"group sizes sum to {total}, expected p = {self.p}")
        bounds = np.cumsum([0] + list(self.group_sizes))
        return [tuple(range(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]


def random_spanning_tree(n: int, rng) -> list[tuple[int, int]]:
    """Uniform spanning tree of the complete graph on ``n`` nodes (Wilson's algorithm)."""
    if n <= 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    nxt = np.full(n, -1)
    order = rng.permutation(n)
    in_tree[order[0]] = True
    for start in order[1:]:
        u = start
        while not in_tree[u]:
            v = int(rng.integers(n - 1))
            nxt[u] = v if v < u else v + 1
            u = nxt[u]
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            u = nxt[u]
    return sorted((min(u, int(nxt[u])), max(u, int(nxt[u]))) for u in range(n) if nxt[u] >= 0)


def degree_capped_tree(n: int, max_degree: int, rng, max_tries: int = 1000) -> list[tuple[int, int]]:
    for _ in range(max_tries):
        edges = random_spanning_tree(n, rng)
        deg = np.bincount(np.array(edges).ravel(), minlength=n) if edges else np.zeros(n)
        if deg.max(initial=0) <= max_degree:
            return edges
    raise GenerationError(f"no spanning tree with max degree <= {max_degree} in {max_tries} draws")


def erdos_renyi(n: int, prob: float, rng) -> list[tuple[int, int]]:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < prob
    return [(int(a), int(b)) for a, b in zip(iu[keep], ju[keep])]


def sparse_wishart(edges, n: int, rng) -> np.ndarray:
    """``B B^T`` with ``B`` the ``n x m`` incidence matrix carrying N(0, 1) weights."""
    edges = list(edges)
    B = np.zeros((n, len(edges)))
    for j, (a, b) in enumerate(edges):
        if a == b:
            raise ValueError(f"self-loop ({a}, {a}) in edge list")
        B[a, j], B[b, j] = rng.standard_normal(2)
    K = B @ B.T
    return 0.5 * (K + K.T)


def gen_model(spec: ModelSpec) -> GroundTruthModel:
    rng = np.random.default_rng(spec.seed)
    p, h = spec.p, spec.h
    groups = spec.groups()
    for _ in range(spec.max_retries):
        if spec.kind is ModelKind.ERDOS_RENYI:
            obs_edges = erdos_renyi(p, spec.edge_prob, rng)
        else:
            obs_edges = degree_capped_tree(p, spec.max_degree, rng)
        lat_edges = [(j, p + i) for i, g in enumerate(groups) for j in g]
        K = sparse_wishart(obs_edges + lat_edges, p + h, rng) + spec.ridge * np.eye(p + h)
        if np.linalg.eigvalsh(K)[0] >= spec.min_eig:
            return GroundTruthModel(K_full=K, observed=tuple(range(p)), hidden=tuple(range(p, p + h)),
                                    groups=tuple(groups), seed=spec.seed)
    raise GenerationError(f"no precision matrix with smallest eigenvalue >= {spec.min_eig} "
                          f"after {spec.max_retries} draws")


def marginal_precision(K, observed) -> np.ndarray:
    """Schur complement ``K_OO - K_OH K_HH^{-1} K_HO`` over the observed indices."""
    K = as_symmetric(K)
    O = np.asarray(sorted(observed), dtype=int)
    H = np.setdiff1d(np.arange(K.shape[0]), O)
    K_OO = K[np.ix_(O, O)]
    if H.size == 0:
        return K_OO
    K_OH = K[np.ix_(O, H)]
    K_HH = K[np.ix_(H, H)]
    try:
        cho = linalg.cho_factor(K_HH)
        corr = K_OH @ linalg.cho_solve(cho, K_OH.T)
    except linalg.LinAlgError:
        try:
            corr = K_OH @ linalg.solve(K_HH, K_OH.T, assume_a="sym")
        except linalg.LinAlgError:
            raise DomainError("K_HH is singular") from None
    out = K_OO - corr
    return 0.5 * (out + out.T)


def sample_covariance(K, observed, n: int, rng) -> np.ndarray:
    """Empirical second moment of ``n`` draws from ``N(0, K^{-1})`` restricted to ``observed``."""
    K = as_symmetric(K)
    try:
        R = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        raise NumericalError("precision matrix is not positive definite") from None
    Z = rng.standard_normal((K.shape[0], n))
    # K = R R^T  =>  x = R^{-T} z has covariance K^{-1}
    X = linalg.solve_triangular(R, Z, lower=True, trans="T")
    XO = X[np.asarray(sorted(observed), dtype=int)]
    S = XO @ XO.T / n
    return 0.5 * (S + S.T)


@dataclass
class SyntheticData:
    model: GroundTruthModel
    spec: ModelSpec
    Sigma_hat: np.ndarray
    S_true: np.ndarray = field(init=False)

    def __post_init__(self):
        self.S_true = self.model.K_OO

    @property
    def Sigma_inv(self) -> np.ndarray:
        return marginal_precision(self.model.K_full, self.model.observed)


def generate(spec: ModelSpec) -> SyntheticData:
    """Model plus the empirical covariance of ``spec.n_samples`` draws."""
    model = gen_model(spec)
    rng = np.random.default_rng([spec.seed, 1])
    Sigma_hat = sample_covariance(model.K_full, model.observed, spec.n_samples, rng)
    return SyntheticData(model, spec, Sigma_hat)


def save_model(model: GroundTruthModel, matrix_path, structure_path) -> None:
    write_matrix(matrix_path, model.K_full)
    with open(structure_path, "w") as fh:
        json.dump(model.structure_dict(), fh, indent=1)


def load_model(matrix_path, structure_path) -> GroundTruthModel:
    from .core import read_matrix

    K = read_matrix(matrix_path)
    with open(structure_path) as fh:
        d = json.load(fh)
    return GroundTruthModel(K_full=K, observed=tuple(d["observed"]), hidden=tuple(d["hidden"]),
                            groups=tuple(tuple(g) for g in d["groups"]), seed=d.get("seed"))


__all__ = [
    "ModelKind", "ModelSpec", "GenerationError", "random_spanning_tree", "degree_capped_tree",
    "erdos_renyi", "sparse_wishart", "gen_model", "marginal_precision", "sample_covariance",
    "SyntheticData", "generate", "save_model", "load_model",
]
