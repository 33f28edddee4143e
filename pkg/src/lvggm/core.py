"""Shared domain types: atoms, atomic PSD matrices, ground truth, estimates.

Symmetric matrices are plain ``numpy.ndarray`` objects; :func:`as_symmetric`
validates and symmetrizes them on ingestion.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class StructuralError(ValueError):
    """Shapes or index sets that do not fit together."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class NumericalError(RuntimeError):
    """A numerical routine failed (non-finite values, singular systems...)."""


class LossKind(enum.Enum):
    NEG_LOG_LIK = "ml"
    TAYLOR = "taylor"
    SCORE_MATCHING = "sm"
    # Decomposition of a known matrix: f(M) = 1/2 ||M - target||_F^2.
    FROBENIUS = "frobenius"

    @classmethod
    def parse(cls, value: "str | LossKind") -> "LossKind":
        if isinstance(value, cls):
            return value
        aliases = {
            "ml": cls.NEG_LOG_LIK, "neglogl": cls.NEG_LOG_LIK, "negloglik": cls.NEG_LOG_LIK,
            "t": cls.TAYLOR, "taylor": cls.TAYLOR,
            "sm": cls.SCORE_MATCHING, "score": cls.SCORE_MATCHING,
            "scorematching": cls.SCORE_MATCHING, "score_matching": cls.SCORE_MATCHING,
            "fro": cls.FROBENIUS, "frobenius": cls.FROBENIUS,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown loss kind {value!r}") from None

    @property
    def quadratic(self) -> bool:
        return self is not LossKind.NEG_LOG_LIK


def as_symmetric(M, dim: int | None = None) -> np.ndarray:
    """Return ``(M + M.T) / 2`` as a float array after shape/finiteness checks."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {A.shape}")
    if dim is not None and A.shape[0] != dim:
        raise StructuralError(f"expected dimension {dim}, got {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix has non-finite entries")
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class Atom:
    """One term ``c * u u^T`` with ``Supp(u)`` inside the sorted index set ``support``."""

    support: tuple[int, ...]
    u: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        support = tuple(sorted(int(i) for i in self.support))
        if len(set(support)) != len(support):
            raise StructuralError("atom support has repeated indices")
        u = np.array(self.u, dtype=float)
        if u.ndim != 1:
            raise StructuralError("atom vector must be one-dimensional")
        if support and (support[0] < 0 or support[-1] >= u.size):
            raise StructuralError("atom support out of range")
        mask = np.ones(u.size, dtype=bool)
        mask[list(support)] = False
        u[mask] = 0.0
        norm = np.linalg.norm(u)
        if norm == 0.0:
            raise DomainError("atom vector vanishes on its support")
        if abs(norm - 1.0) > 1e-12:
            u = u / norm
        if self.c < 0:
            raise DomainError(f"atom coefficient must be nonnegative, got {self.c}")
        u.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "c", float(self.c))

    @property
    def k(self) -> int:
        return len(self.support)

    @property
    def dim(self) -> int:
        return self.u.size

    def with_coefficient(self, c: float) -> "Atom":
        if c < 0:
            raise DomainError(f"atom coefficient must be nonnegative, got {c}")
        # support and u are already validated and immutable
        new = object.__new__(Atom)
        object.__setattr__(new, "support", self.support)
        object.__setattr__(new, "u", self.u)
        object.__setattr__(new, "c", float(c))
        return new

    def outer(self) -> np.ndarray:
        return np.outer(self.u, self.u)

    def to_dict(self) -> dict:
        return {"support": list(self.support), "u": [float(x) for x in self.u], "c": self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "Atom":
        return cls(tuple(d["support"]), np.asarray(d["u"], dtype=float), float(d["c"]))


@dataclass(frozen=True)
class AtomicPSD:
    """``L = sum_i c_i u_i u_i^T`` kept as an ordered list of atoms."""

    atoms: tuple[Atom, ...]
    dim: int

    def __init__(self, atoms: Iterable[Atom] = (), dim: int | None = None):
        atoms = tuple(atoms)
        if dim is None:
            if not atoms:
                raise StructuralError("dimension required for an empty atom list")
            dim = atoms[0].dim
        for a in atoms:
            if a.dim != dim:
                raise StructuralError(f"atom of dimension {a.dim} in a {dim}-dimensional list")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "dim", int(dim))

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([a.c for a in self.atoms], dtype=float)

    @property
    def vectors(self) -> np.ndarray:
        """Atom vectors as the columns of a ``dim x len(self)`` array."""
        if not self.atoms:
            return np.zeros((self.dim, 0))
        return np.column_stack([a.u for a in self.atoms])

    @property
    def supports(self) -> list[tuple[int, ...]]:
        return [a.support for a in self.atoms]

    def dense(self) -> np.ndarray:
        return materialize(self)

    def with_coefficients(self, c: Sequence[float]) -> "AtomicPSD":
        if len(c) != len(self.atoms):
            raise StructuralError("coefficient count does not match atom count")
        return AtomicPSD([a.with_coefficient(ci) for a, ci in zip(self.atoms, c)], self.dim)

    def to_json(self) -> str:
        return json.dumps({"dim": self.dim, "atoms": [a.to_dict() for a in self.atoms]}, indent=1)

    @classmethod
    def from_json(cls, text: str, dim: int | None = None) -> "AtomicPSD":
        doc = json.loads(text)
        if isinstance(doc, list):
            atoms = [Atom.from_dict(d) for d in doc]
        else:
            atoms = [Atom.from_dict(d) for d in doc["atoms"]]
            dim = doc.get("dim", dim)
        return cls(atoms, dim)


def materialize(L: AtomicPSD) -> np.ndarray:
    """Dense ``sum_i c_i u_i u_i^T``."""
    if not isinstance(L, AtomicPSD):
        L = AtomicPSD(L)
    if not L.atoms:
        return np.zeros((L.dim, L.dim))
    U = L.vectors
    out = (U * L.coefficients) @ U.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class GroundTruthModel:
    """Complete precision matrix over observed + hidden variables."""

    K_full: np.ndarray
    observed: tuple[int, ...]
    hidden: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]
    seed: int | None = None

    @property
    def p(self) -> int:
        return len(self.observed)

    @property
    def h(self) -> int:
        return len(self.hidden)

    def block(self, rows, cols) -> np.ndarray:
        return self.K_full[np.ix_(list(rows), list(cols))]

    @property
    def K_OO(self) -> np.ndarray:
        return self.block(self.observed, self.observed)

    @property
    def K_OH(self) -> np.ndarray:
        return self.block(self.observed, self.hidden)

    @property
    def K_HH(self) -> np.ndarray:
        return self.block(self.hidden, self.hidden)

    def latent_atoms(self) -> AtomicPSD:
        """``K_OH K_HH^{-1} K_HO`` as one atom per latent (``K_HH`` is diagonal)."""
        K_OH, d = self.K_OH, np.diag(self.K_HH)
        atoms = []
        for j in range(self.h):
            col = K_OH[:, j]
            nrm2 = float(col @ col)
            atoms.append(Atom(tuple(np.flatnonzero(col)), col, nrm2 / d[j]))
        return AtomicPSD(atoms, self.p)

    def structure_dict(self) -> dict:
        return {
            "observed": list(self.observed),
            "hidden": list(self.hidden),
            "groups": [list(g) for g in self.groups],
            "seed": self.seed,
        }


@dataclass
class Estimate:
    """Fitted pair ``(S, L)`` for the penalized problem plus diagnostics."""

    S: np.ndarray
    L: AtomicPSD
    lam: float
    gamma: float
    loss_kind: LossKind
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def L_dense(self) -> np.ndarray:
        return materialize(self.L)

    @property
    def M(self) -> np.ndarray:
        return self.S - self.L_dense

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "gamma": self.gamma,
            "loss": self.loss_kind.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_atoms": len(self.L),
            "objective": self.objective_trace[-1] if self.objective_trace else None,
            "objective_trace": list(self.objective_trace),
        }


def write_matrix(path, M: np.ndarray) -> None:
    """Write the plain text format: ``"p p"`` header then ``p`` rows."""
    M = np.asarray(M, dtype=float)
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in M]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise StructuralError(f"{path}: line 1: expected 'rows cols' header")
        n, m = int(header[0]), int(header[1])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != m:
                raise StructuralError(f"{path}: line {lineno}: expected {m} values, got {len(vals)}")
            rows.append([float(v) for v in vals])
    if len(rows) != n:
        raise StructuralError(f"{path}: expected {n} rows, got {len(rows)}")
    return np.array(rows, dtype=float).reshape(n, m)
