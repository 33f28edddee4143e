"""Recovery metrics and reconstruction of the complete concentration matrix."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core import AtomicPSD, as_symmetric

DEFAULT_REL_THRESHOLD = 1e-6


@dataclass(frozen=True)
class SupportMetrics:
    precision: float
    recall: float
    f1: float
    true_positives: int
    n_estimated: int
    n_true: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def default_threshold(S_hat) -> float:
    S_hat = np.asarray(S_hat, dtype=float)
    return DEFAULT_REL_THRESHOLD * float(np.max(np.abs(S_hat), initial=0.0))


def edge_mask(S, threshold: float) -> np.ndarray:
    """Upper-triangular off-diagonal entries with ``|S_ij| > threshold``."""
    S = np.asarray(S, dtype=float)
    return np.triu(np.abs(S) > threshold, k=1)


def support_metrics(S_hat, S_true, threshold: float | None = None) -> SupportMetrics:
    """Precision, recall and F1 of the off-diagonal support of ``S_hat``.

    ``threshold`` applies to ``S_hat``; the true support is the exact nonzero
    pattern of ``S_true``. With no estimated (resp. true) edges precision
    (resp. recall) is defined as 1.
    """
    S_hat, S_true = np.asarray(S_hat, dtype=float), np.asarray(S_true, dtype=float)
    if S_hat.shape != S_true.shape:
        raise ValueError(f"shape mismatch {S_hat.shape} vs {S_true.shape}")
    if threshold is None:
        threshold = default_threshold(S_hat)
    est = edge_mask(S_hat, threshold)
    true = edge_mask(S_true, 0.0)
    tp = int(np.sum(est & true))
    n_est, n_true = int(est.sum()), int(true.sum())
    precision = tp / n_est if n_est else 1.0
    recall = tp / n_true if n_true else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return SupportMetrics(precision, recall, f1, tp, n_est, n_true)


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 1.0


@dataclass(frozen=True)
class AtomMatching:
    pairs: list[tuple[int, int, float]]  # (atom index, group index, Jaccard)
    unmatched_atoms: list[int]
    unmatched_groups: list[int]

    @property
    def jaccards(self) -> list[float]:
        return [j for _, _, j in self.pairs]

    def all_matched(self, n_groups: int, min_jaccard: float) -> bool:
        """True when every group is paired at Jaccard ``>= min_jaccard``."""
        return len(self.pairs) == n_groups and all(j >= min_jaccard for j in self.jaccards)


def match_atoms(supports, groups) -> AtomMatching:
    """Greedy maximum-Jaccard matching between atom supports and true groups.

    ``supports`` may be an :class:`AtomicPSD` or a list of index sets. Pairs
    with Jaccard 0 are never formed. Ties go to the smaller (atom, group)
    index pair.
    """
    if isinstance(supports, AtomicPSD):
        supports = supports.supports
    supports, groups = [set(s) for s in supports], [set(g) for g in groups]
    cand = sorted(((-jaccard(s, g), i, j) for i, s in enumerate(supports) for j, g in enumerate(groups)))
    used_a, used_g, pairs = set(), set(), []
    for neg, i, j in cand:
        if neg == 0.0:
            break
        if i in used_a or j in used_g:
            continue
        used_a.add(i)
        used_g.add(j)
        pairs.append((i, j, -neg))
    return AtomMatching(
        pairs=pairs,
        unmatched_atoms=[i for i in range(len(supports)) if i not in used_a],
        unmatched_groups=[j for j in range(len(groups)) if j not in used_g],
    )


def eigvec_supports(eigvecs, rank: int, rel_threshold: float = 0.1) -> list[tuple[int, ...]]:
    """Support of each of the top ``rank`` eigenvector columns.

    An entry belongs to the support when its magnitude exceeds
    ``rel_threshold`` times the column's largest magnitude.
    """
    V = np.asarray(eigvecs, dtype=float)[:, :rank]
    out = []
    for v in V.T:
        a = np.abs(v)
        out.append(tuple(int(i) for i in np.flatnonzero(a > rel_threshold * a.max())))
    return out


def reconstruct_complete(S, L: AtomicPSD) -> np.ndarray:
    """Complete precision over ``r`` latent + ``p`` observed variables, latent first.

    Atom ``c u u^T`` becomes the latent column ``sqrt(c) u`` with unit latent
    precision. Columns are identifiable only up to sign and up to trading a
    positive scale against the latent diagonal; this picks the unit-diagonal
    representative.
    """
    S = as_symmetric(S)
    p, r = S.shape[0], len(L)
    if r and L.dim != p:
        raise ValueError(f"S has dimension {p} but L has dimension {L.dim}")
    B = L.vectors * np.sqrt(L.coefficients) if r else np.zeros((p, 0))
    K = np.empty((r + p, r + p))
    K[:r, :r] = np.eye(r)
    K[:r, r:] = B.T
    K[r:, :r] = B
    K[r:, r:] = S
    return K


def csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    """Deterministic CSV: fixed column order, floats in shortest round-trip form."""
    if not rows:
        return ""
    columns = columns or list(rows[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)
