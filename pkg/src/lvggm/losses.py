"""Data-fit losses on a precision-matrix candidate ``M``.

Every quadratic loss here has the form::

    f(M) = 1/2 <M, A(M)> - <B, M> + const

with ``A`` a self-adjoint PSD operator on symmetric matrices. The solver only
needs ``A``, ``B`` and the bilinear form between rank-one atoms, which
:class:`QuadraticLoss` exposes.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .core import DomainError, LossKind, StructuralError, as_symmetric


def _check_pair(M, Sigma_hat):
    M = np.asarray(M, dtype=float)
    Sigma_hat = np.asarray(Sigma_hat, dtype=float)
    if M.shape != Sigma_hat.shape or M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise StructuralError(f"shape mismatch: {M.shape} vs {Sigma_hat.shape}")
    return M, Sigma_hat


def loss_value(kind, M, Sigma_hat) -> float:
    """Value of the loss ``kind`` at ``M``.

    For ``LossKind.FROBENIUS`` the second argument is the target matrix.
    """
    kind = LossKind.parse(kind)
    M, S = _check_pair(M, Sigma_hat)
    if kind is LossKind.NEG_LOG_LIK:
        try:
            c = linalg.cholesky(0.5 * (M + M.T), lower=True)
        except linalg.LinAlgError:
            raise DomainError("negative log-likelihood needs a positive definite M") from None
        return float(-2.0 * np.sum(np.log(np.diag(c))) + np.sum(M * S))
    if kind is LossKind.SCORE_MATCHING:
        return float(0.5 * np.sum((M @ M) * S) - np.trace(M))
    if kind is LossKind.TAYLOR:
        # 1/2 ||S^1/2 M S^1/2 - I||_F^2 expanded to avoid the square root
        SM = S @ M
        return float(0.5 * np.sum(SM * SM.T) - np.trace(SM) + 0.5 * M.shape[0])
    D = M - S
    return float(0.5 * np.sum(D * D))


def loss_grad(kind, M, Sigma_hat) -> np.ndarray:
    kind = LossKind.parse(kind)
    M, S = _check_pair(M, Sigma_hat)
    p = M.shape[0]
    if kind is LossKind.NEG_LOG_LIK:
        return as_symmetric(S - np.linalg.inv(M))
    if kind is LossKind.SCORE_MATCHING:
        G = 0.5 * (M @ S + S @ M) - np.eye(p)
    elif kind is LossKind.TAYLOR:
        G = S @ M @ S - S
    else:
        G = M - S
    return 0.5 * (G + G.T)


def lipschitz_const(kind, Sigma_hat) -> float:
    """Lipschitz constant of the gradient in Frobenius norm."""
    kind = LossKind.parse(kind)
    if kind is LossKind.FROBENIUS:
        return 1.0
    if not kind.quadratic:
        raise DomainError("the log-likelihood gradient has no global Lipschitz constant")
    S = as_symmetric(Sigma_hat)
    top = float(np.linalg.eigvalsh(S)[-1])
    top = max(top, 0.0)
    return top if kind is LossKind.SCORE_MATCHING else top * top


class QuadraticLoss:
    """A quadratic loss bound to its data matrix.

    Parameters
    ----------
    kind : LossKind
        Taylor, score matching or Frobenius.
    data : ndarray
        Empirical covariance (Taylor, score matching) or target matrix
        (Frobenius).
    scale : float
        Positive multiplier applied to the whole loss.
    """

    def __init__(self, kind, data, scale: float = 1.0):
        self.kind = LossKind.parse(kind)
        if not self.kind.quadratic:
            raise DomainError("only quadratic losses can be optimized")
        if not scale > 0:
            raise DomainError(f"loss scale must be positive, got {scale}")
        self.data = as_symmetric(data)
        self.scale = float(scale)
        self.p = self.data.shape[0]
        self._L = None

    @property
    def lipschitz(self) -> float:
        if self._L is None:
            self._L = self.scale * lipschitz_const(self.kind, self.data)
        return self._L

    def value(self, M) -> float:
        return self.scale * loss_value(self.kind, M, self.data)

    def grad(self, M) -> np.ndarray:
        G = loss_grad(self.kind, M, self.data)
        return G if self.scale == 1.0 else self.scale * G

    def apply_operator(self, X) -> np.ndarray:
        """The Hessian operator ``A`` applied to ``X``."""
        S = self.data
        if self.kind is LossKind.SCORE_MATCHING:
            out = 0.5 * (X @ S + S @ X)
        elif self.kind is LossKind.TAYLOR:
            out = S @ X @ S
        else:
            out = np.array(X, dtype=float)
        return self.scale * out

    def atom_gram(self, U: np.ndarray, V: np.ndarray | None = None) -> np.ndarray:
        """``H[i, j] = <u_i u_i^T, A(v_j v_j^T)>`` for columns of ``U`` and ``V``."""
        V = U if V is None else V
        inner = U.T @ V
        if self.kind is LossKind.FROBENIUS:
            out = inner * inner
        else:
            W = U.T @ self.data @ V
            out = inner * W if self.kind is LossKind.SCORE_MATCHING else W * W
        return out if self.scale == 1.0 else self.scale * out
