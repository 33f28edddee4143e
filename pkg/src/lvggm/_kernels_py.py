"""Pure-Python reference versions of the compiled kernels in ``_kernels.pyx``.

Both implementations share semantics exactly, including tie-breaking in the
top-k selection (larger magnitude first, then smaller index).
"""

import numpy as np


def top_k_indices(y, k):
    """Indices of the ``k`` largest ``|y|``, ties broken by smaller index, sorted."""
    a = np.abs(y)
    order = np.lexsort((np.arange(a.size), -a))
    return np.sort(order[:k])


def tpi_iterate(Y, x0, k, max_iter, tol, stable_iters=0):
    """Truncated power iteration ``x <- normalize(truncate_k(Y x))``.

    ``Y`` should already be shifted to be positive semidefinite. Stops when
    the iterate moves by at most ``tol`` (max-norm) or, if ``stable_iters``
    is positive, once the support has not changed for that many iterations.
    Returns the final unit vector (zero vector if the iteration collapsed)
    and the number of iterations performed.
    """
    Y = np.asarray(Y, dtype=float)
    x = np.zeros(Y.shape[0])
    idx = top_k_indices(x0, k)
    x[idx] = x0[idx]
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        return x, 0
    x /= nrm
    it = stable = 0
    for it in range(1, max_iter + 1):
        y = Y @ x
        idx = top_k_indices(y, k)
        x_new = np.zeros_like(x)
        x_new[idx] = y[idx]
        nrm = np.linalg.norm(x_new)
        if nrm == 0.0:
            return x_new, it
        x_new /= nrm
        diff = np.max(np.abs(x_new - x))
        same = np.array_equal(x_new != 0.0, x != 0.0)
        x = x_new
        if diff <= tol:
            break
        stable = stable + 1 if same else 0
        if stable_iters > 0 and stable >= stable_iters:
            break
    return x, it


def nn_coordinate_descent(H, g, c, tol, max_sweeps):
    """Minimize ``1/2 c^T H c + g^T c`` over ``c >= 0`` by cyclic exact updates.

    ``c`` is updated in place. Returns ``(c, sweeps, residual)`` where
    ``residual`` is the largest coordinatewise optimality violation.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    Hc = H @ c
    residual = np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for i in range(n):
            hii = H[i, i]
            if hii <= 0.0:
                continue
            gi = Hc[i] + g[i]
            new = c[i] - gi / hii
            if new < 0.0:
                new = 0.0
            delta = new - c[i]
            if delta != 0.0:
                c[i] = new
                Hc += delta * H[:, i]
        grad = Hc + g
        viol = np.where(c > 0.0, np.abs(grad), np.maximum(-grad, 0.0))
        residual = float(viol.max()) if n else 0.0
        if residual <= tol:
            break
    return c, sweeps, residual
