"""Numba kernels for the mean-loss recurrence.

The recurrence is O(D) per step thanks to the diagonal-plus-rank-one structure
of the update matrix:

    p <- d * p + (a^2 * c) * lam^2 * sum(p),    d_k = (1 - a lam_k)^2
    L  = (lam . p) / (2 D)

``c`` here is the a-independent part (1/beta - 1) / D. The noise term is the
high-dimensional limit of Theta diag(z z^T) Theta: each eigenmode receives
fresh variance proportional to lam_k^2 times the total residual mass sum(p).
The kernels are single-threaded on purpose: results must not depend on worker
counts. fastmath is restricted to reassociation-style flags so NaN/inf
detection keeps working.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_FASTMATH = {"reassoc", "contract", "arcp", "nsz"}


@njit(cache=True, fastmath=_FASTMATH)
def theory_losses(lrs, lam, c_coef, sentinel):
    """Full loss trajectory (T+1 values). Returns (losses, diverged).

    On divergence the trajectory is truncated after the offending step.
    """
    D = lam.size
    T = lrs.size
    inv = 1.0 / (2.0 * D)
    p = np.ones(D)
    losses = np.empty(T + 1)
    s = 0.0
    for k in range(D):
        s += lam[k]
    losses[0] = s * inv
    tot = float(D)
    for t in range(T):
        a = lrs[t]
        coef = a * a * c_coef
        s_new = 0.0
        tot_new = 0.0
        for k in range(D):
            base = 1.0 - a * lam[k]
            pk = base * base * p[k] + coef * lam[k] * lam[k] * tot
            p[k] = pk
            tot_new += pk
            s_new += lam[k] * pk
        s = s_new
        tot = tot_new
        loss = s * inv
        losses[t + 1] = loss
        if not np.isfinite(loss) or loss > sentinel:
            return losses[: t + 2], True
    return losses, False


@njit(cache=True, fastmath=_FASTMATH)
def theory_min_scores(mults, grid, lam, c_coef, sentinel):
    """Min-over-steps loss for every (shape, base LR) pair.

    mults: (n_shapes, T) multiplier curves; grid: (m,) base LRs.
    Returns (n_shapes, m); diverged pairs get +inf.
    """
    n, T = mults.shape
    m = grid.size
    D = lam.size
    inv = 1.0 / (2.0 * D)
    out = np.empty((n, m))
    p = np.empty(D)
    for i in range(n):
        for j in range(m):
            blr = grid[j]
            for k in range(D):
                p[k] = 1.0
            s = 0.0
            for k in range(D):
                s += lam[k]
            best = s * inv
            tot = float(D)
            diverged = False
            for t in range(T):
                a = blr * mults[i, t]
                coef = a * a * c_coef
                s_new = 0.0
                tot_new = 0.0
                for k in range(D):
                    base = 1.0 - a * lam[k]
                    pk = base * base * p[k] + coef * lam[k] * lam[k] * tot
                    p[k] = pk
                    tot_new += pk
                    s_new += lam[k] * pk
                s = s_new
                tot = tot_new
                loss = s * inv
                if not np.isfinite(loss) or loss > sentinel:
                    diverged = True
                    break
                if loss < best:
                    best = loss
            out[i, j] = np.inf if diverged else best
    return out


@njit(cache=True, fastmath=_FASTMATH)
def theory_forward_pvecs(lrs, lam, c_coef, sentinel):
    """Forward pass storing every p_t. Returns (P (T+1, D), losses, diverged)."""
    D = lam.size
    T = lrs.size
    inv = 1.0 / (2.0 * D)
    P = np.empty((T + 1, D))
    losses = np.empty(T + 1)
    s = 0.0
    for k in range(D):
        P[0, k] = 1.0
        s += lam[k]
    losses[0] = s * inv
    tot = float(D)
    for t in range(T):
        a = lrs[t]
        coef = a * a * c_coef
        s_new = 0.0
        tot_new = 0.0
        for k in range(D):
            base = 1.0 - a * lam[k]
            pk = base * base * P[t, k] + coef * lam[k] * lam[k] * tot
            P[t + 1, k] = pk
            tot_new += pk
            s_new += lam[k] * pk
        s = s_new
        tot = tot_new
        loss = s * inv
        losses[t + 1] = loss
        if not np.isfinite(loss) or loss > sentinel:
            return P[: t + 2], losses[: t + 2], True
    return P, losses, False


@njit(cache=True, fastmath=_FASTMATH)
def theory_adjoint(lrs, lam, c_coef, P, final_loss):
    """Adjoint pass: gradient of log(L_T) w.r.t. each per-step LR.

    P is the stored forward state; final_loss = L_T. Returns the zero vector
    when L_T == 0 (the loss sits at its fixed point, nothing to improve).
    """
    D = lam.size
    T = lrs.size
    g = np.zeros(T)
    if final_loss == 0.0:
        return g
    inv = 1.0 / (2.0 * D)
    a_vec = np.empty(D)
    for k in range(D):
        a_vec[k] = lam[k] * inv
    for t in range(T - 1, -1, -1):
        al = lrs[t]
        s_l2a = 0.0
        tot_p = 0.0
        for k in range(D):
            s_l2a += lam[k] * lam[k] * a_vec[k]
            tot_p += P[t, k]
        gt = 2.0 * al * c_coef * s_l2a * tot_p
        for k in range(D):
            gt -= 2.0 * a_vec[k] * lam[k] * (1.0 - al * lam[k]) * P[t, k]
        g[t] = gt
        coef = al * al * c_coef
        for k in range(D):
            base = 1.0 - al * lam[k]
            a_vec[k] = base * base * a_vec[k] + coef * s_l2a
    for t in range(T):
        g[t] /= final_loss
    return g
