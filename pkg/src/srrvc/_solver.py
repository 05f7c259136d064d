"""Compiled inner loops for the alternating A / blockwise-B solver.

Block problems are solved in the eigenbasis of ``G_j = Z_j^T Z_j`` so one
LQA step is a diagonal solve and the LQA fixed point only depends on a
scalar (the block norm).
"""

import numpy as np
from numba import njit

SCAD_CODE = 0
GROUP_LASSO_CODE = 1


@njit(cache=True)
def pen_value(x, kind, lam, a):
    if lam == 0.0:
        return 0.0
    if kind == GROUP_LASSO_CODE:
        return lam * x
    if x <= lam:
        return lam * x
    if x < a * lam:
        return (2.0 * a * lam * x - x * x - lam * lam) / (2.0 * (a - 1.0))
    return lam * lam * (a + 1.0) / 2.0


@njit(cache=True)
def pen_weight(x, kind, lam, a, eps):
    d = x if x > eps else eps
    if kind == GROUP_LASSO_CODE:
        return lam / d
    if x <= lam:
        return lam / d
    v = a * lam - x
    if v <= 0.0:
        return 0.0
    return v / (a - 1.0) / d


@njit(cache=True)
def _block_h(St, Bt, evals, n, penalized, kind, lam, a):
    # block objective up to the constant ||R_j||^2
    K, r = St.shape
    lin = 0.0
    quad = 0.0
    nrm2 = 0.0
    for k in range(K):
        row = 0.0
        for c in range(r):
            lin += St[k, c] * Bt[k, c]
            row += Bt[k, c] * Bt[k, c]
        quad += evals[k] * row
        nrm2 += row
    h = -2.0 * lin + quad
    if penalized:
        h += n * pen_value(np.sqrt(nrm2), kind, lam, a)
    return h


@njit(cache=True)
def block_solve(St, evals, Bt_cur, n, penalized, kind, lam, a, eps, tau,
                max_inner, inner_tol, cut):
    """New block coefficients (eigenbasis) for one blockwise update.

    Runs up to ``max_inner`` LQA steps, hard-zeroes a result whose norm is
    below ``tau``, and never returns a point with a larger block objective
    than ``Bt_cur``.
    """
    K, r = St.shape
    s2 = np.zeros(K)
    for k in range(K):
        for c in range(r):
            s2[k] += St[k, c] * St[k, c]

    cur_norm = 0.0
    for k in range(K):
        for c in range(r):
            cur_norm += Bt_cur[k, c] * Bt_cur[k, c]
    cur_norm = np.sqrt(cur_norm)

    shift = 0.0
    if penalized and lam > 0.0:
        x = cur_norm
        # the LQA weight blows up at a zero block, so a zeroed block could never
        # re-enter; when zero violates its optimality condition 2||S|| <= n lam
        # (both penalties have slope lam at 0+), start from the unpenalized norm
        if x < tau and 2.0 * np.sqrt(np.sum(s2)) > n * lam:
            x = 0.0
            for k in range(K):
                if evals[k] > cut:
                    x += s2[k] / (evals[k] * evals[k])
            x = np.sqrt(x)
        for _ in range(max_inner):
            shift = 0.5 * n * pen_weight(x, kind, lam, a, eps)
            xn = 0.0
            for k in range(K):
                d = evals[k] + shift
                if d > cut:
                    xn += s2[k] / (d * d)
            xn = np.sqrt(xn)
            done = abs(xn - x) <= inner_tol * max(x, eps)
            x = xn
            if done:
                break
        shift = 0.5 * n * pen_weight(x, kind, lam, a, eps)

    cand = np.zeros((K, r))
    nrm2 = 0.0
    for k in range(K):
        d = evals[k] + shift
        if d > cut:
            for c in range(r):
                cand[k, c] = St[k, c] / d
                nrm2 += cand[k, c] * cand[k, c]

    h_cur = _block_h(St, Bt_cur, evals, n, penalized, kind, lam, a)
    if penalized and np.sqrt(nrm2) < tau:
        zero = np.zeros((K, r))
        if _block_h(St, zero, evals, n, penalized, kind, lam, a) <= h_cur:
            return zero
    if _block_h(St, cand, evals, n, penalized, kind, lam, a) <= h_cur:
        return cand
    return Bt_cur.copy()


@njit(cache=True)
def procrustes(Y, M):
    """Orthonormal A minimizing ||Y - M A^T||^2, from the SVD of Y^T M."""
    U, _, Vt = np.linalg.svd(Y.T @ M, full_matrices=False)
    return np.ascontiguousarray(U @ Vt)


@njit(cache=True)
def _penalty_total(B, n, kind, lam, a):
    P = B.shape[0]
    tot = 0.0
    for j in range(1, P):
        tot += pen_value(np.sqrt(np.sum(B[j] * B[j])), kind, lam, a)
    return n * tot


@njit(cache=True)
def fit_loop(Zb, evals, evecs, Y, B, A, kind, lam, a, eps, tau,
             max_outer, max_inner, rel_tol, cut):
    """Alternate Procrustes A-steps with one blockwise sweep over B.

    ``Zb`` is (P, n, K), ``B`` is (P, K, r) and is updated in place along
    with ``A``. The trace holds the objective at the start and after every
    A-step and every B-sweep.
    """
    P, n, K = Zb.shape
    nf = float(n)
    yy = np.sum(Y * Y)

    M = np.zeros((n, B.shape[2]))
    for j in range(P):
        M += Zb[j] @ B[j]
    YA = Y @ A
    E = YA - M

    trace = np.empty(2 * max_outer + 1)
    pen = _penalty_total(B, nf, kind, lam, a)
    obj = yy - np.sum(YA * YA) + np.sum(E * E) + pen
    trace[0] = obj
    pos = 1
    converged = False
    it = 0
    while it < max_outer:
        it += 1
        prev = obj

        M = YA - E
        A_new = procrustes(Y, M)
        YA_new = Y @ A_new
        E_new = YA_new - M
        obj_a = yy - np.sum(YA_new * YA_new) + np.sum(E_new * E_new) + pen
        if obj_a <= obj:
            A[:, :] = A_new
            YA = YA_new
            E = E_new
            obj = obj_a
        trace[pos] = obj
        pos += 1

        for j in range(P):
            V = evecs[j]
            Bt_cur = V.T @ B[j]
            St = V.T @ (Zb[j].T @ E)
            for k in range(K):
                St[k] += evals[j, k] * Bt_cur[k]
            Bt_new = block_solve(St, evals[j], Bt_cur, nf, j > 0, kind, lam, a,
                                 eps, tau, max_inner, 1e-8, cut)
            B_new = V @ Bt_new
            D = B_new - B[j]
            if np.any(D != 0.0):
                E -= Zb[j] @ D
                B[j] = B_new

        # refresh the residual to keep incremental updates from drifting
        M = np.zeros((n, B.shape[2]))
        for j in range(P):
            M += Zb[j] @ B[j]
        E = YA - M
        pen = _penalty_total(B, nf, kind, lam, a)
        obj_b = yy - np.sum(YA * YA) + np.sum(E * E) + pen
        obj = obj_b
        trace[pos] = obj
        pos += 1

        if abs(prev - obj) <= rel_tol * max(abs(prev), 1e-300):
            converged = True
            break
    return trace[:pos], it, converged
