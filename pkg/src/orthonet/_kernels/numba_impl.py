"""Numba-jitted kernel implementations (default backend when available).

Same contracts as ``numpy_impl``; explicit loops fuse the elementwise work and
avoid the large N x m / m x m intermediates. All kernels are single-threaded
with fixed summation order, so results are deterministic run-to-run.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def empirical_loss_grad_parts(X, y, W, norms, use_abs):
    n, d = X.shape
    m = W.shape[0]
    gA = np.zeros(m)
    gB = np.zeros((m, d))
    WT = np.ascontiguousarray(W.T)
    scale = norms / m
    sse = 0.0
    chunk = 4096
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        Xc = np.ascontiguousarray(X[lo:hi])
        P = np.dot(Xc, WT)
        b = hi - lo
        r = np.empty(b)
        for j in range(b):
            f = 0.0
            for i in range(m):
                s = P[j, i]
                if use_abs:
                    act = -s if s < 0.0 else s
                else:
                    act = s if s > 0.0 else 0.0
                f += scale[i] * act
            rj = f - y[lo + j]
            r[j] = rj
            sse += rj * rj
        # overwrite P in place: P[j,i] <- r_j * act'(p_ji); accumulate gA first
        for j in range(b):
            rj = r[j]
            for i in range(m):
                s = P[j, i]
                if use_abs:
                    act = -s if s < 0.0 else s
                    dact = 1.0 if s > 0.0 else (-1.0 if s < 0.0 else 0.0)
                else:
                    act = s if s > 0.0 else 0.0
                    dact = 1.0 if s > 0.0 else 0.0
                gA[i] += rj * act
                P[j, i] = rj * dact
        gB += np.dot(np.ascontiguousarray(P.T), Xc)
    return sse, gA, gB


@njit(cache=True)
def predict_parts(X, W, norms, use_abs):
    n, d = X.shape
    m = W.shape[0]
    out = np.empty(n)
    for j in range(n):
        f = 0.0
        for i in range(m):
            s = 0.0
            for k in range(d):
                s += W[i, k] * X[j, k]
            if use_abs:
                act = -s if s < 0.0 else s
            else:
                act = s if s > 0.0 else 0.0
            f += norms[i] * act
        out[j] = f / m
    return out


@njit(cache=True)
def pairwise_power_sums(U, beta, V, a, orders):
    m, d = U.shape
    dt = V.shape[0]
    n_ord = orders.shape[0]
    ss = np.zeros(n_ord)
    st = np.zeros(n_ord)
    for p in range(m):
        bp = beta[p]
        if bp == 0.0:
            continue
        for q in range(m):
            bq = beta[q]
            if bq == 0.0:
                continue
            g = 0.0
            for k in range(d):
                g += U[p, k] * U[q, k]
            w = bp * bq
            pw = 1.0
            cur = 0
            for t in range(n_ord):
                j = orders[t]
                while cur < j:
                    pw *= g
                    cur += 1
                ss[t] += w * pw
        for l in range(dt):
            g = 0.0
            for k in range(d):
                g += U[p, k] * V[l, k]
            w = bp * a[l]
            pw = 1.0
            cur = 0
            for t in range(n_ord):
                j = orders[t]
                while cur < j:
                    pw *= g
                    cur += 1
                st[t] += w * pw
    return ss, st


@njit(cache=True)
def pairwise_grad_accum(U, beta, V, a, orders, cA_s, cA_t, cB_s, cB_t):
    m, d = U.shape
    dt = V.shape[0]
    n_ord = orders.shape[0]
    A = np.zeros(m)
    B = np.zeros((m, d))
    for p in range(m):
        for q in range(m):
            bq = beta[q]
            if bq == 0.0:
                continue
            g = 0.0
            for k in range(d):
                g += U[p, k] * U[q, k]
            sA = 0.0
            sB = 0.0
            pw = 1.0
            cur = 0
            for t in range(n_ord):
                j = orders[t]
                while cur < j:
                    if cur == j - 1:
                        sB += cB_s[t] * pw
                    pw *= g
                    cur += 1
                sA += cA_s[t] * pw
            A[p] += bq * sA
            c = bq * sB
            if c != 0.0:
                for k in range(d):
                    B[p, k] += c * U[q, k]
        for l in range(dt):
            al = a[l]
            g = 0.0
            for k in range(d):
                g += U[p, k] * V[l, k]
            sA = 0.0
            sB = 0.0
            pw = 1.0
            cur = 0
            for t in range(n_ord):
                j = orders[t]
                while cur < j:
                    if cur == j - 1:
                        sB += cB_t[t] * pw
                    pw *= g
                    cur += 1
                sA += cA_t[t] * pw
            A[p] -= al * sA
            c = al * sB
            if c != 0.0:
                for k in range(d):
                    B[p, k] -= c * V[l, k]
    return A, B


@njit(cache=True)
def parity_weighted_mean(P, q):
    n_feat, r = P.shape
    total = 1 << r
    tau = np.empty(r)
    acc = 0.0
    for code in range(total):
        parity = 1.0
        for b in range(r):
            if (code >> b) & 1:
                tau[b] = -1.0
                parity = -parity
            else:
                tau[b] = 1.0
        val = 0.0
        for i in range(n_feat):
            s = 0.0
            for b in range(r):
                s += P[i, b] * tau[b]
            val += q[i] * (-s if s < 0.0 else s)
        acc += parity * val
    return acc / total
