"""Pure-numpy kernel implementations (fallback backend).

Large intermediates are processed in fixed-size chunks so memory stays bounded
and summation order stays deterministic regardless of problem size.
"""

from __future__ import annotations

import numpy as np

# Rows per chunk for N x m / m x m intermediates.
_CHUNK = 4096


def empirical_loss_grad_parts(X, y, W, norms, use_abs):
    """Fused forward + backward for the empirical square loss.

    Returns (sse, gA, gB) where sse = sum of squared residuals,
    gA[i] = sum_j r_j * act(<w_i, x_j>), gB[i] = sum_j r_j * act'(<w_i,x_j>) * x_j.
    The caller assembles loss and per-neuron gradients from these.
    """
    n = X.shape[0]
    m = W.shape[0]
    scale = norms / m
    gA = np.zeros(m)
    gB = np.zeros_like(W)
    sse = 0.0
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        Xc = X[lo:hi]
        P = Xc @ W.T
        if use_abs:
            act = np.abs(P)
            dact = np.sign(P)
        else:
            act = np.maximum(P, 0.0)
            dact = (P > 0.0).astype(np.float64)
        r = act @ scale - y[lo:hi]
        sse += float(r @ r)
        gA += act.T @ r
        gB += (dact * r[:, None]).T @ Xc
    return sse, gA, gB


def predict_parts(X, W, norms, use_abs):
    """Ensemble forward pass: f(x_j) = (1/m) sum_i norms[i] * act(<w_i, x_j>)."""
    n = X.shape[0]
    m = W.shape[0]
    scale = norms / m
    out = np.empty(n)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        P = X[lo:hi] @ W.T
        act = np.abs(P) if use_abs else np.maximum(P, 0.0)
        out[lo:hi] = act @ scale
    return out


def pairwise_power_sums(U, beta, V, a, orders):
    """Per-order pairwise sums of the loss decomposition.

    ss[t] = sum_{p,q} beta_p beta_q <U_p, U_q>^orders[t]
    st[t] = sum_{p,l} beta_p a_l    <U_p, V_l>^orders[t]

    ``orders`` must be sorted ascending. Rows of U with beta == 0 contribute
    nothing (zero rows are passed as zero vectors).
    """
    m = U.shape[0]
    n_ord = len(orders)
    ss = np.zeros(n_ord)
    st = np.zeros(n_ord)
    chunk = max(1, _CHUNK * 64 // max(m, 1))
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        G = U[lo:hi] @ U.T
        T = U[lo:hi] @ V.T
        bc = beta[lo:hi]
        Pg = np.ones_like(G)
        Pt = np.ones_like(T)
        cur = 0
        for t, j in enumerate(orders):
            while cur < j:
                Pg *= G
                Pt *= T
                cur += 1
            ss[t] += bc @ (Pg @ beta)
            st[t] += bc @ (Pt @ a)
    return ss, st


def pairwise_grad_accum(U, beta, V, a, orders, cA_s, cA_t, cB_s, cB_t):
    """Accumulators for the exact gradient of the per-order decomposition.

    A[p] = sum_t ( cA_s[t] * sum_q beta_q <U_p,U_q>^j  -  cA_t[t] * sum_l a_l <U_p,V_l>^j )
    B[p] = sum_t ( cB_s[t] * sum_q beta_q <U_p,U_q>^(j-1) U_q
                   - cB_t[t] * sum_l a_l <U_p,V_l>^(j-1) V_l )

    with j = orders[t] (sorted ascending; coefficient arrays aligned).
    Orders with j == 0 must carry cB == 0.
    """
    m, d = U.shape
    A = np.zeros(m)
    B = np.zeros((m, d))
    chunk = max(1, _CHUNK * 64 // max(m, 1))
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        G = U[lo:hi] @ U.T
        T = U[lo:hi] @ V.T
        WA_s = np.zeros_like(G)
        WA_t = np.zeros_like(T)
        WB_s = np.zeros_like(G)
        WB_t = np.zeros_like(T)
        Pg = np.ones_like(G)
        Pt = np.ones_like(T)
        cur = 0
        for t, j in enumerate(orders):
            while cur < j:
                if cur == j - 1:
                    WB_s += cB_s[t] * Pg
                    WB_t += cB_t[t] * Pt
                Pg *= G
                Pt *= T
                cur += 1
            WA_s += cA_s[t] * Pg
            WA_t += cA_t[t] * Pt
        A[lo:hi] = (WA_s * beta[None, :]).sum(axis=1) - (WA_t * a[None, :]).sum(axis=1)
        B[lo:hi] = (WB_s * beta[None, :]) @ U - (WB_t * a[None, :]) @ V
    return A, B


def parity_weighted_mean(P, q):
    """E_tau[ (sum_i q_i |<P_i, tau>|) * prod_b tau_b ] over tau in {+-1}^r.

    P has shape (n_features, r). Enumeration is chunked over the 2^r sign
    patterns in ascending code order.
    """
    n_feat, r = P.shape
    total = 1 << r
    acc = 0.0
    bits_idx = np.arange(r, dtype=np.uint64)
    chunk = 1 << 16
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        codes = np.arange(lo, hi, dtype=np.uint64)
        bits = (codes[:, None] >> bits_idx[None, :]) & np.uint64(1)
        tau = 1.0 - 2.0 * bits.astype(np.float64)
        parity = 1.0 - 2.0 * (bits.sum(axis=1) & np.uint64(1)).astype(np.float64)
        vals = np.abs(tau @ P.T) @ q
        acc += float(parity @ vals)
    return acc / total
