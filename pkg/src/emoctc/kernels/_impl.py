"""Hot numeric kernels, written so they compile under numba's nopython mode.

The public package imports these through ``emoctc.kernels``, which decides
at import time whether to wrap them with ``numba.njit`` (see EMOCTC_NUMBA).
Keep this module free of Python features numba cannot handle: no dicts,
no closures, no fancy indexing beyond what nopython mode supports.
"""
import numpy as np

NEG_INF = -np.inf


def ctc_forward_backward(logy, labels, blank):
    """Alpha-beta recursion over the blank-augmented label sequence.

    logy   : (T, C) log of row-stochastic class posteriors
    labels : (U,) int64 target labeling, entries in [0, C-1), no blanks
    blank  : index of the blank symbol (C - 1 by convention)

    Returns (logp, grad) where logp = log p(labels | Y) and grad is the
    (T, C) matrix of d(-logp)/dy[t, c].

    Everything stays in log space; -inf is a genuine log(0).
    """
    T, C = logy.shape
    U = labels.shape[0]
    S = 2 * U + 1

    # Augmented symbol at position s: blank at even s, labels[(s-1)//2] at odd s.
    alpha = np.full((T, S), NEG_INF)
    beta = np.full((T, S), NEG_INF)

    alpha[0, 0] = logy[0, blank]
    if S > 1:
        alpha[0, 1] = logy[0, labels[0]]

    for t in range(1, T):
        for s in range(S):
            if s % 2 == 0:
                sym = blank
            else:
                sym = labels[(s - 1) // 2]
            best = alpha[t - 1, s]
            if s >= 1 and alpha[t - 1, s - 1] > best:
                best = alpha[t - 1, s - 1]
            skip = False
            if s >= 2 and s % 2 == 1:
                if labels[(s - 1) // 2] != labels[(s - 3) // 2]:
                    skip = True
            if skip and alpha[t - 1, s - 2] > best:
                best = alpha[t - 1, s - 2]
            if best == NEG_INF:
                alpha[t, s] = NEG_INF
                continue
            acc = np.exp(alpha[t - 1, s] - best)
            if s >= 1:
                acc += np.exp(alpha[t - 1, s - 1] - best)
            if skip:
                acc += np.exp(alpha[t - 1, s - 2] - best)
            alpha[t, s] = best + np.log(acc) + logy[t, sym]

    if S > 1:
        a = alpha[T - 1, S - 1]
        b = alpha[T - 1, S - 2]
        m = a if a > b else b
        if m == NEG_INF:
            logp = NEG_INF
        else:
            logp = m + np.log(np.exp(a - m) + np.exp(b - m))
    else:
        logp = alpha[T - 1, 0]

    # beta excludes the emission at time t (suffix mass for times > t).
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0

    for t in range(T - 2, -1, -1):
        for s in range(S):
            best = NEG_INF
            # successor s' emits at time t+1
            for d in range(3):
                sp = s + d
                if sp >= S:
                    break
                if d == 2:
                    if sp % 2 == 0:
                        continue  # skip lands on blank: not allowed
                    if s % 2 == 0:
                        continue  # skips originate from label positions
                    if labels[(sp - 1) // 2] == labels[(s - 1) // 2]:
                        continue
                if sp % 2 == 0:
                    sym = blank
                else:
                    sym = labels[(sp - 1) // 2]
                v = beta[t + 1, sp] + logy[t + 1, sym]
                if v > best:
                    best = v
            if best == NEG_INF:
                beta[t, s] = NEG_INF
                continue
            acc = 0.0
            for d in range(3):
                sp = s + d
                if sp >= S:
                    break
                if d == 2:
                    if sp % 2 == 0 or s % 2 == 0:
                        continue
                    if labels[(sp - 1) // 2] == labels[(s - 1) // 2]:
                        continue
                if sp % 2 == 0:
                    sym = blank
                else:
                    sym = labels[(sp - 1) // 2]
                acc += np.exp(beta[t + 1, sp] + logy[t + 1, sym] - best)
            beta[t, s] = best + np.log(acc)

    grad = np.zeros((T, C))
    if logp == NEG_INF:
        return logp, grad

    for t in range(T):
        for s in range(S):
            if s % 2 == 0:
                sym = blank
            else:
                sym = labels[(s - 1) // 2]
            tot = alpha[t, s] + beta[t, s]
            if tot == NEG_INF:
                continue
            ly = logy[t, sym]
            if ly == NEG_INF:
                continue
            # d p / d y[t,sym] summed over augmented positions carrying sym
            grad[t, sym] -= np.exp(tot - ly - logp)

    return logp, grad


def lstm_forward(x, wx, wh, b):
    """Single-direction LSTM pass.

    x  : (T, D) inputs
    wx : (D, 4H), wh : (H, 4H), b : (4H,)  gate order [i, f, g, o]

    Returns (h, c, gates) with gates holding post-activation values,
    needed by lstm_backward.
    """
    T = x.shape[0]
    H = wh.shape[0]
    h = np.zeros((T, H))
    c = np.zeros((T, H))
    gates = np.zeros((T, 4 * H))
    hprev = np.zeros(H)
    cprev = np.zeros(H)
    for t in range(T):
        z = np.dot(x[t], wx) + np.dot(hprev, wh) + b
        for j in range(H):
            gi = 1.0 / (1.0 + np.exp(-z[j]))
            gf = 1.0 / (1.0 + np.exp(-z[H + j]))
            gg = np.tanh(z[2 * H + j])
            go = 1.0 / (1.0 + np.exp(-z[3 * H + j]))
            cv = gf * cprev[j] + gi * gg
            c[t, j] = cv
            h[t, j] = go * np.tanh(cv)
            gates[t, j] = gi
            gates[t, H + j] = gf
            gates[t, 2 * H + j] = gg
            gates[t, 3 * H + j] = go
        hprev = h[t]
        cprev = c[t]
    return h, c, gates


def lstm_backward(x, wx, wh, h, c, gates, dh_out):
    """Backprop through time for lstm_forward.

    dh_out : (T, H) upstream gradient on the hidden outputs.
    Returns (dx, dwx, dwh, db).
    """
    T, D = x.shape
    H = wh.shape[0]
    dx = np.zeros((T, D))
    dwx = np.zeros((D, 4 * H))
    dwh = np.zeros((H, 4 * H))
    db = np.zeros(4 * H)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    dz = np.zeros(4 * H)
    for t in range(T - 1, -1, -1):
        for j in range(H):
            gi = gates[t, j]
            gf = gates[t, H + j]
            gg = gates[t, 2 * H + j]
            go = gates[t, 3 * H + j]
            tc = np.tanh(c[t, j])
            dh = dh_out[t, j] + dh_next[j]
            dc = dh * go * (1.0 - tc * tc) + dc_next[j]
            cprev = c[t - 1, j] if t > 0 else 0.0
            dz[j] = dc * gg * gi * (1.0 - gi)
            dz[H + j] = dc * cprev * gf * (1.0 - gf)
            dz[2 * H + j] = dc * gi * (1.0 - gg * gg)
            dz[3 * H + j] = dh * tc * go * (1.0 - go)
            dc_next[j] = dc * gf
        db += dz
        dwx += np.outer(x[t], dz)
        if t > 0:
            dwh += np.outer(h[t - 1], dz)
        dx[t] = np.dot(wx, dz)
        dh_next = np.dot(wh, dz)
    return dx, dwx, dwh, db
