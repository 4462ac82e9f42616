"""Compiled inner loops.

Everything here works on plain arrays so the same code path serves the
public per-node API and the fitting loops. Networks arrive in CSR form
(``indptr``, ``indices``) with each row strictly increasing.
"""

import math

import numpy as np
from numba import njit

LOGIT = 0
PROBIT = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SH11 = np.uint64(11)
_SH27 = np.uint64(27)
_SH30 = np.uint64(30)
_SH31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# Below this the erfc-based Mills ratio is replaced by a continued fraction.
_MILLS_SWITCH = -25.0


# ---------------------------------------------------------------------------
# Counter-based random numbers (splitmix64 finaliser).
# ---------------------------------------------------------------------------


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _SH30)) * _MIX1
    z = (z ^ (z >> _SH27)) * _MIX2
    return z ^ (z >> _SH31)


@njit(cache=True)
def stream_key(seed, domain, a, b):
    """Key for an independent stream indexed by ``(seed, domain, a, b)``."""
    k = mix64(np.uint64(seed) ^ _GOLDEN)
    k = mix64(k + np.uint64(domain) * _GOLDEN)
    k = mix64(k ^ (np.uint64(a) * _MIX1 + _GOLDEN))
    return mix64(k ^ (np.uint64(b) * _MIX2 + _GOLDEN))


@njit(cache=True)
def key_uniform(key):
    """Uniform on [0, 1) as a pure function of a key."""
    return np.float64(mix64(key) >> _SH11) * _INV53


@njit(cache=True)
def next_u64(state):
    state[0] += _GOLDEN
    return mix64(state[0])


@njit(cache=True)
def next_uniform(state):
    """Uniform on (0, 1]."""
    return (np.float64(next_u64(state) >> _SH11) + 1.0) * _INV53


@njit(cache=True)
def next_below(state, m):
    k = int(next_uniform(state) * m)
    return m - 1 if k >= m else k


@njit(cache=True)
def permutation(n, state):
    out = np.arange(n)
    for k in range(n - 1, 0, -1):
        j = next_below(state, k + 1)
        tmp = out[k]
        out[k] = out[j]
        out[j] = tmp
    return out


# ---------------------------------------------------------------------------
# Scalar moments.
# ---------------------------------------------------------------------------


@njit(cache=True)
def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def norm_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def link_inv(x, link):
    if link == LOGIT:
        return sigmoid(x)
    return norm_cdf(x)


@njit(cache=True)
def pg_mean(xi):
    """Mean of PG(1, xi): tanh(xi/2) / (2 xi)."""
    a = abs(xi)
    if a < 1e-3:
        a2 = a * a
        return 0.25 - a2 / 48.0 + a2 * a2 / 480.0
    return math.tanh(0.5 * a) / (2.0 * a)


@njit(cache=True)
def mills(x):
    """phi(x) / Phi(x), finite for any real x."""
    if x > _MILLS_SWITCH:
        return _INV_SQRT_2PI * math.exp(-0.5 * x * x) / norm_cdf(x)
    # phi(x)/Phi(x) = t + 1/(t + 2/(t + 3/(t + ...))) with t = -x
    t = -x
    acc = t
    for k in range(60, 0, -1):
        acc = t + k / acc
    return acc


@njit(cache=True)
def tn_mean(g, y):
    """Mean of N(g, 1) truncated to (0, inf) if y == 1, else (-inf, 0)."""
    if y == 1:
        return g + mills(g)
    return g - mills(-g)


@njit(cache=True)
def frob(A, B):
    H = A.shape[0]
    s = 0.0
    for a in range(H):
        for b in range(H):
            s += A[a, b] * B[a, b]
    return s


@njit(cache=True)
def xi_of(Si, Sj):
    v = frob(Si, Sj)
    return math.sqrt(v) if v > 0.0 else 0.0


@njit(cache=True)
def dot(x, y):
    s = 0.0
    for h in range(x.shape[0]):
        s += x[h] * y[h]
    return s


# ---------------------------------------------------------------------------
# Gaussian natural parameters.
# ---------------------------------------------------------------------------


@njit(cache=True)
def moments_into(lam1, lam2, mu, Sig, S, L):
    """Fill (mu, Sigma, S) from (lam1, lam2); False if -2 lam2 is not SPD.

    ``L`` is H x H scratch that receives the Cholesky factor.
    """
    H = lam1.shape[0]
    for a in range(H):
        for b in range(a + 1):
            s = -2.0 * lam2[a, b]
            for k in range(b):
                s -= L[a, k] * L[b, k]
            if a == b:
                if not s > 0.0:
                    return False
                L[a, a] = math.sqrt(s)
            else:
                L[a, b] = s / L[b, b]
        for b in range(a + 1, H):
            L[a, b] = 0.0
    # Sigma = L^-T L^-1, column by column of the identity.
    for c in range(H):
        col = np.zeros(H)
        for a in range(H):
            s = 1.0 if a == c else 0.0
            for k in range(a):
                s -= L[a, k] * col[k]
            col[a] = s / L[a, a]
        for a in range(H - 1, -1, -1):
            s = col[a]
            for k in range(a + 1, H):
                s -= L[k, a] * col[k]
            col[a] = s / L[a, a]
        for a in range(H):
            Sig[a, c] = col[a]
    for a in range(H):
        for b in range(a):
            v = 0.5 * (Sig[a, b] + Sig[b, a])
            Sig[a, b] = v
            Sig[b, a] = v
    # mu solves (-2 lam2) mu = lam1 by the same factor.
    for a in range(H):
        s = lam1[a]
        for k in range(a):
            s -= L[a, k] * mu[k]
        mu[a] = s / L[a, a]
    for a in range(H - 1, -1, -1):
        s = mu[a]
        for k in range(a + 1, H):
            s -= L[k, a] * mu[k]
        mu[a] = s / L[a, a]
    for a in range(H):
        for b in range(H):
            S[a, b] = Sig[a, b] + mu[a] * mu[b]
    return True


@njit(cache=True)
def all_moments(lam1, lam2, mu, Sig, S):
    """Moments for every node; returns the first failing index or -1."""
    H = lam1.shape[1]
    L = np.empty((H, H))
    for i in range(lam1.shape[0]):
        if not moments_into(lam1[i], lam2[i], mu[i], Sig[i], S[i], L):
            return i
    return -1


# ---------------------------------------------------------------------------
# Per-node natural-parameter targets.
# ---------------------------------------------------------------------------


@njit(cache=True)
def node_target(i, conn, zero, r, mu, S, a0, link, t1, t2):
    """Stratified target for node i.

    ``conn`` holds every neighbour, ``zero`` the (sub)sampled non-neighbours
    whose contribution is scaled by ``r``. Writes the lambda1 target into
    ``t1`` and the lambda2 target into ``t2``.
    """
    H = mu.shape[1]
    c1 = np.zeros(H)
    c2 = np.zeros((H, H))
    z1 = np.zeros(H)
    z2 = np.zeros((H, H))
    Si = S[i]
    mui = mu[i]
    if link == LOGIT:
        for idx in range(conn.shape[0]):
            j = conn[idx]
            w = pg_mean(xi_of(Si, S[j]))
            for a in range(H):
                c1[a] += mu[j, a]
                for b in range(H):
                    c2[a, b] += w * S[j, a, b]
        for idx in range(zero.shape[0]):
            j = zero[idx]
            w = pg_mean(xi_of(Si, S[j]))
            for a in range(H):
                z1[a] += mu[j, a]
                for b in range(H):
                    z2[a, b] += w * S[j, a, b]
        for a in range(H):
            t1[a] = 0.5 * c1[a] - 0.5 * r * z1[a] + a0[a]
    else:
        for idx in range(conn.shape[0]):
            j = conn[idx]
            zt = tn_mean(dot(mui, mu[j]), 1)
            for a in range(H):
                c1[a] += mu[j, a] * zt
                for b in range(H):
                    c2[a, b] += S[j, a, b]
        for idx in range(zero.shape[0]):
            j = zero[idx]
            zt = tn_mean(dot(mui, mu[j]), 0)
            for a in range(H):
                z1[a] += mu[j, a] * zt
                for b in range(H):
                    z2[a, b] += S[j, a, b]
        for a in range(H):
            t1[a] = c1[a] + r * z1[a] + a0[a]
    for a in range(H):
        for b in range(H):
            t2[a, b] = -0.5 * (c2[a, b] + r * z2[a, b] + (1.0 if a == b else 0.0))


# ---------------------------------------------------------------------------
# Non-neighbour sampling.
# ---------------------------------------------------------------------------


@njit(cache=True)
def excluded(indptr, indices, i):
    """Sorted neighbours of i with i itself merged in."""
    nb = indices[indptr[i]:indptr[i + 1]]
    out = np.empty(nb.shape[0] + 1, dtype=np.int64)
    k = 0
    placed = False
    for j in nb:
        if not placed and i < j:
            out[k] = i
            k += 1
            placed = True
        out[k] = j
        k += 1
    if not placed:
        out[k] = i
    return out


@njit(cache=True)
def complement(n, indptr, indices, i):
    ex = excluded(indptr, indices, i)
    out = np.empty(n - ex.shape[0], dtype=np.int64)
    p = 0
    k = 0
    for j in range(n):
        if p < ex.shape[0] and ex[p] == j:
            p += 1
        else:
            out[k] = j
            k += 1
    return out


@njit(cache=True)
def ranks_to_nodes(ranks, ex):
    """Map sorted complement ranks to node ids, skipping the sorted ``ex``."""
    out = np.empty(ranks.shape[0], dtype=np.int64)
    p = 0
    for k in range(ranks.shape[0]):
        r = ranks[k]
        while p < ex.shape[0] and ex[p] - p <= r:
            p += 1
        out[k] = r + p
    return out


@njit(cache=True)
def distinct_ranks(N, k, state):
    """k distinct sorted integers from [0, N), uniformly (Floyd's method)."""
    if k >= N:
        return np.arange(N)
    chosen = set()
    for top in range(N - k, N):
        t = next_below(state, top + 1)
        if t in chosen:
            chosen.add(top)
        else:
            chosen.add(t)
    out = np.empty(k, dtype=np.int64)
    m = 0
    for v in chosen:
        out[m] = v
        m += 1
    out.sort()
    return out


@njit(cache=True)
def sample_uniform(n, indptr, indices, i, size, state):
    """Uniform non-neighbour sample; returns (nodes, weight n_i0 / size)."""
    ex = excluded(indptr, indices, i)
    N = n - ex.shape[0]
    if size == 0:
        return np.empty(0, dtype=np.int64), 0.0
    nodes = ranks_to_nodes(distinct_ranks(N, size, state), ex)
    return nodes, N / size


@njit(cache=True)
def sample_adaptive(n, indptr, indices, i, size, mu, link, state):
    """Non-neighbour sample drawn proportionally to predicted edge probability.

    Weighted sampling without replacement by exponential keys; the weight
    returned is m_i0 / m*_i0. Returns (nodes, weight, status) where status is
    nonzero when the weights sum to zero.
    """
    comp = complement(n, indptr, indices, i)
    N = comp.shape[0]
    if size == 0:
        return np.empty(0, dtype=np.int64), 0.0, 0
    w = np.empty(N)
    total = 0.0
    wmin = np.inf
    wmax = -np.inf
    for k in range(N):
        v = link_inv(dot(mu[i], mu[comp[k]]), link)
        w[k] = v
        total += v
        wmin = min(wmin, v)
        wmax = max(wmax, v)
    if not total > 0.0:
        return np.empty(0, dtype=np.int64), 0.0, 1
    if wmin == wmax:
        # Equal weights: identical to the uniform draw on the same stream.
        ex = excluded(indptr, indices, i)
        return ranks_to_nodes(distinct_ranks(N, size, state), ex), N / size, 0
    if size >= N:
        return comp, 1.0, 0
    keys = np.empty(N)
    for k in range(N):
        if w[k] > 0.0:
            keys[k] = math.log(next_uniform(state)) / w[k]
        else:
            keys[k] = -np.inf
    order = np.argsort(-keys)[:size]
    order.sort()
    part = 0.0
    for k in order:
        part += w[k]
    if not part > 0.0:
        return np.empty(0, dtype=np.int64), 0.0, 1
    return comp[order], total / part, 0


# ---------------------------------------------------------------------------
# Sweeps.
# ---------------------------------------------------------------------------


@njit(cache=True)
def cavi_targets(n, indptr, indices, mu, S, a0, link, out1, out2):
    """One Jacobi CAVI sweep: all targets from the (mu, S) snapshot."""
    H = mu.shape[1]
    M = np.zeros(H)
    Stot = np.zeros((H, H))
    for j in range(n):
        for a in range(H):
            M[a] += mu[j, a]
            for b in range(H):
                Stot[a, b] += S[j, a, b]
    acc2 = np.zeros((H, H))
    acc1 = np.zeros(H)
    for i in range(n):
        nb = indices[indptr[i]:indptr[i + 1]]
        Si = S[i]
        if link == LOGIT:
            for a in range(H):
                acc1[a] = 0.0
            for j in nb:
                for a in range(H):
                    acc1[a] += mu[j, a]
            for a in range(H):
                out1[i, a] = acc1[a] - 0.5 * (M[a] - mu[i, a]) + a0[a]
            acc2[:, :] = 0.0
            for j in range(n):
                if j == i:
                    continue
                w = pg_mean(xi_of(Si, S[j]))
                for a in range(H):
                    for b in range(H):
                        acc2[a, b] += w * S[j, a, b]
            for a in range(H):
                for b in range(H):
                    out2[i, a, b] = -0.5 * (acc2[a, b] + (1.0 if a == b else 0.0))
        else:
            for a in range(H):
                acc1[a] = 0.0
            p = 0
            for j in range(n):
                if j == i:
                    continue
                while p < nb.shape[0] and nb[p] < j:
                    p += 1
                y = 1 if (p < nb.shape[0] and nb[p] == j) else 0
                zt = tn_mean(dot(mu[i], mu[j]), y)
                for a in range(H):
                    acc1[a] += mu[j, a] * zt
            for a in range(H):
                out1[i, a] = acc1[a] + a0[a]
                for b in range(H):
                    out2[i, a, b] = -0.5 * (
                        Stot[a, b] - S[i, a, b] + (1.0 if a == b else 0.0)
                    )


@njit(cache=True)
def stratum_size(n_i0, n_i1, gamma, exhaustive, floor_size):
    if exhaustive:
        return n_i0
    k = min(n_i0, int(math.floor(gamma * n_i1)))
    if k < floor_size:
        k = min(floor_size, n_i0)
    return k


@njit(cache=True)
def svilf_sweep(n, indptr, indices, order, lam1, lam2, mu, Sig, S,
                mu_read, S_read, a0, link, rho, seed, t, gamma, exhaustive,
                floor_size, adaptive, stream_domain, max_halvings):
    """One SVILF pass over ``order``.

    Reads neighbour moments from ``mu_read``/``S_read`` (the live arrays for
    Gauss-Seidel, an iteration-start copy for Jacobi) and writes updated
    parameters in place. Returns (pair_visits, halvings, failed_node, reason)
    with reason 1 for degenerate adaptive weights and 2 for a precision that
    stayed indefinite after ``max_halvings`` step halvings.
    """
    H = mu.shape[1]
    t1 = np.empty(H)
    t2 = np.empty((H, H))
    n1 = np.empty(H)
    n2 = np.empty((H, H))
    m_new = np.empty(H)
    sig_new = np.empty((H, H))
    s_new = np.empty((H, H))
    L = np.empty((H, H))
    state = np.empty(1, dtype=np.uint64)
    visits = 0
    halvings = 0
    for pos in range(order.shape[0]):
        i = order[pos]
        conn = indices[indptr[i]:indptr[i + 1]]
        n_i1 = conn.shape[0]
        n_i0 = n - 1 - n_i1
        size = stratum_size(n_i0, n_i1, gamma, exhaustive, floor_size)
        state[0] = stream_key(seed, stream_domain, t, i)
        if adaptive:
            zero, r, status = sample_adaptive(n, indptr, indices, i, size,
                                              mu_read, link, state)
            if status != 0:
                return visits, halvings, i, 1
        else:
            zero, r = sample_uniform(n, indptr, indices, i, size, state)
        visits += n_i1 + zero.shape[0]
        node_target(i, conn, zero, r, mu_read, S_read, a0, link, t1, t2)
        step = rho
        ok = False
        for attempt in range(max_halvings + 1):
            for a in range(H):
                n1[a] = lam1[i, a] + step * (t1[a] - lam1[i, a])
                for b in range(H):
                    n2[a, b] = lam2[i, a, b] + step * (t2[a, b] - lam2[i, a, b])
            if moments_into(n1, n2, m_new, sig_new, s_new, L):
                ok = True
                break
            step *= 0.5
            halvings += 1
        if not ok:
            return visits, halvings, i, 2
        lam1[i] = n1
        lam2[i] = n2
        mu[i] = m_new
        Sig[i] = sig_new
        S[i] = s_new
    return visits, halvings, -1, 0


# ---------------------------------------------------------------------------
# Synthetic networks.
# ---------------------------------------------------------------------------

GEN_LATENT = 11
GEN_DYAD = 12
GEN_BLOCK = 13


@njit(cache=True)
def key_normal(seed, i, h):
    """Standard normal keyed by (seed, node, coordinate) via Box-Muller."""
    u1 = 1.0 - key_uniform(stream_key(seed, GEN_LATENT, i, 2 * h))
    u2 = key_uniform(stream_key(seed, GEN_LATENT, i, 2 * h + 1))
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def generate_edges(scenario, n, seed, sd, dim, p_within, p_between):
    """Edge arrays (u < v) for scenario 1, 2 or 3; one uniform per dyad."""
    if scenario == 3:
        dim = 1
    w = np.empty((n, dim))
    for i in range(n):
        for h in range(dim):
            if scenario == 1:
                w[i, h] = sd * key_normal(seed, i, h)
            elif scenario == 2:
                w[i, h] = key_normal(seed, i, h)
            else:
                w[i, h] = 1.0 if key_uniform(stream_key(seed, GEN_BLOCK, i, 0)) < 0.5 else 0.0
    us = []
    vs = []
    for i in range(n):
        for j in range(i + 1, n):
            if scenario == 1:
                p = sigmoid(dot(w[i], w[j]))
            elif scenario == 2:
                d = 0.0
                for h in range(dim):
                    d += (w[i, h] - w[j, h]) ** 2
                p = sigmoid(math.sqrt(d))
            else:
                p = p_within if w[i, 0] == w[j, 0] else p_between
            if key_uniform(stream_key(seed, GEN_DYAD, i, j)) < p:
                us.append(i)
                vs.append(j)
    return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


@njit(cache=True)
def sequential_sweep(n, indptr, indices, lam1, lam2, mu, Sig, S, a0, link):
    """In-place coordinate ascent in index order; returns a failing node or -1."""
    H = mu.shape[1]
    t1 = np.empty(H)
    t2 = np.empty((H, H))
    L = np.empty((H, H))
    for i in range(n):
        conn = indices[indptr[i]:indptr[i + 1]]
        zero = complement(n, indptr, indices, i)
        node_target(i, conn, zero, 1.0, mu, S, a0, link, t1, t2)
        if not moments_into(t1, t2, mu[i], Sig[i], S[i], L):
            return i
        lam1[i] = t1
        lam2[i] = t2
    return -1
