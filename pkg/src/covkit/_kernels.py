"""Compiled inner loops shared by the planners and samplers.

Everything here works on raw arrays with 0-based stage indices. Transition
arrays have shape ``(H - 1, S, A, S)``; per-triplet arrays have shape
``(H, S, A)``. Random draws come from a ``numpy.random.Generator`` passed in
by the caller so compiled and pure-Python paths consume the same stream.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# status codes returned by the run loops
DONE = 0
CAP_EXCEEDED = 1


@njit(cache=True)
def draw_index(cum, u):
    # first index whose cumulative mass exceeds u; zero-mass entries are skipped
    n = cum.shape[0]
    for j in range(n):
        if u < cum[j]:
            return j
    return n - 1


@njit(cache=True)
def sample_episode_into(p_cum, r_mean, s1, pi_cum, stochastic, rng, out_s, out_a, out_r):
    H = r_mean.shape[0]
    s = s1
    for h in range(H):
        if stochastic:
            a = draw_index(pi_cum[h, s], rng.random())
        else:
            a = int(pi_cum[h, s, 0])
        out_s[h] = s
        out_a[h] = a
        out_r[h] = 1 if rng.random() < r_mean[h, s, a] else 0
        if h < H - 1:
            s = draw_index(p_cum[h, s, a], rng.random())


@njit(cache=True)
def sample_many(p_cum, r_mean, s1, pi_cum, stochastic, rng, n_episodes, out_s, out_a, out_r):
    for t in range(n_episodes):
        sample_episode_into(p_cum, r_mean, s1, pi_cum, stochastic, rng,
                            out_s[t], out_a[t], out_r[t])


@njit(cache=True)
def backward_induction(p, reward):
    """Optimal Q, V and greedy actions (lowest index wins ties)."""
    H, S, A = reward.shape
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    act = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        for s in range(S):
            best = -np.inf
            ba = 0
            for a in range(A):
                q = reward[h, s, a]
                if h < H - 1:
                    acc = 0.0
                    for sp in range(S):
                        acc += p[h, s, a, sp] * V[h + 1, sp]
                    q += acc
                Q[h, s, a] = q
                if q > best:
                    best = q
                    ba = a
            V[h, s] = best
            act[h, s] = ba
    return Q, V, act


@njit(cache=True)
def forward_occupancy(p, pi, s1):
    H, S, A = pi.shape
    rho = np.zeros((H, S, A))
    for a in range(A):
        rho[0, s1, a] = pi[0, s1, a]
    for h in range(1, H):
        for sp in range(S):
            mass = 0.0
            for s in range(S):
                for a in range(A):
                    w = rho[h - 1, s, a]
                    if w != 0.0:
                        mass += w * p[h - 1, s, a, sp]
            for a in range(A):
                rho[h, sp, a] = mass * pi[h, sp, a]
    return rho


@njit(cache=True)
def beta_value(n, log_term, S, scale):
    # beta(n, delta) = log(2SAH/delta) + S log(8e(n+1)), times the scale knob
    return scale * (log_term + S * math.log(8.0 * math.e * (n + 1.0)))


@njit(cache=True)
def ucbvi_backward(p_hat, n, beta_tab, reward, Q, V, act):
    """Optimistic backward pass with Bernstein-type bonuses, clipped at 1.

    ``beta_tab`` holds beta(n_h(s,a), delta) for every triplet. Triplets with
    no visits get the clip value directly.
    """
    H, S, A = reward.shape
    for s in range(S):
        best = -np.inf
        ba = 0
        for a in range(A):
            q = reward[H - 1, s, a]
            Q[H - 1, s, a] = q
            if q > best:
                best = q
                ba = a
        V[H - 1, s] = best
        act[H - 1, s] = ba
    for h in range(H - 2, -1, -1):
        for s in range(S):
            best = -np.inf
            ba = 0
            for a in range(A):
                cnt = n[h, s, a]
                if cnt == 0:
                    q = 1.0
                else:
                    m1 = 0.0
                    m2 = 0.0
                    for sp in range(S):
                        w = p_hat[h, s, a, sp]
                        if w != 0.0:
                            v = V[h + 1, sp]
                            m1 += w * v
                            m2 += w * v * v
                    var = m2 - m1 * m1
                    if var < 0.0:
                        var = 0.0
                    bn = beta_tab[h, s, a] / cnt
                    bonus = math.sqrt(8.0 * var * bn)
                    if 8.0 * bn > bonus:
                        bonus = 8.0 * bn
                    q = reward[h, s, a] + m1 + bonus
                    if q > 1.0:
                        q = 1.0
                Q[h, s, a] = q
                if q > best:
                    best = q
                    ba = a
            V[h, s] = best
            act[h, s] = ba


@njit(cache=True)
def record_transition(h, s, a, sp, n, m, p_hat, H):
    # counts for stage h have already been incremented by the caller
    if h < H - 1:
        m[h, s, a, sp] += 1
        cnt = n[h, s, a]
        S = p_hat.shape[3]
        for j in range(S):
            p_hat[h, s, a, j] = m[h, s, a, j] / cnt


@njit(cache=True)
def wmf_weights(cum_loss, out):
    """Exponential weights with the adaptive small-loss rate."""
    K = cum_loss.shape[0]
    lmin = cum_loss[0]
    for i in range(1, K):
        if cum_loss[i] < lmin:
            lmin = cum_loss[i]
    xi = 0.0
    if K > 1:
        xi = math.sqrt(math.log(K) / (1.0 + lmin))
        if xi > 0.5:
            xi = 0.5
    z = 0.0
    for i in range(K):
        w = math.exp(-xi * (cum_loss[i] - lmin))
        out[i] = w
        z += w
    for i in range(K):
        out[i] /= z
    return xi


@njit(cache=True)
def _grow(arr, new_len):
    out = np.zeros((new_len, arr.shape[1]), dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True)
def covgame_loop(p_cum, r_mean, s1, p_true, c, level, c_min, oracle,
                 log_term, beta_scale, max_rounds, rng):
    """Run the coverage game until every requirement is met.

    ``level[h, s, a]`` is the smallest j >= 1 with c <= c_min 2^j on the
    support (0 off-support). Returns a status code, the stopping round, the
    dataset arrays, the restart trace and the final statistics.
    """
    H, S, A = c.shape
    n = np.zeros((H, S, A), dtype=np.int64)
    m = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
    p_hat = np.zeros((max(H - 1, 0), S, A, S))
    rsum = np.zeros((H, S, A))
    beta_tab = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                beta_tab[h, s, a] = beta_value(0.0, log_term, S, beta_scale)

    max_level = 0
    for h in range(H):
        for s in range(S):
            for a in range(A):
                if level[h, s, a] > max_level:
                    max_level = level[h, s, a]
    uncovered_at = np.zeros(max_level + 2, dtype=np.int64)
    uncovered = 0
    for h in range(H):
        for s in range(S):
            for a in range(A):
                if c[h, s, a] > 0.0:
                    uncovered_at[level[h, s, a]] += 1
                    uncovered += 1

    cap = 1024
    ds_s = np.zeros((cap, H), dtype=np.int16)
    ds_a = np.zeros((cap, H), dtype=np.int16)
    ds_r = np.zeros((cap, H), dtype=np.int8)
    trace = np.zeros((max_level + 2, 2), dtype=np.int64)
    n_trace = 0
    loss_min = 1.0
    loss_max = 0.0

    if uncovered == 0:
        return DONE, 0, ds_s[:0], ds_a[:0], ds_r[:0], trace[:0], n, m, rsum, loss_min, loss_max

    # adversary over X_0 = full support
    k = 0
    sup_idx = np.zeros(H * S * A, dtype=np.int64)
    K = 0
    for h in range(H):
        for s in range(S):
            for a in range(A):
                if c[h, s, a] > 0.0:
                    sup_idx[K] = (h * S + s) * A + a
                    K += 1
    cum_loss = np.zeros(K)
    lam = np.full(K, 1.0 / K)
    visited = np.zeros(H * S * A, dtype=np.int64)

    reward = np.zeros((H, S, A))
    flat_reward = reward.reshape(H * S * A)
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    act = np.zeros((H, S), dtype=np.int64)
    pi = np.zeros((H, S, 1))
    ep_s = np.zeros(H, dtype=np.int64)
    ep_a = np.zeros(H, dtype=np.int64)
    ep_r = np.zeros(H, dtype=np.int64)

    t = 0
    while True:
        if t >= max_rounds:
            return (CAP_EXCEEDED, t, ds_s[:t], ds_a[:t], ds_r[:t], trace[:n_trace],
                    n, m, rsum, loss_min, loss_max)
        t += 1
        flat_reward[:] = 0.0
        for i in range(K):
            flat_reward[sup_idx[i]] = lam[i]
        if oracle:
            _, _, act2 = backward_induction(p_true, reward)
            act[:, :] = act2
        else:
            ucbvi_backward(p_hat, n, beta_tab, reward, Q, V, act)
        for h in range(H):
            for s in range(S):
                pi[h, s, 0] = act[h, s]
        sample_episode_into(p_cum, r_mean, s1, pi, False, rng, ep_s, ep_a, ep_r)

        if t > ds_s.shape[0]:
            cap = 2 * ds_s.shape[0]
            ds_s = _grow(ds_s, cap)
            ds_a = _grow(ds_a, cap)
            ds_r = _grow(ds_r, cap)
        for h in range(H):
            s = ep_s[h]
            a = ep_a[h]
            ds_s[t - 1, h] = s
            ds_a[t - 1, h] = a
            ds_r[t - 1, h] = ep_r[h]
            n[h, s, a] += 1
            rsum[h, s, a] += ep_r[h]
            beta_tab[h, s, a] = beta_value(float(n[h, s, a]), log_term, S, beta_scale)
            if h < H - 1:
                record_transition(h, s, a, ep_s[h + 1], n, m, p_hat, H)
            visited[(h * S + s) * A + a] = t
            if c[h, s, a] > 0.0 and n[h, s, a] - 1 < c[h, s, a] and n[h, s, a] >= c[h, s, a]:
                uncovered_at[level[h, s, a]] -= 1
                uncovered -= 1

        if uncovered == 0:
            return (DONE, t, ds_s[:t], ds_a[:t], ds_r[:t], trace[:n_trace],
                    n, m, rsum, loss_min, loss_max)

        new_k = 0
        for j in range(1, max_level + 1):
            if uncovered_at[j] > 0:
                new_k = j - 1
                break
        if new_k != k:
            k = new_k
            trace[n_trace, 0] = t
            trace[n_trace, 1] = k
            n_trace += 1
            K = 0
            for h in range(H):
                for s in range(S):
                    for a in range(A):
                        if c[h, s, a] > 0.0 and (k == 0 or c[h, s, a] > c_min * 2.0 ** k):
                            sup_idx[K] = (h * S + s) * A + a
                            K += 1
            cum_loss = np.zeros(K)
            lam = np.full(K, 1.0 / K)
        else:
            inst = 0.0
            for i in range(K):
                if visited[sup_idx[i]] == t:
                    cum_loss[i] += 1.0
                    inst += lam[i]
            if inst < loss_min:
                loss_min = inst
            if inst > loss_max:
                loss_max = inst
            wmf_weights(cum_loss, lam)


@njit(cache=True)
def ucbvi_fixed_loop(p_cum, r_mean, s1, reward, T, log_term, beta_scale, rng):
    """Run UCBVI on a fixed reward for ``T`` episodes; return visit counts."""
    H, S, A = reward.shape
    n = np.zeros((H, S, A), dtype=np.int64)
    m = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
    p_hat = np.zeros((max(H - 1, 0), S, A, S))
    beta_tab = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                beta_tab[h, s, a] = beta_value(0.0, log_term, S, beta_scale)
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    act = np.zeros((H, S), dtype=np.int64)
    pi = np.zeros((H, S, 1))
    ep_s = np.zeros(H, dtype=np.int64)
    ep_a = np.zeros(H, dtype=np.int64)
    ep_r = np.zeros(H, dtype=np.int64)
    for t in range(T):
        ucbvi_backward(p_hat, n, beta_tab, reward, Q, V, act)
        for h in range(H):
            for s in range(S):
                pi[h, s, 0] = act[h, s]
        sample_episode_into(p_cum, r_mean, s1, pi, False, rng, ep_s, ep_a, ep_r)
        for h in range(H):
            s = ep_s[h]
            a = ep_a[h]
            n[h, s, a] += 1
            beta_tab[h, s, a] = beta_value(float(n[h, s, a]), log_term, S, beta_scale)
            if h < H - 1:
                record_transition(h, s, a, ep_s[h + 1], n, m, p_hat, H)
    return n


@njit(cache=True)
def prune_pass(states, actions, c):
    """Greedy single pass keeping episodes that hit an uncovered triplet."""
    T, H = states.shape
    S, A = c.shape[1], c.shape[2]
    n = np.zeros((H, S, A), dtype=np.int64)
    remaining = 0
    for h in range(H):
        for s in range(S):
            for a in range(A):
                if c[h, s, a] > 0.0:
                    remaining += 1
    keep = np.zeros(T, dtype=np.bool_)
    if remaining == 0:
        return keep, n
    for t in range(T):
        useful = False
        for h in range(H):
            if n[h, states[t, h], actions[t, h]] < c[h, states[t, h], actions[t, h]]:
                useful = True
                break
        if not useful:
            continue
        keep[t] = True
        for h in range(H):
            s = states[t, h]
            a = actions[t, h]
            n[h, s, a] += 1
            if c[h, s, a] > 0.0 and n[h, s, a] >= c[h, s, a] and n[h, s, a] - 1 < c[h, s, a]:
                remaining -= 1
        if remaining == 0:
            break
    return keep, n


@njit(cache=True)
def dataset_statistics(states, actions, rewards, keep, S, A):
    T, H = states.shape
    n = np.zeros((H, S, A), dtype=np.int64)
    m = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
    rsum = np.zeros((H, S, A))
    for t in range(T):
        if not keep[t]:
            continue
        for h in range(H):
            s = states[t, h]
            a = actions[t, h]
            n[h, s, a] += 1
            rsum[h, s, a] += rewards[t, h]
            if h < H - 1:
                m[h, s, a, states[t, h + 1]] += 1
    return n, m, rsum
