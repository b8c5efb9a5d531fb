"""Independent reference computations used as test oracles.

Nothing here calls into the code paths under test except for plain data
containers.
"""

import itertools

import numpy as np


def pmf(q, h):
    out = []
    for tau in range(h + 1):
        out.append(q * (1 - q) ** tau if tau < h else (1 - q) ** h)
    return np.array(out)


def enumerate_S_h(A, p, q, h):
    """``E[Ã kron Ã]`` by summing over every switching outcome.

    Each top row either holds (probability 1-p) or updates with one delay
    per source column (probability p * prod pi(tau_j)). Outcomes across rows
    are independent, so the joint weight is the product of row weights.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    D = n * (h + 1)
    pi = pmf(q, h)

    row_outcomes = []  # per top row: list of (weight, row vector)
    for i in range(n):
        opts = []
        hold = np.zeros(D)
        hold[i] = 1.0
        opts.append((1 - p, hold))
        for taus in itertools.product(range(h + 1), repeat=n):
            r = np.zeros(D)
            w = p
            for j, tau in enumerate(taus):
                r[tau * n + j] += A[i, j]
                w *= pi[tau]
            opts.append((w, r))
        row_outcomes.append(opts)

    shift = np.zeros((D, D))
    for r in range(1, h + 1):
        for j in range(n):
            shift[r * n + j, (r - 1) * n + j] = 1.0

    S = np.zeros((D * D, D * D))
    for combo in itertools.product(*row_outcomes):
        w = 1.0
        At = shift.copy()
        for i, (wi, row) in enumerate(combo):
            w *= wi
            At[i] = row
        if w:
            S += w * np.kron(At, At)
    return S


def direct_recursion(A, B, x0, inputs, noise):
    """Synchronous recursion with explicit loops; summation order matches
    ``sum_j A_ij x_j``, then ``sum_l B_il u_l``, then ``+ w_i``."""
    n = len(x0)
    m = inputs.shape[1]
    xs = [np.array(x0, dtype=float)]
    for t in range(inputs.shape[0]):
        x = xs[-1]
        new = np.empty(n)
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += A[i, j] * x[j]
            for l in range(m):
                s += B[i, l] * inputs[t, l]
            new[i] = s + noise[t, i]
        xs.append(new)
    return np.array(xs)


def impulse_response(A, B, K):
    """``H_k[:, j]`` read off a noise-free synchronous run driven by ``u_0 = e_j``."""
    n, m = B.shape
    H = np.zeros((K, n, m))
    for j in range(m):
        x = np.zeros(n)
        for t in range(K):
            u = np.zeros(m)
            if t == 0:
                u[j] = 1.0
            x = A @ x + B @ u
            H[t, :, j] = x
    return H


def lstsq_average_system(states, inputs):
    """Least-squares fit of ``x_{t+1} ~ Theta [x_t; u_t]`` via a generic solver."""
    Z = np.hstack([states[:-1], inputs])
    Y = states[1:]
    theta, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    return theta.T


def grid_objective(M1, M2, inv_p, sig):
    """``|| M1 - a M2 - s I ||_F^2`` evaluated on a meshgrid, explicit sums."""
    n = M1.shape[0]
    out = np.zeros(np.broadcast(inv_p, sig).shape)
    for i in range(n):
        for j in range(n):
            r = M1[i, j] - inv_p * M2[i, j] - (sig if i == j else 0.0)
            out = out + r * r
    return out


def batch_mean_cov(states, n_batches=100):
    """Time-averaged ``x x^T`` and its batch-means standard error (entrywise)."""
    X = states[1:]
    T = X.shape[0] - X.shape[0] % n_batches
    X = X[:T]
    outer = np.einsum("ti,tj->tij", X, X)
    batches = outer.reshape(n_batches, T // n_batches, X.shape[1], X.shape[1]).mean(axis=1)
    mean = batches.mean(axis=0)
    se = batches.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return mean, se
