"""Compiled chip loops for the sequential weight adaptation.

The per-chip recursion cannot be vectorized (each update feeds the next), so
the hot loop is JIT-compiled. A single kernel serves both detector modes: the
fixed-step mode is the one-element bank, which makes the two modes trivially
trajectory-identical for equal steps.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def ppic_stage(samples, regressors, mus):
    """Run one stage's weight recursion over all chips.

    Parameters: samples (N,) complex128, regressors (N, M) complex128 with
    row n holding the chip-n regressor, mus (L,) float64 ascending.

    Returns (history, trace): history is (N+1, M) with history[0] the zero
    initialization and history[n] the weights after chip n; trace[n] is the
    winning bank index at chip n (-1 for a skipped zero-norm chip).
    """
    num_chips, num_users = regressors.shape
    num_steps = mus.shape[0]
    history = np.zeros((num_chips + 1, num_users), dtype=np.complex128)
    trace = np.empty(num_chips, dtype=np.int64)
    w = np.zeros(num_users, dtype=np.complex128)
    z = np.empty(num_users, dtype=np.complex128)
    for n in range(num_chips):
        norm = 0.0
        for m in range(num_users):
            x = regressors[n, m]
            norm += x.real * x.real + x.imag * x.imag
        if norm == 0.0:
            trace[n] = -1
            for m in range(num_users):
                history[n + 1, m] = w[m]
            continue
        acc = 0.0 + 0.0j
        for m in range(num_users):
            acc += w[m] * regressors[n, m]
        err = samples[n] - acc
        scaled = err / norm
        for m in range(num_users):
            z[m] = np.conj(regressors[n, m]) * scaled
        best_k = 0
        best_dev = np.inf
        for k in range(num_steps):
            dev = 0.0
            for m in range(num_users):
                cand = w[m] + mus[k] * z[m]
                dev += abs(np.abs(cand) - 1.0)
            if dev < best_dev:
                best_dev = dev
                best_k = k
        mu = mus[best_k]
        for m in range(num_users):
            w[m] = w[m] + mu * z[m]
            history[n + 1, m] = w[m]
        trace[n] = best_k
    return history, trace
