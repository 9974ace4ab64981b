"""Compiled inner loop for repeated estimation rounds on a posterior grid."""
import math

import numba
import numpy as np

NO_CONTROL, UNITARY, RANDOM_TAU, UNITARY_RANDOM_TAU = 0, 1, 2, 3
TINY = 1e-280


@numba.njit(cache=True, nogil=True, fastmath=True)
def _stats(w, om, ga):
    n, m = w.shape
    so = 0.0
    so2 = 0.0
    sg = 0.0
    sg2 = 0.0
    for i in range(n):
        row = 0.0
        for j in range(m):
            v = w[i, j]
            row += v
            sg += v * ga[j]
            sg2 += v * ga[j] * ga[j]
        so += row * om[i]
        so2 += row * om[i] * om[i]
    return so, max(so2 - so * so, 0.0), sg, max(sg2 - sg * sg, 0.0)


@numba.njit(cache=True, nogil=True, fastmath=True)
def simulate_rounds(w, om, ga, policy, fixed_tau, tau_lo, tau_hi, uniforms, omega_true, gamma_true):
    """Run all rounds of one simulation, updating ``w`` in place.

    ``uniforms`` has one row per round: ``[u_tau,] u_flip1, u_flip2, u_flip3``.
    Returns per-round arrays and a status flag (1 if the grid lost all mass).
    """
    rounds = uniforms.shape[0]
    random_tau = policy == RANDOM_TAU or policy == UNITARY_RANDOM_TAU
    unitary = policy == UNITARY or policy == UNITARY_RANDOM_TAU
    off = 1 if random_tau else 0
    n, m = w.shape

    taus = np.empty(rounds)
    omega_cs = np.empty(rounds)
    synd = np.empty(rounds, dtype=np.int64)
    bad = np.empty(rounds, dtype=np.bool_)
    stats = np.empty((rounds, 4))
    a = np.empty(m)
    b = np.empty(n)

    mu, var, _, _ = _stats(w, om, ga)
    for r in range(rounds):
        if random_tau:
            tau = tau_lo + (tau_hi - tau_lo) * uniforms[r, 0]
        else:
            tau = fixed_tau
        omega_c = mu - math.sqrt(var) if unitary else 0.0
        taus[r] = tau
        omega_cs[r] = omega_c

        p_true = 0.5 * (1.0 - math.exp(-4.0 * gamma_true * tau) * math.cos((omega_true - omega_c) * tau))
        f1 = uniforms[r, off] < p_true
        f2 = uniforms[r, off + 1] < p_true
        f3 = uniforms[r, off + 2] < p_true
        s = (f1 ^ f2) + 2 * (f2 ^ f3)
        synd[r] = s
        bad[r] = (f1 + f2 + f3) >= 2

        # Pr(00) = (1 + 3 a b)/4, Pr(odd) = (1 - a b)/4 with a = exp(-8 g tau), b = cos^2
        k = 3.0 if s == 0 else -1.0
        for j in range(m):
            a[j] = math.exp(-8.0 * ga[j] * tau)
        for i in range(n):
            c = math.cos((om[i] - omega_c) * tau)
            b[i] = k * c * c
        tot = 0.0
        for i in range(n):
            for j in range(m):
                v = w[i, j] * (1.0 + b[i] * a[j])
                w[i, j] = v
                tot += v
        if not tot > 0.0:
            return taus, omega_cs, synd, bad, stats, 1
        inv = 1.0 / tot
        for i in range(n):
            for j in range(m):
                v = w[i, j] * inv
                # flush to zero: subnormal arithmetic is ~100x slower
                w[i, j] = v if v > TINY else 0.0
        mu, var, mg, vg = _stats(w, om, ga)
        stats[r, 0] = mu
        stats[r, 1] = var
        stats[r, 2] = mg
        stats[r, 3] = vg
    return taus, omega_cs, synd, bad, stats, 0
