"""Harmonic-oscillator eigenfunctions (Hermite-Gaussians).

Evaluated with the normalized three-term recurrence

    psi_{n+1} = sqrt(2/(n+1)) xi psi_n - sqrt(n/(n+1)) psi_{n-1}

carried without the Gaussian factor and rescaled into a running log-scale, so
neither factorials nor exp(-xi^2/2) under/overflow for large n or xi.
"""

import math

import numpy as np

_RESCALE = 1e150


def hermite_functions(n_max, xi):
    """Dimensionless eigenfunctions psi_0..psi_{n_max} at points ``xi``.

    Returns an array of shape ``(n_max + 1,) + xi.shape``; each row is
    normalized so that int psi_n^2 dxi = 1.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((n_max + 1,) + xi.shape)
    log_scale = -0.5 * xi**2 - 0.25 * math.log(math.pi)
    prev = np.zeros_like(xi)
    cur = np.ones_like(xi)
    out[0] = np.exp(log_scale)
    for n in range(n_max):
        nxt = math.sqrt(2.0 / (n + 1)) * xi * cur - math.sqrt(n / (n + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            cur = np.where(big, cur / _RESCALE, cur)
            prev = np.where(big, prev / _RESCALE, prev)
            log_scale = np.where(big, log_scale + math.log(_RESCALE), log_scale)
        out[n + 1] = cur * np.exp(log_scale)
    return out


def position_eigenfunctions(n_max, x, length):
    """phi_n(x) = psi_n(x / length) / sqrt(length), in 1/sqrt(m)."""
    return hermite_functions(n_max, np.asarray(x) / length) / math.sqrt(length)


def momentum_eigenfunctions(n_max, k, length):
    """Fourier transforms (unitary convention, exp(-ikx)) of the position
    eigenfunctions: (-i)^n psi_n(k length) sqrt(length)."""
    vals = hermite_functions(n_max, np.asarray(k) * length) * math.sqrt(length)
    phases = (-1j) ** np.arange(n_max + 1)
    return vals * phases.reshape((-1,) + (1,) * np.ndim(k))


def ground_state_momentum(k, length):
    """Momentum-space ground state, a real Gaussian."""
    k = np.asarray(k, dtype=float)
    return math.sqrt(length) * math.pi**-0.25 * np.exp(-0.5 * (k * length) ** 2)
