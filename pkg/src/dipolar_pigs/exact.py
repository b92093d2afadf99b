"""Deterministic single-rotor reference calculations.

A rotor in a field along z conserves m, so its ground state lives in the
m = 0 block of the spherical-harmonic basis.  In the |l, 0> basis

    H = diag(l (l + 1)) - u C,   C_{l, l+1} = (l + 1) / sqrt((2l + 1)(2l + 3)),

and the full (l_max + 1)^2 basis only adds blocks with m != 0 whose levels lie
higher.  The same basis represents the discretised path measure exactly,
which gives noise-free time-step biases of either propagator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, expm
from scipy.special import eval_legendre, roots_legendre

from .errors import DomainError
from .propagator import MPE6

# basis size that represents the path measure essentially exactly for u <= 3
TRANSFER_LMAX = 40


def cos_matrix(l_max):
    """Matrix of cos(theta) in the |l, 0> basis, l = 0..l_max."""
    C = np.zeros((l_max + 1, l_max + 1))
    k = np.arange(l_max)
    C[k, k + 1] = C[k + 1, k] = (k + 1) / np.sqrt((2 * k + 1) * (2 * k + 3))
    return C


def kinetic_diagonal(l_max):
    l = np.arange(l_max + 1, dtype=float)
    return l * (l + 1)


def rotor_hamiltonian(u, l_max=4):
    if u < 0:
        raise DomainError("u must be non-negative")
    return np.diag(kinetic_diagonal(l_max)) - u * cos_matrix(l_max)


@dataclass(frozen=True)
class RotorGroundState:
    u: float
    l_max: int
    energy: float
    cos_theta: float
    vector: np.ndarray


def single_rotor_ground_state(u, l_max=4) -> RotorGroundState:
    """Ground state of L^2 - u cos(theta) from the 25-function basis (l <= 4)."""
    H = rotor_hamiltonian(u, l_max)
    w, v = eigh(H)
    g = v[:, 0] * np.sign(v[0, 0] if v[0, 0] != 0 else 1.0)
    return RotorGroundState(u, l_max, float(w[0]), float(g @ cos_matrix(l_max) @ g), g)


def trial_coefficients(alpha, l_max=TRANSFER_LMAX):
    """Expansion of e^{alpha cos(theta)} in normalised |l, 0> functions."""
    x, w = roots_legendre(96)
    f = np.exp(alpha * x)
    l = np.arange(l_max + 1)
    ylm = np.sqrt((2 * l[:, None] + 1) / (4 * math.pi)) * eval_legendre(l[:, None], x[None, :])
    return 2 * math.pi * (ylm * f[None, :] * w[None, :]).sum(axis=1)


def primitive_transfer(tau, u, l_max=TRANSFER_LMAX):
    """e^{tau u C / 2} e^{-tau L^2} e^{tau u C / 2}: one primitive link as an operator."""
    half = expm(0.5 * tau * u * cos_matrix(l_max))
    return half @ np.diag(np.exp(-tau * kinetic_diagonal(l_max))) @ half


def mpe6_transfer(tau, u, l_max=TRANSFER_LMAX):
    """sum_i c_i G2(tau/k_i)^{k_i} for one big step."""
    out = np.zeros((l_max + 1, l_max + 1))
    for c, k in zip(MPE6.c, MPE6.k):
        out += c * np.linalg.matrix_power(primitive_transfer(tau / k, u, l_max), k)
    return out


def transfer(tau, u, propagator, l_max=TRANSFER_LMAX):
    if propagator == "primitive":
        return primitive_transfer(tau, u, l_max)
    if propagator == "mpe6":
        return mpe6_transfer(tau, u, l_max)
    raise DomainError(f"unknown propagator {propagator!r}")


def path_estimates(u, tau, beta, alpha, propagator="primitive", l_max=TRANSFER_LMAX):
    """Exact expectation values of the discretised single-rotor path measure.

    Returns ``(E_mixed, cos_mid)``: the end-bead local energy averaged over
    the path weight and cos(theta) at the middle bead, both without
    statistical noise.
    """
    m = int(round(beta / tau))
    if m % 2:
        raise DomainError("beta/tau must be even")
    G = transfer(tau, u, propagator, l_max)
    psi = trial_coefficients(alpha, l_max)
    half = np.linalg.matrix_power(G, m // 2) @ psi
    norm = half @ half
    C = cos_matrix(l_max)
    H = rotor_hamiltonian(u, l_max)
    e_mixed = (H @ psi) @ np.linalg.matrix_power(G, m) @ psi / norm
    return float(e_mixed), float(half @ C @ half / norm)


def projected_energy_bias(u, tau, alpha, propagator, l_max=TRANSFER_LMAX):
    """Mixed-energy bias in the infinite projection limit.

    Uses the dominant eigenvector of the one-step transfer operator, so the
    result isolates the time-step error from any trial-function residue.
    """
    G = transfer(tau, u, propagator, l_max)
    w, v = eigh(0.5 * (G + G.T))
    phi = v[:, -1]
    psi = trial_coefficients(alpha, l_max)
    H = rotor_hamiltonian(u, l_max)
    e0 = single_rotor_ground_state(u, l_max).energy
    return float((H @ psi) @ phi / (psi @ phi) - e0)


def fit_order(taus, biases):
    """Exponent p of |bias| = A tau^p by least squares in log-log space."""
    taus = np.asarray(taus, float)
    biases = np.abs(np.asarray(biases, float))
    if np.any(biases <= 0):
        raise DomainError("biases must be non-zero to fit a power law")
    p, _ = np.polyfit(np.log(taus), np.log(biases), 1)
    return float(p)
