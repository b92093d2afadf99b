"""Trial functions for the path end points.

The Hartree trial function is a product of single-rotor factors
exp(alpha cos(theta_i)); alpha is fixed once per field strength by
minimising the single-rotor variational energy at g = 0.  Using
L^2 e^{a cos t} = [2 a cos t - a^2 sin^2 t] e^{a cos t}, the variational
energy under the weight e^{2 a x} (x = cos theta) is

    E(a) = a^2 <1 - x^2> - u <x>.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import roots_legendre

from .errors import DomainError
from .lattice import potential_energy

QUAD_ORDER = 64
_X, _W = roots_legendre(QUAD_ORDER)
ALPHA_MAX = 20.0


@dataclass(frozen=True)
class TrialWF:
    kind: str = "hartree"
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("hartree", "constant"):
            raise DomainError(f"unknown trial kind {self.kind!r}")
        if self.alpha < 0:
            raise DomainError("alpha must be non-negative")
        if self.kind == "constant" and self.alpha != 0.0:
            raise DomainError("constant trial function has alpha = 0")

    @classmethod
    def for_field(cls, kind, u):
        if kind == "constant":
            return cls("constant", 0.0)
        return cls("hartree", optimize_alpha(u))


def variational_energy(alpha, u):
    """Single-rotor energy of e^{alpha cos(theta)} by Gauss-Legendre quadrature."""
    wgt = _W * np.exp(2.0 * alpha * (_X - 1.0))  # shifted to avoid overflow
    z = wgt.sum()
    return (alpha * alpha * np.sum(wgt * (1.0 - _X * _X)) - u * np.sum(wgt * _X)) / z


@functools.lru_cache(maxsize=256)
def optimize_alpha(u):
    """Variationally optimal alpha for a single rotor in field u (tolerance 1e-8)."""
    if u < 0:
        raise DomainError("u must be non-negative")
    if u == 0:
        return 0.0
    res = minimize_scalar(
        variational_energy, bounds=(0.0, ALPHA_MAX), args=(u,), method="bounded", options={"xatol": 1e-10}
    )
    return float(res.x)


def evaluate_log(trial: TrialWF, X):
    """log Psi_T(X) = alpha sum_i cos(theta_i)."""
    X = np.asarray(X, float)
    if trial.alpha == 0.0:
        return 0.0
    return float(trial.alpha * X[..., 2].sum())


def kinetic_local(trial: TrialWF, X):
    """(sum_i L_i^2 Psi_T) / Psi_T."""
    c = np.asarray(X, float)[..., 2]
    a = trial.alpha
    return float(np.sum(2.0 * a * c - a * a * (1.0 - c * c)))


def local_energy(trial: TrialWF, X, lattice, u, g):
    """(H Psi_T)/Psi_T at configuration X, in hB."""
    return kinetic_local(trial, X) + potential_energy(X, lattice, u, g)
