"""Imaginary-time kernels for the rigid rotor.

The free-rotor kernel on the unit sphere is

    G0(x; t) = sum_l (2l + 1)/(4 pi) P_l(x) exp(-t l (l + 1)),   x = cos(gamma),

normalised so that 2 pi * int_{-1}^{1} G0 dx = 1.  Far from the forward
direction the Legendre sum loses all relative accuracy (the kernel falls to
~1e-28 at the antipode for t = 0.0375), so values below ``TAIL_SWITCH`` are
recomputed from the exact image-integral form of the heat kernel on S^2,

    G0 = sqrt(2) e^{t/4} / (4 pi t)^{3/2}
         * sum_n (-1)^n int_gamma^pi (phi + 2 pi n) e^{-(phi + 2 pi n)^2 / 4t}
                                      / sqrt(cos gamma - cos phi) dphi,

which is positive and accurate to machine precision in the deep tail.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import roots_legendre

from .errors import DomainError
from .lattice import potential_energy as _lattice_potential

LEGENDRE_TOL = 1e-12
TAIL_SWITCH = 1e-4
DEFAULT_GRID = 2**20
_MIN_GRID = 2**12

_GL_NODES, _GL_WEIGHTS = roots_legendre(32)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def legendre_cutoff(tau):
    """Largest l whose term bound (2l+1)/(4 pi) e^{-tau l(l+1)} is >= LEGENDRE_TOL."""
    l = 0
    while (2 * l + 1) / (4 * math.pi) * math.exp(-tau * l * (l + 1)) >= LEGENDRE_TOL:
        l += 1
    return max(l - 1, 0)


def _legendre_sum(x, tau, l_cut):
    x = np.asarray(x, float)
    p_prev = np.ones_like(x)
    total = np.full_like(x, 1.0 / (4 * math.pi))
    if l_cut == 0:
        return total
    p = x.copy()
    total += 3.0 / (4 * math.pi) * math.exp(-2.0 * tau) * p
    for l in range(1, l_cut):
        p_prev, p = p, ((2 * l + 1) * x * p - l * p_prev) / (l + 1)
        total += (2 * l + 3) / (4 * math.pi) * math.exp(-tau * (l + 1) * (l + 2)) * p
    return total


@numba.njit(cache=True)
def _image_integral(x, tau, nodes, weights):
    out = np.empty(x.shape[0])
    pref = math.sqrt(2.0) * math.exp(tau / 4.0) / (4.0 * math.pi * tau) ** 1.5
    two_pi = 2.0 * math.pi
    for k in range(x.shape[0]):
        xk = max(min(x[k], 1.0), -1.0 + 1e-15)
        th = math.acos(xk)
        span = math.pi - th
        acc = 0.0
        for q in range(nodes.shape[0]):
            v = nodes[q]
            phi = th + span * v * v
            half = 0.5 * (phi - th)
            sinc = 1.0 if half < 1e-12 else math.sin(half) / half
            # (cos th - cos phi) / (phi - th) written without cancellation
            h = math.sin(0.5 * (phi + th)) * sinc
            f = 0.0
            for n in range(-3, 4):
                p = phi + two_pi * n
                e = -p * p / (4.0 * tau)
                if e > -745.0:
                    f += (1.0 - 2.0 * (n & 1)) * p * math.exp(e)
            acc += weights[q] * 2.0 * math.sqrt(span) * f / math.sqrt(h)
        out[k] = pref * acc
    return out


def _kernel_unchecked(x, tau):
    x = np.asarray(x, float)
    vals = _legendre_sum(x, tau, legendre_cutoff(tau))
    tail = vals < TAIL_SWITCH
    if tail.any():
        vals[tail] = _image_integral(np.ascontiguousarray(x[tail]), tau, _GL_NODES, _GL_WEIGHTS)
    return vals


def free_rotor_kernel(cos_gamma, tau):
    """Free-rotor kernel G0(cos gamma; tau) in reduced time units.

    Accepts a scalar or an array and returns the same shape.
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    x = np.asarray(cos_gamma, float)
    if np.any(np.abs(x) > 1.0) or np.any(~np.isfinite(x)):
        raise DomainError("cos_gamma must lie in [-1, 1]")
    vals = _kernel_unchecked(np.atleast_1d(x).ravel(), float(tau)).reshape(x.shape)
    return float(vals) if vals.ndim == 0 else vals


@dataclass(frozen=True, eq=False)
class PropagatorTable:
    """Kernel tabulated on a uniform grid of cos(gamma) over [-1, 1].

    ``cdf`` is the running integral of the piecewise-linear interpolant, used
    for exact inverse-CDF sampling of the polar angle.
    """

    tau: float
    n_grid: int
    l_cut: int
    values: np.ndarray = field(repr=False)
    cdf: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> float:
        return 2.0 / (self.n_grid - 1)

    @property
    def norm(self) -> float:
        """2 pi times the integral of the interpolant over [-1, 1]."""
        return 2.0 * math.pi * float(self.cdf[-1])

    def metadata(self):
        return {"tau": self.tau, "n_grid": self.n_grid, "l_cut": self.l_cut}


@functools.lru_cache(maxsize=16)
def build_table(tau, n_grid=DEFAULT_GRID) -> PropagatorTable:
    """Tabulate G0 at ``n_grid`` equally spaced points; cached per (tau, n_grid)."""
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if n_grid < _MIN_GRID:
        raise DomainError(f"n_grid must be at least {_MIN_GRID}")
    grid = np.linspace(-1.0, 1.0, n_grid)
    chunk = 1 << 16
    values = np.concatenate([_kernel_unchecked(grid[i : i + chunk], tau) for i in range(0, n_grid, chunk)])
    if not np.all(values > 0):
        raise DomainError(f"kernel not positive on the grid at tau={tau}")
    h = 2.0 / (n_grid - 1)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * h * (values[1:] + values[:-1]))])
    values.setflags(write=False)
    cdf.setflags(write=False)
    return PropagatorTable(float(tau), int(n_grid), legendre_cutoff(tau), values, cdf)


@numba.njit(cache=True)
def interp_value(values, x):
    n = values.shape[0]
    s = (x + 1.0) * 0.5 * (n - 1)
    i = int(s)
    if i > n - 2:
        i = n - 2
    if i < 0:
        i = 0
    f = s - i
    return values[i] * (1.0 - f) + values[i + 1] * f


def interpolate(table: PropagatorTable, cos_gamma):
    """Linear interpolation of the tabulated kernel."""
    x = np.asarray(cos_gamma, float)
    if np.any(np.abs(x) > 1.0) or np.any(~np.isfinite(x)):
        raise DomainError("cos_gamma must lie in [-1, 1]")
    n = table.n_grid
    s = (x + 1.0) * 0.5 * (n - 1)
    i = np.clip(s.astype(np.int64), 0, n - 2)
    f = s - i
    out = table.values[i] * (1.0 - f) + table.values[i + 1] * f
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------ MPE weights


@dataclass(frozen=True)
class MpeCoefficients:
    k: tuple
    c: tuple

    def residuals(self):
        """Sum c_i - 1 followed by sum c_i / k_i^(2j) for j = 1.. ."""
        c = np.array(self.c)
        k = np.array(self.k, float)
        return np.array([c.sum() - 1.0] + [np.sum(c / k ** (2 * j)) for j in range(1, len(c))])


def mpe_coefficients(k=(1, 2, 4)) -> MpeCoefficients:
    """Multi-product extrapolation weights cancelling the even error terms.

    Solves sum c_i = 1 and sum c_i k_i^{-2j} = 0 for j = 1 .. len(k) - 1.
    """
    k = tuple(int(v) for v in k)
    if len(set(k)) != len(k) or min(k) < 1:
        raise DomainError("k must be distinct positive integers")
    kk = np.array(k, float)
    A = np.array([kk ** (-2.0 * j) for j in range(len(k))])
    b = np.zeros(len(k))
    b[0] = 1.0
    c = np.linalg.solve(A, b)
    return MpeCoefficients(k, tuple(float(v) for v in c))


MPE6 = mpe_coefficients()


def potential_energy(X, lattice, u, g):
    """Total potential energy of one bead (all rotors), in hB."""
    return _lattice_potential(X, lattice, u, g)


def _kinetic(X, Xp, tau, table):
    dots = np.clip(np.einsum("ia,ia->i", X, Xp), -1.0, 1.0)
    if table is None:
        return np.prod(free_rotor_kernel(dots, tau))
    return np.prod(interpolate(table, dots))


def link_weight_primitive(X, Xp, tau, lattice, u, g, table=None):
    """e^{-tau V(X)/2} prod_i G0(n_i . n_i'; tau) e^{-tau V(X')/2}."""
    X = np.asarray(X, float)
    Xp = np.asarray(Xp, float)
    v0 = potential_energy(X, lattice, u, g)
    v1 = potential_energy(Xp, lattice, u, g)
    return math.exp(-0.5 * tau * (v0 + v1)) * _kinetic(X, Xp, tau, table)


def mpe_potential_factor(v, tau, coeffs=MPE6):
    """sum_i c_i exp(-A_i) for one big step given V at its 5 sub-beads."""
    v = np.asarray(v, float)
    if v.shape != (5,):
        raise DomainError("need potentials at 5 sub-beads (offsets 0, tau/4, ..., tau)")
    a = {
        4: 0.25 * tau * (0.5 * v[0] + v[1] + v[2] + v[3] + 0.5 * v[4]),
        2: 0.5 * tau * (0.5 * v[0] + v[2] + 0.5 * v[4]),
        1: tau * (0.5 * v[0] + 0.5 * v[4]),
    }
    return sum(c * math.exp(-a[k]) for k, c in zip(coeffs.k, coeffs.c))


def step_weight_mpe6(beads, tau, lattice, u, g, table=None):
    """Sixth-order weight of one big step from 5 consecutive sub-beads.

    Every term shares the four free tau/4 links: the coarse terms skip the
    intermediate beads through normalised free bridges, which reproduces the
    same kinetic product.  The returned weight is that product times
    sum_i c_i exp(-A_i) and may be negative for large steps.
    """
    beads = np.asarray(beads, float)
    if beads.shape[0] != 5:
        raise DomainError("need 5 sub-beads")
    kin = 1.0
    for s in range(4):
        kin *= _kinetic(beads[s], beads[s + 1], tau / 4.0, table)
    v = [potential_energy(b, lattice, u, g) for b in beads]
    return kin * mpe_potential_factor(v, tau)
