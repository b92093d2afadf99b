"""Self-consistent mean-field theory for lattice rotors.

Each rotor carries its own wavefunction expanded in real spherical harmonics
up to ``l_max``; the other rotors enter only through their mean orientations.
The single-site Hamiltonian is

    h_i = L^2 - u n_z + g (sum_{j != i} S_ij <n_j>) . n + (g/2) n . S_ii . n,

and the total energy counts every pair once,

    E = sum_i <L^2 - u n_z + (g/2) n.S_ii.n>_i + (g/2) sum_{i != j} <n_i>.S_ij.<n_j>.

Real basis functions are ordered by (l, m) with m = -l .. l, index
l^2 + l + m; the m = 0 functions coincide with the complex ones.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import ConvergenceError, DomainError
from .lattice import LatticeSystem, ordering_catalog

DEFAULT_LMAX = 4
TOL = 1e-10
MAX_ITER = 20000


def basis_size(l_max):
    return (l_max + 1) ** 2


def _index(l, m):
    return l * l + l + m


def _complex_dipole(l_max):
    """n_z, n_+ = sin(t) e^{i phi} in the complex |l m> basis (Condon-Shortley)."""
    nb = basis_size(l_max)
    nz = np.zeros((nb, nb))
    npl = np.zeros((nb, nb))
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            col = _index(l, m)
            if l + 1 <= l_max:
                nz[_index(l + 1, m), col] = math.sqrt(((l + 1) ** 2 - m * m) / ((2 * l + 1) * (2 * l + 3)))
                npl[_index(l + 1, m + 1), col] = -math.sqrt((l + m + 1) * (l + m + 2) / ((2 * l + 1) * (2 * l + 3)))
            if l - 1 >= 0:
                nz[_index(l - 1, m), col] = math.sqrt((l * l - m * m) / ((2 * l - 1) * (2 * l + 1)))
                if abs(m + 1) <= l - 1:
                    npl[_index(l - 1, m + 1), col] = math.sqrt((l - m) * (l - m - 1) / ((2 * l - 1) * (2 * l + 1)))
    return nz, npl


def real_basis_transform(l_max):
    """Unitary U with |real l m> = sum_m' U[(l m), (l m')] |complex l m'>."""
    nb = basis_size(l_max)
    U = np.zeros((nb, nb), dtype=complex)
    s = 1.0 / math.sqrt(2.0)
    for l in range(l_max + 1):
        U[_index(l, 0), _index(l, 0)] = 1.0
        for m in range(1, l + 1):
            U[_index(l, m), _index(l, -m)] = s
            U[_index(l, m), _index(l, m)] = s * (-1) ** m
            U[_index(l, -m), _index(l, -m)] = 1j * s
            U[_index(l, -m), _index(l, m)] = -1j * s * (-1) ** m
    return U


@functools.lru_cache(maxsize=8)
def dipole_matrix_elements(l_max=DEFAULT_LMAX):
    """Matrices of n_x, n_y, n_z in the real spherical-harmonic basis.

    Returned as a read-only array of shape (3, nb, nb); each matrix is
    real symmetric and couples only l to l +- 1.
    """
    if l_max < 1:
        raise DomainError("l_max must be at least 1")
    nz, npl = _complex_dipole(l_max)
    nmi = npl.T
    ops_c = [(npl + nmi) / 2.0, (npl - nmi) / 2j, nz.astype(complex)]
    U = real_basis_transform(l_max)
    out = np.empty((3, basis_size(l_max), basis_size(l_max)))
    for a, op in enumerate(ops_c):
        # <real i| A |real j> = sum U*_{i k} A_{k k'} U_{j k'}
        r = U.conj() @ op @ U.T
        if np.max(np.abs(r.imag)) > 1e-12:
            raise AssertionError("real-basis dipole matrix is not real")
        out[a] = 0.5 * (r.real + r.real.T)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=8)
def quadrupole_matrices(l_max=DEFAULT_LMAX):
    """Matrices of n_a n_b truncated to l <= l_max, exact (built in l_max + 1)."""
    big = dipole_matrix_elements(l_max + 1)
    nb = basis_size(l_max)
    out = np.einsum("aij,bjk->abik", big, big)[:, :, :nb, :nb]
    out = np.ascontiguousarray(out)
    out.setflags(write=False)
    return out


def kinetic_diagonal(l_max):
    return np.concatenate([[l * (l + 1)] * (2 * l + 1) for l in range(l_max + 1)]).astype(float)


@dataclass
class MeanFieldState:
    coefficients: np.ndarray  # (N, nb)
    mean_n: np.ndarray  # (N, 3)
    energy: float  # total, hB
    l_max: int
    seed: str = ""
    iterations: int = 0
    residual: float = 0.0
    mixing: float = 1.0

    @property
    def energy_per_particle(self):
        return self.energy / len(self.mean_n)


class MeanFieldProblem:
    """Operators and couplings shared by every SCF iteration on one lattice."""

    def __init__(self, lattice: LatticeSystem, u, g, l_max=DEFAULT_LMAX):
        if u < 0 or g < 0:
            raise DomainError("g and u must be non-negative")
        self.lattice = lattice
        self.u = float(u)
        self.g = float(g)
        self.l_max = l_max
        self.ops = dipole_matrix_elements(l_max)
        self.T = np.diag(kinetic_diagonal(l_max))
        N = lattice.n
        self.S_off = lattice.S.copy()
        self.S_self = np.einsum("iiab->iab", lattice.S).copy()
        self.S_off[np.arange(N), np.arange(N)] = 0.0
        quad = quadrupole_matrices(l_max)
        # single-site part: L^2 - u n_z + (g/2) n.S_ii.n
        self.h0 = np.array(
            [self.T - self.u * self.ops[2] + 0.5 * self.g * np.einsum("ab,abjk->jk", self.S_self[i], quad) for i in range(N)]
        )

    def fields(self, mean_n):
        """sum_{j != i} S_ij <n_j> for every site."""
        return np.einsum("ijab,jb->ia", self.S_off, mean_n)

    def effective_hamiltonian(self, i, mean_n):
        f = self.fields(mean_n)[i]
        return self.h0[i] + self.g * np.einsum("a,ajk->jk", f, self.ops)

    def ground_states(self, mean_n):
        f = self.fields(mean_n)
        h = self.h0 + self.g * np.einsum("ia,ajk->ijk", f, self.ops)
        N, nb = len(mean_n), self.T.shape[0]
        coeffs = np.empty((N, nb))
        for i in range(N):
            _, v = eigh(h[i], subset_by_index=[0, 0])
            c = v[:, 0]
            coeffs[i] = c * (1.0 if c[0] >= 0 else -1.0)
        return coeffs

    def expectations(self, coeffs):
        return np.einsum("ij,ajk,ik->ia", coeffs, self.ops, coeffs)

    def energy(self, coeffs):
        single = np.einsum("ij,ijk,ik->", coeffs, self.h0, coeffs)
        n = self.expectations(coeffs)
        return float(single + 0.5 * self.g * np.einsum("ia,ijab,jb->", n, self.S_off, n))


def seed_orientations(lattice: LatticeSystem, seed_pattern, amplitude=0.5):
    """Initial mean orientations for a named seed."""
    N = lattice.n
    if seed_pattern in ("unpolarized", "none"):
        return np.zeros((N, 3))
    if seed_pattern in ("in-plane", "polarized"):
        out = np.zeros((N, 3))
        out[:, 0] = amplitude
        return out
    cat = ordering_catalog(lattice)
    if seed_pattern in cat:
        return amplitude * cat[seed_pattern]
    raise DomainError(f"seed {seed_pattern!r} not available for {lattice.geometry} N={N}")


def available_seeds(lattice: LatticeSystem):
    seeds = ["unpolarized", "in-plane"]
    cat = ordering_catalog(lattice)
    seeds += [s for s in ("striped", "checkerboard") if s in cat]
    return seeds


def _iterate(problem, mean_n, mixing, max_iter, tol):
    prev_e = math.inf
    monotone = True
    for it in range(1, max_iter + 1):
        coeffs = problem.ground_states(mean_n)
        new_n = problem.expectations(coeffs)
        residual = float(np.max(np.abs(new_n - mean_n)))
        e = problem.energy(coeffs)
        if e > prev_e + 1e-12:
            monotone = False
            if mixing == 1.0:
                # undamped iteration is oscillating; let the caller damp it
                return coeffs, new_n, it, residual, monotone
        prev_e = e
        if residual < tol:
            return coeffs, new_n, it, residual, monotone
        mean_n = (1.0 - mixing) * mean_n + mixing * new_n
    return coeffs, new_n, max_iter, residual, monotone


def scf_solve(lattice, u, g, seed_pattern="unpolarized", mixing=1.0, l_max=DEFAULT_LMAX, tol=TOL, max_iter=MAX_ITER):
    """Iterate the single-site problems to self-consistency.

    With ``mixing = 1`` a rise in energy between iterations triggers a
    restart at mixing 0.5.  Raises ConvergenceError (carrying the last
    residual) if the fixed point is not reached.
    """
    if not 0 < mixing <= 1:
        raise DomainError("mixing must lie in (0, 1]")
    problem = lattice if isinstance(lattice, MeanFieldProblem) else MeanFieldProblem(lattice, u, g, l_max)
    start = seed_orientations(problem.lattice, seed_pattern)
    coeffs, n, it, res, monotone = _iterate(problem, start, mixing, max_iter, tol)
    if mixing == 1.0 and (not monotone or res >= tol):
        mixing = 0.5
        coeffs, n, it, res, _ = _iterate(problem, start, mixing, max_iter, tol)
    if res >= tol:
        raise ConvergenceError(f"SCF did not converge in {max_iter} iterations", residual=res)
    return MeanFieldState(coeffs, n, problem.energy(coeffs), problem.l_max, seed_pattern, it, res, mixing)


def order_parameters(state: MeanFieldState, lattice: LatticeSystem):
    """phi_pol, phi_z, phi_xy, phi_checkerboard of a mean-field state."""
    n = state.mean_n
    N = len(n)
    out = {
        "phi_pol": float(math.hypot(n[:, 0].mean(), n[:, 1].mean())),
        "phi_z": float(n[:, 2].mean()),
        "phi_xy": math.nan,
        "phi_checkerboard": math.nan,
    }
    if lattice.geometry == "square":
        col, row = lattice.coords[:, 0], lattice.coords[:, 1]
        sr = np.where(row % 2 == 0, 1.0, -1.0)
        sc = np.where(col % 2 == 0, 1.0, -1.0)
        xs = abs(np.sum(sr * n[:, 0])) / N
        ys = abs(np.sum(sc * n[:, 1])) / N
        out["phi_xy"] = float(math.hypot(xs, ys))
        out["phi_checkerboard"] = float(abs(np.sum(sr * sc * n[:, 2])) / N)
    return out


def best_state(lattice, u, g, seeds=None, mixing=1.0, l_max=DEFAULT_LMAX):
    """Lowest-energy converged solution over the seed patterns."""
    problem = MeanFieldProblem(lattice, u, g, l_max)
    best = None
    errors = []
    for seed in seeds or available_seeds(lattice):
        try:
            st = scf_solve(problem, u, g, seed, mixing, l_max)
        except ConvergenceError as exc:
            errors.append(exc)
            continue
        if best is None or st.energy < best.energy - 1e-12:
            best = st
    if best is None:
        raise errors[0]
    return best


def mf_phase_scan(lattice, g_grid, u_grid, seeds=None, mixing=1.0, l_max=DEFAULT_LMAX):
    """Mean-field order parameters on a (g, u) grid; one dict per point."""
    g_grid = list(g_grid)
    u_grid = list(u_grid)
    if not g_grid or not u_grid:
        raise DomainError("grids must be non-empty")
    rows = []
    for u in u_grid:
        for g in g_grid:
            st = best_state(lattice, u, g, seeds, mixing, l_max)
            row = {"g": float(g), "u": float(u), "seed": st.seed, "E_total": st.energy_per_particle}
            row.update(order_parameters(st, lattice))
            rows.append(row)
    return rows
