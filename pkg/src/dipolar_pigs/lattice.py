"""Lattice geometry, periodic dipolar interaction tensors and classical orderings.

Sites carry integer coordinates in the primitive basis (a1, a2).  For the
triangular lattice a1 = (1, 0), a2 = (1/2, sqrt(3)/2) and the supercell is
spanned by T1 = p a1 + q a2 and T2 = T1 rotated by 60 degrees, whose
Wigner-Seitz cell is a regular hexagon.  For the square lattice sites are
indexed row-major, ``index = row * L + col`` with position (col, row).

Each pair tensor is

    S_ij = sum_v [ I / |r_ij + v|^3 - 3 (r_ij + v)(r_ij + v)^T / |r_ij + v|^5 ]

and the diagonal block S_ii holds the coupling of a dipole to its own
periodic images (v != 0).  The pair energy is ``sum_{j<i} n_i.S_ij.n_j +
1/2 sum_i n_i.S_ii.n_i``; with the image term included, energies per particle
of commensurate orderings do not depend on the supercell size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .config import check_particle_count, triangular_supercell
from .errors import ConfigError, DomainError

SQRT3 = math.sqrt(3.0)
A1 = np.array([1.0, 0.0])
A2_TRIANGULAR = np.array([0.5, SQRT3 / 2.0])
A2_SQUARE = np.array([0.0, 1.0])
_UNIT_TOL = 1e-9


@dataclass(eq=False)
class LatticeSystem:
    geometry: str
    n: int
    positions: np.ndarray  # (N, 2)
    coords: np.ndarray  # (N, 2) integer coordinates in (a1, a2)
    supercell: np.ndarray  # (2, 2) integer matrix, columns are T1, T2 in (a1, a2)
    T1: np.ndarray
    T2: np.ndarray
    convention: str
    r_max: float
    S: np.ndarray = field(repr=False)  # (N, N, 3, 3)

    def __post_init__(self):
        self.S.setflags(write=False)
        self.positions.setflags(write=False)

    @property
    def side(self) -> int:
        """Linear size of a square lattice."""
        if self.geometry != "square":
            raise ConfigError("side is only defined for square lattices")
        return math.isqrt(self.n)

    def metadata(self):
        return {
            "geometry": self.geometry,
            "n": self.n,
            "convention": self.convention,
            "r_max": self.r_max,
            "T1": self.T1.tolist(),
            "T2": self.T2.tolist(),
            "supercell": self.supercell.tolist(),
        }


def _basis(geometry):
    return np.array([A1, A2_TRIANGULAR if geometry == "triangular" else A2_SQUARE]).T


def _supercell_matrix(geometry, n):
    if geometry == "square":
        L = math.isqrt(n)
        return np.array([[L, 0], [0, L]])
    p, q = triangular_supercell(n)
    # T2 = rot60(T1); rot60 maps a1 -> a2 and a2 -> a2 - a1
    return np.array([[p, -q], [q, p + q]])


def reduce_coords(c, cell):
    """Map integer coordinates into the half-open supercell parallelogram."""
    c = np.asarray(c, dtype=np.int64)
    det = int(round(np.linalg.det(cell)))
    adj = np.array([[cell[1, 1], -cell[0, 1]], [-cell[1, 0], cell[0, 0]]], dtype=np.int64)
    frac_num = c @ adj.T  # fractional coordinates times det
    k = np.floor_divide(frac_num, det)
    return c - k @ cell.T


def _enumerate_sites(geometry, n, cell):
    if geometry == "square":
        L = cell[0, 0]
        rows, cols = np.divmod(np.arange(n), L)
        return np.stack([cols, rows], axis=1)
    span = int(np.abs(cell).sum()) + 1
    m, k = np.meshgrid(np.arange(-span, span + 1), np.arange(-span, span + 1), indexing="ij")
    c = np.stack([m.ravel(), k.ravel()], axis=1)
    red = np.unique(reduce_coords(c, cell), axis=0)
    # order by row (a2 coordinate), then along the row
    order = np.lexsort((red[:, 0], red[:, 1]))
    red = red[order]
    if len(red) != n:
        raise ConfigError(f"supercell enumeration produced {len(red)} sites, expected {n}")
    return red


def image_vectors(T1, T2, r_max, margin=0.0):
    """All lattice translations i*T1 + j*T2 with |v| <= r_max + margin.

    ``margin`` should be the largest separation between sites of the primary
    cell, so that every image with |r_ij + v| <= r_max is present.  The zero
    vector is always included.
    """
    if not r_max > 0:
        raise DomainError(f"r_max must be positive, got {r_max}")
    T1 = np.asarray(T1, float)
    T2 = np.asarray(T2, float)
    reach = r_max + margin
    # |i T1 + j T2| >= |i| * h1 where h1 is the height of the cell over T2
    area = abs(T1[0] * T2[1] - T1[1] * T2[0])
    imax = int(math.ceil(reach * np.linalg.norm(T2) / area)) + 1
    jmax = int(math.ceil(reach * np.linalg.norm(T1) / area)) + 1
    i, j = np.meshgrid(np.arange(-imax, imax + 1), np.arange(-jmax, jmax + 1), indexing="ij")
    v = i.reshape(-1, 1) * T1 + j.reshape(-1, 1) * T2
    keep = np.einsum("ka,ka->k", v, v) <= reach * reach * (1 + 1e-12)
    return v[keep]


def dipole_tensor_sum(r, weights=None):
    """Sum of I/|r|^3 - 3 r r^T/|r|^5 over an array of in-plane displacements."""
    r = np.atleast_2d(np.asarray(r, float))
    r2 = np.einsum("ka,ka->k", r, r)
    if np.any(r2 == 0.0):
        raise DomainError("coincident sites in dipole tensor")
    inv3 = r2**-1.5
    inv5 = inv3 / r2
    if weights is not None:
        inv3 = inv3 * weights
        inv5 = inv5 * weights
    out = np.zeros((3, 3))
    dim = r.shape[1]
    out[:dim, :dim] = -3.0 * np.einsum("k,ka,kb->ab", inv5, r, r)
    out += np.eye(3) * inv3.sum()
    return out


def interaction_tensor(r_ij, images, r_max=None):
    """Periodic sum of the dipolar tensor for displacement ``r_ij``.

    Terms with |r_ij + v| > r_max are dropped when ``r_max`` is given; the
    zero displacement (self term) is always excluded.
    """
    r = np.asarray(r_ij, float) + np.asarray(images, float)
    r2 = np.einsum("ka,ka->k", r, r)
    keep = r2 > 0.0
    if r_max is not None:
        # relative slack keeps lattice points lying on the cutoff circle symmetric
        keep &= r2 <= r_max * r_max * (1 + 1e-12)
    if not keep.any():
        if np.allclose(r_ij, 0.0) and len(images) == 1:
            raise DomainError("coincident sites in dipole tensor")
        return np.zeros((3, 3))
    return dipole_tensor_sum(r[keep])


def _minimum_image_tensor(d, images):
    r = d + images
    dist = np.sqrt(np.einsum("ka,ka->k", r, r))
    nonzero = dist > 1e-12
    if not nonzero.any():
        return np.zeros((3, 3))
    dmin = dist[nonzero].min()
    tie = nonzero & (dist < dmin + 1e-9)
    # equidistant images on the cell boundary share the weight
    return dipole_tensor_sum(r[tie], weights=np.full(tie.sum(), 1.0 / tie.sum()))


def build_lattice(geometry, n, convention="periodic-sum", r_max=None):
    """Construct the supercell and precompute every pair tensor.

    ``r_max`` is the periodic-sum cutoff radius in lattice units (default
    100).  Tensors depend only on the displacement modulo the supercell, so
    one image sum per displacement class is enough.
    """
    check_particle_count(geometry, n)
    if convention not in ("periodic-sum", "minimum-image"):
        raise ConfigError(f"unknown convention {convention!r}")
    r_max = 100.0 if r_max is None else float(r_max)
    cell = _supercell_matrix(geometry, n)
    basis = _basis(geometry)
    coords = _enumerate_sites(geometry, n, cell)
    positions = coords @ basis.T
    T1, T2 = (basis @ cell).T
    index = {tuple(c): k for k, c in enumerate(coords)}

    diam = 0.0
    if n > 1:
        diff = positions[:, None, :] - positions[None, :, :]
        diam = float(np.sqrt(np.einsum("ija,ija->ij", diff, diff).max()))

    if convention == "periodic-sum":
        images = image_vectors(T1, T2, r_max, margin=diam)
    else:
        images = image_vectors(T1, T2, 1.0, margin=np.linalg.norm(T1) + np.linalg.norm(T2))

    # class k: displacement from site 0 (the origin) to site k
    origin = index[(0, 0)]
    class_tensors = np.empty((n, 3, 3))
    for k in range(n):
        d = positions[k] - positions[origin]
        if convention == "periodic-sum":
            class_tensors[k] = interaction_tensor(d, images, r_max)
        else:
            class_tensors[k] = _minimum_image_tensor(d, images) if k != origin else 0.0

    delta = coords[None, :, :] - coords[:, None, :]  # c_j - c_i
    cls = reduce_coords(delta.reshape(-1, 2), cell)
    cls_index = np.array([index[tuple(c)] for c in cls]).reshape(n, n)
    S = class_tensors[cls_index]
    return LatticeSystem(
        geometry=geometry,
        n=n,
        positions=positions,
        coords=coords,
        supercell=cell,
        T1=T1,
        T2=T2,
        convention=convention,
        r_max=r_max,
        S=np.ascontiguousarray(S),
    )


def check_unit(orientations, tol=_UNIT_TOL):
    n = np.asarray(orientations, float)
    if n.ndim != 2 or n.shape[1] != 3:
        raise DomainError(f"orientations must have shape (N, 3), got {n.shape}")
    norms = np.linalg.norm(n, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise DomainError("orientations must be unit vectors")
    return n


def interaction_energy(orientations, lattice):
    """Dipolar energy sum_{j<i} n_i.S_ij.n_j + 1/2 sum_i n_i.S_ii.n_i (total, g = 1)."""
    n = np.asarray(orientations, float)
    return 0.5 * np.einsum("ia,ijab,jb->", n, lattice.S, n)


def potential_energy(orientations, lattice, u, g):
    """Total potential energy in hB with the field along z."""
    n = check_unit(orientations)
    if len(n) != lattice.n:
        raise DomainError(f"expected {lattice.n} orientations, got {len(n)}")
    return -u * n[:, 2].sum() + g * interaction_energy(n, lattice)


def classical_energy(orientations, lattice, u, g=1.0):
    """Potential energy per particle (hB) of a fixed orientation pattern."""
    return potential_energy(orientations, lattice, u, g) / lattice.n


# ---------------------------------------------------------------- orderings


def polarized(lattice, angle=0.0):
    """All dipoles in-plane along ``angle`` (radians from x)."""
    v = np.array([math.cos(angle), math.sin(angle), 0.0])
    return np.tile(v, (lattice.n, 1))


def uniform(lattice, direction):
    v = np.asarray(direction, float)
    return np.tile(v / np.linalg.norm(v), (lattice.n, 1))


def _stripe_rows(lattice, axis):
    m, k = lattice.coords[:, 0], lattice.coords[:, 1]
    if lattice.geometry == "square":
        # axis 0: chains along x, sign alternates with row; axis 1: along y, sign by column
        return (k, A1) if axis == 0 else (m, A2_SQUARE)
    if axis == 0:
        return k, A1
    if axis == 1:
        return m, A2_TRIANGULAR
    return m + k, A2_TRIANGULAR - A1


def stripe_commensurate(lattice, axis):
    rows_of = {0: 1, 1: 0}
    cell = lattice.supercell
    if lattice.geometry == "triangular" and axis == 2:
        shifts = cell[0] + cell[1]
    else:
        shifts = cell[rows_of[axis]]
    return bool(np.all(shifts % 2 == 0))


def striped(lattice, axis=0):
    """Head-to-tail chains along a lattice axis, alternating sign between chains."""
    naxes = 2 if lattice.geometry == "square" else 3
    if not 0 <= axis < naxes:
        raise ConfigError(f"stripe axis must be in [0, {naxes})")
    if not stripe_commensurate(lattice, axis):
        raise ConfigError(f"striped ordering along axis {axis} does not fit N={lattice.n}")
    rows, direction = _stripe_rows(lattice, axis)
    sign = np.where(rows % 2 == 0, 1.0, -1.0)
    out = np.zeros((lattice.n, 3))
    out[:, :2] = sign[:, None] * direction[None, :]
    return out


def checkerboard(lattice):
    """Alternating +z / -z on a square lattice."""
    if lattice.geometry != "square":
        raise ConfigError("checkerboard ordering is defined for square lattices")
    if lattice.side % 2:
        raise ConfigError("checkerboard needs an even side length")
    m, k = lattice.coords[:, 0], lattice.coords[:, 1]
    out = np.zeros((lattice.n, 3))
    out[:, 2] = np.where((m + k) % 2 == 0, 1.0, -1.0)
    return out


def ordering_catalog(lattice):
    """Named orderings relevant to the lattice geometry.

    Returns a dict name -> (N, 3) array.  Orderings that do not fit the
    supercell are omitted.
    """
    cat = {"polarized": polarized(lattice)}
    axes = [a for a in range(2 if lattice.geometry == "square" else 3) if stripe_commensurate(lattice, a)]
    if axes:
        cat["striped"] = striped(lattice, axes[0])
    if lattice.geometry == "square" and lattice.side % 2 == 0:
        cat["checkerboard"] = checkerboard(lattice)
    return cat


def ordering_energy_report(geometry, sizes, convention="periodic-sum", r_max=100.0, g=1.0, orderings=None):
    """Energy per particle of each catalog ordering at each size (u = 0).

    Returns rows of dicts with keys geometry, convention, N, ordering,
    energy_per_particle.
    """
    sizes = list(sizes)
    if not sizes:
        raise ConfigError("need at least one system size")
    rows = []
    for n in sizes:
        lat = build_lattice(geometry, int(n), convention, r_max)
        for name, pattern in ordering_catalog(lat).items():
            if orderings is not None and name not in orderings:
                continue
            rows.append(
                {
                    "geometry": geometry,
                    "convention": convention,
                    "N": int(n),
                    "ordering": name,
                    "energy_per_particle": float(classical_energy(pattern, lat, 0.0, g)),
                }
            )
    return rows


def canted(pattern, tilt):
    """Tilt each in-plane orientation toward +z by ``tilt`` radians."""
    out = np.asarray(pattern, float) * math.cos(tilt)
    out[:, 2] += math.sin(tilt)
    return out


def classical_minimum(lattice, u, g, tol=1e-6):
    """Minimum classical potential energy per particle.

    Each in-plane ordering of the catalog is tilted uniformly toward the
    field and the tilt is optimised; the checkerboard is taken as is.
    Returns ``(v_min, ordering_name, tilt)``.
    """
    if g < 0 or u < 0:
        raise DomainError("g and u must be non-negative")
    best = (math.inf, None, 0.0)
    for name, pattern in ordering_catalog(lattice).items():
        if name == "checkerboard":
            e = classical_energy(pattern, lattice, u, g)
            cand = (e, name, 0.0)
        else:
            def energy(t, p=pattern):
                return classical_energy(canted(p, t), lattice, u, g)

            res = minimize_scalar(energy, bounds=(0.0, math.pi / 2), method="bounded", options={"xatol": tol})
            cand = min(
                (res.fun, name, float(res.x)),
                (energy(0.0), name, 0.0),
                (energy(math.pi / 2), name, math.pi / 2),
            )
        if cand[0] < best[0] - 1e-14:
            best = cand
    return best
