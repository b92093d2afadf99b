"""Reduced units and molecule parameter conversions.

Energies are measured in hB, imaginary time in (2 pi B)^-1 and lengths in
lattice spacings.  In these units the rotor Hamiltonian reads

    H = sum_i L_i^2 - u n_i.e + g sum_{j<i} n_i.S_ij.n_j

with u = dE/(hB) and g = d^2 / (4 pi eps0 hB r_lat^3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

# CODATA 2018 (h and c are exact by SI definition)
CONSTANTS_VERSION = "CODATA-2018"
PLANCK_H = 6.62607015e-34  # J s
SPEED_OF_LIGHT = 299792458.0  # m/s
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
DEBYE = 1e-21 / SPEED_OF_LIGHT  # C m

_GHZ = 1e9
_KV_PER_CM = 1e5  # V/m
_NM = 1e-9


def constants_record():
    """Constants used for conversions, for embedding in run metadata."""
    return {
        "version": CONSTANTS_VERSION,
        "h": PLANCK_H,
        "c": SPEED_OF_LIGHT,
        "eps0": VACUUM_PERMITTIVITY,
        "debye": DEBYE,
    }


@dataclass(frozen=True)
class ReducedParams:
    """Dimensionless Hamiltonian and path parameters.

    ``tau`` and ``beta`` are in units of (2 pi B)^-1, so the free-rotor
    kernel exponent is simply ``tau * l * (l + 1)``.
    """

    g: float
    u: float
    tau: float
    beta: float

    def __post_init__(self):
        if self.g < 0 or self.u < 0:
            raise DomainError(f"g and u must be non-negative, got g={self.g}, u={self.u}")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        m = self.beta / self.tau
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 2:
            raise DomainError(
                f"beta/tau must be an integer >= 2, got beta={self.beta}, tau={self.tau}"
            )

    @property
    def n_links(self) -> int:
        return int(round(self.beta / self.tau))


@dataclass(frozen=True)
class MoleculeParams:
    """Physical parameters of a polar molecule on a lattice.

    d in Debye, B in GHz, E in kV/cm, r_lat in nm.
    """

    name: str
    d: float
    B: float
    E: float
    r_lat: float

    def __post_init__(self):
        for field in ("d", "B", "E", "r_lat"):
            if not getattr(self, field) > 0:
                raise DomainError(f"{field} must be strictly positive, got {getattr(self, field)}")


def _check_positive(**values):
    for key, val in values.items():
        if not val > 0:
            raise DomainError(f"{key} must be strictly positive, got {val}")


def reduced_u(d, B, E):
    """u = dE/(hB); E = 0 is allowed and gives u = 0."""
    _check_positive(d=d, B=B)
    if E < 0:
        raise DomainError(f"E must be non-negative, got {E}")
    return d * DEBYE * E * _KV_PER_CM / (PLANCK_H * B * _GHZ)


def reduced_g(d, B, r_lat):
    """g = d^2 / (4 pi eps0 hB r_lat^3)."""
    _check_positive(d=d, B=B, r_lat=r_lat)
    dip = d * DEBYE
    return dip * dip / (
        4.0 * math.pi * VACUUM_PERMITTIVITY * PLANCK_H * B * _GHZ * (r_lat * _NM) ** 3
    )


def reduced_from_physical(m: MoleculeParams):
    """Return ``(u, g)`` for a molecule at field E and spacing r_lat."""
    return reduced_u(m.d, m.B, m.E), reduced_g(m.d, m.B, m.r_lat)


def field_for_u(d, B, u):
    """Electric field (kV/cm) giving reduced field strength ``u``."""
    _check_positive(d=d, B=B)
    if u < 0:
        raise DomainError(f"u must be non-negative, got {u}")
    return u * PLANCK_H * B * _GHZ / (d * DEBYE) / _KV_PER_CM


def spacing_for_g(d, B, g):
    """Lattice spacing (nm) giving reduced interaction strength ``g``."""
    _check_positive(d=d, B=B, g=g)
    dip = d * DEBYE
    r3 = dip * dip / (4.0 * math.pi * VACUUM_PERMITTIVITY * PLANCK_H * B * _GHZ * g)
    return r3 ** (1.0 / 3.0) / _NM


# Published molecule parameters: name, d (D), B (GHz), E at u=1 (kV/cm), r_lat at g=1 (nm)
TABLE1 = (
    ("KRb", 0.57, 1.10, 3.80, 3.56),
    ("LiCs", 5.46, 6.53, 2.37, 8.83),
    ("NaCs", 4.70, 1.74, 0.73, 12.42),
    ("CsI", 11.69, 0.71, 0.12, 30.70),
    ("KBr", 10.60, 2.43, 0.46, 19.10),
    ("SrO", 8.87, 10.13, 2.27, 10.53),
    ("SrF", 3.47, 7.52, 4.30, 6.22),
    ("YO", 4.54, 11.63, 5.11, 6.42),
    ("YbF", 9.93, 9.19, 1.44, 12.93),
)


def molecule_table(u=1.0, g=1.0, rows=TABLE1):
    """Recompute the field and spacing columns for each tabulated molecule.

    Returns a list of dicts with the published values alongside the
    recomputed ones and their relative deviations.
    """
    out = []
    for name, d, B, E_pub, r_pub in rows:
        E = field_for_u(d, B, u)
        r = spacing_for_g(d, B, g)
        out.append(
            {
                "molecule": name,
                "d_debye": d,
                "B_GHz": B,
                "E_kV_cm": E,
                "E_published": E_pub,
                "E_rel_dev": (E - E_pub) / E_pub,
                "r_lat_nm": r,
                "r_lat_published": r_pub,
                "r_lat_rel_dev": (r - r_pub) / r_pub,
            }
        )
    return out
