"""Run configuration shared by the drivers, plus its flat YAML file format.

A config file is a single flat mapping, e.g.::

    geometry: triangular
    n_particles: 12
    g: 1.5
    u: 0.5
    tau: 0.0375
    beta: 5.1
    seed: 2024

Unknown keys are rejected.  Lists (``bisection_levels``) are the only
non-scalar values.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .units import ReducedParams

GEOMETRIES = ("triangular", "square")
PROPAGATORS = ("primitive", "mpe6")
TRIALS = ("hartree", "constant")
CONVENTIONS = ("periodic-sum", "minimum-image")
CUTOFFS = ("residual", "fixed")

# Converged path parameters (time step and projection length)
DEFAULT_TAU = 0.0375
DEFAULT_BETA = {"triangular": 5.1, "square": 4.2}


def triangular_supercell(n):
    """Return integers (p, q) with p^2 + p q + q^2 = n, or None.

    The supercell spanned by p a1 + q a2 and its 60 degree rotation has a
    hexagonal Wigner-Seitz cell.  Shapes with q == p are preferred (they
    keep all striped orderings commensurate), then q == 0.
    """
    if n < 1:
        return None
    candidates = []
    pmax = int(math.isqrt(n)) + 1
    for p in range(1, pmax + 1):
        for q in range(0, p + 1):
            if p * p + p * q + q * q == n:
                candidates.append((p, q))
    if not candidates:
        return None
    candidates.sort(key=lambda pq: (pq[0] != pq[1], pq[1] != 0, pq))
    return candidates[0]


def check_particle_count(geometry, n):
    if geometry not in GEOMETRIES:
        raise ConfigError(f"unknown geometry {geometry!r}; expected one of {GEOMETRIES}")
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"particle count must be a positive integer, got {n!r}")
    if geometry == "square":
        if math.isqrt(n) ** 2 != n:
            raise ConfigError(f"square lattice needs a perfect-square N, got {n}")
    elif triangular_supercell(n) is None:
        raise ConfigError(f"N={n} does not form a hexagonal triangular supercell (N = p^2+pq+q^2)")


@dataclass
class RunConfig:
    geometry: str = "triangular"
    n_particles: int = 12
    g: float = 0.0
    u: float = 0.0
    tau: float = DEFAULT_TAU
    beta: float = 5.1
    propagator: str = "primitive"
    trial: str = "hartree"
    seed: int = 12345
    stream: int = 0
    n_equil: int = 2000
    n_measure: int = 20000
    convention: str = "periodic-sum"
    cutoff: str = "residual"
    cutoff_tol: float = 1e-8
    r_max: float = 100.0
    bisection_levels: list = field(default_factory=lambda: [1, 2, 3])
    kernel_grid: int = 2**20
    checkpoint: str | None = None
    checkpoint_every: int = 0
    output: str | None = None
    record_configs: bool = False

    def __post_init__(self):
        if isinstance(self.n_particles, float) and self.n_particles.is_integer():
            self.n_particles = int(self.n_particles)
        check_particle_count(self.geometry, self.n_particles)
        for name, allowed in (
            ("propagator", PROPAGATORS),
            ("trial", TRIALS),
            ("convention", CONVENTIONS),
            ("cutoff", CUTOFFS),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        try:
            self.params  # validates g, u, tau, beta
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.params.n_links % 2:
            raise ConfigError(f"beta/tau must be even so a middle bead exists, got {self.params.n_links}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.n_equil < 0 or self.n_measure < 1:
            raise ConfigError("need n_equil >= 0 and n_measure >= 1")
        levels = sorted(set(int(x) for x in self.bisection_levels))
        if not levels or levels[0] < 1:
            raise ConfigError("bisection levels must be positive integers")
        if 2 ** levels[-1] > self.fine_links:
            raise ConfigError(
                f"bisection level {levels[-1]} spans more links than the path has ({self.fine_links})"
            )
        self.bisection_levels = levels
        if self.kernel_grid < 2**12:
            raise ConfigError("kernel_grid must be at least 2^12")
        if self.cutoff == "fixed" and not self.r_max > 0:
            raise ConfigError("fixed cutoff needs r_max > 0")

    @property
    def params(self) -> ReducedParams:
        return ReducedParams(g=self.g, u=self.u, tau=self.tau, beta=self.beta)

    @property
    def n_links(self) -> int:
        return self.params.n_links

    @property
    def fine_links(self) -> int:
        """Links actually stored on the path (four sub-links per step for mpe6)."""
        return self.n_links * (4 if self.propagator == "mpe6" else 1)

    def cutoff_radius(self) -> float:
        """Periodic-sum cutoff radius in lattice units.

        The residual policy makes a single pair at the cutoff contribute
        less than ``cutoff_tol`` (in hB) for coupling max(g, 1).
        """
        if self.cutoff == "fixed":
            return float(self.r_max)
        return (max(self.g, 1.0) / self.cutoff_tol) ** (1.0 / 3.0)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a flat key-value mapping")
    for key, val in data.items():
        if isinstance(val, dict):
            raise ConfigError(f"{path}: nested value for key {key!r}; config must be flat")
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path):
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
