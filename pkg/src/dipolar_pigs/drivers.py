"""Scan drivers, run manifests and CSV output.

Every CSV starts with comment lines

    # schema=<name> v<version>
    # manifest=<json>
    # wall_clock=<json>

followed by a header row.  Columns of each schema are documented in
``data/csv_schema.json``.  The manifest line is a pure function of the
inputs, so two runs with the same manifest produce identical files apart
from the wall-clock line.

Grid points of a scan get independent random streams derived from the run
seed and the point index, so results do not depend on how many worker
processes run them.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_BETA, RunConfig
from .errors import ConfigError, DomainError
from .estimators import summarize
from .exact import fit_order, path_estimates, projected_energy_bias, single_rotor_ground_state
from .lattice import build_lattice, classical_minimum, ordering_energy_report
from .meanfield import DEFAULT_LMAX, mf_phase_scan
from .propagator import DEFAULT_GRID, LEGENDRE_TOL, TAIL_SWITCH
from .sampler import REFRESH_EVERY, move_names, run_pigs
from .trial import optimize_alpha
from .units import CONSTANTS_VERSION, constants_record, molecule_table

SCHEMA_VERSION = 1
DESK_SIZES = {"triangular": 12, "square": 16}
LARGE_SIZES = {"triangular": 48, "square": 64}


@functools.lru_cache(maxsize=1)
def load_schemas():
    text = resources.files("dipolar_pigs").joinpath("data/csv_schema.json").read_text()
    data = json.loads(text)
    if data["version"] != SCHEMA_VERSION:
        raise AssertionError("schema file version does not match the code")
    return data["schemas"]


def schema_columns(name):
    schemas = load_schemas()
    if name not in schemas:
        raise KeyError(f"unknown schema {name!r}")
    return [c["name"] for c in schemas[name]["columns"]]


# ---------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list = field(default_factory=list)
    module_params: dict = field(default_factory=dict)
    code_version: str = __version__
    constants_version: str = CONSTANTS_VERSION
    started: float = field(default_factory=time.time)
    wall_seconds: float = 0.0

    def finish(self):
        self.wall_seconds = time.time() - self.started
        return self

    def deterministic_dict(self):
        d = asdict(self)
        d.pop("started")
        d.pop("wall_seconds")
        return d

    def wall_clock(self):
        return {"started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.started)), "seconds": round(self.wall_seconds, 3)}


def sampler_parameters(config: RunConfig):
    """Per-module settings that shape a PIGS run, for the manifest."""
    return {
        "propagator": config.propagator,
        "fine_links": config.fine_links,
        "kernel_grid": config.kernel_grid,
        "kernel_legendre_tol": LEGENDRE_TOL,
        "kernel_tail_switch": TAIL_SWITCH,
        "convention": config.convention,
        "cutoff": config.cutoff,
        "cutoff_radius": config.cutoff_radius(),
        "moves": move_names(config.bisection_levels),
        "refresh_every": REFRESH_EVERY,
        "alpha": optimize_alpha(config.u) if config.trial == "hartree" else 0.0,
        "constants": constants_record(),
    }


# ---------------------------------------------------------------- CSV


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def render_csv(schema, rows, manifest: RunManifest):
    """CSV text for ``rows`` under ``schema``; rows must carry every column."""
    cols = schema_columns(schema)
    buf = io.StringIO()
    buf.write(f"# schema={schema} v{SCHEMA_VERSION}\n")
    buf.write("# manifest=" + json.dumps(manifest.deterministic_dict(), sort_keys=True, default=str) + "\n")
    buf.write("# wall_clock=" + json.dumps(manifest.wall_clock()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        missing = [c for c in cols if c not in row]
        if missing:
            raise KeyError(f"row lacks columns {missing} of schema {schema}")
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def write_csv(path, schema, rows, manifest: RunManifest):
    """Write atomically to ``path``, or to stdout when path is None or '-'."""
    text = render_csv(schema, rows, manifest)
    if path in (None, "-"):
        print(text, end="")
        return text
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return text


def read_csv(path):
    """Return (schema name, version, manifest dict, rows as dicts of strings)."""
    schema = version = None
    manifest = {}
    lines = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# schema="):
            name, ver = line[len("# schema=") :].split(" v")
            schema, version = name, int(ver)
        elif line.startswith("# manifest="):
            manifest = json.loads(line[len("# manifest=") :])
        elif not line.startswith("#"):
            lines.append(line)
    return schema, version, manifest, list(csv.DictReader(lines))


# ---------------------------------------------------------------- scans


def lattice_energy_scan(geometry, sizes, conventions=("periodic-sum", "minimum-image"), r_max=100.0):
    sizes = list(sizes)
    if not sizes:
        raise ConfigError("need at least one system size")
    rows = []
    for conv in conventions:
        rows += ordering_energy_report(geometry, sizes, conv, r_max)
    manifest = RunManifest(
        "lattice-energy",
        {"geometry": geometry, "sizes": sizes, "conventions": list(conventions), "r_max": r_max},
        module_params={"g": 1.0, "u": 0.0},
    )
    return rows, manifest.finish()


def pigs_row(config: RunConfig, result):
    s = summarize(result.series, config.geometry, config.n_particles)
    row = {
        "backend": "pigs",
        "geometry": config.geometry,
        "N": config.n_particles,
        "g": config.g,
        "u": config.u,
        "tau": config.tau,
        "beta": config.beta,
        "propagator": config.propagator,
        "seed": config.seed,
        "stream": config.stream,
        "n_measure": config.n_measure,
    }
    row.update(s)
    row["negative_weight_fraction"] = result.negative_weight_fraction
    row["backend_valid"] = result.backend_valid
    acc = [a / p for p, a in result.stats.values() if p > 0]
    row["min_acceptance"] = min(acc) if acc else math.nan
    return row


def _run_point(config: RunConfig):
    return pigs_row(config, run_pigs(config))


@functools.lru_cache(maxsize=1)
def source_fingerprint():
    """Hash of the package sources, so cached results go stale with the code."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for path in sorted(root.rglob("*")):
        if path.suffix in (".py", ".json"):
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def _cache_path(cache_dir, config: RunConfig):
    d = config.to_dict()
    for key in ("checkpoint", "checkpoint_every", "output"):
        d.pop(key, None)
    key = hashlib.sha256((json.dumps(d, sort_keys=True) + source_fingerprint()).encode()).hexdigest()[:32]
    return Path(cache_dir) / f"{key}.json"


def run_points(configs, workers=1, cache_dir=None):
    """Run independent PIGS configurations, in order, optionally in parallel.

    With ``cache_dir`` each finished row is stored as JSON under a key built
    from the configuration and the package sources, and reused on later calls.
    """
    configs = list(configs)
    rows = [None] * len(configs)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        for k, c in enumerate(configs):
            path = _cache_path(cache_dir, c)
            if path.exists():
                rows[k] = json.loads(path.read_text())
    todo = [k for k, r in enumerate(rows) if r is None]
    if workers <= 1 or len(todo) <= 1:
        fresh = map(_run_point, (configs[k] for k in todo))
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        fresh = pool.map(_run_point, [configs[k] for k in todo])
    try:
        for k, row in zip(todo, fresh):
            rows[k] = row
            if cache_dir is not None:
                _cache_path(cache_dir, configs[k]).write_text(json.dumps(row, default=float))
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


def pigs_run(config: RunConfig):
    manifest = RunManifest("pigs-run", config.to_dict(), [config.seed], sampler_parameters(config))
    result = run_pigs(config)
    return [pigs_row(config, result)], manifest.finish(), result


def base_config(geometry, large=False, **overrides):
    n = (LARGE_SIZES if large else DESK_SIZES)[geometry]
    kw = dict(geometry=geometry, n_particles=n, beta=DEFAULT_BETA[geometry])
    kw.update(overrides)
    return RunConfig(**kw)


def phase_scan(base: RunConfig, g_grid, u_grid, workers=1, cache_dir=None):
    g_grid, u_grid = list(g_grid), list(u_grid)
    if not g_grid or not u_grid:
        raise ConfigError("grids must be non-empty")
    configs = []
    for u in u_grid:
        for g in g_grid:
            configs.append(base.replace(g=float(g), u=float(u), stream=len(configs), checkpoint=None))
    manifest = RunManifest(
        "phase-scan",
        {"base": base.to_dict(), "g_grid": g_grid, "u_grid": u_grid},
        [base.seed],
        sampler_parameters(base),
    )
    return run_points(configs, workers, cache_dir), manifest.finish()


def convergence_scan(base: RunConfig, vary, values, workers=1, cache_dir=None):
    if vary not in ("tau", "beta"):
        raise ConfigError("vary must be 'tau' or 'beta'")
    values = list(values)
    if not values:
        raise ConfigError("need at least one value")
    if values != sorted(values):
        raise ConfigError("scan values must be sorted")
    configs = [base.replace(**{vary: float(v)}, stream=i, checkpoint=None) for i, v in enumerate(values)]
    manifest = RunManifest(
        "convergence-scan",
        {"base": base.to_dict(), "vary": vary, "values": values},
        [base.seed],
        sampler_parameters(base),
    )
    return run_points(configs, workers, cache_dir), manifest.finish()


def quantumness_ratio(v_mean, v_min, atol=1e-12):
    """(ratio, flag); 0/0 is reported as 1 with flag set."""
    if abs(v_min) <= atol:
        if abs(v_mean) <= atol:
            return 1.0, True
        return math.nan, True
    return v_mean / v_min, False


def quantumness_scan(base: RunConfig, vary, values, workers=1, cache_dir=None):
    if vary not in ("g", "u"):
        raise ConfigError("vary must be 'g' or 'u'")
    fixed = "u" if vary == "g" else "g"
    if getattr(base, fixed) != 0:
        raise ConfigError(f"{fixed} must be 0 when scanning {vary}")
    values = list(values)
    if not values:
        raise ConfigError("need at least one value")
    configs = [base.replace(**{vary: float(v)}, stream=i, checkpoint=None) for i, v in enumerate(values)]
    pig_rows = run_points(configs, workers, cache_dir)
    lat = build_lattice(base.geometry, base.n_particles, base.convention, base.cutoff_radius())
    rows = []
    for cfg, pr in zip(configs, pig_rows):
        v_min, name, tilt = classical_minimum(lat, cfg.u, cfg.g)
        ratio, flag = quantumness_ratio(pr["V_mid"], v_min)
        err = abs(pr["V_mid_err"] / v_min) if not flag else 0.0
        rows.append(
            {
                "geometry": cfg.geometry,
                "N": cfg.n_particles,
                "g": cfg.g,
                "u": cfg.u,
                "V_mid": pr["V_mid"],
                "V_mid_err": pr["V_mid_err"],
                "V_min": v_min,
                "classical_ordering": name,
                "tilt": tilt,
                "ratio": ratio,
                "ratio_err": err,
                "ratio_by_convention": flag,
            }
        )
    manifest = RunManifest(
        "quantumness",
        {"base": base.to_dict(), "vary": vary, "values": values},
        [base.seed],
        sampler_parameters(base),
    )
    return rows, manifest.finish()


def molecule_scan(u=1.0, g=1.0):
    rows = molecule_table(u, g)
    manifest = RunManifest("molecule", {"u": u, "g": g}, module_params={"constants": constants_record()})
    return rows, manifest.finish()


def mf_scan(geometry, n, g_grid, u_grid, l_max=DEFAULT_LMAX, convention="periodic-sum", r_max=100.0):
    lat = build_lattice(geometry, n, convention, r_max)
    rows = mf_phase_scan(lat, g_grid, u_grid, l_max=l_max)
    for r in rows:
        r.update(backend="meanfield", geometry=geometry, N=n, l_max=l_max)
    manifest = RunManifest(
        "mf-scan",
        {"geometry": geometry, "N": n, "g_grid": list(g_grid), "u_grid": list(u_grid), "convention": convention},
        module_params={"l_max": l_max, "r_max": r_max},
    )
    return rows, manifest.finish()


def order_test(u=3.0, taus=(0.05, 0.075, 0.1, 0.15, 0.2, 0.3), propagators=("primitive", "mpe6")):
    """Time-step bias of the projected mixed energy for a single rotor.

    The bias comes from exact transfer matrices, so it carries no
    statistical noise; the fitted exponent goes in the ``order`` column of
    every row of that propagator.
    """
    taus = sorted(float(t) for t in taus)
    if len(taus) < 2:
        raise DomainError("need at least two time steps to fit an order")
    alpha = optimize_alpha(u)
    e0 = single_rotor_ground_state(u, 40).energy
    rows = []
    for prop in propagators:
        biases = [projected_energy_bias(u, t, alpha, prop) for t in taus]
        p = fit_order(taus, biases)
        for t, b in zip(taus, biases):
            rows.append({"propagator": prop, "u": u, "tau": t, "E_exact": e0, "bias": b, "order": p})
    manifest = RunManifest("order-test", {"u": u, "taus": taus, "propagators": list(propagators)}, module_params={"alpha": alpha})
    return rows, manifest.finish()


def exact_path_row(u, tau, beta, propagator="primitive"):
    """Noise-free single-rotor path estimates for comparison with a g = 0, N = 1 run."""
    alpha = optimize_alpha(u)
    e, c = path_estimates(u, tau, beta, alpha, propagator)
    gs = single_rotor_ground_state(u)
    return {"u": u, "tau": tau, "beta": beta, "propagator": propagator, "E_path": e, "cos_path": c, "E0": gs.energy, "cos0": gs.cos_theta}


def crossover_midpoint(x, y):
    """x where y first crosses halfway between its smallest and largest value.

    Linear interpolation between grid points; NaN if y never crosses.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2:
        raise DomainError("need at least two points")
    if y.max() == y.min():
        return math.nan
    half = 0.5 * (y.min() + y.max())
    for k in range(len(x) - 1):
        y0, y1 = y[k] - half, y[k + 1] - half
        if y0 == 0.0:
            return float(x[k])
        if y0 * y1 < 0:
            return float(x[k] + (x[k + 1] - x[k]) * y0 / (y0 - y1))
    return math.nan
