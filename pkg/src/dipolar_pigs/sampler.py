"""PIGS Markov chain for rotors on a lattice.

The path holds ``Mf + 1`` beads of N orientations.  With the primitive
propagator ``Mf = M = beta/tau``; with the sixth-order propagator each step
is split into four sub-links so ``Mf = 4M`` and every step weight is a
function of the five sub-beads it spans.

Moves, per rotor and per sweep:

* segment moves: for each bisection level L, ``Mf // 2^L`` moves on segments
  of ``2^L`` sub-links with random start.  Interior beads are regrown
  coarsest level first; each midpoint is drawn from the kernel at half the
  span about the normalised sum of its two end beads, and the ratio of the
  true kinetic bridge to this proposal enters the acceptance.  The primitive
  chain applies the staged acceptance of multilevel bisection; the
  sixth-order chain accepts once with the ratio of step weights.
* one end move per path end, drawn from the kernel to the adjacent bead.
* a rigid rotation of the rotor's whole path about the field axis.
* a rigid rotation of the rotor's whole path about a random axis.

Free-rotor links are invariant under rigid rotations, so only the potential
and trial factors enter those acceptance tests.  Local fields
``F[k, i] = sum_{j != i} S_ij n_j(k)`` and per-bead potentials are kept up
to date incrementally and rebuilt from scratch every ``REFRESH_EVERY``
sweeps.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .config import RunConfig
from .errors import CheckpointError
from .lattice import LatticeSystem, build_lattice
from .propagator import MPE6, build_table
from .trial import TrialWF

CHECKPOINT_VERSION = 1
REFRESH_EVERY = 64
NEGATIVE_WEIGHT_LIMIT = 1e-3

OBSERVABLES = ("E", "V_mid", "px", "py", "pz", "x_stripe", "y_stripe", "checkerboard")
_N_OBS = len(OBSERVABLES)

# counters: negative-weight rejections
_NEG = 0

# ----------------------------------------------------------- numba kernels


@numba.njit(cache=True)
def _interp(values, x):
    n = values.shape[0]
    s = (x + 1.0) * 0.5 * (n - 1)
    i = int(s)
    if i > n - 2:
        i = n - 2
    if i < 0:
        i = 0
    f = s - i
    return values[i] * (1.0 - f) + values[i + 1] * f


@numba.njit(cache=True)
def _sample_cos(values, cdf, rng):
    """Inverse-CDF draw of cos(gamma) from the piecewise-linear kernel."""
    n = values.shape[0]
    h = 2.0 / (n - 1)
    target = rng.random() * cdf[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if cdf[mid] <= target:
            lo = mid
        else:
            hi = mid
    r = target - cdf[lo]
    a = values[lo]
    b = (values[lo + 1] - a) / h
    disc = a * a + 2.0 * b * r
    if disc < 0.0:
        disc = 0.0
    s = 2.0 * r / (a + math.sqrt(disc))
    if s > h:
        s = h
    x = -1.0 + lo * h + s
    if x > 1.0:
        x = 1.0
    if x < -1.0:
        x = -1.0
    return x


@numba.njit(cache=True)
def _orient_about(axis, x, phi, out):
    """Unit vector at polar cosine x and azimuth phi around ``axis``."""
    ax, ay, az = axis[0], axis[1], axis[2]
    if abs(az) < 0.9:
        # e1 = axis x z
        e1x, e1y, e1z = ay, -ax, 0.0
    else:
        # e1 = axis x x
        e1x, e1y, e1z = 0.0, az, -ay
    nrm = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    e1x /= nrm
    e1y /= nrm
    e1z /= nrm
    e2x = ay * e1z - az * e1y
    e2y = az * e1x - ax * e1z
    e2z = ax * e1y - ay * e1x
    s = math.sqrt(max(0.0, 1.0 - x * x))
    c = math.cos(phi)
    d = math.sin(phi)
    ox = x * ax + s * (c * e1x + d * e2x)
    oy = x * ay + s * (c * e1y + d * e2y)
    oz = x * az + s * (c * e1z + d * e2z)
    nrm = math.sqrt(ox * ox + oy * oy + oz * oz)
    out[0] = ox / nrm
    out[1] = oy / nrm
    out[2] = oz / nrm


@numba.njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@numba.njit(cache=True)
def _clip1(c):
    if c > 1.0:
        return 1.0
    if c < -1.0:
        return -1.0
    return c


@numba.njit(cache=True)
def _draw_from_kernel(values, cdf, axis, rng, out):
    x = _sample_cos(values, cdf, rng)
    _orient_about(axis, x, 2.0 * math.pi * rng.random(), out)


@numba.njit(cache=True)
def _midpoint(left, right, out):
    sx = left[0] + right[0]
    sy = left[1] + right[1]
    sz = left[2] + right[2]
    nrm = math.sqrt(sx * sx + sy * sy + sz * sz)
    if nrm < 1e-12:
        out[0] = left[0]
        out[1] = left[1]
        out[2] = left[2]
    else:
        out[0] = sx / nrm
        out[1] = sy / nrm
        out[2] = sz / nrm


@numba.njit(cache=True)
def _bridge_log_ratio(tv, k, left, m, right, c):
    """log of G_t(l.m) G_t(m.r) / [G_{t/2}(c.m) G_{2t}(l.r)] for a level-k midpoint.

    Table k holds time t = tau_f 2^(k-1); the proposal is G_{t/2} about the
    geodesic midpoint c.  The ratio is 1 for an exact free bridge, so it is
    the kinetic correction entering the level acceptance.
    """
    _midpoint(left, right, c)
    return (
        math.log(_interp(tv[k], _clip1(_dot(left, m))))
        + math.log(_interp(tv[k], _clip1(_dot(m, right))))
        - math.log(_interp(tv[k - 1], _clip1(_dot(c, m))))
        - math.log(_interp(tv[k + 1], _clip1(_dot(left, right))))
    )


@numba.njit(cache=True)
def _vsite(n, f, sd, u, g):
    """Potential terms of one rotor that change with its own orientation."""
    quad = 0.0
    for a in range(3):
        for b in range(3):
            quad += n[a] * sd[a, b] * n[b]
    return -u * n[2] + g * _dot(n, f) + 0.5 * g * quad


@numba.njit(cache=True)
def _apply(beads, F, V, S, r, b, nnew, dv):
    d0 = nnew[0] - beads[b, r, 0]
    d1 = nnew[1] - beads[b, r, 1]
    d2 = nnew[2] - beads[b, r, 2]
    N = beads.shape[1]
    for j in range(N):
        if j == r:
            continue
        sjr = S[j, r]
        F[b, j, 0] += sjr[0, 0] * d0 + sjr[0, 1] * d1 + sjr[0, 2] * d2
        F[b, j, 1] += sjr[1, 0] * d0 + sjr[1, 1] * d1 + sjr[1, 2] * d2
        F[b, j, 2] += sjr[2, 0] * d0 + sjr[2, 1] * d1 + sjr[2, 2] * d2
    V[b] += dv
    beads[b, r, 0] = nnew[0]
    beads[b, r, 1] = nnew[1]
    beads[b, r, 2] = nnew[2]


@numba.njit(cache=True)
def _refresh(beads, F, V, S, u, g):
    """Rebuild local fields and bead potentials from scratch."""
    nb, N = beads.shape[0], beads.shape[1]
    for k in range(nb):
        for i in range(N):
            fx = 0.0
            fy = 0.0
            fz = 0.0
            for j in range(N):
                if j == i:
                    continue
                s = S[i, j]
                nx, ny, nz = beads[k, j, 0], beads[k, j, 1], beads[k, j, 2]
                fx += s[0, 0] * nx + s[0, 1] * ny + s[0, 2] * nz
                fy += s[1, 0] * nx + s[1, 1] * ny + s[1, 2] * nz
                fz += s[2, 0] * nx + s[2, 1] * ny + s[2, 2] * nz
            F[k, i, 0] = fx
            F[k, i, 1] = fy
            F[k, i, 2] = fz
        tot = 0.0
        for i in range(N):
            n = beads[k, i]
            quad = 0.0
            for a in range(3):
                for b in range(3):
                    quad += n[a] * S[i, i, a, b] * n[b]
            tot += -u * n[2] + 0.5 * g * _dot(n, F[k, i]) + 0.5 * g * quad
        V[k] = tot


@numba.njit(cache=True)
def _log_step_weight(v0, v1, v2, v3, v4, tau, c1, c2, c4):
    """log of sum_i c_i exp(-A_i) for one sixth-order step; nan if not positive."""
    a4 = 0.25 * tau * (0.5 * v0 + v1 + v2 + v3 + 0.5 * v4)
    a2 = 0.5 * tau * (0.5 * v0 + v2 + 0.5 * v4)
    a1 = tau * (0.5 * v0 + 0.5 * v4)
    s = c4 + c2 * math.exp(a4 - a2) + c1 * math.exp(a4 - a1)
    if not s > 0.0:
        return math.nan
    return -a4 + math.log(s)


@numba.njit(cache=True)
def _mpe_delta(V, dvfull, s_lo, s_hi, tau, c1, c2, c4):
    """Change in sum of log step weights; nan if a new weight is not positive.

    ``dvfull`` holds the potential change at every sub-bead (zero where
    unchanged).
    """
    tot = 0.0
    for s in range(s_lo, s_hi + 1):
        b = 4 * s
        old = _log_step_weight(V[b], V[b + 1], V[b + 2], V[b + 3], V[b + 4], tau, c1, c2, c4)
        new = _log_step_weight(
            V[b] + dvfull[b],
            V[b + 1] + dvfull[b + 1],
            V[b + 2] + dvfull[b + 2],
            V[b + 3] + dvfull[b + 3],
            V[b + 4] + dvfull[b + 4],
            tau,
            c1,
            c2,
            c4,
        )
        if math.isnan(new):
            return math.nan
        tot += new - old
    return tot


@numba.njit(cache=True)
def _metropolis(logr, rng):
    if logr >= 0.0:
        return True
    return rng.random() < math.exp(logr)


@numba.njit(cache=True)
def _segment_move(beads, F, V, S, Sd, r, a, L, tv, tc, tau_f, u, g, mpe, tau, mc, rng, new, dv, dvfull, counters):
    """Regrow interior beads of rotor r on [a, a + 2^L]; returns 1 if accepted.

    ``tv[j]`` holds the kernel at time tau_f 2^(j-1).
    """
    nseg = 1 << L
    for j in range(nseg + 1):
        for q in range(3):
            new[j, q] = beads[a + j, r, q]
    c = np.empty(3)
    du_prev = 0.0
    logkin = 0.0
    for k in range(L, 0, -1):
        step = 1 << (k - 1)
        if not mpe:
            logkin = 0.0
        for j in range(step, nseg, 2 * step):
            b = a + j
            logkin -= _bridge_log_ratio(tv, k, beads[b - step, r], beads[b, r], beads[b + step, r], c)
            _midpoint(new[j - step], new[j + step], c)
            _draw_from_kernel(tv[k - 1], tc[k - 1], c, rng, new[j])
            logkin += _bridge_log_ratio(tv, k, new[j - step], new[j], new[j + step], c)
            dv[j] = _vsite(new[j], F[b, r], Sd[r], u, g) - _vsite(beads[b, r], F[b, r], Sd[r], u, g)
        if not mpe:
            du = 0.0
            for j in range(step, nseg, step):
                du += dv[j]
            du *= tau_f * step
            if not _metropolis(-du + du_prev + logkin, rng):
                return 0
            du_prev = du
    if mpe:
        for j in range(1, nseg):
            dvfull[a + j] = dv[j]
        # steps whose five sub-beads include any of a+1 .. a+nseg-1
        s_lo = a // 4
        s_hi = min((beads.shape[0] - 1) // 4 - 1, (a + nseg - 1) // 4)
        d = _mpe_delta(V, dvfull, s_lo, s_hi, tau, mc[0], mc[1], mc[2])
        for j in range(1, nseg):
            dvfull[a + j] = 0.0
        if math.isnan(d):
            counters[_NEG] += 1
            return 0
        if not _metropolis(d + logkin, rng):
            return 0
    for j in range(1, nseg):
        _apply(beads, F, V, S, r, a + j, new[j], dv[j])
    return 1


@numba.njit(cache=True)
def _end_move(beads, F, V, S, Sd, r, end, tv, tc, tau_f, u, g, alpha, mpe, tau, mc, rng, new, dvfull, counters):
    mf = beads.shape[0] - 1
    adj = 1 if end == 0 else mf - 1
    _draw_from_kernel(tv[1], tc[1], beads[adj, r], rng, new[0])
    dv = _vsite(new[0], F[end, r], Sd[r], u, g) - _vsite(beads[end, r], F[end, r], Sd[r], u, g)
    logr = alpha * (new[0, 2] - beads[end, r, 2])
    if mpe:
        s = 0 if end == 0 else mf // 4 - 1
        dvfull[end] = dv
        d = _mpe_delta(V, dvfull, s, s, tau, mc[0], mc[1], mc[2])
        dvfull[end] = 0.0
        if math.isnan(d):
            counters[_NEG] += 1
            return 0
        logr += d
    else:
        logr -= 0.5 * tau_f * dv
    if not _metropolis(logr, rng):
        return 0
    _apply(beads, F, V, S, r, end, new[0], dv)
    return 1


@numba.njit(cache=True)
def _rotation_matrix(axis, angle, R):
    x, y, z = axis[0], axis[1], axis[2]
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    R[0, 0] = c + x * x * t
    R[0, 1] = x * y * t - z * s
    R[0, 2] = x * z * t + y * s
    R[1, 0] = y * x * t + z * s
    R[1, 1] = c + y * y * t
    R[1, 2] = y * z * t - x * s
    R[2, 0] = z * x * t - y * s
    R[2, 1] = z * y * t + x * s
    R[2, 2] = c + z * z * t


@numba.njit(cache=True)
def _rigid_move(beads, F, V, S, Sd, r, R, tau_f, u, g, alpha, mpe, tau, mc, rng, path, dvfull, counters):
    nb = beads.shape[0]
    mf = nb - 1
    for b in range(nb):
        n = beads[b, r]
        for c in range(3):
            path[b, c] = R[c, 0] * n[0] + R[c, 1] * n[1] + R[c, 2] * n[2]
        nrm = math.sqrt(_dot(path[b], path[b]))
        for c in range(3):
            path[b, c] /= nrm
        dvfull[b] = _vsite(path[b], F[b, r], Sd[r], u, g) - _vsite(n, F[b, r], Sd[r], u, g)
    logr = alpha * (path[0, 2] - beads[0, r, 2] + path[mf, 2] - beads[mf, r, 2])
    if mpe:
        d = _mpe_delta(V, dvfull, 0, mf // 4 - 1, tau, mc[0], mc[1], mc[2])
        if math.isnan(d):
            counters[_NEG] += 1
            for b in range(nb):
                dvfull[b] = 0.0
            return 0
        logr += d
    else:
        act = 0.5 * (dvfull[0] + dvfull[mf])
        for b in range(1, mf):
            act += dvfull[b]
        logr -= tau_f * act
    ok = _metropolis(logr, rng)
    if ok:
        for b in range(nb):
            _apply(beads, F, V, S, r, b, path[b], dvfull[b])
    for b in range(nb):
        dvfull[b] = 0.0
    return 1 if ok else 0


@numba.njit(cache=True)
def _sweep(beads, F, V, S, Sd, levels, tv, tc, tau_f, u, g, alpha, mpe, tau, mc, rng, stats, counters, new, dv, path, dvfull):
    nb, N = beads.shape[0], beads.shape[1]
    mf = nb - 1
    nlev = levels.shape[0]
    R = np.empty((3, 3))
    axis = np.empty(3)
    for r in range(N):
        for li in range(nlev):
            L = levels[li]
            nseg = 1 << L
            for _ in range(mf // nseg):
                a = int(rng.random() * (mf - nseg + 1))
                stats[li, 0] += 1
                stats[li, 1] += _segment_move(
                    beads, F, V, S, Sd, r, a, L, tv, tc, tau_f, u, g, mpe, tau, mc, rng, new, dv, dvfull, counters
                )
        for end in (0, mf):
            stats[nlev, 0] += 1
            stats[nlev, 1] += _end_move(
                beads, F, V, S, Sd, r, end, tv, tc, tau_f, u, g, alpha, mpe, tau, mc, rng, new, dvfull, counters
            )
        # rotation about the field axis
        axis[0] = 0.0
        axis[1] = 0.0
        axis[2] = 1.0
        _rotation_matrix(axis, 2.0 * math.pi * rng.random(), R)
        stats[nlev + 1, 0] += 1
        stats[nlev + 1, 1] += _rigid_move(beads, F, V, S, Sd, r, R, tau_f, u, g, alpha, mpe, tau, mc, rng, path, dvfull, counters)
        # rotation about a random axis
        z = 2.0 * rng.random() - 1.0
        phi = 2.0 * math.pi * rng.random()
        s = math.sqrt(max(0.0, 1.0 - z * z))
        axis[0] = s * math.cos(phi)
        axis[1] = s * math.sin(phi)
        axis[2] = z
        _rotation_matrix(axis, math.pi * (2.0 * rng.random() - 1.0), R)
        stats[nlev + 2, 0] += 1
        stats[nlev + 2, 1] += _rigid_move(beads, F, V, S, Sd, r, R, tau_f, u, g, alpha, mpe, tau, mc, rng, path, dvfull, counters)


@numba.njit(cache=True)
def _measure(beads, V, alpha, sx, sy, sc, out):
    nb, N = beads.shape[0], beads.shape[1]
    mf = nb - 1
    mid = mf // 2
    ekin = 0.0
    for b in (0, mf):
        for i in range(N):
            c = beads[b, i, 2]
            ekin += 2.0 * alpha * c - alpha * alpha * (1.0 - c * c)
    out[0] = 0.5 * (ekin + V[0] + V[mf])
    out[1] = V[mid]
    px = 0.0
    py = 0.0
    pz = 0.0
    xs = 0.0
    ys = 0.0
    cb = 0.0
    for i in range(N):
        n = beads[mid, i]
        px += n[0]
        py += n[1]
        pz += n[2]
        xs += sx[i] * n[0]
        ys += sy[i] * n[1]
        cb += sc[i] * n[2]
    out[2] = px / N
    out[3] = py / N
    out[4] = pz / N
    out[5] = abs(xs) / N
    out[6] = abs(ys) / N
    out[7] = abs(cb) / N


@numba.njit(cache=True)
def _run_block(
    n_sweeps, measure, sweep0, beads, F, V, S, Sd, levels, tv, tc, tau_f, u, g, alpha, mpe, tau, mc,
    rng, stats, counters, sx, sy, sc, series, row0, configs
):
    N = beads.shape[1]
    nb = beads.shape[0]
    maxseg = (1 << levels.max()) + 1
    new = np.empty((maxseg, 3))
    dv = np.zeros(maxseg)
    path = np.empty((nb, 3))
    dvfull = np.zeros(nb)
    obs = np.empty(series.shape[1])
    mid = (nb - 1) // 2
    for t in range(n_sweeps):
        _sweep(beads, F, V, S, Sd, levels, tv, tc, tau_f, u, g, alpha, mpe, tau, mc, rng, stats, counters, new, dv, path, dvfull)
        if (sweep0 + t + 1) % REFRESH_EVERY == 0:
            _refresh(beads, F, V, S, u, g)
        if measure:
            _measure(beads, V, alpha, sx, sy, sc, obs)
            for q in range(obs.shape[0]):
                series[row0 + t, q] = obs[q]
            if configs.shape[0] > 0:
                for i in range(N):
                    for c in range(3):
                        configs[row0 + t, i, c] = beads[mid, i, c]


# ------------------------------------------------------------- chain object


def random_orientations(rng, shape):
    v = rng.standard_normal(tuple(shape) + (3,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def stream_rng(seed, stream=0):
    """Independent generator for chain ``stream`` of a seeded run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def stripe_signs(lattice: LatticeSystem):
    """Sign patterns (x-stripe, y-stripe, checkerboard) for row-major square sites."""
    if lattice.geometry != "square":
        ones = np.ones(lattice.n)
        return ones, ones, ones
    col, row = lattice.coords[:, 0], lattice.coords[:, 1]
    return (
        np.where(row % 2 == 0, 1.0, -1.0),
        np.where(col % 2 == 0, 1.0, -1.0),
        np.where((row + col) % 2 == 0, 1.0, -1.0),
    )


def move_names(levels):
    return [f"bisect{L}" for L in levels] + ["end", "rot_z", "rot_free"]


def manifest_hash(config: RunConfig):
    """Hash of the settings that determine the Markov chain."""
    d = config.to_dict()
    for key in ("checkpoint", "checkpoint_every", "output", "record_configs", "n_measure"):
        d.pop(key, None)
    blob = json.dumps(d, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class PigsResult:
    config: RunConfig
    series: np.ndarray  # (n_measure, len(OBSERVABLES))
    stats: dict
    counters: dict
    metadata: dict
    configs: np.ndarray | None = None
    final_path: np.ndarray | None = field(default=None, repr=False)

    def column(self, name):
        return self.series[:, OBSERVABLES.index(name)]

    @property
    def negative_weight_fraction(self):
        total = sum(p for p, _ in self.stats.values())
        return self.counters["negative_weight"] / max(total, 1)

    @property
    def backend_valid(self):
        return self.negative_weight_fraction <= NEGATIVE_WEIGHT_LIMIT


class Chain:
    """One PIGS Markov chain: path, local fields, RNG and move statistics."""

    def __init__(self, config: RunConfig, lattice: LatticeSystem | None = None):
        self.config = config
        self.lattice = lattice if lattice is not None else build_lattice(
            config.geometry, config.n_particles, config.convention, config.cutoff_radius()
        )
        if self.lattice.n != config.n_particles:
            raise ValueError("lattice size does not match config")
        self.mpe = config.propagator == "mpe6"
        self.tau_f = config.tau / 4.0 if self.mpe else config.tau
        self.levels = np.array(config.bisection_levels, dtype=np.int64)
        # kernel times tau_f 2^j for j = -1 .. max level
        self.tables = [build_table(self.tau_f * 2.0**j, config.kernel_grid) for j in range(-1, int(self.levels.max()) + 1)]
        self.tv = np.ascontiguousarray(np.stack([t.values for t in self.tables]))
        self.tc = np.ascontiguousarray(np.stack([t.cdf for t in self.tables]))
        self.trial = TrialWF.for_field(config.trial, config.u)
        self.S = np.ascontiguousarray(self.lattice.S)
        self.Sd = np.ascontiguousarray(np.einsum("iiab->iab", self.lattice.S))
        self.mc = np.array(MPE6.c)
        self.signs = stripe_signs(self.lattice)
        self.rng = stream_rng(config.seed, config.stream)
        nb = config.fine_links + 1
        start = random_orientations(self.rng, (config.n_particles,))
        self.beads = np.ascontiguousarray(np.broadcast_to(start, (nb, config.n_particles, 3)).copy())
        self.F = np.zeros_like(self.beads)
        self.V = np.zeros(nb)
        self.refresh()
        self.stats = np.zeros((len(self.levels) + 3, 2), dtype=np.int64)
        self.counters = np.zeros(1, dtype=np.int64)
        self.sweep = 0

    @property
    def n_beads(self):
        return self.beads.shape[0]

    def refresh(self):
        _refresh(self.beads, self.F, self.V, self.S, self.config.u, self.config.g)

    def advance(self, n_sweeps, series=None, row0=0, configs=None):
        """Run ``n_sweeps`` sweeps, writing measurements from ``row0`` if ``series`` is given."""
        measure = series is not None
        if series is None:
            series = np.empty((0, _N_OBS))
        if configs is None:
            configs = np.empty((0, self.config.n_particles, 3))
        _run_block(
            int(n_sweeps), measure, self.sweep, self.beads, self.F, self.V, self.S, self.Sd, self.levels,
            self.tv, self.tc, self.tau_f, float(self.config.u), float(self.config.g), float(self.trial.alpha),
            self.mpe, float(self.config.tau), self.mc, self.rng, self.stats, self.counters,
            self.signs[0], self.signs[1], self.signs[2], series, int(row0), configs,
        )
        self.sweep += int(n_sweeps)

    def stats_dict(self):
        return {name: (int(p), int(a)) for name, (p, a) in zip(move_names(self.levels), self.stats)}

    def counters_dict(self):
        return {"negative_weight": int(self.counters[_NEG])}

    # ------------------------------------------------------------ checkpoint

    def save(self, path, series, configs=None):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        payload = dict(
            version=np.array(CHECKPOINT_VERSION),
            code_version=np.array(__version__),
            manifest=np.array(manifest_hash(self.config)),
            beads=self.beads,
            F=self.F,
            V=self.V,
            stats=self.stats,
            counters=self.counters,
            sweep=np.array(self.sweep),
            rng_state=np.array(json.dumps(self.rng.bit_generator.state)),
            series=series,
            configs=configs if configs is not None else np.empty((0, self.config.n_particles, 3)),
        )
        try:
            with open(tmp, "wb") as fh:
                np.savez(fh, **payload)
            os.replace(tmp, path)
        except OSError as exc:
            raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc

    def load(self, path):
        """Restore chain state; returns (series, configs) stored so far."""
        try:
            with np.load(path, allow_pickle=False) as data:
                d = {k: data[k] for k in data.files}
        except (OSError, ValueError, KeyError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if int(d["version"]) != CHECKPOINT_VERSION:
            raise CheckpointError(f"checkpoint version {int(d['version'])} not supported")
        if str(d["manifest"]) != manifest_hash(self.config):
            raise CheckpointError("checkpoint was written by a different run configuration")
        if d["beads"].shape != self.beads.shape:
            raise CheckpointError("checkpoint path shape does not match configuration")
        self.beads[...] = d["beads"]
        self.F[...] = d["F"]
        self.V[...] = d["V"]
        self.stats[...] = d["stats"]
        self.counters[...] = d["counters"]
        self.sweep = int(d["sweep"])
        self.rng.bit_generator.state = json.loads(str(d["rng_state"]))
        return d["series"], d["configs"]


def path_log_weight(beads, trial, lattice, u, g, tau, propagator="primitive", table=None):
    """log W of a stored path under the chosen propagator.

    ``beads`` has shape (Mf + 1, N, 3).  With the sixth-order propagator the
    beads are sub-beads at spacing tau/4.  Kernel values come from ``table``
    (interpolated) when given, else from the direct kernel.
    """
    from .propagator import free_rotor_kernel, interpolate
    from .lattice import potential_energy

    beads = np.asarray(beads, float)
    mf = beads.shape[0] - 1
    tau_f = tau / 4.0 if propagator == "mpe6" else tau
    dots = np.clip(np.einsum("kia,kia->ki", beads[:-1], beads[1:]), -1.0, 1.0)
    kern = interpolate(table, dots) if table is not None else free_rotor_kernel(dots, tau_f)
    logw = float(np.sum(np.log(kern)))
    v = np.array([potential_energy(b, lattice, u, g) for b in beads])
    if propagator == "mpe6":
        if mf % 4:
            raise ValueError("sixth-order path needs a multiple of 4 sub-links")
        for s in range(mf // 4):
            lw = _log_step_weight(*v[4 * s : 4 * s + 5], tau, *MPE6.c)
            if math.isnan(lw):
                return -math.inf
            logw += lw
    else:
        logw -= tau * (0.5 * v[0] + v[1:-1].sum() + 0.5 * v[-1])
    return logw + trial.alpha * (beads[0, :, 2].sum() + beads[-1, :, 2].sum())


def run_pigs(config: RunConfig, lattice: LatticeSystem | None = None, progress=None, block=None) -> PigsResult:
    """Equilibrate then measure, with optional periodic checkpoints.

    If ``config.checkpoint`` names an existing file the run resumes from it;
    the resumed trajectory is bitwise identical to an uninterrupted one.
    """
    t0 = time.time()
    chain = Chain(config, lattice)
    n_total = config.n_equil + config.n_measure
    series = np.full((config.n_measure, _N_OBS), np.nan)
    configs = np.empty((config.n_measure if config.record_configs else 0, config.n_particles, 3))
    ckpt = Path(config.checkpoint) if config.checkpoint else None
    if ckpt is not None and ckpt.exists():
        stored, stored_cfg = chain.load(ckpt)
        done = max(0, chain.sweep - config.n_equil)
        if done > config.n_measure:
            raise CheckpointError("checkpoint is further along than the requested sweep count")
        series[:done] = stored[:done]
        if config.record_configs and stored_cfg.shape[0] >= done:
            configs[:done] = stored_cfg[:done]
    every = config.checkpoint_every if (ckpt is not None and config.checkpoint_every > 0) else 0
    block = block or 256
    while chain.sweep < n_total:
        n = min(block, n_total - chain.sweep)
        if every:
            n = min(n, every - chain.sweep % every)
        if chain.sweep < config.n_equil:
            n = min(n, config.n_equil - chain.sweep)
            chain.advance(n)
        else:
            chain.advance(n, series, chain.sweep - config.n_equil, configs)
        if every and chain.sweep % every == 0:
            chain.save(ckpt, series, configs)
        if progress is not None:
            progress(chain.sweep, n_total)
    if ckpt is not None:
        chain.save(ckpt, series, configs)
    result = PigsResult(
        config=config,
        series=series,
        stats=chain.stats_dict(),
        counters=chain.counters_dict(),
        metadata={
            "alpha": chain.trial.alpha,
            "lattice": chain.lattice.metadata(),
            "tables": [t.metadata() for t in chain.tables],
            "fine_links": config.fine_links,
            "wall_seconds": time.time() - t0,
            "manifest_hash": manifest_hash(config),
        },
        configs=configs if config.record_configs else None,
        final_path=chain.beads.copy(),
    )
    result.metadata["backend_valid"] = result.backend_valid
    return result
