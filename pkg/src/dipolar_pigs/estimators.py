"""Order parameters, energies and error bars from PIGS sample series.

All order parameters are built from per-sweep middle-bead averages:

    px, py, pz      (1/N) sum_i n_i^{x,y,z}
    x_stripe        (1/N) |sum (-1)^row n^x|      (square lattices)
    y_stripe        (1/N) |sum (-1)^col n^y|
    checkerboard    (1/N) |sum (-1)^(row+col) n^z|

with sites indexed row-major (index = row * L + col).  phi_pol and phi_xy
are norms of averaged vectors, so their errors come from a block
jackknife; the others are plain means with blocking errors.  In a finite
run the direction of the in-plane polarization can drift, which lowers
phi_pol; phi_pol_abs, the mean per-sweep magnitude, is reported with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

MIN_SAMPLES = 64
MIN_BLOCKS = 32
PLATEAU_TOL = 0.05


@dataclass(frozen=True)
class BlockingResult:
    mean: float
    error: float
    level: int  # plateau level; block size is 2**level
    converged: bool
    curve: tuple  # error estimate at each level


def blocking_curve(series):
    """Standard-error estimate after each pairwise blocking step."""
    x = np.asarray(series, float)
    errs = []
    while len(x) >= MIN_BLOCKS:
        n = len(x)
        errs.append(math.sqrt(x.var(ddof=1) / n) if n > 1 else 0.0)
        m = n // 2
        x = 0.5 * (x[: 2 * m : 2] + x[1 : 2 * m : 2])
    return errs


def blocking_analysis(series) -> BlockingResult:
    x = np.asarray(series, float)
    if x.ndim != 1 or len(x) < MIN_SAMPLES:
        raise DomainError(f"blocking needs at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("series contains non-finite values")
    mean = float(x.mean())
    if np.all(x == x[0]):
        return BlockingResult(mean, 0.0, 0, True, (0.0,))
    errs = blocking_curve(x)
    for level in range(len(errs) - 2):
        e0, e1, e2 = errs[level : level + 3]
        if e0 > 0 and abs(e1 - e0) < PLATEAU_TOL * e0 and abs(e2 - e1) < PLATEAU_TOL * e1:
            return BlockingResult(mean, float(e1), level + 1, True, tuple(errs))
    # no plateau: report the most conservative estimate
    level = int(np.argmax(errs))
    return BlockingResult(mean, float(errs[level]), level, False, tuple(errs))


def blocking_error(series):
    """(mean, error) with the error read off the blocking plateau."""
    res = blocking_analysis(series)
    return res.mean, res.error


def _block_size(*series):
    lvl = 0
    for s in series:
        lvl = max(lvl, blocking_analysis(s).level)
    n = len(series[0])
    size = 2**lvl
    return max(1, min(size, n // MIN_BLOCKS))


def jackknife(func, *series, block=None):
    """Block-jackknife estimate of func(mean(s1), mean(s2), ...).

    Returns (value, error).  The block length defaults to the largest
    blocking-plateau block size of the inputs.
    """
    arrs = [np.asarray(s, float) for s in series]
    n = len(arrs[0])
    if n < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples")
    value = float(func(*[a.mean() for a in arrs]))
    if all(np.all(a == a[0]) for a in arrs):
        return value, 0.0
    b = block or _block_size(*arrs)
    nb = n // b
    sums = [a[: nb * b].reshape(nb, b).sum(axis=1) for a in arrs]
    tot = [s.sum() for s in sums]
    loo = np.array([func(*[(t - s[k]) / (b * (nb - 1)) for t, s in zip(tot, sums)]) for k in range(nb)])
    err = math.sqrt((nb - 1) * np.mean((loo - loo.mean()) ** 2))
    return value, float(err)


def _norm2(a, b):
    return math.sqrt(a * a + b * b)


def phi_pol(px, py):
    """In-plane polarization sqrt(<px>^2 + <py>^2) with jackknife error."""
    px = np.asarray(px, float)
    if px.size == 0:
        raise DomainError("no samples")
    if px.size < MIN_SAMPLES:
        return _norm2(px.mean(), np.mean(py)), math.nan
    return jackknife(_norm2, px, py)


def phi_pol_abs(px, py):
    """Mean per-sweep in-plane magnitude <sqrt(px^2 + py^2)>.

    Unlike phi_pol it does not decay when the polarization direction
    wanders during a run; reported alongside phi_pol as a diagnostic.
    """
    return blocking_error(np.hypot(np.asarray(px, float), np.asarray(py, float)))


def phi_z(pz):
    return blocking_error(pz)


def x_stripe(X, row):
    """(1/N)|sum_i (-1)^row_i n_i^x| for one configuration."""
    X = np.asarray(X, float)
    return abs(np.sum(np.where(np.asarray(row) % 2 == 0, 1.0, -1.0) * X[:, 0])) / len(X)


def y_stripe(X, col):
    X = np.asarray(X, float)
    return abs(np.sum(np.where(np.asarray(col) % 2 == 0, 1.0, -1.0) * X[:, 1])) / len(X)


def checkerboard_value(X, row, col):
    X = np.asarray(X, float)
    sign = np.where((np.asarray(row) + np.asarray(col)) % 2 == 0, 1.0, -1.0)
    return abs(np.sum(sign * X[:, 2])) / len(X)


def square_indices(n):
    """Row and column of each site of an L x L lattice in row-major order."""
    L = math.isqrt(n)
    if L * L != n:
        raise DomainError(f"stripe estimators need a square lattice, got N={n}")
    idx = np.arange(n)
    return idx // L, idx % L


def phi_xy(xs, ys):
    """Stripe order sqrt(<x_stripe>^2 + <y_stripe>^2) with jackknife error."""
    xs = np.asarray(xs, float)
    if xs.size == 0:
        raise DomainError("no samples")
    if xs.size < MIN_SAMPLES:
        return _norm2(xs.mean(), np.mean(ys)), math.nan
    return jackknife(_norm2, xs, ys)


def phi_checkerboard(cb):
    return blocking_error(cb)


def energy_estimators(v_mid, e_end, n_particles=1):
    """((<V>, err), (<E>, err)) per particle from middle-bead V and end-point E."""
    if len(v_mid) == 0 or len(e_end) == 0:
        raise DomainError("no samples")
    v, ve = blocking_error(np.asarray(v_mid) / n_particles)
    e, ee = blocking_error(np.asarray(e_end) / n_particles)
    return (v, ve), (e, ee)


REPORT_FIELDS = ("phi_pol", "phi_pol_abs", "phi_z", "phi_xy", "phi_checkerboard", "V_mid", "E_total")


def summarize(series, geometry, n_particles):
    """Estimator report for one run from its (n_sweeps, 8) series array.

    Columns follow ``sampler.OBSERVABLES``.  Energies are per particle.
    Stripe and checkerboard values are NaN for triangular lattices.
    """
    s = np.asarray(series, float)
    E, V, px, py, pz, xs, ys, cb = s.T
    out = {}
    out["phi_pol"], out["phi_pol_err"] = phi_pol(px, py)
    out["phi_pol_abs"], out["phi_pol_abs_err"] = phi_pol_abs(px, py)
    out["phi_z"], out["phi_z_err"] = phi_z(pz)
    if geometry == "square":
        out["phi_xy"], out["phi_xy_err"] = phi_xy(xs, ys)
        out["phi_checkerboard"], out["phi_checkerboard_err"] = phi_checkerboard(cb)
    else:
        out["phi_xy"] = out["phi_xy_err"] = math.nan
        out["phi_checkerboard"] = out["phi_checkerboard_err"] = math.nan
    (out["V_mid"], out["V_mid_err"]), (out["E_total"], out["E_total_err"]) = energy_estimators(V, E, n_particles)
    return out


def merge_means(estimates):
    """Combine (mean, error, count) triples from independent chains.

    Weighted by sample count, errors added in quadrature; the result does not
    depend on the order of the inputs.
    """
    estimates = list(estimates)
    if not estimates:
        raise DomainError("nothing to merge")
    total = sum(c for _, _, c in estimates)
    mean = sum(m * c for m, _, c in estimates) / total
    err = math.sqrt(sum((e * c / total) ** 2 for _, e, c in estimates))
    return mean, err, total


def autocorrelation_time(series, window_factor=5.0):
    """Integrated autocorrelation time with Sokal's automatic window."""
    x = np.asarray(series, float)
    x = x - x.mean()
    n = len(x)
    if n < MIN_SAMPLES or not np.any(x):
        return 0.5
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 0.5
    for w in range(1, n):
        tau += acf[w]
        if w >= window_factor * tau:
            break
    return float(tau)
