import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipolar_pigs.errors import ConfigError, DomainError
from dipolar_pigs.lattice import (
    build_lattice,
    checkerboard,
    classical_energy,
    classical_minimum,
    dipole_tensor_sum,
    image_vectors,
    interaction_tensor,
    ordering_catalog,
    ordering_energy_report,
    polarized,
    potential_energy,
    striped,
    uniform,
)


def random_unit(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def pair_tensor_oracle(r):
    """Single-term dipolar tensor written out component by component."""
    x, y = r
    d = math.hypot(x, y)
    rv = (x, y, 0.0)
    return np.array([[(1.0 if a == b else 0.0) / d**3 - 3 * rv[a] * rv[b] / d**5 for b in range(3)] for a in range(3)])


def energy_oracle(n, lat, u, g):
    """Double loop over pairs and images, independent of the stored tensors."""
    images = image_vectors(lat.T1, lat.T2, lat.r_max, margin=2 * (np.linalg.norm(lat.T1) + np.linalg.norm(lat.T2)))
    e = -u * n[:, 2].sum()
    N = lat.n
    for i in range(N):
        for j in range(N):
            for v in images:
                r = lat.positions[j] - lat.positions[i] + v
                d = math.hypot(*r)
                if d < 1e-12 or d > lat.r_max * (1 + 1e-12):
                    continue
                r3 = np.array([r[0], r[1], 0.0])
                e += 0.5 * g * (n[i] @ n[j] / d**3 - 3 * (n[i] @ r3) * (n[j] @ r3) / d**5)
    return e


@pytest.fixture(scope="module")
def tri12():
    return build_lattice("triangular", 12, r_max=20.0)


@pytest.fixture(scope="module")
def sq16():
    return build_lattice("square", 16, r_max=20.0)


class TestGeometry:
    def _neighbor_counts(self, lat, dist):
        imgs = image_vectors(lat.T1, lat.T2, 3.0, margin=np.linalg.norm(lat.T1) + np.linalg.norm(lat.T2))
        counts = []
        for i in range(lat.n):
            r = lat.positions[None, :, None, :] - lat.positions[i] + imgs[None, None, :, :]
            d = np.linalg.norm(r, axis=-1).ravel()
            counts.append(int(np.sum(np.abs(d - dist) < 1e-9)))
        return counts

    def test_triangular_12_neighbors(self, tri12):
        assert tri12.n == 12
        assert set(self._neighbor_counts(tri12, 1.0)) == {6}

    def test_square_16_grid(self, sq16):
        assert sq16.side == 4
        assert set(self._neighbor_counts(sq16, 1.0)) == {4}
        # row-major (index = row * L + col)
        assert np.allclose(sq16.positions[5], [1.0, 1.0])
        assert np.allclose(sq16.positions[7], [3.0, 1.0])

    def test_triangular_48_shells(self):
        lat = build_lattice("triangular", 48, r_max=10.0)
        assert set(self._neighbor_counts(lat, 1.0)) == {6}
        assert set(self._neighbor_counts(lat, math.sqrt(3.0))) == {6}

    def test_minimum_distance(self, tri12):
        d = np.linalg.norm(tri12.positions[:, None] - tri12.positions[None], axis=-1)
        assert d[~np.eye(12, dtype=bool)].min() >= 1.0 - 1e-12

    def test_inadmissible(self):
        with pytest.raises(ConfigError):
            build_lattice("square", 12)
        with pytest.raises(ConfigError):
            build_lattice("triangular", 10)

    def test_metadata(self, tri12):
        md = tri12.metadata()
        assert md["n"] == 12 and md["geometry"] == "triangular"
        assert len(md["T1"]) == 2


class TestImages:
    def test_tiny_radius(self):
        v = image_vectors([4.0, 0.0], [0.0, 4.0], 1e-9)
        assert v.shape == (1, 2) and np.all(v == 0)

    def test_count_matches_enumeration(self):
        L = 4
        T1, T2 = np.array([L, 0.0]), np.array([0.0, L])
        r = 2.5 * L
        v = image_vectors(T1, T2, r)
        brute = sum(1 for i in range(-10, 11) for j in range(-10, 11) if (i * L) ** 2 + (j * L) ** 2 <= r * r)
        assert len(v) == brute

    def test_includes_zero(self):
        v = image_vectors([2.0, 0.0], [1.0, math.sqrt(3)], 7.0)
        assert np.any(np.all(v == 0, axis=1))

    def test_nonpositive_radius(self):
        with pytest.raises(DomainError):
            image_vectors([1, 0], [0, 1], 0.0)

    def test_residual_cutoff_radius(self):
        assert (1.0 / 1e-8) ** (1 / 3) == pytest.approx(464.16, abs=0.01)


class TestTensor:
    def test_pair_along_x(self):
        assert np.allclose(interaction_tensor([1.0, 0.0], np.zeros((1, 2))), np.diag([-2.0, 1.0, 1.0]))

    def test_pair_along_y(self):
        assert np.allclose(interaction_tensor([0.0, 1.0], np.zeros((1, 2))), np.diag([1.0, -2.0, 1.0]))

    def test_coincident(self):
        with pytest.raises(DomainError):
            interaction_tensor([0.0, 0.0], np.zeros((1, 2)))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.5, 5.0), st.floats(0.0, 2 * math.pi))
    def test_single_term_oracle(self, d, phi):
        r = (d * math.cos(phi), d * math.sin(phi))
        assert np.allclose(dipole_tensor_sum(r), pair_tensor_oracle(r), atol=1e-13)

    @pytest.mark.parametrize("geometry,n", [("triangular", 12), ("square", 16), ("triangular", 48)])
    def test_symmetric_traceless(self, geometry, n):
        lat = build_lattice(geometry, n, r_max=30.0)
        S = lat.S
        assert np.allclose(S, np.swapaxes(S, 2, 3), atol=1e-14)
        assert np.allclose(S, np.swapaxes(S, 0, 1), atol=1e-14)
        assert np.abs(np.trace(S, axis1=2, axis2=3)).max() < 1e-12

    def test_translation_invariance(self, tri12):
        """S_ij depends only on the displacement modulo the supercell."""
        imgs = image_vectors(tri12.T1, tri12.T2, tri12.r_max, margin=10.0)
        i, j = 0, 5
        d = tri12.positions[j] - tri12.positions[i]
        for shift in (tri12.T1, tri12.T2, tri12.T1 - tri12.T2):
            assert np.allclose(interaction_tensor(d + shift, imgs, tri12.r_max), interaction_tensor(d, imgs, tri12.r_max), atol=1e-10)

    def test_shell_sum_oracle(self):
        """Nearest-neighbour tensor against a direct shell-by-shell sum."""
        lat = build_lattice("triangular", 48, r_max=60.0)
        i = 0
        d = np.linalg.norm(lat.positions - lat.positions[i], axis=1)
        j = int(np.argmin(np.where(d < 1e-9, np.inf, d)))
        r0 = lat.positions[j] - lat.positions[i]
        # enumerate images by integer shells, no shared code with image_vectors
        total = np.zeros((3, 3))
        for a in range(-20, 21):
            for b in range(-20, 21):
                r = r0 + a * lat.T1 + b * lat.T2
                if 0 < math.hypot(*r) <= 60.0:
                    total += pair_tensor_oracle(r)
        assert np.allclose(lat.S[i, j], total, atol=1e-8)

    def test_square_rotation_covariance(self, sq16):
        L = 4
        R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        col, row = sq16.coords[:, 0], sq16.coords[:, 1]
        # (x, y) -> (-y, x) sends (col, row) to (-row mod L, col)
        perm = ((col) * L + (-row) % L).astype(int)
        for i in range(16):
            for j in range(16):
                assert np.allclose(sq16.S[perm[i], perm[j]], R @ sq16.S[i, j] @ R.T, atol=1e-10)

    def test_triangular_rotation_covariance(self, tri12):
        c, s = 0.5, math.sqrt(3) / 2
        R2 = np.array([[c, -s], [s, c]])
        R = np.eye(3)
        R[:2, :2] = R2
        rotated = tri12.positions @ R2.T
        inv = np.linalg.inv(np.stack([tri12.T1, tri12.T2], axis=1))
        perm = []
        for p in rotated:
            frac = inv @ (p[None, :] - tri12.positions).T
            k = int(np.argmin(np.abs(frac - np.round(frac)).sum(axis=0)))
            perm.append(k)
        assert sorted(perm) == list(range(12))
        for i in range(12):
            for j in range(12):
                assert np.allclose(tri12.S[perm[i], perm[j]], R @ tri12.S[i, j] @ R.T, atol=1e-10)


class TestEnergy:
    def test_pair_along_z(self):
        S = np.diag([-2.0, 1.0, 1.0])
        n = np.array([0.0, 0.0, 1.0])
        assert 0.5 * (n @ S @ n) == pytest.approx(0.5)

    def test_head_to_tail(self):
        S = np.diag([-2.0, 1.0, 1.0])
        n = np.array([1.0, 0.0, 0.0])
        assert (n @ S @ n) / 2 == pytest.approx(-1.0)

    @pytest.mark.parametrize("geometry,n", [("triangular", 12), ("square", 16), ("square", 4)])
    def test_double_loop_oracle(self, geometry, n):
        lat = build_lattice(geometry, n, r_max=8.0)
        rng = np.random.default_rng(3)
        X = random_unit(rng, n)
        assert potential_energy(X, lat, 0.7, 1.3) == pytest.approx(energy_oracle(X, lat, 0.7, 1.3), abs=1e-10)

    def test_non_unit(self, sq16):
        with pytest.raises(DomainError):
            classical_energy(np.ones((16, 3)), sq16, 0.0)

    def test_field_only(self, sq16):
        assert classical_energy(uniform(sq16, [0, 0, 1]), sq16, 2.0, 0.0) == pytest.approx(-2.0)

    def test_catalog_units_and_zero_polarization(self, sq16, tri12):
        for lat in (sq16, tri12):
            for name, pat in ordering_catalog(lat).items():
                assert np.allclose(np.linalg.norm(pat, axis=1), 1.0)
                if name != "polarized":
                    assert np.allclose(pat.mean(axis=0)[:2], 0.0, atol=1e-12)

    def test_checkerboard_pattern(self, sq16):
        cb = checkerboard(sq16)
        col, row = sq16.coords[:, 0], sq16.coords[:, 1]
        assert np.allclose(cb[:, 2], np.where((row + col) % 2 == 0, 1.0, -1.0))

    def test_periodic_sum_flat_in_n(self):
        rows = ordering_energy_report("triangular", [12, 48, 108], "periodic-sum", 100.0)
        pol = [r["energy_per_particle"] for r in rows if r["ordering"] == "polarized"]
        assert max(pol) - min(pol) < 1e-3 * abs(pol[0])

    def test_figure_orderings(self):
        tri = ordering_energy_report("triangular", [12, 48], "periodic-sum")
        for n in (12, 48):
            e = {r["ordering"]: r["energy_per_particle"] for r in tri if r["N"] == n}
            assert e["polarized"] < e["striped"]
        sq = ordering_energy_report("square", [16, 36], "periodic-sum")
        for n in (16, 36):
            e = {r["ordering"]: r["energy_per_particle"] for r in sq if r["N"] == n}
            assert e["striped"] == min(e.values())
        mi = ordering_energy_report("triangular", [12], "minimum-image")
        e = {r["ordering"]: r["energy_per_particle"] for r in mi}
        assert e["striped"] < e["polarized"]

    def test_report_empty(self):
        with pytest.raises(ConfigError):
            ordering_energy_report("square", [])

    def test_polarized_angle_independent_on_triangular(self, tri12):
        e0 = classical_energy(polarized(tri12, 0.0), tri12, 0.0)
        e1 = classical_energy(polarized(tri12, 0.7), tri12, 0.0)
        assert e0 == pytest.approx(e1, abs=1e-10)


class TestClassicalMinimum:
    def test_field_only(self, tri12):
        v, name, tilt = classical_minimum(tri12, 2.5, 0.0)
        assert v == pytest.approx(-2.5, abs=1e-9)
        assert tilt == pytest.approx(math.pi / 2, abs=1e-6)

    def test_zero(self, tri12):
        assert classical_minimum(tri12, 0.0, 0.0)[0] == 0.0

    def test_no_field_triangular(self, tri12):
        v, name, _ = classical_minimum(tri12, 0.0, 2.0)
        assert name == "polarized"
        assert v == pytest.approx(2.0 * classical_energy(polarized(tri12), tri12, 0.0), rel=1e-9)

    def test_no_field_square(self, sq16):
        assert classical_minimum(sq16, 0.0, 1.0)[1] == "striped"

    def test_below_catalog(self, tri12):
        """Canting can only lower the energy below every untilted pattern."""
        v, _, _ = classical_minimum(tri12, 3.0, 1.0)
        for pat in ordering_catalog(tri12).values():
            assert v <= classical_energy(pat, tri12, 3.0, 1.0) + 1e-12

    def test_domain(self, tri12):
        with pytest.raises(DomainError):
            classical_minimum(tri12, -1.0, 1.0)
