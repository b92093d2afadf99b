import math

import numpy as np
import pytest

from dipolar_pigs.config import RunConfig, load_config, save_config, triangular_supercell
from dipolar_pigs.errors import ConfigError, DomainError
from dipolar_pigs.units import (
    TABLE1,
    MoleculeParams,
    ReducedParams,
    field_for_u,
    molecule_table,
    reduced_from_physical,
    reduced_g,
    reduced_u,
    spacing_for_g,
)


class TestReducedParams:
    def test_link_count(self):
        assert ReducedParams(g=1.0, u=0.5, tau=0.0375, beta=5.1).n_links == 136
        assert ReducedParams(g=0.0, u=0.0, tau=0.0375, beta=4.2).n_links == 112

    @pytest.mark.parametrize(
        "kw",
        [
            dict(g=-1.0, u=0.0, tau=0.1, beta=1.0),
            dict(g=0.0, u=-0.1, tau=0.1, beta=1.0),
            dict(g=0.0, u=0.0, tau=0.0, beta=1.0),
            dict(g=0.0, u=0.0, tau=0.3, beta=1.0),
            dict(g=0.0, u=0.0, tau=0.1, beta=0.1),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            ReducedParams(**kw)


class TestConversions:
    def test_krb_field(self):
        u, _ = reduced_from_physical(MoleculeParams("KRb", 0.57, 1.10, 3.80, 3.56))
        assert u == pytest.approx(1.0, rel=0.01)

    @pytest.mark.xfail(strict=True, reason="tabulated 3.56 nm is rounded up 0.4%, which cubes to a 1.2% drop in g")
    def test_krb_coupling(self):
        _, g = reduced_from_physical(MoleculeParams("KRb", 0.57, 1.10, 3.80, 3.56))
        assert g == pytest.approx(1.0, rel=0.01)

    def test_krb_coupling_within_table_rounding(self):
        _, g = reduced_from_physical(MoleculeParams("KRb", 0.57, 1.10, 3.80, 3.56))
        assert g == pytest.approx(1.0, rel=0.02)

    def test_csi(self):
        u, g = reduced_from_physical(MoleculeParams("CsI", 11.69, 0.71, 0.12, 30.70))
        assert u == pytest.approx(1.0, rel=0.02)
        assert g == pytest.approx(1.0, rel=0.02)

    def test_zero_field(self):
        assert reduced_u(0.57, 1.10, 0.0) == 0.0
        assert field_for_u(0.57, 1.10, 0.0) == 0.0

    def test_krb_field_value(self):
        assert field_for_u(0.57, 1.10, 1.0) == pytest.approx(3.83, abs=0.005)

    def test_srf_spacing(self):
        assert spacing_for_g(3.47, 7.52, 1.0) == pytest.approx(6.22, rel=0.01)

    @pytest.mark.parametrize("row", TABLE1)
    def test_round_trip(self, row):
        _, d, B, _, _ = row
        for target in (0.3, 1.0, 2.7):
            E = field_for_u(d, B, target)
            r = spacing_for_g(d, B, target)
            assert reduced_u(d, B, E) == pytest.approx(target, rel=1e-12)
            assert reduced_g(d, B, r) == pytest.approx(target, rel=1e-12)

    @pytest.mark.parametrize("bad", [dict(d=0.0), dict(B=-1.0), dict(r_lat=0.0), dict(E=0.0)])
    def test_molecule_domain(self, bad):
        kw = dict(name="X", d=1.0, B=1.0, E=1.0, r_lat=1.0)
        kw.update(bad)
        with pytest.raises(DomainError):
            MoleculeParams(**kw)

    def test_reduced_g_domain(self):
        with pytest.raises(DomainError):
            reduced_g(1.0, 1.0, -2.0)

    def test_table_columns(self):
        rows = molecule_table()
        assert [r["molecule"] for r in rows] == [t[0] for t in TABLE1]
        for r in rows:
            assert r["E_rel_dev"] == pytest.approx((r["E_kV_cm"] - r["E_published"]) / r["E_published"])


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.n_links == 136
        assert cfg.fine_links == 136
        assert cfg.replace(propagator="mpe6").fine_links == 544

    @pytest.mark.parametrize("n,ok", [(12, True), (48, True), (108, True), (3, True), (7, True), (10, False), (2, False)])
    def test_triangular_sizes(self, n, ok):
        assert (triangular_supercell(n) is not None) == ok

    def test_supercell_shape(self):
        p, q = triangular_supercell(12)
        assert p * p + p * q + q * q == 12
        assert (p, q) == (2, 2)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(geometry="square", n_particles=12),
            dict(geometry="hexagonal"),
            dict(n_particles=10),
            dict(propagator="chin"),
            dict(trial="jastrow"),
            dict(beta=5.0625),
            dict(tau=0.0375, beta=0.0375 * 3),
            dict(bisection_levels=[0]),
            dict(n_measure=0),
            dict(seed=-1),
            dict(g=-0.5),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw)

    def test_residual_cutoff(self):
        assert RunConfig(g=1.0).cutoff_radius() == pytest.approx(1e8 ** (1 / 3), rel=1e-12)
        assert RunConfig(cutoff="fixed", r_max=100.0).cutoff_radius() == 100.0

    def test_yaml_round_trip(self, tmp_path):
        cfg = RunConfig(geometry="square", n_particles=16, g=1.25, beta=4.2, seed=99)
        path = tmp_path / "run.yaml"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("geometry: square\nn_particles: 16\ncolour: red\n")
        with pytest.raises(ConfigError, match="unknown"):
            load_config(path)

    def test_nested_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("geometry: square\nlattice:\n  n: 16\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_params_are_reduced(self):
        p = RunConfig(g=2.0, u=3.0).params
        assert (p.g, p.u, p.tau, p.beta) == (2.0, 3.0, 0.0375, 5.1)
        assert math.isclose(p.beta / p.tau, 136)
