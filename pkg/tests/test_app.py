import math

import numpy as np
import pytest

from binaryflow import config, cutcell, diagnostics, mesh, scenarios, snapshots
from binaryflow.assembly import Discretization
from binaryflow.cli import main
from binaryflow.config import ConfigError, build_scenario, parse_config, serialize
from binaryflow.physics import ModelParams, StabParams
from binaryflow.snapshots import FieldSnapshot, read_snapshot, sample, write_snapshot


class TestConfig:
    def test_minimal_document_gets_preset_defaults(self):
        cfg = parse_config('[run]\nscenario = "taylor-couette"\n')
        assert cfg.order == 3
        assert cfg.h == 0.625e-6
        assert abs(cfg.theta - math.pi / 8) < 1e-15
        assert cfg.dt == 0.025
        assert cfg.t_end == 8.0
        assert cfg.model.rho2 == 1000.0
        assert cfg.model.eta2 == 1.0e-3
        assert cfg.model.mobility == 3.0487e-11
        assert cfg.geometry == {"height": 10e-6, "length": 50e-6}

    def test_global_model_defaults(self):
        cfg = parse_config('[run]\nscenario = "porous"\n')
        m = cfg.model
        assert (m.rho1, m.rho2) == (1000.0, 1.3)
        assert (m.eta1, m.eta2) == (1.0e-3, 1.813e-5)
        assert m.sigma12 == 72.8e-3
        assert m.mobility == 3.0487e-10
        assert cfg.dt is None or cfg.dt > 0

    def test_user_values_override_preset(self):
        cfg = parse_config(
            '[run]\nscenario = "taylor-couette"\norder = 2\nh = 2.5e-6\n'
            '[model]\nmobility = 1e-10\n'
            '[stabilization]\nbeta = 50.0\n')
        assert cfg.order == 2
        assert cfg.h == 2.5e-6
        assert cfg.model.mobility == 1e-10
        assert cfg.model.rho2 == 1000.0  # untouched preset value survives
        assert cfg.stab.beta == 50.0

    @pytest.mark.parametrize("text", [
        "[run]\n",                                        # missing scenario
        '[run]\nscenario = "vortex"\n',                   # unknown scenario
        '[run]\nscenario = "porous"\nfoo = 1\n',          # unknown run key
        '[run]\nscenario = "porous"\n[grid]\nn = 4\n',    # unknown section
        '[run]\nscenario = "porous"\n[model]\nrho3 = 1\n',
        '[run]\nscenario = "porous"\ndt = -1.0\n',
        '[run]\nscenario = "porous"\nh = 0.0\n',
        '[run]\nscenario = "porous"\n[model]\neta1 = -2.0\n',
        '[run]\nscenario = "porous"\n[geometry]\nu_wall = 1.0\n',
        '[run]\nscenario = "slip-channel"\n[geometry]\nexpression = "x"\n',
        '[run]\nscenario = "porous"\n[output]\ninterval = 0\n',
        'run = "not a table',                             # malformed TOML
    ])
    def test_invalid_documents_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_preferential_wetting_rejected(self):
        with pytest.raises(ConfigError, match="neutral wetting"):
            parse_config('[run]\nscenario = "porous"\n'
                         '[model]\nsigma_s1 = 0.02\nsigma_s2 = 0.01\n')

    def test_serialization_round_trip(self):
        text = ('[run]\nscenario = "taylor-couette"\nh = 1.25e-6\n'
                '[model]\nbody_force = [1.0, 2.0]\n'
                '[output]\nsample_nx = 64\n')
        cfg = parse_config(text)
        canon = serialize(cfg)
        cfg2 = parse_config(canon)
        assert cfg2 == cfg
        assert serialize(cfg2) == canon  # canonical form is a fixed point


class TestScenarioHelpers:
    def test_wall_ramp(self):
        assert scenarios.wall_ramp(0.0) == 0.0
        assert abs(scenarios.wall_ramp(0.5) - 5.0) < 1e-12
        assert scenarios.wall_ramp(1.0) == 10.0
        assert scenarios.wall_ramp(7.3) == 10.0
        t = np.array([0.0, 0.5, 2.0])
        assert np.allclose(scenarios.wall_ramp(t), [0.0, 5.0, 10.0])

    def test_slip_velocity(self):
        # 2*eta/(alpha*H) = 2e-3/(100*1e-5) = 2 => u_s = u_wall/3
        assert abs(scenarios.slip_velocity(5.0, 10e-6, 1e-3, 100.0) - 5.0 / 3.0) < 1e-12

    def test_slip_channel_builder(self):
        # tilted so the channel walls do not line up with mesh lines
        sc = scenarios.slip_channel(order=2, h=2.5e-6, theta=np.pi / 8)
        assert sc.dt is None
        assert len(sc.bc.dirichlet) == 6
        assert sc.bc.pin_pressure
        assert abs(sc.diagnostics["u_slip_exact"] - 5.0 / 3.0) < 1e-12
        # the initial state already carries the analytic linear profile
        r, _ = sc.disc.assemble(sc.U0, bc=sc.bc, want_jacobian=False)
        free = sc.disc.free_mask(sc.disc.constraints(sc.bc)[0])
        assert np.linalg.norm(r[free]) < 1e-6

    def test_taylor_couette_builder(self):
        sc = scenarios.taylor_couette(order=2, h=2.5e-6, theta=0.0,
                                      length=20e-6, height=10e-6)
        assert sc.dt == 0.025 and sc.t_end == 8.0
        assert sc.disc.params.matched_densities
        n = sc.disc.n_scalar
        # interface sits at mid-length: phase +1 left, -1 right
        phi = sc.U0[sc.disc.off["phi"]:sc.disc.off["phi"] + n]
        left = sc.disc.evaluate_scalar(phi, np.array([[-8e-6, 0.0]]))
        right = sc.disc.evaluate_scalar(phi, np.array([[8e-6, 0.0]]))
        assert left[0] > 0.99 and right[0] < -0.99

    def test_bundled_configs_parse(self):
        import pathlib
        root = pathlib.Path(__file__).resolve().parent.parent / "configs"
        for path in sorted(root.glob("*.toml")):
            cfg = config.load_config(path)
            assert cfg.scenario == path.stem

    def test_config_build_scenario(self):
        cfg = parse_config(
            '[run]\nscenario = "slip-channel"\nh = 2.5e-6\ntheta = 0.0\n'
            'steady_rtol = 1e-5\n')
        sc = build_scenario(cfg)
        assert sc.name == "slip-channel"
        assert sc.steady_rtol == 1e-5


def small_snapshot_disc():
    amb = mesh.build_ambient((0.0, 0.0), (1.2, 1.0), (6, 5))
    ls = cutcell.circle((0.3, 0.5), 0.22, fluid="outside")
    im = mesh.classify_elements(amb, ls)
    params = ModelParams(rho1=2.0, rho2=1.0, eta1=0.2, eta2=0.1, sigma12=0.1,
                         eps=0.25, mobility=0.5)
    return Discretization(im, 2, params, StabParams())


class TestSnapshots:
    def test_sampling_masks_the_solid(self):
        disc = small_snapshot_disc()
        U = np.zeros(disc.n_dofs)
        n = disc.n_scalar
        U[disc.off["phi"]:disc.off["phi"] + n] = 1.0
        U[disc.off["ux"]:disc.off["ux"] + n] = disc.project_scalar(
            lambda p: 0.5 * p[:, 0] - p[:, 1])
        snap = sample(disc, U, nx=40, ny=30, time=1.5)
        assert snap.time == 1.5
        X, Y = np.meshgrid(snap.x, snap.y)
        hole = np.hypot(X - 0.3, Y - 0.5) < 0.2
        assert not snap.mask[hole].any()
        assert snap.mask.sum() > 0.5 * snap.mask.size
        assert np.isnan(snap.values["phi"][~snap.mask]).all()
        m = snap.mask
        assert np.allclose(snap.values["phi"][m], 1.0, atol=1e-9)
        assert np.allclose(snap.values["ux"][m], (0.5 * X - Y)[m], atol=1e-8)

    def test_write_read_round_trip(self, tmp_path):
        disc = small_snapshot_disc()
        rng = np.random.default_rng(2)
        U = rng.standard_normal(disc.n_dofs)
        snap = sample(disc, U, nx=17, ny=11, time=0.75)
        vtk_path, csv_path = write_snapshot(snap, tmp_path / "snap")
        back = read_snapshot(vtk_path)
        assert back.time == snap.time
        assert np.array_equal(back.mask, snap.mask)
        assert np.allclose(back.x, snap.x, atol=0.0, rtol=1e-15)
        assert np.allclose(back.y, snap.y, atol=0.0, rtol=1e-15)
        for name in snapshots.FIELD_NAMES:
            a, b = snap.values[name], back.values[name]
            assert np.array_equal(np.isnan(a), np.isnan(b))
            assert np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)])
        # the CSV carries the same grid, row count = header + nx*ny
        with open(csv_path) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "x,y,mask,phi,ux,uy,p,mu"
        assert len(lines) == 1 + 17 * 11

    def test_reject_foreign_file(self, tmp_path):
        p = tmp_path / "notasnap.vtk"
        p.write_text("hello\n")
        with pytest.raises(ValueError):
            read_snapshot(p)


def plane_snapshot(slope, ny=41, nx=61, masked_rows=()):
    """Synthetic snapshot with a straight interface x = 0.5 + slope*y."""
    x = np.linspace(0.0, 1.0, nx)
    y = np.linspace(0.0, 1.0, ny)
    X, Y = np.meshgrid(x, y)
    phi = X - (0.3123 + slope * Y)  # intercept off the sample points
    mask = np.ones_like(phi, dtype=bool)
    for j in masked_rows:
        mask[j, nx // 3] = False   # break the run in the middle
    phi = np.where(mask, phi, np.nan)
    vals = {n: np.where(mask, 0.0, np.nan) for n in ("ux", "uy", "p", "mu")}
    vals["phi"] = phi
    return FieldSnapshot(x=x, y=y, time=0.0, mask=mask, values=vals)


class TestDiagnostics:
    def test_vertical_interface_has_zero_rotation(self):
        snap = plane_snapshot(0.0)
        pos, skipped = diagnostics.interface_positions(snap)
        assert skipped == 0
        assert np.allclose(pos, 0.3123, atol=1e-12)
        assert diagnostics.interface_rotation(snap) < 1e-12

    def test_tilted_plane_rotation(self):
        snap = plane_snapshot(math.tan(0.2))
        rot = diagnostics.interface_rotation(snap)
        assert abs(rot - 0.2) < 1e-3

    def test_broken_lines_skipped(self):
        snap = plane_snapshot(0.0, masked_rows=(5, 6))
        pos, skipped = diagnostics.interface_positions(snap)
        assert skipped == 2
        assert np.isnan(pos[5]) and np.isnan(pos[6])
        assert np.isfinite(pos[0])

    def test_no_interface_raises(self):
        snap = plane_snapshot(0.0)
        snap.values["phi"] = np.abs(snap.values["phi"]) + 0.1  # no sign change
        with pytest.raises(ValueError):
            diagnostics.interface_rotation(snap)


COARSE_CHANNEL = ('[run]\nscenario = "slip-channel"\nh = 2.5e-6\n'
                  '[output]\nsample_nx = 40\nsample_ny = 20\n')


class TestCli:
    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('[run]\nscenario = "nope"\n')
        assert main(["mesh-info", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_file_exits_nonzero(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.toml")]) == 1

    def test_mesh_info(self, tmp_path, capsys):
        cfgfile = tmp_path / "c.toml"
        cfgfile.write_text(COARSE_CHANNEL)
        assert main(["mesh-info", str(cfgfile)]) == 0
        out = capsys.readouterr().out
        assert "degrees of freedom" in out

    def test_check_quadrature(self, capsys):
        assert main(["check-quadrature", "--depth", "3"]) == 0
        out = capsys.readouterr().out
        assert "depth" in out

    def test_run_steady_channel(self, tmp_path, capsys):
        cfgfile = tmp_path / "c.toml"
        cfgfile.write_text(COARSE_CHANNEL)
        out_dir = tmp_path / "out"
        assert main(["run", str(cfgfile), "--out", str(out_dir)]) == 0
        for name in ("config.toml", "snapshot_000000.vtk", "snapshot_final.vtk",
                     "snapshot_final.csv", "state_final.npy"):
            assert (out_dir / name).exists()
        snap = read_snapshot(out_dir / "snapshot_final.vtk")
        assert snap.mask.any()
        # written config parses back to the resolved one
        cfg = config.load_config(out_dir / "config.toml")
        assert cfg.scenario == "slip-channel"
        assert cfg.h == 2.5e-6

    def test_verify_jacobian(self, tmp_path, capsys):
        cfgfile = tmp_path / "c.toml"
        cfgfile.write_text(COARSE_CHANNEL)
        assert main(["verify-jacobian", str(cfgfile), "--directions", "2"]) == 0
        assert "Jacobian" in capsys.readouterr().out
