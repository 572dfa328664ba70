"""Config parsing, CSV round trips, CLI subcommands, determinism."""

import numpy as np
import pytest

from khm_lab import io as khmio
from khm_lab.cli import main
from khm_lab.config import ConfigError, parse_config
from khm_lab.manifest import read_manifest, sha256_of

GOOD_CONFIG = """\
format = 1

[run]
nu = 0.6
n = 16
dt = 0.02
burn_in = 1.0
averaging = 6.0
stride = 10
seed = 4242

[forcing]
default = shell2
epsilon = 1.0

[stats]
ell_count = 10
small_ell_count = 2
quad_order = 8
flatness_p = 2
shells = 1,2

[khm]
s = 1.5
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(GOOD_CONFIG)
    return p


class TestConfigParse:
    def test_good_config(self, config_file):
        cfg = parse_config(config_file)
        assert cfg.nu == 0.6
        assert cfg.n == 16
        assert cfg.forcing.epsilon == pytest.approx(1.0)
        assert cfg.stats.shells == (1, 2)
        grid = cfg.ell_grid()
        assert np.all(np.diff(grid) > 0)
        assert grid.min() < 2 * np.pi / 16

    def test_unknown_key_named_with_line(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("format = 1\n[run]\nnu = 0.1\nwhoops = 3\n")
        with pytest.raises(ConfigError, match=r"line 4.*whoops"):
            parse_config(p)

    def test_missing_format_key(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[run]\nnu = 0.1\n")
        with pytest.raises(ConfigError, match="format"):
            parse_config(p)

    def test_nonpositive_nu_rejected(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text(GOOD_CONFIG.replace("nu = 0.6", "nu = 0"))
        with pytest.raises(ConfigError, match="'nu' must be positive"):
            parse_config(p)

    def test_mode_lines(self, tmp_path):
        p = tmp_path / "modes.cfg"
        p.write_text(
            "format = 1\n[run]\nnu = 0.5\nn = 16\ndt = 0.01\naveraging = 1\nseed = 1\n"
            "[forcing]\nmode = 1,0,0 / 0,0.5,0 / 0,0,0.5\nmode = 0,1,0 / 0.5,0,0 / 0,0,0.5\n"
        )
        cfg = parse_config(p)
        assert len(cfg.forcing.modes) == 2
        assert cfg.forcing.epsilon == pytest.approx(0.5)

    def test_bad_mode_line_rejected(self, tmp_path):
        p = tmp_path / "modes.cfg"
        p.write_text(
            "format = 1\n[run]\nnu = 0.5\nn = 16\ndt = 0.01\naveraging = 1\nseed = 1\n"
            "[forcing]\nmode = 1,0,0 / 1,0,0 / 0,0,1\n"
        )
        with pytest.raises(ConfigError, match="solenoidal"):
            parse_config(p)


class TestCSVRoundTrip:
    def test_structure_table(self, tmp_path):
        from khm_lab.stats import StructureFunctionTable

        ell = np.geomspace(0.1, 1.0, 6)
        t = StructureFunctionTable(ell, -ell, 0.01 * ell, -0.8 * ell, 0.01 * ell, 12)
        path = tmp_path / "structure_functions.csv"
        khmio.write_structure_csv(path, t)
        back = khmio.read_structure_csv(path)
        assert np.array_equal(back.ell, t.ell)
        assert np.array_equal(back.s0, t.s0)
        assert back.sample_count == 12

    def test_schema_mismatch_names_column(self, tmp_path):
        path = tmp_path / "structure_functions.csv"
        path.write_text("ell,S0,Spar\n0.1,1,2\n")
        with pytest.raises(khmio.SchemaError, match="S0_stderr"):
            khmio.read_structure_csv(path)

    def test_energy_roundtrip(self, tmp_path):
        path = tmp_path / "energy.csv"
        t = np.array([0.1, 0.2])
        khmio.write_energy_csv(path, t, t * 2, t * 3)
        tt, e, z = khmio.read_energy_csv(path)
        assert np.array_equal(tt, t)
        assert np.array_equal(e, t * 2)
        assert np.array_equal(z, t * 3)


class TestCLIPipeline:
    def test_usage_error_exit_1(self):
        assert main([]) == 1
        assert main(["bogus"]) == 1

    def test_validation_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("format = 1\n[run]\nnu = -1\n")
        assert main(["simulate", "--config", str(bad)]) == 2
        assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2

    def test_simulate_stats_budget_pipeline(self, tmp_path, config_file, capsys):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
        assert (out / "energy.csv").exists()
        assert (out / "checkpoint.khm").exists()
        assert (out / "manifest.json").exists()
        snaps = list((out / "snapshots").glob("*.khm"))
        assert len(snaps) == 30  # averaging 6.0 / dt 0.02 / stride 10

        assert main(["stats", "--config", str(config_file), "--out", str(out)]) == 0
        for name in ("structure_functions.csv", "correlations.csv",
                     "flatness.csv", "isotropy.csv"):
            assert (out / name).exists()

        assert main(["budget", "--config", str(config_file), "--out", str(out)]) == 0
        assert (out / "khm_budget.csv").exists()
        report = (out / "report.txt").read_text()
        assert "Plateau scan" in report
        assert "3 SE" in report

        manifest = read_manifest(out / "manifest.json")
        listed = {f["path"] for f in manifest["files"]}
        assert str(out / "energy.csv") in listed
        for f in manifest["files"]:
            assert sha256_of(f["path"]) == f["sha256"]

    def test_determinism_byte_identical(self, tmp_path, config_file):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        for out in (out1, out2):
            assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
            assert main(["stats", "--config", str(config_file), "--out", str(out)]) == 0
            assert main(["budget", "--config", str(config_file), "--out", str(out)]) == 0
        names = ["energy.csv", "checkpoint.khm", "structure_functions.csv",
                 "correlations.csv", "flatness.csv", "isotropy.csv",
                 "khm_budget.csv", "report.txt"]
        names += [f"snapshots/{p.name}" for p in sorted((out1 / "snapshots").glob("*.khm"))]
        for name in names:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
        m1 = read_manifest(out1 / "manifest.json")
        m2 = read_manifest(out2 / "manifest.json")
        inv1 = [(f["path"].replace(str(out1), ""), f["sha256"]) for f in m1["files"]]
        inv2 = [(f["path"].replace(str(out2), ""), f["sha256"]) for f in m2["files"]]
        assert inv1 == inv2

    def test_stats_without_snapshots_fails(self, tmp_path, config_file):
        out = tmp_path / "empty"
        out.mkdir()
        assert main(["stats", "--config", str(config_file), "--out", str(out)]) == 2

    def test_stats_mixed_grids_rejected(self, tmp_path, config_file):
        from khm_lab.checkpoint import write_checkpoint
        from khm_lab.spectral import Grid, random_solenoidal_field

        out = tmp_path / "mixed"
        (out / "snapshots").mkdir(parents=True)
        write_checkpoint(out / "snapshots" / "a.khm",
                         random_solenoidal_field(Grid(16), 1), 0.1, 0.0, 0, 1)
        write_checkpoint(out / "snapshots" / "b.khm",
                         random_solenoidal_field(Grid(8), 1), 0.1, 0.0, 0, 1)
        assert main(["stats", "--config", str(config_file), "--out", str(out)]) == 2

    def test_stats_rerun_identical(self, tmp_path, config_file):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
        assert main(["stats", "--config", str(config_file), "--out", str(out)]) == 0
        first = (out / "structure_functions.csv").read_bytes()
        assert main(["stats", "--config", str(config_file), "--out", str(out)]) == 0
        assert (out / "structure_functions.csv").read_bytes() == first


class TestVerifyCommand:
    def test_verify_passes(self, tmp_path, capsys):
        cfg = tmp_path / "verify.cfg"
        cfg.write_text(GOOD_CONFIG)
        code = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")])
        captured = capsys.readouterr()
        assert code == 0, captured.out
        assert captured.out.count("[PASS]") >= 6
        assert "[FAIL]" not in captured.out
