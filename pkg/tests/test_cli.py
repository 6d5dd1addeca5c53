import json
import os
from pathlib import Path

import numpy as np
import pytest

from btforms.cli import main
from btforms.config import ConfigError, load_config
from btforms.report import RunReport, export, load_report
from btforms.runner import run

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SMALL_CONFIG = """
[model]
m1 = 939.0
m2 = 939.0

[potential]
name = "yamaguchi"
strength = 47403.458
beta = 300.0

[grid]
n = 24
scale = 300.0

[scattering]
energies = [80.0, 200.0, 400.0]

[forms]
run = ["instant", "front"]

[verify]
seed = 3
enabled = [
  "spectrum-equality", "smatrix-equivalence", "smatrix-unitarity",
  "kinematic-shortcut", "subgroup-sharpness", "wigner-relation",
]
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_CONFIG)
    return path


class TestLoadConfig:
    def test_bundled_configs_valid(self):
        for name in ("yamaguchi.toml", "gaussian.toml", "free.toml"):
            cfg = load_config(CONFIG_DIR / name)
            assert cfg.grid_n == 64
            assert len(cfg.energies) == 20
            assert cfg.forms == ("instant", "point", "front")

    def test_missing_potential_name(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[potential]\nbeta = 1.0\n")
        with pytest.raises(ConfigError, match="name"):
            load_config(path)

    def test_nonpositive_grid_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('[potential]\nname = "free"\n\n[grid]\nn = 0\n')
        with pytest.raises(ConfigError, match=">= 16"):
            load_config(path)

    def test_unknown_keys_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('[potential]\nname = "free"\nfudge = 2.0\n')
        with pytest.raises(ConfigError, match="fudge"):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('[potential]\nname = "free"\n\n[plotting]\nstyle = "x"\n')
        with pytest.raises(ConfigError, match="plotting"):
            load_config(path)

    def test_parse_error_reported(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[potential\nname=")
        with pytest.raises(ConfigError, match="parse error"):
            load_config(path)

    def test_defaults_echoed(self):
        cfg = load_config(CONFIG_DIR / "free.toml")
        blob = cfg.as_dict()
        assert blob["tolerance_scale"] == 1.0
        assert blob["packet_width"] == 280.0
        assert cfg.digest() == cfg.digest()


class TestRunPipeline:
    def test_free_model_all_pass(self, tmp_path):
        path = tmp_path / "free.toml"
        path.write_text(
            '[potential]\nname = "free"\n\n[grid]\nn = 24\nscale = 300.0\n\n'
            "[scattering]\nenergies = [100.0, 300.0]\n"
        )
        cfg = load_config(path)
        report = run(cfg)
        assert report.all_passed
        assert report.spectra == []  # nothing bound
        deltas = [r.delta_rad for r in report.phase_shifts]
        np.testing.assert_allclose(deltas, 0.0, atol=1e-14)

    def test_every_enabled_verification_appears_once(self, small_config):
        cfg = load_config(small_config)
        report = run(cfg)
        names = [v.name for v in report.verifications]
        assert sorted(names) == sorted(cfg.verifications)
        assert report.all_passed

    def test_model_rejection_recorded_not_raised(self, tmp_path):
        path = tmp_path / "deep.toml"
        path.write_text(
            '[potential]\nname = "gausswell"\ndepth = 300.0\nrange = 150.0\n\n'
            "[grid]\nn = 48\nscale = 300.0\n\n"
            '[verify]\nenabled = ["spectrum-equality", "subgroup-sharpness"]\n'
        )
        report = run(load_config(path))
        assert report.solver_rejections
        assert not report.all_passed
        by_name = {v.name: v for v in report.verifications}
        assert not by_name["spectrum-equality"].passed
        assert "rejected" in by_name["spectrum-equality"].detail
        # verifications that need no spectrum still run
        assert by_name["subgroup-sharpness"].passed

    def test_front_margin_violation_recorded_and_run_continues(self, tmp_path):
        path = tmp_path / "margin.toml"
        path.write_text(
            '[potential]\nname = "free"\n\n[grid]\nn = 24\nscale = 300.0\n\n'
            '[verify]\nenabled = ["kinematic-shortcut"]\n\n'
            "[verify.packet]\npplus_center = 0.3\npplus_width = 0.12\n"
        )
        report = run(load_config(path))
        names = [v.name for v in report.verifications]
        assert "front-chart-margin" in names
        margin = next(v for v in report.verifications if v.name == "front-chart-margin")
        assert not margin.passed
        shortcut = next(v for v in report.verifications if v.name == "kinematic-shortcut")
        assert shortcut.passed
        assert "front" not in shortcut.forms

    def test_oracle_checks_skipped_for_nonseparable(self, tmp_path):
        path = tmp_path / "well.toml"
        path.write_text(
            '[potential]\nname = "gausswell"\ndepth = 60.0\nrange = 200.0\n\n'
            "[grid]\nn = 24\nscale = 300.0\n"
        )
        report = run(load_config(path))
        names = [v.name for v in report.verifications]
        assert "bound-state-oracle" not in names
        assert "phase-shift-oracle" not in names
        assert names == report.provenance["verifications_effective"]


class TestExport:
    def test_file_set_and_round_trip(self, small_config, tmp_path):
        report = run(load_config(small_config))
        out = tmp_path / "out"
        written = export(report, out, figures=False)
        names = {os.path.basename(p) for p in written}
        assert names == {
            "spectrum.csv",
            "phaseshifts.csv",
            "verifications.csv",
            "report.json",
        }
        loaded = load_report(out / "report.json")
        assert loaded == report

    def test_reexport_byte_identical(self, small_config, tmp_path):
        report = run(load_config(small_config))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        export(report, out1, figures=False)
        export(report, out2, figures=False)
        for name in ("spectrum.csv", "phaseshifts.csv", "verifications.csv", "report.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_figures_rendered(self, small_config, tmp_path):
        report = run(load_config(small_config))
        out = tmp_path / "figs"
        written = export(report, out, figures=True)
        pngs = {os.path.basename(p) for p in written if p.endswith(".png")}
        assert pngs == {"phaseshifts.png", "spectrum.png", "verifications.png"}
        for p in written:
            assert os.path.getsize(p) > 0

    def test_full_run_determinism(self, small_config, tmp_path):
        cfg = load_config(small_config)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        export(run(cfg), out1, figures=False)
        export(run(cfg), out2, figures=False)
        for name in ("spectrum.csv", "phaseshifts.csv", "verifications.csv", "report.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_timestamp_only_with_env(self, small_config, monkeypatch):
        cfg = load_config(small_config)
        report = run(cfg, tasks={"spectrum"})
        assert "timestamp" not in report.provenance
        monkeypatch.setenv("BTFORMS_TIMESTAMP", "2026-01-01T00:00:00")
        report2 = run(cfg, tasks={"spectrum"})
        assert report2.provenance["timestamp"] == "2026-01-01T00:00:00"


class TestCommandLine:
    def test_run_exit_zero_on_pass(self, small_config, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(
            ["run", "--config", str(small_config), "--out", str(out), "--no-figures"]
        )
        assert rc == 0
        assert (out / "report.json").exists()
        text = capsys.readouterr().out
        assert "PASS spectrum-equality" in text

    def test_exit_nonzero_when_verification_fails(self, small_config, capsys):
        rc = main(
            ["run", "--config", str(small_config), "--tol-scale", "1e-20", "--no-figures"]
        )
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_solve_subcommand_reports_spectrum_only(self, small_config, capsys):
        rc = main(["solve", "--config", str(small_config)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "bound state 0" in text
        assert "PASS" not in text  # no verifications in solve mode

    def test_solve_out_writes_kernel_and_wavefunction_tables(
        self, small_config, tmp_path
    ):
        out = tmp_path / "tables"
        rc = main(
            ["solve", "--config", str(small_config), "--out", str(out), "--no-figures"]
        )
        assert rc == 0
        assert (out / "kernel.csv").exists()
        assert (out / "wavefunctions.csv").exists()
        from btforms.massop import parse_kernel_table

        values = parse_kernel_table((out / "kernel.csv").read_text())
        assert values.shape == (1, 24, 1, 24)

    def test_scatter_subcommand(self, small_config, capsys):
        rc = main(["scatter", "--config", str(small_config)])
        assert rc == 0
        assert "phase shifts: 3 energies x 2 form pipelines" in capsys.readouterr().out

    def test_verify_subcommand(self, small_config, capsys):
        rc = main(["verify", "--config", str(small_config)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "PASS" in text and "bound state" not in text

    def test_form_filter(self, small_config, capsys):
        rc = main(["solve", "--config", str(small_config), "--form", "instant"])
        assert rc == 0
        text = capsys.readouterr().out
        assert "[instant]" in text and "[front]" not in text

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[potential]\n")
        rc = main(["run", "--config", str(path)])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_export_subcommand(self, small_config, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["run", "--config", str(small_config), "--out", str(out), "--no-figures"]
        )
        assert rc == 0
        out2 = tmp_path / "out2"
        rc = main(["export", str(out / "report.json"), "--out", str(out2), "--no-figures"])
        assert rc == 0
        assert (out2 / "report.json").read_bytes() == (out / "report.json").read_bytes()

    def test_threads_env_respected(self, small_config, monkeypatch, capsys):
        monkeypatch.setenv("BTFORMS_THREADS", "2")
        rc = main(["scatter", "--config", str(small_config)])
        assert rc == 0
