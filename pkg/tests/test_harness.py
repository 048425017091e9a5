import numpy as np
import pytest

from crossdiff.errors import ConfigError
from crossdiff.harness import (parse_config, read_manifest, run_experiment,
                               serialize_config, write_report)
from crossdiff.harness.cli import main as cli_main
from crossdiff.harness.experiments import RunReport
from crossdiff.harness.report import render_report_csv

MINIMAL = """
[experiment]
kind = heat_oracle
seed = 7

[model]
n_species = 1
b = 0.0
horizon = 0.1
"""

SMALL_POC = """
[experiment]
kind = poc_vs_N
seed = 21
replicas = 4
n_grid = 16, 32, 64, 128

[model]
horizon = 0.05

[grid]
cells_per_axis = 128
"""


class TestParsing:
    def test_minimal_config_fills_defaults(self):
        spec = parse_config(MINIMAL)
        assert spec.cfl_safety == 0.5
        assert spec.replicas == 20
        assert spec.params.sigma == 0.05
        assert spec.grid.cells_per_axis == 256
        assert len(spec.densities) == 1

    def test_small_exponent_rejected(self):
        bad = MINIMAL + "m_exponent = 1.5\n"
        with pytest.raises(ConfigError, match="m >= 2"):
            parse_config(bad)

    def test_unknown_key_reports_line(self):
        bad = "[experiment]\nkind = heat_oracle\nwibble = 3\n"
        with pytest.raises(ConfigError, match="line 3"):
            parse_config(bad)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(MINIMAL + "\n[extras]\nfoo = 1\n")

    def test_syntax_error_reports_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("[experiment]\nkind heat_oracle\n")

    def test_duplicate_key_rejected(self):
        bad = "[experiment]\nkind = heat_oracle\nkind = poc_vs_N\n"
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(bad)

    def test_unresolved_kernel_rejected(self):
        bad = MINIMAL + "eps = 0.01\n"
        with pytest.raises(ConfigError, match="resolve"):
            parse_config(bad)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError, match="unknown experiment kind"):
            parse_config("[experiment]\nkind = wrong\n")

    def test_round_trip(self):
        spec = parse_config(MINIMAL)
        again = parse_config(serialize_config(spec))
        assert again == spec
        spec2 = parse_config(SMALL_POC)
        assert parse_config(serialize_config(spec2)) == spec2

    def test_species_section(self):
        text = MINIMAL + """
[species.1]
kind = uniform_box
lo = 0.0
hi = 1.0
"""
        spec = parse_config(text)
        assert spec.densities[0].kind == "uniform_box"
        assert parse_config(serialize_config(spec)) == spec


class TestReports:
    def test_empty_report_is_header_only(self):
        spec = parse_config(MINIMAL)
        text = render_report_csv(RunReport(spec))
        assert text == "series_label,abscissa,value,stderr\n"

    def test_two_series_two_blocks(self, tmp_path):
        spec = parse_config(MINIMAL)
        report = run_experiment(spec)
        text = render_report_csv(report)
        labels = {line.split(",")[0] for line in text.splitlines()[1:]}
        assert labels == {"heat_l1_error", "heat_particle_ks"}
        paths = write_report(report, tmp_path / "out")
        for key in ("report", "fits", "manifest", "checks", "timings"):
            assert paths[key].exists()
        assert any(paths["snapshots"].iterdir())

    def test_manifest_contains_seed_and_replays(self, tmp_path):
        spec = parse_config(MINIMAL)
        report = run_experiment(spec)
        paths = write_report(report, tmp_path / "a")
        manifest = paths["manifest"].read_text()
        assert "seed = 7" in manifest
        spec2, seed = read_manifest(paths["manifest"])
        assert seed == 7 and spec2 == spec
        report2 = run_experiment(spec2)
        paths2 = write_report(report2, tmp_path / "b")
        assert paths["report"].read_bytes() == paths2["report"].read_bytes()


class TestDeterminism:
    def test_bytes_identical_across_runs_and_threads(self, tmp_path):
        spec = parse_config(SMALL_POC)
        blobs = []
        for threads, name in ((1, "t1"), (2, "t2"), (1, "again")):
            report = run_experiment(spec, threads=threads)
            paths = write_report(report, tmp_path / name)
            blobs.append(paths["report"].read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]


class TestCli:
    def test_validate(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(MINIMAL)
        assert cli_main(["validate", str(cfg)]) == 0
        assert "valid" in capsys.readouterr().out

    def test_validate_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[experiment]\nkind = nope\n")
        assert cli_main(["validate", str(cfg)]) == 2
        assert "error" in capsys.readouterr().err

    def test_run_and_replay(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(MINIMAL)
        out = tmp_path / "out"
        assert cli_main(["run", str(cfg), "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "[PASS]" in captured
        out2 = tmp_path / "replayed"
        assert cli_main(["replay", str(out / "manifest.txt"),
                         "--out", str(out2)]) == 0
        assert (out / "report.csv").read_bytes() == \
            (out2 / "report.csv").read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(SMALL_POC)
        a = tmp_path / "a"
        b = tmp_path / "b"
        # the toy sweep is too noisy for its slope check; only the byte
        # behavior matters here, so accept either verdict exit code
        assert cli_main(["run", str(cfg), "--out", str(a)]) in (0, 1)
        assert cli_main(["run", str(cfg), "--out", str(b),
                         "--seed", "99"]) in (0, 1)
        assert (a / "report.csv").read_bytes() != \
            (b / "report.csv").read_bytes()
        manifest = (b / "manifest.txt").read_text()
        assert "seed = 99" in manifest


def test_heat_oracle_experiment_passes():
    report = run_experiment(parse_config(MINIMAL))
    assert report.passed
    names = {c.name for c in report.checks}
    assert names == {"heat_pde_l1", "heat_particle_ks"}


def test_partial_results_flushed_on_error(tmp_path, capsys):
    # unequal mobilities make the factorization experiment abort early
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("""
[experiment]
kind = same_mobility_check
seed = 3

[model]
b = 1.0, 2.0
""")
    out = tmp_path / "out"
    assert cli_main(["run", str(cfg), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "same_mobility_check" in err
    assert (out / "report.csv").exists()
