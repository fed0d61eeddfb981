import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from fluxgates import experiments
from fluxgates.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_OK, main
from fluxgates.config import parse_config_text
from fluxgates.errors import ConfigError, FitFailure
from fluxgates.experiments import REGISTRY, list_experiments, run, validate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """\
[circuit]
E_C_ghz = 1.30
E_L_ghz = 0.59
E_J_ghz = 5.71
phi_dc_rad = 3.141592653589793
levels = 2

[drive]
scheme = flux
mode = commensurate
t_X_tau = {t_x}
gap_ns = 0.1
{extra_drive}
[experiment]
name = {name}
{extra}
"""


def _write(tmp_path, name="rotation-vs-start", t_x="1.0", extra="points = 16", extra_drive="", tail=""):
    path = tmp_path / f"{name}.ini"
    path.write_text(BASE.format(t_x=t_x, name=name, extra=extra, extra_drive=extra_drive) + tail)
    return path


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "out"
    monkeypatch.setenv(experiments.OUTPUT_ROOT_ENV, str(root))
    return root


def test_registry_contents():
    names = [n for n, _ in list_experiments()]
    assert set(names) == {
        "rabi-phase-sweep",
        "rotation-vs-start",
        "rotation-range",
        "calibrate",
        "rb",
        "rb-duration-sweep",
        "trajectory",
    }
    assert len(names) == len(set(names))
    assert all(callable(REGISTRY[n].runner) for n in names)
    assert names == [n for n, _ in list_experiments()]


def test_malformed_unit_suffix_names_key():
    text = BASE.format(t_x="1.0", name="rb", extra="", extra_drive="gap_sec = 0.1\n")
    with pytest.raises(ConfigError, match="gap_sec"):
        parse_config_text(text)


def test_bad_value_reports_line():
    text = BASE.format(t_x="abc", name="rb", extra="", extra_drive="")
    with pytest.raises(ConfigError, match=r"11: \[drive\] t_X_tau"):
        parse_config_text(text)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config_text(BASE.format(t_x="1.0", name="rb", extra="", extra_drive="") + "[bogus]\nx = 1\n")


def test_shipped_configs_validate():
    for path in sorted(CONFIGS.glob("*.ini")):
        assert validate(path) == [], path.name


def test_coherence_invariant_checked(tmp_path):
    path = _write(tmp_path, tail="\n[coherence]\nT1_us = 100\nT2E_us = 300\n")
    problems = validate(path)
    assert len(problems) == 1 and "T2E_us" in problems[0]


def test_incommensurate_slot_pre_reported(tmp_path):
    problems = validate(_write(tmp_path, t_x="1.2"))
    assert any("CommensurabilityViolation" in p and "t_X_tau" in p for p in problems)
    # The same slot is fine for back-to-back pulses.
    path = _write(tmp_path, t_x="1.2", extra_drive="").read_text().replace("commensurate", "incommensurate")
    (tmp_path / "inc.ini").write_text(path)
    assert validate(tmp_path / "inc.ini") == []


def test_cli_exit_codes(tmp_path, output_root, monkeypatch, capsys):
    assert main(["list"]) == EXIT_OK
    assert "rotation-range" in capsys.readouterr().out
    good = _write(tmp_path)
    assert main(["validate", str(good)]) == EXIT_OK
    assert main(["validate", str(_write(tmp_path, t_x="1.2"))]) == EXIT_CONFIG
    broken = tmp_path / "broken.ini"
    broken.write_text("[circuit]\nE_C = 1\n")
    assert main(["run", str(broken)]) == EXIT_CONFIG

    def failing(config):
        raise FitFailure("synthetic failure")

    monkeypatch.setitem(REGISTRY, "trajectory", experiments.Experiment("trajectory", "x", failing))
    assert main(["run", str(_write(tmp_path, name="trajectory", extra=""))]) == EXIT_BACKEND
    assert "trajectory" in capsys.readouterr().err


def test_bundle_layout_and_manifest(tmp_path, output_root):
    bundle = run(_write(tmp_path))
    assert bundle.directory.parent == output_root
    manifest = json.loads(bundle.manifest.read_text())
    assert set(manifest["files"]) == {"config.json", "provenance.json", "rotation_vs_start.csv"}
    for name in manifest["files"]:
        assert (bundle.directory / name).exists()
    provenance = json.loads((bundle.directory / "provenance.json").read_text())
    assert provenance["version"]
    assert not list(bundle.directory.glob("*.tmp*"))


def test_rerun_gives_identical_tables(tmp_path, output_root):
    path = _write(tmp_path, name="trajectory", extra="gates = X90, Y90\nsamples_per_ns = 5")
    first = run(path, now=0)
    second = run(path, now=time.time())
    assert first.directory != second.directory
    for name in ("trajectory.csv", "schedule.json", "config.json"):
        assert (first.directory / name).read_bytes() == (second.directory / name).read_bytes()


def test_rotation_range_table(tmp_path, output_root):
    bundle = run(CONFIGS / "rotation_range.ini")
    rows = (bundle.directory / "rotation_range.csv").read_text().splitlines()[1:]
    ranges = [float(r.split(",")[1]) for r in rows]
    assert all(a > b for a, b in zip(ranges, ranges[1:]))


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fluxgates.cli", "list"], capture_output=True, text=True)
    assert out.returncode == 0 and "calibrate" in out.stdout


def test_polarization_choices_match_dynamics(tmp_path):
    ok = _write(tmp_path, name="rotation-range", extra="polarization = co-rotating\ndurations_tau = 1.0")
    assert validate(ok) == []
    text = BASE.format(t_x="1.0", name="rotation-range", extra="polarization = circular", extra_drive="")
    with pytest.raises(ConfigError, match="polarization"):
        parse_config_text(text)
