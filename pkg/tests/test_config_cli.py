"""Config parsing, serialization round-trips and CLI subcommands."""

import os

import pytest

from thbsbm.cli import main
from thbsbm.config import ConfigError, RunConfig, parse_config, serialize_config

GOOD = """
[geometry]
kind = circle_hole
center = 0.5 0.5
radius = 0.15

[bcs]
outer = dirichlet
hole = neumann

[solution]
id = coshsin

[discretization]
degrees = 1 2
strategies = none p
refine_target = N

[schedule]
mode = halve
start = 10
stop = 20

[nitsche]
theta = -1
alpha = 0

[output]
csv = out.csv
"""


def test_parse_good_config():
    cfg = parse_config(GOOD)
    assert cfg.geometry == "circle_hole"
    assert cfg.degrees == (1, 2)
    assert cfg.strategies == ("none", "p")
    assert cfg.hole_bc == "neumann"
    assert cfg.span_start == 10 and cfg.span_end == 20
    assert cfg.theta == -1.0 and cfg.alpha == 0.0


def test_round_trip_preserves_settings():
    cfg = parse_config(GOOD)
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config(GOOD.replace("mode = halve", "mode = halve\nstep_size = 3"))


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown config section"):
        parse_config(GOOD + "\n[misc]\nfoo = 1\n")


def test_bad_values_name_offending_key():
    with pytest.raises(ConfigError, match="degrees"):
        parse_config(GOOD.replace("degrees = 1 2", "degrees = 0"))
    with pytest.raises(ConfigError, match="strategies"):
        parse_config(GOOD.replace("strategies = none p", "strategies = zz"))
    with pytest.raises(ConfigError, match="geometry.kind"):
        parse_config(GOOD.replace("kind = circle_hole", "kind = triangle"))
    with pytest.raises(ConfigError, match="theta"):
        parse_config(GOOD.replace("theta = -1", "theta = 2"))


def test_degrees_range_enforced():
    with pytest.raises(ConfigError):
        RunConfig(degrees=(6,)).validate()
    with pytest.raises(ConfigError):
        RunConfig(strategies=()).validate()
    with pytest.raises(ConfigError):
        RunConfig(span_start=20, span_end=10).validate()


def test_bundled_configs_parse():
    for name in os.listdir("configs"):
        if name.endswith(".cfg"):
            with open(os.path.join("configs", name)) as fh:
                parse_config(fh.read())


def test_cli_validate_exit_zero(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out


def test_cli_run_smoke(tmp_path, capsys):
    cfgfile = tmp_path / "case.cfg"
    cfgfile.write_text("""
[geometry]
kind = square
[solution]
id = linear_x
[discretization]
degrees = 2
strategies = none
refine_target = none
[schedule]
mode = halve
start = 6
stop = 6
""")
    assert main(["run", "--config", str(cfgfile)]) == 0
    out = capsys.readouterr().out
    assert "err_l2_rel" in out


def test_cli_study_writes_csv(tmp_path):
    cfgfile = tmp_path / "study.cfg"
    cfgfile.write_text("""
[geometry]
kind = square
[solution]
id = coshsin
[discretization]
degrees = 1
strategies = none
refine_target = none
[schedule]
mode = halve
start = 5
stop = 10
[output]
csv = tiny.csv
""")
    assert main(["study", "--config", str(cfgfile), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "tiny.csv").read_text().splitlines()
    assert len(lines) == 3


def test_cli_rejects_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[geometry]\nkind = dodecahedron\n")
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", str(bad)])
    assert exc.value.code == 2
    assert "geometry.kind" in capsys.readouterr().err


def test_cli_missing_config_file(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", "/nonexistent.cfg"])
    assert exc.value.code == 2


def test_cli_dump_basis(tmp_path, capsys):
    cfgfile = tmp_path / "dump.cfg"
    cfgfile.write_text("""
[geometry]
kind = circle_hole
center = 0.5 0.5
radius = 0.15
[bcs]
outer = dirichlet
hole = neumann
[solution]
id = coshsin
[discretization]
degrees = 2
strategies = p
refine_target = N
[schedule]
mode = halve
start = 10
stop = 10
""")
    assert main(["dump-basis", "--config", str(cfgfile)]) == 0
    out = capsys.readouterr().out
    assert "levels: 2" in out
    assert "strategy=p" in out


def test_cli_threads_env_fallback(tmp_path, monkeypatch):
    cfgfile = tmp_path / "case.cfg"
    cfgfile.write_text("""
[geometry]
kind = square
[solution]
id = linear_x
[discretization]
degrees = 1
strategies = none
refine_target = none
[schedule]
mode = halve
start = 5
stop = 5
[output]
csv = t.csv
""")
    monkeypatch.setenv("THB_SBM_THREADS", "2")
    assert main(["study", "--config", str(cfgfile), "--out", str(tmp_path)]) == 0


def test_dump_basis_golden_roundtrip(tmp_path):
    """The dump is byte-stable between rebuilds of the same hierarchy."""
    from thbsbm.thb import HierarchicalSpace

    def build():
        h = HierarchicalSpace.uniform(2, 10)
        h.refine(h.mark_in_boxes([(0, 0.5, 0, 0.5), (0.5, 1, 0.5, 1)]), "k")
        return h.dump()

    assert build() == build()
