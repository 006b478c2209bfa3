import json
import math
import os

import pytest

from mshcap import cli
from mshcap.errors import ConfigError

BASE_CONFIG = """
[domain]
n = 1
shape = ball
center = 0 0
radius = 1.0
h = {h}

[compact]
shape = ball
center = 0 0
radius = {r}

[weight]
psi = {psi}
delta = {delta}
m = 1
"""


def write_config(tmp_path, name="cond.cfg", h="0.03125", r="0.5", psi="-1", delta="0.0", extra=""):
    path = tmp_path / name
    path.write_text(BASE_CONFIG.format(h=h, r=r, psi=psi, delta=delta) + extra)
    return str(path)


def test_parse_config_unweighted(tmp_path):
    spec, options = cli.parse_config(write_config(tmp_path))
    assert spec.n == 1 and spec.m == 1
    assert spec.delta == 0.0
    assert spec.psi.describe() == "-1"
    assert options["solver"] == {}


def test_parse_config_tilted_weight(tmp_path):
    spec, _ = cli.parse_config(write_config(tmp_path, psi="-1 + 0.2*x1", delta="0.1"))
    dom = spec.build()
    assert spec.validate(dom) == pytest.approx(-0.9, abs=0.01)


def test_parse_config_guarded_weight_rejected(tmp_path):
    with pytest.raises(ConfigError) as err:
        cli.parse_config(write_config(tmp_path, psi="log(x1)"))
    assert err.value.kind in ("constraint", "eval")


def test_parse_config_infeasible_delta(tmp_path):
    with pytest.raises(ConfigError):
        cli.parse_config(write_config(tmp_path, psi="-1", delta="-2"))


def test_parse_config_missing_sections(tmp_path):
    p = tmp_path / "broken.cfg"
    p.write_text("[domain]\nn = 1\n")
    with pytest.raises(ConfigError):
        cli.parse_config(str(p))
    with pytest.raises(ConfigError):
        cli.parse_config(str(tmp_path / "missing.cfg"))


def test_parse_config_variables_must_match_dimension(tmp_path):
    with pytest.raises(ConfigError):
        cli.parse_config(write_config(tmp_path, psi="-1 + 0.01*x2"))


def test_config_mapping_is_injective(tmp_path):
    a, _ = cli.parse_config(write_config(tmp_path, "a.cfg", delta="0.0"))
    b, _ = cli.parse_config(write_config(tmp_path, "b.cfg", delta="0.25"))
    c, _ = cli.parse_config(write_config(tmp_path, "c.cfg", r="0.4"))
    assert a.describe() != b.describe() != c.describe()


def test_envelope_command(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    code = cli.main(["envelope", "--config", cfg, "--out", str(out)])
    assert code == 0
    assert (out / "envelope.csv").exists()
    sidecar = json.loads((out / "envelope.json").read_text())
    assert sidecar["converged"] is True
    header = (out / "envelope.csv").read_text().splitlines()
    assert header[1] == "x1,y1,mask,value,obstacle_active"


def test_capacity_command_with_sweep(tmp_path, capsys):
    cfg = write_config(tmp_path, h="0.0625")
    out = tmp_path / "out"
    code = cli.main(["capacity", "--config", cfg, "--sweep", "3", "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr().out
    assert captured.count("h=") >= 3
    payload = json.loads((out / "capacity.json").read_text())
    assert len(payload["refinement_table"]) == 3
    exact = (math.pi / 2) / math.log(2.0)
    assert payload["value"] == pytest.approx(exact, rel=0.05)


def test_capacity_oracle_and_outer_methods(tmp_path):
    cfg = write_config(tmp_path, h="0.03125")
    out = tmp_path / "o1"
    assert cli.main(["capacity", "--config", cfg, "--method", "oracle", "--out", str(out)]) == 0
    payload = json.loads((out / "capacity.json").read_text())
    assert payload["method"] == "DIRECT_ORACLE"
    assert payload["argmin"] == "envelope"

    # the outer protocol fattens K by up to 16h; keep it separated from the boundary
    cfg = write_config(tmp_path, "outer.cfg", h="0.015625", r="0.3")
    out2 = tmp_path / "o2"
    assert cli.main(["capacity", "--config", cfg, "--method", "outer", "--out", str(out2)]) == 0
    payload2 = json.loads((out2 / "capacity.json").read_text())
    assert payload2["method"] == "OUTER"
    assert len(payload2["refinement_table"]) == 3


def test_sweep_command(tmp_path, capsys):
    cfg = write_config(tmp_path, h="0.0625")
    code = cli.main(["sweep", "--config", cfg, "--sweep", "3", "--out", str(tmp_path / "s")])
    assert code == 0
    text = capsys.readouterr().out
    assert "measured order" in text


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[domain\nn=1\n")
    assert cli.main(["envelope", "--config", str(p)]) == cli.EXIT_CONFIG


def test_no_convergence_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, extra="\n[solver]\nmax_sweeps = 2\n")
    assert cli.main(["envelope", "--config", cfg, "--out", str(tmp_path / "x")]) == cli.EXIT_NO_CONVERGENCE


def test_verify_command_deterministic(tmp_path, capsys):
    out1, out2 = tmp_path / "v1", tmp_path / "v2"
    code1 = cli.main(["verify", "--seed", "7", "--quick", "--out", str(out1)])
    text1 = capsys.readouterr().out
    code2 = cli.main(["verify", "--seed", "7", "--quick", "--out", str(out2)])
    text2 = capsys.readouterr().out
    assert code1 == code2 == 0
    assert text1 == text2
    assert (out1 / "verify.json").read_bytes() == (out2 / "verify.json").read_bytes()
