import json
import os
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from skewlab import errors
from skewlab.cli import RunConfig, Report, run, main, COMMANDS, SYSTEM_KEYS, NUMERICS_KEYS, SCHEMA_VERSION
from skewlab.errors import ConfigInvalid, ALL_ERRORS


def load(path):
    with open(path) as fh:
        return json.load(fh)


def test_simulate_fixed_point(tmp_path):
    rep = run(RunConfig("simulate", params={"x1": "0", "x2": "0", "n": "100"}), str(tmp_path))
    assert rep.status == "ok" and rep.exit_status == 0
    assert (rep.metrics["simulate.final_x1"], rep.metrics["simulate.final_x2"]) == (0.0, 0.0)
    js = load(tmp_path / "report.json")
    assert js["schema_version"] == SCHEMA_VERSION
    assert js["config"]["params"]["n"] == "100"
    with open(tmp_path / "trace.csv") as fh:
        assert fh.readline().strip() == "n,average"


def test_simulate_bigfloat_decimal_start(tmp_path):
    cfg = RunConfig("simulate", numerics={"mode": "bigfloat"},
                    params={"x1": "0.5", "x2": "0.5", "n": "3"})
    rep = run(cfg, str(tmp_path))
    assert rep.metrics["simulate.final_exact"][0].startswith("0.5000")
    assert rep.numerics["mode"] == "bigfloat"


def test_entropy_command(tmp_path):
    cfg = RunConfig("entropy", params={"eps": "0.25", "nmin": "4", "nmax": "10"})
    rep = run(cfg, str(tmp_path))
    assert rep.metrics["entropy.slope"] == pytest.approx(0.96, abs=0.1)
    lines = (tmp_path / "entropy.csv").read_text().splitlines()
    assert lines[0] == "n,count,log_count" and len(lines) == 8


def test_weather_driver_rejected(tmp_path):
    rep = run(RunConfig("simulate", system={"driver": "weather"}), str(tmp_path))
    assert rep.status == "error"
    assert rep.error["code"] == ConfigInvalid.code
    assert rep.exit_status == ConfigInvalid.exit_status
    assert "system.driver" in rep.error["details"]["fields"]


def test_field_level_diagnostics():
    cfg = RunConfig("entropy", numerics={"seed": "x"}, params={"eps": "-1", "nmin": "zero"})
    with pytest.raises(ConfigInvalid) as exc:
        cfg.validate()
    assert set(exc.value.details["fields"]) == {"numerics.seed", "command.eps", "command.nmin"}


def test_unknown_keys_rejected():
    with pytest.raises(ConfigInvalid) as exc:
        RunConfig("entropy", system={"colour": "blue"}, params={"speed": "1"})
    assert set(exc.value.details["fields"]) == {"system.colour", "command.speed"}
    with pytest.raises(ConfigInvalid):
        RunConfig.from_ini("[system]\ndriver = rotation\n[command]\nname = entropy\n[extra]\na = 1\n")
    with pytest.raises(ConfigInvalid):
        RunConfig("teleport")
    with pytest.raises(ConfigInvalid):
        RunConfig.from_ini("[system]\ndriver = rotation\n")


safe_text = st.text(st.characters(whitelist_categories=("Ll", "Lu", "Nd"), whitelist_characters=".-/ ;"),
                    min_size=1, max_size=20).map(str.strip).filter(bool)


@given(st.sampled_from(sorted(COMMANDS)), st.data())
def test_ini_round_trip(command, data):
    keys = COMMANDS[command]
    params = data.draw(st.dictionaries(st.sampled_from(sorted(keys)), safe_text, max_size=len(keys)))
    system = data.draw(st.dictionaries(st.sampled_from(sorted(SYSTEM_KEYS)), safe_text))
    numerics = data.draw(st.dictionaries(st.sampled_from(sorted(NUMERICS_KEYS)), safe_text))
    cfg = RunConfig(command, system, numerics, params)
    back = RunConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.to_ini() == cfg.to_ini()


def test_precise_alpha_kept_as_text():
    text = "[system]\ndriver = sturmian\nalpha = 0.41421356237309504880168872420969807856967\n" \
           "[command]\nname = lyapunov\n"
    cfg = RunConfig.from_ini(text)
    assert cfg.validate()["system.alpha"].rational.denominator == 10 ** 41


def test_reproducible_csv(tmp_path):
    cfg = RunConfig("simulate", numerics={"seed": "42"}, params={"random": "true", "n": "500"})
    run(cfg, str(tmp_path / "a"))
    run(cfg, str(tmp_path / "b"))
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    cfg = RunConfig("shadow", numerics={"seed": "5"}, params={"random": "10"})
    run(cfg, str(tmp_path / "c"))
    run(cfg, str(tmp_path / "d"))
    assert (tmp_path / "c" / "shadow_batch.csv").read_bytes() == \
        (tmp_path / "d" / "shadow_batch.csv").read_bytes()
    other = RunConfig("shadow", numerics={"seed": "6"}, params={"random": "10"})
    run(other, str(tmp_path / "e"))
    assert (tmp_path / "e" / "shadow_batch.csv").read_bytes() != \
        (tmp_path / "c" / "shadow_batch.csv").read_bytes()


def test_distinct_error_codes():
    codes = [e.code for e in ALL_ERRORS]
    statuses = [e.exit_status for e in ALL_ERRORS]
    assert len(set(codes)) == len(codes)
    assert len(set(statuses)) == len(statuses)
    assert all(s != 0 for s in statuses)
    assert errors.SkewLabError not in ALL_ERRORS or len(ALL_ERRORS) > 1


def test_inner_error_surfaces(tmp_path):
    rep = run(RunConfig("entropy", params={"nmin": "4", "nmax": "10", "grid": "4096"}), str(tmp_path))
    assert rep.error["code"] == errors.GridTooCoarse.code
    assert rep.exit_status == errors.GridTooCoarse.exit_status


def test_shadow_command_with_file(tmp_path):
    spec = {"omega": 0.1, "intervals": [[0, 9], [30, 45], [70, 80]],
            "anchors": [[0.1, 0.2], [0.7, 0.3], [0.5, 0.5]]}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    rep = run(RunConfig("shadow", system={"h": "angle"}, params={"spec": str(path)}),
              str(tmp_path / "out"))
    assert rep.metrics["shadow.verified"] is True
    assert rep.metrics["shadow.max_deviation"] < 0.05
    out = load(tmp_path / "out" / "shadow.json")
    assert len(out["gluings"]) == 2


def test_shadow_missing_spec(tmp_path):
    rep = run(RunConfig("shadow"), str(tmp_path))
    assert rep.error["code"] == ConfigInvalid.code


def test_lyapunov_and_dense_metrics(tmp_path):
    rep = run(RunConfig("lyapunov", system={"driver": "sturmian", "family": "cocycle"}),
              str(tmp_path / "l"))
    assert rep.metrics["lyapunov.difference"] < 1e-2
    rep = run(RunConfig("dense-variant", system={"h": "angle"},
                        params={"targets": "0.9 0.1; 0.4 0.6", "levels": "2"}), str(tmp_path / "d"))
    assert rep.metrics["dense.cells"] == 2
    assert rep.metrics["dense.max_distance"] < 0.05


def test_irregular_small(tmp_path):
    rep = run(RunConfig("irregular", params={"levels": "2", "growth": "4"}), str(tmp_path))
    assert rep.metrics["irregular.certified"] is True
    cert = load(tmp_path / "certificate.json")
    assert cert["schedule"]["levels"] == 2
    assert (tmp_path / "trace.csv").read_text().startswith("n,average\n")


def test_main_flags_and_exit_status(tmp_path, capsys):
    status = main(["--out", str(tmp_path / "a"), "simulate", "--n", "10"])
    assert status == 0
    assert json.loads(capsys.readouterr().out)["metrics"]["simulate.final_x1"] == 0.0
    status = main(["--driver", "weather", "--out", str(tmp_path / "b"), "simulate"])
    assert status == ConfigInvalid.exit_status


def test_main_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[system]\nmatrix = cat\n[numerics]\nseed = 3\n[command]\nname = simulate\nn = 50\n")
    assert main(["--config", str(ini), "--out", str(tmp_path / "o"), "simulate", "--n", "20"]) == 0
    js = load(tmp_path / "o" / "report.json")
    assert js["config"]["params"]["n"] == "20"
    assert js["config"]["numerics"]["seed"] == "3"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "skewlab", "--out", str(tmp_path), "simulate",
                           "--n", "5"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert os.path.exists(tmp_path / "report.json")


def test_report_json_shape():
    rep = Report("entropy", {"command": "entropy"}, {"entropy.slope": 0.9})
    js = rep.to_json()
    assert {"schema_version", "command", "config", "metrics", "artifacts", "duration_s"} <= set(js)
