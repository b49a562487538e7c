import csv
import json
import os
import subprocess
import sys

import pytest

from cusplab import cli
from cusplab.io import load_tensor_field, read_radial_csv

SMALL = {
    "bootstrap": {"geometry": {"K": 2}},
    "compat": {"geometry": {"K": 2}, "compat": {"samples": 2}},
    "ode-lemma": {"ode_lemma": {"instances": 3, "sweep_instances": 2, "r_values": [5.0, 10.0]}},
    "poincare-sweep": {"poincare": {"tori": 3, "fields": 2}},
    "norms-sweep": {"geometry": {"K": 2, "R": 5.0}},
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, command, doc, *extra, out="out"):
    cfg = write_config(tmp_path, doc)
    target = tmp_path / out
    code = cli.main([command, "--config", cfg, "--out", str(target), *extra])
    return code, target


def report(target):
    with open(target / "report.json") as fh:
        return json.load(fh)


def stripped(target):
    doc = report(target)
    doc.pop("meta")
    return json.dumps(doc, sort_keys=True)


@pytest.fixture(autouse=True)
def _no_env_out(monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)


@pytest.mark.parametrize("command", sorted(SMALL))
def test_subcommands_pass(tmp_path, command, capsys):
    code, target = run(tmp_path, command, SMALL[command])
    assert code == cli.EXIT_PASS, capsys.readouterr().out
    doc = report(target)
    assert doc["command"] == command and doc["pass"] is True and doc["failing"] == []
    assert set(doc["meta"]) == {"timestamp", "elapsed_seconds", "version"}
    assert "output" not in doc["config"]
    assert {"parameters", "thresholds", "measured"} <= set(doc)
    assert (target / "profiles.csv").exists()
    assert capsys.readouterr().out.strip() == f"{command}: pass"


def test_failing_run_exit_code(tmp_path, capsys):
    # A short radial range cannot resolve the decay rate.
    code, target = run(tmp_path, "bootstrap", {"geometry": {"K": 2, "R": 10.0}})
    assert code == cli.EXIT_FAIL
    doc = report(target)
    assert doc["pass"] is False and doc["failing"]
    assert "FAIL (" in capsys.readouterr().out


@pytest.mark.parametrize("doc", [{"geometry": {"dr": -1}}, {"params": {"eta": 0.5}}, {"unknown": 1},
                                 {"sweep": {"axis": "nope"}}])
def test_config_error_writes_nothing(tmp_path, doc):
    code, target = run(tmp_path, "bootstrap", doc)
    assert code == cli.EXIT_CONFIG
    assert not target.exists()


def test_malformed_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert cli.main(["compat", "--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_bad_seed_rejected(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["compat", "--seed", "-1"])
    with pytest.raises(SystemExit):
        cli.main(["compat", "--seed", str(2 ** 64)])


def test_deterministic_reports(tmp_path):
    doc = SMALL["bootstrap"]
    _, a = run(tmp_path, "bootstrap", doc, "--seed", "7", out="a")
    _, b = run(tmp_path, "bootstrap", doc, "--seed", "7", out="b")
    assert stripped(a) == stripped(b)
    assert report(a)["seed"] == 7
    assert (a / "profiles.csv").read_bytes() == (b / "profiles.csv").read_bytes()


def test_seed_changes_report(tmp_path):
    doc = SMALL["ode-lemma"]
    _, a = run(tmp_path, "ode-lemma", doc, "--seed", "1", out="a")
    _, b = run(tmp_path, "ode-lemma", doc, "--seed", "2", out="b")
    assert stripped(a) != stripped(b)


class TestOutputDir:
    def args(self, out=None):
        return cli.build_parser().parse_args(["compat"] + (["--out", out] if out else []))

    def test_precedence(self, monkeypatch):
        cfg = {"output": {"dir": "from_config"}}
        assert cli.output_dir(self.args(), {"output": {"dir": None}}) == cli.DEFAULT_OUT
        assert cli.output_dir(self.args(), cfg) == "from_config"
        monkeypatch.setenv(cli.OUT_ENV, "from_env")
        assert cli.output_dir(self.args(), cfg) == "from_env"
        assert cli.output_dir(self.args("from_flag"), cfg) == "from_flag"

    def test_env_used_end_to_end(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env_out"))
        doc = dict(SMALL["norms-sweep"], output={"dir": str(tmp_path / "cfg_out")})
        cfg = write_config(tmp_path, doc)
        assert cli.main(["norms-sweep", "--config", cfg]) == cli.EXIT_PASS
        assert (tmp_path / "env_out" / "report.json").exists()
        assert not (tmp_path / "cfg_out").exists()


def test_save_field(tmp_path):
    doc = dict(SMALL["bootstrap"], output={"save_field": True})
    code, target = run(tmp_path, "bootstrap", doc)
    assert code == cli.EXIT_PASS
    h = load_tensor_field(str(target / "field.cptf"))
    assert h.K == 2 and h.grid.R == 20.0
    avg = read_radial_csv(str(target / "average.csv"))
    assert avg.grid.n == h.grid.n


class TestSweep:
    def test_rows_and_columns(self, tmp_path):
        code, target = run(tmp_path, "sweep", SMALL["norms-sweep"], "--kind", "norms-sweep",
                           "--axis", "eta", "--values", "1.5,2.0")
        assert code == cli.EXIT_PASS
        with open(target / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["value"]) for r in rows] == [1.5, 2.0]
        assert list(rows[0]) == ["value", *cli.SWEEP_COLUMNS["norms-sweep"], "pass", "failing"]
        doc = report(target)
        assert doc["parameters"] == {"axis": "eta", "values": [1.5, 2.0], "kind": "norms-sweep"}

    def test_empty_values(self, tmp_path):
        code, target = run(tmp_path, "sweep", {}, "--kind", "compat", "--values", "")
        assert code == cli.EXIT_PASS
        assert report(target)["measured"]["rows"] == []
        with open(target / "sweep.csv") as fh:
            assert len(list(csv.reader(fh))) == 1

    def test_invalid_value_is_config_error(self, tmp_path):
        code, target = run(tmp_path, "sweep", SMALL["bootstrap"], "--axis", "eta", "--values", "0.5")
        assert code == cli.EXIT_CONFIG and not target.exists()

    def test_workers_match_serial(self, tmp_path):
        args = ("--kind", "norms-sweep", "--axis", "lambda", "--values", "0.3,0.6")
        _, a = run(tmp_path, "sweep", SMALL["norms-sweep"], *args, "--workers", "1", out="a")
        _, b = run(tmp_path, "sweep", SMALL["norms-sweep"], *args, "--workers", "2", out="b")
        assert stripped(a).replace('"workers": 1', '"workers": 2') == stripped(b)


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, SMALL["norms-sweep"])
    env = dict(os.environ, **{cli.OUT_ENV: str(tmp_path / "o")})
    proc = subprocess.run([sys.executable, "-m", "cusplab", "norms-sweep", "--config", cfg],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "norms-sweep: pass"
