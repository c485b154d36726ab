import hashlib
import json
import subprocess
import sys

import pytest

from dunkl_ldp.cli import config_hash, resolve_config, run
from dunkl_ldp.measures import semicircle, uniform, write_quantile_csv, write_quantile_json


def read_manifest(out):
    return json.loads((out / "manifest.json").read_text())


def error_line(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_roots(tmp_path):
    assert run(["roots", "--family", "B", "--rank", "2", "--out", str(tmp_path)]) == 0
    record = json.loads((tmp_path / "roots.json").read_text())
    assert record["weyl_group_order"] == 8
    assert len(record["positive_roots"]) == 4
    assert [float(c) for c in record["rho"]] == [1.5, 0.5]


def test_manifest_hashes_every_file(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--family", "D", "--n", "6", "--t", "0.2", "--dt", "0.01", "--out", str(out)]) == 0
    manifest = read_manifest(out)
    assert {f["file"] for f in manifest["files"]} == {"path.csv", "summary.json"}
    for entry in manifest["files"]:
        data = (out / entry["file"]).read_bytes()
        assert entry["sha256"] == hashlib.sha256(data).hexdigest()
        assert entry["config_hash"] == manifest["config_hash"]
    header, comment = (out / "path.csv").read_text().splitlines()[:2]
    assert header.split(",")[:2] == ["t", "s1"]
    assert comment == f"# seed=0 config_hash={manifest['config_hash']}"


def test_identical_runs_are_bit_identical(tmp_path):
    args = ["simulate", "--family", "B", "--n", "5", "--alpha", "0.2", "--t", "0.2", "--dt", "0.01", "--seed", "4"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("path.csv", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run(args[:-1] + ["5", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "path.csv").read_bytes() != (tmp_path / "a" / "path.csv").read_bytes()


def test_csv_uses_seventeen_digits(tmp_path):
    run(["simulate", "--family", "A", "--n", "3", "--t", "0.05", "--dt", "0.01", "--out", str(tmp_path)])
    row = (tmp_path / "path.csv").read_text().splitlines()[-1].split(",")
    values = [float(v) for v in row]
    assert all(format(v, ".17g") == s for v, s in zip(values, row))


def test_output_location_does_not_change_the_hash(tmp_path):
    a = resolve_config(["roots", "--family", "C", "--rank", "3", "--out", str(tmp_path / "x")])
    b = resolve_config(["roots", "--family", "C", "--rank", "3", "--out", str(tmp_path / "y"), "--threads", "1"])
    c = resolve_config(["roots", "--family", "C", "--rank", "4"])
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lambda": "1,1", "family": "C"}))
    out = tmp_path / "out"
    assert run(["mult", "--family", "B", "--lambda", "1,0", "--config", str(cfg), "--out", str(out), "--no-cache"]) == 0
    record = json.loads((out / "mult.json").read_text())
    assert record["family"] == "C" and record["dim"] == 5


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["roots", "--family", "B", "--rank", "2", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = error_line(capsys)
    assert err["error"] == "config" and "bogus" in err["message"]


@pytest.mark.parametrize(
    "argv",
    [
        ["roots", "--family", "B"],
        ["roots", "--family", "E", "--rank", "6"],
        ["roots", "--family", "B", "--rank", "2", "--frobnicate"],
        ["simulate", "--family", "D", "--n", "4", "--alpha", "0.3"],
        ["bessel", "--family", "A", "--lambda", "1,2", "--x", "1"],
        ["rate", "--nu-a", "missing.csv", "--nu-b", "missing.csv"],
    ],
)
def test_configuration_errors_exit_2(argv, tmp_path, capsys):
    assert run(argv + ["--out", str(tmp_path)]) == 2
    assert error_line(capsys)["error"] == "config"


def test_cancellation_exits_3(tmp_path, capsys):
    argv = ["bessel", "--family", "A", "--k", "0,1,0", "--lambda", "0,1e-6,2e-6", "--x", "0,50,100",
            "--method", "hciz_exact", "--precision", "double", "--out", str(tmp_path)]
    assert run(argv) == 3
    err = error_line(capsys)
    assert err["error"] == "numeric" and err["type"] == "CancellationError"


def test_budget_exits_4(tmp_path, capsys):
    argv = ["mult", "--family", "B", "--lambda", "4,3,2,1", "--max-dim", "1000", "--out", str(tmp_path), "--no-cache"]
    assert run(argv) == 4
    assert error_line(capsys)["type"] == "BudgetExceeded"


def test_bessel_methods(tmp_path):
    run(["bessel", "--family", "A", "--lambda", "0,1", "--x", "0,2", "--method", "hciz_exact", "--out", str(tmp_path / "e")])
    run(["bessel", "--family", "A", "--lambda", "0,1", "--x", "0,2", "--method", "haar_mc", "--samples", "20000",
         "--out", str(tmp_path / "m")])
    exact = json.loads((tmp_path / "e" / "bessel.json").read_text())
    mc = json.loads((tmp_path / "m" / "bessel.json").read_text())
    assert abs(exact["log_value"] - mc["log_value"]) < 4 * mc["std_error"]


def test_rate_command(tmp_path):
    write_quantile_csv(tmp_path / "a.csv", semicircle(128, 1.0))
    write_quantile_json(tmp_path / "b.json", uniform(128, 0.1, 1.2))
    out = tmp_path / "out"
    argv = ["rate", "--nu-a", str(tmp_path / "a.csv"), "--nu-b", str(tmp_path / "b.json"), "--grid", "8x16",
            "--out", str(out)]
    assert run(argv) == 0
    record = json.loads((out / "rate.json").read_text())
    assert record["grid"] == [8, 16] and not record["stale"]
    rows = (out / "path.csv").read_text().splitlines()
    assert rows[0] == "t,q,X" and len(rows) == 2 + 9 * 16


def test_kirillov_command(tmp_path):
    out = tmp_path / "k"
    assert run(["kirillov-check", "--family", "C", "--lambda", "1,0", "--y", "0.6,0.2", "--mc-budget", "20000",
                "--out", str(out)]) == 0
    record = json.loads((out / "kirillov.json").read_text())
    assert record["char_decomposition"] is True and record["decidable"]


def test_ldp_check_with_given_rate(tmp_path):
    write_quantile_csv(tmp_path / "mu.csv", uniform(64, 0, 0.8))
    out = tmp_path / "ldp"
    assert run(["ldp-check", "--mu", str(tmp_path / "mu.csv"), "--n-list", "2,3", "--delta", "0.5",
                "--rate-value", "0.25", "--out", str(out)]) == 0
    lines = (out / "ldp.csv").read_text().splitlines()
    assert lines[0] == "N,log_sup_mult_over_N2,minus_rate,candidates"
    assert [line.split(",")[0] for line in lines[2:]] == ["2", "3"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dunkl_ldp.cli", "roots", "--family", "D", "--rank", "3",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "dunkl_ldp.cli", "nonsense"], capture_output=True, text=True)
    assert bad.returncode == 2
    assert json.loads(bad.stderr.strip().splitlines()[-1])["error"] == "config"
