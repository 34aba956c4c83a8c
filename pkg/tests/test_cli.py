import json
import re
import subprocess
import sys

import numpy as np
import pytest

from cdekit import cli
from cdekit.bandwidth import select_bandwidths
from cdekit.estimator import effective_n
from cdekit.model import EstimationConfig, load_dataset


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    rng = np.random.default_rng(2024)
    path = tmp_path_factory.mktemp("d") / "normal.csv"
    z = rng.normal(size=(1000, 2))
    path.write_text("y,x\n" + "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in z) + "\n")
    return path


DECILES = "--grid-count"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_estimate_table_layout(capsys, data_csv):
    code, out, _ = run(capsys, "estimate", "--data", data_csv, "--x", 0, "--bw", 0.5, DECILES, 9)
    assert code == 0
    assert "Polynomial order for Y point estimation      (p=)     2" in out
    assert re.search(r"Bandwidth method\s+fixed", out)
    lines = out.splitlines()
    rows = [l for l in lines if re.match(r"^\d+\s", l)]
    assert [int(r.split()[0]) for r in rows] == list(range(1, 10))
    for r in rows:
        assert all(re.fullmatch(r"-?\d+\.\d{4}", t) for t in r.replace(",", " ").split()[1:3] + r.split()[4:6])
    header = next(l for l in lines if l.startswith("Index"))
    for col in ("Grid", "B.W.", "Eff.n", "Est.", "Error", "C.I."):
        assert col in header
    rule_after = lines.index(rows[4]) + 1
    assert set(lines[rule_after]) == {"-"}


def test_json_round_trip_matches_table(capsys, data_csv):
    _, table, _ = run(capsys, "estimate", "--data", data_csv, "--x", 0, DECILES, 7)
    _, js, _ = run(capsys, "estimate", "--data", data_csv, "--x", 0, DECILES, 7, "--format", "json")
    doc = json.loads(js)
    rebuilt = cli.estimate_summary(doc["metadata"], doc["rows"], doc["metadata"]["alpha"])
    assert rebuilt == table
    assert len(doc["rows"]) == 7 and doc["metadata"]["bw_method"] == "mse-rot"
    assert all(r["ci_lo"] <= r["ci_hi"] for r in doc["rows"])


def test_csv_has_full_precision(capsys, data_csv):
    _, out, _ = run(capsys, "estimate", "--data", data_csv, "--x", 0, "--bw", 0.5, DECILES, 3, "--format", "csv")
    lines = out.splitlines()
    assert lines[0].split(",") == list(cli.ROW_FIELDS)
    assert len(lines) == 4 and len(lines[1].split(",")[4]) > 8


def test_svg_structure(capsys, data_csv, tmp_path):
    svg = tmp_path / "f.svg"
    code, _, _ = run(capsys, "estimate", "--data", data_csv, "--x", 0, "--bw", 0.6, DECILES, 9, "--svg", svg)
    text = svg.read_text()
    assert code == 0 and text.startswith("<svg")
    assert text.count("<polyline") == 1
    assert text.count('class="errorbar"') == 9
    assert text.count('<polygon class="band"') == 1
    pts = re.search(r'class="band" points="([^"]+)"', text).group(1).split()
    band = np.array([[float(v) for v in p.split(",")] for p in pts])
    upper, lower = band[:9], band[9:][::-1]
    bars = re.findall(r'<g class="errorbar"[^>]*><line x1="([\d.]+)" y1="([\d.]+)" x2="[\d.]+" y2="([\d.]+)"', text)
    for (x, lo, hi), u, l in zip(bars, upper, lower):
        assert float(x) == pytest.approx(u[0])
        # screen y grows downward: band top <= bar top, band bottom >= bar bottom
        assert u[1] <= float(hi) + 1e-6 and l[1] >= float(lo) - 1e-6


def test_svg_needs_two_points(capsys, data_csv, tmp_path):
    code, _, err = run(capsys, "estimate", "--data", data_csv, "--x", 0, "--y-grid", 0, "--svg", tmp_path / "s.svg")
    assert code == 2 and "need ≥ 2 grid points for plot" in err


def test_flag_errors(capsys, data_csv):
    code, _, err = run(capsys, "estimate", "--data", data_csv, "--x", 0, "--p", 1, "--mu", 2)
    assert code == 2 and "mu must be ≤ p" in err
    assert run(capsys, "estimate", "--data", data_csv, "--x", "0,1")[0] == 2
    assert run(capsys, "estimate", "--data", data_csv, "--x", 0, "--bw", "wide")[0] == 2
    assert run(capsys, "estimate", "--data", data_csv, "--x", 0, "--y-grid", "1,0")[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["estimate", "--x", "0"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_data_errors(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x\n1,2\nfoo,3\n")
    code, _, err = run(capsys, "estimate", "--data", bad, "--x", 0)
    assert code == 3 and "row 2" in err
    assert run(capsys, "estimate", "--data", tmp_path / "missing.csv", "--x", 0)[0] == 3


def test_all_points_failed_exit_4(capsys, data_csv):
    code, _, err = run(capsys, "estimate", "--data", data_csv, "--x", 0, "--bw", 0.3, "--y-grid", "20,30")
    assert code == 4 and "every grid point" in err


def test_partial_failure_warns_but_succeeds(capsys, data_csv):
    code, out, err = run(capsys, "estimate", "--data", data_csv, "--x", 0, "--bw", 0.4, "--y-grid", "0,20")
    assert code == 0 and "grid point 2" in err and "NA" in out


def test_bandwidth_command(capsys, data_csv):
    code, out, _ = run(capsys, "bandwidth", "--data", data_csv, "--x", 0, DECILES, 9, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and len(doc["rows"]) == 9 and all(r["bw"] > 0 for r in doc["rows"])
    ds = load_dataset(data_csv, "y", ["x"])
    for r in doc["rows"]:
        assert r["eff_n"] == effective_n(ds, r["grid"], [0.0], r["bw"], EstimationConfig().kernel)
    grid = [r["grid"] for r in doc["rows"]]
    ref = select_bandwidths(ds, grid, [0.0], EstimationConfig()).bandwidths
    np.testing.assert_array_equal([r["bw"] for r in doc["rows"]], ref)
    _, out, _ = run(capsys, "bandwidth", "--data", data_csv, "--x", 0, DECILES, 9, "--bw-type", "imse-rot", "--format", "json")
    assert len({r["bw"] for r in json.loads(out)["rows"]}) == 1
    _, table, _ = run(capsys, "bandwidth", "--data", data_csv, "--x", 0, DECILES, 9)
    assert "Index      y_grid      B.W.  Eff.n" in table
    assert run(capsys, "bandwidth", "--data", data_csv, "--x", 0, "--bw", 0.5)[0] == 2


def test_mc_smoke_and_determinism(capsys, tmp_path):
    args = ["mc", "--reps", 4, "--n", 200, "--seed", 7, "--cells", "1:0,0:0.5"]
    code, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert code == 0 and a == b
    lines = a.splitlines()
    assert lines[0].startswith("mu,x,multiplier,estimator,bandwidth,abs_bias,se")
    assert len(lines) == 1 + 4
    code, t, _ = run(capsys, *args, "--format", "table")
    assert code == 0 and "cov.pw" in t
    assert run(capsys, "mc", "--cells", "5:0")[0] == 2


def test_threads_env(capsys, data_csv, monkeypatch):
    monkeypatch.setenv("CDE_THREADS", "3")
    _, threaded, _ = run(capsys, "estimate", "--data", data_csv, "--x", 0, DECILES, 5, "--format", "json")
    monkeypatch.setenv("CDE_THREADS", "1")
    _, serial, _ = run(capsys, "estimate", "--data", data_csv, "--x", 0, DECILES, 5, "--format", "json")
    assert threaded == serial
    monkeypatch.setenv("CDE_THREADS", "many")
    assert run(capsys, "estimate", "--data", data_csv, "--x", 0)[0] == 2


def test_module_entry_point(data_csv, tmp_path):
    out = tmp_path / "o.json"
    proc = subprocess.run(
        [sys.executable, "-m", "cdekit", "estimate", "--data", str(data_csv), "--x", "0",
         "--grid-count", "3", "--format", "json", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["metadata"]["n"] == 1000


def test_cdf_beyond_data(capsys, tmp_path):
    near = np.c_[np.linspace(0.0, 1.0, 30), np.linspace(-0.3, 0.3, 30)]
    far = np.c_[np.linspace(5.0, 6.0, 30), np.linspace(3.0, 4.0, 30)]
    p = tmp_path / "split.csv"
    p.write_text("y,x\n" + "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in np.r_[near, far]) + "\n")
    code, out, _ = run(capsys, "estimate", "--data", p, "--x", 0, "--mu", 0, "--bw", 0.6,
                       "--y-grid", "0.5,5.5", "--format", "json")
    assert code == 0 and json.loads(out)["rows"][1]["estimate"] == pytest.approx(1.0, abs=1e-12)
