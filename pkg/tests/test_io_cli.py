import os

import numpy as np
import pytest

from deconvhet.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from deconvhet.data import Sample
from deconvhet.exceptions import ConfigurationError, MissingColumn, NonNumericCell, TooFewRows
from deconvhet.io import ErrorSpec, RunConfig, load_csv, parse_error_spec, parse_grid, write_sample_csv
from deconvhet.simulation import DgpSpec, generate


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "data.csv"
    write_sample_csv(str(path), generate(DgpSpec("linear", 0, 200, "ordinary", True), 12))
    return path


def test_csv_round_trip(tmp_path):
    s = generate(DgpSpec("linear", 1, 60, "ordinary", True), 1)
    path = tmp_path / "s.csv"
    write_sample_csv(str(path), s)
    back = load_csv(str(path), wrep_col="w_rep")
    for a, b in ((s.y, back.y), (s.w, back.w), (s.w_rep, back.w_rep)):
        np.testing.assert_array_equal(a, b)


def test_load_csv_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("y,w\n1,2\n3,4\n")
    with pytest.raises(TooFewRows):
        load_csv(str(p))
    with pytest.raises(MissingColumn):
        load_csv(str(p), w_col="x")
    p.write_text("y,w\n1,2\n3,4\n5,abc\n1,1\n2,2\n")
    with pytest.raises(NonNumericCell) as info:
        load_csv(str(p))
    assert "3" in str(info.value) and "w" in str(info.value)
    p.write_text("y,w\n1,2\n3,nan\n5,1\n1,1\n2,2\n")
    with pytest.raises(NonNumericCell):
        load_csv(str(p))
    p.write_text("")
    with pytest.raises(TooFewRows):
        load_csv(str(p))
    with pytest.raises(ConfigurationError):
        load_csv(str(tmp_path / "missing.csv"))


def test_load_csv_skips_blank_lines(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("w,y\n1,2\n\n3,4\n5,6\n7,8\n9,10\n")
    s = load_csv(str(p))
    np.testing.assert_array_equal(s.y, [2, 4, 6, 8, 10])


@pytest.mark.parametrize("text, law, var", [
    ("known:laplace:var=0.5", "laplace", 0.5),
    ("known:gaussian:sd=0.5", "gaussian", 0.25),
    ("  unknown ", "unknown", None),
])
def test_parse_error_spec(text, law, var):
    spec = parse_error_spec(text)
    assert spec.law == law and spec.variance == var


@pytest.mark.parametrize("text", ["laplace", "known:cauchy:var=1", "known:laplace:scale=1",
                                  "known:laplace:var=x", "known:laplace:var=-1", "known:gaussian:var=inf"])
def test_parse_error_spec_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_error_spec(text)


def test_error_spec_label_keeps_precision():
    assert str(ErrorSpec("laplace", 1 / 3)) == "known:laplace:var=0.3333333333333333"


def test_parse_grid():
    assert parse_grid("auto") is None
    g = parse_grid("-1:1:41")
    assert len(g) == 41 and g.zero_index() == 20
    for bad in ["-1:1:40", "1:-1:41", "-1:1:3", "a:b:c", "-1:1", "-1:1:5.5"]:
        with pytest.raises(ConfigurationError):
            parse_grid(bad)


def test_run_config_validation():
    err = ErrorSpec("laplace", 0.3)
    RunConfig("d.csv", err)
    for kw in [{"mean": "cubic"}, {"bandwidth": -1.0}, {"bandwidth_c": 0.0}, {"bandwidth_rule": "x"},
               {"B": 0}, {"alphas": ()}, {"alphas": (0.6,)}, {"B": 50, "alphas": (0.01,)}, {"seed": -1}]:
        with pytest.raises(ConfigurationError):
            RunConfig("d.csv", err, **kw)
    with pytest.raises(ConfigurationError):
        RunConfig("d.csv", ErrorSpec("unknown"))


def test_cli_run_known(data_file, tmp_path, capsys):
    out, kv = tmp_path / "r.txt", tmp_path / "r.kv"
    code = main(["run", "--data", str(data_file), "--error", "known:laplace:var=0.3333333333333333",
                 "--bootstrap", "39", "--alpha", "0.05", "--alpha", "0.1", "--seed", "3",
                 "--out", str(out), "--kv-out", str(kv)])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert printed == out.read_text()
    items = dict(line.split("=", 1) for line in kv.read_text().splitlines())
    assert items["n"] == "200" and items["bootstrap"] == "39" and "ks_crit_0.1" in items
    assert items["error"] == "known:laplace:var=0.3333333333333333"


def test_cli_run_deterministic(data_file, tmp_path):
    args = ["run", "--data", str(data_file), "--error", "unknown", "--wrep-col", "w_rep",
            "--bootstrap", "19", "--grid", "-0.3:0.3:11", "--seed", "5"]
    a, b = tmp_path / "a.kv", tmp_path / "b.kv"
    assert main(args + ["--kv-out", str(a)]) == EXIT_OK
    assert main(args + ["--kv-out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("extra", [
    ["--error", "known:laplace"],
    ["--error", "unknown"],
    ["--error", "known:laplace:var=1", "--grid", "0:1:4"],
    ["--error", "known:laplace:var=1", "--y-col", "nope"],
    ["--error", "known:laplace:var=1", "--bootstrap", "10", "--alpha", "0.01"],
    ["--error", "known:laplace:var=1", "--alpha", "0.9"],
    ["--error", "known:laplace:var=1", "--bandwidth", "-2"],
])
def test_cli_config_errors_exit_2_without_output(data_file, tmp_path, extra, capsys):
    out = tmp_path / "never.txt"
    code = main(["run", "--data", str(data_file), "--out", str(out)] + extra)
    assert code == EXIT_CONFIG
    assert not out.exists()
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]


def test_cli_numerical_error_exit_3(tmp_path, capsys):
    p = tmp_path / "flat.csv"
    write_sample_csv(str(p), Sample(np.arange(8.0), np.array([0.0, 0.1] * 4)))
    out = tmp_path / "r.txt"
    code = main(["run", "--data", str(p), "--error", "known:laplace:var=1", "--out", str(out)])
    assert code == EXIT_NUMERIC
    assert "fit" in capsys.readouterr().err
    assert not out.exists()


def test_cli_simulate_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--preset", "smoke", "--reps", "4", "--seed", "2", "--out", str(a), "--quiet"]) == 0
    assert main(["simulate", "--preset", "smoke", "--reps", "4", "--seed", "2", "--workers", "2",
                 "--out", str(b), "--quiet"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0].startswith("model,case,dgp,n,c,alpha")


def test_cli_simulate_rejects_small_b(capsys):
    assert main(["simulate", "--bootstrap", "9", "--alpha", "0.05"]) == EXIT_CONFIG


def test_cli_kernel_dumps(tmp_path, capsys):
    assert main(["kernel", "kft", "--points", "0,0.5,1"]) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines()]
    assert [float(r[1]) for r in rows] == pytest.approx([1.0, 0.97173912530314702, 0.0])
    assert main(["kernel", "cf", "--error", "known:gaussian:var=1", "--range", "-1:1:3"]) == 0
    vals = [float(line.split()[1]) for line in capsys.readouterr().out.splitlines()]
    assert vals == pytest.approx([np.exp(-0.5), 1.0, np.exp(-0.5)])
    out = tmp_path / "k.txt"
    assert main(["kernel", "decon", "--bandwidth", "0.5", "--range", "-40:40:1601", "--out", str(out)]) == 0
    x, y = np.loadtxt(out).T
    assert np.trapezoid(y, x) == pytest.approx(1.0, abs=1e-4)
    assert main(["kernel", "cf", "--error", "unknown"]) == EXIT_CONFIG
    assert main(["kernel", "kft", "--range", "1:0:5"]) == EXIT_CONFIG
