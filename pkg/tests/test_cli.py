import json

import numpy as np
import pytest

from dnlce import cli, clusters, nlce
from dnlce.config import ConfigError, RunConfig
from dnlce.quantum import InitialStateSpec, ModelSpec

SMALL = {"n_max": 4, "t_max": 0.6, "n_points": 7}


@pytest.fixture(autouse=True)
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.CACHE_ENV, str(tmp_path / "cache"))


def _config(tmp_path, **kw):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**SMALL, **kw}))
    return str(path)


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_nlce_csv_matches_library(tmp_path, square):
    out = tmp_path / "m.csv"
    assert _run("nlce", "--config", _config(tmp_path), "--out", out, "--workers", 1) == 0
    meta, times, cols = cli.read_csv(out)
    assert meta["command"] == "nlce" and meta["code_version"]
    assert meta["config_hash"] == RunConfig.from_dict(SMALL).digest()
    s = nlce.run_site_expansion(ModelSpec.ising(1.0, 1.0), InitialStateSpec(np.pi / 2), "x", 4,
                                np.linspace(0, 0.6, 7), clusters.build_cluster_set(square, 4))
    assert np.array_equal(cols["n=4"], s[4])
    assert np.array_equal(times, np.linspace(0, 0.6, 7))


def test_output_independent_of_workers(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = _config(tmp_path, model="xxz")
    assert _run("nlce", "--config", cfg, "--out", a, "--workers", 1) == 0
    assert _run("nlce", "--config", cfg, "--out", b, "--workers", 2) == 0
    assert a.read_bytes() == b.read_bytes()


def test_unknown_key_is_config_error(tmp_path, capsys):
    assert _run("nlce", "--config", _config(tmp_path, colour="red")) == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == cli.EXIT_CONFIG and "colour" in err["message"]


def test_missing_config_file(tmp_path):
    assert _run("nlce", "--config", tmp_path / "nope.json") == cli.EXIT_CONFIG


def test_resource_error_exit_code(tmp_path):
    assert _run("ed", "--config", _config(tmp_path, tori=["2x2"]), "--set", 'tori=["5x4"]') == cli.EXIT_RESOURCE


def test_bad_cluster_set_file(tmp_path):
    bad = tmp_path / "bad.dnlce"
    bad.write_bytes(b"garbage")
    assert _run("nlce", "--config", _config(tmp_path), "--cluster-set", bad) == cli.EXIT_IO


def test_enumerate_and_reuse(tmp_path, capsys):
    path = tmp_path / "sq5.dnlce"
    assert _run("enumerate", "--lattice", "square", "--n-max", 5, "--out", path) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["free_counts"] == [1, 1, 2, 5, 12]
    out = tmp_path / "m.csv"
    assert _run("nlce", "--config", _config(tmp_path), "--cluster-set", path, "--out", out) == 0
    assert _run("nlce", "--config", _config(tmp_path, n_max=6), "--cluster-set", path) == cli.EXIT_CONFIG


def test_pair_command_and_gnuplot(tmp_path):
    out = tmp_path / "p.csv"
    cfg = _config(tmp_path, r=[2, 0], separations=[[1, 1]])
    assert _run("pair", "--config", cfg, "--out", out, "--gnuplot") == 0
    _, _, cols = cli.read_csv(out)
    assert np.all(cols["r=(2,0) n=2"] == 0)
    assert np.abs(cols["r=(2,0) n=3"][1:]).min() > 0
    assert "plot" in (tmp_path / "p.csv.gp").read_text()


def test_ed_command_reports_wrapped_pair(tmp_path):
    out = tmp_path / "e.csv"
    cfg = _config(tmp_path, observable="pair", r=[3, 0], separations=[[1, 0]], tori=["4x3"], t_max=0.5, n_points=3)
    assert _run("ed", "--config", cfg, "--out", out) == 0
    _, _, cols = cli.read_csv(out)
    assert np.abs(cols["4x3 r=(3,0)"] - cols["4x3 r=(1,0)"]).max() < 1e-12


def test_oracle_command(tmp_path):
    out = tmp_path / "o.csv"
    assert _run("oracle", "--config", _config(tmp_path, h=0.0, lattice="cubic"), "--out", out) == 0
    _, t, cols = cli.read_csv(out)
    assert np.allclose(cols["exact"], np.cos(2 * t) ** 6)
    assert _run("oracle", "--config", _config(tmp_path)) == cli.EXIT_CONFIG


def test_compare_identical_inputs(tmp_path):
    a = tmp_path / "a.csv"
    assert _run("nlce", "--config", _config(tmp_path), "--out", a) == 0
    out = tmp_path / "cmp.csv"
    assert _run("compare", a, a, "--out", out, "--t-compare", 0.3) == 0
    _, _, cols = cli.read_csv(out)
    summary = json.loads((tmp_path / "cmp.json").read_text())
    assert "input0 n=2" in cols
    assert summary["methods"]["input0"]["convergence_time"]["4"]["t_star"] >= 0
    # comparing an input with itself column by column
    _, _, cols_a = cli.read_csv(a)
    same = tmp_path / "same.csv"
    same.write_text(cli.format_csv(cli.series_rows(np.linspace(0, 0.6, 7), {"n=1": cols_a["n=4"], "n=2": cols_a["n=4"]}), {}))
    assert _run("compare", same, "--out", tmp_path / "z.csv") == 0
    _, _, z = cli.read_csv(tmp_path / "z.csv")
    assert np.all(z["input0 n=2"] == 0)


def test_compare_runs_both_methods(tmp_path):
    out = tmp_path / "cmp.csv"
    cfg = _config(tmp_path, tori=["2x2", "3x2"], n_max=5, t_compare=0.2)
    assert _run("compare", "--config", cfg, "--out", out) == 0
    _, _, cols = cli.read_csv(out)
    assert "nlce n=5" in cols and "ed n=5" in cols and "ed n=6" in cols
    summary = json.loads((tmp_path / "cmp.json").read_text())
    assert set(summary["ordering"]) == {"5"}


def test_compare_needs_time(tmp_path):
    assert _run("compare", "--config", _config(tmp_path)) == cli.EXIT_CONFIG


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": "potts"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"theta": 7.0})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"fit_window": [0.05, 0.01]})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"tori": ["1x4"]})
    assert RunConfig.from_dict({"h": 0}).digest() == RunConfig.from_dict({"h": 0.0}).digest()
    assert RunConfig.from_dict({"workers": 3}).digest() == RunConfig().digest()


def test_shipped_configs_validate():
    from pathlib import Path

    paths = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json"))
    assert paths
    for p in paths:
        cfg = RunConfig.load(p)
        assert cfg.digest() == RunConfig.load(p).digest()
