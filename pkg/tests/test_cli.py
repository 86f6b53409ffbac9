import csv
import json

import pytest

from hpforest.cli import OUT_ENV, main, read_config_file
from hpforest.errors import ConfigError
from hpforest.panel_data import write_panel
from hpforest.synthetic import simulate_panel


@pytest.fixture(scope="module")
def tiny_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "panel.csv"
    write_panel(simulate_panel(seed=1, countries=("AUS", "BEL", "CAN"), start_year=2000, end_year=2019), path)
    return path


@pytest.fixture(scope="module")
def full_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "panel13.csv"
    write_panel(simulate_panel(seed=1), path)
    return path


def run(*args):
    return main([str(a) for a in args])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_missing_data_is_config_error(tmp_path, capsys):
    assert run("stats", "--data", tmp_path / "nope.csv", "--out", tmp_path) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_values_are_config_errors(tiny_csv, tmp_path):
    assert run("grid", "--data", tiny_csv, "--out", tmp_path, "--mode", "sideways") == 2
    assert run("grid", "--data", tiny_csv, "--out", tmp_path, "--leaf-caps", "five") == 2
    assert run("stats", "--data", tiny_csv, "--out", tmp_path, "--format", "xml") == 2


def test_malformed_panel_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("country,year,hp_growth\nAUS,2000,abc\n")
    assert run("stats", "--data", bad, "--out", tmp_path) == 3
    assert "line" in capsys.readouterr().err


def test_unknown_config_key(tiny_csv, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("colour = blue\n")
    assert run("stats", "--data", tiny_csv, "--out", tmp_path, "--config", cfg) == 2
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.ini")


def test_stats_outputs(tiny_csv, tmp_path):
    assert run("stats", "--data", tiny_csv, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "summary_stats.csv")
    target = [r for r in rows if r[0] == "target"][0]
    assert target[-1] == str(3 * 19)
    assert len(read_csv(tmp_path / "kde.csv")) == 1 + 512
    assert (tmp_path / "resolved_config.ini").exists()


def test_default_grid_has_24_rows(tiny_csv, tmp_path):
    assert run("grid", "--data", tiny_csv, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "grid_insample.csv")
    assert len(rows) == 1 + 24
    assert {(r[0], r[1]) for r in rows[1:]} == {(str(L), str(t)) for L in (5, 10, 15, 20, 25, 30)
                                                for t in (50, 100, 200, 500)}
    assert (tmp_path / "ols_benchmarks.txt").exists()


def test_single_cell_grid_and_rerun_is_byte_identical(tiny_csv, tmp_path):
    args = ("grid", "--data", tiny_csv, "--leaf-caps", "10", "--tree-counts", "30", "--mode", "holdout",
            "--train-end-year", "2013", "--test-years", "2014-2018")
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--jobs", "2") == 0
    a = (tmp_path / "a" / "grid_holdout.csv").read_bytes()
    assert len(a.decode().splitlines()) == 2
    assert a == (tmp_path / "b" / "grid_holdout.csv").read_bytes()


def test_resolved_config_reproduces_run(tiny_csv, tmp_path):
    assert run("grid", "--data", tiny_csv, "--out", tmp_path / "a", "--leaf-caps", "5",
               "--tree-counts", "10", "--seed", "9") == 0
    resolved = tmp_path / "a" / "resolved_config.ini"
    text = resolved.read_text()
    assert "seed = 9" in text and "leaf_caps = 5" in text
    assert run("grid", "--config", resolved, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "grid_insample.csv").read_bytes() == (tmp_path / "b" / "grid_insample.csv").read_bytes()


def test_seed_default_written_back(tiny_csv, tmp_path):
    assert run("stats", "--data", tiny_csv, "--out", tmp_path) == 0
    assert "seed = 42" in (tmp_path / "resolved_config.ini").read_text()


def test_flags_override_config_file(tiny_csv, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"data = {tiny_csv}\nseed = 3\n")
    assert run("stats", "--config", cfg, "--seed", "4", "--out", tmp_path / "o") == 0
    assert "seed = 4" in (tmp_path / "o" / "resolved_config.ini").read_text()


def test_output_dir_from_environment(tiny_csv, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env-out"))
    assert run("stats", "--data", tiny_csv) == 0
    assert (tmp_path / "env-out" / "summary_stats.csv").exists()


def test_explain_dummy_mode_and_periods(full_csv, tmp_path):
    assert run("explain", "--data", full_csv, "--out", tmp_path, "--dummy-mode", "--n-trees", "5",
               "--background-size", "40", "--periods", "1988-2019,2011-2019", "--normalize") == 0
    overall = read_csv(tmp_path / "importance.csv")
    assert len(overall) == 1 + 23
    assert sum(float(r[1]) for r in overall[1:]) == pytest.approx(1.0)
    for period in ("1988-2019", "2011-2019"):
        rows = read_csv(tmp_path / f"importance_{period}.csv")
        assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(1.0)


def test_explain_json(tiny_csv, tmp_path):
    assert run("explain", "--data", tiny_csv, "--out", tmp_path, "--n-trees", "5", "--format", "json",
               "--periods", "2000-2018", "--phi-table") == 0
    doc = json.loads((tmp_path / "importance.json").read_text())
    assert set(doc["normalized_by_period"]) == {"2000-2018"}
    assert len(read_csv(tmp_path / "shapley_values.csv")) == 1 + 3 * 19


def test_effects_outputs(tiny_csv, tmp_path):
    assert run("effects", "--data", tiny_csv, "--out", tmp_path, "--n-trees", "5", "--grid-points", "7") == 0
    assert len(read_csv(tmp_path / "curve_cpi.csv")) == 8
    assert len(read_csv(tmp_path / "surface_price_rent_i_short.csv")) == 1 + 49
    assert len(read_csv(tmp_path / "curve_cpi_by_price_rent.csv")) == 1 + 3 * 7


def test_scatter_outputs(full_csv, tmp_path):
    assert run("scatter", "--data", full_csv, "--out", tmp_path, "--n-trees", "10") == 0
    rows = read_csv(tmp_path / "scatter_2019.csv")
    assert len(rows) == 1 + 13
    r2 = dict(read_csv(tmp_path / "scatter_2019_r2.csv")[1:])
    assert set(r2) == {"RF", "OLS"}


def test_tree_dump(tiny_csv, tmp_path):
    assert run("tree-dump", "--data", tiny_csv, "--out", tmp_path, "--n-trees", "5", "--tree-index", "2",
               "--max-depth", "2") == 0
    lines = (tmp_path / "tree_2.txt").read_text().splitlines()
    root = json.loads((tmp_path / "tree_2.json").read_text())["root"]
    assert lines[0] == f"{root['feature_name']} <= {root['threshold']:.6g} n={root['n']}"
    # depth 2 caps the dump at root, two children, four stubs
    assert 3 <= len(lines) <= 7
    assert all(line.startswith("  ") for line in lines[1:])
    assert run("tree-dump", "--data", tiny_csv, "--out", tmp_path, "--n-trees", "5", "--tree-index", "5") == 2


def test_simulate(tmp_path):
    assert run("simulate", "--out", tmp_path, "--countries", "2", "--start-year", "2010") == 0
    rows = read_csv(tmp_path / "synthetic_panel.csv")
    assert len(rows) == 1 + 2 * 10
