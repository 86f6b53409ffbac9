"""Command-line entry point: ``hpforest <command> [options]``.

Settings resolve in the order built-in defaults < ``--config`` file < flags.
The config file holds ``key = value`` lines (an optional ``[hpforest]``
section header is accepted). Every run writes ``resolved_config.ini`` next to
its outputs; feeding that file back reproduces the run byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, cart, effects, evalgrid, explain, forest, panel_data, synthetic
from .errors import ConfigError, DataError

log = logging.getLogger("hpforest")

OUT_ENV = "HPFOREST_OUTPUT_DIR"
EXIT_CONFIG = 2
EXIT_DATA = 3


def _ints(text):
    return [int(t) for t in str(text).replace(" ", "").split(",") if t]


def _names(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _opt_int(text):
    return None if str(text).lower() in ("", "none", "auto") else int(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _year_ranges(text):
    out = []
    for part in _names(text):
        start, _, end = part.partition("-")
        out.append((int(start), int(end or start)))
    return out


def _years(text):
    years = []
    for start, end in _year_ranges(text):
        years.extend(range(start, end + 1))
    return years


# key -> (parser, default, help). Keys are shared across commands where they mean the same thing.
SETTINGS = {
    "data": (str, None, "panel CSV (long format)"),
    "out": (str, None, f"output directory (default ${OUT_ENV} or ./hpforest-output)"),
    "format": (str, "csv", "csv or json"),
    "seed": (int, 42, "master seed"),
    "dummy_mode": (_bool, False, "append one 0/1 indicator per country"),
    "jobs": (int, 1, "parallel workers for tree fitting"),
    "mode": (str, "insample", "insample or holdout"),
    "leaf_caps": (_ints, "5,10,15,20,25,30", "comma-separated leaf caps"),
    "tree_counts": (_ints, "50,100,200,500", "comma-separated tree counts"),
    "leaf_cap": (int, 10, "leaf cap of the benchmark forest"),
    "n_trees": (int, 500, "trees in the benchmark forest"),
    "mtry": (_opt_int, "auto", "features per split (auto = ceil(p/3))"),
    "train_end_year": (int, 2014, "last training year"),
    "test_years": (_years, "2015-2019", "test years, e.g. 2015-2019"),
    "split_on": (str, "predictor", "holdout key: predictor or target year"),
    "periods": (_year_ranges, "1988-2019,2011-2019", "importance periods, e.g. 1988-2019,2011-2019"),
    "background_size": (_opt_int, "none", "Shapley background rows (none = all)"),
    "phi_table": (_bool, False, "also write per-row Shapley values"),
    "normalize": (_bool, False, "scale the overall importances to sum to one"),
    "curves": (_names, "cpi", "features for 1-D partial curves"),
    "surface": (_names, "price_rent,i_short", "feature pair for the 2-D surface ('' to skip)"),
    "family": (str, "price_rent", "feature whose quartiles index the curve family ('' to skip)"),
    "grid_points": (int, 50, "points per effect axis"),
    "target_year": (int, 2019, "scatter forecast year"),
    "scatter_train_end": (_opt_int, "none", "last training target year (none = target_year - 1)"),
    "tree_index": (int, 0, "which tree of the benchmark forest to dump"),
    "max_depth": (int, 3, "rendering depth"),
    "bandwidth": (lambda t: None if str(t).lower() in ("", "none", "auto") else float(t), "auto",
                  "KDE bandwidth (auto = Silverman)"),
    "countries": (int, 13, "number of simulated countries"),
    "start_year": (int, 1988, "first simulated year"),
    "end_year": (int, 2019, "last simulated year"),
    "noise_sd": (float, 1.5, "simulation noise"),
}

COMMON = ("out", "seed", "format")
COMMANDS = {
    "stats": ("summary statistics and kernel density", ("data", "dummy_mode", "bandwidth")),
    "grid": ("RMSE/MAE grid for AR(1), OLS and forests",
             ("data", "dummy_mode", "jobs", "mode", "leaf_caps", "tree_counts", "mtry",
              "train_end_year", "test_years", "split_on")),
    "explain": ("Shapley predictor importances",
                ("data", "dummy_mode", "jobs", "leaf_cap", "n_trees", "mtry", "periods",
                 "background_size", "phi_table", "normalize")),
    "effects": ("partial-effect curves and surfaces",
                ("data", "dummy_mode", "jobs", "leaf_cap", "n_trees", "mtry", "curves", "surface",
                 "family", "grid_points")),
    "scatter": ("final-year cross-country forecast scatter",
                ("data", "dummy_mode", "jobs", "leaf_cap", "n_trees", "mtry", "target_year",
                 "scatter_train_end")),
    "tree-dump": ("render one tree of the benchmark forest",
                  ("data", "dummy_mode", "leaf_cap", "n_trees", "mtry", "tree_index", "max_depth")),
    "simulate": ("write a synthetic panel CSV",
                 ("countries", "start_year", "end_year", "noise_sd")),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpforest", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value settings file")
        for key in COMMON + keys:
            _, default, h = SETTINGS[key]
            flag = "--" + key.replace("_", "-")
            if key in ("dummy_mode", "phi_table", "normalize"):
                p.add_argument(flag, dest=key, action="store_const", const="true",
                               default=argparse.SUPPRESS, help=h)
            else:
                p.add_argument(flag, dest=key, default=argparse.SUPPRESS,
                               help=f"{h} [default: {default}]" if default is not None else h)
    return parser


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if not text.lstrip().startswith("["):
        text = "[hpforest]\n" + text
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    out = {}
    for section in cp.sections():
        out.update({k.replace("-", "_"): v for k, v in cp[section].items()})
    return out


def resolve(command: str, args: dict) -> tuple[dict, dict]:
    """Return (typed settings, raw string settings) for ``command``."""
    keys = COMMON + COMMANDS[command][1]
    raw = {k: SETTINGS[k][1] for k in keys}
    if args.get("config"):
        from_file = read_config_file(args["config"])
        unknown = sorted(set(from_file) - set(keys))
        if unknown:
            raise ConfigError(f"unknown setting(s) for {command}: {', '.join(unknown)}")
        raw.update(from_file)
    raw.update({k: v for k, v in args.items() if k in keys})
    if raw.get("out") is None:
        raw["out"] = os.environ.get(OUT_ENV, "hpforest-output")
    if "data" in keys and not raw.get("data"):
        raise ConfigError("--data is required")
    typed = {}
    for k in keys:
        parse = SETTINGS[k][0]
        try:
            typed[k] = parse(raw[k]) if raw[k] is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {k}: {raw[k]!r} ({exc})") from None
    if typed["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if "data" in typed and not Path(typed["data"]).is_file():
        raise ConfigError(f"data file not found: {typed['data']}")
    if "mode" in typed and typed["mode"] not in ("insample", "holdout"):
        raise ConfigError("mode must be insample or holdout")
    return typed, {k: ("none" if raw[k] is None else str(raw[k])) for k in keys}


def write_resolved(out: Path, command: str, raw: dict) -> None:
    lines = ["[hpforest]", f"# command = {command}"]
    lines += [f"{k} = {raw[k]}" for k in sorted(raw) if k != "out"]
    (out / "resolved_config.ini").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _design(cfg):
    panel = panel_data.load_panel(cfg["data"])
    return panel, panel_data.build_design(panel, cfg.get("dummy_mode", False))


def _benchmark_config(cfg):
    return evalgrid.cell_config(cfg["seed"], cfg["leaf_cap"], cfg["n_trees"], cfg.get("mtry"))


# ---------------------------------------------------------------- commands


def cmd_stats(cfg, out: Path):
    panel, design = _design(cfg)
    st = panel_data.summary_stats(design, panel)
    grid, dens = panel_data.kernel_density(design.y, cfg["bandwidth"])
    if cfg["format"] == "json":
        doc = {
            "n_rows": design.n_rows,
            "target": st.target.__dict__, "skewness": st.skewness, "kurtosis": st.kurtosis,
            "variables": {k: v.__dict__ for k, v in st.variables.items()},
            "by_country": {k: v.__dict__ for k, v in st.by_country.items()},
        }
        _write(out, "summary_stats.json", json.dumps(doc, indent=2) + "\n")
    else:
        lines = ["section,label,mean,sd,min,max,n"]
        for row in st.to_rows():
            lines.append(",".join([row[0], row[1]] + [repr(float(v)) for v in row[2:6]] + [str(row[6])]))
        lines.append(f"moment,skewness,{'NA' if st.skewness is None else repr(st.skewness)},,,,")
        lines.append(f"moment,kurtosis,{'NA' if st.kurtosis is None else repr(st.kurtosis)},,,,")
        _write(out, "summary_stats.csv", "\n".join(lines) + "\n")
    _write(out, "kde.csv", "x,density\n" + "".join(f"{g!r},{d!r}\n" for g, d in zip(grid.tolist(), dens.tolist())))


def cmd_grid(cfg, out: Path):
    _, design = _design(cfg)
    common = dict(leaf_caps=cfg["leaf_caps"], tree_counts=cfg["tree_counts"], seed=cfg["seed"],
                  mtry=cfg["mtry"], n_jobs=cfg["jobs"])
    if cfg["mode"] == "insample":
        report = evalgrid.insample_grid(design, **common)
    else:
        report = evalgrid.holdout_grid(design, cfg["train_end_year"], cfg["test_years"],
                                       split_on=cfg["split_on"], **common)
    stem = f"grid_{cfg['mode']}"
    if cfg["format"] == "json":
        _write(out, stem + ".json", report.to_json())
    else:
        _write(out, stem + ".csv", report.to_csv())
    _write(out, stem + ".txt", report.to_text())
    if cfg["mode"] == "insample":
        fits = {"AR(1)": baselines.fit_ar1(design), "OLS": baselines.fit_ols(design)}
        _write(out, "ols_benchmarks.txt", baselines.ols_table(fits, "text"))
        _write(out, "ols_benchmarks.csv", baselines.ols_table(fits, "csv"))


def cmd_explain(cfg, out: Path):
    _, design = _design(cfg)
    model = forest.fit_forest(design, _benchmark_config(cfg), n_jobs=cfg["jobs"])
    bg = explain.background_sample(design, cfg["background_size"], cfg["seed"])
    table = explain.shapley_values(model, design, bg)
    overall = explain.report_from_phi(table.phi, model.feature_names, cfg["normalize"], "all", design.n_rows)
    periods = explain.importance_by_period(model, design, cfg["periods"], table=table)
    if cfg["format"] == "json":
        doc = {"importance": overall.as_dict(), "normalized": overall.normalized,
               "normalized_by_period": {r.period: r.as_dict() for r in periods},
               "base_value": table.base_value}
        _write(out, "importance.json", json.dumps(doc, indent=2) + "\n")
    else:
        _write(out, "importance.csv", explain.importance_csv([overall]))
        for r in periods:
            _write(out, f"importance_{r.period}.csv", explain.importance_csv([r]))
    if cfg["phi_table"]:
        _write(out, "shapley_values.csv", table.to_csv())


def cmd_effects(cfg, out: Path):
    _, design = _design(cfg)
    model = forest.fit_forest(design, _benchmark_config(cfg), n_jobs=cfg["jobs"])
    n = cfg["grid_points"]
    for name in cfg["curves"]:
        curve = effects.partial_curve(model, name, effects.default_grid(model, name, n))
        _write(out, f"curve_{name}.csv", curve.to_csv())
        fam = cfg["family"]
        if fam and fam != name:
            j = design.feature_index(fam)
            levels = np.percentile(design.X[:, j], [25, 50, 75])
            family = effects.curve_family(model, name, fam, levels, effects.default_grid(model, name, n))
            lines = [f"{fam},{name},response"]
            for level, c in family.items():
                lines += [f"{level!r},{g!r},{r!r}" for g, r in zip(c.grids[0].tolist(), c.responses.tolist())]
            _write(out, f"curve_{name}_by_{fam}.csv", "\n".join(lines) + "\n")
    if cfg["surface"]:
        if len(cfg["surface"]) != 2:
            raise ConfigError("surface needs exactly two features")
        a, b = cfg["surface"]
        surf = effects.partial_surface(model, a, b, effects.default_grid(model, a, n),
                                       effects.default_grid(model, b, n))
        _write(out, f"surface_{a}_{b}.csv", surf.to_csv())


def cmd_scatter(cfg, out: Path):
    _, design = _design(cfg)
    res = evalgrid.final_year_scatter(design, cfg["scatter_train_end"], cfg["target_year"],
                                      cfg["leaf_cap"], cfg["n_trees"], cfg["seed"], cfg["mtry"],
                                      n_jobs=cfg["jobs"])
    _write(out, f"scatter_{res.target_year}.csv", res.to_csv())

    def r2(v):
        return "NA" if v is None else repr(v)

    _write(out, f"scatter_{res.target_year}_r2.csv", f"model,r2\nRF,{r2(res.rf_r2)}\nOLS,{r2(res.ols_r2)}\n")


def cmd_tree_dump(cfg, out: Path):
    _, design = _design(cfg)
    fc = _benchmark_config(cfg)
    if not 0 <= cfg["tree_index"] < fc.n_trees:
        raise ConfigError(f"tree_index must lie in [0, {fc.n_trees})")
    tree = forest.fit_tree_at(design.X, design.y, fc, cfg["tree_index"], design.feature_names)
    _write(out, f"tree_{cfg['tree_index']}.txt", cart.render_tree(tree, cfg["max_depth"]) + "\n")
    _write(out, f"tree_{cfg['tree_index']}.json", json.dumps(tree.to_dict(), indent=1) + "\n")


def cmd_simulate(cfg, out: Path):
    codes = panel_data.DEFAULT_COUNTRIES[: cfg["countries"]] if cfg["countries"] <= 13 else \
        tuple(f"C{i:02d}" for i in range(cfg["countries"]))
    panel = synthetic.simulate_panel(cfg["seed"], codes, cfg["start_year"], cfg["end_year"], cfg["noise_sd"])
    path = out / "synthetic_panel.csv"
    panel_data.write_panel(panel, path)
    log.info("wrote %s", path)


HANDLERS = {
    "stats": cmd_stats, "grid": cmd_grid, "explain": cmd_explain, "effects": cmd_effects,
    "scatter": cmd_scatter, "tree-dump": cmd_tree_dump, "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.pop("verbose") else logging.WARNING,
                        format="%(levelname)s %(message)s")
    command = args.pop("command")
    try:
        cfg, raw = resolve(command, args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[command](cfg, out)
        write_resolved(out, command, raw)
    except (ConfigError, KeyError) as exc:
        print(f"hpforest: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"hpforest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
