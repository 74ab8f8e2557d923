"""Command-line driver: ``dnlce <subcommand> [--config FILE] [--out FILE] ...``.

Every table is written as CSV with columns ``t,key,value`` below a block of
``#``-prefixed metadata lines. Identical physics settings give byte-identical
files regardless of worker count.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, clusters, edref, nlce
from .config import ConfigError, RunConfig
from .lattice import LatticeSpec
from .quantum import ResourceLimitError

log = logging.getLogger("dnlce")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_RESOURCE, EXIT_IO = 0, 1, 2, 3, 4
CACHE_ENV = "DNLCE_CACHE_DIR"


# --------------------------------------------------------------------------
# tabular output


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def format_csv(rows, meta: dict) -> str:
    """``rows`` is an iterable of (t, key, value)."""
    buf = io.StringIO()
    for k in sorted(meta):
        buf.write(f"# {k}: {json.dumps(meta[k], sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "key", "value"])
    for t, key, val in rows:
        w.writerow([_fmt(t), key, _fmt(val)])
    return buf.getvalue()


def series_rows(times, columns: dict[str, np.ndarray]):
    for key, vals in columns.items():
        for t, v in zip(times, vals):
            yield t, key, v


def read_csv(path) -> tuple[dict, np.ndarray, dict[str, np.ndarray]]:
    """Inverse of :func:`format_csv`: (metadata, times, {key: values})."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition(": ")
                meta[k] = json.loads(v) if v else None
            else:
                body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if header != ["t", "key", "value"]:
        raise ValueError(f"{path}: expected header t,key,value")
    cols: dict[str, list] = {}
    tcols: dict[str, list] = {}
    for row in reader:
        if not row:
            continue
        t, key, val = row
        cols.setdefault(key, []).append(float(val))
        tcols.setdefault(key, []).append(float(t))
    if not cols:
        raise ValueError(f"{path}: no data rows")
    first = next(iter(tcols.values()))
    for key, ts in tcols.items():
        if ts != first:
            raise ValueError(f"{path}: column {key} has a different time grid")
    return meta, np.asarray(first), {k: np.asarray(v) for k, v in cols.items()}


def gnuplot_script(csv_path: str, keys, ylabel: str) -> str:
    lines = ["set datafile separator ','", "set key outside", "set xlabel 't'",
             f"set ylabel '{ylabel}'", "plot \\"]
    plots = [f"  '{csv_path}' using 1:(strcol(2) eq '{k}' ? $3 : 1/0) with lines title '{k}'"
             for k in keys]
    return "\n".join(lines) + "\n" + ", \\\n".join(plots) + "\n"


def _meta(cfg: RunConfig, command: str, **extra) -> dict:
    meta = {"command": command, "code_version": __version__, "config_hash": cfg.digest(),
            "cluster_set_version": clusters.FORMAT_VERSION, "config": cfg.physics_dict()}
    meta.update(extra)
    return meta


def _write(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _emit(cfg: RunConfig, args, command: str, times, columns: dict, ylabel: str, **extra) -> None:
    text = format_csv(series_rows(times, columns), _meta(cfg, command, **extra))
    _write(cfg.out, text)
    if getattr(args, "gnuplot", False):
        if cfg.out in (None, "-"):
            raise ConfigError("--gnuplot needs --out")
        _write(str(cfg.out) + ".gp", gnuplot_script(str(cfg.out), list(columns), ylabel))


# --------------------------------------------------------------------------
# cluster sets


def cache_dir() -> Path:
    base = os.environ.get(CACHE_ENV)
    return Path(base) if base else Path.home() / ".cache" / "dnlce"


def obtain_cluster_set(spec: LatticeSpec, n_max: int, path=None) -> clusters.ClusterSet:
    """Load ``path`` (which must cover ``n_max``), else the cache, else enumerate and cache."""
    if path:
        cs = clusters.load_cluster_set(path, spec)
        if cs.n_max < n_max:
            raise ConfigError(f"cluster set {path} covers {cs.n_max} sites, need {n_max}")
        return cs
    d = cache_dir()
    for cand in sorted(d.glob(f"{spec.name}-n*.dnlce")) if d.is_dir() else []:
        try:
            have = int(cand.stem.split("-n")[-1])
        except ValueError:
            continue
        if have >= n_max:
            return clusters.load_cluster_set(cand, spec)
    cs = clusters.build_cluster_set(spec, n_max)
    try:
        d.mkdir(parents=True, exist_ok=True)
        clusters.save_cluster_set(cs, d / f"{spec.name}-n{n_max}.dnlce")
    except OSError as exc:
        log.warning("could not cache cluster set: %s", exc)
    return cs


def obtain_pair_set(spec: LatticeSpec, r, n_max: int, path=None) -> clusters.PairClusterSet:
    if path:
        ps = clusters.load_pair_set(path, spec)
        if tuple(ps.r) != tuple(r) or ps.n_max < n_max:
            raise ConfigError(f"pair set {path} is for r={ps.r} up to {ps.n_max} sites")
        return ps
    return clusters.enumerate_pair_clusters(spec, r, n_max)


def _workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers is not None else nlce.default_workers()


def _rkey(r) -> str:
    return "r=(" + ",".join(str(int(c)) for c in r) + ")"


# --------------------------------------------------------------------------
# subcommands


def cmd_enumerate(cfg: RunConfig, args) -> None:
    spec = cfg.lattice_spec()
    if cfg.out in (None, "-"):
        raise ConfigError("enumerate needs --out")
    if args.pair:
        r = tuple(int(c) for c in args.pair.split(","))
        ps = clusters.enumerate_pair_clusters(spec, r, cfg.n_max)
        clusters.save_pair_set(ps, cfg.out)
        print(json.dumps({"kind": "pair", "r": list(r), "records": len(ps)}))
        return
    cs = clusters.build_cluster_set(spec, cfg.n_max)
    clusters.save_cluster_set(cs, cfg.out)
    print(json.dumps({"kind": "site", "n_max": cfg.n_max,
                      "free_counts": cs.free_counts().tolist(),
                      "fixed_counts": cs.fixed_counts.tolist()}))


def run_nlce(cfg: RunConfig) -> nlce.OrderSeries:
    spec = cfg.lattice_spec()
    times = cfg.time_grid().t_values
    if cfg.observable == "site":
        cs = obtain_cluster_set(spec, cfg.n_max, cfg.cluster_set)
        return nlce.run_site_expansion(cfg.model_spec(), cfg.initial_state(), cfg.alpha, cfg.n_max,
                                       times, cs, cfg.propagation(), _workers(cfg))
    return run_pair(cfg, tuple(cfg.r))


def run_pair(cfg: RunConfig, r) -> nlce.OrderSeries:
    spec = cfg.lattice_spec()
    times = cfg.time_grid().t_values
    ps = obtain_pair_set(spec, r, cfg.n_max, cfg.cluster_set)
    cs = None
    if cfg.connected and cfg.pair_convention == "subtract_after":
        cs = obtain_cluster_set(spec, cfg.n_max)
    return nlce.run_pair_expansion(cfg.model_spec(), cfg.initial_state(), cfg.alpha, cfg.beta, r,
                                   cfg.connected, cfg.n_max, times, ps, cfg.propagation(),
                                   _workers(cfg), convention=cfg.pair_convention, cluster_set=cs)


def cmd_nlce(cfg: RunConfig, args) -> None:
    if cfg.observable != "site":
        cfg = cfg.replace(observable="site")
    s = run_nlce(cfg)
    _emit(cfg, args, "nlce", s.times, {f"n={n}": v for n, v in s.orders.items()}, s.label)


def cmd_pair(cfg: RunConfig, args) -> None:
    cfg = cfg.replace(observable="pair")
    columns, times, label = {}, None, ""
    seps = cfg.all_separations()
    for r in seps:
        s = run_pair(cfg, r)
        times, label = s.times, s.label
        for n, v in s.orders.items():
            columns[f"n={n}" if len(seps) == 1 else f"{_rkey(r)} n={n}"] = v
    _emit(cfg, args, "pair", times, columns, label)


def run_ed(cfg: RunConfig) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    times = cfg.time_grid().t_values
    prop = cfg.propagation(dense_cap=cfg.ed_dense_cap)
    model, init = cfg.model_spec(), cfg.initial_state()
    seps = cfg.all_separations() if cfg.observable == "pair" else [None]
    columns = {}
    for torus in cfg.torus_specs():
        states = edref.torus_states(model, init, torus, times, prop)
        for r in seps:
            key = torus.name if len(seps) == 1 else f"{torus.name} {_rkey(r)}"
            columns[key] = edref.observe(states, torus, cfg.observable_spec(r))
    return times, columns


def cmd_ed(cfg: RunConfig, args) -> None:
    times, columns = run_ed(cfg)
    _emit(cfg, args, "ed", times, columns, cfg.observable)


def cmd_oracle(cfg: RunConfig, args) -> None:
    if cfg.model != "ising" or cfg.h != 0:
        raise ConfigError("the exact oracle needs model=ising with h=0")
    times = cfg.time_grid().t_values
    vals = analysis.ising_h0_exact(cfg.lattice_spec(), cfg.theta, cfg.J, times, cfg.alpha, cfg.phi)
    _emit(cfg, args, "oracle", times, {"exact": vals}, f"<sigma^{cfg.alpha}>")


def _size_of(key: str) -> int:
    return int(np.prod([int(p) for p in key.split()[0].split("x")]))


def _series_from_columns(times, columns: dict):
    """Turn CSV columns into an OrderSeries (keys n=k) or an ED size mapping."""
    if all(k.startswith("n=") for k in columns):
        return nlce.OrderSeries(times, {int(k[2:]): v for k, v in columns.items()})
    if all(k[0].isdigit() and "x" in k for k in columns):
        return {_size_of(k): v for k, v in columns.items()}
    raise ConfigError("compare inputs must hold either n=<k> or <L1>x<L2> columns")


def compare_tables(tables: dict[str, analysis.DeltaTable], cfg: RunConfig) -> dict:
    summary = {"epsilon": cfg.epsilon, "t_compare": cfg.t_compare, "methods": {}}
    for name, table in tables.items():
        ct = analysis.convergence_time(table, cfg.epsilon)
        entry = {"convergence_time": {str(n): {"t_star": c.t_star, "converged": c.converged}
                                      for n, c in ct.items()},
                 "interpolated_sizes": list(table.interpolated)}
        if cfg.t_compare is not None:
            entry["delta_at_t_compare"] = {str(n): d for n, d in table.at(cfg.t_compare).items()}
        fits = {}
        for n, vals in table.values.items():
            try:
                f = analysis.leading_power(table.times, vals, tuple(cfg.fit_window))
                fits[str(n)] = {"exponent": f.exponent, "residual": f.residual, "samples": f.n_samples}
            except analysis.FitError as exc:
                fits[str(n)] = {"error": str(exc)}
        entry["leading_power"] = fits
        summary["methods"][name] = entry
    if cfg.t_compare is not None and len(tables) == 2:
        (na, ta), (nb, tb) = tables.items()
        da, db = ta.at(cfg.t_compare), tb.at(cfg.t_compare)
        summary["ordering"] = {str(n): {f"{na}_smaller": bool(da[n] < db[n])}
                               for n in sorted(set(da) & set(db))}
    return summary


def cmd_compare(cfg: RunConfig, args) -> None:
    if cfg.inputs:
        tables, times = {}, None
        for i, path in enumerate(cfg.inputs):
            _, times_i, cols = read_csv(path)
            if times is not None and not np.array_equal(times, times_i):
                raise ConfigError("compare inputs use different time grids")
            times = times_i
            tables[f"input{i}"] = analysis.delta_table(_series_from_columns(times, cols), times)
    else:
        if cfg.t_compare is None:
            raise ConfigError("compare needs t_compare (config key or --t-compare)")
        s = run_nlce(cfg)
        times, ed_cols = run_ed(cfg)
        tables = {"nlce": analysis.delta_table(s),
                  "ed": analysis.delta_table({_size_of(k): v for k, v in ed_cols.items()}, times)}
    columns = {f"{name} n={n}": d for name, tab in tables.items() for n, d in tab.deltas.items()}
    summary = compare_tables(tables, cfg)
    _emit(cfg, args, "compare", times, columns, "Delta_n")
    summary_text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if cfg.out in (None, "-"):
        sys.stderr.write(summary_text)
    else:
        _write(str(Path(cfg.out).with_suffix(".json")), summary_text)


COMMANDS = {"enumerate": cmd_enumerate, "nlce": cmd_nlce, "pair": cmd_pair, "ed": cmd_ed,
            "compare": cmd_compare, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnlce", description="Linked-cluster quench dynamics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
        p.add_argument("--cluster-set", help="cluster-set file to use instead of the cache")
        p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                       help="override one config key, value parsed as JSON")
        p.add_argument("--gnuplot", action="store_true", help="also write OUT.gp")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "enumerate":
            p.add_argument("--lattice")
            p.add_argument("--n-max", type=int)
            p.add_argument("--pair", help="separation like 3,0 for a doubly-rooted set")
        if name == "compare":
            p.add_argument("--t-compare", type=float, help="time at which Delta_n is tabulated")
            p.add_argument("inputs", nargs="*", help="CSV files from earlier nlce/ed runs")
    return parser


def resolve_config(args) -> RunConfig:
    data = {}
    if args.config:
        data = RunConfig.load(args.config).to_dict()
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=JSON, got {item!r}")
        try:
            data[key] = json.loads(raw)
        except json.JSONDecodeError:
            data[key] = raw
    flags = {"out": args.out, "workers": args.workers, "cluster_set": args.cluster_set,
             "lattice": getattr(args, "lattice", None), "n_max": getattr(args, "n_max", None),
             "t_compare": getattr(args, "t_compare", None)}
    data.update({k: v for k, v in flags.items() if v is not None})
    if getattr(args, "inputs", None):
        data["inputs"] = list(args.inputs)
    return RunConfig.from_dict(data)


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (ResourceLimitError, MemoryError, OverflowError) as exc:
        return _fail(EXIT_RESOURCE, exc)
    except (OSError, clusters.ClusterSetError) as exc:
        return _fail(EXIT_IO, exc)
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        return _fail(EXIT_FAILURE, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
