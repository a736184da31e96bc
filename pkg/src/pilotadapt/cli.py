"""Batch command-line front end.

Experiments are described by one YAML file; flags only choose the command,
paths, parallelism and ``--check``. Outputs go to ``--out``, else the
config's ``output_dir``, else ``$PILOTADAPT_OUTPUT_DIR/<run_id>``, else
``./results/<run_id>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import adapt, sim
from .adapt import SearchSpace
from .channel import ScenarioTimeline

OUTPUT_ENV = "PILOTADAPT_OUTPUT_DIR"
MSE_CSV_COLUMNS = ("snr_db", "f_d_hz", "profile", "delta_analytic", "delta_empirical", "delta_empirical_all", "n_samples")
BUILTIN_SCENARIOS = ("terrestrial", "uav")


class ConfigError(Exception):
    """Invalid experiment configuration; the message names file and line."""


class _Config:
    """Top-level mapping of a YAML file with the source line of every key."""

    def __init__(self, path: Path):
        self.path = path
        if not path.is_file():
            raise ConfigError(f"{path}: config file not found")
        text = path.read_text()
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            line = mark.line + 1 if mark is not None else "?"
            raise ConfigError(f"{path}:{line}: {exc.problem or exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}:1: top level must be a mapping")
        self.data = data
        self.lines = {k.value: k.start_mark.line + 1 for k, _ in node.value} if node is not None else {}
        self.used = set()

    def error(self, key, msg) -> ConfigError:
        return ConfigError(f"{self.path}:{self.lines.get(key, 1)}: {key}: {msg}")

    def get(self, key, default=None, convert=None):
        self.used.add(key)
        if key not in self.data:
            return default
        value = self.data[key]
        if convert is None:
            return value
        try:
            return convert(value)
        except (TypeError, ValueError, KeyError) as exc:
            raise self.error(key, exc) from exc

    def require(self, key, convert=None):
        if key not in self.data:
            raise ConfigError(f"{self.path}: missing required key {key!r}")
        return self.get(key, convert=convert)

    def resolve(self, key, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.path.parent / p

    def check_unknown(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise self.error(extra[0], "unknown key")


def _floats(value):
    if isinstance(value, dict):
        start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
        if step <= 0:
            raise ValueError("step must be positive")
        return tuple(float(x) for x in np.arange(start, stop + step / 2, step))
    if isinstance(value, (list, tuple)):
        if not value:
            raise ValueError("list must be non-empty")
        return tuple(float(x) for x in value)
    return (float(value),)


def _ints(value):
    return tuple(int(x) for x in _floats(value))


def _load_codebook(cfg: _Config):
    path = cfg.get("codebook")
    if path in (None, "default"):
        return adapt.default_codebook()
    resolved = cfg.resolve("codebook", path)
    try:
        return adapt.load_codebook(resolved)
    except FileNotFoundError as exc:
        raise cfg.error("codebook", f"codebook file not found: {resolved}") from exc
    except ValueError as exc:
        raise cfg.error("codebook", exc) from exc


def _load_scenario(cfg: _Config) -> ScenarioTimeline:
    ref = cfg.require("scenario")
    if isinstance(ref, str) and ref in BUILTIN_SCENARIOS:
        text = resources.files("pilotadapt").joinpath(f"data/{ref}.yaml").read_text()
        return ScenarioTimeline.from_dict(yaml.safe_load(text), ref)
    if isinstance(ref, dict):
        d = ref
    else:
        path = cfg.resolve("scenario", ref)
        if not path.is_file():
            raise cfg.error("scenario", f"scenario file not found: {path}")
        try:
            d = yaml.safe_load(path.read_text())
        except yaml.MarkedYAMLError as exc:
            raise ConfigError(f"{path}:{exc.problem_mark.line + 1}: {exc.problem}") from exc
    try:
        return ScenarioTimeline.from_dict(d, str(d.get("name", "scenario")))
    except (KeyError, TypeError, ValueError) as exc:
        raise cfg.error("scenario", f"malformed scenario: {exc}") from exc


def _strategy(entry):
    if entry == "adaptive":
        return sim.Strategy.adaptive()
    if entry == "lte":
        return sim.Strategy.lte()
    if isinstance(entry, dict):
        return sim.Strategy.fixed(int(entry["dpt"]), int(entry["dpf"]), float(entry["rho_db"]), entry.get("name"))
    raise ValueError(f"unknown strategy {entry!r}")


def _search_space(value):
    if value is None:
        return SearchSpace()
    kw = {}
    for key, field in (("rho_db", "rho_db"), ("dpf", "df"), ("dpt", "dt")):
        if key in value:
            kw[field] = _ints(value[key]) if key != "rho_db" else _floats(value[key])
    extra = set(value) - {"rho_db", "dpf", "dpt"}
    if extra:
        raise ValueError(f"unknown search_space keys {sorted(extra)}")
    return SearchSpace(**kw)


def _output_dir(cfg: _Config, run_id: str, override) -> Path:
    configured = cfg.get("output_dir")
    if override:
        return Path(override)
    if configured:
        return cfg.resolve("output_dir", configured)
    base = os.environ.get(OUTPUT_ENV)
    return Path(base or "results") / run_id


def _build_run(cfg: _Config, multi_band: bool) -> sim.SimulationRun:
    scenario = _load_scenario(cfg)
    run_id = cfg.get("run_id", "run", str)
    bands = cfg.get("bands_hz", scenario.bands if multi_band else scenario.bands[:1], _floats)
    if multi_band and len(bands) < 2:
        raise cfg.error("bands_hz", "ca-run needs at least two bands")
    if not multi_band and len(bands) != 1:
        raise cfg.error("bands_hz", "adapt-run takes exactly one band; use ca-run")
    strategies = cfg.get("strategies", ["adaptive", "lte"], lambda v: tuple(_strategy(e) for e in v))
    kw = dict(
        scenario=scenario,
        bands=bands,
        mode=cfg.get("mode", "siso", str),
        strategies=strategies,
        snr_db=cfg.get("snr_db", tuple(float(s) for s in range(-3, 34, 3)), _floats),
        trials=cfg.get("trials", 20, int),
        epochs=cfg.get("epochs", 10, int),
        seed=cfg.get("seed", 0, int),
        t_ofdm=cfg.get("t_ofdm", adapt.DEFAULT_T_OFDM, int),
        codebook=_load_codebook(cfg),
        space=cfg.get("search_space", SearchSpace(), _search_space),
        baseline=cfg.get("baseline", "lte", str),
        run_id=run_id,
        n_sinusoids=cfg.get("n_sinusoids", 64, int),
    )
    try:
        return sim.SimulationRun(**kw)
    except ValueError as exc:
        raise ConfigError(f"{cfg.path}: {exc}") from exc


def _echo_config(cfg: _Config, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.path.read_text())


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _write_rates_dat(path: Path, report: sim.ThroughputReport):
    run = report.run
    names = [s.name for s in run.strategies]
    lines = ["# snr_db " + " ".join(f"{n} {n}_ci" for n in names)]
    means = {n: report.mean_rate(n) for n in names}
    cis = {n: report.rate_ci(n) for n in names}
    for qi, snr in enumerate(run.snr_db):
        cols = " ".join(f"{means[n][qi]:.6f} {cis[n][qi]:.6f}" for n in names)
        lines.append(f"{snr:g} {cols}")
    path.write_text("\n".join(lines) + "\n")


def _simulate(args, multi_band: bool) -> int:
    cfg = _Config(Path(args.config))
    run = _build_run(cfg, multi_band)
    out = _output_dir(cfg, run.run_id, args.out)
    cfg.check_unknown()
    _echo_config(cfg, out)
    report = sim.run_ca(run, args.workers) if multi_band else sim.run_closed_loop(run, args.workers)
    _write_csv(out / "results.csv", sim.CSV_COLUMNS, report.csv_rows())
    summary = report.summary()
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    with open(out / "decisions.jsonl", "w") as f:
        for d in report.decisions:
            f.write(json.dumps(d) + "\n")
    _write_rates_dat(out / "rates.dat", report)
    if "gain_vs_lte_pct" in summary:
        print(f"{run.run_id}: gain vs {run.baseline} {summary['gain_vs_lte_pct']:.2f}%")
    print(f"results written to {out}")
    return 0


def cmd_adapt_run(args) -> int:
    return _simulate(args, multi_band=False)


def cmd_ca_run(args) -> int:
    return _simulate(args, multi_band=True)


def _check_settings(value):
    value = value or {}
    if not isinstance(value, dict):
        raise ValueError("expected a mapping")
    extra = set(value) - {"rel_tol", "rel_tol_max_fd_hz", "lower_bound_fd_hz", "lower_bound_snr_db"}
    if extra:
        raise ValueError(f"unknown key {sorted(extra)[0]!r}")

    def optional_floats(key, default):
        v = value.get(key, default)
        return () if v in (None, []) else _floats(v)

    return (
        float(value.get("rel_tol", 0.10)),
        float(value.get("rel_tol_max_fd_hz", 60.0)),
        optional_floats("lower_bound_fd_hz", [500.0]),
        optional_floats("lower_bound_snr_db", [30.0]),
    )


def cmd_mse_validate(args) -> int:
    cfg = _Config(Path(args.config))
    run_id = cfg.get("run_id", "mse-validate", str)
    book = _load_codebook(cfg)
    f_d = cfg.get("f_d_hz", (5.6, 60.0, 500.0), _floats)
    profiles = cfg.get("profiles", (1,), _ints)
    snrs = cfg.get("snr_db", (0.0, 10.0, 20.0, 30.0), _floats)
    for p in profiles:
        if not 1 <= p <= book.m_f:
            raise cfg.error("profiles", f"profile {p} outside 1..{book.m_f}")
    kw = dict(
        L=cfg.get("L", 6, int),
        t_p=cfg.get("t_p", 4, int),
        rho_db=cfg.get("rho_db", -3.0, float),
        n_samples=cfg.get("n_samples", 100_000, int),
        seed=cfg.get("seed", 0, int),
    )
    rel_tol, rel_max_fd, lb_fd, lb_snr = cfg.get("check", _check_settings({}), _check_settings)
    out = _output_dir(cfg, run_id, args.out)
    cfg.check_unknown()
    _echo_config(cfg, out)
    cases = [sim.MseCase(f, p, s) for f in f_d for p in profiles for s in snrs]
    rows = sim.run_mse_validation(cases, codebook=book, **kw)
    _write_csv(
        out / "mse_validation.csv",
        MSE_CSV_COLUMNS,
        [{k: getattr(r, k) for k in MSE_CSV_COLUMNS} for r in rows],
    )
    failures = []
    for r in rows:
        if r.f_d_hz <= rel_max_fd and r.rel_error > rel_tol:
            failures.append(f"f_d={r.f_d_hz:g} l={r.profile} snr={r.snr_db:g}: relative error {r.rel_error:.3f} > {rel_tol}")
        if r.f_d_hz in lb_fd and r.snr_db in lb_snr and r.delta_analytic > r.delta_empirical:
            failures.append(
                f"f_d={r.f_d_hz:g} l={r.profile} snr={r.snr_db:g}: analytic {r.delta_analytic:.4g} "
                f"exceeds empirical {r.delta_empirical:.4g}"
            )
    for r in rows:
        print(
            f"f_d={r.f_d_hz:8g} l={r.profile} snr={r.snr_db:5g}  analytic={r.delta_analytic:.5e}  "
            f"empirical={r.delta_empirical:.5e}  rel={r.rel_error:.3f}"
        )
    print(f"results written to {out}")
    if args.check:
        for f in failures:
            print(f"CHECK FAILED: {f}", file=sys.stderr)
        return 1 if failures else 0
    return 0


def cmd_codebook(args) -> int:
    if args.path:
        path = Path(args.path)
        try:
            book = adapt.load_codebook(path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        book = adapt.default_codebook()
    print(f"codebook {book.name}: M_t={book.m_t} M_f={book.m_f}")
    if args.action == "show":
        for m, f in enumerate(book.doppler_hz, 1):
            print(f"  temporal m={m}: f_d={f:g} Hz")
        for l, p in enumerate(book.pdps, 1):
            print(f"  spectral l={l}: taps={len(p.tap_powers)} tau_rms={p.tau_rms * 1e9:.1f} ns")
        return 0
    problems = book.validate()
    for p in problems:
        print(f"INVALID: {p}", file=sys.stderr)
    if not problems:
        print(f"ok: lag-0 = 1, layout lengths {book.n_lags_f}/{book.n_lags_t}")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilotadapt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment YAML file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel trial workers")
        p.set_defaults(func=func)
        return p

    p = add_run("mse-validate", cmd_mse_validate, "closed-form versus simulated estimation MSE")
    p.add_argument("--check", action="store_true", help="exit non-zero on a tolerance violation")
    add_run("adapt-run", cmd_adapt_run, "single-band closed-loop throughput")
    add_run("ca-run", cmd_ca_run, "multi-band carrier-aggregation throughput")
    p = sub.add_parser("codebook", help="inspect or validate a codebook")
    p.add_argument("action", choices=("show", "validate"))
    p.add_argument("path", nargs="?", help="codebook YAML (default: packaged codebook)")
    p.set_defaults(func=cmd_codebook)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
