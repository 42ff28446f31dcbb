"""Command-line entry point: ``causal-energy <command> [options]``.

Every command reads a flat JSON run configuration (``--config``) whose keys can
be overridden by flags of the same name, writes its artifacts under
``<out>/<command>/`` together with a ``manifest.json``, and exits with a code
that reflects the error category.  Environment variables are never consulted,
so a manifest is enough to repeat a run exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import shutil
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy

from . import __version__, analysis, kernels
from .data import (
    ColumnMapping,
    Dataset,
    TzRule,
    format_timestamp,
    ingest_load_csv,
    ingest_weather_csv,
    join_hourly,
    parse_timestamp,
    read_canonical_csv,
    write_canonical_csv,
)
from .errors import CausalEnergyError, ConfigError
from .evaluation import cross_validate, mape, train_test_eval
from .priors import DEFAULT_PRIORS, PriorSpec
from .scm import SIM_START, ScmParams, default_params, simulate_dataset
from .solar import SolarTable
from .svi import TrainConfig, load_snapshot, predict_dataset, train

log = logging.getLogger("causal_energy")

EXIT_CODES = {"config": 2, "validation": 3, "data": 3, "numerical": 4, "io": 5, "error": 1}
ANALYSES = ("humidity", "temperature", "radiation", "wind", "backdoor", "variance")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Flat run configuration; every field can also be given as a flag."""

    load_csv: str | None = None
    weather_csv: str | None = None
    column_map: str | None = None
    data_csv: str | None = None
    test_csv: str | None = None
    snapshot: str | None = None
    priors: str | None = None
    params: str | None = None
    solar_table: str | None = None
    out: str = "out"
    seed: int = 0
    steps: int = 5000
    lr: float = 0.01
    particles: int = 1
    batch_size: int | None = None
    backend: str | None = None
    temp_mid: float = 56.0
    humid_threshold: float = 70.0
    wind_cold_threshold: float = 30.0
    wind_hot_threshold: float = 75.0
    active_hours: list[int] = field(default_factory=lambda: list(range(5, 24)))
    tz_std_offset: float = -6.0
    tz_dst_offset: float = -5.0
    tz_dst: str = "us"
    hours: int = 8760
    sim_start: str = format_timestamp(SIM_START)
    demand_noise_sd: float | None = None
    start: str | None = None
    split: str | None = None
    end: str | None = None
    folds: int = 5
    n_samples: int = 100_000
    stratum_threshold: float = 75.0
    threshold_grid: list[float] = field(default_factory=lambda: [60.0, 65.0, 70.0, 75.0, 80.0, 85.0])
    months: list[int] | None = None

    PATH_FIELDS = ("load_csv", "weather_csv", "column_map", "data_csv", "test_csv", "snapshot", "priors", "params",
                   "solar_table")
    TIME_FIELDS = ("sim_start", "start", "split", "end")

    @classmethod
    def from_sources(cls, file_doc: dict | None, overrides: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        problems = [f"unknown config key {k!r}" for k in sorted(file_doc or {}) if k not in known]
        merged = dict(file_doc or {})
        merged.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**{k: v for k, v in merged.items() if k in known})
        problems += cfg.problems()
        if problems:
            raise ConfigError(problems)
        return cfg

    def problems(self) -> list[str]:
        out = []
        for name in self.PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                out.append(f"{name}: path {value!r} does not exist")
        for name in self.TIME_FIELDS:
            value = getattr(self, name)
            if value is not None:
                try:
                    parse_timestamp(str(value))
                except Exception as exc:  # noqa: BLE001 - any parse failure is a config problem
                    out.append(f"{name}: {exc}")
        checks = [
            (isinstance(self.lr, (int, float)) and self.lr > 0, f"lr must be > 0, got {self.lr}"),
            (isinstance(self.steps, int) and self.steps >= 0, f"steps must be an integer >= 0, got {self.steps}"),
            (isinstance(self.particles, int) and self.particles >= 1, f"particles must be >= 1, got {self.particles}"),
            (self.batch_size is None or (isinstance(self.batch_size, int) and self.batch_size >= 1),
             f"batch_size must be >= 1, got {self.batch_size}"),
            (isinstance(self.seed, int) and self.seed >= 0, f"seed must be a non-negative integer, got {self.seed}"),
            (isinstance(self.hours, int) and self.hours >= 1, f"hours must be >= 1, got {self.hours}"),
            (isinstance(self.folds, int) and self.folds >= 2, f"folds must be >= 2, got {self.folds}"),
            (isinstance(self.n_samples, int) and self.n_samples >= 4, f"n_samples must be >= 4, got {self.n_samples}"),
            (self.backend is None or self.backend in kernels.available_backends(),
             f"backend must be one of {kernels.available_backends()}, got {self.backend!r}"),
            (self.tz_dst in ("us", "none"), f"tz_dst must be 'us' or 'none', got {self.tz_dst!r}"),
            (all(isinstance(h, int) and 0 <= h <= 23 for h in self.active_hours),
             f"active_hours must be integers in [0, 23], got {self.active_hours}"),
            (self.months is None or all(isinstance(m, int) and 1 <= m <= 12 for m in self.months),
             f"months must be integers in [1, 12], got {self.months}"),
            (len(self.threshold_grid) > 0, "threshold_grid must not be empty"),
            (self.demand_noise_sd is None or self.demand_noise_sd > 0,
             f"demand_noise_sd must be > 0, got {self.demand_noise_sd}"),
        ]
        out.extend(msg for ok, msg in checks if not ok)
        if self.wind_cold_threshold >= self.wind_hot_threshold:
            out.append("wind_cold_threshold must be below wind_hot_threshold")
        return out

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()

    # derived objects

    def tz(self) -> TzRule:
        return TzRule(self.tz_std_offset, self.tz_dst_offset, self.tz_dst)

    def prior_spec(self) -> PriorSpec:
        return PriorSpec.load(self.priors) if self.priors else DEFAULT_PRIORS

    def model_params(self) -> ScmParams:
        if self.params:
            base = ScmParams.load(self.params)
        else:
            base = default_params() if not self.priors else _params_from(self.prior_spec())
        fixed = dict(
            temp_mid=self.temp_mid,
            humid_temp_threshold=self.humid_threshold,
            wind_cold_threshold=self.wind_cold_threshold,
            wind_hot_threshold=self.wind_hot_threshold,
            active_hours=frozenset(self.active_hours),
        )
        if self.solar_table:
            fixed["solar_table"] = SolarTable.from_json(json.loads(Path(self.solar_table).read_text()))
        if self.demand_noise_sd is not None:
            fixed["demand_noise_sd"] = self.demand_noise_sd
        return replace(base, **fixed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, seed=self.seed, n_particles=self.particles,
                           lr=self.lr)

    def time(self, name: str) -> datetime | None:
        value = getattr(self, name)
        return parse_timestamp(str(value)) if value is not None else None


def _params_from(priors: PriorSpec) -> ScmParams:
    from .scm import params_from_priors

    return params_from_priors(priors)


# ---------------------------------------------------------------------------
# output helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def write_rows(path: Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else (repr(float(row[c])) if isinstance(row[c], (float, np.floating))
                        else row[c]) for c in columns])


class Run:
    """Output directory of one command plus its manifest bookkeeping."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.dir = Path(cfg.out) / command.replace(" ", "/")
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []

    def input(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        self.inputs[str(p)] = _sha256(p)
        return p

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.dir / name

    def finish(self, extra: dict | None = None) -> Path:
        manifest = {
            "command": self.command,
            "config": self.cfg.to_json(),
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {name: _sha256(self.dir / name) for name in sorted(set(self.outputs))},
            "versions": {
                "causal_energy": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "kernel_backend": self.cfg.backend or kernels.active_backend(),
            },
            **(extra or {}),
        }
        out = self.dir / "manifest.json"
        write_json(out, manifest)
        return out


def _load_dataset(run: Run, cfg: RunConfig, path: str | None = None, *, window: tuple[str, str] = ("start", "end")):
    path = path or cfg.data_csv
    if path is None:
        raise ConfigError(["data_csv is required for this command"])
    ds = read_canonical_csv(run.input(path), cfg.tz())
    lo, hi = (cfg.time(w) for w in window)
    if lo is not None or hi is not None:
        ds = Dataset(tuple(r for r in ds if (lo is None or r.timestamp >= lo) and (hi is None or r.timestamp < hi)))
    return ds


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig) -> int:
    missing = [k for k in ("load_csv", "weather_csv") if getattr(cfg, k) is None]
    if missing:
        raise ConfigError([f"{k} is required for ingest" for k in missing])
    run = Run("ingest", cfg)
    mapping = ColumnMapping.load(run.input(cfg.column_map)) if cfg.column_map else ColumnMapping()
    tz = cfg.tz()
    load = ingest_load_csv(run.input(cfg.load_csv), tz, mapping)
    weather = ingest_weather_csv(run.input(cfg.weather_csv), tz, mapping)
    joined = join_hourly(load, weather)
    write_canonical_csv(joined, run.path("dataset.csv"))
    summary = {"records": len(joined), **{k: v for k, v in joined.meta.items() if isinstance(v, (int, float, str))}}
    write_json(run.path("ingest.json"), summary)
    run.finish()
    print(f"joined {len(joined)} hourly records -> {run.dir / 'dataset.csv'}")
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    run = Run("simulate", cfg)
    if cfg.params:
        run.input(cfg.params)
    params = cfg.model_params()
    ds = simulate_dataset(params, cfg.hours, cfg.seed, cfg.time("sim_start"), cfg.tz())
    write_canonical_csv(ds, run.path("simulated.csv"))
    run.path("params.json").write_text(params.dumps())
    run.finish()
    print(f"simulated {len(ds)} records -> {run.dir / 'simulated.csv'}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    run = Run("train", cfg)
    ds = _load_dataset(run, cfg, window=("start", "split"))
    if cfg.priors:
        run.input(cfg.priors)
    report = train(ds, cfg.prior_spec(), cfg.train_config(), cfg.model_params(), backend=cfg.backend)
    report.write(run.path("posterior.json"), run.path("elbo_trace.csv"))
    run.finish({"records": len(ds)})
    final = next((v for v in reversed(report.elbo_trace) if math.isfinite(v)), float("nan"))
    print(f"trained on {len(ds)} records, final ELBO {final:.3f} -> {run.dir / 'posterior.json'}")
    log.info("wall clock %.2fs", report.wall_clock)
    if report.aborted:
        print(f"training aborted: {report.message}", file=sys.stderr)
        return EXIT_CODES["numerical"]
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    run = Run("predict", cfg)
    snap = cfg.snapshot or str(Path(cfg.out) / "train" / "posterior.json")
    if not Path(snap).exists():
        raise ConfigError([f"snapshot: path {snap!r} does not exist; run train first or pass --snapshot"])
    guide, params = load_snapshot(run.input(snap))
    ds = _load_dataset(run, cfg)
    mean, sd = predict_dataset(guide, ds, params)
    actual = ds.columns["demand"]
    rows = [
        {"timestamp": format_timestamp(r.timestamp), "actual_mw": float(a) if math.isfinite(a) else None,
         "predicted_mw": float(m), "predicted_sd": float(s)}
        for r, a, m, s in zip(ds, actual, mean, sd)
    ]
    write_rows(run.path("predictions.csv"), rows, ["timestamp", "actual_mw", "predicted_mw", "predicted_sd"])
    summary = {"records": len(ds)}
    if len(ds) and np.all(np.isfinite(actual)):
        summary["mape"] = mape(mean, actual)
        print(f"MAPE {summary['mape']:.4f}% over {len(ds)} records")
    write_json(run.path("predict.json"), summary)
    run.finish()
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.split is None:
        raise ConfigError(["split is required for evaluate"])
    run = Run("evaluate", cfg)
    ds = _load_dataset(run, cfg)
    report, _ = train_test_eval(ds, cfg.time("split"), cfg.train_config(), priors=cfg.prior_spec(),
                                params=cfg.model_params(), backend=cfg.backend)
    report.write(run.path("eval.json"), run.path("series.csv"))
    run.finish()
    print(f"train MAPE {report.train_mapes[0]:.4f}%  test MAPE {report.mean_mape:.4f}%")
    return 0


def cmd_crossval(cfg: RunConfig) -> int:
    run = Run("crossval", cfg)
    ds = _load_dataset(run, cfg)
    report = cross_validate(ds, cfg.folds, cfg.train_config(), priors=cfg.prior_spec(), params=cfg.model_params(),
                            backend=cfg.backend)
    report.write(run.path("crossval.json"), run.path("series.csv"))
    run.finish()
    folds = ", ".join(f"{m:.3f}" for m in report.fold_mapes)
    print(f"fold MAPEs [{folds}]  mean {report.mean_mape:.4f}%")
    return 0


def _analyze_humidity(run: Run, cfg: RunConfig) -> dict:
    ds = _load_dataset(run, cfg)
    cols = ds.columns
    r, density = analysis.correlation_with_density(cols["rh"], cols["demand"])
    lo, hi = density.interval(0.999)
    grid = np.linspace(lo, hi, 401)
    write_rows(run.path("correlation_density.csv"), [{"rho": float(x), "density": float(density(x))} for x in grid])
    fit = analysis.conditional_humidity_effect(ds, cfg.stratum_threshold, t_mid=cfg.temp_mid)
    best = analysis.grid_search_threshold(ds, cfg.threshold_grid)
    months = cfg.months or sorted(set(cols["month"].tolist()))[:2]
    profiles = [row for m in months for row in analysis.humidity_profiles(ds, m)]
    write_rows(run.path("humidity_profiles.csv"), profiles, ["month", "hour", "bin_lo", "bin_hi", "density"])
    summary = {
        "correlation": density.to_json(),
        "stratum_effect": {"threshold": cfg.stratum_threshold, **fit.to_json()},
        "best_threshold": best,
        "threshold_grid": cfg.threshold_grid,
    }
    print(f"corr(humidity, demand) = {r:.4f}; humidity effect above {cfg.stratum_threshold:g} F = "
          f"{fit['humidity']:.2f} MW (se {fit.se('humidity'):.2f}); best threshold {best:g} F")
    return summary


def _analyze_temperature(run: Run, cfg: RunConfig) -> dict:
    train_ds = _load_dataset(run, cfg)
    test_ds = _load_dataset(run, cfg, cfg.test_csv) if cfg.test_csv else None
    comp = analysis.compare_approaches(train_ds, test_ds, cfg.months, t_mid=cfg.temp_mid)
    write_rows(run.path("approaches.csv"), comp.rows())
    summary = comp.summary()
    dev = summary["mean_deviation"]
    gap = summary["mean_mape_gap"]
    print(f"mean coefficient deviation {dev:.4f}" + (f"; mean MAPE gap {gap:.4f}" if gap is not None else ""))
    return summary


def _analyze_radiation(run: Run, cfg: RunConfig) -> dict:
    ds = _load_dataset(run, cfg)
    regimes = analysis.radiation_regimes(ds)
    rows = [{"regime": k, **b} for k, v in regimes.items() for b in v["bins"]]
    write_rows(run.path("radiation_regimes.csv"), rows)
    summary = {k: {kk: vv for kk, vv in v.items() if kk != "bins"} for k, v in regimes.items()}
    for k, v in summary.items():
        print(f"{k}: n={v['count']} slope={v['slope']}")
    return summary


def _analyze_wind(run: Run, cfg: RunConfig) -> dict:
    ds = _load_dataset(run, cfg)
    regimes = analysis.wind_regimes(ds)
    rows = [{"band": k, **b} for k, v in regimes.items() for b in v["bins"]]
    write_rows(run.path("wind_regimes.csv"), rows)
    summary = {k: {kk: vv for kk, vv in v.items() if kk != "bins"} for k, v in regimes.items()}
    for k, v in summary.items():
        print(f"{k}: n={v['count']} slope={v['slope']}")
    return summary


def _analyze_backdoor(run: Run, cfg: RunConfig) -> dict:
    res = analysis.backdoor_check(analysis.LinearScmInstance(), cfg.n_samples, cfg.seed)
    print(f"regression_coef {res.regression_coef:.6f} (se {res.regression_se:.6f})  do_coef {res.do_coef:.6f}  "
          f"abs_diff {res.abs_diff:.6f}  naive_coef {res.naive_coef:.6f}")
    return res.to_json()


def _analyze_variance(run: Run, cfg: RunConfig) -> dict:
    ds = _load_dataset(run, cfg)
    sv = analysis.seasonal_variance(ds)
    write_rows(run.path("monthly_variance.csv"), sv.rows())
    print(f"summer variance {sv.summer:.1f}  winter variance {sv.winter:.1f}  ratio {sv.ratio:.4f}")
    return sv.summary()


def cmd_analyze(cfg: RunConfig, which: str) -> int:
    run = Run(f"analyze {which}", cfg)
    summary = globals()[f"_analyze_{which}"](run, cfg)
    write_json(run.path("summary.json"), summary)
    run.finish()
    return 0


def cmd_report(cfg: RunConfig) -> int:
    root = Path(cfg.out)
    run = Run("report", cfg)
    combined: dict[str, Any] = {}
    for src in sorted(root.glob("**/*.json")):
        rel = src.relative_to(root)
        if rel.parts[0] == "report" or src.name == "manifest.json":
            continue
        combined["/".join(rel.parts)] = json.loads(src.read_text())
    for src in sorted(root.glob("**/*.csv")):
        rel = src.relative_to(root)
        if rel.parts[0] == "report":
            continue
        name = "__".join(rel.parts)
        shutil.copyfile(src, run.path(name))
        run.inputs[str(src)] = _sha256(src)
    write_json(run.path("report.json"), combined)
    run.finish()
    print(f"collected {len(combined)} summaries and {len(run.outputs) - 1} tables -> {run.dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its keys")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kw: dict[str, Any] = {"dest": f.name, "default": None}
        if f.name in ("active_hours", "months"):
            kw.update(type=int, nargs="+")
        elif f.name == "threshold_grid":
            kw.update(type=float, nargs="+")
        elif f.name in ("seed", "steps", "particles", "batch_size", "hours", "folds", "n_samples"):
            kw["type"] = int
        elif f.name in ("lr", "temp_mid", "humid_threshold", "wind_cold_threshold", "wind_hot_threshold",
                        "tz_std_offset", "tz_dst_offset", "demand_noise_sd", "stratum_threshold"):
            kw["type"] = float
        aliases = [flag]
        if f.name == "particles":
            aliases.append("--n-particles")
        if f.name == "n_samples":
            aliases.append("--n")
        if f.name == "data_csv":
            aliases.append("--data")
        p.add_argument(*aliases, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causal-energy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "join load and weather exports into the canonical hourly CSV",
        "simulate": "sample a synthetic dataset from the generative model",
        "train": "fit the variational posterior",
        "predict": "plug-in demand predictions from a posterior snapshot",
        "evaluate": "train before a split instant and score both sides",
        "crossval": "contiguous k-fold cross-validation",
        "report": "collect analysis outputs into one directory",
    }
    for name, text in helps.items():
        _add_config_flags(sub.add_parser(name, help=text))
    an = sub.add_parser("analyze", help="confounding and regime analyses")
    an_sub = an.add_subparsers(dest="analysis", required=True)
    for name in ANALYSES:
        _add_config_flags(an_sub.add_parser(name))
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_doc = None
    if args.config:
        try:
            file_doc = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError([f"config file {args.config!r} does not exist"]) from None
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config file {args.config!r} is not valid JSON: {exc}"]) from None
        if not isinstance(file_doc, dict):
            raise ConfigError(["config file must hold a JSON object"])
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    return RunConfig.from_sources(file_doc, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.analysis)
        return globals()[f"cmd_{args.command}"](cfg)
    except CausalEnergyError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
