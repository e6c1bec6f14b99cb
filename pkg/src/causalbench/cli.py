"""Command-line interface: simulate / run / aggregate / report / list-algorithms.

Configuration is a single JSON file; results live in an output directory
containing the append-only store, the manifest, dataset exports, and
report tables/charts. Exit codes: 0 success, 1 usage or configuration
error, 2 partial sweep failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .algorithms import get_algorithm, registry_description
from .charts import grouped_bar_chart, table_chart, violin_chart
from .errors import CausalBenchError, ConfigError
from .harness import (
    STRATEGIES,
    ExperimentSetting,
    ResultStore,
    materialize_dataset,
    recommend,
    robustness_gaps,
    run_sweep,
    select_strategies,
    winning_percentages,
)
from .sem import save_dataset

_CONFIG_KEYS = {
    "out_dir",
    "workers",
    "standardize",
    "include_defaults",
    "paper_grids",
    "algorithms",
    "grids",
    "settings",
}

_SETTING_KEYS = {
    "graph_p",
    "graph_d",
    "graph_type",
    "data_n",
    "data_sem",
    "dataset_ref",
    "data_path",
    "truth_path",
    "seeds",
}


@dataclass
class RunConfig:
    settings: list
    algorithms: list
    grids: dict | None = None
    include_defaults: bool = True
    workers: int = 1
    standardize: bool = False
    out_dir: str = "causalbench-results"
    paper_grids: bool = True

    def to_dict(self) -> dict:
        out = {
            "out_dir": self.out_dir,
            "workers": self.workers,
            "standardize": self.standardize,
            "include_defaults": self.include_defaults,
            "paper_grids": self.paper_grids,
            "algorithms": list(self.algorithms),
            "settings": [],
        }
        if self.grids is not None:
            out["grids"] = self.grids
        for s in self.settings:
            if s.is_simulated:
                entry = {
                    "graph_p": s.graph_p,
                    "graph_d": s.graph_d,
                    "graph_type": s.graph_type,
                    "data_n": s.data_n,
                    "data_sem": s.data_sem,
                }
            else:
                entry = {"dataset_ref": s.dataset_ref, "data_path": s.data_path}
                if s.truth_path:
                    entry["truth_path"] = s.truth_path
            entry["seeds"] = list(s.seeds)
            out["settings"].append(entry)
        return out

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def grid_definitions(self) -> dict:
        defs = {}
        for name in self.algorithms:
            space = get_algorithm(name).space
            if self.grids and name in self.grids:
                defs[name] = [space.validate(a) for a in self.grids[name]]
            else:
                defs[name] = space.grid_assignments()
        return defs


def parse_config(data: dict) -> RunConfig:
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "settings" not in data or not data["settings"]:
        raise ConfigError("config needs a nonempty 'settings' list")
    if "algorithms" not in data or not data["algorithms"]:
        raise ConfigError("config needs a nonempty 'algorithms' list")
    for name in data["algorithms"]:
        get_algorithm(name)  # raises ConfigError for unknown names
    grids = data.get("grids")
    if grids is not None:
        for name in grids:
            get_algorithm(name)
        if data.get("paper_grids"):
            raise ConfigError("'grids' and 'paper_grids: true' are mutually exclusive")
    settings = []
    for i, entry in enumerate(data["settings"]):
        unknown = set(entry) - _SETTING_KEYS
        if unknown:
            raise ConfigError(f"settings[{i}]: unknown keys {sorted(unknown)}")
        kwargs = dict(entry)
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(kwargs["seeds"])
        settings.append(ExperimentSetting(**kwargs))
    return RunConfig(
        settings=settings,
        algorithms=list(data["algorithms"]),
        grids=grids,
        include_defaults=bool(data.get("include_defaults", True)),
        workers=int(data.get("workers", 1)),
        standardize=bool(data.get("standardize", False)),
        out_dir=str(data.get("out_dir", "causalbench-results")),
        paper_grids=bool(data.get("paper_grids", grids is None)),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)


# -- subcommands ---------------------------------------------------------------------


def cmd_simulate(config: RunConfig, out_dir: Path) -> int:
    from .harness import seed_offset

    dataset_dir = out_dir / "datasets"
    offset = seed_offset()
    written = 0
    for setting in config.settings:
        if not setting.is_simulated:
            continue
        for seed in setting.seeds:
            seed += offset
            ds = materialize_dataset(setting, seed, config.standardize)
            base = dataset_dir / setting.key
            save_dataset(ds, base / f"seed{seed}.csv", base / f"seed{seed}_truth.txt")
            written += 1
    manifest = {
        "config_hash": config.config_hash,
        "datasets_written": written,
        "standardized": config.standardize,
    }
    dataset_dir.mkdir(parents=True, exist_ok=True)
    (dataset_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {written} dataset pairs under {dataset_dir}")
    return 0


def cmd_run(config: RunConfig, out_dir: Path, workers: int | None) -> int:
    store = ResultStore(out_dir)
    store.write_manifest(config.config_hash, config.grid_definitions())
    records = run_sweep(
        config.settings,
        config.algorithms,
        store=store,
        grids=config.grids,
        include_defaults=config.include_defaults,
        workers=workers or config.workers,
        standardize_data=config.standardize,
    )
    failures = sum(1 for r in records if r.status == "error")
    print(f"{len(records)} records in store ({failures} failures)")
    return 2 if failures else 0


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _aggregate(config: RunConfig, out_dir: Path):
    store = ResultStore(out_dir)
    records = store.load(config.settings)
    if not records:
        raise ConfigError(f"no results found in {store.csv_path}; run the sweep first")
    grid_defs = config.grid_definitions()
    return select_strategies(records, grids=grid_defs)


def cmd_aggregate(config: RunConfig, out_dir: Path) -> int:
    report = _aggregate(config, out_dir)
    rows = [
        (
            c.setting.key,
            c.algorithm,
            c.strategy,
            f"{c.mean_shd:.6g}",
            f"{c.se_shd:.6g}",
            c.assignment_id,
            json.dumps(c.params, sort_keys=True),
        )
        for c in sorted(
            report.cells, key=lambda c: (c.setting.key, c.algorithm, c.strategy)
        )
    ]
    path = out_dir / "strategy_report.csv"
    _write_csv(
        path,
        ["setting", "algorithm", "strategy", "mean_shd", "se_shd", "assignment_id", "params"],
        rows,
    )
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def _report_strategy_bars(report, report_dir: Path):
    strategies = list(STRATEGIES)
    for setting in report.settings():
        groups = []
        for algo in report.algorithms():
            bars = {}
            for strategy in strategies:
                try:
                    cell = report.lookup(setting.key, algo, strategy)
                except KeyError:
                    continue
                bars[strategy] = (cell.mean_shd, cell.se_shd)
            if bars:
                groups.append((algo, bars))
        svg = grouped_bar_chart(groups, strategies, title=setting.key)
        (report_dir / f"strategy_bars_{setting.key}.svg").write_text(svg)
    rows = [
        (c.setting.key, c.algorithm, c.strategy, f"{c.mean_shd:.6g}", f"{c.se_shd:.6g}")
        for c in sorted(report.cells, key=lambda c: (c.setting.key, c.algorithm, c.strategy))
    ]
    _write_csv(
        report_dir / "strategy_bars.csv",
        ["setting", "algorithm", "strategy", "mean_shd", "se_shd"],
        rows,
    )


def _report_distributions(records, report_dir: Path):
    from collections import defaultdict

    means: dict = defaultdict(list)
    cell: dict = defaultdict(list)
    for r in records:
        if r.status == "ok" and r.shd is not None:
            cell[(r.algorithm, r.setting.key, r.assignment_id)].append(r.shd)
    for (algo, skey, aid), values in cell.items():
        means[algo].append(sum(values) / len(values))
    groups = [(algo, sorted(means[algo])) for algo in sorted(means)]
    (report_dir / "distributions.svg").write_text(
        violin_chart(groups, title="SHD across hyperparameter assignments")
    )
    rows = []
    for (algo, skey, aid), values in sorted(cell.items()):
        rows.append((algo, skey, aid, f"{sum(values) / len(values):.6g}"))
    _write_csv(
        report_dir / "distributions.csv",
        ["algorithm", "setting", "assignment_id", "mean_shd"],
        rows,
    )


def _report_winners(report, report_dir: Path, group_by, strategy):
    wins = winning_percentages(report, group_by, strategy)
    rows = []
    groups = []
    for group, percents in sorted(wins.items()):
        label = ",".join(f"{dim}={val}" for dim, val in group)
        groups.append((label, {a: (pct, 0.0) for a, pct in percents.items()}))
        for algo, pct in sorted(percents.items()):
            rows.append((label, algo, f"{pct:.6g}"))
    _write_csv(report_dir / "winners.csv", ["group", "algorithm", "win_percent"], rows)
    svg = grouped_bar_chart(
        groups,
        report.algorithms(),
        title=f"winning percentage ({strategy})",
        y_label="win %",
    )
    (report_dir / "winners.svg").write_text(svg)


def _report_gaps(report, report_dir: Path):
    gaps = robustness_gaps(report)
    rows = []
    for (skey, algo), entry in sorted(gaps.items()):
        for fixed in ("default", "sim_mean"):
            rows.append(
                (
                    skey,
                    algo,
                    fixed,
                    f"{entry[fixed]['fixed_minus_best']:.6g}",
                    f"{entry[fixed]['worst_minus_fixed']:.6g}",
                )
            )
    _write_csv(
        report_dir / "gaps.csv",
        ["setting", "algorithm", "fixed_strategy", "fixed_minus_best", "worst_minus_fixed"],
        rows,
    )
    from collections import defaultdict

    agg: dict = defaultdict(lambda: [0.0, 0.0, 0])
    for (skey, algo), entry in gaps.items():
        agg[algo][0] += entry["sim_mean"]["fixed_minus_best"]
        agg[algo][1] += entry["sim_mean"]["worst_minus_fixed"]
        agg[algo][2] += 1
    groups = [
        (
            algo,
            {
                "fixed-best": (vals[0] / vals[2], 0.0),
                "worst-fixed": (vals[1] / vals[2], 0.0),
            },
        )
        for algo, vals in sorted(agg.items())
    ]
    svg = grouped_bar_chart(
        groups,
        ["fixed-best", "worst-fixed"],
        title="cost of leaving the hyperparameter oracle (sim_mean as fixed)",
        y_label="SHD gap",
    )
    (report_dir / "gaps.svg").write_text(svg)


def _report_recommend(report, report_dir: Path, strategy):
    matrix = recommend(report, strategy)
    rows_csv = []
    rows_svg = [("regime", "ranked algorithms")]
    for group, ranked in sorted(matrix.items()):
        label = ",".join(f"{dim}={val}" for dim, val in group)
        ranking = " > ".join(f"{algo} ({pct:.0f}%)" for algo, pct in ranked)
        rows_csv.append((label, ranking))
        rows_svg.append((label, ranking))
    _write_csv(report_dir / "recommend.csv", ["regime", "ranking"], rows_csv)
    (report_dir / "recommend.svg").write_text(
        table_chart(rows_svg, title=f"recommended algorithms ({strategy})")
    )


def cmd_report(config: RunConfig, out_dir: Path, kind: str, group_by, strategy: str) -> int:
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    report_dir = out_dir / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    if kind == "distributions":
        store = ResultStore(out_dir)
        records = store.load(config.settings)
        if not records:
            raise ConfigError("no results to report on")
        _report_distributions(records, report_dir)
    else:
        report = _aggregate(config, out_dir)
        if kind == "strategy-bars":
            _report_strategy_bars(report, report_dir)
        elif kind == "winners":
            _report_winners(report, report_dir, group_by, strategy)
        elif kind == "gaps":
            _report_gaps(report, report_dir)
        elif kind == "recommend":
            _report_recommend(report, report_dir, strategy)
        else:
            raise ConfigError(f"unknown report kind {kind!r}")
    print(f"reports written under {report_dir}")
    return 0


def cmd_list_algorithms(as_json: bool) -> int:
    description = registry_description()
    if as_json:
        print(json.dumps(description, indent=2, sort_keys=True))
        return 0
    for entry in description:
        print(entry["algorithm"])
        for hp in entry["hyperparameters"]:
            star = f" sim_mean={hp['sim_mean']}"
            print(
                f"  {hp['name']} ({hp['kind']}, {hp['stage']}): grid={hp['grid']}"
                f" default={hp['default']}{star}"
            )
        if entry["fixed"]:
            print(f"  fixed: {entry['fixed']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalbench",
        description="Structure-learning benchmark sweeps and hyperparameter analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "run", "aggregate", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        if name == "run":
            p.add_argument("--workers", type=int, default=None)
        if name == "report":
            p.add_argument(
                "--kind",
                required=True,
                choices=["strategy-bars", "distributions", "winners", "gaps", "recommend"],
            )
            p.add_argument(
                "--group-by",
                default="graph_p,data_sem",
                help="comma-separated setting dimensions",
            )
            p.add_argument("--strategy", default="best", choices=list(STRATEGIES))
    p = sub.add_parser("list-algorithms")
    p.add_argument("--json", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list-algorithms":
            return cmd_list_algorithms(args.json)
        config = load_config(args.config)
        out_dir = Path(args.out) if args.out else Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(config, out_dir)
        if args.command == "run":
            return cmd_run(config, out_dir, args.workers)
        if args.command == "aggregate":
            return cmd_aggregate(config, out_dir)
        if args.command == "report":
            group_by = tuple(d for d in args.group_by.split(",") if d)
            return cmd_report(config, out_dir, args.kind, group_by, args.strategy)
        parser.error(f"unknown command {args.command}")
    except CausalBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
