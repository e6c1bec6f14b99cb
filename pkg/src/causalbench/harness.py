"""Sweep execution, result persistence, and the selection-strategy analysis.

A sweep runs every (setting, seed, algorithm, hyperparameter assignment)
cell, scores SHD against the ground truth, and appends one ResultRecord
per cell to an append-only CSV store with a JSON manifest. Completed cells
are skipped on rerun. On top of the records sit the four hyperparameter
selection strategies (BEST / WORST / DEFAULT / SIM_MEAN), winning
percentages, robustness gaps, and the per-regime recommendation table.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .algorithms import get_algorithm
from .errors import CausalBenchError, ConfigError
from .graph import random_dag_er, random_dag_sf
from .metrics import shd as shd_metric
from .rng import Rng, derive_seed
from .sem import Dataset, load_dataset, simulate, standardize

STRATEGIES = ("best", "worst", "default", "sim_mean")

CSV_COLUMNS = [
    "graph_p",
    "graph_d",
    "graph_type",
    "data_n",
    "data_sem",
    "dataset_ref",
    "seed",
    "algorithm",
    "assignment_id",
    "params_json",
    "shd",
    "runtime_ms",
    "status",
]


def canonical_params_json(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def assignment_id(algorithm: str, params: dict) -> str:
    blob = json.dumps(
        {"algorithm": algorithm, "params": params}, sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ProgramSpec:
    algorithm: str
    params: dict

    @property
    def assignment_id(self) -> str:
        return assignment_id(self.algorithm, self.params)


@dataclass(frozen=True)
class ExperimentSetting:
    """One simulated data regime, or a reference to an external dataset."""

    graph_p: int | None = None
    graph_d: float | None = None
    graph_type: str | None = None
    data_n: int | None = None
    data_sem: str | None = None
    dataset_ref: str | None = None
    data_path: str | None = None
    truth_path: str | None = None
    seeds: tuple = tuple(range(10))

    def __post_init__(self):
        sim_fields = (self.graph_p, self.graph_d, self.graph_type, self.data_n, self.data_sem)
        if self.dataset_ref is not None:
            if any(v is not None for v in sim_fields):
                raise ConfigError("a setting is either simulated or a dataset_ref, not both")
            if self.data_path is None:
                raise ConfigError(f"dataset_ref {self.dataset_ref!r} needs a data_path")
        else:
            if any(v is None for v in sim_fields):
                raise ConfigError(
                    "simulated settings need graph_p, graph_d, graph_type, data_n, data_sem"
                )
            if self.graph_type not in ("ER", "SF"):
                raise ConfigError(f"graph_type must be ER or SF, got {self.graph_type!r}")
            if self.data_sem not in ("gumbel", "gp"):
                raise ConfigError(f"data_sem must be gumbel or gp, got {self.data_sem!r}")
        if not self.seeds:
            raise ConfigError("settings need at least one seed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def is_simulated(self) -> bool:
        return self.dataset_ref is None

    @property
    def key(self) -> str:
        if self.is_simulated:
            d = f"{self.graph_d:g}"
            return f"{self.graph_type}_p{self.graph_p}_d{d}_{self.data_sem}_n{self.data_n}"
        return f"ref_{self.dataset_ref}"

    def csv_fields(self) -> dict:
        if self.is_simulated:
            return {
                "graph_p": str(self.graph_p),
                "graph_d": f"{self.graph_d:g}",
                "graph_type": self.graph_type,
                "data_n": str(self.data_n),
                "data_sem": self.data_sem,
                "dataset_ref": "",
            }
        return {
            "graph_p": "",
            "graph_d": "",
            "graph_type": "",
            "data_n": "",
            "data_sem": "",
            "dataset_ref": self.dataset_ref,
        }

    def dimension(self, name: str):
        value = getattr(self, name)
        return "" if value is None else value


@dataclass
class ResultRecord:
    setting: ExperimentSetting
    seed: int
    algorithm: str
    params: dict
    shd: float | None
    runtime_ms: int
    status: str = "ok"
    diagnostics: dict = field(default_factory=dict)

    @property
    def assignment_id(self) -> str:
        return assignment_id(self.algorithm, self.params)

    @property
    def cell_key(self):
        return (self.setting.key, self.seed, self.algorithm, self.assignment_id)


def materialize_dataset(setting: ExperimentSetting, seed: int, standardize_data=False) -> Dataset:
    """Simulate (or load) the dataset for one (setting, seed) cell.

    Graph and noise streams are derived from the setting descriptors, so
    any process can regenerate the identical dataset.
    """
    if setting.is_simulated:
        d_key = int(round(setting.graph_d * 1000))
        graph_rng = Rng(derive_seed("graph", setting.graph_type, setting.graph_p, d_key, seed))
        if setting.graph_type == "ER":
            g = random_dag_er(setting.graph_p, setting.graph_d, graph_rng)
        else:
            g = random_dag_sf(setting.graph_p, int(setting.graph_d), graph_rng)
        data_rng = Rng(derive_seed("data", setting.data_sem, setting.data_n, seed))
        ds = simulate(setting.data_sem, g, setting.data_n, data_rng)
    else:
        ds = load_dataset(setting.data_path, setting.truth_path)
    return standardize(ds) if standardize_data else ds


def sweep_assignments(algorithm: str, grid=None, include_default=True) -> list[ProgramSpec]:
    """Grid cross-product plus (when absent from the grid) the paper default."""
    space = get_algorithm(algorithm).space
    assignments = grid if grid is not None else space.grid_assignments()
    programs = [ProgramSpec(algorithm, space.validate(a)) for a in assignments]
    seen = {p.assignment_id for p in programs}
    if include_default:
        default = ProgramSpec(algorithm, space.validate(space.default_assignment()))
        if default.assignment_id not in seen:
            programs.append(default)
    return programs


def _run_cell_group(setting, seed, algorithm, programs, standardize_data):
    """All programs of one algorithm on one dataset; fit stages are shared
    across programs that differ only in post-stage parameters."""
    algo = get_algorithm(algorithm)
    records = []
    try:
        ds = materialize_dataset(setting, seed, standardize_data)
    except CausalBenchError as exc:
        for program in programs:
            records.append(
                ResultRecord(
                    setting, seed, algorithm, program.params, None, 0, "error",
                    {"error": f"dataset: {exc}"},
                )
            )
        return records
    truth = ds.truth
    by_fit: dict = defaultdict(list)
    for program in programs:
        fit_params, post_params = algo.space.split_stages(program.params)
        by_fit[canonical_params_json(fit_params)].append((program, fit_params, post_params))
    for group in by_fit.values():
        _, fit_params, _ = group[0]
        start = time.perf_counter()
        try:
            state = algo.fit(ds, fit_params)
            fit_ms = int((time.perf_counter() - start) * 1000)
        except CausalBenchError as exc:
            for program, _, _ in group:
                records.append(
                    ResultRecord(
                        setting, seed, algorithm, program.params, None,
                        int((time.perf_counter() - start) * 1000), "error", {"error": str(exc)},
                    )
                )
            continue
        for program, _, post_params in group:
            t0 = time.perf_counter()
            try:
                outcome = algo.finalize(ds, state, post_params)
                value = shd_metric(truth, outcome.graph) if truth is not None else None
                status = "ok" if truth is not None else "no_truth"
                diagnostics = outcome.diagnostics
            except CausalBenchError as exc:
                value, status, diagnostics = None, "error", {"error": str(exc)}
            runtime = fit_ms + int((time.perf_counter() - t0) * 1000)
            records.append(
                ResultRecord(
                    setting, seed, algorithm, program.params, value, runtime, status, diagnostics
                )
            )
    return records


class ResultStore:
    """Append-only CSV of result records plus a JSON manifest."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.csv_path = self.directory / "results.csv"
        self.manifest_path = self.directory / "manifest.json"

    def write_manifest(self, config_hash: str, grids: dict):
        manifest = {
            "schema_version": 1,
            "code_version": __version__,
            "config_hash": config_hash,
            "grids": grids,
        }
        self.manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @staticmethod
    def _record_line(record: ResultRecord) -> str:
        fields = record.setting.csv_fields()
        row = [
            fields["graph_p"],
            fields["graph_d"],
            fields["graph_type"],
            fields["data_n"],
            fields["data_sem"],
            fields["dataset_ref"],
            str(record.seed),
            record.algorithm,
            record.assignment_id,
            canonical_params_json(record.params),
            "" if record.shd is None else str(float(record.shd)),
            str(record.runtime_ms),
            record.status,
        ]
        return "\t".join(row)

    def append(self, record: ResultRecord):
        new_file = not self.csv_path.exists()
        with open(self.csv_path, "a") as fh:
            if new_file:
                fh.write("\t".join(CSV_COLUMNS) + "\n")
            fh.write(self._record_line(record) + "\n")

    def load(self, settings=None) -> list[ResultRecord]:
        """Records from disk; settings (when given) resolve dataset_ref rows."""
        by_ref = {}
        for s in settings or []:
            if not s.is_simulated:
                by_ref[s.dataset_ref] = s
        records = []
        if not self.csv_path.exists():
            return records
        with open(self.csv_path) as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header != CSV_COLUMNS:
                raise ConfigError(f"store {self.csv_path} has unexpected columns {header}")
            for line in fh:
                cells = dict(zip(CSV_COLUMNS, line.rstrip("\n").split("\t")))
                if cells["dataset_ref"]:
                    setting = by_ref.get(
                        cells["dataset_ref"],
                        ExperimentSetting(
                            dataset_ref=cells["dataset_ref"], data_path="unknown", seeds=(0,)
                        ),
                    )
                else:
                    setting = ExperimentSetting(
                        graph_p=int(cells["graph_p"]),
                        graph_d=float(cells["graph_d"]),
                        graph_type=cells["graph_type"],
                        data_n=int(cells["data_n"]),
                        data_sem=cells["data_sem"],
                    )
                records.append(
                    ResultRecord(
                        setting=setting,
                        seed=int(cells["seed"]),
                        algorithm=cells["algorithm"],
                        params=json.loads(cells["params_json"]),
                        shd=float(cells["shd"]) if cells["shd"] else None,
                        runtime_ms=int(cells["runtime_ms"]),
                        status=cells["status"],
                    )
                )
        return records

    def existing_keys(self) -> set:
        return {r.cell_key for r in self.load()}


def seed_offset() -> int:
    return int(os.environ.get("CAUSALBENCH_SEED_OFFSET", "0"))


def run_sweep(
    settings,
    algorithms,
    store: ResultStore | None = None,
    grids: dict | None = None,
    include_defaults: bool = True,
    workers: int = 1,
    standardize_data: bool = False,
    progress=None,
) -> list[ResultRecord]:
    """Evaluate every (setting, seed, algorithm, assignment) cell.

    Learner failures become status="error" records rather than aborting.
    Cells already present in the store are not recomputed. Returns every
    record covered by the request (fresh and resumed).
    """
    grids = grids or {}
    programs_by_algo = {
        name: sweep_assignments(name, grids.get(name), include_defaults) for name in algorithms
    }
    done = store.existing_keys() if store is not None else set()
    offset = seed_offset()
    tasks = []
    for setting in settings:
        for seed in setting.seeds:
            for name, programs in programs_by_algo.items():
                pending = [
                    pr
                    for pr in programs
                    if (setting.key, seed + offset, name, pr.assignment_id) not in done
                ]
                if pending:
                    tasks.append((setting, seed + offset, name, pending))
    # records are appended to the store as each cell group finishes, so an
    # interrupted sweep keeps everything already computed and resumes cleanly
    fresh: list[ResultRecord] = []

    def absorb(group_records):
        fresh.extend(group_records)
        if store is not None:
            for record in group_records:
                store.append(record)

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_cell_group, setting, seed, name, pending, standardize_data)
                for setting, seed, name, pending in tasks
            ]
            for future in futures:
                absorb(future.result())
    else:
        for setting, seed, name, pending in tasks:
            absorb(_run_cell_group(setting, seed, name, pending, standardize_data))
            if progress is not None:
                progress(setting, seed, name)
    covered = []
    requested = set()
    for setting in settings:
        for seed in setting.seeds:
            for name, programs in programs_by_algo.items():
                for pr in programs:
                    requested.add((setting.key, seed + offset, name, pr.assignment_id))
    if store is not None:
        covered = [r for r in store.load(settings) if r.cell_key in requested]
    else:
        covered = fresh
    return covered


# -- strategy selection ----------------------------------------------------------


@dataclass(frozen=True)
class StrategyCell:
    setting: ExperimentSetting
    algorithm: str
    strategy: str
    mean_shd: float
    se_shd: float
    assignment_id: str
    params: dict


@dataclass
class StrategyReport:
    cells: list
    failure_counts: dict

    def lookup(self, setting_key: str, algorithm: str, strategy: str) -> StrategyCell:
        for cell in self.cells:
            if (
                cell.setting.key == setting_key
                and cell.algorithm == algorithm
                and cell.strategy == strategy
            ):
                return cell
        raise KeyError((setting_key, algorithm, strategy))

    def algorithms(self):
        return sorted({c.algorithm for c in self.cells})

    def settings(self):
        seen = {}
        for c in self.cells:
            seen.setdefault(c.setting.key, c.setting)
        return [seen[k] for k in sorted(seen)]


def _mean_se(values):
    mean = sum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var / len(values))


def select_strategies(records, grids: dict | None = None) -> StrategyReport:
    """Pick BEST/WORST/DEFAULT/SIM_MEAN per (setting, algorithm).

    BEST/WORST minimize/maximize the seed-mean SHD over the grid within
    each setting; DEFAULT is the paper-recommended assignment (swept as an
    extra cell when it is off-grid); SIM_MEAN is the single grid assignment
    with the lowest grand mean across all simulated settings.
    """
    grids = grids or {}
    ok = [r for r in records if r.status == "ok" and r.shd is not None]
    failures = defaultdict(int)
    for r in records:
        if r.status == "error":
            failures[r.algorithm] += 1
    if not ok:
        raise ConfigError("no successful records to aggregate")

    settings_by_key: dict = {}
    for r in ok:
        settings_by_key.setdefault(r.setting.key, r.setting)

    algorithms = sorted({r.algorithm for r in ok})
    grid_ids: dict = {}
    default_ids: dict = {}
    for name in algorithms:
        space = get_algorithm(name).space
        grid = grids.get(name) or space.grid_assignments()
        grid_ids[name] = {assignment_id(name, space.validate(a)) for a in grid}
        default_ids[name] = assignment_id(name, space.validate(space.default_assignment()))

    # per (setting, algorithm, assignment id): seed -> shd
    by_cell: dict = defaultdict(dict)
    params_of: dict = {}
    for r in ok:
        by_cell[(r.setting.key, r.algorithm, r.assignment_id)][r.seed] = r.shd
        params_of[(r.algorithm, r.assignment_id)] = r.params

    # grid completeness over ATTEMPTED cells: a failed learner run still
    # covers its cell (it is just excluded from the means); only cells
    # that were never run count as missing
    attempted: dict = defaultdict(set)
    for r in records:
        if r.algorithm in grid_ids:
            attempted[(r.setting.key, r.algorithm, r.assignment_id)].add(r.seed)
    missing = []
    seeds_by_setting_algo: dict = defaultdict(set)
    for (skey, algo, aid), seeds in attempted.items():
        seeds_by_setting_algo[(skey, algo)] |= seeds
    for (skey, algo), seeds in sorted(seeds_by_setting_algo.items()):
        for aid in sorted(grid_ids[algo] | {default_ids[algo]}):
            covered = attempted.get((skey, algo, aid), set())
            holes = seeds - covered
            if holes and not covered:
                missing.append((skey, algo, aid, "all seeds"))
            elif holes:
                missing.append((skey, algo, aid, sorted(holes)))
    if missing:
        raise ConfigError(f"incomplete grid coverage; missing cells: {missing[:20]}")

    # grand means for SIM_MEAN over simulated settings (all settings if none)
    sim_keys = {k for k, s in settings_by_key.items() if s.is_simulated} or set(settings_by_key)
    sim_mean_choice: dict = {}
    for algo in algorithms:
        totals: dict = defaultdict(list)
        for (skey, a, aid), seed_map in by_cell.items():
            if a == algo and skey in sim_keys and aid in grid_ids[algo]:
                totals[aid].extend(seed_map.values())
        if totals:
            sim_mean_choice[algo] = min(
                totals, key=lambda aid: (sum(totals[aid]) / len(totals[aid]), aid)
            )

    cells = []
    for (skey, algo), _ in sorted(seeds_by_setting_algo.items()):
        setting = settings_by_key[skey]
        per_assignment = {
            aid: seed_map
            for (k, a, aid), seed_map in by_cell.items()
            if k == skey and a == algo
        }
        grid_means = {
            aid: sum(sm.values()) / len(sm)
            for aid, sm in per_assignment.items()
            if aid in grid_ids[algo] and sm
        }
        if not grid_means:
            continue
        chosen = {
            "best": min(grid_means, key=lambda aid: (grid_means[aid], aid)),
            "worst": max(grid_means, key=lambda aid: (grid_means[aid], aid)),
            "default": default_ids[algo],
            "sim_mean": sim_mean_choice[algo],
        }
        for strategy, aid in chosen.items():
            seed_map = per_assignment.get(aid)
            if not seed_map:
                raise ConfigError(
                    f"strategy {strategy} for {algo} in {skey} needs assignment {aid},"
                    " which has no successful records"
                )
            mean, se = _mean_se(list(seed_map.values()))
            cells.append(
                StrategyCell(
                    setting=setting,
                    algorithm=algo,
                    strategy=strategy,
                    mean_shd=mean,
                    se_shd=se,
                    assignment_id=aid,
                    params=params_of[(algo, aid)],
                )
            )
    return StrategyReport(cells=cells, failure_counts=dict(failures))


def winning_percentages(report: StrategyReport, group_by, strategy: str) -> dict:
    """Per group of settings: % of settings each algorithm wins (lowest SHD).

    Ties split fractionally, so each group's percentages sum to 100.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    by_group: dict = defaultdict(list)
    for setting in report.settings():
        group = tuple((dim, setting.dimension(dim)) for dim in group_by)
        by_group[group].append(setting)
    if not by_group:
        raise ConfigError("empty report")
    out = {}
    for group, settings in sorted(by_group.items()):
        credit: dict = defaultdict(float)
        for setting in settings:
            scores = {}
            for algo in report.algorithms():
                try:
                    scores[algo] = report.lookup(setting.key, algo, strategy).mean_shd
                except KeyError:
                    continue
            if not scores:
                raise ConfigError(f"no strategy cells for setting {setting.key}")
            lowest = min(scores.values())
            winners = [a for a, v in scores.items() if v == lowest]
            for w in winners:
                credit[w] += 1.0 / len(winners)
        out[group] = {
            algo: 100.0 * credit.get(algo, 0.0) / len(settings) for algo in report.algorithms()
        }
    return out


def robustness_gaps(report: StrategyReport) -> dict:
    """SHD cost of leaving the oracle: fixed-vs-best and worst-vs-fixed gaps."""
    gaps = {}
    for setting in report.settings():
        for algo in report.algorithms():
            try:
                best = report.lookup(setting.key, algo, "best").mean_shd
                worst = report.lookup(setting.key, algo, "worst").mean_shd
            except KeyError:
                continue
            entry = {}
            for fixed in ("default", "sim_mean"):
                fixed_shd = report.lookup(setting.key, algo, fixed).mean_shd
                entry[fixed] = {
                    "fixed_minus_best": fixed_shd - best,
                    "worst_minus_fixed": worst - fixed_shd,
                }
            assert entry["sim_mean"]["fixed_minus_best"] >= -1e-9  # in-grid by construction
            assert entry["sim_mean"]["worst_minus_fixed"] >= -1e-9
            gaps[(setting.key, algo)] = entry
    if not gaps:
        raise ConfigError("report has no best/worst cells")
    return gaps


def recommend(report: StrategyReport, strategy: str = "best") -> dict:
    """Algorithms ranked by winning percentage per (graph_p, data_sem, graph_d)."""
    wins = winning_percentages(report, ("graph_p", "data_sem", "graph_d"), strategy)
    out = {}
    for group, percents in wins.items():
        ranked = sorted(percents.items(), key=lambda kv: (-kv[1], kv[0]))
        out[group] = [(algo, pct) for algo, pct in ranked if pct > 0.0]
    return out
