import json
import xml.etree.ElementTree as ET
from pathlib import Path

from causalbench.cli import load_config, main, parse_config


def tiny_config(tmp_path, **overrides):
    cfg = {
        "out_dir": str(tmp_path / "out"),
        "workers": 1,
        "algorithms": ["pc"],
        "grids": {"pc": [{"alpha": 0.01}, {"alpha": 0.1}, {"alpha": 0.3}]},
        "include_defaults": False,
        "settings": [
            {
                "graph_p": 4,
                "graph_d": 1,
                "graph_type": "ER",
                "data_n": 150,
                "data_sem": "gumbel",
                "seeds": [0, 1],
            }
        ],
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def test_config_roundtrip(tmp_path):
    path, raw = tiny_config(tmp_path)
    config = load_config(path)
    again = parse_config(config.to_dict())
    assert again.to_dict() == config.to_dict()
    assert again.config_hash == config.config_hash


def test_config_rejects_unknown_key(tmp_path, capsys):
    path, _ = tiny_config(tmp_path, bogus_key=1)
    code = main(["run", "--config", str(path)])
    assert code == 1
    assert "bogus_key" in capsys.readouterr().err


def test_config_rejects_unknown_algorithm(tmp_path):
    path, _ = tiny_config(tmp_path, algorithms=["pc", "mystery"])
    assert main(["run", "--config", str(path)]) == 1


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1


def test_simulate_writes_dataset_pairs(tmp_path):
    path, cfg = tiny_config(tmp_path)
    assert main(["simulate", "--config", str(path)]) == 0
    base = Path(cfg["out_dir"]) / "datasets" / "ER_p4_d1_gumbel_n150"
    files = sorted(f.name for f in base.iterdir())
    assert files == ["seed0.csv", "seed0_truth.txt", "seed1.csv", "seed1_truth.txt"]
    manifest = json.loads((Path(cfg["out_dir"]) / "datasets" / "manifest.json").read_text())
    assert manifest["datasets_written"] == 2


def test_simulate_rerun_identical_bytes(tmp_path):
    path, cfg = tiny_config(tmp_path)
    main(["simulate", "--config", str(path)])
    f = Path(cfg["out_dir"]) / "datasets" / "ER_p4_d1_gumbel_n150" / "seed0.csv"
    first = f.read_bytes()
    main(["simulate", "--config", str(path)])
    assert f.read_bytes() == first


def test_run_aggregate_report_pipeline(tmp_path):
    path, cfg = tiny_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    out = Path(cfg["out_dir"])
    store_lines = (out / "results.csv").read_text().splitlines()
    assert len(store_lines) == 1 + 2 * 3  # header + seeds x assignments
    header = store_lines[0].split("\t")
    assert header == [
        "graph_p", "graph_d", "graph_type", "data_n", "data_sem", "dataset_ref",
        "seed", "algorithm", "assignment_id", "params_json", "shd", "runtime_ms", "status",
    ]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["schema_version"] == 1 and manifest["grids"]["pc"]

    assert main(["aggregate", "--config", str(path)]) == 0
    report_csv = (out / "strategy_report.csv").read_text().splitlines()
    assert report_csv[0] == "setting,algorithm,strategy,mean_shd,se_shd,assignment_id,params"
    assert len(report_csv) == 1 + 4  # four strategies for one (setting, algorithm)

    for kind in ("strategy-bars", "distributions", "winners", "gaps", "recommend"):
        assert main(["report", "--config", str(path), "--kind", kind,
                     "--group-by", "graph_p", "--strategy", "best"]) == 0
    reports = out / "reports"
    for svg in reports.glob("*.svg"):
        ET.fromstring(svg.read_text())  # well-formed XML
    assert (reports / "winners.csv").exists()
    winners = (reports / "winners.csv").read_text().splitlines()
    assert winners[1].endswith("100")  # single algorithm wins everything


def test_run_is_resumable(tmp_path):
    path, cfg = tiny_config(tmp_path)
    main(["run", "--config", str(path)])
    out = Path(cfg["out_dir"])
    before = (out / "results.csv").read_text()
    assert main(["run", "--config", str(path)]) == 0
    assert (out / "results.csv").read_text() == before  # nothing recomputed


def test_report_without_store_errors(tmp_path):
    path, cfg = tiny_config(tmp_path)
    code = main(["report", "--config", str(path), "--kind", "winners"])
    assert code == 1


def test_list_algorithms_json():
    import io
    import sys

    buf = io.StringIO()
    old = sys.stdout
    sys.stdout = buf
    try:
        assert main(["list-algorithms", "--json"]) == 0
    finally:
        sys.stdout = old
    data = json.loads(buf.getvalue())
    names = [d["algorithm"] for d in data]
    assert "notears_mlp" in names and "pc" in names


def test_grids_and_paper_grids_mutually_exclusive(tmp_path):
    path, _ = tiny_config(tmp_path, paper_grids=True)
    assert main(["run", "--config", str(path)]) == 1


def test_run_exit_code_2_on_partial_failures(tmp_path):
    # anm's n >= 50 precondition fails on every cell of this config
    path, cfg = tiny_config(
        tmp_path,
        algorithms=["anm"],
        grids={"anm": [{"alpha": 0.05}]},
        settings=[{
            "graph_p": 4, "graph_d": 1, "graph_type": "ER",
            "data_n": 40, "data_sem": "gumbel", "seeds": [0],
        }],
    )
    assert main(["run", "--config", str(path)]) == 2
    store = Path(cfg["out_dir"]) / "results.csv"
    assert "error" in store.read_text()


def test_winners_report_matches_harness_exactly(tmp_path):
    import csv

    from causalbench.cli import load_config
    from causalbench.harness import ResultStore, select_strategies, winning_percentages

    path, cfg = tiny_config(tmp_path, algorithms=["pc", "lingam"],
                            grids={"pc": [{"alpha": 0.01}, {"alpha": 0.2}],
                                   "lingam": [{"thresh": 0.3, "max_iter": 100}]},
                            include_defaults=True)
    assert main(["run", "--config", str(path)]) == 0
    assert main(["report", "--config", str(path), "--kind", "winners",
                 "--group-by", "data_sem", "--strategy", "best"]) == 0
    config = load_config(path)
    records = ResultStore(cfg["out_dir"]).load(config.settings)
    report = select_strategies(records, grids=config.grid_definitions())
    wins = winning_percentages(report, ("data_sem",), "best")
    want = {(group, algo): pct for group, percents in wins.items()
            for algo, pct in percents.items()}
    with open(Path(cfg["out_dir"]) / "reports" / "winners.csv") as fh:
        rows = list(csv.DictReader(fh))
    got = {((("data_sem", r["group"].split("=", 1)[1]),), r["algorithm"]): float(r["win_percent"])
           for r in rows}
    assert got == want
