import json

import numpy as np
import pytest

from stormcrf.benchmark import BenchmarkDataset, run_benchmark, synthetic_suite, write_report
from stormcrf.cli import main
from stormcrf.data import load_csv, save_csv
from stormcrf.registry import load_model
from stormcrf.storm import TrainConfig

FAST = TrainConfig(max_iterations=120)
TINY_GRID = (0.1, 10.0)


def tiny_specs():
    return [
        BenchmarkDataset(
            name="linear-k3", k=3, n_train=30, synth_kind="linear", n_test=60
        )
    ]


def test_benchmark_report_structure_and_determinism():
    report1, cells1 = run_benchmark(
        tiny_specs(), ["storm", "ordlog"], repetitions=2, seed=5,
        grid=TINY_GRID, config=FAST,
    )
    report2, _ = run_benchmark(
        tiny_specs(), ["storm", "ordlog"], repetitions=2, seed=5,
        grid=TINY_GRID, config=FAST,
    )
    assert json.dumps(report1, sort_keys=True) == json.dumps(report2, sort_keys=True)
    assert len(report1["cells"]) == 4
    for cell in report1["cells"]:
        assert cell["zero_one"] is not None
        assert cell["mae"] is not None
        assert cell["l2"] in TINY_GRID
        assert "seconds" not in cell
    assert any(c["seconds"] > 0 for c in cells1)
    assert set(report1["ranks"]["mae"]["average"]) == {"storm", "ordlog"}
    assert report1["wilcoxon"]["mae"] == []  # < 5 pairs -> no test entries
    assert report1["critical_difference"]["zero_one"]["alpha"] == 0.01


def test_benchmark_parallel_matches_serial():
    serial, _ = run_benchmark(
        tiny_specs(), ["ordlog", "logreg"], repetitions=2, seed=9,
        grid=TINY_GRID, config=FAST, jobs=1,
    )
    parallel, _ = run_benchmark(
        tiny_specs(), ["ordlog", "logreg"], repetitions=2, seed=9,
        grid=TINY_GRID, config=FAST, jobs=2,
    )
    assert json.dumps(serial, sort_keys=True) == json.dumps(parallel, sort_keys=True)


def test_benchmark_csv_dataset_with_binning(tmp_path):
    rng = np.random.default_rng(6)
    path = tmp_path / "reg.csv"
    with open(path, "w") as handle:
        handle.write("f1,f2,target\n")
        for _ in range(60):
            a, b = rng.normal(size=2)
            handle.write(f"{a},{b},{a + b + rng.normal() * 0.1}\n")
    spec = BenchmarkDataset(
        name="csvset", k=3, n_train=30, kind="csv",
        csv_path=str(path), label_column="target",
    )
    report, _ = run_benchmark([spec], ["ordlog"], repetitions=2, seed=1,
                              grid=(1.0,), config=FAST)
    cells = report["cells"]
    assert len(cells) == 2 and all(c["mae"] is not None for c in cells)


def test_benchmark_validates_arguments():
    with pytest.raises(ValueError):
        run_benchmark([], ["storm"])
    with pytest.raises(ValueError):
        run_benchmark(tiny_specs(), ["mystery"])


def test_benchmark_survives_failing_fits(monkeypatch):
    import stormcrf.benchmark as bench_mod
    from stormcrf.registry import MODEL_KINDS, ModelOps

    def explode(*args, **kwargs):
        raise RuntimeError("synthetic optimiser blow-up")

    broken = dict(MODEL_KINDS)
    ops = MODEL_KINDS["ordlog"]
    broken["ordlog"] = ModelOps(ops.fit, explode, ops.predict, ops.predict_proba)
    monkeypatch.setattr(bench_mod, "MODEL_KINDS", broken)
    report, _ = run_benchmark(
        tiny_specs(), ["ordlog", "logreg"], repetitions=2, seed=3,
        grid=(1.0,), config=FAST, jobs=1,
    )
    dead = [c for c in report["cells"] if c["model"] == "ordlog"]
    assert all(c["zero_one"] is None for c in dead)
    assert all("fit failed" in c["warnings"][0] for c in dead)
    alive = [c for c in report["cells"] if c["model"] == "logreg"]
    assert all(c["zero_one"] is not None for c in alive)
    # rank/CD tables are skipped when cells are missing, report still lands
    assert report["ranks"] == {}
    assert any("fit failed" in w for w in report["warnings"])


def test_synthetic_suite_crosses_kinds_and_ks():
    specs = synthetic_suite(("linear", "spiral"), (5, 10))
    assert [s.name for s in specs] == [
        "linear-k5", "linear-k10", "spiral-k5", "spiral-k10"
    ]


def test_write_report_files(tmp_path):
    report, cells = run_benchmark(
        tiny_specs(), ["ordlog"], repetitions=2, seed=2, grid=(1.0,), config=FAST
    )
    out = tmp_path / "report.json"
    write_report(out, report, cells)
    assert json.loads(out.read_text())["schema"] == "stormcrf-report-v1"
    scores = (tmp_path / "report_scores.csv").read_text().strip().splitlines()
    assert scores[0] == "dataset,model,rep,zero_one,mae,l2"
    assert len(scores) == 3
    timings = (tmp_path / "report_timings.csv").read_text().strip().splitlines()
    assert timings[0] == "dataset,model,rep,seconds"
    assert len(timings) == 3


def test_cli_synth_writes_deterministic_files(tmp_path):
    out = tmp_path / "toy"
    args = ["synth", "--kind", "sine", "--k", "4", "--n-train", "30",
            "--n-test", "50", "--seed", "3", "--out", str(out)]
    assert main(args) == 0
    train = load_csv(f"{out}_train.csv", "label", 4)
    test = load_csv(f"{out}_test.csv", "label", 4)
    assert train.n == 30 and test.n == 50
    assert train.labels.min() >= 1 and train.labels.max() <= 4
    first = (tmp_path / "toy_train.csv").read_text()
    assert main(args) == 0
    assert (tmp_path / "toy_train.csv").read_text() == first


def test_cli_train_predict_round_trip(tmp_path):
    out = tmp_path / "toy"
    main(["synth", "--kind", "linear", "--k", "3", "--n-train", "40",
          "--n-test", "30", "--seed", "4", "--out", str(out)])
    model_path = tmp_path / "model.json"
    rc = main(["train", "--model", "storm", "--train", f"{out}_train.csv",
               "--k", "3", "--l2", "0.5", "--max-iter", "150",
               "--out", str(model_path)])
    assert rc == 0
    pred_path = tmp_path / "pred.csv"
    rc = main(["predict", "--model-file", str(model_path),
               "--data", f"{out}_test.csv", "--label-column", "label",
               "--proba", "--out", str(pred_path)])
    assert rc == 0
    rows = pred_path.read_text().strip().splitlines()
    assert rows[0] == "label,p1,p2,p3"
    assert len(rows) == 31
    proba = np.array([[float(v) for v in row.split(",")[1:]] for row in rows[1:]])
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    # in-process predictions match the round-tripped model file
    predictor = load_model(model_path)
    test = load_csv(f"{out}_test.csv", "label", 3)
    labels_cli = np.array([int(r.split(",")[0]) for r in rows[1:]])
    assert np.array_equal(labels_cli, predictor.predict(test.features))


def test_cli_train_with_cv_and_nystroem(tmp_path):
    out = tmp_path / "toy"
    main(["synth", "--kind", "spiral", "--k", "4", "--n-train", "50",
          "--n-test", "20", "--seed", "5", "--out", str(out)])
    model_path = tmp_path / "nys.json"
    rc = main(["train", "--model", "storm", "--train", f"{out}_train.csv",
               "--k", "4", "--l2-grid", "0.1,1", "--nystroem", "20",
               "--gamma", "5.0", "--max-iter", "100", "--out", str(model_path)])
    assert rc == 0
    predictor = load_model(model_path)
    assert predictor.nystroem is not None
    assert predictor.d_raw == 2


def test_cli_exit_codes(tmp_path):
    # missing file -> validation error
    assert main(["train", "--model", "storm", "--train", str(tmp_path / "nope.csv"),
                 "--k", "3", "--l2", "1.0", "--out", str(tmp_path / "m.json")]) == 2
    # corrupt csv -> validation error citing the row
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2,label\n1.0,2.0\n")
    assert main(["train", "--model", "storm", "--train", str(bad),
                 "--k", "3", "--l2", "1.0", "--out", str(tmp_path / "m.json")]) == 2
    # unknown model kind is an argparse error (SystemExit 2)
    with pytest.raises(SystemExit) as exc:
        main(["train", "--model", "forest", "--train", str(bad),
              "--k", "3", "--out", str(tmp_path / "m.json")])
    assert exc.value.code == 2


def test_cli_predict_feature_mismatch_exits_2(tmp_path):
    out = tmp_path / "toy"
    main(["synth", "--kind", "linear", "--k", "3", "--n-train", "30",
          "--n-test", "20", "--seed", "6", "--out", str(out)])
    model_path = tmp_path / "m.json"
    main(["train", "--model", "ordlog", "--train", f"{out}_train.csv",
          "--k", "3", "--l2", "1.0", "--out", str(model_path)])
    wide = tmp_path / "wide.csv"
    wide.write_text("a,b,c\n1.0,2.0,3.0\n")
    rc = main(["predict", "--model-file", str(model_path), "--data", str(wide),
               "--out", str(tmp_path / "p.csv")])
    assert rc == 2


def test_cli_benchmark_and_grid(tmp_path):
    report_path = tmp_path / "report.json"
    rc = main(["benchmark", "--synthetic", "linear", "--k", "3",
               "--n-train", "30", "--n-test", "40", "--models", "ordlog,nest",
               "--reps", "2", "--l2-grid", "0.5", "--seed", "7",
               "--max-iter", "100", "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert len(report["cells"]) == 4

    model_path = tmp_path / "m.json"
    out = tmp_path / "toy"
    main(["synth", "--kind", "circle", "--k", "3", "--n-train", "40",
          "--n-test", "20", "--seed", "8", "--out", str(out)])
    main(["train", "--model", "storm", "--train", f"{out}_train.csv",
          "--k", "3", "--l2", "0.5", "--max-iter", "100", "--out", str(model_path)])
    grid_path = tmp_path / "grid.csv"
    rc = main(["grid", "--model-file", str(model_path), "--resolution", "8",
               "--query", "interval:1:3", "--out", str(grid_path)])
    assert rc == 0
    rows = grid_path.read_text().strip().splitlines()
    assert rows[0] == "x,y,value"
    values = np.array([float(r.split(",")[2]) for r in rows[1:]])
    assert values.shape == (64,)
    assert np.allclose(values, 1.0, atol=1e-9)  # full-support interval

    rc = main(["grid", "--model-file", str(model_path), "--resolution", "5",
               "--query", "proba:2", "--out", str(grid_path)])
    assert rc == 0
    rc = main(["grid", "--model-file", str(model_path), "--resolution", "5",
               "--query", "label", "--out", str(grid_path)])
    assert rc == 0


def test_cli_grid_rejects_non_planar_models(tmp_path):
    rng = np.random.default_rng(9)
    from stormcrf.data import OrdinalDataset

    data = OrdinalDataset(rng.normal(size=(40, 3)), rng.integers(1, 4, 40), 3)
    csv_path = tmp_path / "d3.csv"
    save_csv(csv_path, data)
    model_path = tmp_path / "m.json"
    main(["train", "--model", "ordlog", "--train", str(csv_path), "--k", "3",
          "--l2", "1.0", "--out", str(model_path)])
    rc = main(["grid", "--model-file", str(model_path),
               "--out", str(tmp_path / "g.csv")])
    assert rc == 2


def test_cli_spiral_label_bands_monotone_along_manifold(tmp_path):
    out = tmp_path / "spiral"
    main(["synth", "--kind", "spiral", "--k", "5", "--n-train", "100",
          "--n-test", "20", "--seed", "12", "--out", str(out)])
    model_path = tmp_path / "m.json"
    rc = main(["train", "--model", "storm", "--train", f"{out}_train.csv",
               "--k", "5", "--l2-grid", "0.01,0.1,1", "--out", str(model_path)])
    assert rc == 0
    # a transect along the noiseless manifold parameter must sweep the
    # label bands in order
    t = np.linspace(0.02, 0.98, 120)
    radius = 0.1 + 0.9 * t
    angle = 2 * np.pi * t
    transect = tmp_path / "transect.csv"
    with open(transect, "w") as handle:
        handle.write("x1,x2\n")
        for px, py in zip(radius * np.cos(angle), radius * np.sin(angle)):
            handle.write(f"{px},{py}\n")
    pred_path = tmp_path / "pred.csv"
    assert main(["predict", "--model-file", str(model_path),
                 "--data", str(transect), "--out", str(pred_path)]) == 0
    labels = np.array(
        [int(r) for r in pred_path.read_text().strip().splitlines()[1:]]
    )
    assert np.all(np.diff(labels) >= 0)
    assert labels[0] == 1 and labels[-1] == 5


def test_cli_zero_weight_label_grid_is_constant(tmp_path):
    from stormcrf import storm as storm_mod
    from stormcrf.chain_crf import ChainCrfParams
    from stormcrf.data import Standardizer
    from stormcrf.registry import TrainedPredictor, save_model

    zero = storm_mod.StormModel(
        params=ChainCrfParams.zeros(4, 3),
        config=storm_mod.TrainConfig(),
        standardizer=Standardizer(mean=np.zeros(2), scale=np.ones(2)),
    )
    model_path = tmp_path / "zero.json"
    save_model(model_path, TrainedPredictor(kind="storm", model=zero))
    grid_path = tmp_path / "g.csv"
    assert main(["grid", "--model-file", str(model_path), "--resolution", "6",
                 "--query", "label", "--out", str(grid_path)]) == 0
    values = {row.split(",")[2] for row in grid_path.read_text().strip().splitlines()[1:]}
    assert values == {"1"}
