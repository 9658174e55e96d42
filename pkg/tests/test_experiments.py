import csv
import io
import json

import numpy as np
import pytest

from drnet import experiments as ex
from drnet.network import RunResult, TrainConfig


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def small_sweep():
    return ex.run_dim_sweep(dims=(2, 3, 5), reps=2, base_seed=7, train=TrainConfig(epochs=3))


def test_plan_defaults():
    assert ex.ExperimentPlan("dim_sweep").settings == (2, 3, 5, 10, 30, 100)
    assert len(ex.ExperimentPlan("datasize_sweep").settings) == 8
    assert ex.ExperimentPlan("coverage").n == 10
    assert ex.ExperimentPlan("other_tasks").n == 3
    with pytest.raises(ValueError):
        ex.ExperimentPlan("table9")
    with pytest.raises(ValueError):
        ex.ExperimentPlan("datasize_sweep", (0.9,))
    with pytest.raises(ValueError):
        ex.ExperimentPlan("dim_sweep", reps=0)


def test_config_hash_tracks_config():
    a = ex.ExperimentPlan("dim_sweep")
    assert a.config_hash() == ex.ExperimentPlan("dim_sweep").config_hash()
    assert a.config_hash() != ex.ExperimentPlan("dim_sweep", train=TrainConfig(epochs=5)).config_hash()
    assert a.config_hash() != ex.ExperimentPlan("dim_sweep", base_seed=1).config_hash()


def test_grid_shape(small_sweep):
    assert len(small_sweep.cells) == 9
    assert small_sweep.completion == 1.0
    cell = small_sweep.cell(3, "mid")
    assert [r.seed for r in cell.results] == [7, 8]
    assert cell.min <= cell.mean <= cell.max
    with pytest.raises(KeyError):
        small_sweep.cell(4, "mid")


def test_csv(small_sweep):
    got = rows(ex.to_csv(small_sweep))
    assert len(got) == 9
    assert list(got[0]) == ex.CSV_COLUMNS
    assert {r["architecture"] for r in got} == {"plain", "early", "mid"}
    assert all(r["seed_count"] == "2" and r["epochs"] == "3" for r in got)
    assert len({r["config_hash"] for r in got}) == 1


def test_full_dim_sweep_has_18_rows():
    grid = ex.run_dim_sweep(reps=1, train=TrainConfig(epochs=1))
    assert len(rows(ex.to_csv(grid))) == 18


def test_rerun_is_byte_identical(small_sweep):
    again = ex.run_dim_sweep(dims=(2, 3, 5), reps=2, base_seed=7, train=TrainConfig(epochs=3))
    assert ex.to_csv(again) == ex.to_csv(small_sweep)
    assert ex.to_json(again) == ex.to_json(small_sweep)


def test_workers_do_not_change_results(small_sweep):
    par = ex.run_dim_sweep(dims=(2, 3, 5), reps=2, base_seed=7, train=TrainConfig(epochs=3), workers=2)
    assert ex.to_csv(par) == ex.to_csv(small_sweep)


def test_architectures_share_split():
    plan = ex.ExperimentPlan("dim_sweep", (5,), reps=1)
    n, (tr, te) = ex._datasets(plan, 5, 0)
    _, (tr2, te2) = ex._datasets(plan, 5, 0)
    assert np.array_equal(tr.inputs, tr2.inputs) and np.array_equal(te.labels, te2.labels)


def test_datasize_test_set_fixed_across_fractions():
    plan = ex.ExperimentPlan("datasize_sweep", (0.01, 0.5), reps=1)
    _, (small, te1) = ex._datasets(plan, 0.01, 3)
    _, (big, te2) = ex._datasets(plan, 0.5, 3)
    assert np.array_equal(te1.inputs, te2.inputs)
    assert len(small) == 20 and len(big) == 1000


def test_failed_runs_are_annotated(small_sweep):
    cell = small_sweep.cells[0]
    broken = ex.CellSummary(cell.study, cell.setting, cell.architecture,
                            [RunResult(seed=0, error="diverged"), RunResult(seed=1, error="diverged")])
    partial = ex.CellSummary(cell.study, cell.setting, "mid",
                             [RunResult(seed=0, test_accuracy=1.0), RunResult(seed=1, error="diverged")])
    grid = ex.ResultGrid(small_sweep.plan, [broken, partial])
    got = rows(ex.to_csv(grid))
    assert got[0]["mean_acc"] == "" and got[0]["seed_count"] == "0"
    assert "2 of 2" in got[0]["note"]
    assert got[1]["mean_acc"] == "1.000000" and "1 of 2" in got[1]["note"]
    assert grid.completion == 0.5
    assert "fail" in ex.render_table(ex.ResultGrid(ex.ExperimentPlan("dim_sweep", (2,), architectures=("plain",)),
                                                   [ex.CellSummary("dim_sweep", "2", "plain", broken.results)]))


def test_divergence_is_recorded(monkeypatch):
    import drnet.experiments as mod
    from drnet.network import DivergenceError

    def boom(net, tr, cfg, te):
        raise DivergenceError("nan loss", RunResult(seed=cfg.seed, error="nan loss"))

    monkeypatch.setattr(mod, "train", boom)
    grid = ex.run_dim_sweep(dims=(2,), reps=2)
    assert grid.completion == 0.0
    assert all(c.failures == 2 for c in grid.cells)


def test_json(small_sweep):
    doc = json.loads(ex.to_json(small_sweep))
    assert doc["format"] == "drnet-results"
    grid = doc["grids"][0]
    assert grid["config"]["study"] == "dim_sweep"
    assert len(grid["cells"]) == 9
    run = grid["cells"][0]["runs"][0]
    assert set(run) >= {"seed", "test_accuracy", "train_accuracy", "epoch_losses", "backend"}
    assert "duration" not in run
    with pytest.raises(ValueError):
        ex.emit_results(small_sweep, "xml")


def test_render_table(small_sweep):
    text = ex.render_table(small_sweep)
    lines = text.splitlines()
    assert "Plain FFNN" in lines[0] and "Mid Fusion" in lines[0]
    assert [ln.split()[0] for ln in lines[2:]] == ["n=2", "n=3", "n=5"]
    assert all(ln.rstrip().endswith("%") for ln in lines[2:])


def test_plan_file(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text(json.dumps({"study": "fig2", "fractions": [0.1, 0.2], "reps": 3,
                                "train": {"epochs": 4}, "hidden_sizes": [20]}))
    plan = ex.load_plan(path)
    assert plan.study == "datasize_sweep" and plan.settings == (0.1, 0.2)
    assert plan.reps == 3 and plan.train.epochs == 4 and plan.hidden_sizes == (20,)
    plan = ex.plan_from_dict({"study": "tasks"}, {"lr": 0.1})
    assert plan.settings == ("c", "d", "e") and plan.train.lr == 0.1


def test_other_studies_run():
    cov = ex.run_coverage_study(reps=1, train=TrainConfig(epochs=1))
    tasks = ex.run_other_tasks(reps=1, train=TrainConfig(epochs=1))
    assert len(ex.to_csv(cov, tasks).splitlines()) == 1 + 15
    assert ex.is_finite_grid(cov) and ex.is_finite_grid(tasks)
