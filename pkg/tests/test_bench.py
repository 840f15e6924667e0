import pytest

from cfslbench import (
    BenchPlan,
    EmptyReport,
    LearnerKind,
    LearnerParams,
    LearnerSpec,
    PlanError,
    TaskConfig,
    TaskKind,
    default_grid_cells,
    derive_task_kind,
    output_label_count,
    plan_from_dict,
    render_report,
    report_from_csv,
    report_to_csv,
    run_benchmark,
    write_pack,
)
from cfslbench.bench import BenchReport, load_plan, save_plan


def cell(nss, cci, overwrite=False, seed=0):
    return TaskConfig(nss=nss, cci=cci, n_way=5, k_shot=1, k_target=5,
                      overwrite=overwrite, seed=seed)


def plan_for(pack, cells, learners=None, episodes=10, seeds=(0,)):
    learners = learners or (LearnerSpec("random", LearnerKind.RANDOM),)
    return BenchPlan(pack_paths={}, cells=tuple(cells), learners=tuple(learners),
                     episodes=episodes, seeds=tuple(seeds))


class TestDefaultGrid:
    def test_twelve_cells_in_table_order(self):
        cells = default_grid_cells()
        assert len(cells) == 12
        kinds = [derive_task_kind(c).value for c in cells]
        assert kinds == ["FSL", "B", "C", "A", "D", "B", "C", "A", "D", "B", "C", "A"]
        assert [c.nss for c in cells] == [1, 3, 3, 3, 4, 5, 5, 5, 8, 10, 10, 10]
        assert [c.cci for c in cells] == [1, 1, 1, 3, 2, 1, 1, 5, 2, 1, 1, 10]
        assert all(c.n_way == 5 and c.k_shot == 1 and c.k_target == 5 for c in cells)

    def test_all_cells_valid(self):
        from cfslbench import validate_config
        assert all(validate_config(c) == [] for c in default_grid_cells())


class TestRunBenchmark:
    def test_single_cell_single_row(self, small_pack):
        plan = plan_for(small_pack, [cell(3, 1)], episodes=10)
        report = run_benchmark(plan, packs={"test": small_pack})
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.summary.n_episodes == 10
        assert row.error is None
        assert row.task_kind is TaskKind.NEW_CLASSES

    def test_rerun_is_bitwise_identical(self, small_pack):
        plan = plan_for(
            small_pack,
            [cell(3, 1), cell(4, 2, overwrite=True)],
            learners=(
                LearnerSpec("random", LearnerKind.RANDOM),
                LearnerSpec("prototype", LearnerKind.PROTOTYPE),
            ),
            episodes=8,
            seeds=(0, 1),
        )
        first = report_to_csv(run_benchmark(plan, packs={"test": small_pack}))
        second = report_to_csv(run_benchmark(plan, packs={"test": small_pack}))
        assert first == second

    def test_infeasible_cell_reported_and_run_continues(self, small_pack):
        plan = plan_for(small_pack, [cell(13, 1), cell(3, 1)], episodes=5, seeds=(0, 1))
        report = run_benchmark(plan, packs={"test": small_pack})
        assert len(report.rows) == 4  # 2 cells x 1 learner x 2 seeds
        bad = [r for r in report.rows if r.nss == 13]
        good = [r for r in report.rows if r.nss == 3]
        assert all(r.error and "NotEnoughClasses" in r.error for r in bad)
        assert all(r.error is None for r in good)
        assert report.has_errors

    def test_row_count_is_grid_times_learners_times_seeds(self, small_pack):
        plan = plan_for(
            small_pack,
            [cell(3, 1), cell(5, 5)],
            learners=(
                LearnerSpec("random", LearnerKind.RANDOM),
                LearnerSpec("prototype", LearnerKind.PROTOTYPE),
            ),
            episodes=3,
            seeds=(0, 1, 2),
        )
        report = run_benchmark(plan, packs={"test": small_pack})
        assert len(report.rows) == 2 * 2 * 3

    def test_eval_episodes_shared_across_learners_and_seeds(self, small_pack):
        # the prototype learner is deterministic given the episodes, so its
        # summaries must agree across run seeds; random-learner draws differ
        plan = plan_for(
            small_pack,
            [cell(3, 1)],
            learners=(
                LearnerSpec("prototype", LearnerKind.PROTOTYPE),
                LearnerSpec("random", LearnerKind.RANDOM),
            ),
            episodes=12,
            seeds=(0, 1),
        )
        report = run_benchmark(plan, packs={"test": small_pack})
        proto = [r.summary.accuracy_mean for r in report.rows if r.learner == "prototype"]
        rand = [r.summary.accuracy_mean for r in report.rows if r.learner == "random"]
        assert proto[0] == proto[1]
        assert rand[0] != rand[1]

    def test_chance_alignment_random_learner(self, small_pack):
        plan = plan_for(small_pack, [cell(10, 1), cell(10, 1, overwrite=True)], episodes=60)
        report = run_benchmark(plan, packs={"test": small_pack})
        for row in report.rows:
            L = 5 if row.overwrite else 50
            n_targets = 5 * 5 * 10
            stderr = ((1 / L) * (1 - 1 / L) / (60 * n_targets)) ** 0.5
            assert abs(row.summary.accuracy_mean - 1 / L) < 5 * stderr

    def test_invalid_cell_rejected_upfront(self, small_pack):
        plan = plan_for(small_pack, [TaskConfig(4, 3, 5, 1, 5)])
        with pytest.raises(PlanError):
            run_benchmark(plan, packs={"test": small_pack})


class TestRendering:
    def make_report(self, pack):
        plan = plan_for(
            pack,
            [cell(3, 1), cell(3, 1, overwrite=True)],
            learners=(
                LearnerSpec("random", LearnerKind.RANDOM),
                LearnerSpec("prototype", LearnerKind.PROTOTYPE),
            ),
            episodes=4,
            seeds=(0, 1),
        )
        return run_benchmark(plan, packs={"test": pack})

    def test_csv_round_trip(self, small_pack):
        report = self.make_report(small_pack)
        text = report_to_csv(report)
        again = report_from_csv(text)
        assert report_to_csv(again) == text

    def test_markdown_layout(self, small_pack):
        report = self.make_report(small_pack)
        md = render_report(report, format="markdown")
        lines = md.splitlines()
        assert lines[0] == "### noise"
        header = lines[2]
        assert header.startswith("| learner | B/3/1/F | C/3/1/T |")
        data_rows = [ln for ln in lines if ln.startswith("| random") or ln.startswith("| prototype")]
        assert len(data_rows) == 2
        assert "±" in data_rows[0]

    def test_infeasible_cell_renders_dash(self, small_pack):
        plan = plan_for(small_pack, [cell(13, 1)], episodes=2)
        report = run_benchmark(plan, packs={"test": small_pack})
        md = render_report(report, format="markdown")
        assert "—" in md

    def test_empty_report_rejected(self):
        with pytest.raises(EmptyReport):
            render_report(BenchReport(()), format="markdown")

    def test_csv_has_one_row_per_cell_learner_seed(self, small_pack):
        report = self.make_report(small_pack)
        lines = report_to_csv(report).strip().splitlines()
        assert len(lines) == 1 + 2 * 2 * 2


class TestPlanIO:
    def test_round_trip(self, tmp_path, small_pack):
        write_pack(small_pack, tmp_path / "pack")
        plan = BenchPlan(
            pack_paths={"test": str(tmp_path / "pack")},
            cells=(cell(3, 1), cell(4, 2)),
            learners=(LearnerSpec("random", LearnerKind.RANDOM, LearnerParams(seed=0)),),
            episodes=5,
            seeds=(0, 1),
        )
        save_plan(plan, tmp_path / "plan.json")
        again = load_plan(tmp_path / "plan.json")
        assert again.cells == plan.cells
        assert again.episodes == 5
        assert again.seeds == (0, 1)
        assert again.learners[0].kind is LearnerKind.RANDOM

    def test_default_cells_keyword(self):
        plan = plan_from_dict({"cells": "default", "learners": [{"learner": "random"}]})
        assert len(plan.cells) == 12

    def test_malformed_plan(self):
        with pytest.raises(PlanError):
            plan_from_dict({"cells": [{"nss": 4, "cci": 3}], "learners": [{"learner": "random"}]})

    def test_chance_matches_output_label_count_formula(self):
        for config in default_grid_cells():
            L = output_label_count(config)
            assert L == (5 if config.overwrite or config.nss == config.cci else 5 * config.nss // config.cci)
