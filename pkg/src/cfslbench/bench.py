"""End-to-end benchmark runs over a grid of task families.

The default grid is the standard 12-column layout: one plain few-shot
column, task B/C at 3, 5, and 10 support sets with a class change every
set, task A at 3, 5, and 10 support sets with a single class block, and
task D at 4 and 8 support sets with a class change every 2. Every cell is
5-way/1-shot with 5 target samples per class unless overridden.

One evaluation suite is sampled per cell from the plan's eval seed and
reused for every learner and every run seed, so scores are comparable
within a run; run seeds feed only learner-side randomness. Reports render
as CSV (one row per cell, learner, and seed) or as a markdown table of
cross-seed mean and spread, and an identical plan always reproduces a
byte-identical report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from math import fsum, sqrt
from pathlib import Path
from typing import Any, Mapping

from .learners import LearnerKind, LearnerParams, fit_stream, learner_spec_from_dict, predict
from .metrics import MacCounter, SuiteSummary, atm, summarize
from .pack import DatasetPack, read_pack
from .sampler import NotEnoughClasses, NotEnoughSamples, sample_eval_suite
from .session import EpisodeSession
from .tasks import ConfigError, TaskConfig, TaskKind, derive_task_kind, validate_config


class EmptyReport(ValueError):
    """Rendering requested for a report without rows."""


class PlanError(ValueError):
    """A benchmark plan is malformed."""


@dataclass(frozen=True)
class LearnerSpec:
    name: str
    kind: LearnerKind
    params: LearnerParams = LearnerParams()


@dataclass(frozen=True)
class BenchPlan:
    pack_paths: Mapping[str, str]
    cells: tuple[TaskConfig, ...]
    learners: tuple[LearnerSpec, ...]
    episodes: int = 600
    seeds: tuple[int, ...] = (0, 1, 2)


@dataclass(frozen=True)
class BenchRow:
    pack: str
    learner: str
    seed: int
    task_kind: TaskKind
    nss: int
    cci: int
    overwrite: bool
    summary: SuiteSummary | None
    error: str | None


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]

    @property
    def has_errors(self) -> bool:
        return any(row.error for row in self.rows)


def default_grid_cells(
    n_way: int = 5, k_shot: int = 1, k_target: int = 5, eval_seed: int = 0
) -> tuple[TaskConfig, ...]:
    """The standard 12-cell grid, in table column order."""
    layout = [
        (1, 1, False),  # FSL
        (3, 1, False),  # B
        (3, 1, True),  # C
        (3, 3, True),  # A
        (4, 2, False),  # D
        (5, 1, False),  # B
        (5, 1, True),  # C
        (5, 5, True),  # A
        (8, 2, False),  # D
        (10, 1, False),  # B
        (10, 1, True),  # C
        (10, 10, True),  # A
    ]
    return tuple(
        TaskConfig(nss=nss, cci=cci, n_way=n_way, k_shot=k_shot, k_target=k_target,
                   overwrite=overwrite, seed=eval_seed)
        for nss, cci, overwrite in layout
    )


def run_benchmark(plan: BenchPlan, packs: Mapping[str, DatasetPack] | None = None) -> BenchReport:
    """Execute every (cell, learner, seed) triple of the plan.

    A cell whose suite cannot be sampled is reported with an error in each
    of its rows and the run continues.
    """
    for config in plan.cells:
        violations = validate_config(config)
        if violations:
            raise PlanError(f"invalid cell {config}: {'; '.join(violations)}")
    if packs is None:
        packs = {role: read_pack(path) for role, path in plan.pack_paths.items()}
    if "test" not in packs:
        raise PlanError("plan needs a 'test' pack")
    test_pack = packs["test"]

    rows: list[BenchRow] = []
    for config in plan.cells:
        kind = derive_task_kind(config)
        suite = None
        cell_error: str | None = None
        try:
            suite = sample_eval_suite(test_pack, config, plan.episodes)
        except (NotEnoughClasses, NotEnoughSamples) as exc:
            cell_error = f"{type(exc).__name__}: {exc}"
        for spec in plan.learners:
            for seed in plan.seeds:
                if suite is None:
                    rows.append(
                        BenchRow(test_pack.name, spec.name, seed, kind, config.nss,
                                 config.cci, config.overwrite, None, cell_error)
                    )
                    continue
                accuracies: list[float] = []
                atms: list[float] = []
                mac_totals: list[int] = []
                for episode in suite:
                    session = EpisodeSession(test_pack, episode)
                    macs = MacCounter()
                    model = fit_stream(spec.kind, session, replace(spec.params, seed=seed), macs)
                    target = session.request_target()
                    preds = predict(model, target.images, macs)
                    score = session.submit_predictions(preds)
                    accuracies.append(score.accuracy)
                    atms.append(atm(score.memory_bytes, episode).atm)
                    mac_totals.append(macs.total_macs)
                rows.append(
                    BenchRow(test_pack.name, spec.name, seed, kind, config.nss,
                             config.cci, config.overwrite,
                             summarize(accuracies, atms, mac_totals), None)
                )
    return BenchReport(tuple(rows))


REPORT_CSV_COLUMNS = (
    "pack",
    "learner",
    "seed",
    "task_kind",
    "nss",
    "cci",
    "overwrite",
    "n_episodes",
    "acc_mean",
    "acc_std",
    "atm_mean",
    "mac_mean",
    "error",
)


def report_to_csv(report: BenchReport) -> str:
    """One row per (cell, learner, seed); floats via repr for exact reruns."""
    lines = [",".join(REPORT_CSV_COLUMNS)]
    for row in report.rows:
        s = row.summary
        lines.append(
            ",".join(
                [
                    row.pack,
                    row.learner,
                    str(row.seed),
                    row.task_kind.value,
                    str(row.nss),
                    str(row.cci),
                    str(row.overwrite).lower(),
                    str(s.n_episodes) if s else "0",
                    repr(s.accuracy_mean) if s else "",
                    repr(s.accuracy_std) if s else "",
                    repr(s.atm_mean) if s else "",
                    repr(s.mac_mean) if s else "",
                    (row.error or "").replace(",", ";"),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_from_csv(text: str) -> BenchReport:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(REPORT_CSV_COLUMNS):
        raise ValueError("not a benchmark report CSV")
    rows: list[BenchRow] = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(REPORT_CSV_COLUMNS):
            raise ValueError(f"malformed report row: {line!r}")
        (pack, learner, seed, kind, nss, cci, overwrite,
         n_episodes, acc_mean, acc_std, atm_mean, mac_mean, error) = parts
        summary = None
        if acc_mean != "":
            summary = SuiteSummary(
                n_episodes=int(n_episodes),
                accuracy_mean=float(acc_mean),
                accuracy_std=float(acc_std),
                atm_mean=float(atm_mean),
                mac_mean=float(mac_mean),
            )
        rows.append(
            BenchRow(pack, learner, int(seed), TaskKind(kind), int(nss), int(cci),
                     overwrite == "true", summary, error or None)
        )
    return BenchReport(tuple(rows))


def _cell_key(row: BenchRow) -> tuple[str, int, int, bool]:
    return (row.task_kind.value, row.nss, row.cci, row.overwrite)


def _cell_label(key: tuple[str, int, int, bool]) -> str:
    kind, nss, cci, overwrite = key
    return f"{kind}/{nss}/{cci}/{'T' if overwrite else 'F'}"


def render_report(report: BenchReport, format: str = "csv") -> str:
    """Render as 'csv' (per-seed rows) or 'markdown' (cross-seed mean +- std)."""
    if not report.rows:
        raise EmptyReport("report holds no rows")
    if format == "csv":
        return report_to_csv(report)
    if format != "markdown":
        raise ValueError(f"unknown format {format!r}")

    cell_order: list[tuple[str, int, int, bool]] = []
    for row in report.rows:
        key = _cell_key(row)
        if key not in cell_order:
            cell_order.append(key)
    packs: list[str] = []
    learners_by_pack: dict[str, list[str]] = {}
    for row in report.rows:
        if row.pack not in packs:
            packs.append(row.pack)
            learners_by_pack[row.pack] = []
        if row.learner not in learners_by_pack[row.pack]:
            learners_by_pack[row.pack].append(row.learner)

    out: list[str] = []
    for pack in packs:
        out.append(f"### {pack}")
        out.append("")
        header = ["learner"] + [_cell_label(key) for key in cell_order]
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "|".join([" --- "] * len(header)) + "|")
        for learner in learners_by_pack[pack]:
            cells = [learner]
            for key in cell_order:
                group = [
                    r for r in report.rows
                    if r.pack == pack and r.learner == learner and _cell_key(r) == key
                ]
                if not group or any(r.error for r in group):
                    cells.append("—")
                    continue
                means = [r.summary.accuracy_mean for r in group]  # type: ignore[union-attr]
                mean = fsum(means) / len(means)
                spread = sqrt(fsum((m - mean) ** 2 for m in means) / len(means))
                cells.append(f"{mean:.4f} ± {spread:.4f}")
            out.append("| " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def plan_to_dict(plan: BenchPlan) -> dict[str, Any]:
    return {
        "packs": dict(plan.pack_paths),
        "cells": [c.to_dict() for c in plan.cells],
        "learners": [
            {
                "name": spec.name,
                "learner": spec.kind.value,
                "steps": spec.params.steps,
                "lr": spec.params.lr,
                "standardize": spec.params.standardize,
                "embed_dim": spec.params.embed_dim,
            }
            for spec in plan.learners
        ],
        "episodes": plan.episodes,
        "seeds": list(plan.seeds),
    }


def plan_from_dict(data: Mapping[str, Any]) -> BenchPlan:
    try:
        eval_seed = int(data.get("eval_seed", 0))
        raw_cells = data.get("cells", "default")
        if raw_cells == "default":
            cells = default_grid_cells(eval_seed=eval_seed)
        else:
            cells = tuple(
                TaskConfig(
                    nss=int(c["nss"]),
                    cci=int(c["cci"]),
                    n_way=int(c.get("n_way", 5)),
                    k_shot=int(c.get("k_shot", 1)),
                    k_target=int(c.get("k_target", 5)),
                    overwrite=bool(c.get("overwrite", False)),
                    seed=int(c.get("seed", eval_seed)),
                )
                for c in raw_cells
            )
        for config in cells:
            violations = validate_config(config)
            if violations:
                raise PlanError(f"invalid cell {config.to_dict()}: {'; '.join(violations)}")
        learners = []
        for entry in data["learners"]:
            kind, params = learner_spec_from_dict(entry)
            learners.append(LearnerSpec(str(entry.get("name", kind.value)), kind, params))
        return BenchPlan(
            pack_paths=dict(data.get("packs", {})),
            cells=cells,
            learners=tuple(learners),
            episodes=int(data.get("episodes", 600)),
            seeds=tuple(int(s) for s in data.get("seeds", (0, 1, 2))),
        )
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise PlanError(f"malformed benchmark plan: {exc}") from exc


def load_plan(path: str | Path) -> BenchPlan:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise PlanError("plan file must hold a JSON object")
    return plan_from_dict(data)


def save_plan(plan: BenchPlan, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(plan_to_dict(plan), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
