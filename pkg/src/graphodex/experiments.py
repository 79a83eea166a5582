"""Fixed-test 10-fold cross-validation over the seven language configurations.

Splits hold the test set fixed across folds and re-draw train/validation
from the remainder each fold.  When the manifest links a writer's forms
(``writer_id``), split selection moves whole writers so the inter- and
mixed-language configurations test on the held-out writers' other-language
forms; without linkage the split falls back to independent form selection.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from graphodex import aggregate
from graphodex.errors import DataError, GraphodexError, IOFailure, UsageError
from graphodex.model import ArchConfig, Hyper, build_network, train
from graphodex.patching import (
    FormRecord,
    PatchDataset,
    PatchSpec,
    balance_forms,
    child_rng,
)

METHOD_LABELS = {"majority_vote": "Majority vote", "average_softmax": "Avg. softmax"}

REPORT_COLUMNS = (
    "Experiment",
    "Train",
    "Test",
    "Accuracy Method",
    "Avg",
    "Std Dev",
    "Min",
    "Max",
)

# The seven language configurations, in report order.
SUITE_CASES = (
    ("Intra-Language", ("HE",), ("HE",)),
    ("Intra-Language", ("EN",), ("EN",)),
    ("Inter-Language", ("HE",), ("EN",)),
    ("Inter-Language", ("EN",), ("HE",)),
    ("Mixed-Language", ("HE", "EN"), ("HE",)),
    ("Mixed-Language", ("HE", "EN"), ("EN",)),
    ("Mixed-Language", ("HE", "EN"), ("HE", "EN")),
)


def _lang_label(langs: tuple[str, ...]) -> str:
    return "+".join(langs)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: str  # Intra-Language | Inter-Language | Mixed-Language
    train_langs: tuple[str, ...]
    test_langs: tuple[str, ...]
    spec: PatchSpec
    hyper: Hyper
    arch: ArchConfig
    folds: int = 10
    seed: int = 42
    same_writers: bool = True

    def __post_init__(self):
        if not self.train_langs or not self.test_langs:
            raise UsageError("train and test language sets must be non-empty")
        if self.folds < 2:
            raise UsageError("cross-validation needs at least 2 folds")


@dataclass(frozen=True)
class Split:
    """Fixed test ids plus per-fold train/validation partitions."""

    test_ids: tuple[str, ...]
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]  # (train, val) per fold
    mode: str  # "same_writers" | "form_level"

    def fold(self, i: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return self.folds[i]


def _groups_of(forms: list[FormRecord], by_writer: bool) -> list[list[FormRecord]]:
    groups: dict[str, list[FormRecord]] = {}
    for f in forms:
        key = (f.writer_id or f.form_id) if by_writer else f.form_id
        groups.setdefault(key, []).append(f)
    return [groups[k] for k in sorted(groups)]


def _take_groups(
    groups: list[list[FormRecord]],
    target: int,
    rng: np.random.Generator,
) -> tuple[list[list[FormRecord]], list[list[FormRecord]]]:
    """Greedily pick randomly ordered groups until ``target`` forms are taken."""
    order = rng.permutation(len(groups))
    taken, rest, count = [], [], 0
    for gi in order:
        g = groups[gi]
        if count + len(g) <= target:
            taken.append(g)
            count += len(g)
        else:
            rest.append(g)
    return taken, rest


def make_splits(
    forms: list[FormRecord],
    folds: int,
    seed: int,
    same_writers: bool = True,
) -> Split:
    """Fixed 20% test (stratified by gender), then per-fold 10% validation
    drawn from the remainder; the rest trains.  Fractions are of the whole
    set, rounded down, remainder to train."""
    n = len(forms)
    if n < folds or n < 10:
        raise DataError(f"too few forms to split: {n}")
    by_writer = same_writers and any(f.writer_id for f in forms)
    test_target = n // 5
    val_target = n // 10
    if test_target < 2 or val_target < 1:
        raise DataError(f"too few forms to split: {n}")

    rng = child_rng(seed, "split-test")
    test_groups: list[list[FormRecord]] = []
    rest_groups: list[list[FormRecord]] = []
    # Stratify the fixed test set by gender; odd targets give the extra
    # form to the female side.
    per_gender = {"male": test_target // 2, "female": test_target - test_target // 2}
    for gender in ("male", "female"):
        pool = _groups_of([f for f in forms if f.gender == gender], by_writer)
        taken, rest = _take_groups(pool, per_gender[gender], rng)
        test_groups.extend(taken)
        rest_groups.extend(rest)

    test_ids = tuple(f.form_id for g in test_groups for f in g)
    fold_parts = []
    for k in range(folds):
        fold_rng = child_rng(seed, "split-fold", k)
        val_groups, train_groups = _take_groups(rest_groups, val_target, fold_rng)
        val_ids = tuple(f.form_id for g in val_groups for f in g)
        train_ids = tuple(f.form_id for g in train_groups for f in g)
        fold_parts.append((train_ids, val_ids))
    return Split(
        test_ids=test_ids,
        folds=tuple(fold_parts),
        mode="same_writers" if by_writer else "form_level",
    )


def _default_predictor_factory(
    config: ExperimentConfig, fold_index: int
):
    def factory(train_x, train_y, val_x, val_y):
        fold_seed = int(
            child_rng(config.seed, "fold-train", config.name, fold_index).integers(2**31)
        )
        net = build_network(config.arch, seed=fold_seed)
        hyper = Hyper(
            epochs=config.hyper.epochs,
            batch_size=config.hyper.batch_size,
            rho=config.hyper.rho,
            epsilon=config.hyper.epsilon,
            seed=fold_seed,
        )
        train(net, train_x, train_y, val_x, val_y, hyper)
        return lambda patches: net.predict_proba(patches)[:, 1]

    return factory


def run_fold(
    config: ExperimentConfig,
    split: Split,
    dataset: PatchDataset,
    fold_index: int,
    predictor_factory=None,
) -> dict[str, float]:
    """Train on the fold's train-language patches, score the fixed test forms.

    Returns form-level accuracy per aggregation method.
    """
    try:
        train_ids, val_ids = split.fold(fold_index)
        lang = lambda fid: dataset.form(fid).record.language
        train_ids = [i for i in train_ids if lang(i) in config.train_langs]
        val_ids = [i for i in val_ids if lang(i) in config.train_langs]
        test_ids = [i for i in split.test_ids if lang(i) in config.test_langs]
        if not train_ids or not test_ids:
            raise DataError("empty train or test selection")
        train_x, train_y = dataset.stack(train_ids)
        val_x, val_y = dataset.stack(val_ids) if val_ids else (None, None)
        factory = predictor_factory or _default_predictor_factory(config, fold_index)
        predict = factory(train_x, train_y, val_x, val_y)

        correct = {m: 0 for m in aggregate.METHODS}
        for fid in test_ids:
            fp = dataset.form(fid)
            p_female = np.asarray(predict(fp.patches), dtype=np.float64)
            if aggregate.majority_vote(p_female, fid).decision == fp.record.gender:
                correct["majority_vote"] += 1
            if aggregate.average_softmax(p_female, fid).decision == fp.record.gender:
                correct["average_softmax"] += 1
        return {m: correct[m] / len(test_ids) for m in aggregate.METHODS}
    except GraphodexError as exc:
        raise type(exc)(f"{config.name} fold {fold_index}: {exc}") from exc


@dataclass
class ExperimentReport:
    name: str
    experiment: str
    train_label: str
    test_label: str
    mode: str
    fold_accuracies: dict[str, list[float]]
    stats: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.stats:
            self.stats = {
                m: summarize_accuracies(a) for m, a in self.fold_accuracies.items()
            }

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "experiment": self.experiment,
            "train": self.train_label,
            "test": self.test_label,
            "mode": self.mode,
            "fold_accuracies": self.fold_accuracies,
            "stats": self.stats,
        }


def summarize_accuracies(accs: list[float]) -> dict[str, float]:
    """Population statistics of raw fold accuracies."""
    a = np.asarray(accs, dtype=np.float64)
    return {
        "avg": float(a.mean()),
        "std_dev": float(a.std()),  # population, not sample
        "min": float(a.min()),
        "max": float(a.max()),
    }


def cross_validate(
    config: ExperimentConfig,
    dataset: PatchDataset,
    forms: list[FormRecord],
    predictor_factory=None,
) -> ExperimentReport:
    """Balance the config's language pool, split once, run every fold."""
    pool = [f for f in forms if f.language in set(config.train_langs) | set(config.test_langs)]
    by_writer = config.same_writers and any(f.writer_id for f in pool)
    balanced = balance_forms(
        pool, child_rng(config.seed, "balance", config.name), by_writer=by_writer
    )
    split = make_splits(
        balanced, config.folds, config.seed, same_writers=config.same_writers
    )
    fold_accs: dict[str, list[float]] = {m: [] for m in aggregate.METHODS}
    for k in range(config.folds):
        accs = run_fold(config, split, dataset, k, predictor_factory)
        for m in aggregate.METHODS:
            fold_accs[m].append(accs[m])
    return ExperimentReport(
        name=config.name,
        experiment=config.experiment,
        train_label=_lang_label(config.train_langs),
        test_label=_lang_label(config.test_langs),
        mode=split.mode,
        fold_accuracies=fold_accs,
    )


def make_suite_configs(
    spec: PatchSpec,
    hyper: Hyper,
    arch: ArchConfig,
    folds: int = 10,
    seed: int = 42,
    same_writers: bool = True,
) -> list[ExperimentConfig]:
    configs = []
    for experiment, train_langs, test_langs in SUITE_CASES:
        name = f"{_lang_label(train_langs)}->{_lang_label(test_langs)}"
        configs.append(
            ExperimentConfig(
                name=name,
                experiment=experiment,
                train_langs=train_langs,
                test_langs=test_langs,
                spec=spec,
                hyper=hyper,
                arch=arch,
                folds=folds,
                seed=seed,
                same_writers=same_writers,
            )
        )
    return configs


def run_suite(
    forms: list[FormRecord],
    dataset: PatchDataset,
    spec: PatchSpec,
    hyper: Hyper,
    arch: ArchConfig,
    folds: int = 10,
    seed: int = 42,
    same_writers: bool = True,
    predictor_factory=None,
) -> list[ExperimentReport]:
    """Run all seven language configurations over one patch dataset."""
    present = {f.language for f in forms}
    configs = make_suite_configs(spec, hyper, arch, folds, seed, same_writers)
    blocked = [
        c.name
        for c in configs
        if not (set(c.train_langs) | set(c.test_langs)) <= present
    ]
    if blocked:
        raise DataError(
            f"manifest lacks languages for configurations: {', '.join(blocked)}"
        )
    return [cross_validate(c, dataset, forms, predictor_factory) for c in configs]


def _fmt_pct(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def _fmt_std(x: float) -> str:
    # Std dev is reported in percentage points, without the % sign.
    return f"{100.0 * x:.2f}"


def report_rows(reports: list[ExperimentReport]) -> list[list[str]]:
    rows = []
    for rep in reports:
        for method in aggregate.METHODS:
            s = rep.stats[method]
            rows.append(
                [
                    rep.experiment,
                    rep.train_label,
                    rep.test_label,
                    METHOD_LABELS[method],
                    _fmt_pct(s["avg"]),
                    _fmt_std(s["std_dev"]),
                    _fmt_pct(s["min"]),
                    _fmt_pct(s["max"]),
                ]
            )
    return rows


def render_csv(reports: list[ExperimentReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    writer.writerows(report_rows(reports))
    return buf.getvalue()


def render_markdown(reports: list[ExperimentReport]) -> str:
    lines = [
        "| " + " | ".join(REPORT_COLUMNS) + " |",
        "|" + "|".join(" --- " for _ in REPORT_COLUMNS) + "|",
    ]
    for row in report_rows(reports):
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def parse_markdown(text: str) -> list[list[str]]:
    """Read a rendered markdown table back into rows (round-trip check)."""
    rows = []
    for line in text.strip().splitlines():
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        if all(set(c) <= {"-", " ", ""} or c == "---" for c in cells):
            continue
        rows.append(cells)
    return rows


def render_report(
    reports: list[ExperimentReport],
    out_dir: str | Path,
    seed: int,
    metadata: dict | None = None,
) -> dict[str, Path]:
    """Write CSV, Markdown, and JSON reports; returns the paths."""
    if not reports:
        raise DataError("no reports to render")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "csv": out_dir / "report.csv",
            "md": out_dir / "report.md",
            "json": out_dir / "report.json",
        }
        paths["csv"].write_text(render_csv(reports), encoding="utf-8")
        paths["md"].write_text(render_markdown(reports), encoding="utf-8")
        doc = {
            "seed": seed,
            "metadata": metadata or {},
            "reports": [r.to_dict() for r in reports],
        }
        paths["json"].write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IOFailure(f"cannot write reports to {out_dir}: {exc}") from exc
    return paths
