"""Split protocol, fold running with stub predictors, and report rendering."""

import numpy as np
import pytest

from graphodex.aggregate import METHODS
from graphodex.errors import DataError
from graphodex.experiments import (
    REPORT_COLUMNS,
    SUITE_CASES,
    ExperimentConfig,
    ExperimentReport,
    cross_validate,
    make_splits,
    parse_markdown,
    render_csv,
    render_markdown,
    render_report,
    report_rows,
    run_fold,
    run_suite,
    summarize_accuracies,
)
from graphodex.model import ArchConfig, Hyper
from graphodex.patching import FormPatches, FormRecord, PatchDataset, PatchSpec

SPEC = PatchSpec(count=4, patch_height=16, patch_width=16, downscale_factor=4)
ARCH = ArchConfig(conv_filters=(2, 2, 2, 2), dense_units=4,
                  dropout_rates=(0.0, 0.0, 0.0), input_hw=(4, 4))
HYPER = Hyper(epochs=1, batch_size=4)


def _forms(n, languages=("HE",), writers=False):
    out = []
    for i in range(n):
        gender = "male" if i % 2 == 0 else "female"
        lang = languages[i % len(languages)]
        out.append(
            FormRecord(
                f"f{i:04d}", f"f{i:04d}.png", lang, gender,
                writer_id=f"w{i:04d}" if writers else None,
            )
        )
    return out


def _paired_forms(n_writers):
    """Each writer has one HE and one EN form, genders balanced."""
    out = []
    for i in range(n_writers):
        gender = "male" if i % 2 == 0 else "female"
        for lang in ("HE", "EN"):
            out.append(
                FormRecord(f"w{i:03d}_{lang.lower()}", "x.png", lang, gender,
                           writer_id=f"w{i:03d}")
            )
    return out


def _dataset(forms):
    """Synthetic per-form patches whose mean encodes the gender label."""
    rng = np.random.default_rng(0)
    fps = []
    for rec in forms:
        base = 0.25 if rec.gender == "male" else 0.75
        patches = np.clip(
            base + 0.05 * rng.standard_normal((SPEC.count, 4, 4)), 0, 1
        ).astype(np.float32)
        fps.append(FormPatches(rec, patches, np.zeros((SPEC.count, 2), np.int32)))
    return PatchDataset(spec=SPEC, seed=0, forms=fps)


def _config(train=("HE",), test=("HE",), folds=10, seed=42, **kw):
    return ExperimentConfig(
        name="test", experiment="Intra-Language", train_langs=train,
        test_langs=test, spec=SPEC, hyper=HYPER, arch=ARCH, folds=folds,
        seed=seed, **kw,
    )


def perfect_factory(train_x, train_y, val_x, val_y):
    # Oracle stub: brightness encodes the label by construction.
    return lambda patches: (patches.reshape(len(patches), -1).mean(axis=1) > 0.5) * 1.0


def constant_male_factory(train_x, train_y, val_x, val_y):
    return lambda patches: np.zeros(len(patches))


# -- make_splits ---------------------------------------------------------------


def test_382_forms_split_76_268_38():
    forms = _forms(382)
    split = make_splits(forms, folds=10, seed=1)
    assert len(split.test_ids) == 76
    for train_ids, val_ids in split.folds:
        assert len(val_ids) == 38
        assert len(train_ids) == 268


def test_fixed_test_across_folds():
    forms = _forms(382)
    split = make_splits(forms, folds=10, seed=3)
    assert len(split.folds) == 10
    # one fixed test set; only train/val reshuffle
    ids = set(split.test_ids)
    for train_ids, val_ids in split.folds:
        assert ids.isdisjoint(train_ids)
        assert ids.isdisjoint(val_ids)


@pytest.mark.parametrize("seed", range(100))
def test_partition_property_many_seeds(seed):
    forms = _forms(61)
    split = make_splits(forms, folds=3, seed=seed)
    all_ids = {f.form_id for f in forms}
    test = set(split.test_ids)
    for train_ids, val_ids in split.folds:
        train, val = set(train_ids), set(val_ids)
        assert test | train | val == all_ids
        assert not (test & train) and not (test & val) and not (train & val)
        assert len(train_ids) + len(val_ids) + len(split.test_ids) == 61


def test_test_set_gender_stratified():
    forms = _forms(382)
    for seed in range(20):
        split = make_splits(forms, folds=10, seed=seed)
        by_id = {f.form_id: f for f in forms}
        males = sum(1 for i in split.test_ids if by_id[i].gender == "male")
        females = len(split.test_ids) - males
        assert abs(males - females) <= 1


def test_writer_groups_stay_together():
    forms = _paired_forms(40)  # 80 forms, 40 writers
    split = make_splits(forms, folds=5, seed=0)
    assert split.mode == "same_writers"
    by_id = {f.form_id: f for f in forms}
    writer_of = lambda ids: {by_id[i].writer_id for i in ids}
    test_writers = writer_of(split.test_ids)
    assert len(split.test_ids) == 16  # 20% of 80, whole writers
    assert len(test_writers) == 8
    for train_ids, val_ids in split.folds:
        assert writer_of(train_ids).isdisjoint(test_writers)
        assert writer_of(val_ids).isdisjoint(test_writers)
        assert writer_of(val_ids).isdisjoint(writer_of(train_ids))


def test_same_writers_disabled_falls_back_to_forms():
    forms = _paired_forms(40)
    split = make_splits(forms, folds=5, seed=0, same_writers=False)
    assert split.mode == "form_level"


def test_too_few_forms():
    with pytest.raises(DataError):
        make_splits(_forms(8), folds=10, seed=0)


def test_split_deterministic():
    forms = _forms(60)
    a = make_splits(forms, folds=4, seed=9)
    b = make_splits(forms, folds=4, seed=9)
    assert a == b


# -- run_fold -------------------------------------------------------------------


def test_perfect_stub_scores_one():
    forms = _forms(40)
    split = make_splits(forms, folds=3, seed=1)
    accs = run_fold(_config(folds=3), split, _dataset(forms), 0, perfect_factory)
    assert accs == {m: 1.0 for m in METHODS}


def test_constant_male_stub_scores_base_rate():
    forms = _forms(40)
    split = make_splits(forms, folds=3, seed=1)
    accs = run_fold(_config(folds=3), split, _dataset(forms), 0, constant_male_factory)
    for m in METHODS:
        assert accs[m] == pytest.approx(0.5)


def test_fold_accuracies_bounded():
    forms = _forms(40)
    split = make_splits(forms, folds=3, seed=2)

    def noisy_factory(*a):
        rng = np.random.default_rng(0)
        return lambda patches: rng.random(len(patches))

    accs = run_fold(_config(folds=3), split, _dataset(forms), 1, noisy_factory)
    for m in METHODS:
        assert 0.0 <= accs[m] <= 1.0


def test_fold_error_annotated_with_fold():
    forms = _forms(40)
    split = make_splits(forms, folds=3, seed=1)
    cfg = _config(train=("EN",), test=("EN",), folds=3)  # no EN forms exist
    with pytest.raises(DataError, match="fold 2"):
        run_fold(cfg, split, _dataset(forms), 2, perfect_factory)


# -- cross_validate ----------------------------------------------------------------


def test_constant_accuracies_zero_std():
    forms = _forms(40)
    report = cross_validate(_config(folds=4), _dataset(forms), forms, perfect_factory)
    for m in METHODS:
        assert report.fold_accuracies[m] == [1.0] * 4
        assert report.stats[m]["std_dev"] == 0.0
        assert report.stats[m]["avg"] == 1.0


def test_hand_statistics():
    s = summarize_accuracies([0.7, 0.8])
    assert s["avg"] == pytest.approx(0.75)
    assert s["min"] == pytest.approx(0.7)
    assert s["max"] == pytest.approx(0.8)
    assert s["std_dev"] == pytest.approx(0.05)  # population std dev


def test_report_has_two_method_rows():
    forms = _forms(40)
    report = cross_validate(_config(folds=3), _dataset(forms), forms, perfect_factory)
    assert set(report.fold_accuracies) == set(METHODS)
    assert set(report.stats) == set(METHODS)


def test_stats_match_independent_recomputation():
    forms = _forms(40)

    def wobbly_factory(*a):
        state = {"i": 0}

        def predict(patches):
            state["i"] += 1
            rng = np.random.default_rng(state["i"])
            return rng.random(len(patches))

        return predict

    report = cross_validate(_config(folds=5), _dataset(forms), forms, wobbly_factory)
    for m in METHODS:
        accs = np.asarray(report.fold_accuracies[m])
        assert report.stats[m]["avg"] == float(accs.mean())
        assert report.stats[m]["std_dev"] == float(accs.std())
        assert report.stats[m]["min"] == float(accs.min())
        assert report.stats[m]["max"] == float(accs.max())


# -- run_suite ----------------------------------------------------------------------


def test_suite_runs_seven_named_configs():
    forms = _paired_forms(30)  # 60 forms across both languages
    reports = run_suite(
        forms, _dataset(forms), SPEC, HYPER, ARCH, folds=3, seed=5,
        predictor_factory=perfect_factory,
    )
    assert len(reports) == 7
    labels = [(r.experiment, r.train_label, r.test_label) for r in reports]
    assert labels == [
        ("Intra-Language", "HE", "HE"),
        ("Intra-Language", "EN", "EN"),
        ("Inter-Language", "HE", "EN"),
        ("Inter-Language", "EN", "HE"),
        ("Mixed-Language", "HE+EN", "HE"),
        ("Mixed-Language", "HE+EN", "EN"),
        ("Mixed-Language", "HE+EN", "HE+EN"),
    ]
    for r in reports:
        assert len(r.fold_accuracies["majority_vote"]) == 3
        assert len(r.fold_accuracies["average_softmax"]) == 3


def test_suite_missing_language_raises():
    forms = _forms(40, languages=("HE",))
    with pytest.raises(DataError, match="EN"):
        run_suite(forms, _dataset(forms), SPEC, HYPER, ARCH, folds=3, seed=5,
                  predictor_factory=perfect_factory)


def test_suite_deterministic():
    forms = _paired_forms(30)
    kw = dict(folds=3, seed=5, predictor_factory=perfect_factory)
    a = run_suite(forms, _dataset(forms), SPEC, HYPER, ARCH, **kw)
    b = run_suite(forms, _dataset(forms), SPEC, HYPER, ARCH, **kw)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_inter_language_counts_match_protocol():
    # 382 writers with paired forms: inter-language folds should train on
    # 268 forms of the train language and test on the 76 held-out writers'
    # other-language forms.
    forms = _paired_forms(382)
    seen = {}

    def counting_factory(train_x, train_y, val_x, val_y):
        seen["train"] = len(train_x)
        seen["val"] = len(val_x) if val_x is not None else 0
        return lambda patches: np.ones(len(patches))

    cfg = ExperimentConfig(
        name="inter", experiment="Inter-Language", train_langs=("HE",),
        test_langs=("EN",), spec=SPEC, hyper=HYPER, arch=ARCH, folds=2, seed=0,
    )
    ds = _dataset(forms)
    split_forms = [f for f in forms]  # pool = both languages
    report = cross_validate(cfg, ds, split_forms, counting_factory)
    assert seen["train"] == 268 * SPEC.count
    assert seen["val"] == 38 * SPEC.count
    assert report.mode == "same_writers"


# -- rendering ----------------------------------------------------------------------


def _fake_reports():
    reports = []
    for experiment, train, test in SUITE_CASES:
        accs = {
            "majority_vote": [0.7, 0.75, 0.8],
            "average_softmax": [0.72, 0.74, 0.79],
        }
        reports.append(
            ExperimentReport(
                name=f"{'+'.join(train)}->{'+'.join(test)}",
                experiment=experiment,
                train_label="+".join(train),
                test_label="+".join(test),
                mode="same_writers",
                fold_accuracies=accs,
            )
        )
    return reports


def test_rows_shape_and_formatting():
    rows = report_rows(_fake_reports())
    assert len(rows) == 14
    assert rows[0][0] == "Intra-Language"
    assert rows[0][3] == "Majority vote"
    assert rows[0][4] == "75.00%"
    assert rows[1][3] == "Avg. softmax"
    assert rows[0][5] == "4.08"  # population std of [.7,.75,.8] in points


def test_csv_columns():
    text = render_csv(_fake_reports())
    header = text.splitlines()[0].split(",")
    assert header == list(REPORT_COLUMNS)
    assert len(text.strip().splitlines()) == 15


def test_markdown_round_trip():
    reports = _fake_reports()
    parsed = parse_markdown(render_markdown(reports))
    assert parsed[0] == list(REPORT_COLUMNS)
    assert parsed[1:] == report_rows(reports)


def test_render_report_writes_files(tmp_path):
    paths = render_report(_fake_reports(), tmp_path, seed=1, metadata={"x": 1})
    for p in paths.values():
        assert p.exists()
    import json

    doc = json.loads(paths["json"].read_text())
    assert doc["seed"] == 1
    assert len(doc["reports"]) == 7


def test_render_report_unwritable_path(tmp_path):
    from graphodex.errors import IOFailure

    target = tmp_path / "file"
    target.write_text("x")  # a file where a directory is needed
    with pytest.raises(IOFailure):
        render_report(_fake_reports(), target / "sub", seed=1)


def test_suite_figures(tmp_path):
    from graphodex.figures import render_suite_figures

    paths = render_suite_figures(_fake_reports(), tmp_path)
    for p in paths.values():
        assert p.exists()
        assert p.stat().st_size > 1000
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
