import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wingbeat import evaluation as ev
from wingbeat import species
from wingbeat.errors import StratificationError
from wingbeat.features import FeaturePatch

A, B = species.label("Aedes_aegypti"), species.label("Culex_tarsalis")


def test_folds_exact_divisibility():
    labels = [A] * 100 + [B] * 50
    plan = ev.make_stratified_folds(labels, k=10, seed=3)
    y = np.array([lb.index for lb in labels])
    for f in range(10):
        te = plan.test_indices(f)
        assert (y[te] == A.index).sum() == 10 and (y[te] == B.index).sum() == 5


def test_folds_round_robin_remainder():
    plan = ev.make_stratified_folds([A] * 23, k=10)
    sizes = np.bincount(plan.assignments, minlength=10)
    assert set(sizes.tolist()) == {2, 3} and sizes.sum() == 23


def test_folds_deterministic_and_seeded():
    labels = [A] * 40 + [B] * 30
    a = ev.make_stratified_folds(labels, 5, seed=1).assignments
    assert (a == ev.make_stratified_folds(labels, 5, seed=1).assignments).all()
    assert not (a == ev.make_stratified_folds(labels, 5, seed=2).assignments).all()


def test_class_smaller_than_k():
    with pytest.raises(StratificationError, match="Culex_tarsalis"):
        ev.make_stratified_folds([A] * 20 + [B] * 3, k=5)


@settings(max_examples=100, deadline=None)
@given(counts=st.lists(st.integers(5, 60), min_size=1, max_size=23), k=st.integers(2, 5), seed=st.integers(0, 99))
def test_folds_partition_and_stratify(counts, k, seed):
    y = np.concatenate([np.full(n, i) for i, n in enumerate(counts)])
    plan = ev.make_stratified_folds(y, k, seed)
    assert sorted(np.concatenate([plan.test_indices(f) for f in range(k)]).tolist()) == list(range(len(y)))
    for c in range(len(counts)):
        per = np.bincount(plan.assignments[y == c], minlength=k)
        assert per.max() - per.min() <= 1
    sizes = np.bincount(plan.assignments, minlength=k)
    assert sizes.max() - sizes.min() <= 1


def test_grouped_folds_keep_files_together():
    y = np.repeat([0, 1], 60)
    groups = np.array([f"f{i // 6}" for i in range(120)])
    plan = ev.make_grouped_folds(y, groups, k=5, seed=0)
    for g in set(groups):
        assert len(set(plan.assignments[groups == g])) == 1
    with pytest.raises(StratificationError):
        ev.make_grouped_folds(y, groups, k=20)


def brute_force(y_true, y_pred, classes, positive):
    tp = fp = fn = tn = 0
    for t, p in zip(y_true, y_pred):
        if t == positive and p == positive:
            tp += 1
        elif p == positive:
            fp += 1
        elif t == positive:
            fn += 1
        else:
            tn += 1
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    acc = sum(t == p for t, p in zip(y_true, y_pred)) / len(y_true)
    return acc, prec, rec, f1


def test_metrics_match_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        c = int(rng.integers(2, 24))
        n = int(rng.integers(1, 300))
        classes = tuple(range(c))
        yt = rng.integers(0, c, n)
        yp = np.where(rng.random(n) < 0.6, yt, rng.integers(0, c, n))
        cm = ev.ConfusionMatrix.from_predictions(yt, yp, classes)
        assert cm.total == n
        per = [brute_force(yt, yp, classes, k) for k in classes]
        for k in classes:
            m = ev.metrics_from_confusion(cm, k)
            assert (m.accuracy, m.precision, m.recall, m.f1) == pytest.approx(per[k], abs=1e-12)
        macro = ev.metrics_from_confusion(cm)
        assert macro.precision == pytest.approx(np.mean([p[1] for p in per]), abs=1e-12)
        assert macro.recall == pytest.approx(np.mean([p[2] for p in per]), abs=1e-12)
        assert macro.f1 == pytest.approx(np.mean([p[3] for p in per]), abs=1e-12)


def test_averaged_binary_confusion_matrix():
    cm = ev.ConfusionMatrix(np.array([[243.9, 31.7], [26.3, 2170.9]]), ("pos", "neg"))
    m = ev.metrics_from_confusion(cm, "pos")
    assert 100 * m.accuracy == pytest.approx(97.65, abs=0.5)
    assert 100 * m.recall == pytest.approx(88.50, abs=0.5)
    assert 100 * m.precision == pytest.approx(90.27, abs=0.01)
    assert 100 * m.recall == pytest.approx(88.49, abs=0.5)


def test_degenerate_matrices():
    diag = ev.ConfusionMatrix(np.diag([3, 4, 5]), (0, 1, 2))
    m = ev.metrics_from_confusion(diag)
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1, 1, 1, 1)
    col = ev.ConfusionMatrix(np.array([[5, 0], [5, 0]]), ("a", "b"))
    assert ev.metrics_from_confusion(col).accuracy == 0.5
    assert ev.metrics_from_confusion(col, "a").recall == 1
    b = ev.metrics_from_confusion(col, "b")
    assert (b.recall, b.precision, b.f1) == (0, 0, 0)
    with pytest.raises(ValueError):
        ev.metrics_from_confusion(ev.ConfusionMatrix(np.zeros((2, 2)), ("a", "b")))


def test_summarize_sample_std():
    sets = [ev.MetricSet(a, a, a, a) for a in (0.5, 0.7, 0.9)]
    s = ev.summarize(sets)
    assert s["accuracy"]["mean"] == pytest.approx(0.7)
    assert s["accuracy"]["std"] == pytest.approx(0.2)


# --- cross-validation on tiny patches ----------------------------------------


def tiny_patches(labels, rng, separable=True, n_bands=9, n_frames=9):
    out = []
    for i, lb in enumerate(labels):
        v = rng.random((n_bands, n_frames)).astype(np.float32) * 0.3
        if separable:
            row = 2 + 4 * (lb.index % 2) if lb.index < 2 else lb.index % n_bands
            v[row] += 0.7
        out.append(FeaturePatch(v, lb, f"file{lb.index}_{i % 7}", i))
    return out


FAST = ev.TrainParams(epochs=4, batch_size=16)


def test_binary_cv_separable_and_consistent():
    rng = np.random.default_rng(0)
    patches = tiny_patches([A] * 50 + [B] * 50, rng)
    rep = ev.cross_validate("binary", patches, params=FAST, k=5, seed=0)
    assert len(rep.folds) == 5
    assert rep.summary["accuracy"]["mean"] >= 0.95
    accs = [f.metrics.accuracy for f in rep.folds]
    assert rep.summary["accuracy"]["mean"] == pytest.approx(np.mean(accs))
    assert rep.summary["accuracy"]["std"] == pytest.approx(np.std(accs, ddof=1))
    sizes = [f.confusion.total for f in rep.folds]
    # accuracy of the summed matrix is the size-weighted fold mean
    pooled = ev.metrics_from_confusion(rep.confusion, species.TARGET).accuracy
    assert pooled == pytest.approx(np.average(accs, weights=sizes))
    assert rep.confusion.total == 100


def test_binary_cv_chance_level():
    rng = np.random.default_rng(1)
    labels = [A] * 200 + [B] * 200
    patches = tiny_patches(labels, rng, separable=False)
    rep = ev.cross_validate("binary", patches, params=FAST, k=10, seed=0)
    assert abs(rep.summary["accuracy"]["mean"] - 0.5) <= 0.05


def test_multiclass_cv_macro_over_present():
    rng = np.random.default_rng(2)
    labs = [species.label(i) for i in (0, 3, 5)]
    patches = tiny_patches([lb for lb in labs for _ in range(30)], rng, n_bands=29, n_frames=10)
    rep = ev.cross_validate("multiclass", patches, params=FAST, k=3, seed=0)
    assert rep.classes_present == tuple(lb.name for lb in labs)
    assert set(rep.folds[0].per_class) == set(rep.classes_present)
    assert rep.confusion.counts.shape == (23, 23)


def test_cv_is_deterministic():
    rng = np.random.default_rng(0)
    patches = tiny_patches([A] * 20 + [B] * 20, rng)
    a = ev.cross_validate("binary", patches, params=FAST, k=2, seed=5)
    b = ev.cross_validate("binary", patches, params=FAST, k=2, seed=5)
    assert a.summary == b.summary
    assert [f.loss_curves for f in a.folds] == [f.loss_curves for f in b.folds]


def test_ensemble_protocol():
    rng = np.random.default_rng(3)
    negs = [species.label(i) for i in (1, 2, 3)]
    labels = [A] * 30 + [lb for lb in negs for _ in range(30)]
    patches = tiny_patches(labels, rng)
    ths = (0.5, 0.6, 0.8, 0.9, 1.0)
    rep = ev.cross_validate_ensemble(patches, params=FAST, k=3, seed=0, thresholds=ths)
    assert rep.negatives == tuple(lb.name for lb in negs)
    for fo in rep.folds:
        test = set(fo.test_indices.tolist())
        for neg, idx in fo.train_sets.items():
            assert not test & set(idx.tolist())
            allowed = {A.index, species.label(neg).index}
            assert {labels[i].index for i in idx} == allowed
        # a single vote matrix feeds every threshold
        positives = [fo.confusion_by_threshold[th].counts[:, 0].sum() for th in ths]
        assert positives == sorted(positives, reverse=True)
        recalls = [fo.by_threshold[th].recall for th in ths]
        assert recalls == sorted(recalls, reverse=True)
    assert set(rep.base_summary) == set(rep.negatives)


def test_unknown_strategy():
    with pytest.raises(ValueError):
        ev.cross_validate("ensemble", [])
