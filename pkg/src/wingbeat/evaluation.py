"""Stratified k-fold cross-validation, confusion matrices and metrics."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import models, species
from .errors import StratificationError, TrainingAborted
from .features import stack_patches
from .nn import OptimizerState, one_hot, train

log = logging.getLogger(__name__)

METRICS = ("accuracy", "precision", "recall", "f1")


# --- folds -----------------------------------------------------------------


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold):
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold):
        return np.flatnonzero(self.assignments != fold)


def _label_indices(labels):
    return np.array([lb.index if isinstance(lb, species.SpeciesLabel) else int(lb) for lb in labels], dtype=np.int64)


def make_stratified_folds(labels, k=10, seed=0):
    """Shuffle each class with the seed and deal it round-robin over the folds.

    The dealing position carries over from one class to the next so fold sizes stay
    balanced overall, not only per class.
    """
    y = _label_indices(labels)
    if k < 2:
        raise StratificationError("need at least 2 folds")
    classes, counts = np.unique(y, return_counts=True)
    small = [species.label(int(c)).name for c, n in zip(classes, counts) if n < k]
    if small:
        raise StratificationError(f"classes with fewer than {k} patches: {', '.join(small)}")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(y == c))
        assign[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return FoldPlan(k, assign, seed)


def make_grouped_folds(labels, groups, k=10, seed=0):
    """Folds that never split a group (source file) across train and test.

    Within each class, groups are shuffled and then placed largest-first into the fold
    currently holding the fewest patches of that class.
    """
    y = _label_indices(labels)
    groups = np.asarray(groups)
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        names = sorted(set(groups[idx].tolist()))
        if len(names) < k:
            raise StratificationError(
                f"class {species.label(int(c)).name} has {len(names)} source files; grouped folding needs >= {k}"
            )
        names = [names[i] for i in rng.permutation(len(names))]
        sizes = {g: int(np.sum(groups[idx] == g)) for g in names}
        load = np.zeros(k, dtype=np.int64)
        for g in sorted(names, key=lambda g: -sizes[g]):
            f = int(np.argmin(load))
            assign[idx[groups[idx] == g]] = f
            load[f] += sizes[g]
    return FoldPlan(k, assign, seed)


# --- metrics ---------------------------------------------------------------


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes, both in ``classes`` order."""

    counts: np.ndarray
    classes: tuple

    @classmethod
    def from_predictions(cls, y_true, y_pred, classes):
        classes = tuple(classes)
        pos = {c: i for i, c in enumerate(classes)}
        cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
        np.add.at(cm, (np.array([pos[t] for t in y_true], dtype=np.int64), np.array([pos[p] for p in y_pred], dtype=np.int64)), 1)
        return cls(cm, classes)

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        if self.classes != other.classes:
            raise ValueError("confusion matrices over different classes")
        return ConfusionMatrix(self.counts + other.counts, self.classes)


@dataclass
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    scope: str = "macro"
    tp: float = None
    fp: float = None
    fn: float = None
    tn: float = None

    def as_dict(self):
        return {m: getattr(self, m) for m in METRICS}


def _ratio(a, b):
    return float(a) / float(b) if b > 0 else 0.0


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def class_counts(counts, i):
    counts = np.asarray(counts, dtype=np.float64)
    tp = counts[i, i]
    fp = counts[:, i].sum() - tp
    fn = counts[i, :].sum() - tp
    tn = counts.sum() - tp - fp - fn
    return tp, fp, fn, tn


def metrics_from_confusion(cm, positive=None, classes_present=None):
    """Accuracy/precision/recall/F1 from a confusion matrix.

    ``positive`` (a class in ``cm.classes``) gives the one-class view; otherwise the
    macro average over ``classes_present`` (default: every class) is returned.
    Precision and recall with an empty denominator count as 0.
    """
    counts = np.asarray(cm.counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty confusion matrix")
    accuracy = float(np.trace(counts) / total)
    if positive is not None:
        i = cm.classes.index(positive)
        tp, fp, fn, tn = class_counts(counts, i)
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        return MetricSet(accuracy, p, r, _f1(p, r), scope=str(positive), tp=tp, fp=fp, fn=fn, tn=tn)
    present = cm.classes if classes_present is None else tuple(classes_present)
    per = [metrics_from_confusion(cm, c) for c in present]
    return MetricSet(
        accuracy,
        float(np.mean([m.precision for m in per])),
        float(np.mean([m.recall for m in per])),
        float(np.mean([m.f1 for m in per])),
        scope="macro",
    )


def per_class_metrics(cm, classes_present=None):
    present = cm.classes if classes_present is None else tuple(classes_present)
    return {c: metrics_from_confusion(cm, c) for c in present}


def summarize(metric_sets):
    """Mean and sample (n-1) standard deviation of each metric across folds."""
    out = {}
    for m in METRICS:
        v = np.array([getattr(s, m) for s in metric_sets], dtype=np.float64)
        out[m] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0}
    return out


# --- cross-validation ------------------------------------------------------


@dataclass
class TrainParams:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-7
    dropout_rate: float = models.DROPOUT_RATE
    binary_output: str = "sigmoid"

    def optimizer(self):
        return OptimizerState(self.learning_rate, self.rho, self.epsilon)

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class FoldResult:
    fold: int
    confusion: ConfusionMatrix
    metrics: MetricSet
    per_class: dict = field(default_factory=dict)
    loss_curves: dict = field(default_factory=dict)


@dataclass
class CVReport:
    strategy: str
    folds: list
    summary: dict
    confusion: ConfusionMatrix
    classes_present: tuple
    plan: FoldPlan = None

    @property
    def fold_metrics(self):
        return [f.metrics for f in self.folds]


def _seed_for(seed, *keys):
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _binary_targets(y):
    """Unit 0 for the target species, unit 1 for everything else."""
    return one_hot(np.where(y == species.TARGET_LABEL.index, models.POSITIVE_UNIT, models.NEGATIVE_UNIT), 2)


def _fit_binary(x, y, input_shape, params, seed, meta):
    net = models.build_binary(input_shape, seed=seed, output_activation=params.binary_output, dropout_rate=params.dropout_rate)
    return train(net, x, _binary_targets(y), params.epochs, params.batch_size, seed, params.optimizer(), meta)


def _fit_multiclass(x, y, input_shape, params, seed, meta):
    net = models.build_multiclass(input_shape, seed=seed, dropout_rate=params.dropout_rate)
    return train(net, x, one_hot(y, species.N_CLASSES), params.epochs, params.batch_size, seed, params.optimizer(), meta)


def _make_plan(y, groups, k, seed, group_by_file):
    if group_by_file:
        return make_grouped_folds(y, groups, k, seed)
    return make_stratified_folds(y, k, seed)


def _plan_for(patches, k, seed, group_by_file, y):
    return _make_plan(y, [p.source_id.split("#seg")[0] for p in patches], k, seed, group_by_file)


def cross_validate(strategy, patches, cfg=None, params=None, k=10, seed=0, group_by_file=False):
    """k-fold CV of the binary (target vs rest) or multiclass strategy.

    The folds are stratified on the original species labels for both strategies.
    """
    if strategy not in ("binary", "multiclass"):
        raise ValueError(f"unknown strategy {strategy!r}")
    params = params or TrainParams()
    x, y = stack_patches(patches)
    plan = _plan_for(patches, k, seed, group_by_file, y)
    input_shape = x.shape[1:]
    if strategy == "binary":
        pos, neg = species.TARGET, "non_" + species.TARGET
        classes = (pos, neg)
        truth = np.where(y == species.TARGET_LABEL.index, pos, neg)
        present = classes
    else:
        classes = species.SPECIES
        truth = np.array([species.SPECIES[i] for i in y])
        present = tuple(species.SPECIES[i] for i in sorted(set(y.tolist())))
    folds = []
    for f in range(k):
        tr, te = plan.train_indices(f), plan.test_indices(f)
        s = _seed_for(seed, f)
        meta = {"fold": f, "strategy": strategy, "config_id": getattr(cfg, "config_id", None)}
        try:
            if strategy == "binary":
                model = _fit_binary(x[tr], y[tr], input_shape, params, s, meta)
                pred = np.where(models.binary_decision(model.predict(x[te])), pos, neg)
            else:
                model = _fit_multiclass(x[tr], y[tr], input_shape, params, s, meta)
                pred = np.array([species.SPECIES[i] for i in model.predict(x[te]).argmax(axis=1)])
        except TrainingAborted as exc:
            raise exc.with_fold(f) from None
        cm = ConfusionMatrix.from_predictions(truth[te], pred, classes)
        if strategy == "binary":
            ms = metrics_from_confusion(cm, pos)
            per = {pos: ms}
        else:
            ms = metrics_from_confusion(cm, classes_present=present)
            per = per_class_metrics(cm, present)
        folds.append(FoldResult(f, cm, ms, per, {"model": model.metadata["loss_curve"]}))
        log.info("fold %d/%d %s: %s", f + 1, k, strategy, ms.as_dict())
    total = folds[0].confusion
    for fr in folds[1:]:
        total = total + fr.confusion
    return CVReport(strategy, folds, summarize([fr.metrics for fr in folds]), total, present, plan)


@dataclass
class EnsembleFold:
    fold: int
    votes: np.ndarray  # (n_test, n_voters) bool
    truth: np.ndarray  # species index per test patch
    test_indices: np.ndarray
    train_sets: dict  # negative species -> training patch indices
    by_threshold: dict  # threshold -> MetricSet
    base: dict  # negative species -> MetricSet
    confusion_by_threshold: dict


@dataclass
class EnsembleReport:
    thresholds: tuple
    negatives: tuple
    folds: list
    summary: dict  # threshold -> summarize(...)
    base_summary: dict  # negative species -> summarize(...)
    base_mean: dict  # summarize over every (fold, base model) metric set

    def threshold_metrics(self, threshold):
        return [f.by_threshold[threshold] for f in self.folds]


def _binary_cm(is_target, predicted_positive):
    pos, neg = species.TARGET, "non_" + species.TARGET
    return ConfusionMatrix.from_predictions(
        np.where(is_target, pos, neg), np.where(predicted_positive, pos, neg), (pos, neg)
    )


def cross_validate_ensemble(patches, cfg=None, params=None, k=10, seed=0, thresholds=(0.5, 0.6, 0.7, 0.8, 0.9, 0.95), group_by_file=False):
    """Per fold: one stratified test set, one base model per negative species.

    Each base model trains on the fold's remaining target patches plus the remaining
    patches of its negative species; all base models and the voting ensemble are
    scored on the shared test set.
    """
    params = params or TrainParams()
    x, y = stack_patches(patches)
    t = species.TARGET_LABEL.index
    if t not in set(y.tolist()):
        raise StratificationError(f"no {species.TARGET} patches")
    negatives = tuple(species.SPECIES[i] for i in sorted(set(y.tolist()) - {t}))
    if not negatives:
        raise StratificationError("the ensemble needs at least one negative species")
    plan = _plan_for(patches, k, seed, group_by_file, y)
    thresholds = tuple(float(th) for th in thresholds)
    for th in thresholds:
        models.vote_threshold_to_min_votes(th, len(negatives))
    folds = []
    for f in range(k):
        tr, te = plan.train_indices(f), plan.test_indices(f)
        is_target = y[te] == t
        votes, base, train_sets = [], {}, {}
        for j, neg in enumerate(negatives):
            n_idx = species.label(neg).index
            idx = tr[(y[tr] == t) | (y[tr] == n_idx)]
            train_sets[neg] = idx
            s = _seed_for(seed, f, j + 1)
            meta = {"fold": f, "strategy": "ensemble-base", "negative_species": neg, "config_id": getattr(cfg, "config_id", None)}
            try:
                model = _fit_binary(x[idx], y[idx], x.shape[1:], params, s, meta)
            except TrainingAborted as exc:
                raise exc.with_fold(f) from None
            v = models.binary_decision(model.predict(x[te]))
            votes.append(v)
            base[neg] = metrics_from_confusion(_binary_cm(is_target, v), species.TARGET)
        votes = np.stack(votes, axis=1)
        n_pos = votes.sum(axis=1)
        by_th, cms = {}, {}
        for th in thresholds:
            decision = models.ensemble_decision(n_pos, th, len(negatives))
            cm = _binary_cm(is_target, decision)
            cms[th] = cm
            by_th[th] = metrics_from_confusion(cm, species.TARGET)
        folds.append(EnsembleFold(f, votes, y[te], te, train_sets, by_th, base, cms))
        log.info("ensemble fold %d/%d: %s", f + 1, k, {th: round(m.recall, 3) for th, m in by_th.items()})
    summary = {th: summarize([fo.by_threshold[th] for fo in folds]) for th in thresholds}
    base_summary = {neg: summarize([fo.base[neg] for fo in folds]) for neg in negatives}
    base_mean = summarize([fo.base[neg] for fo in folds for neg in negatives])
    return EnsembleReport(thresholds, negatives, folds, summary, base_summary, base_mean)
