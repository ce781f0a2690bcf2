"""Command line: ``wingbeat {stats,extract,train,evaluate,sweep,synth}``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, dataset, evaluation, features, models, species, synth
from .config import RunConfig, design_decisions, format_run_config, load_run_config
from .errors import ConfigError, WingbeatError
from .nn import one_hot, save_checkpoint, train
from .reports import OutputSet, SWEEP_COLUMNS, sweep_row, write_cv_report, write_ensemble_report

log = logging.getLogger("wingbeat")


def provenance(cfg, fcfg, extra=None):
    out = {
        "version": __version__,
        "run_config": cfg.as_dict(),
        "feature_config": fcfg.to_dict() if fcfg is not None else None,
        "design_decisions": design_decisions(cfg),
    }
    if extra:
        out.update(extra)
    return out


def load_patches(cfg, fcfg, entries=None):
    if entries is None:
        entries = dataset.load_manifest(cfg.manifest)
    clips = dataset.load_clips(entries, fcfg.sample_rate, split_segments=cfg.split_segments)
    skipped = []
    patches = features.extract_features(clips, fcfg, warnings=skipped)
    return patches, skipped


def _species_subset(patches, names):
    keep = {species.label(n).index for n in names}
    return [p for p in patches if p.label.index in keep]


def run_experiment(cfg):
    """Manifest -> features -> cross-validation -> reports in ``cfg.out``."""
    if not cfg.manifest:
        raise ConfigError("no manifest given")
    fcfg = cfg.feature_config()
    out = OutputSet(cfg.out)
    try:
        patches, skipped = load_patches(cfg, fcfg)
        params = cfg.train_params()
        prov = provenance(cfg, fcfg, {"n_patches": len(patches), "skipped_clips": skipped})
        if cfg.strategy == "ensemble":
            report = evaluation.cross_validate_ensemble(
                patches, fcfg, params, cfg.folds, cfg.seed, cfg.thresholds, cfg.group_by_file
            )
            write_ensemble_report(out, report, prov)
        else:
            report = evaluation.cross_validate(cfg.strategy, patches, fcfg, params, cfg.folds, cfg.seed, cfg.group_by_file)
            write_cv_report(out, report, prov)
        out.write_text("run_config.txt", format_run_config(cfg))
    except BaseException:
        out.discard()
        raise
    return report, out.written


def run_fft_sweep(cfg, config_ids=None):
    """Binary CV of the target vs ``cfg.negative`` for each feature configuration."""
    ids = tuple(config_ids or cfg.config_ids)
    fconfigs = [features.feature_config(i) for i in ids]
    pair = (species.TARGET, species.label(cfg.negative).name)
    out = OutputSet(cfg.out)
    try:
        entries = [e for e in dataset.load_manifest(cfg.manifest) if e.species.name in pair]
        clips = dataset.load_clips(entries, split_segments=cfg.split_segments)
        rows, fold_rows = [], []
        for fc in fconfigs:
            patches = features.extract_features(clips, fc)
            report = evaluation.cross_validate("binary", patches, fc, cfg.train_params(), cfg.folds, cfg.seed, cfg.group_by_file)
            rows.append(sweep_row(fc, report.summary))
            for fr in report.folds:
                fold_rows.append([fc.config_id, fr.fold, *[getattr(fr.metrics, m) for m in evaluation.METRICS]])
            log.info("config %d: %s", fc.config_id, {m: round(report.summary[m]["mean"], 4) for m in evaluation.METRICS})
        out.write_csv("sweep.csv", SWEEP_COLUMNS, rows)
        out.write_csv("sweep_folds.csv", ("config_id", "fold", *evaluation.METRICS), fold_rows)
        out.write_json("sweep_summary.json", {"species_pair": list(pair), "run": provenance(cfg, None, {"config_ids": list(ids)})})
    except BaseException:
        out.discard()
        raise
    return rows, out.written


def train_final(cfg):
    """Fit the chosen strategy on every patch and write checkpoint(s)."""
    fcfg = cfg.feature_config()
    patches, _ = load_patches(cfg, fcfg)
    x, y = features.stack_patches(patches)
    params = cfg.train_params()
    meta = {"config_id": fcfg.config_id, "feature_config": fcfg.to_dict(), "design_decisions": design_decisions(cfg)}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.strategy == "binary":
        net = models.build_binary(x.shape[1:], cfg.seed, params.binary_output, params.dropout_rate)
        t = one_hot((y != species.TARGET_LABEL.index).astype(int), 2)
        model = train(net, x, t, params.epochs, params.batch_size, cfg.seed, params.optimizer(), meta)
        path = out / "binary.wbm"
        save_checkpoint(path, model)
        return [path]
    if cfg.strategy == "multiclass":
        net = models.build_multiclass(x.shape[1:], cfg.seed, params.dropout_rate)
        model = train(net, x, one_hot(y, species.N_CLASSES), params.epochs, params.batch_size, cfg.seed, params.optimizer(), meta)
        path = out / "multiclass.wbm"
        save_checkpoint(path, model)
        return [path]
    t = species.TARGET_LABEL.index
    negatives = [species.SPECIES[i] for i in sorted(set(y.tolist()) - {t})]
    base = {}
    for j, neg in enumerate(negatives):
        idx = (y == t) | (y == species.label(neg).index)
        net = models.build_binary(x.shape[1:], cfg.seed + j + 1, params.binary_output, params.dropout_rate)
        tg = one_hot((y[idx] != t).astype(int), 2)
        base[neg] = train(net, x[idx], tg, params.epochs, params.batch_size, cfg.seed + j + 1, params.optimizer(), {**meta, "negative_species": neg})
    threshold = cfg.thresholds[-2] if len(cfg.thresholds) > 1 and 0.9 not in cfg.thresholds else 0.9
    ens = models.EnsembleModel(base, threshold, tuple(negatives))
    return [models.save_ensemble(out, ens)]


def _add_common(p):
    p.add_argument("--config", help="run configuration file (key = value lines)")
    p.add_argument("--manifest")
    p.add_argument("--config-id", type=int, dest="config_id")
    p.add_argument("--strategy", choices=("binary", "multiclass", "ensemble"))
    p.add_argument("--threshold", type=float, action="append", dest="thresholds", help="voting threshold (repeatable)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--group-by-file", action="store_true", default=None, dest="group_by_file")
    p.add_argument("--split-segments", action="store_true", default=None, dest="split_segments")
    p.add_argument("--binary-output", choices=("sigmoid", "softmax"), dest="binary_output")


_RUN_KEYS = (
    "manifest",
    "config_id",
    "strategy",
    "thresholds",
    "epochs",
    "batch_size",
    "folds",
    "seed",
    "out",
    "group_by_file",
    "split_segments",
    "binary_output",
    "negative",
    "config_ids",
)


def run_config_from_args(args):
    overrides = {k: getattr(args, k, None) for k in _RUN_KEYS}
    if overrides.get("thresholds"):
        overrides["thresholds"] = tuple(overrides["thresholds"])
    if args.config:
        return load_run_config(args.config, **overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def build_parser():
    parser = argparse.ArgumentParser(prog="wingbeat", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-species file counts and durations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = sub.add_parser("extract", help="compute patches and write a patch cache")
    _add_common(p)

    p = sub.add_parser("train", help="train on all data and write checkpoints")
    _add_common(p)

    p = sub.add_parser("evaluate", help="stratified cross-validation")
    _add_common(p)

    p = sub.add_parser("sweep", help="binary CV over the feature configuration grid")
    _add_common(p)
    p.add_argument("--negative", help="negative species of the sweep pair")
    p.add_argument("--config-ids", dest="config_ids", type=lambda s: tuple(int(v) for v in s.split(",")))

    p = sub.add_parser("synth", help="generate a synthetic manifest of harmonic tones")
    p.add_argument("--classes", required=True, help="species:hz pairs, comma separated")
    p.add_argument("--harmonics", type=int, default=3)
    p.add_argument("--snr-db", type=float, default=20.0, dest="snr_db", help="use inf for no noise")
    p.add_argument("--files-per-class", type=int, default=1, dest="files_per_class")
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--sample-rate", type=int, default=8000, dest="sample_rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _stats(args):
    stats = dataset.dataset_stats(dataset.load_manifest(args.manifest))
    lines = ["species,file_count,total_duration_s"]
    lines += [f"{lb.name},{s.file_count},{s.total_duration_s:.2f}" for lb, s in stats.items()]
    text = "\n".join(lines) + "\n"
    if args.out:
        OutputSet(Path(args.out).parent).write_text(Path(args.out).name, text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "stats":
            _stats(args)
        elif args.command == "synth":
            classes = synth.parse_class_list(args.classes, args.harmonics, args.snr_db)
            path = synth.generate_synthetic(args.out, classes, args.files_per_class, args.seconds, args.seed, args.sample_rate)
            print(path)
        else:
            cfg = run_config_from_args(args)
            if args.command == "extract":
                fcfg = cfg.feature_config()
                patches, skipped = load_patches(cfg, fcfg)
                out = OutputSet(cfg.out)
                path = out.directory / f"patches_config{fcfg.config_id or 'custom'}.wbp"
                out.directory.mkdir(parents=True, exist_ok=True)
                features.save_patch_cache(path, patches, fcfg, cfg.manifest)
                print(f"{len(patches)} patches -> {path}")
            elif args.command == "train":
                for p in train_final(cfg):
                    print(p)
            elif args.command == "evaluate":
                report, written = run_experiment(cfg)
                summary = report.summary if cfg.strategy != "ensemble" else {repr(k): v for k, v in report.summary.items()}
                print(json.dumps(summary, indent=2))
            elif args.command == "sweep":
                _, written = run_fft_sweep(cfg)
                print("\n".join(str(p) for p in written))
    except (WingbeatError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
