"""Command-line interface: synth, preprocess, train, crossval, embed, evaluate, plot.

Exit codes: 0 success, 1 validation error (bad inputs, bad config), 2
runtime or numeric error. Errors print a single machine-parseable line
`omivae: error: <category>: <message>` on stderr. The OMIVAE_THREADS
environment variable caps fold-level parallelism in crossval (default 1).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import RunConfig, load_run_config
from .data import (
    OmicsDataset,
    dataset_to_raw,
    load_annotations,
    load_labels,
    load_matrix_tsv,
    preprocess,
    restrict_modalities,
    stratified_kfold,
    synthesize,
    write_annotations_tsv,
    write_labels_tsv,
    write_matrix_tsv,
)
from .errors import OmiVaeError, ValidationError
from .evaluation import compute_metrics, export_embedding, render_scatter
from .model import build_model
from .numerics import RngState
from .optim import TrainConfig, load_checkpoint, save_checkpoint, train_two_phase


def _load_dataset(path: str, run: RunConfig) -> OmicsDataset:
    dataset = OmicsDataset.load(path)
    use_expr, use_methyl = run.modalities()
    return restrict_modalities(
        dataset,
        expression=use_expr and dataset.expression is not None,
        methylation=use_methyl and dataset.methylation_blocks is not None,
    )


def _train_val_split(dataset: OmicsDataset, run: RunConfig, seed: int):
    """Hold out one stratified fold for validation (random split if unlabeled)."""
    n = dataset.num_samples
    if dataset.labels is not None and (dataset.labels >= 0).all():
        folds = stratified_kfold(dataset.labels, run.validation_fold_count(), seed)
        val_idx = folds.folds[0]
        train_idx = np.sort(np.concatenate(folds.folds[1:]))
    else:
        order = RngState(seed).derive(9).permutation(n)
        n_val = max(1, round(n / run.validation_fold_count()))
        val_idx = np.sort(order[:n_val])
        train_idx = np.sort(order[n_val:])
    return train_idx, val_idx


def cmd_synth(args) -> int:
    run = load_run_config(args.config, args.set)
    spec = run.synthetic_spec()
    dataset = synthesize(spec)
    os.makedirs(args.out, exist_ok=True)
    expr_raw, methyl_raw, annotations = dataset_to_raw(dataset)
    write_matrix_tsv(os.path.join(args.out, "expression.tsv"), expr_raw)
    write_matrix_tsv(os.path.join(args.out, "methylation.tsv"), methyl_raw)
    write_annotations_tsv(os.path.join(args.out, "annotations.tsv"), annotations)
    labels = {
        sid: dataset.class_vocab[dataset.labels[i]]
        for i, sid in enumerate(dataset.sample_ids)
    }
    write_labels_tsv(os.path.join(args.out, "labels.tsv"), labels)
    processed, _report = preprocess(
        expr_raw, methyl_raw, annotations, run.preprocess_config(), labels=labels
    )
    processed.save(os.path.join(args.out, "dataset.omids"))
    print(
        f"synthesized {dataset.num_samples} samples, "
        f"{len(dataset.methylation_blocks)} methylation blocks, "
        f"{dataset.expr_dim} expression features -> {args.out}"
    )
    return 0


def cmd_preprocess(args) -> int:
    if args.expression is None and args.methylation is None:
        raise ValidationError("provide --expression and/or --methylation")
    run = load_run_config(args.config, args.set)
    expression = load_matrix_tsv(args.expression) if args.expression else None
    methylation = load_matrix_tsv(args.methylation) if args.methylation else None
    annotations = load_annotations(args.annotations) if args.annotations else {}
    labels = load_labels(args.labels) if args.labels else None
    dataset, report = preprocess(
        expression, methylation, annotations, run.preprocess_config(), labels=labels
    )
    dataset.save(args.out)
    report_path = args.report or args.out + ".report.txt"
    with open(report_path, "w") as fh:
        fh.write(report.to_text())
    print(report.to_text(), end="")
    print(f"wrote {args.out}")
    return 0


def _fit(dataset, run: RunConfig, train_cfg: TrainConfig, stream: RngState, resume_path=None):
    if resume_path is not None:
        checkpoint = load_checkpoint(resume_path)
        model = checkpoint.build()
        if model.config.use_expression != (dataset.expression is not None) or (
            model.config.use_methylation != (dataset.methylation_blocks is not None)
        ):
            raise ValidationError("checkpoint modalities do not match the dataset")
    else:
        model = build_model(run.model_config(dataset), stream.derive(0))
    train_idx, val_idx = _train_val_split(dataset, run, train_cfg.master_seed)
    history = train_two_phase(model, dataset, train_idx, val_idx, train_cfg, rng=stream)
    return model, history


def cmd_train(args) -> int:
    run = load_run_config(args.config, args.set)
    dataset = _load_dataset(args.data, run)
    train_cfg = run.train_config()
    if args.phase == "unsupervised-only":
        train_cfg.phase2_epochs = 0
    elif args.phase == "supervised-only":
        train_cfg.phase1_epochs = 0
    stream = RngState(train_cfg.master_seed)
    model, history = _fit(dataset, run, train_cfg, stream, resume_path=args.resume)
    phase = "1" if train_cfg.phase2_epochs == 0 else "2"
    metadata = {"phase": phase, "epochs_run": str(len(history.records))}
    for ph, metric in history.best_metric.items():
        metadata[f"best_metric.phase{ph}"] = repr(metric)
        metadata[f"best_epoch.phase{ph}"] = str(history.best_epoch[ph])
    save_checkpoint(args.out, model, metadata=metadata)
    history_path = args.history or args.out + ".history.tsv"
    with open(history_path, "w") as fh:
        fh.write(history.to_tsv())
    if history.diverged:
        print("training diverged; best snapshot saved", file=sys.stderr)
    last = history.records[-1] if history.records else None
    if last is not None:
        print(
            f"trained {len(history.records)} epochs; "
            f"final val total {last.val.total:.4f}, val accuracy {last.val_accuracy:.4f}"
        )
    print(f"wrote {args.out}")
    return 0


def _run_fold(fold, dataset, run, base_cfg, seed):
    r, (train_idx, val_idx, test_idx) = fold
    stream = RngState(seed).derive(3).derive(r)
    model = build_model(run.model_config(dataset), stream.derive(0))
    history = train_two_phase(model, dataset, train_idx, val_idx, base_cfg, rng=stream)
    x_expr, x_blocks = dataset.batch(test_idx)
    predicted = np.argmax(model.predict_proba(x_expr, x_blocks), axis=1)
    report = compute_metrics(
        dataset.labels[test_idx], predicted, model.config.num_classes
    )
    return r, report, history


def cmd_crossval(args) -> int:
    run = load_run_config(args.config, args.set)
    dataset = _load_dataset(args.data, run)
    if dataset.labels is None:
        raise ValidationError("cross-validation requires a labeled dataset")
    train_cfg = run.train_config()
    folds = stratified_kfold(dataset.labels, args.k, train_cfg.master_seed)
    os.makedirs(args.out, exist_ok=True)
    work = [(r, folds.round(r)) for r in range(args.k)]
    threads = int(os.environ.get("OMIVAE_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    lambda item: _run_fold(item, dataset, run, train_cfg, train_cfg.master_seed),
                    work,
                )
            )
    else:
        results = [_run_fold(item, dataset, run, train_cfg, train_cfg.master_seed) for item in work]
    results.sort(key=lambda x: x[0])

    metric_rows = []
    for r, report, history in results:
        with open(os.path.join(args.out, f"fold{r:02d}.report.txt"), "w") as fh:
            fh.write(report.to_text(dataset.class_vocab))
        with open(os.path.join(args.out, f"fold{r:02d}.confusion.tsv"), "w") as fh:
            fh.write(report.confusion_tsv(dataset.class_vocab))
        with open(os.path.join(args.out, f"fold{r:02d}.history.tsv"), "w") as fh:
            fh.write(history.to_tsv())
        metric_rows.append(
            (report.accuracy, report.weighted_precision, report.weighted_recall, report.weighted_f1)
        )
    metrics = np.array(metric_rows)
    names = ("accuracy", "weighted_precision", "weighted_recall", "weighted_f1")
    lines = []
    for i, name in enumerate(names):
        mean = metrics[:, i].mean()
        sd = metrics[:, i].std(ddof=1) if metrics.shape[0] > 1 else 0.0
        lines.append(f"{name}_mean={repr(float(mean))}")
        lines.append(f"{name}_sd={repr(float(sd))}")
    for r, report, _ in results:
        lines.append(f"fold{r:02d}.accuracy={repr(report.accuracy)}")
    aggregate = "\n".join(lines) + "\n"
    with open(os.path.join(args.out, "aggregate.txt"), "w") as fh:
        fh.write(aggregate)
    print(
        f"{args.k}-fold accuracy: {metrics[:, 0].mean() * 100:.2f}"
        f"±{(metrics[:, 0].std(ddof=1) if args.k > 1 else 0.0) * 100:.2f}%"
    )
    return 0


def cmd_embed(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.build()
    dataset = OmicsDataset.load(args.data)
    dataset = restrict_modalities(
        dataset,
        expression=model.config.use_expression,
        methylation=model.config.use_methylation,
    )
    embedding = export_embedding(model, dataset, args.out)
    print(f"wrote {embedding.shape[0]}x{embedding.shape[1]} embedding to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.build()
    dataset = OmicsDataset.load(args.data)
    dataset = restrict_modalities(
        dataset,
        expression=model.config.use_expression,
        methylation=model.config.use_methylation,
    )
    if dataset.labels is None or (dataset.labels < 0).any():
        raise ValidationError("evaluation requires a fully labeled dataset")
    x_expr, x_blocks = dataset.batch(np.arange(dataset.num_samples))
    predicted = np.argmax(model.predict_proba(x_expr, x_blocks), axis=1)
    report = compute_metrics(dataset.labels, predicted, model.config.num_classes)
    with open(args.out, "w") as fh:
        fh.write(report.to_text(dataset.class_vocab))
    if args.confusion:
        with open(args.confusion, "w") as fh:
            fh.write(report.confusion_tsv(dataset.class_vocab))
    print(f"accuracy={report.accuracy:.4f} weighted_f1={report.weighted_f1:.4f}")
    return 0


def cmd_plot(args) -> int:
    render_scatter(args.embedding, args.out)
    print(f"wrote {args.out}")
    return 0


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omivae",
        description="Multi-omics VAE: synthesize, preprocess, train, cross-validate, embed, evaluate, plot.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset (TSVs + cache)")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("preprocess", help="filter/impute/normalize raw matrices into a cache")
    _add_config_args(p)
    p.add_argument("--expression", help="expression matrix TSV")
    p.add_argument("--methylation", help="methylation matrix TSV")
    p.add_argument("--annotations", help="feature_id/chromosome TSV")
    p.add_argument("--labels", help="sample_id/class_name TSV")
    p.add_argument("--report", help="where to write the preprocessing report")
    p.add_argument("--out", required=True, help="output dataset cache (.omids)")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="two-phase training on a dataset cache")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="dataset cache (.omids)")
    p.add_argument(
        "--phase",
        choices=["both", "unsupervised-only", "supervised-only"],
        default="both",
    )
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--history", help="where to write the per-epoch history TSV")
    p.add_argument("--out", required=True, help="output checkpoint (.omvae)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="dataset cache (.omids)")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory for fold reports")
    p.set_defaults(fn=cmd_crossval)

    p = sub.add_parser("embed", help="export the latent-mean embedding as TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("evaluate", help="classification metrics of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--confusion", help="where to write the confusion matrix TSV")
    p.add_argument("--out", required=True, help="where to write the metrics report")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("plot", help="render an embedding TSV as an SVG scatter")
    p.add_argument("--embedding", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; those are validation failures here
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"omivae: error: validation: {exc}", file=sys.stderr)
        return 1
    except OmiVaeError as exc:
        print(f"omivae: error: runtime: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"omivae: error: runtime: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
