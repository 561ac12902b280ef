"""Adam, the two-phase training driver, early stopping, and checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .errors import FormatError, NumericError, ValidationError
from .losses import LossReport, LossWeights, classification_loss, total_loss, vae_loss
from .model import ModelConfig, OmiVaeModel, build_model
from .numerics import RngState

CHECKPOINT_MAGIC = b"OMVAE1"
CHECKPOINT_VERSION = 1


class Adam:
    """Adam with bias correction; the step count increments before correcting."""

    def __init__(
        self,
        params,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0.0:
            raise ValidationError("learning rate must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in {p.name}; step aborted")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for p, m, v in zip(self.params, self.m, self.v):
            out.append((f"optim.m.{p.name}", m))
            out.append((f"optim.v.{p.name}", v))
        return out


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    phase1_epochs: int = 200
    phase2_epochs: int = 300
    patience: int = 10
    min_delta: float = 0.0
    alpha: float = 1.0
    phase2_beta: float = 1.0
    master_seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2 (batch normalization)")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.phase1_epochs < 0 or self.phase2_epochs < 0:
            raise ValidationError("epoch caps must be >= 0")
        if self.learning_rate <= 0.0:
            raise ValidationError("learning_rate must be positive")
        if self.min_delta < 0.0:
            raise ValidationError("min_delta must be >= 0")


@dataclass
class EpochRecord:
    phase: int
    epoch: int
    train: LossReport
    val: LossReport
    val_accuracy: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: dict[int, int] = field(default_factory=dict)
    best_metric: dict[int, float] = field(default_factory=dict)
    diverged: bool = False

    TSV_COLUMNS = (
        "phase",
        "epoch",
        "train_recon_methyl",
        "train_recon_expr",
        "train_kl",
        "train_vae",
        "train_class",
        "train_total",
        "val_recon_methyl",
        "val_recon_expr",
        "val_kl",
        "val_vae",
        "val_class",
        "val_total",
        "val_accuracy",
    )

    def to_tsv(self) -> str:
        lines = ["\t".join(self.TSV_COLUMNS)]
        for r in self.records:
            cells = [str(r.phase), str(r.epoch)]
            for rep in (r.train, r.val):
                cells += [
                    repr(rep.recon_methyl),
                    repr(rep.recon_expr),
                    repr(rep.kl),
                    repr(rep.vae),
                    repr(rep.classification),
                    repr(rep.total),
                ]
            cells.append(repr(r.val_accuracy))
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def _snapshot(model: OmiVaeModel) -> list[tuple[str, np.ndarray]]:
    return [(name, arr.copy()) for name, arr in model.state_tensors()]


def _restore(model: OmiVaeModel, snapshot: list[tuple[str, np.ndarray]]) -> None:
    for (name, saved), (live_name, live) in zip(snapshot, model.state_tensors()):
        if name != live_name:
            raise ValidationError(f"snapshot/model tensor order mismatch: {name} vs {live_name}")
        live[:] = saved


def evaluate_losses(
    model: OmiVaeModel,
    dataset,
    indices: np.ndarray,
    weights: LossWeights,
    chunk: int = 1024,
) -> tuple[LossReport, float]:
    """Infer-mode losses (z = mu) and accuracy over `indices`.

    Accuracy counts only samples with a label; it is NaN when none have one.
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValidationError("evaluation split is empty")
    sums = np.zeros(4)  # recon_methyl, recon_expr, kl, classification
    correct = 0
    labeled = 0
    for start in range(0, indices.size, chunk):
        part = indices[start : start + chunk]
        x_expr, x_blocks = dataset.batch(part)
        fp = model.forward(x_expr, x_blocks, train=False)
        rm, re, kl = vae_loss(
            x_blocks if x_blocks is not None else [],
            fp.recon_methyl_blocks,
            x_expr,
            fp.recon_expr,
            fp.latent.mu,
            fp.latent.logvar,
        )
        cls = 0.0
        if dataset.labels is not None:
            lab = dataset.labels[part]
            mask = lab >= 0
            if mask.any():
                cls = classification_loss(lab[mask], fp.class_probs[mask])
                predicted = np.argmax(fp.class_probs[mask], axis=1)
                correct += int((predicted == lab[mask]).sum())
                labeled += int(mask.sum())
        sums += np.array([rm, re, kl, cls]) * part.size
    rm, re, kl, cls = sums / indices.size
    report = total_loss(rm, re, kl, cls, weights)
    accuracy = correct / labeled if labeled else float("nan")
    return report, accuracy


def _run_phase(
    model: OmiVaeModel,
    dataset,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    config: TrainConfig,
    weights: LossWeights,
    phase: int,
    epochs_max: int,
    stream: RngState,
    history: TrainingHistory,
) -> None:
    if epochs_max == 0:
        return
    labels = dataset.labels
    if weights.beta > 0.0:
        if labels is None:
            raise ValidationError("supervised phase requires labels")
        train_idx = train_idx[labels[train_idx] >= 0]
        if train_idx.size == 0:
            raise ValidationError("supervised phase has no labeled training samples")

    adam = Adam(model.parameters(), lr=config.learning_rate)
    entry_state = _snapshot(model)
    best_metric: float | None = None
    best_state = None
    best_epoch = 0
    wait = 0
    for epoch in range(1, epochs_max + 1):
        order = stream.permutation(train_idx.size) if config.shuffle else np.arange(train_idx.size)
        sums = np.zeros(6)
        seen = 0
        for start in range(0, train_idx.size, config.batch_size):
            chosen = train_idx[order[start : start + config.batch_size]]
            if chosen.size < 2:
                continue  # batch norm cannot run on a single sample
            x_expr, x_blocks = dataset.batch(chosen)
            batch_labels = labels[chosen] if weights.beta > 0.0 else None
            try:
                _, report = model.forward_backward(
                    x_expr, x_blocks, batch_labels, weights, rng=stream
                )
                adam.step()
            except NumericError:
                _restore(model, best_state if best_state is not None else entry_state)
                history.diverged = True
                return
            model.zero_grad()
            sums += (
                np.array(
                    [
                        report.recon_methyl,
                        report.recon_expr,
                        report.kl,
                        report.vae,
                        report.classification,
                        report.total,
                    ]
                )
                * chosen.size
            )
            seen += chosen.size
        if seen == 0:
            raise ValidationError("training split produced no usable batches")
        train_report = LossReport(*(sums / seen))
        val_report, val_accuracy = evaluate_losses(model, dataset, val_idx, weights)
        history.records.append(
            EpochRecord(
                phase=phase,
                epoch=epoch,
                train=train_report,
                val=val_report,
                val_accuracy=val_accuracy,
            )
        )
        if phase == 1:
            metric = val_report.total
            improved = best_metric is None or metric < best_metric - config.min_delta
        else:
            metric = val_accuracy
            if np.isnan(metric):
                raise ValidationError("supervised phase requires labeled validation samples")
            improved = best_metric is None or metric > best_metric + config.min_delta
        if improved:
            best_metric = metric
            best_state = _snapshot(model)
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    if best_state is not None:
        _restore(model, best_state)
        history.best_epoch[phase] = best_epoch
        history.best_metric[phase] = best_metric


def train_two_phase(
    model: OmiVaeModel,
    dataset,
    train_idx,
    val_idx,
    config: TrainConfig,
    rng: RngState | None = None,
) -> TrainingHistory:
    """Unsupervised phase (no label use) then supervised fine-tuning.

    Phase 1 trains encoder and decoder on every training sample with the
    classification weight at zero and early-stops on validation total loss.
    Phase 2 keeps the learned parameters, turns the classifier on over the
    labeled samples, and early-stops on validation accuracy. Each phase
    draws from its own stream derived from the master seed, so a run reuses
    no randomness across phases and a phase-2-only resume reproduces the
    continuous run exactly. On divergence the best snapshot so far is
    restored and training stops.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    if train_idx.size == 0 or val_idx.size == 0:
        raise ValidationError("training and validation splits must be non-empty")
    rng = rng if rng is not None else RngState(config.master_seed)
    history = TrainingHistory()
    _run_phase(
        model,
        dataset,
        train_idx,
        val_idx,
        config,
        LossWeights(alpha=config.alpha, beta=0.0),
        phase=1,
        epochs_max=config.phase1_epochs,
        stream=rng.derive(1),
        history=history,
    )
    if history.diverged:
        return history
    if config.phase2_epochs > 0 and config.phase2_beta > 0.0:
        _run_phase(
            model,
            dataset,
            train_idx,
            val_idx,
            config,
            LossWeights(alpha=config.alpha, beta=config.phase2_beta),
            phase=2,
            epochs_max=config.phase2_epochs,
            stream=rng.derive(2),
            history=history,
        )
    return history


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: list[tuple[str, np.ndarray]]
    metadata: dict[str, str]

    def build(self) -> OmiVaeModel:
        """Reconstruct the model this checkpoint was saved from."""
        model = build_model(self.config, RngState(0))
        saved = dict(self.tensors)
        for name, live in model.state_tensors():
            if name not in saved:
                raise FormatError(f"checkpoint is missing tensor {name!r}")
            if saved[name].shape != live.shape:
                raise FormatError(
                    f"checkpoint tensor {name!r} has shape {saved[name].shape}, expected {live.shape}"
                )
            live[:] = saved[name]
        return model


def save_checkpoint(
    path: str,
    model: OmiVaeModel,
    adam: Adam | None = None,
    metadata: dict[str, str] | None = None,
) -> None:
    tensors = list(model.state_tensors())
    meta = dict(metadata or {})
    if adam is not None:
        tensors.extend(adam.state_tensors())
        meta["optim.t"] = str(adam.t)
        meta["optim.lr"] = repr(adam.lr)
    write_container(
        path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.config.to_flat_dict(), tensors, meta
    )


def load_checkpoint(path: str) -> Checkpoint:
    config_flat, tensors, metadata = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    config = ModelConfig.from_flat_dict(config_flat)
    model_tensors = [(n, a) for n, a in tensors if not n.startswith("optim.")]
    return Checkpoint(config=config, tensors=model_tensors, metadata=metadata)
