"""Weighted multi-label loss, staged checkpoint training, CV orchestration.

Training runs in stages: each stage is a fixed number of epochs, the
epoch with the best validation challenge score within the stage is
checkpointed, and the next stage resumes from that checkpoint. The final
result is the best checkpoint seen anywhere. The stage selection criterion
is the validation challenge score (the reported target metric), not the
loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metric import PredictionSet, challenge_score
from .net.resnet import EcgResNet

PROB_CLAMP = 1e-12


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    """Non-finite loss encountered; carries the stage/epoch diagnostics."""


@dataclass(frozen=True)
class TrainConfig:
    stages: int = 5
    epochs_per_stage: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    class_weight_mode: str = "inverse-frequency"  # or "none"
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.stages < 1 or self.epochs_per_stage < 1:
            raise ValueError("stages and epochs_per_stage must be at least 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold {self.threshold} outside (0, 1)")
        if self.class_weight_mode not in ("inverse-frequency", "none"):
            raise ValueError(f"unknown class_weight_mode {self.class_weight_mode!r}")


@dataclass
class EpochRecord:
    stage: int
    epoch: int
    train_loss: float
    val_loss: float
    val_score: float


@dataclass
class TrainingHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    stage_best: list[str] = field(default_factory=list)  # checkpoint ids, one per stage

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "epoch", "train_loss", "val_loss", "val_score"])
            for r in self.epochs:
                writer.writerow([r.stage, r.epoch, r.train_loss, r.val_loss, r.val_score])


def class_weights(label_matrix: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights w_k = N / (K * max(1, count_k)).

    Rarer classes weigh more; a perfectly balanced matrix gives all ones,
    and an all-negative class gets the max-guarded weight N / K.
    """
    labels = np.asarray(label_matrix)
    n, k = labels.shape
    counts = labels.sum(axis=0)
    return n / (k * np.maximum(counts, 1.0))


def weighted_bce(probs: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
    """Mean class-weighted binary cross-entropy over all (record, class) cells."""
    loss, _ = weighted_bce_with_grad(probs, targets, weights)
    return loss


def weighted_bce_with_grad(
    probs: np.ndarray, targets: np.ndarray, weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the probabilities.

    Probabilities are clamped to [1e-12, 1 - 1e-12] before the logs; the
    gradient is zero where the clamp is active.
    """
    probs = np.asarray(probs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if probs.shape != targets.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape} vs targets {targets.shape}")
    if weights.shape != (probs.shape[1],):
        raise ValueError(f"weights shape {weights.shape} does not match {probs.shape[1]} classes")
    clamped = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    cells = probs.size
    loss = -(weights * (targets * np.log(clamped)
                        + (1.0 - targets) * np.log(1.0 - clamped))).sum() / cells
    inside = (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)
    grad = -(weights * (targets / clamped - (1.0 - targets) / (1.0 - clamped))) / cells
    return float(loss), grad * inside


def predict_labels(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binary labels; the threshold boundary itself counts as positive."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1)")
    return (np.asarray(probs) >= threshold).astype(int)


class Adam:
    """Adaptive-moment optimizer with a fixed learning rate per stage."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / (1 - self.beta1**self.t)
            vhat = self.v[name] / (1 - self.beta2**self.t)
            params[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class Dataset:
    """In-memory tensors for one split."""

    signals: np.ndarray       # (N, leads, length)
    demographics: np.ndarray  # (N, 5)
    labels: np.ndarray        # (N, K)

    def __len__(self) -> int:
        return self.signals.shape[0]


def evaluate_challenge(model: EcgResNet, data: Dataset, weights: np.ndarray,
                       normal_index: int, threshold: float,
                       batch_size: int = 64) -> float:
    probs = predict_probs(model, data, batch_size)
    preds = predict_labels(probs, threshold)
    return challenge_score(PredictionSet(data.labels, preds, normal_index), weights).c


def predict_probs(model: EcgResNet, data: Dataset, batch_size: int = 64) -> np.ndarray:
    chunks = []
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        chunks.append(model.forward(data.signals[sl], data.demographics[sl], train=False))
    return np.concatenate(chunks, axis=0)


def _mean_loss(model: EcgResNet, data: Dataset, weights: np.ndarray,
               batch_size: int = 64) -> float:
    return weighted_bce(predict_probs(model, data, batch_size), data.labels, weights)


def train_staged(
    model: EcgResNet,
    train_data: Dataset,
    val_data: Dataset,
    config: TrainConfig,
    metric_weights: np.ndarray,
    normal_index: int,
    checkpoint_dir: str | Path | None = None,
) -> tuple[dict[str, np.ndarray], TrainingHistory]:
    """Run staged checkpoint training; returns (best parameters, history).

    Raises:
        TrainingDiverged: on a non-finite training loss.
    """
    rng = np.random.default_rng(config.seed)
    if config.class_weight_mode == "inverse-frequency":
        loss_weights = class_weights(train_data.labels)
    else:
        loss_weights = np.ones(train_data.labels.shape[1])
    optimizer = Adam(config.learning_rate)
    history = TrainingHistory()
    n = len(train_data)
    best_overall: tuple[float, dict[str, np.ndarray], str] | None = None

    for stage in range(1, config.stages + 1):
        stage_best: tuple[float, dict[str, np.ndarray], str] | None = None
        for epoch in range(1, config.epochs_per_stage + 1):
            order = rng.permutation(n)
            batch_losses = []
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                probs = model.forward(train_data.signals[idx], train_data.demographics[idx],
                                      train=True, rng=rng)
                loss, dprobs = weighted_bce_with_grad(probs, train_data.labels[idx], loss_weights)
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss {loss} at stage {stage} epoch {epoch} "
                        f"batch starting {start}"
                    )
                model.backward(dprobs)
                optimizer.step(model.parameters(), model.gradients())
                batch_losses.append(loss)
            val_loss = _mean_loss(model, val_data, loss_weights)
            val_score = evaluate_challenge(model, val_data, metric_weights,
                                           normal_index, config.threshold)
            history.epochs.append(EpochRecord(stage, epoch, float(np.mean(batch_losses)),
                                              val_loss, val_score))
            if stage_best is None or val_score > stage_best[0]:
                stage_best = (val_score, model.snapshot(), f"stage{stage:02d}-epoch{epoch:03d}")
        assert stage_best is not None
        history.stage_best.append(stage_best[2])
        if checkpoint_dir is not None:
            from .net.resnet import save_checkpoint

            path = Path(checkpoint_dir) / f"{stage_best[2]}.npz"
            model.set_state(stage_best[1])
            save_checkpoint(path, model, {"checkpoint_id": stage_best[2],
                                          "val_score": stage_best[0]})
        # next stage resumes from this stage's best epoch
        model.set_state(stage_best[1])
        if best_overall is None or stage_best[0] > best_overall[0]:
            best_overall = stage_best
    assert best_overall is not None
    model.set_state(best_overall[1])
    return best_overall[1], history


def run_cv(
    data: Dataset,
    manifest,
    model_config,
    train_config: TrainConfig,
    metric_weights: np.ndarray,
    normal_index: int,
    k: int = 5,
) -> dict:
    """Stratified k-fold cross-validation over an in-memory dataset.

    ``manifest`` supplies the fold assignment (record order must match the
    dataset rows). Every fold trains a fresh model with the same configs,
    seeded by train_config.seed + fold index.
    """
    from .ingest import stratified_kfold

    folds = stratified_kfold(manifest, k=k, seed=train_config.seed)
    id_to_row = {e.record_id: i for i, e in enumerate(manifest.entries)}
    scores = []
    for fold_index, fold in enumerate(folds):
        val_rows = np.array([id_to_row[e.record_id] for e in fold.entries])
        train_rows = np.array([i for i in range(len(manifest)) if i not in set(val_rows)])
        train_split = Dataset(data.signals[train_rows], data.demographics[train_rows],
                              data.labels[train_rows])
        val_split = Dataset(data.signals[val_rows], data.demographics[val_rows],
                            data.labels[val_rows])
        fold_config = TrainConfig(
            stages=train_config.stages,
            epochs_per_stage=train_config.epochs_per_stage,
            batch_size=train_config.batch_size,
            learning_rate=train_config.learning_rate,
            class_weight_mode=train_config.class_weight_mode,
            threshold=train_config.threshold,
            seed=train_config.seed + fold_index,
        )
        model = EcgResNet(model_config, seed=fold_config.seed)
        train_staged(model, train_split, val_split, fold_config, metric_weights, normal_index)
        scores.append(evaluate_challenge(model, val_split, metric_weights,
                                         normal_index, fold_config.threshold))
    return {"fold_scores": scores, "mean_score": float(np.mean(scores))}
