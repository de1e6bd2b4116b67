"""Joint multi-level training of the soft prompts and verbalizer."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from config import (
    DEFAULT_ADAM_BETAS,
    DEFAULT_ADAM_EPS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EVAL_STEP,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
    DEFAULT_TRAIN_SEED,
)
from pemi.data.dataset import Instance, label_indices
from pemi.errors import ConfigError, DataError, NumericalError
from pemi.evaluation.metrics import MetricsReport, compute_report
from pemi.models.model import PemiModel
from pemi.models.template import ModifiedInput
from pemi.numcore import Tape, Tensor, backward
from pemi.training.losses import joint_loss, level_loss, mean_loss
from pemi.training.optimizer import Adam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; empty ``lambdas`` means 1.0 for every level."""

    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    eval_step: int = DEFAULT_EVAL_STEP
    lambdas: tuple[float, ...] = ()
    seed: int = DEFAULT_TRAIN_SEED
    patience: int = DEFAULT_PATIENCE
    betas: tuple[float, float] = DEFAULT_ADAM_BETAS
    eps: float = DEFAULT_ADAM_EPS

    def __post_init__(self) -> None:
        """Validate hyperparameters after initialization."""
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.eval_step < 1:
            raise ConfigError(f"eval_step must be >= 1, got {self.eval_step}")
        if any(not (math.isfinite(w) and w >= 0) for w in self.lambdas):
            raise ConfigError(f"lambdas must be finite and >= 0, got {list(self.lambdas)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")

    def resolve_lambdas(self, depth: int) -> tuple[float, ...]:
        """
        Get one weight per level.

        Raises:
            ConfigError: If explicit lambdas do not match the hierarchy depth
        """
        if not self.lambdas:
            return (1.0,) * depth
        if len(self.lambdas) != depth:
            raise ConfigError(f"train.lambdas has {len(self.lambdas)} values for a {depth}-level hierarchy")
        return tuple(float(w) for w in self.lambdas)


@dataclass
class TrainState:
    """Optimizer moments plus step, epoch and best-dev bookkeeping."""

    optimizer: Adam
    step: int = 0
    epoch: int = 0
    best_score: float = -math.inf
    best_step: int = 0
    best_parameters: dict[str, np.ndarray] = field(default_factory=dict)
    evals_since_best: int = 0

    @classmethod
    def create(cls, config: TrainConfig) -> "TrainState":
        return cls(optimizer=Adam(config.learning_rate, config.betas, config.eps))


@dataclass(frozen=True)
class StepResult:
    model: PemiModel
    losses: list[float]


@dataclass(frozen=True)
class FitResult:
    """Best model by dev score, the evaluation log and the final state."""

    model: PemiModel
    log: list[dict]
    state: TrainState


def _targets(model: PemiModel, batch: Sequence[Instance]) -> list[tuple[int, ...]]:
    return [label_indices(model.hierarchy, instance.labels) for instance in batch]


def level_losses(
    model: PemiModel, inputs: Sequence[ModifiedInput], targets: Sequence[Sequence[int]]
) -> list[Tensor]:
    """Batch-mean cross-entropy at every level, top first."""
    predictions = model.forward(inputs)
    return [
        mean_loss([level_loss(levels[z].logits, target[z]) for levels, target in zip(predictions, targets)])
        for z in range(model.hierarchy.depth)
    ]


def train_step(
    model: PemiModel, batch: Sequence[Instance], config: TrainConfig, state: TrainState
) -> StepResult:
    """
    One forward, one backward and one Adam update of δ.

    Inputs and labels are validated before anything is recorded, so a bad
    instance aborts the step with no update.

    Raises:
        DataError: On an empty batch or invalid instance
        NumericalError: If the joint loss is not finite
    """
    if not batch:
        raise DataError("train_step needs a non-empty batch")
    inputs = [model.encode(instance.arg1, instance.arg2) for instance in batch]
    targets = _targets(model, batch)
    lambdas = config.resolve_lambdas(model.hierarchy.depth)

    with Tape() as tape:
        losses = level_losses(model, inputs, targets)
        loss = joint_loss(losses, lambdas)
    value = loss.item()
    if not math.isfinite(value):
        raise NumericalError(f"joint loss is {value} at step {state.step + 1}")
    grads = backward(loss, tape)

    updated = state.optimizer.step(model.trainable_parameters(), grads)
    model = model.replace(updated).project()
    state.step += 1
    per_level = [level.item() for level in losses]
    logger.debug("step %d loss %.6f per level %s", state.step, value, per_level)
    return StepResult(model=model, losses=per_level)


def predict_paths(model: PemiModel, instances: Sequence[Instance]) -> list[tuple[int, ...]]:
    """Argmax label index at every level for each instance (no tape)."""
    inputs = [model.encode(instance.arg1, instance.arg2) for instance in instances]
    return [
        tuple(int(np.argmax(prediction.probs.data)) for prediction in levels)
        for levels in model.forward(inputs)
    ]


def evaluate(model: PemiModel, instances: Sequence[Instance]) -> MetricsReport:
    """
    Score the model on labelled instances.

    Raises:
        DataError: If there are no instances
    """
    if not instances:
        raise DataError("cannot evaluate on an empty split")
    return compute_report(model.hierarchy, _targets(model, instances), predict_paths(model, instances))


def _snapshot(model: PemiModel) -> dict[str, np.ndarray]:
    return {name: tensor.numpy() for name, tensor in model.trainable_parameters().items()}


def _restore(model: PemiModel, snapshot: dict[str, np.ndarray]) -> PemiModel:
    current = model.trainable_parameters()
    return model.replace(
        {
            name: Tensor(values, requires_grad=True, name=name, dtype=current[name].dtype)
            for name, values in snapshot.items()
        }
    )


def fit(
    model: PemiModel,
    train: Sequence[Instance],
    dev: Sequence[Instance],
    config: TrainConfig,
    log_path: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> FitResult:
    """
    Train for up to ``max_epochs`` and keep the best dev checkpoint.

    The model is evaluated on ``dev`` every ``eval_step`` steps and once more
    after the last step, so a run logs floor(steps / eval_step) + 1 records.
    The best checkpoint has the strictly highest summed dev macro-F1
    (earliest wins ties). With ``patience`` > 0, training stops
    after that many evaluations without improvement.

    Args:
        model: Initial model
        train: Training instances
        dev: Development instances
        config: Hyperparameters
        log_path: Optional JSON-lines file receiving one record per evaluation
        progress: Show a progress bar over steps

    Returns:
        FitResult with the best model and the evaluation records

    Raises:
        DataError: If a split is empty or the splits share an instance
    """
    if not train:
        raise DataError("training split is empty")
    if not dev:
        raise DataError("development split is empty")
    if {id(i) for i in train} & {id(i) for i in dev}:
        raise DataError("training and development splits share an instance")
    config.resolve_lambdas(model.hierarchy.depth)

    state = TrainState.create(config)
    rng = np.random.default_rng(config.seed)
    steps_per_epoch = math.ceil(len(train) / config.batch_size)
    log: list[dict] = []
    pending: list[list[float]] = []
    stream = open(log_path, "w", encoding="utf-8") if log_path is not None else None

    def record_evaluation() -> None:
        report = evaluate(model, dev)
        if pending:
            losses = np.mean(pending, axis=0).tolist()
        else:
            losses = log[-1]["loss_per_level"] if log else []
        pending.clear()
        entry = {
            "step": state.step,
            "epoch": state.epoch,
            "loss_per_level": losses,
            "dev_f1_per_level": report.macro_f1,
            "dev_acc_per_level": report.accuracy,
        }
        log.append(entry)
        if stream is not None:
            stream.write(json.dumps(entry) + "\n")
        score = report.summed_macro_f1
        improved = score > state.best_score
        if improved:
            state.best_score = score
            state.best_step = state.step
            state.best_parameters = _snapshot(model)
            state.evals_since_best = 0
        else:
            state.evals_since_best += 1
        logger.info(
            "step %d epoch %d dev macro-F1 %s acc %s%s",
            state.step,
            state.epoch,
            [round(v, 4) for v in report.macro_f1],
            [round(v, 4) for v in report.accuracy],
            " (best)" if improved else "",
        )

    try:
        with tqdm(total=config.max_epochs * steps_per_epoch, desc="train", disable=not progress) as bar:
            stopped = False
            for epoch in range(1, config.max_epochs + 1):
                state.epoch = epoch
                order = rng.permutation(len(train))
                for start in range(0, len(train), config.batch_size):
                    batch = [train[i] for i in order[start : start + config.batch_size]]
                    result = train_step(model, batch, config, state)
                    model = result.model
                    pending.append(result.losses)
                    bar.update(1)
                    bar.set_postfix(loss=f"{sum(result.losses):.4f}")
                    if state.step % config.eval_step == 0:
                        record_evaluation()
                        if config.patience and state.evals_since_best >= config.patience:
                            logger.info("no dev improvement in %d evaluations, stopping", config.patience)
                            stopped = True
                            break
                if stopped:
                    break
            record_evaluation()
    finally:
        if stream is not None:
            stream.close()

    logger.info("best summed dev macro-F1 %.4f at step %d", state.best_score, state.best_step)
    return FitResult(model=_restore(model, state.best_parameters), log=log, state=state)
