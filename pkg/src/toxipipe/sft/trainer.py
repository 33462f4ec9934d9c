"""The fine-tuning orchestrator: grid axes, scheduled loss, epoch logging.

One seeded generator drives everything (model init, ordering, oversampling)
so a run is reproducible bit-for-bit given backend determinism. The span
weights change between epochs per the geometric schedule; standard mode is
implemented as the count-weighted fixed point of the same combine function,
which makes the weighted-vs-standard equivalence exact rather than
approximate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch

from ..taxonomy import Balance, ExperimentConfig, LossMode, Target
from .backend import EncodedExample, TinyBackend
from .data import TrainingExample
from .loss import count_weighted_lambdas, weighted_loss
from .ordering import order_batches, oversample
from .schedule import LambdaSchedule


class TrainingAborted(RuntimeError):
    """Raised when the backend fails mid-run; a resumable checkpoint was saved."""

    def __init__(self, cause: BaseException, checkpoint_dir: Optional[Path]):
        self.cause = cause
        self.checkpoint_dir = checkpoint_dir
        super().__init__(f"training aborted ({cause}); checkpoint at {checkpoint_dir}")


@dataclass
class TrainerConfig:
    experiment: ExperimentConfig
    epochs: int = 3
    learning_rate: float = 2e-4
    lr_schedule: str = "cosine"
    adapter_rank: int = 8
    adapter_scaling: float = 16.0
    batch_size: int = 8
    max_seq_len: int = 256
    # future-work knob: interpolate the schedule within an epoch
    lambda_per_batch: bool = False
    # identity mode: scale per-sequence count-weighted lambdas by the
    # schedule; with the (1,1) initial pair, epoch 1 reproduces standard
    # mode exactly
    count_weighted_identity: bool = False

    def to_json_dict(self) -> dict:
        return {
            "experiment": {
                "code": self.experiment.code,
                "optimizer": self.experiment.optimizer,
                "loss_mode": self.experiment.loss_mode.value,
                "seed": self.experiment.seed,
                "lambda_init": list(self.experiment.lambda_init),
                "lambda_ratio": self.experiment.lambda_ratio,
            },
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "lr_schedule": self.lr_schedule,
            "adapter_rank": self.adapter_rank,
            "adapter_scaling": self.adapter_scaling,
            "batch_size": self.batch_size,
            "max_seq_len": self.max_seq_len,
            "lambda_per_batch": self.lambda_per_batch,
        }


@dataclass
class EpochLog:
    epoch: int
    lambda_r: Optional[float]
    lambda_y: Optional[float]
    loss: float
    loss_r: Optional[float]
    loss_y: float
    dev_accuracy: Optional[float]

    def to_json_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "lambda_r": self.lambda_r,
            "lambda_y": self.lambda_y,
            "loss": self.loss,
            "loss_r": self.loss_r,
            "loss_y": self.loss_y,
            "dev_accuracy": self.dev_accuracy,
        }


@dataclass
class TrainingResult:
    logs: list[EpochLog]
    dev_accuracy: Optional[float]
    checkpoint_dir: Optional[Path]
    parameter_count: int


def _sequence_loss(
    losses_row: torch.Tensor,
    encoded: EncodedExample,
    lambdas: tuple[float, float],
    count_weighted: bool,
) -> tuple[torch.Tensor, Optional[torch.Tensor], torch.Tensor]:
    """(combined, L_r, L_y) for one sequence.

    With ``count_weighted`` the lambdas multiply the per-sequence
    count-proportional pair, so (1, 1) yields the uniform token mean over
    both spans (standard mode).
    """
    answer = losses_row[encoded.answer_indices]
    loss_y = answer.mean()
    if encoded.segmentation is None:
        # direct-binary target: the completion is the answer
        return loss_y, None, loss_y
    seg = encoded.segmentation
    loss_r = losses_row[seg.reasoning_indices].mean()
    lam_r, lam_y = lambdas
    if count_weighted:
        cw_r, cw_y = count_weighted_lambdas(seg)
        lam_r, lam_y = lam_r * cw_r, lam_y * cw_y
    combined = weighted_loss(losses_row, seg, lam_r, lam_y)
    return combined, loss_r, loss_y


def prepare_dataset(
    examples: Sequence[TrainingExample], config: TrainerConfig
) -> list[TrainingExample]:
    data = list(examples)
    if config.experiment.balance is Balance.OVERSAMPLED:
        data = oversample(data, seed=config.experiment.seed)
    return data


def train(
    config: TrainerConfig,
    backend: TinyBackend,
    train_examples: Sequence[TrainingExample],
    dev_examples: Sequence[TrainingExample] = (),
    checkpoint_dir: Optional[Path | str] = None,
) -> TrainingResult:
    """Run the configured experiment and return per-epoch logs.

    The backend is initialized here (tokenizer over all texts, model from
    the run seed); pass ``checkpoint_dir`` to persist adapter weights, the
    config snapshot and the schedule trace. A backend failure mid-run
    saves a checkpoint before re-raising as :class:`TrainingAborted`.
    """
    experiment = config.experiment
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None

    data = prepare_dataset(train_examples, config)
    binary = experiment.target is Target.BINARY

    backend.max_len = config.max_seq_len
    texts = [ex.full_text for ex in data] + [ex.full_text for ex in dev_examples]
    backend.fit_tokenizer(texts)
    backend.init_model(experiment.seed, config.adapter_rank, config.adapter_scaling)

    encoded = [backend.encode_pair(ex.prompt_text, ex.target_text, binary) for ex in data]
    encoded_dev = [
        backend.encode_pair(ex.prompt_text, ex.target_text, binary) for ex in dev_examples
    ]

    batches_per_epoch = math.ceil(len(encoded) / config.batch_size)
    backend.configure_optimizer(
        experiment.optimizer,
        config.learning_rate,
        total_steps=batches_per_epoch * config.epochs,
        schedule=config.lr_schedule,
    )

    schedule = LambdaSchedule(initial=experiment.lambda_init, ratio=experiment.lambda_ratio)
    orders = order_batches(data, experiment.ordering, experiment.seed, config.epochs)

    logs: list[EpochLog] = []
    try:
        for epoch in range(1, config.epochs + 1):
            order = orders[epoch - 1]
            epoch_losses, epoch_r, epoch_y = [], [], []
            if experiment.loss_mode is LossMode.STANDARD:
                epoch_lambdas = (1.0, 1.0)
                count_weighted = True
            else:
                epoch_lambdas = schedule.at(epoch)
                count_weighted = config.count_weighted_identity
            for step, start in enumerate(range(0, len(order), config.batch_size)):
                batch_idx = order[start : start + config.batch_size]
                batch = [encoded[i] for i in batch_idx]
                lambdas = epoch_lambdas
                if config.lambda_per_batch and experiment.loss_mode is LossMode.DYNAMIC_WEIGHTED:
                    fractional = epoch + step / max(1, batches_per_epoch)
                    factor = experiment.lambda_ratio ** (fractional - 1)
                    lambdas = (
                        experiment.lambda_init[0] / factor,
                        experiment.lambda_init[1] * factor,
                    )
                per_token = backend.per_token_losses(batch)
                combined, rs, ys = [], [], []
                for row, ex in enumerate(batch):
                    loss, loss_r, loss_y = _sequence_loss(
                        per_token[row], ex, lambdas, count_weighted
                    )
                    combined.append(loss)
                    if loss_r is not None:
                        rs.append(loss_r.detach())
                    ys.append(loss_y.detach())
                batch_loss = torch.stack(combined).mean()
                backend.train_step(batch_loss)
                epoch_losses.append(float(batch_loss.detach()))
                if rs:
                    epoch_r.append(float(torch.stack(rs).mean()))
                epoch_y.append(float(torch.stack(ys).mean()))

            dev_accuracy = backend.answer_accuracy(encoded_dev) if encoded_dev else None
            if binary:
                lambda_r = lambda_y = None
            elif experiment.loss_mode is LossMode.STANDARD:
                lambda_r = lambda_y = None
            else:
                lambda_r, lambda_y = schedule.at(epoch)
            logs.append(
                EpochLog(
                    epoch=epoch,
                    lambda_r=lambda_r,
                    lambda_y=lambda_y,
                    loss=sum(epoch_losses) / len(epoch_losses),
                    loss_r=(sum(epoch_r) / len(epoch_r)) if epoch_r else None,
                    loss_y=sum(epoch_y) / len(epoch_y),
                    dev_accuracy=dev_accuracy,
                )
            )
    except Exception as exc:  # backend failure: leave a resumable checkpoint
        if checkpoint_dir is not None:
            _write_checkpoint(backend, config, schedule, logs, checkpoint_dir)
        raise TrainingAborted(exc, checkpoint_dir) from exc

    if checkpoint_dir is not None:
        _write_checkpoint(backend, config, schedule, logs, checkpoint_dir)
    return TrainingResult(
        logs=logs,
        dev_accuracy=logs[-1].dev_accuracy if logs else None,
        checkpoint_dir=checkpoint_dir,
        parameter_count=backend.parameter_count(),
    )


def _write_checkpoint(
    backend: TinyBackend,
    config: TrainerConfig,
    schedule: LambdaSchedule,
    logs: list[EpochLog],
    directory: Path,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    backend.save_checkpoint(directory)
    (directory / "config.json").write_text(
        json.dumps(config.to_json_dict(), indent=2), encoding="utf-8"
    )
    trace = {
        "initial": list(schedule.initial),
        "ratio": schedule.ratio,
        "pairs": [list(p) for p in schedule.pairs(config.epochs)],
    }
    (directory / "schedule.json").write_text(json.dumps(trace, indent=2), encoding="utf-8")
    with open(directory / "training_log.jsonl", "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(json.dumps(log.to_json_dict()) + "\n")
