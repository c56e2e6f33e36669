"""Optimization loop with frozen-parameter enforcement.

SGD with momentum and weight decay: v <- momentum*v + g + weight_decay*w,
then w <- w - lr*v. Frozen parameters and batch-norm buffers are never
touched by the optimizer, even when a gradient exists for them. Training is
deterministic given (seed, config, corpus): the per-epoch shuffle derives
from (seed, epoch) and everything runs single-threaded.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import ops
from .checkpoint import save_model
from .dataio import iterate_batches, load_manifest, load_sample
from .engine import Tape, Tensor, backward
from .errors import NumericError, ValidationError
from .metrics import ConfusionMatrix


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    steps: int = 300
    batch_size: int = 4
    seed: int = 7
    eval_every: int = 50
    checkpoint_path: str = "model.rhrn"

    def validate(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.eval_every < 1:
            raise ValidationError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        return self

    @classmethod
    def from_dict(cls, d):
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown keys in train config: {sorted(unknown)}")
        return cls(**d).validate()


def sgd_step(params, grads, velocity, config):
    """One momentum-SGD update over a name->Tensor table.

    `grads` is keyed by tensor identity (the backward() table); `velocity`
    maps parameter names to their momentum buffers and is created lazily.
    """
    for name, p in params.items():
        if p.frozen or p.is_buffer or not p.requires_grad:
            continue
        g = grads.get(p)
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
        v = velocity.get(name)
        update = g + config.weight_decay * p.data
        if v is None:
            v = update.astype(np.float32)
        else:
            v = config.momentum * v + update
        velocity[name] = v
        p.data -= config.learning_rate * v


def evaluate(model, manifest):
    """Confusion-matrix metrics over one split, eval mode, no tape."""
    cm = ConfusionMatrix(manifest.num_classes)
    for sid in manifest.ids:
        sample = load_sample(manifest, sid)
        logits = model.forward(Tensor(sample.image[None]), training=False)
        pred = logits.data.argmax(axis=1).astype(np.int32)[0]
        cm.update(pred, sample.labels, ignore_index=manifest.ignore_index)
    return cm


def _epoch_batches(manifest, batch_size, seed):
    epoch = 0
    while True:
        yield from iterate_batches(manifest, batch_size, shuffle_seed=[seed, epoch])
        epoch += 1


def train(model, data_root, config, log_path=None):
    """Run config.steps optimization steps; returns the log records.

    Evaluates on the val split every eval_every steps and checkpoints at
    each evaluation point and at the end. A non-finite loss aborts without
    overwriting the last checkpoint.
    """
    config.validate()
    train_manifest = load_manifest(data_root, "train")
    val_manifest = load_manifest(data_root, "val")
    if train_manifest.num_classes != model.spec.num_classes:
        raise ValidationError(
            f"manifest has {train_manifest.num_classes} classes but the model "
            f"was built for {model.spec.num_classes}")

    params = model.parameter_table()
    trainable = model.trainable_params()
    velocity = {}
    records = [{
        "type": "header",
        "streams": model.spec.num_streams,
        "fingerprint": model.fingerprint().hex(),
        "total_params": model.num_elements(),
        "trainable_params": int(sum(t.data.size for t in trainable)),
        "config": asdict(config),
    }]
    log_file = open(log_path, "w") if log_path else None

    def emit(record):
        records.append(record)
        if log_file:
            log_file.write(json.dumps(record, sort_keys=True) + "\n")

    if log_file:
        log_file.write(json.dumps(records[0], sort_keys=True) + "\n")
    batches = _epoch_batches(train_manifest, config.batch_size, config.seed)
    try:
        for step in range(1, config.steps + 1):
            batch = next(batches)
            with Tape() as tape:
                logits = model.forward(Tensor(batch.images), training=True)
                loss = ops.softmax_cross_entropy_mean(
                    logits, batch.labels, ignore_index=train_manifest.ignore_index)
            loss_value = float(loss.data[0])
            if not np.isfinite(loss_value):
                raise NumericError(
                    f"non-finite loss {loss_value} at step {step}; "
                    f"last good checkpoint retained")
            grads = backward(tape, loss, params=trainable)
            sgd_step(params, grads, velocity, config)
            record = {"step": step, "loss": loss_value}
            if step % config.eval_every == 0 or step == config.steps:
                cm = evaluate(model, val_manifest)
                record["pixel_accuracy"] = cm.pixel_accuracy()
                record["mean_iou"] = cm.mean_iou()[0]
                save_model(model, config.checkpoint_path)
            emit(record)
        if config.steps % config.eval_every != 0:
            save_model(model, config.checkpoint_path)
    finally:
        if log_file:
            log_file.close()
    return records
