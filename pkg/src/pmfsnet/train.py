"""Toy training loop: adaptive first-order optimizer, WEDL objective,
deterministic seeded execution, best-by-validation-IoU checkpointing.

The optimizer keeps one squared-gradient accumulator per parameter (no
momentum) and applies decoupled weight decay. Both the gradient step and the
decay term are scaled by the learning rate, so lr = 0 leaves parameters
bitwise unchanged. The schedule is step decay: the rate halves at each third
of the run.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import augment_pair, load_pair, read_manifest
from .losses import class_weights, wedl
from .serialize import load_checkpoint, save_checkpoint
from .tensor import Tensor


@dataclass
class RunConfig:
    epochs: int = 30
    lr: float = 5e-4
    weight_decay: float = 5e-5
    seed: int = 0
    out_dir: str = "runs/out"
    loss_weights: object = None  # passed to losses.class_weights
    val_fraction: float = 0.2
    augment: bool = True
    noise_sigma: float = 0.02
    log: object = print

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight decay must be non-negative")
        if not (0 <= self.val_fraction < 1):
            raise ValueError("val_fraction must be in [0, 1)")


class AdaptiveOptimizer:
    """RMS-normalized step with decoupled weight decay, no momentum."""

    def __init__(self, params, lr, weight_decay=0.0, beta=0.99, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta = beta
        self.eps = eps
        self.accum = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.accum):
            if p.grad is None:
                continue
            g = p.grad
            v *= self.beta
            v += (1 - self.beta) * g * g
            p.data -= self.lr * (
                g / (np.sqrt(v) + self.eps) + self.weight_decay * p.data
            )

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def lr_at(base_lr, epoch, total_epochs):
    """Step decay: halve at each third of the run."""
    third = max(1, total_epochs // 3)
    return base_lr * 0.5 ** min(2, epoch // third)


def binary_iou(pred_probs, mask, threshold=0.5):
    p = pred_probs >= threshold
    g = mask.astype(bool)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def one_hot(mask, num_classes):
    if num_classes == 1:
        return mask[None].astype(float)
    flat = np.eye(num_classes)[mask.reshape(-1)]
    return np.moveaxis(flat.reshape(mask.shape + (num_classes,)), -1, 0)


def split_pairs(pairs, val_fraction, rng):
    idx = rng.permutation(len(pairs))
    n_val = int(round(len(pairs) * val_fraction))
    val = [pairs[i] for i in idx[:n_val]]
    train = [pairs[i] for i in idx[n_val:]]
    return train, val


def evaluate_iou(model, pairs, channels):
    scores = []
    with T.no_grad():
        for img_path, msk_path in pairs:
            image, mask = load_pair(img_path, msk_path, channels=channels)
            probs = model(Tensor(image))
            scores.append(binary_iou(probs.data[-1], mask > 0))
    return float(np.mean(scores)) if scores else math.nan


def train(model, manifest_path, run: RunConfig, val_manifest=None):
    """-> dict with loss/IoU history and the best checkpoint path."""
    pairs = read_manifest(manifest_path)
    if not pairs:
        raise ValueError(f"empty manifest {manifest_path}")
    channels = model.cfg.in_channels
    rng = np.random.default_rng(run.seed)
    if val_manifest is not None:
        train_pairs, val_pairs = pairs, read_manifest(val_manifest)
    else:
        train_pairs, val_pairs = split_pairs(pairs, run.val_fraction, rng)
    weights = class_weights(max(model.cfg.num_classes, 1), run.loss_weights)
    params = model.parameters()
    opt = AdaptiveOptimizer(params, run.lr, run.weight_decay)
    os.makedirs(run.out_dir, exist_ok=True)
    ckpt_path = os.path.join(run.out_dir, "best.ckpt")
    log_path = os.path.join(run.out_dir, "train_log.txt")
    history = {"loss": [], "train_iou": [], "val_iou": []}
    best_val = -1.0
    log_lines = []

    for epoch in range(run.epochs):
        opt.lr = lr_at(run.lr, epoch, run.epochs)
        order = rng.permutation(len(train_pairs))
        losses = []
        ious = []
        t0 = time.time()
        for i in order:
            image, mask = load_pair(*train_pairs[i], channels=channels)
            if run.augment:
                image, mask = augment_pair(image, mask, rng, run.noise_sigma)
            target = one_hot(mask, model.cfg.num_classes)
            probs = model(Tensor(image))
            loss = wedl(probs, target, weights)
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    f"non-finite loss {loss.data} at epoch {epoch}, case {i}"
                )
            opt.zero_grad()
            T.backward(loss, leaves=params)
            opt.step()
            losses.append(float(loss.data))
            ious.append(binary_iou(probs.data[-1], mask > 0))
        val_iou = evaluate_iou(model, val_pairs, channels)
        history["loss"].append(float(np.mean(losses)))
        history["train_iou"].append(float(np.mean(ious)))
        history["val_iou"].append(val_iou)
        line = (
            f"epoch {epoch:3d}  lr {opt.lr:.2e}  loss {history['loss'][-1]:.4f}  "
            f"train_iou {history['train_iou'][-1]:.4f}  val_iou {val_iou:.4f}  "
            f"({time.time() - t0:.1f}s)"
        )
        log_lines.append(line)
        if run.log:
            run.log(line)
        score = val_iou if not math.isnan(val_iou) else history["train_iou"][-1]
        if score > best_val:
            best_val = score
            save_checkpoint(
                ckpt_path,
                ((n, p.data) for n, p in model.named_parameters()),
                meta={"epoch": str(epoch), "val_iou": f"{score:.6f}",
                      "preset": f"{model.cfg.name.lower()}-{model.cfg.dims}d",
                      "seed": str(run.seed)},
            )
    with open(log_path, "w") as fh:
        fh.write("".join(line + "\n" for line in log_lines))
    history["best_val_iou"] = best_val
    history["checkpoint"] = ckpt_path
    return history


def load_into(model, ckpt_path):
    tensors, meta = load_checkpoint(ckpt_path)
    named = dict(model.named_parameters())
    missing = set(named) - set(tensors)
    extra = set(tensors) - set(named)
    if missing or extra:
        raise ValueError(
            f"checkpoint mismatch: missing {sorted(missing)[:3]}..., "
            f"extra {sorted(extra)[:3]}..."
            if missing and extra
            else f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
        )
    for name, arr in tensors.items():
        if named[name].data.shape != arr.shape:
            raise ValueError(
                f"shape mismatch for {name}: {named[name].data.shape} vs {arr.shape}"
            )
        named[name].data = arr.astype(np.float64)
    return meta
