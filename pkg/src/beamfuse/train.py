"""End-to-end training loop with per-batch availability sampling."""

from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .checkpoint import read_checkpoint, write_checkpoint
from .config import echo_config
from .features import featurize_windows
from .losses import (contrastive_loss, focal_loss, soft_label_batch,
                     total_loss)
from .metrics import compute_report
from .model import BeamFuseModel, ModelConfig
from .optim import AdamW
from .ops import softmax
from .scenario import SceneParams, sample_availability
from .tensor import Tensor

log = logging.getLogger(__name__)

EPOCH_HEADER = "epoch,total,focal,contrastive,l2,top1,top3,top5,dba"


def combine_avail(stored: np.ndarray, sampled: np.ndarray) -> np.ndarray:
    """Intersect stored and sampled availability; a sample whose
    intersection would be empty keeps its stored mask."""
    combined = stored & sampled
    empty = combined.sum(axis=1) == 0
    combined[empty] = stored[empty]
    return combined


def sample_batch_masks(mode: str, n: int, rng: np.random.Generator,
                       ratio: float, count: int,
                       ratios: list[float]) -> np.ndarray:
    return np.stack([
        sample_availability(mode, rng, ratio, count, tuple(ratios))
        for _ in range(n)])


def batch_losses(model: BeamFuseModel, feats: dict, labels: np.ndarray,
                 avail: np.ndarray, cfg: dict, rng: np.random.Generator,
                 dtype) -> tuple:
    out = model.forward(feats, avail, training=True, rng=rng)
    probs = softmax(out.logits)
    targets = soft_label_batch(labels, model.mc.codebook,
                               cfg["loss.label_sigma"]).astype(dtype)
    lf = focal_loss(probs, targets, cfg["loss.beta1"], cfg["loss.beta2"])
    if out.class_tokens is not None and labels.shape[0] >= 2:
        lc = contrastive_loss(out.class_tokens, out.fusion_class,
                              out.anchor_mask, cfg["loss.tau"])
    else:
        lc = Tensor(np.zeros(1, dtype=dtype))
    l2 = out.gate_l2 if out.gate_l2 is not None else Tensor(
        np.zeros(1, dtype=dtype))
    breakdown = total_loss(lf, lc, l2, cfg["loss.lambda_focal"],
                           cfg["loss.lambda_contrastive"],
                           cfg["loss.lambda_reg"])
    return breakdown, out


def predict_logits(model: BeamFuseModel, feats: dict, avail: np.ndarray,
                   batch: int) -> np.ndarray:
    n = avail.shape[0]
    outs = []
    for lo in range(0, n, batch):
        hi = min(lo + batch, n)
        sub = {k: v[lo:hi] for k, v in feats.items()}
        outs.append(model.forward(sub, avail[lo:hi], training=False)
                    .logits.data)
    return np.concatenate(outs, axis=0)


def split_by_sequence(windows: list, fraction: float,
                      rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Index split keeping whole sequences on one side."""
    seqs = sorted({w.seq for w in windows})
    order = rng.permutation(len(seqs))
    n_held = max(1, int(round(fraction * len(seqs)))) if fraction > 0 else 0
    held = {seqs[i] for i in order[:n_held]}
    main = [i for i, w in enumerate(windows) if w.seq not in held]
    rest = [i for i, w in enumerate(windows) if w.seq in held]
    return main, rest


def train_model(cfg: dict, windows: list, out_dir: str | Path) -> dict:
    """Train on the given windows; writes epochs.csv and checkpoints.

    Returns a summary with the best validation metrics.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out)
    scene = SceneParams.from_config(cfg)
    mc = ModelConfig.from_config(cfg)
    seed = cfg["train.seed"]
    dtype = np.float64 if cfg["train.precision"] == "double" else np.float32

    feats_all, labels_all, avail_all, tags_all = featurize_windows(
        windows, scene)
    train_idx, val_idx = split_by_sequence(
        windows, cfg["train.val_fraction"], rngmod.stream(seed, "valsplit"))
    if not train_idx:
        raise ValueError("no training windows after validation split")
    tr = {k: v[train_idx] for k, v in feats_all.items()}
    tr_labels = labels_all[train_idx]
    tr_avail = avail_all[train_idx]
    va = {k: v[val_idx] for k, v in feats_all.items()}
    va_labels = labels_all[val_idx]
    va_avail = avail_all[val_idx]
    va_tags = [tags_all[i] for i in val_idx]

    model = BeamFuseModel.build(mc, rngmod.stream(seed, "init"), dtype)
    n = len(train_idx)
    batch = cfg["train.batch"]
    steps_per_epoch = -(-n // batch)
    total_steps = cfg["train.epochs"] * steps_per_epoch
    opt = AdamW(model.params, cfg["train.lr"],
                weight_decay=cfg["train.weight_decay"],
                warmup=cfg["train.warmup"], total_steps=total_steps)

    start_epoch = 0
    if cfg["train.resume"]:
        state = read_checkpoint(cfg["train.resume"])
        model.params.load_arrays(
            {k[len("param/"):]: v for k, v in state.items()
             if k.startswith("param/")})
        opt.load_state_arrays(
            {k[len("opt/"):]: v for k, v in state.items()
             if k.startswith("opt/")})
        start_epoch = opt.step_count // steps_per_epoch
        log.info("resumed at step %d (epoch %d)", opt.step_count, start_epoch)

    epochs_path = out / "epochs.csv"
    if start_epoch == 0:
        epochs_path.write_text(EPOCH_HEADER + "\n")
    best_top1 = -1.0
    summary: dict = {}
    for epoch in range(start_epoch, cfg["train.epochs"]):
        t0 = time.time()
        perm = rngmod.stream(seed, "shuffle", epoch).permutation(n)
        sums = {"total": 0.0, "focal": 0.0, "contrastive": 0.0, "l2": 0.0}
        seen = 0
        for b_idx in range(steps_per_epoch):
            step = epoch * steps_per_epoch + b_idx
            idx = perm[b_idx * batch:(b_idx + 1) * batch]
            feats = {k: v[idx] for k, v in tr.items()}
            labels = tr_labels[idx]
            mask_rng = rngmod.stream(seed, "mask", step)
            sampled = sample_batch_masks(
                cfg["mask.mode"], len(idx), mask_rng, cfg["mask.ratio"],
                cfg["mask.count"], cfg["mask.ratios"])
            avail = combine_avail(tr_avail[idx], sampled)
            drop_rng = rngmod.stream(seed, "dropout", step)
            breakdown, _ = batch_losses(model, feats, labels, avail, cfg,
                                        drop_rng, dtype)
            if not np.isfinite(breakdown.total.data).all():
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} batch {b_idx}")
            model.params.zero_grad()
            breakdown.total.backward()
            opt.step()
            for key, value in breakdown.values().items():
                sums[key] += value * len(idx)
            seen += len(idx)

        means = {k: v / seen for k, v in sums.items()}
        if val_idx:
            logits = predict_logits(model, va, va_avail, cfg["eval.batch"])
            report = compute_report(logits, va_labels, va_tags,
                                    cfg["eval.dba_k"], cfg["eval.dba_delta"])
            overall = report.rows[0]
        else:
            overall = {"top1": float("nan"), "top3": float("nan"),
                       "top5": float("nan"), "dba": float("nan")}
        with open(epochs_path, "a") as fh:
            fh.write(f"{epoch},{means['total']:.6f},{means['focal']:.6f},"
                     f"{means['contrastive']:.6f},{means['l2']:.6f},"
                     f"{overall['top1']:.6f},{overall['top3']:.6f},"
                     f"{overall['top5']:.6f},{overall['dba']:.6f}\n")
        log.info("epoch %d: loss %.4f top1 %.3f (%.1fs)", epoch,
                 means["total"], overall["top1"], time.time() - t0)

        state = {f"param/{k}": v for k, v in model.params.arrays().items()}
        state.update({f"opt/{k}": v for k, v in opt.state_arrays().items()})
        write_checkpoint(out / "train_state.ambp", state)
        if val_idx and overall["top1"] >= best_top1:
            best_top1 = overall["top1"]
            write_checkpoint(out / "checkpoint_best.ambp",
                             model.params.arrays())
        summary = {"epochs": epoch + 1, "final_loss": means["total"],
                   "val_top1": overall["top1"], "best_val_top1": best_top1}

    write_checkpoint(out / "checkpoint_final.ambp", model.params.arrays())
    return summary
