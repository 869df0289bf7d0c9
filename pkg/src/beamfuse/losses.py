"""Training objectives: focal loss against Gaussian soft labels, the
in-batch contrastive alignment loss over class tokens, and the weighted
total."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tensor, concat

PROB_FLOOR = 1e-7


def soft_label(k_star: int, size: int, sigma: float) -> np.ndarray:
    """Gaussian-decayed target distribution centered at the true index."""
    if not 0 <= k_star < size:
        raise ValueError(f"label {k_star} outside [0, {size})")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    k = np.arange(size, dtype=np.float64)
    w = np.exp(-((k - k_star) ** 2) / (2.0 * sigma * sigma))
    return w / w.sum()


def soft_label_batch(labels: np.ndarray, size: int, sigma: float) -> np.ndarray:
    return np.stack([soft_label(int(y), size, sigma) for y in labels])


def focal_loss(probs: Tensor, targets: np.ndarray, beta1: float = 0.25,
               beta2: float = 2.0) -> Tensor:
    """Soft-label focal loss, summed over classes, averaged over the batch.

    probs must come from a softmax (rows summing to 1); probabilities are
    clamped at 1e-7 before the logarithms.
    """
    targets = np.asarray(targets, dtype=probs.dtype)
    if probs.shape != targets.shape:
        raise ValueError(
            f"probs {probs.shape} vs targets {targets.shape} mismatch")
    sums = probs.data.sum(axis=-1)
    if np.abs(sums - 1.0).max() > 1e-4:
        raise ValueError(
            f"probabilities not normalized: row sums in "
            f"[{sums.min():.6f}, {sums.max():.6f}]")
    t = Tensor(targets)
    log_p = ops.clip(probs, PROB_FLOOR, 1.0).log()
    log_q = ops.clip(1.0 - probs, PROB_FLOOR, 1.0).log()
    pos = t * beta1 * (1.0 - probs) ** beta2 * log_p
    neg = (1.0 - t) * (1.0 - beta1) * probs ** beta2 * log_q
    per_sample = (-(pos + neg)).sum(axis=-1)
    return per_sample.mean()


def contrastive_loss(class_tokens: dict[str, Tensor], fusion_tokens: Tensor,
                     anchor_mask: np.ndarray, tau: float) -> Tensor:
    """InfoNCE-style alignment between modality class tokens and the batch's
    fusion class tokens.

    Each anchor (sample b, modality j with anchor_mask[b, j] = 1) treats its
    own sample's fusion token as the positive; the candidate set is every
    fusion token in the batch. Cosine similarity, scaled by 1/tau.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    b = fusion_tokens.shape[0]
    if b < 2:
        raise ValueError(f"contrastive loss needs batch >= 2, got {b}")
    cf = _normalize_rows(fusion_tokens)
    diag = (np.arange(b), np.arange(b))
    terms = []
    for j, name in enumerate(class_tokens):
        take = np.asarray(anchor_mask)[:, j].astype(bool)
        if not take.any():
            continue
        cj = _normalize_rows(class_tokens[name])
        logits = (cj @ cf.transpose(1, 0)) * (1.0 / tau)   # (B, B)
        per_anchor = ops.logsumexp(logits, axis=-1) - logits[diag]
        terms.append(per_anchor[take])
    if not terms:
        raise ValueError("no anchors: every modality masked out of alignment")
    return concat(terms, axis=0).mean()


def _normalize_rows(x: Tensor) -> Tensor:
    norms_sq = (x * x).sum(axis=-1, keepdims=True)
    if norms_sq.data.min() <= 0.0:
        bad = int(np.argwhere(norms_sq.data <= 0.0)[0, 0])
        raise ValueError(f"zero-norm class vector at row {bad}")
    return x / norms_sq.sqrt()


@dataclass
class LossBreakdown:
    total: Tensor
    focal: Tensor
    contrastive: Tensor
    regularization: Tensor
    lambda_focal: float
    lambda_contrastive: float
    lambda_reg: float

    def values(self) -> dict[str, float]:
        return {"total": self.total.item(), "focal": self.focal.item(),
                "contrastive": self.contrastive.item(),
                "l2": self.regularization.item()}


def total_loss(focal: Tensor, contrastive: Tensor, regularization: Tensor,
               lambda_focal: float, lambda_contrastive: float,
               lambda_reg: float) -> LossBreakdown:
    for name, t in (("focal", focal), ("contrastive", contrastive),
                    ("l2", regularization)):
        if not np.isfinite(t.data).all():
            raise FloatingPointError(f"non-finite {name} loss component")
    total = (focal * lambda_focal + contrastive * lambda_contrastive
             + regularization * lambda_reg)
    return LossBreakdown(total, focal, contrastive, regularization,
                         lambda_focal, lambda_contrastive, lambda_reg)
