"""Task losses: CCC agreement loss, cross-entropy, per-AU binary cross-entropy.

CCC uses Lin's concordance definition with population (1/N) moments:
    ccc = 2*cov / (var_x + var_y + (mean_x - mean_y)^2)
A zero denominator (both series constant with equal means) returns 0 by
convention; constant predictions carry no agreement signal.
"""

from __future__ import annotations

import numpy as np
import torch

from .clip_align import contrastive_loss  # noqa: F401  (re-exported track loss)

BCE_EPS = 1e-7


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def ccc(x, y) -> torch.Tensor:
    """Concordance correlation between two equal-length series (>= 2 points)."""
    x = _as_tensor(x).reshape(-1)
    y = _as_tensor(y).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"series length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("ccc needs at least 2 points")
    mean_x, mean_y = x.mean(), y.mean()
    dx, dy = x - mean_x, y - mean_y
    var_x = (dx * dx).mean()
    var_y = (dy * dy).mean()
    cov = (dx * dy).mean()
    denom = var_x + var_y + (mean_x - mean_y) ** 2
    if denom.detach().item() == 0.0:
        return torch.zeros((), dtype=x.dtype)
    return 2.0 * cov / denom


def ccc_loss(pred, target) -> torch.Tensor:
    """1 - mean of valence/arousal concordance over a clip; in [0, 2]."""
    pred = _as_tensor(pred)
    target = _as_tensor(target)
    if pred.ndim != 2 or pred.shape[1] != 2 or pred.shape != target.shape:
        raise ValueError(f"expected matching (N,2) VA series, got {tuple(pred.shape)} "
                         f"and {tuple(target.shape)}")
    ccc_v = ccc(pred[:, 0], target[:, 0])
    ccc_a = ccc(pred[:, 1], target[:, 1])
    return 1.0 - (ccc_v + ccc_a) / 2.0


def cross_entropy(logits, labels) -> torch.Tensor:
    """Mean negative log-softmax of the true category; labels must be in range."""
    logits = _as_tensor(logits)
    if logits.ndim == 1:
        logits = logits.unsqueeze(0)
    labels = torch.as_tensor(np.asarray(labels, dtype=np.int64)).reshape(-1)
    n_classes = logits.shape[-1]
    if labels.shape[0] != logits.shape[0]:
        raise ValueError("logits/labels batch mismatch")
    if bool((labels < 0).any()) or bool((labels >= n_classes).any()):
        raise ValueError(f"labels outside [0, {n_classes})")
    log_probs = torch.log_softmax(logits, dim=-1)
    return -log_probs.gather(1, labels.unsqueeze(1)).mean()


def binary_cross_entropy(probs, labels) -> torch.Tensor:
    """Mean binary cross-entropy over all AU slots; probabilities are clamped
    to [eps, 1-eps] before the logs."""
    probs = _as_tensor(probs)
    labels_arr = np.asarray(labels)
    if not np.isin(labels_arr, (0, 1)).all():
        raise ValueError("AU labels must be 0/1 (sentinels removed upstream)")
    labels_t = torch.as_tensor(labels_arr).to(probs.dtype)
    if labels_t.shape != probs.shape:
        raise ValueError(f"probs/labels shape mismatch: {tuple(probs.shape)} "
                         f"vs {tuple(labels_t.shape)}")
    p = probs.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(labels_t * torch.log(p) + (1.0 - labels_t) * torch.log1p(-p)).mean()
