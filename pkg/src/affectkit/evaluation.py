"""Challenge metrics and per-AU decision-threshold optimization.

Each track reduces to one scalar P that is the arithmetic mean of its
breakdown: mean of the valence/arousal CCCs, mean of 8 per-category F1
scores, or mean of 12 per-AU F1 scores. F1 is macro style with the
zero-denominator convention: a category with no true and no predicted
positives scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objectives import ccc
from .tasks import AU_NAMES, EXPRESSION_NAMES, NUM_AUS, NUM_EXPRESSIONS, Task

REPORT_COLUMNS = ("CCC_VA", "F1_Expr", "F1_AU", "F1_AUopt")


def default_threshold_grid() -> np.ndarray:
    """0.05 .. 0.95 in steps of 0.05 (contains the 0.5 global baseline)."""
    return np.array([i / 20 for i in range(1, 20)])


@dataclass
class MetricReport:
    task: Task
    score: float
    breakdown: dict
    counts: dict
    thresholds: list = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "task": self.task.value,
            "score": self.score,
            "breakdown": self.breakdown,
            "counts": self.counts,
            "metadata": self.metadata,
        }
        if self.thresholds is not None:
            out["thresholds"] = list(self.thresholds)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricReport":
        return cls(
            task=Task(obj["task"]),
            score=float(obj["score"]),
            breakdown=dict(obj["breakdown"]),
            counts=dict(obj["counts"]),
            thresholds=obj.get("thresholds"),
            metadata=dict(obj.get("metadata", {})),
        )

    def render(self) -> str:
        lines = [f"task={self.task.value}  P={self.score:.6f}"]
        for name, value in self.breakdown.items():
            lines.append(f"  {name:<16} {value: .6f}")
        return "\n".join(lines)


def _f1_from_counts(tp, fp, fn):
    tp = np.asarray(tp, dtype=np.float64)
    denom = 2 * tp + np.asarray(fp) + np.asarray(fn)
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def metric_va(pred, target) -> MetricReport:
    """P = (CCC_valence + CCC_arousal) / 2 over aligned frame series."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ValueError(f"expected matching (N,2) series, got {pred.shape} and {target.shape}")
    if pred.shape[0] < 2:
        raise ValueError("VA metric needs at least 2 frames")
    ccc_v = float(ccc(pred[:, 0], target[:, 0]))
    ccc_a = float(ccc(pred[:, 1], target[:, 1]))
    return MetricReport(
        task=Task.VA,
        score=(ccc_v + ccc_a) / 2.0,
        breakdown={"ccc_valence": ccc_v, "ccc_arousal": ccc_a},
        counts={"frames": int(pred.shape[0])},
    )


def per_class_f1(pred_labels, true_labels, n_classes: int) -> np.ndarray:
    """One-vs-rest F1 for every class id in [0, n_classes)."""
    pred = np.asarray(pred_labels, dtype=np.int64).reshape(-1)
    true = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ValueError("prediction/label length mismatch")
    classes = np.arange(n_classes)
    pred_is = pred[:, None] == classes[None, :]
    true_is = true[:, None] == classes[None, :]
    tp = (pred_is & true_is).sum(axis=0)
    fp = (pred_is & ~true_is).sum(axis=0)
    fn = (~pred_is & true_is).sum(axis=0)
    return _f1_from_counts(tp, fp, fn)


def metric_expr(pred_labels, true_labels) -> MetricReport:
    """P = mean of the 8 per-category one-vs-rest F1 scores."""
    pred = np.asarray(pred_labels, dtype=np.int64).reshape(-1)
    true = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    for name, arr in (("predictions", pred), ("labels", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= NUM_EXPRESSIONS):
            raise ValueError(f"{name} outside [0, {NUM_EXPRESSIONS})")
    f1s = per_class_f1(pred, true, NUM_EXPRESSIONS)
    return MetricReport(
        task=Task.EXPR,
        score=float(f1s.mean()),
        breakdown={f"f1_{name}": float(v) for name, v in zip(EXPRESSION_NAMES, f1s)},
        counts={"frames": int(pred.shape[0])},
        metadata={"zero_division": 0},
    )


def _binarize(probs: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    # inclusive cut: probability equal to the threshold predicts positive
    return probs >= thresholds[None, :]


def metric_au(probs, labels, thresholds=None) -> MetricReport:
    """P = mean of the 12 per-AU binary F1 scores after thresholding."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[1] != NUM_AUS or probs.shape != labels.shape:
        raise ValueError(f"expected matching (n,{NUM_AUS}) arrays, got {probs.shape} "
                         f"and {labels.shape}")
    if probs.size and (probs.min() < 0 or probs.max() > 1):
        raise ValueError("AU probabilities must lie in [0,1]")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("AU labels must be 0/1")
    if thresholds is None:
        thresholds = np.full(NUM_AUS, 0.5)
    thresholds = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    if thresholds.shape[0] != NUM_AUS:
        raise ValueError(f"expected {NUM_AUS} thresholds")
    pred = _binarize(probs, thresholds)
    truth = labels.astype(bool)
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    f1s = _f1_from_counts(tp, fp, fn)
    return MetricReport(
        task=Task.AU,
        score=float(f1s.mean()),
        breakdown={f"f1_{name}": float(v) for name, v in zip(AU_NAMES, f1s)},
        counts={"frames": int(probs.shape[0])},
        thresholds=[float(t) for t in thresholds],
        metadata={"zero_division": 0},
    )


def optimize_thresholds(probs, labels, grid=None) -> list:
    """Per-AU sweep over the grid, independently maximizing each AU's F1 on
    the given data; ties resolve to the lowest threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if grid is None:
        grid = default_threshold_grid()
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    if not (np.diff(grid) > 0).all():
        raise ValueError("threshold grid must be strictly increasing")
    if grid.min() <= 0 or grid.max() >= 1:
        raise ValueError("threshold grid must lie inside (0,1)")
    if probs.ndim != 2 or probs.shape[1] != NUM_AUS or probs.shape != labels.shape:
        raise ValueError("expected matching (n,12) prob/label arrays")

    best = np.empty(NUM_AUS)
    truth = labels.astype(bool)
    for j in range(NUM_AUS):
        pred = probs[:, j : j + 1] >= grid[None, :]  # (n, G)
        pos = truth[:, j : j + 1]
        tp = (pred & pos).sum(axis=0)
        fp = (pred & ~pos).sum(axis=0)
        fn = (~pred & pos).sum(axis=0)
        f1s = _f1_from_counts(tp, fp, fn)
        best[j] = grid[int(np.argmax(f1s))]  # argmax takes the first (lowest) tie
    return [float(t) for t in best]


def render_comparison(rows) -> str:
    """Table with one row per run and the four challenge columns; missing
    entries print as '-'."""
    header = ["architecture"] + list(REPORT_COLUMNS)
    table = [header]
    for row in rows:
        cells = [str(row.get("architecture", "?"))]
        for col in REPORT_COLUMNS:
            value = row.get(col)
            cells.append("-" if value is None else f"{value:.3f}")
        table.append(cells)
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for i, cells in enumerate(table):
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
