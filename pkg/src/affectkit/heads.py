"""Task prediction heads: per-frame fully-connected and sequence LSTM.

Output arities are fixed per task (VA 2, EXPR 8, AU 12). VA outputs are
squashed to the configured label range (tanh for [-1,1], logistic for
[0,1]); AU outputs pass through a logistic; expression outputs stay raw
logits.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .tasks import TASK_OUTPUT_DIM, Task

VA_SQUASHES = ("tanh", "sigmoid")


def _squash(raw: torch.Tensor, task: Task, va_squash: str) -> torch.Tensor:
    if task is Task.VA:
        return torch.tanh(raw) if va_squash == "tanh" else torch.sigmoid(raw)
    if task is Task.AU:
        return torch.sigmoid(raw)
    return raw  # EXPR logits


class FcHead(nn.Module):
    """Single affine layer from the embedding to the task outputs."""

    def __init__(self, task: Task, embed_dim: int = 512, va_squash: str = "tanh"):
        super().__init__()
        self.task = Task(task)
        if va_squash not in VA_SQUASHES:
            raise ValueError(f"va_squash must be one of {VA_SQUASHES}")
        self.va_squash = va_squash
        self.fc = nn.Linear(embed_dim, TASK_OUTPUT_DIM[self.task])

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        if embedding.shape[-1] != self.fc.in_features:
            raise ValueError(
                f"expected embedding width {self.fc.in_features}, "
                f"got {embedding.shape[-1]}"
            )
        return _squash(self.fc(embedding), self.task, self.va_squash)


class LstmHead(nn.Module):
    """Single-layer LSTM over embedding sequences with one prediction per frame.

    Recurrent state carries across frames within a window; evaluation can
    stream a full video through one call.
    """

    def __init__(self, task: Task, embed_dim: int = 512, hidden_dim: int = 256,
                 va_squash: str = "tanh"):
        super().__init__()
        self.task = Task(task)
        if va_squash not in VA_SQUASHES:
            raise ValueError(f"va_squash must be one of {VA_SQUASHES}")
        self.va_squash = va_squash
        self.lstm = nn.LSTM(embed_dim, hidden_dim, num_layers=1, batch_first=True)
        self.fc = nn.Linear(hidden_dim, TASK_OUTPUT_DIM[self.task])

    def forward(self, sequence: torch.Tensor, state=None):
        if sequence.ndim != 3:
            raise ValueError(f"expected (batch, time, dim), got {tuple(sequence.shape)}")
        if sequence.shape[1] < 1:
            raise ValueError("zero-length sequence")
        if sequence.shape[2] != self.lstm.input_size:
            raise ValueError(
                f"expected embedding width {self.lstm.input_size}, "
                f"got {sequence.shape[2]}"
            )
        out, state = self.lstm(sequence, state)
        preds = _squash(self.fc(out), self.task, self.va_squash)
        return preds, state


def make_head(task: Task, head_type: str, embed_dim: int = 512,
              hidden_dim: int = 256, va_squash: str = "tanh") -> nn.Module:
    if head_type == "fc":
        return FcHead(task, embed_dim, va_squash)
    if head_type == "lstm":
        return LstmHead(task, embed_dim, hidden_dim, va_squash)
    raise ValueError(f"unknown head type {head_type!r} (expected 'fc' or 'lstm')")
