"""Frame datasets over curated indices, batching schemes, embedding caches.

Images live at ``<images_root>/<video_id>/<frame_index:05d>.png``. VA
training samples contiguous clips (the CCC loss treats a batch as one
series); classification tasks shuffle frames; LSTM training consumes
non-overlapping windows and evaluation streams whole videos.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .curation import CuratedIndex
from .tasks import NUM_AUS, Task

EVAL_BATCH = 256


def load_image(path, image_size: int = None) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    if image_size is not None and arr.shape[:2] != (image_size, image_size):
        raise ValueError(f"{path}: expected {image_size}x{image_size} image, "
                         f"got {arr.shape[1]}x{arr.shape[0]}")
    return arr.transpose(2, 0, 1)  # CHW


class FrameDataset:
    """Curated frames of one task plus their image files."""

    def __init__(self, index: CuratedIndex, images_root, image_size: int = None,
                 preload: bool = True):
        self.task = index.task
        self.records = list(index.records)
        self.images_root = Path(images_root)
        self.image_size = image_size
        self._images = None
        # contiguous index ranges per video, in record order
        self.video_ranges = []
        start = 0
        for i, rec in enumerate(self.records):
            if i and rec.video_id != self.records[i - 1].video_id:
                self.video_ranges.append((self.records[start].video_id, start, i))
                start = i
        if self.records:
            self.video_ranges.append((self.records[start].video_id, start, len(self.records)))
        if preload and self.records:
            self._images = np.stack([self._read(i) for i in range(len(self.records))])

    def __len__(self) -> int:
        return len(self.records)

    def _read(self, i: int) -> np.ndarray:
        rec = self.records[i]
        path = self.images_root / rec.video_id / f"{rec.frame_index:05d}.png"
        return load_image(path, self.image_size)

    def images(self, indices) -> torch.Tensor:
        indices = np.asarray(indices, dtype=np.int64)
        if self._images is not None:
            batch = self._images[indices]
        else:
            batch = np.stack([self._read(i) for i in indices])
        return torch.from_numpy(np.ascontiguousarray(batch))

    def targets(self) -> np.ndarray:
        if self.task is Task.VA:
            return np.array(
                [(r.payload.valence, r.payload.arousal) for r in self.records],
                dtype=np.float32,
            )
        if self.task is Task.EXPR:
            return np.array([r.payload.label for r in self.records], dtype=np.int64)
        return np.array([r.payload.values for r in self.records], dtype=np.float32)


def iter_frame_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless shuffled frame batches (classification tasks)."""
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            chunk = order[start : start + batch_size]
            if len(chunk) == batch_size or start == 0:
                yield chunk


def sample_clip(dataset: FrameDataset, clip_len: int, rng: np.random.Generator):
    """Random contiguous window of frames within one video."""
    eligible = [(s, e) for _, s, e in dataset.video_ranges if e - s >= clip_len]
    if not eligible:
        raise ValueError(f"no video has {clip_len} curated frames for clip sampling")
    s, e = eligible[rng.integers(len(eligible))]
    start = s + int(rng.integers(e - s - clip_len + 1))
    return np.arange(start, start + clip_len)


def training_windows(dataset: FrameDataset, window: int):
    """Non-overlapping windows of consecutive frames, per video; short tails
    are dropped."""
    out = []
    for _, s, e in dataset.video_ranges:
        for start in range(s, e - window + 1, window):
            out.append(np.arange(start, start + window))
    return out


def iter_window_batches(windows, batch_size: int, rng: np.random.Generator):
    """Endless shuffled batches of training windows."""
    windows = list(windows)
    if not windows:
        raise ValueError("no training windows (videos shorter than the window?)")
    while True:
        order = rng.permutation(len(windows))
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            if len(chunk) == batch_size or start == 0:
                yield [windows[i] for i in chunk]


def video_sequences(dataset: FrameDataset):
    """(video_id, frame indices) per video, in record order, for streaming."""
    return [(vid, np.arange(s, e)) for vid, s, e in dataset.video_ranges]


@torch.no_grad()
def compute_embeddings(backbone, dataset: FrameDataset, batch: int = EVAL_BATCH) -> np.ndarray:
    """Eval-mode embeddings for every frame, in record order."""
    was_training = backbone.training
    backbone.eval()
    chunks = []
    for start in range(0, len(dataset), batch):
        idx = np.arange(start, min(start + batch, len(dataset)))
        chunks.append(backbone(dataset.images(idx)).numpy())
    if was_training:
        backbone.train()
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 512), np.float32)


def au_targets_int(dataset: FrameDataset) -> np.ndarray:
    labels = dataset.targets()
    if dataset.task is not Task.AU or labels.shape[1] != NUM_AUS:
        raise ValueError("dataset is not an AU index")
    return labels.astype(np.int64)
