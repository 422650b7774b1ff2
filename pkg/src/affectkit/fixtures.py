"""Synthetic dataset generation: procedural face-free image patterns whose
content is correlated with the labels, written in the annotation layout the
curation module parses.

Two modes:
  static    label readable from the current frame alone (separable)
  temporal  an expression code driven by the count of "active" frames among
            the last four, so the label depends on recent history

A fraction of frames carries sentinel annotations (-5 / -1) to exercise
curation. Generation is deterministic per seed; re-running into a fresh
directory reproduces every byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .tasks import AU_NAMES, NUM_AUS, NUM_EXPRESSIONS, Task

TEMPORAL_MEMORY = 4  # frames feeding the temporal expression code


@dataclass(frozen=True)
class FixtureSpec:
    task: Task
    train_videos: int = 4
    val_videos: int = 2
    frames_per_video: int = 64
    image_size: int = 112
    noise: float = 0.04
    mode: str = "static"  # static | temporal (temporal applies to expr only)
    invalid_fraction: float = 0.08


DEFAULT_SPECS = {
    Task.VA: FixtureSpec(Task.VA, train_videos=4, val_videos=2, frames_per_video=80),
    Task.EXPR: FixtureSpec(Task.EXPR, train_videos=5, val_videos=2),
    Task.AU: FixtureSpec(Task.AU, train_videos=5, val_videos=2),
}

# fc heads see only the current frame, so this spec gives recurrent heads an
# edge exactly when they exploit history
TEMPORAL_EXPR_SPEC = FixtureSpec(
    Task.EXPR, train_videos=6, val_videos=2, frames_per_video=64,
    image_size=48, mode="temporal", invalid_fraction=0.0,
)


def _cell_grid(size: int, rows: int, cols: int, k: int):
    r, c = divmod(k, cols)
    rs, cs = size // rows, size // cols
    return slice(r * rs, (r + 1) * rs), slice(c * cs, (c + 1) * cs)


def _base_image(rng, size: int, noise: float) -> np.ndarray:
    return 0.12 + noise * rng.standard_normal((size, size)).astype(np.float32)


def _expr_frame(rng, label: int, size: int, noise: float) -> np.ndarray:
    img = _base_image(rng, size, noise) + 0.02 * label
    rs, cs = _cell_grid(size, 2, 4, label)
    img[rs, cs] = 0.92
    return img


def _au_frame(rng, aus, size: int, noise: float) -> np.ndarray:
    img = _base_image(rng, size, noise)
    for j, active in enumerate(aus):
        if active:
            rs, cs = _cell_grid(size, 3, 4, j)
            img[rs, cs] = 0.92
    return img


def _va_frame(rng, valence: float, arousal: float, size: int, noise: float) -> np.ndarray:
    img = noise * rng.standard_normal((size, size)).astype(np.float32)
    img[:, : size // 2] += 0.1 + 0.8 * (valence + 1.0) / 2.0
    img[:, size // 2 :] += 0.1 + 0.8 * (arousal + 1.0) / 2.0
    return img


def _signal_frame(rng, bit: int, size: int, noise: float) -> np.ndarray:
    level = 0.75 if bit else 0.25
    return level + noise * rng.standard_normal((size, size)).astype(np.float32)


def _write_png(img: np.ndarray, path: Path) -> None:
    arr = np.clip(img, 0.0, 1.0)
    rgb = np.repeat((arr * 255.0).round().astype(np.uint8)[:, :, None], 3, axis=2)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb).save(path)


def _balanced_expr_labels(rng, n: int) -> np.ndarray:
    labels = np.tile(np.arange(NUM_EXPRESSIONS), n // NUM_EXPRESSIONS + 1)[:n]
    rng.shuffle(labels)
    return labels


def _au_labels(rng, n: int) -> np.ndarray:
    labels = rng.integers(0, 2, size=(n, NUM_AUS))
    # guarantee both polarities per AU so per-AU F1 is informative
    for j in range(NUM_AUS):
        col = labels[:, j]
        if col.sum() == 0:
            col[rng.integers(n)] = 1
        elif col.sum() == n:
            col[rng.integers(n)] = 0
    return labels


def _va_walk(rng, n: int) -> np.ndarray:
    out = np.empty((n, 2), dtype=np.float64)
    state = rng.uniform(-0.7, 0.7, size=2)
    for t in range(n):
        out[t] = state
        state = np.clip(state + rng.normal(0.0, 0.15, size=2), -0.9, 0.9)
    return out


def _video_lines_and_frames(rng, spec: FixtureSpec):
    """Returns (annotation lines, list of frame images) for one video."""
    n = spec.frames_per_video
    size, noise = spec.image_size, spec.noise
    invalid = rng.random(n) < spec.invalid_fraction
    lines, frames = [], []

    if spec.task is Task.VA:
        walk = _va_walk(rng, n)
        for t in range(n):
            if invalid[t]:
                lines.append("-5.0,-5.0")
                frames.append(_base_image(rng, size, noise))
            else:
                v, a = walk[t]
                lines.append(f"{v:.6f},{a:.6f}")
                frames.append(_va_frame(rng, v, a, size, noise))
        return lines, frames

    if spec.task is Task.AU:
        labels = _au_labels(rng, n)
        for t in range(n):
            if invalid[t]:
                row = labels[t].copy()
                row[rng.integers(NUM_AUS)] = -1
                lines.append(",".join(str(v) for v in row))
                frames.append(_base_image(rng, size, noise))
            else:
                lines.append(",".join(str(v) for v in labels[t]))
                frames.append(_au_frame(rng, labels[t], size, noise))
        return lines, frames

    if spec.mode == "temporal":
        bits = rng.integers(0, 2, size=n)
        for t in range(n):
            label = int(bits[max(0, t - TEMPORAL_MEMORY + 1) : t + 1].sum())
            lines.append(str(label))
            frames.append(_signal_frame(rng, int(bits[t]), size, noise))
        return lines, frames

    labels = _balanced_expr_labels(rng, n)
    for t in range(n):
        if invalid[t]:
            lines.append("-1")
            frames.append(_base_image(rng, size, noise))
        else:
            lines.append(str(labels[t]))
            frames.append(_expr_frame(rng, int(labels[t]), size, noise))
    return lines, frames


_HEADERS = {
    Task.VA: "valence,arousal",
    Task.EXPR: "expression",
    Task.AU: ",".join(AU_NAMES),
}


def generate_task_fixtures(out_dir, spec: FixtureSpec, seed: int) -> dict:
    """Write one task's fixture videos for both splits under ``out_dir``."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    summary = {"task": spec.task.value, "spec": asdict(spec), "seed": int(seed),
               "splits": {}}
    summary["spec"]["task"] = spec.task.value
    for split, n_videos in (("train", spec.train_videos), ("val", spec.val_videos)):
        videos = []
        for v in range(n_videos):
            video_id = f"{spec.task.value}_{split}_{v:03d}"
            lines, frames = _video_lines_and_frames(rng, spec)
            ann_path = out_dir / "annotations" / spec.task.value / split / f"{video_id}.txt"
            ann_path.parent.mkdir(parents=True, exist_ok=True)
            ann_path.write_text(_HEADERS[spec.task] + "\n" + "\n".join(lines) + "\n")
            for t, frame in enumerate(frames):
                _write_png(frame, out_dir / "images" / video_id / f"{t:05d}.png")
            videos.append(video_id)
        summary["splits"][split] = {
            "videos": videos,
            "frames": n_videos * spec.frames_per_video,
        }
    return summary


def generate_fixtures(out_dir, seed: int, specs=None) -> dict:
    """Generate fixtures for several tasks and write a manifest. ``specs`` maps
    Task -> FixtureSpec; defaults cover all three tasks."""
    out_dir = Path(out_dir)
    if specs is None:
        specs = DEFAULT_SPECS
    manifest = {"seed": int(seed), "tasks": {}}
    for offset, task in enumerate(sorted(specs, key=lambda t: Task(t).value)):
        spec = specs[task]
        manifest["tasks"][Task(task).value] = generate_task_fixtures(
            out_dir, spec, seed + offset
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    return manifest
