"""Per-task training loops, evaluation, and checkpoint round-trips.

Each task trains independently. With a fully frozen backbone the frame
embeddings are computed once and the head trains on the cache; any
unfrozen part switches the loop to full image batches. Seeds fully
determine initialization, data order, and therefore every reported
metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .backbone import AttentionBackbone, resolve_backbone_config
from .checkpoint import (Checkpoint, load_checkpoint, load_module_state,
                         module_float_state, save_checkpoint)
from .clip_align import (ClipAdapter, ClipLstmAdapter, build_prompts,
                         classify_by_prompt, contrastive_loss, create_provider)
from .config import RunConfig
from .curation import CuratedIndex
from .data import (EVAL_BATCH, FrameDataset, compute_embeddings,
                   iter_frame_batches, iter_window_batches, sample_clip,
                   training_windows, video_sequences)
from .evaluation import MetricReport, metric_au, metric_expr, metric_va, optimize_thresholds
from .heads import make_head
from .objectives import binary_cross_entropy, ccc_loss, cross_entropy
from .tasks import EXPRESSION_NAMES, Task


@dataclass
class Manifest:
    """Handle to a saved checkpoint plus its recorded config and metadata."""

    path: Path
    config: dict
    meta: dict

    @property
    def best_metric(self) -> float:
        return float(self.meta["best_metric"])

    @property
    def step(self) -> int:
        return int(self.meta["step"])

    @classmethod
    def load(cls, path) -> "Manifest":
        ckpt = load_checkpoint(path)
        return cls(Path(path), ckpt.config, ckpt.meta)


def _freeze(module: torch.nn.Module) -> None:
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()


class StandardModel:
    """Backbone plus one task head."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.backbone_cfg = resolve_backbone_config(cfg.backbone)
        self.backbone = AttentionBackbone(self.backbone_cfg)
        self.head = make_head(cfg.task, cfg.head, self.backbone_cfg.embedding_dim,
                              cfg.lstm_hidden, cfg.va_squash)
        self.frozen_parts = []
        for flag, part in ((cfg.freeze.backbone, self.backbone.trunk),
                           (cfg.freeze.attention, self.backbone.attention),
                           (cfg.freeze.gdconv, self.backbone.pool)):
            if flag:
                _freeze(part)
                self.frozen_parts.append(part)

    def trainable_parameters(self):
        return [p for p in (*self.backbone.parameters(), *self.head.parameters())
                if p.requires_grad]

    def set_training(self, training: bool) -> None:
        self.backbone.train(training)
        self.head.train(training)
        for part in self.frozen_parts:
            part.eval()  # frozen parts keep inference statistics

    def state_tensors(self) -> dict:
        out = module_float_state(self.backbone, "backbone.")
        out.update(module_float_state(self.head, "head."))
        return out

    def load_tensors(self, tensors: dict) -> None:
        load_module_state(self.backbone, tensors, "backbone.")
        load_module_state(self.head, tensors, "head.")


class ClipModel:
    """Frozen embedding provider plus the trainable image-side adapter."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.provider = create_provider(cfg.provider, seed=cfg.provider_seed)
        dim = self.provider.embedding_dim
        if cfg.head == "lstm":
            self.adapter = ClipLstmAdapter(dim, cfg.lstm_hidden)
        else:
            self.adapter = ClipAdapter(dim)
        self.prompts = build_prompts(EXPRESSION_NAMES)
        self.prompt_embs = self.provider.embed_texts(self.prompts)

    def trainable_parameters(self):
        return list(self.adapter.parameters())

    def set_training(self, training: bool) -> None:
        self.adapter.train(training)

    def state_tensors(self) -> dict:
        return module_float_state(self.adapter, "adapter.")

    def load_tensors(self, tensors: dict) -> None:
        load_module_state(self.adapter, tensors, "adapter.")


def build_model(cfg: RunConfig):
    torch.manual_seed(cfg.seed)
    return ClipModel(cfg) if cfg.clip else StandardModel(cfg)


def _provider_embeddings(provider, dataset: FrameDataset) -> np.ndarray:
    chunks = []
    for start in range(0, len(dataset), EVAL_BATCH):
        idx = np.arange(start, min(start + EVAL_BATCH, len(dataset)))
        chunks.append(provider.embed_images(dataset.images(idx).numpy()))
    return (np.concatenate(chunks, axis=0) if chunks
            else np.zeros((0, provider.embedding_dim), np.float32))


# ---------------------------------------------------------------- prediction

@torch.no_grad()
def _head_predictions(model: StandardModel, dataset: FrameDataset,
                      embeddings: np.ndarray) -> np.ndarray:
    """Per-frame raw head outputs in record order (VA pairs / logits / probs)."""
    model.set_training(False)
    emb = torch.from_numpy(embeddings)
    if model.cfg.head == "fc":
        return model.head(emb).numpy()
    out = np.empty((len(dataset), model.head.fc.out_features), dtype=np.float32)
    for _, idx in video_sequences(dataset):
        preds, _ = model.head(emb[idx][None])  # stream the whole video
        out[idx] = preds[0].numpy()
    return out


@torch.no_grad()
def _adapted_embeddings(model: ClipModel, dataset: FrameDataset,
                        image_embs: np.ndarray) -> np.ndarray:
    model.set_training(False)
    emb = torch.from_numpy(image_embs)
    if model.cfg.head == "fc":
        return model.adapter(emb).numpy()
    out = np.empty_like(image_embs)
    for _, idx in video_sequences(dataset):
        out[idx] = model.adapter(emb[idx][None])[0].numpy()
    return out


def _report_from_outputs(task: Task, outputs: np.ndarray, targets: np.ndarray) -> MetricReport:
    if task is Task.VA:
        return metric_va(outputs, targets)
    if task is Task.EXPR:
        return metric_expr(outputs.argmax(axis=1), targets)
    return metric_au(np.clip(outputs, 0.0, 1.0), targets.astype(np.int64))


def evaluate_model(model, dataset: FrameDataset, embeddings: np.ndarray = None) -> MetricReport:
    """Deterministic validation report (AU scored at the 0.5 baseline)."""
    if isinstance(model, ClipModel):
        if embeddings is None:
            embeddings = _provider_embeddings(model.provider, dataset)
        adapted = _adapted_embeddings(model, dataset, embeddings)
        labels = classify_by_prompt(adapted, model.prompt_embs)
        return metric_expr(labels, dataset.targets())
    if embeddings is None:
        embeddings = compute_embeddings(model.backbone, dataset)
    outputs = _head_predictions(model, dataset, embeddings)
    return _report_from_outputs(model.cfg.task, outputs, dataset.targets())


# ------------------------------------------------------------------ training

def _make_optimizer(cfg: RunConfig, params):
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.resolved_lr())
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(params, lr=cfg.resolved_lr())
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


def _task_loss(task: Task, outputs: torch.Tensor, targets: np.ndarray):
    if task is Task.VA:
        return ccc_loss(outputs.reshape(-1, 2), torch.from_numpy(targets).reshape(-1, 2))
    if task is Task.EXPR:
        return cross_entropy(outputs.reshape(-1, outputs.shape[-1]),
                             targets.reshape(-1))
    return binary_cross_entropy(outputs.reshape(-1, outputs.shape[-1]),
                                targets.reshape(-1, outputs.shape[-1]))


def _standard_step_factory(model: StandardModel, train_ds: FrameDataset,
                           train_emb, rng: np.random.Generator):
    """Returns a zero-argument closure producing one training loss."""
    cfg = model.cfg
    targets = train_ds.targets()
    use_cache = train_emb is not None

    def frame_inputs(idx):
        if use_cache:
            return torch.from_numpy(train_emb[idx])
        return model.backbone(train_ds.images(idx))

    if cfg.head == "fc":
        if cfg.task is Task.VA:
            def step():
                idx = sample_clip(train_ds, cfg.batch_size, rng)
                return _task_loss(cfg.task, model.head(frame_inputs(idx)), targets[idx])
            return step
        batches = iter_frame_batches(len(train_ds), cfg.batch_size, rng)

        def step():
            idx = next(batches)
            return _task_loss(cfg.task, model.head(frame_inputs(idx)), targets[idx])
        return step

    windows = training_windows(train_ds, cfg.window)
    window_batches = iter_window_batches(windows, max(1, cfg.batch_size // cfg.window), rng)

    def step():
        batch = next(window_batches)
        idx = np.stack(batch)  # (B, T)
        if use_cache:
            seqs = torch.from_numpy(train_emb[idx])
        else:
            flat = model.backbone(train_ds.images(idx.reshape(-1)))
            seqs = flat.reshape(idx.shape[0], idx.shape[1], -1)
        preds, _ = model.head(seqs)
        return _task_loss(cfg.task, preds, targets[idx])
    return step


def _clip_step_factory(model: ClipModel, train_ds: FrameDataset,
                       train_emb: np.ndarray, rng: np.random.Generator):
    cfg = model.cfg
    labels = train_ds.targets()
    by_category = {c: np.flatnonzero(labels == c) for c in np.unique(labels)}
    prompt_t = torch.from_numpy(model.prompt_embs)
    emb_t = torch.from_numpy(train_emb)
    starts = np.empty(len(train_ds), dtype=np.int64)
    for _, s, e in train_ds.video_ranges:
        starts[s:e] = s

    def sample_batch():
        # one frame per category present: keeps every off-diagonal pair mismatched
        return [int(idx[rng.integers(len(idx))]) for _, idx in sorted(by_category.items())]

    if cfg.head == "fc":
        def step():
            chosen = sample_batch()
            adapted = model.adapter(emb_t[chosen])
            _, _, loss = contrastive_loss(adapted, prompt_t[labels[chosen]])
            return loss
        return step

    def step():
        chosen = sample_batch()
        adapted_rows = []
        for t in chosen:
            lo = max(starts[t], t - cfg.window + 1)
            out = model.adapter(emb_t[lo : t + 1][None])
            adapted_rows.append(out[0, -1])  # context-aware vector for frame t
        adapted = torch.stack(adapted_rows)
        _, _, loss = contrastive_loss(adapted, prompt_t[labels[chosen]])
        return loss
    return step


def train_task(cfg: RunConfig, train_index: CuratedIndex, val_index: CuratedIndex,
               out_path) -> Manifest:
    """Run the configured number of steps, track the best validation metric,
    and save that checkpoint."""
    for name, index in (("train", train_index), ("val", val_index)):
        if index.task is not cfg.task:
            raise ValueError(f"{name} index task {index.task.value!r} does not "
                             f"match config task {cfg.task.value!r}")

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = build_model(cfg)

    input_size = (None if cfg.clip
                  else resolve_backbone_config(cfg.backbone).input_size)
    images_dir = cfg.data.images_dir()
    train_ds = FrameDataset(train_index, images_dir, input_size)
    val_ds = FrameDataset(val_index, images_dir, input_size)

    if cfg.clip:
        train_emb = _provider_embeddings(model.provider, train_ds)
        val_emb = _provider_embeddings(model.provider, val_ds)
        step_fn = _clip_step_factory(model, train_ds, train_emb, rng)
    else:
        cache = model.cfg.freeze.all_frozen
        train_emb = compute_embeddings(model.backbone, train_ds) if cache else None
        val_emb = compute_embeddings(model.backbone, val_ds) if cache else None
        step_fn = _standard_step_factory(model, train_ds, train_emb, rng)

    def validation_score():
        return evaluate_model(model, val_ds, val_emb)

    optimizer = _make_optimizer(cfg, model.trainable_parameters())

    best_report = validation_score()
    best = best_report.score
    best_step = 0
    best_state = model.state_tensors()

    for step in range(1, cfg.steps + 1):
        model.set_training(True)
        optimizer.zero_grad()
        loss = step_fn()
        loss.backward()
        optimizer.step()
        if step % cfg.eval_every == 0 or step == cfg.steps:
            score = validation_score().score
            if score > best:
                best, best_step = score, step
                best_state = model.state_tensors()

    meta = {
        "task": cfg.task.value,
        "architecture": cfg.architecture_label(),
        "step": best_step,
        "total_steps": cfg.steps,
        "best_metric": best,
    }
    config = {"run": cfg.to_dict()}
    if not cfg.clip:
        bb = resolve_backbone_config(cfg.backbone)
        config["backbone"] = {k: list(v) if isinstance(v, tuple) else v
                              for k, v in vars(bb).items()}
    save_checkpoint(out_path, best_state, config, meta)
    return Manifest(Path(out_path), config, meta)


# ---------------------------------------------------------------- evaluation

def _as_checkpoint(source) -> Checkpoint:
    if isinstance(source, Manifest):
        return load_checkpoint(source.path)
    if isinstance(source, Checkpoint):
        return source
    return load_checkpoint(source)


def restore_model(source):
    """Rebuild the trained model (backbone+head or provider+adapter) from a
    checkpoint; inference outputs reproduce the saved run bit-for-bit."""
    ckpt = _as_checkpoint(source)
    cfg = RunConfig.from_dict(ckpt.config["run"])
    model = build_model(cfg)
    model.load_tensors(ckpt.tensors)
    model.set_training(False)
    return model, cfg


def evaluate_task(source, index: CuratedIndex, images_dir=None,
                  threshold_grid=None) -> dict:
    """Deterministic metric report for a checkpoint on a curated index.

    Returns {"report": MetricReport} and, for the AU task, additionally the
    optimized-threshold report under "report_opt" plus the threshold vector.
    """
    model, cfg = restore_model(source)
    if index.task is not cfg.task:
        raise ValueError(f"index task {index.task.value!r} does not match "
                         f"checkpoint task {cfg.task.value!r}")
    input_size = (None if cfg.clip
                  else resolve_backbone_config(cfg.backbone).input_size)
    dataset = FrameDataset(index, images_dir or cfg.data.images_dir(), input_size)

    if isinstance(model, ClipModel):
        return {"report": evaluate_model(model, dataset)}

    embeddings = compute_embeddings(model.backbone, dataset)
    outputs = _head_predictions(model, dataset, embeddings)
    report = _report_from_outputs(cfg.task, outputs, dataset.targets())
    result = {"report": report}
    if cfg.task is Task.AU:
        probs = np.clip(outputs, 0.0, 1.0)
        labels = dataset.targets().astype(np.int64)
        thresholds = optimize_thresholds(probs, labels, threshold_grid)
        result["thresholds"] = thresholds
        result["report_opt"] = metric_au(probs, labels, thresholds)
    return result


def predict_frames(source, images_dir, thresholds=None) -> dict:
    """Per-video prediction arrays for every video directory under images_dir.

    VA gives (T,2) floats, EXPR (T,) labels, AU (T,12) binaries after
    thresholding (default 0.5 everywhere).
    """
    model, cfg = restore_model(source)
    images_dir = Path(images_dir)
    videos = sorted(p.name for p in images_dir.iterdir() if p.is_dir())
    if not videos:
        raise ValueError(f"no video directories under {images_dir}")

    from .data import load_image  # local import to keep module top light

    out = {}
    for video in videos:
        frame_paths = sorted((images_dir / video).glob("*.png"))
        frames = torch.from_numpy(np.stack([load_image(p) for p in frame_paths]))
        with torch.no_grad():
            if isinstance(model, ClipModel):
                emb = model.provider.embed_images(frames.numpy())
                if cfg.head == "fc":
                    adapted = model.adapter(torch.from_numpy(emb)).numpy()
                else:
                    adapted = model.adapter(torch.from_numpy(emb)[None])[0].numpy()
                out[video] = classify_by_prompt(adapted, model.prompt_embs)
                continue
            emb = model.backbone(frames)
            if cfg.head == "fc":
                raw = model.head(emb).numpy()
            else:
                raw = model.head(emb[None])[0][0].numpy()
        if cfg.task is Task.VA:
            out[video] = raw
        elif cfg.task is Task.EXPR:
            out[video] = raw.argmax(axis=1)
        else:
            cut = np.full(raw.shape[1], 0.5) if thresholds is None else np.asarray(thresholds)
            out[video] = (raw >= cut[None, :]).astype(np.int64)
    return out
