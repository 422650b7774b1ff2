"""Contrastive vision-language alignment on top of frozen embedding providers.

The image and text encoders are external, frozen providers; the only
trainable parts are the adapter layers stacked on the image side. A
deterministic stub provider ships so the suite runs without downloading
a real vision-language model; real providers register as plug-ins.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np
import torch
import torch.nn as nn

from .tasks import NUM_EXPRESSIONS

PROMPT_TEMPLATE = "a face showing {}"


def build_prompts(category_names) -> list:
    """One prompt per expression category, template applied verbatim."""
    names = list(category_names)
    if len(names) != NUM_EXPRESSIONS:
        raise ValueError(f"expected {NUM_EXPRESSIONS} category names, got {len(names)}")
    return [PROMPT_TEMPLATE.format(str(n).lower()) for n in names]


class EmbeddingProvider(Protocol):
    """Frozen encoder pair: images and texts map to fixed-width vectors."""

    name: str
    embedding_dim: int

    def embed_images(self, images) -> np.ndarray: ...

    def embed_texts(self, prompts) -> np.ndarray: ...


class StubEmbeddingProvider:
    """Deterministic stand-in for a real vision-language encoder pair.

    Images: pooled intensity statistics pushed through a fixed seeded
    random projection. Texts: vectors seeded from a hash of the prompt
    string. Parameters never change, matching the frozen-encoder contract.
    """

    name = "stub"
    _GRID = 8  # pooled grayscale grid per image

    def __init__(self, seed: int = 0, embedding_dim: int = 512):
        self.seed = int(seed)
        self.embedding_dim = int(embedding_dim)
        stats_dim = self._GRID * self._GRID + 6
        rng = np.random.default_rng(self.seed)
        self._projection = rng.standard_normal((stats_dim, self.embedding_dim))
        self._projection /= np.sqrt(stats_dim)

    def _image_stats(self, images: torch.Tensor) -> torch.Tensor:
        gray = images.mean(dim=1, keepdim=True)  # (B,1,H,W)
        pooled = torch.nn.functional.adaptive_avg_pool2d(gray, self._GRID)
        flat = pooled.reshape(images.shape[0], -1)
        ch_mean = images.mean(dim=(2, 3))
        ch_std = images.std(dim=(2, 3), unbiased=False)
        return torch.cat([flat, ch_mean, ch_std], dim=1)

    def embed_images(self, images) -> np.ndarray:
        images = torch.as_tensor(np.asarray(images, dtype=np.float32))
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected images of shape (B,3,H,W), got {tuple(images.shape)}")
        stats = self._image_stats(images.to(torch.float64)).numpy()
        return (stats @ self._projection).astype(np.float32)

    def embed_texts(self, prompts) -> np.ndarray:
        out = np.empty((len(prompts), self.embedding_dim), dtype=np.float32)
        for i, prompt in enumerate(prompts):
            digest = hashlib.sha256(str(prompt).encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            out[i] = rng.standard_normal(self.embedding_dim) / np.sqrt(self.embedding_dim)
        return out


_PROVIDERS = {"stub": StubEmbeddingProvider}


def register_provider(name: str, factory) -> None:
    _PROVIDERS[name] = factory


def create_provider(name: str, **kwargs) -> EmbeddingProvider:
    try:
        factory = _PROVIDERS[name]
    except KeyError:
        raise ValueError(f"unknown embedding provider {name!r}; "
                         f"registered: {sorted(_PROVIDERS)}") from None
    return factory(**kwargs)


class ClipAdapter(nn.Module):
    """Two affine layers deforming the frozen image-embedding space.

    First layer rectifies, second keeps a linear activation so the output
    can stay negative like the raw embedding space.
    """

    def __init__(self, embedding_dim: int = 512):
        super().__init__()
        self.layer1 = nn.Linear(embedding_dim, embedding_dim)
        self.layer2 = nn.Linear(embedding_dim, embedding_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layer2(torch.relu(self.layer1(x)))


class ClipLstmAdapter(nn.Module):
    """Recurrent adapter: contextualizes each frame's embedding over a window
    and emits per-frame adapted vectors of the same width."""

    def __init__(self, embedding_dim: int = 512, hidden_dim: int = 256):
        super().__init__()
        self.lstm = nn.LSTM(embedding_dim, hidden_dim, num_layers=1, batch_first=True)
        self.proj = nn.Linear(hidden_dim, embedding_dim)

    def forward(self, sequence: torch.Tensor) -> torch.Tensor:
        if sequence.ndim != 3 or sequence.shape[1] < 1:
            raise ValueError(f"expected (batch, time>=1, dim), got {tuple(sequence.shape)}")
        out, _ = self.lstm(sequence)
        return self.proj(out)


def l2_normalize(x: torch.Tensor, eps_error: float = 1e-12) -> torch.Tensor:
    norms = x.norm(dim=-1, keepdim=True)
    if bool((norms <= eps_error).any()):
        raise ValueError("cannot normalize zero-norm embedding")
    return x / norms


def contrastive_loss(image_embs, text_embs, temperature: float = 1.0):
    """Symmetric batch contrastive loss over cosine similarities.

    Rows are L2-normalized first, so the inner products are cosine
    similarities. Returns (image_loss, text_loss, combined) where the
    combined value averages the two directions.
    """
    img = torch.as_tensor(image_embs)
    txt = torch.as_tensor(text_embs)
    if img.ndim != 2 or txt.shape != img.shape:
        raise ValueError(f"expected matching (N,D) batches, got {tuple(img.shape)} "
                         f"and {tuple(txt.shape)}")
    if img.shape[0] < 1:
        raise ValueError("contrastive loss needs at least one pair")
    sim = l2_normalize(img) @ l2_normalize(txt).T / temperature
    loss_img = -torch.log_softmax(sim, dim=1).diagonal().mean()
    loss_text = -torch.log_softmax(sim, dim=0).diagonal().mean()
    return loss_img, loss_text, (loss_img + loss_text) / 2


def classify_by_prompt(embeddings, prompt_embs) -> np.ndarray:
    """Cosine-similarity argmax against the prompt rows; ties take the
    lowest category index."""
    emb = torch.as_tensor(np.asarray(embeddings, dtype=np.float64))
    prompts = torch.as_tensor(np.asarray(prompt_embs, dtype=np.float64))
    if emb.ndim == 1:
        emb = emb.unsqueeze(0)
    sim = l2_normalize(emb) @ l2_normalize(prompts).T
    return sim.numpy().argmax(axis=1)
