"""Deterministic class-clustered unit-sphere corpora for desk-scale tests.

Per class: a unit-norm centroid drawn from a seeded PCG64 generator, one
text embedding (centroid + sigma_text * noise, re-normalized) and
train/val/test items (centroid + sigma_image * noise, re-normalized).
The noise model approximates a von Mises-Fisher cluster. Same seed =>
bitwise-identical corpus within one installation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetManifest, ManifestItem
from .errors import DegenerateVectorError
from .store import EmbeddingStore

MAX_RETRIES = 100


@dataclass
class SynthConfig:
    num_classes: int = 20
    train_per_class: int = 50
    val_per_class: int = 10
    test_per_class: int = 10
    dim: int = 64
    sigma_image: float = 0.1
    sigma_text: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        for name in ("train_per_class", "val_per_class", "test_per_class"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not (np.isfinite(self.sigma_image) and np.isfinite(self.sigma_text)):
            raise ValueError("sigmas must be finite")
        if self.sigma_image < 0 or self.sigma_text < 0:
            raise ValueError("sigmas must be non-negative")


def _unit(rng: np.random.Generator, dim: int, around=None, sigma=0.0):
    for _ in range(MAX_RETRIES):
        v = rng.standard_normal(dim)
        if around is not None:
            v = around + sigma * v
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm
    raise DegenerateVectorError("exhausted retries drawing a nonzero vector")


def generate(cfg: SynthConfig):
    """Build (image store, class text store, manifest) from one seed."""
    rng = np.random.default_rng(cfg.seed)
    image_ids: list[str] = []
    image_vecs: list[np.ndarray] = []
    text_ids: list[str] = []
    text_vecs: list[np.ndarray] = []
    items: list[ManifestItem] = []
    classes: list[str] = []

    per_split = (
        ("train", cfg.train_per_class),
        ("val", cfg.val_per_class),
        ("test", cfg.test_per_class),
    )
    for k in range(cfg.num_classes):
        class_id = f"c{k:03d}"
        classes.append(class_id)
        centroid = _unit(rng, cfg.dim)
        text_ids.append(class_id)
        if cfg.sigma_text == 0.0:
            text_vecs.append(centroid)
        else:
            text_vecs.append(_unit(rng, cfg.dim, centroid, cfg.sigma_text))
        for split, count in per_split:
            for i in range(count):
                item_id = f"{class_id}_{split}_{i:03d}"
                if cfg.sigma_image == 0.0:
                    vec = centroid
                else:
                    vec = _unit(rng, cfg.dim, centroid, cfg.sigma_image)
                image_ids.append(item_id)
                image_vecs.append(vec)
                items.append(ManifestItem(id=item_id, class_id=class_id,
                                          split=split))

    image_store = EmbeddingStore(
        dim=cfg.dim, modality="image", ids=image_ids,
        vectors=np.asarray(image_vecs, dtype=np.float32), normalized=True,
    )
    text_store = EmbeddingStore(
        dim=cfg.dim, modality="text", ids=text_ids,
        vectors=np.asarray(text_vecs, dtype=np.float32), normalized=True,
    )
    manifest = DatasetManifest(items=items, classes=classes)
    return image_store, text_store, manifest
