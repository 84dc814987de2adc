"""Batch encoding of manifest images and class descriptions to ``.cemb``."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torchvision import transforms
from torchvision.models import resnet50

log = logging.getLogger(__name__)

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

IMAGE_SUFFIXES = ("", ".jpg", ".jpeg", ".png", ".webp")


@dataclass
class ManifestEntry:
    id: str
    class_id: str
    split: str


def load_manifest(path):
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                entries.append(ManifestEntry(obj["id"], obj["class"],
                                             obj["split"]))
    return entries


def clip_preprocess(resolution):
    return transforms.Compose([
        transforms.Resize(resolution,
                          interpolation=transforms.InterpolationMode.BICUBIC),
        transforms.CenterCrop(resolution),
        transforms.ToTensor(),
        transforms.Normalize(CLIP_MEAN, CLIP_STD),
    ])


def imagenet_preprocess(resolution=224):
    return transforms.Compose([
        transforms.Resize(256 * resolution // 224),
        transforms.CenterCrop(resolution),
        transforms.ToTensor(),
        transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
    ])


class PooledResNet50(torch.nn.Module):
    """ImageNet ResNet-50 trunk; global-average-pooled 2048-d features."""

    def __init__(self, weights=None):
        super().__init__()
        backbone = resnet50(weights=weights)
        self.features = torch.nn.Sequential(
            *list(backbone.children())[:-1]  # drop the fc head
        )
        self.output_dim = 2048

    def forward(self, x):
        return self.features(x).flatten(1)

    def encode_image(self, x):
        return self.forward(x)


def resolve_image_path(root: Path, item_id: str) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        candidate = root / (item_id + suffix)
        if candidate.is_file():
            return candidate
    return None


@dataclass
class EncodeResult:
    ids: list[str]
    vectors: np.ndarray
    skipped: list[str] = field(default_factory=list)

    @property
    def skip_fraction(self) -> float:
        total = len(self.ids) + len(self.skipped)
        return len(self.skipped) / total if total else 0.0


@torch.no_grad()
def encode_images(model, preprocess, manifest_entries, image_root,
                  batch_size=32, device="cpu", split=None) -> EncodeResult:
    """One L2-normalized embedding per manifest item, in manifest order.

    Unreadable or missing images go to the skip list; the run continues.
    """
    model = model.to(device).eval()
    root = Path(image_root)
    entries = [e for e in manifest_entries
               if split is None or e.split == split]
    ids: list[str] = []
    chunks: list[np.ndarray] = []
    skipped: list[str] = []
    batch_ids: list[str] = []
    batch_tensors: list[torch.Tensor] = []

    def flush():
        if not batch_tensors:
            return
        x = torch.stack(batch_tensors).to(device)
        feats = model.encode_image(x)
        feats = F.normalize(feats.float(), dim=-1)
        chunks.append(feats.cpu().numpy().astype(np.float32))
        ids.extend(batch_ids)
        batch_ids.clear()
        batch_tensors.clear()

    for entry in entries:
        path = resolve_image_path(root, entry.id)
        if path is None:
            skipped.append(entry.id)
            log.warning("missing image for %s", entry.id)
            continue
        try:
            with Image.open(path) as img:
                tensor = preprocess(img.convert("RGB"))
        except OSError as exc:
            skipped.append(entry.id)
            log.warning("unreadable image %s: %s", path, exc)
            continue
        batch_ids.append(entry.id)
        batch_tensors.append(tensor)
        if len(batch_tensors) >= batch_size:
            flush()
    flush()

    dim = getattr(model, "output_dim", None) or getattr(
        model, "embed_dim", None
    )
    vectors = (np.concatenate(chunks) if chunks
               else np.empty((0, dim), dtype=np.float32))
    return EncodeResult(ids=ids, vectors=vectors, skipped=skipped)


@torch.no_grad()
def encode_texts(model, tokenizer, descriptions: dict[str, str],
                 class_order=None, batch_size=32,
                 device="cpu") -> tuple[EncodeResult, list[str]]:
    """One L2-normalized embedding per class description.

    Returns (result, truncated class ids). Over-long descriptions are cut
    at the tokenizer's context window and reported, never dropped.
    """
    model = model.to(device).eval()
    class_ids = list(class_order) if class_order else list(descriptions)
    for class_id in class_ids:
        if not descriptions.get(class_id):
            raise ValueError(f"empty description for class {class_id!r}")
    chunks = []
    truncated: list[str] = []
    for start in range(0, len(class_ids), batch_size):
        batch = class_ids[start:start + batch_size]
        tokens, cut = tokenizer.tokenize(
            [descriptions[c] for c in batch], model.context_length
        )
        truncated.extend(batch[i] for i in cut)
        feats = model.encode_text(tokens.to(device))
        chunks.append(F.normalize(feats.float(), dim=-1).cpu().numpy())
    for class_id in truncated:
        log.warning("description truncated at the context window: %s",
                    class_id)
    vectors = (np.concatenate(chunks).astype(np.float32) if chunks
               else np.empty((0, model.embed_dim), dtype=np.float32))
    return EncodeResult(ids=class_ids, vectors=vectors), truncated
