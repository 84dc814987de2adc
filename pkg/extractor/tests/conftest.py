import json

import numpy as np
import pytest
from PIL import Image

from extractor.clip_model import build_tiny_clip
from extractor.tokenizer import ByteTokenizer


@pytest.fixture(scope="session")
def tiny_model():
    return build_tiny_clip(seed=0)


@pytest.fixture(scope="session")
def tokenizer(tiny_model):
    return ByteTokenizer(context_length=tiny_model.context_length)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """4 classes x 3 items of random RGB noise images plus manifest files."""
    root = tmp_path_factory.mktemp("corpus")
    image_root = root / "images"
    image_root.mkdir()
    rng = np.random.default_rng(0)
    rows = []
    descriptions = {}
    for c in range(4):
        class_id = f"c{c}"
        descriptions[class_id] = f"artwork {c}"
        for i, split in enumerate(["train", "train", "test"]):
            item_id = f"{class_id}_{i}"
            pixels = rng.integers(0, 255, (64, 64, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(image_root / f"{item_id}.jpg")
            rows.append({"id": item_id, "class": class_id, "split": split})
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    desc = root / "descriptions.json"
    desc.write_text(json.dumps(descriptions))
    return {"root": root, "image_root": image_root, "manifest": manifest,
            "descriptions": desc, "rows": rows}
