import numpy as np
import pytest
import torch

from extractor.cemb import read_cemb, write_cemb
from extractor.encode import (
    PooledResNet50,
    clip_preprocess,
    encode_images,
    encode_texts,
    imagenet_preprocess,
    load_manifest,
)


@pytest.fixture()
def entries(corpus):
    return load_manifest(corpus["manifest"])


def test_encode_images_order_and_dim(tiny_model, corpus, entries):
    pre = clip_preprocess(tiny_model.visual.input_resolution)
    result = encode_images(tiny_model, pre, entries, corpus["image_root"])
    assert result.ids == [r["id"] for r in corpus["rows"]]
    assert result.vectors.shape == (len(entries), tiny_model.embed_dim)
    assert result.skipped == []
    norms = np.linalg.norm(result.vectors, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-5)


def test_encode_images_deterministic(tiny_model, corpus, entries):
    pre = clip_preprocess(tiny_model.visual.input_resolution)
    a = encode_images(tiny_model, pre, entries, corpus["image_root"])
    b = encode_images(tiny_model, pre, entries, corpus["image_root"])
    assert np.array_equal(a.vectors, b.vectors)


def test_encode_images_split_filter(tiny_model, corpus, entries):
    pre = clip_preprocess(tiny_model.visual.input_resolution)
    result = encode_images(tiny_model, pre, entries, corpus["image_root"],
                           split="test")
    assert len(result.ids) == 4
    assert all(i.endswith("_2") for i in result.ids)


def test_missing_image_goes_to_skip_list(tiny_model, corpus, entries,
                                         tmp_path):
    pre = clip_preprocess(tiny_model.visual.input_resolution)
    from extractor.encode import ManifestEntry

    extended = entries + [ManifestEntry("ghost", "c0", "test")]
    result = encode_images(tiny_model, pre, extended, corpus["image_root"])
    assert result.skipped == ["ghost"]
    assert len(result.ids) == len(entries)


def test_unreadable_image_skipped(tiny_model, corpus, entries):
    bad = corpus["image_root"] / "broken.jpg"
    bad.write_bytes(b"not an image")
    from extractor.encode import ManifestEntry

    extended = entries + [ManifestEntry("broken", "c0", "test")]
    pre = clip_preprocess(tiny_model.visual.input_resolution)
    result = encode_images(tiny_model, pre, extended, corpus["image_root"])
    assert result.skipped == ["broken"]


def test_imagenet_rn50_dim_2048(corpus, entries):
    torch.manual_seed(0)
    model = PooledResNet50().eval()
    result = encode_images(model, imagenet_preprocess(224), entries[:2],
                           corpus["image_root"])
    assert result.vectors.shape == (2, 2048)


def test_encode_texts_one_per_class(tiny_model, tokenizer, corpus):
    import json

    descriptions = json.loads(corpus["descriptions"].read_text())
    result, truncated = encode_texts(tiny_model, tokenizer, descriptions)
    assert result.ids == list(descriptions)
    assert result.vectors.shape == (4, tiny_model.embed_dim)
    assert truncated == []  # short descriptions fit the window


def test_identical_descriptions_identical_vectors(tiny_model, tokenizer):
    result, _ = encode_texts(tiny_model, tokenizer,
                             {"a": "same text", "b": "same text"})
    assert np.array_equal(result.vectors[0], result.vectors[1])


def test_long_description_truncated_and_logged(tiny_model, tokenizer):
    result, truncated = encode_texts(
        tiny_model, tokenizer, {"long": "x" * 500, "short": "ok"}
    )
    assert truncated == ["long"]
    assert result.vectors.shape[0] == 2


def test_empty_description_rejected(tiny_model, tokenizer):
    with pytest.raises(ValueError, match="empty"):
        encode_texts(tiny_model, tokenizer, {"bad": ""})


def test_cemb_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    vectors = rng.standard_normal((5, 8)).astype(np.float32)
    ids = [f"i{k}" for k in range(5)]
    path = tmp_path / "x.cemb"
    write_cemb(path, ids, vectors, "image", normalized=False)
    rids, rvecs, modality, normalized = read_cemb(path)
    assert rids == ids
    assert np.array_equal(rvecs, vectors)
    assert modality == "image"
    assert normalized is False
