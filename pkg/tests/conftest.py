import numpy as np
import pytest

from embedkit.store import EmbeddingStore
from embedkit.synthetic import SynthConfig, generate


def make_store(vectors, ids=None, modality="image", normalized=False, dim=None):
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim == 1:
        vectors = vectors[None, :]
    if ids is None:
        ids = [f"item{i}" for i in range(vectors.shape[0])]
    return EmbeddingStore(
        dim=dim or vectors.shape[1],
        modality=modality,
        ids=list(ids),
        vectors=vectors,
        normalized=normalized,
    )


@pytest.fixture(scope="session")
def tight_corpus():
    """20 well-separated classes; zero-shot top-1 is correct everywhere."""
    cfg = SynthConfig(num_classes=20, train_per_class=10, val_per_class=5,
                      test_per_class=5, dim=64, sigma_image=0.05,
                      sigma_text=0.0, seed=42)
    return generate(cfg)


@pytest.fixture(scope="session")
def degenerate_corpus():
    """sigma = 0: every item sits exactly on its class centroid."""
    cfg = SynthConfig(num_classes=10, train_per_class=4, val_per_class=3,
                      test_per_class=3, dim=32, sigma_image=0.0,
                      sigma_text=0.0, seed=5)
    return generate(cfg)
