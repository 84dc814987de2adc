"""embedkit: classification and retrieval over precomputed multimodal embeddings."""

from ._kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
