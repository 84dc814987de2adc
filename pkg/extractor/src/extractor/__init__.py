"""clip-extractor: real embeddings, fine-tuning and gradCAM heatmaps."""

__version__ = "0.1.0"
