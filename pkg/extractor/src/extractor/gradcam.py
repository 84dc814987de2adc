"""Description-conditioned gradCAM over the visual encoder.

The target score is the cosine similarity between the image embedding and
the text embedding of a description, so each heatmap depends on the
individual description. Gradients are taken at the output of the last
convolutional stage of the visual encoder; channel weights are the
spatially averaged gradients. The map is ReLU'd, bilinearly upsampled to
the input size and min-max normalized to [0, 1] (all-zero maps stay
all-zero rather than dividing by zero).
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image


def saliency_layer(model) -> torch.nn.Module:
    return model.visual.layer4


def compute_gradcam(model, image: torch.Tensor,
                    tokens: torch.Tensor) -> np.ndarray:
    """Heatmap (H, W) float32 in [0, 1] for one image/description pair."""
    if image.ndim == 3:
        image = image[None]
    if tokens.ndim == 1:
        tokens = tokens[None]
    model.eval()
    activations: list[torch.Tensor] = []
    gradients: list[torch.Tensor] = []

    def fwd_hook(_module, _inputs, output):
        activations.append(output)
        output.register_hook(gradients.append)

    handle = saliency_layer(model).register_forward_hook(fwd_hook)
    try:
        model.zero_grad(set_to_none=True)
        with torch.enable_grad():
            image_feat = model.encode_image(image)
            with torch.no_grad():
                text_feat = model.encode_text(tokens)
            score = F.cosine_similarity(image_feat, text_feat).sum()
            score.backward()
    finally:
        handle.remove()

    act = activations[0].detach()          # (1, C, h, w)
    grad = gradients[0].detach()
    weights = grad.mean(dim=(2, 3), keepdim=True)
    cam = F.relu((weights * act).sum(dim=1, keepdim=True))
    cam = F.interpolate(cam, size=image.shape[-2:], mode="bilinear",
                        align_corners=False)[0, 0]
    lo, hi = float(cam.min()), float(cam.max())
    if hi - lo <= 0.0:
        return np.zeros(cam.shape, dtype=np.float32)
    return ((cam - lo) / (hi - lo)).numpy().astype(np.float32)


def save_heatmap(cam: np.ndarray, gray_path, raw_path) -> None:
    """8-bit grayscale PNG plus the raw float32 map."""
    Image.fromarray((cam * 255).astype(np.uint8), mode="L").save(gray_path)
    with open(raw_path, "wb") as fh:
        np.save(fh, cam.astype(np.float32))


def save_overlay(cam: np.ndarray, image: Image.Image, path,
                 alpha=0.5) -> None:
    """Red-hot blend of the heatmap over the (resized) input image."""
    image = image.convert("RGB").resize((cam.shape[1], cam.shape[0]))
    heat = np.zeros((*cam.shape, 3), dtype=np.uint8)
    heat[..., 0] = (cam * 255).astype(np.uint8)
    heat[..., 2] = ((1.0 - cam) * 160).astype(np.uint8)
    blended = ((1 - alpha) * np.asarray(image) + alpha * heat).astype(np.uint8)
    Image.fromarray(blended).save(path)
