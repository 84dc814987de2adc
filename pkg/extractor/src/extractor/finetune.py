"""Fine-tuning of the visual encoder with a shallow classification head.

A two-linear-layer head (hidden width 4096, ReLU) sits on the encoder
output; the encoder trains at a much smaller learning rate (1e-7 vs 1e-4
for the head) with every normalization layer frozen. The loss is
categorical cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class FinetuneConfig:
    epochs: int = 30
    batch_size: int = 64
    lr_encoder: float = 1e-7
    lr_head: float = 1e-4
    head_hidden: int = 4096
    seed: int = 0
    device: str = "cpu"


class ClassifierHead(nn.Module):
    def __init__(self, in_dim, hidden, num_classes):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, num_classes),
        )

    def forward(self, x):
        return self.net(x)


def freeze_normalization_layers(model: nn.Module) -> int:
    """Stop gradient flow into every BatchNorm/LayerNorm; returns count."""
    frozen = 0
    for module in model.modules():
        if isinstance(module, (nn.BatchNorm1d, nn.BatchNorm2d,
                               nn.BatchNorm3d, nn.LayerNorm)):
            for p in module.parameters(recurse=False):
                p.requires_grad_(False)
            frozen += 1
    return frozen


class _BatchNormFreezer:
    """Keeps BatchNorm running statistics fixed while the model trains."""

    def __init__(self, model):
        self.bns = [m for m in model.modules()
                    if isinstance(m, nn.modules.batchnorm._BatchNorm)]

    def __enter__(self):
        for bn in self.bns:
            bn.eval()
        return self

    def __exit__(self, *exc):
        return False


def fine_tune(model, images: torch.Tensor, labels: torch.Tensor,
              num_classes: int, cfg: FinetuneConfig):
    """Train encoder + head on (images, labels); returns (model, head, log).

    The model is updated in place. A non-finite loss aborts with a
    RuntimeError carrying the last finite-loss state dicts.
    """
    torch.manual_seed(cfg.seed)
    device = torch.device(cfg.device)
    model = model.to(device)
    embed_dim = getattr(model, "embed_dim", None) or model.output_dim
    head = ClassifierHead(embed_dim, cfg.head_hidden, num_classes).to(device)
    freeze_normalization_layers(model.visual if hasattr(model, "visual")
                                else model)

    encoder = model.visual if hasattr(model, "visual") else model
    encoder_params = [p for p in encoder.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam([
        {"params": encoder_params, "lr": cfg.lr_encoder},
        {"params": head.parameters(), "lr": cfg.lr_head},
    ])
    loss_fn = nn.CrossEntropyLoss()

    model.train()
    head.train()
    history = []
    last_good = None
    generator = torch.Generator().manual_seed(cfg.seed)
    n = images.shape[0]
    with _BatchNormFreezer(encoder):
        for epoch in range(cfg.epochs):
            perm = torch.randperm(n, generator=generator)
            epoch_loss = 0.0
            batches = 0
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                feats = encoder(images[idx].to(device))
                logits = head(feats)
                loss = loss_fn(logits, labels[idx].to(device))
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}; "
                        f"last checkpoint retained"
                    ) from None
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                epoch_loss += float(loss.detach())
                batches += 1
            last_good = {
                "model": {k: v.detach().clone()
                          for k, v in model.state_dict().items()},
                "head": {k: v.detach().clone()
                         for k, v in head.state_dict().items()},
            }
            history.append({"epoch": epoch + 1,
                            "train_loss": epoch_loss / max(batches, 1)})
    model.eval()
    head.eval()
    return model, head, history
