"""CLI: ``extract images|texts``, ``finetune``, ``gradcam``.

All embedding outputs use the engine's ``.cemb`` format and validate
cleanly against its ``check`` subcommand. Without ``--weights`` the
models are randomly initialized from ``--seed`` (useful for smoke tests
and format work only).
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
import torch
from PIL import Image

from .cemb import write_cemb
from .clip_model import build_clip_rn50, build_tiny_clip
from .encode import (
    PooledResNet50,
    clip_preprocess,
    encode_images,
    encode_texts,
    imagenet_preprocess,
    load_manifest,
)
from .finetune import FinetuneConfig, fine_tune
from .gradcam import compute_gradcam, save_heatmap, save_overlay
from .tokenizer import BPETokenizer, ByteTokenizer

MAX_SKIP_FRACTION = 0.01

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


def build_model(model_name, weights, seed, tiny):
    if tiny:
        return build_tiny_clip(seed=seed)
    if model_name == "clip-rn50":
        return build_clip_rn50(weights_path=weights, seed=seed)
    if weights:
        model = PooledResNet50()
        model.load_state_dict(torch.load(weights, map_location="cpu"))
        return model.eval()
    torch.manual_seed(seed)
    return PooledResNet50().eval()


def build_tokenizer(model, merges):
    if merges:
        return BPETokenizer(merges, context_length=model.context_length)
    return ByteTokenizer(context_length=model.context_length)


def model_preprocess(model_name, model, tiny):
    if model_name == "clip-rn50" or tiny:
        return clip_preprocess(model.visual.input_resolution)
    return imagenet_preprocess()


@click.group()
def main():
    """Embedding extraction, fine-tuning and gradCAM for artwork corpora."""


@main.group()
def extract():
    """Encode images or class descriptions to a .cemb store."""


_model_opt = click.option("--model", "model_name",
                          type=click.Choice(["clip-rn50", "imagenet-rn50"]),
                          default="clip-rn50", show_default=True)
_weights_opt = click.option("--weights", type=click.Path(exists=True,
                            dir_okay=False), default=None,
                            help="State dict; random init when omitted.")
_tiny_opt = click.option("--tiny", is_flag=True,
                         help="Reduced-width model for smoke tests.")
_seed_opt = click.option("--seed", type=int, default=0, show_default=True)


@extract.command("images")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--image-root", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]),
              default=None, help="Restrict to one split (default: all).")
@click.option("--batch-size", type=click.IntRange(min=1), default=32,
              show_default=True)
@click.option("--device", default="cpu", show_default=True)
@_model_opt
@_weights_opt
@_tiny_opt
@_seed_opt
def extract_images(manifest_path, image_root, out, split, batch_size, device,
                   model_name, weights, tiny, seed):
    model = build_model(model_name, weights, seed, tiny)
    preprocess = model_preprocess(model_name, model, tiny)
    entries = load_manifest(manifest_path)
    result = encode_images(model, preprocess, entries, image_root,
                           batch_size=batch_size, device=device, split=split)
    write_cemb(out, result.ids, result.vectors, "image", normalized=True)
    summary = {
        "out": out,
        "count": len(result.ids),
        "dim": int(result.vectors.shape[1]) if len(result.ids) else None,
        "skipped": result.skipped,
    }
    click.echo(json.dumps(summary, indent=2))
    if result.skip_fraction > MAX_SKIP_FRACTION:
        raise click.ClickException(
            f"skipped {len(result.skipped)} images "
            f"({result.skip_fraction:.1%} > {MAX_SKIP_FRACTION:.0%})"
        )


@extract.command("texts")
@click.option("--descriptions", "descriptions_path",
              type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--bpe-merges", type=click.Path(exists=True, dir_okay=False),
              default=None, help="BPE merges file of the released model.")
@click.option("--batch-size", type=click.IntRange(min=1), default=32,
              show_default=True)
@click.option("--device", default="cpu", show_default=True)
@_weights_opt
@_tiny_opt
@_seed_opt
def extract_texts(descriptions_path, out, bpe_merges, batch_size, device,
                  weights, tiny, seed):
    model = build_model("clip-rn50", weights, seed, tiny)
    tokenizer = build_tokenizer(model, bpe_merges)
    descriptions = json.loads(Path(descriptions_path).read_text("utf-8"))
    try:
        result, truncated = encode_texts(model, tokenizer, descriptions,
                                         batch_size=batch_size, device=device)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    write_cemb(out, result.ids, result.vectors, "text", normalized=True)
    click.echo(json.dumps({
        "out": out,
        "count": len(result.ids),
        "dim": int(result.vectors.shape[1]) if len(result.ids) else None,
        "truncated": truncated,
    }, indent=2))


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--image-root", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--split", default="train", show_default=True,
              help="Split used for fine-tuning.")
@click.option("--epochs", type=click.IntRange(min=0), default=30,
              show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=64,
              show_default=True)
@click.option("--lr-encoder", type=float, default=1e-7, show_default=True)
@click.option("--lr-head", type=float, default=1e-4, show_default=True)
@click.option("--head-hidden", type=click.IntRange(min=1), default=4096,
              show_default=True)
@click.option("--out-weights", type=click.Path(dir_okay=False), required=True)
@click.option("--out-store", type=click.Path(dir_okay=False), required=True,
              help="Re-exported image embeddings from the tuned encoder.")
@click.option("--export-split", default=None,
              help="Split to re-export (default: all items).")
@click.option("--device", default="cpu", show_default=True)
@_weights_opt
@_tiny_opt
@_seed_opt
def finetune(manifest_path, image_root, split, epochs, batch_size, lr_encoder,
             lr_head, head_hidden, out_weights, out_store, export_split,
             device, weights, tiny, seed):
    """Fine-tune the visual encoder, then re-export image embeddings."""
    model = build_model("clip-rn50", weights, seed, tiny)
    preprocess = model_preprocess("clip-rn50", model, tiny)
    entries = load_manifest(manifest_path)
    train_entries = [e for e in entries if e.split == split]
    if not train_entries:
        raise click.ClickException(f"no items in split {split!r}")
    classes = sorted({e.class_id for e in train_entries})
    class_index = {c: i for i, c in enumerate(classes)}

    images, labels, missing = [], [], []
    from .encode import resolve_image_path

    for entry in train_entries:
        path = resolve_image_path(Path(image_root), entry.id)
        if path is None:
            missing.append(entry.id)
            continue
        with Image.open(path) as img:
            images.append(preprocess(img.convert("RGB")))
        labels.append(class_index[entry.class_id])
    if not images:
        raise click.ClickException("no readable training images")
    cfg = FinetuneConfig(epochs=epochs, batch_size=batch_size,
                         lr_encoder=lr_encoder, lr_head=lr_head,
                         head_hidden=head_hidden, seed=seed, device=device)
    try:
        model, head, history = fine_tune(
            model, torch.stack(images), torch.tensor(labels), len(classes),
            cfg,
        )
    except RuntimeError as exc:
        raise click.ClickException(str(exc))
    # the classification head is scaffolding; only the encoder ships
    torch.save(model.state_dict(), out_weights)
    result = encode_images(model, preprocess, entries, image_root,
                           batch_size=batch_size, device=device,
                           split=export_split)
    write_cemb(out_store, result.ids, result.vectors, "image",
               normalized=True)
    click.echo(json.dumps({
        "weights": out_weights,
        "store": out_store,
        "epochs": history,
        "num_classes": len(classes),
        "missing_images": missing,
    }, indent=2))


@main.command()
@click.option("--image", "image_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--description", required=True)
@click.option("--out-prefix", required=True,
              help="Writes <prefix>.png, <prefix>.npy, <prefix>_overlay.png")
@click.option("--bpe-merges", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--device", default="cpu", show_default=True)
@_model_opt
@_weights_opt
@_tiny_opt
@_seed_opt
def gradcam(image_path, description, out_prefix, bpe_merges, device,
            model_name, weights, tiny, seed):
    """Render a description-conditioned heatmap for one image."""
    if model_name != "clip-rn50":
        raise click.UsageError("gradcam needs the clip-rn50 model")
    model = build_model(model_name, weights, seed, tiny)
    preprocess = model_preprocess(model_name, model, tiny)
    tokenizer = build_tokenizer(model, bpe_merges)
    with Image.open(image_path) as img:
        pil = img.convert("RGB")
        tensor = preprocess(pil)
        tokens, _ = tokenizer.tokenize(description, model.context_length)
        cam = compute_gradcam(model.to(device), tensor.to(device),
                              tokens.to(device))
        save_heatmap(cam, f"{out_prefix}.png", f"{out_prefix}.npy")
        save_overlay(cam, pil, f"{out_prefix}_overlay.png")
    click.echo(json.dumps({
        "gray": f"{out_prefix}.png",
        "raw": f"{out_prefix}.npy",
        "overlay": f"{out_prefix}_overlay.png",
        "min": float(cam.min()),
        "max": float(cam.max()),
        "shape": list(cam.shape),
    }, indent=2))


if __name__ == "__main__":
    sys.exit(main())
