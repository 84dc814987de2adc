"""Command-line surface: synth, normalize, check, train, eval-classify,
zero-shot, retrieve, report-diff.

Exit codes: 0 success, 1 runtime/data error, 2 usage error. All reports
are JSON (stdout or --out); given the same args and seed every subcommand
produces byte-identical outputs across reruns.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import classifier, dataset, metrics, retrieval, store, synthetic
from .errors import EmbedKitError

_MODE_FLAGS = {
    "visual": "visual",
    "class-text": "class_text",
    "class-text-rerank": "class_text_rerank",
    "oracle": "oracle_text",
}


def _emit(payload: dict | str, out: str | None):
    text = payload if isinstance(payload, str) else (
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    )
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _runtime_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (EmbedKitError, KeyError, OSError, ValueError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            raise click.ClickException(str(msg))

    return wrapper


@click.group()
def main():
    """Embedding-based classification and retrieval toolkit."""


@main.command()
@click.option("--classes", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--train-per-class", type=click.IntRange(min=0), default=50,
              show_default=True)
@click.option("--val-per-class", type=click.IntRange(min=0), default=10,
              show_default=True)
@click.option("--test-per-class", type=click.IntRange(min=0), default=10,
              show_default=True)
@click.option("--dim", type=click.IntRange(min=2), default=64, show_default=True)
@click.option("--sigma-image", type=click.FloatRange(min=0), default=0.1,
              show_default=True)
@click.option("--sigma-text", type=click.FloatRange(min=0), default=0.0,
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_runtime_errors
def synth(classes, train_per_class, val_per_class, test_per_class, dim,
          sigma_image, sigma_text, seed, out_dir):
    """Generate a clustered unit-sphere corpus (stores + manifest)."""
    cfg = synthetic.SynthConfig(
        num_classes=classes, train_per_class=train_per_class,
        val_per_class=val_per_class, test_per_class=test_per_class,
        dim=dim, sigma_image=sigma_image, sigma_text=sigma_text, seed=seed,
    )
    images, texts, manifest = synthetic.generate(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store.save_store(images, out / "images.cemb")
    store.save_store(texts, out / "texts.cemb")
    dataset.save_manifest(manifest, out / "manifest.jsonl")
    _emit({
        "images": str(out / "images.cemb"),
        "texts": str(out / "texts.cemb"),
        "manifest": str(out / "manifest.jsonl"),
        "num_items": len(manifest),
        "num_classes": classes,
        "dim": dim,
        "seed": seed,
    }, None)


@main.command()
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.argument("dst", type=click.Path(dir_okay=False))
@_runtime_errors
def normalize(src, dst):
    """L2-normalize every vector of a store."""
    normalized = store.l2_normalize(store.load_store(src))
    store.save_store(normalized, dst)
    _emit({"src": src, "dst": dst, "count": len(normalized),
           "dim": normalized.dim}, None)


@main.command()
@click.option("--store", "store_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True,
              dir_okay=False))
@_runtime_errors
def check(store_path, manifest_path):
    """Validate a store file and optionally its manifest alignment."""
    s = store.load_store(store_path)
    findings: list[str] = []
    payload = {
        "store": store_path,
        "count": len(s),
        "dim": s.dim,
        "modality": s.modality,
        "normalized": s.normalized,
    }
    if manifest_path:
        manifest = dataset.load_manifest(manifest_path)
        report = dataset.check_alignment(manifest, s)
        payload["alignment"] = report.to_dict()
        findings += [f"missing in store: {i}" for i in report.missing_in_store]
    payload["findings"] = findings
    _emit(payload, None)
    if findings:
        raise click.ClickException(f"{len(findings)} finding(s)")


@main.command()
@click.option("--store", "store_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--epochs", type=click.IntRange(min=1), default=300,
              show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=64,
              show_default=True)
@click.option("--lr", type=click.FloatRange(min=0, min_open=True),
              default=1e-4, show_default=True)
@click.option("--hidden", type=click.IntRange(min=1), default=4096,
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--checkpoint", "ckpt_path", type=click.Path(dir_okay=False),
              required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@_runtime_errors
def train(store_path, manifest_path, epochs, batch_size, lr, hidden, seed,
          ckpt_path, report_path):
    """Train the shallow classifier on the manifest's train split."""
    s = store.load_store(store_path)
    manifest = dataset.load_manifest(manifest_path)
    train_items = dataset.split_view(manifest, "train")
    if not train_items:
        raise click.ClickException("manifest has no train items")
    missing = [it.id for it in manifest.items if it.id not in s]
    if missing:
        raise click.ClickException(
            f"store/manifest misaligned, {len(missing)} missing ids, "
            f"first: {missing[:5]}"
        )
    X = s.submatrix([it.id for it in train_items])
    y = np.array([manifest.class_index(it.class_id) for it in train_items])
    val_items = dataset.split_view(manifest, "val")
    val_X = s.submatrix([it.id for it in val_items]) if val_items else None
    val_y = (np.array([manifest.class_index(it.class_id) for it in val_items])
             if val_items else None)
    cfg = classifier.TrainConfig(epochs=epochs, batch_size=batch_size,
                                 learning_rate=lr, seed=seed)
    p0 = classifier.init_params(s.dim, hidden, len(manifest.classes), seed)
    params, epoch_report = classifier.train(p0, cfg, X, y, val_X, val_y)
    classifier.save_params(params, ckpt_path)
    payload = {
        "config": {"epochs": epochs, "batch_size": batch_size, "lr": lr,
                   "hidden": hidden, "seed": seed},
        "checkpoint": ckpt_path,
        "num_train": len(train_items),
        "num_classes": len(manifest.classes),
        "epochs": epoch_report,
    }
    _emit(payload, report_path)
    if report_path:
        _emit({"checkpoint": ckpt_path, "report": report_path,
               "final_train_loss": epoch_report[-1]["train_loss"]}, None)


@main.command("eval-classify")
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--store", "store_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--split", type=click.Choice(dataset.SPLITS), default="test",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
@_runtime_errors
def eval_classify(ckpt_path, store_path, manifest_path, split, out):
    """Accuracy and macro mAP of a trained classifier on one split."""
    params = classifier.load_params(ckpt_path)
    s = store.load_store(store_path)
    manifest = dataset.load_manifest(manifest_path)
    items = dataset.split_view(manifest, split)
    if not items:
        raise click.ClickException(f"split {split!r} is empty")
    missing = [it.id for it in items if it.id not in s]
    if missing:
        raise click.ClickException(
            f"{len(missing)} split ids missing from store, first: {missing[:5]}"
        )
    probs = classifier.predict(params, s, [it.id for it in items])
    preds = {i: classifier.argmax_class(p) for i, p in probs.items()}
    truth = {it.id: manifest.class_index(it.class_id) for it in items}
    acc = metrics.accuracy(preds, truth)
    report = metrics.classification_map(
        probs, manifest, mode="classify",
        config={"split": split, "checkpoint": ckpt_path,
                "num_items": len(items)},
        accuracy_value=acc,
    )
    _emit(report.to_json(), out)


@main.command("zero-shot")
@click.option("--images", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--texts", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--split", type=click.Choice(dataset.SPLITS), default="test",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
@_runtime_errors
def zero_shot(images, texts, manifest_path, split, out):
    """Zero-shot classification against class description embeddings."""
    image_store = store.load_store(images)
    text_store = store.load_store(texts)
    manifest = dataset.load_manifest(manifest_path)
    report = retrieval.zero_shot_eval(manifest, image_store, text_store,
                                      split=split)
    _emit(report.to_json(), out)


@main.command()
@click.option("--images", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--texts", type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True,
              dir_okay=False), required=True)
@click.option("--mode", type=click.Choice(sorted(_MODE_FLAGS)), required=True)
@click.option("--rerank-depth", type=click.IntRange(min=1), default=100,
              show_default=True)
@click.option("--query-split", type=click.Choice(dataset.SPLITS),
              default="val", show_default=True)
@click.option("--index-split", type=click.Choice(dataset.SPLITS),
              default="test", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--rankings-out", type=click.Path(dir_okay=False))
def retrieve(images, texts, manifest_path, mode, rerank_depth, query_split,
             index_split, out, rankings_out):
    """Run one retrieval pipeline and report per-query AP and mAP."""
    internal_mode = _MODE_FLAGS[mode]
    if internal_mode != "visual" and not texts:
        raise click.UsageError(f"--mode {mode} requires --texts")
    try:
        image_store = store.load_store(images)
        text_store = store.load_store(texts) if texts else None
        manifest = dataset.load_manifest(manifest_path)
        report, ranked = retrieval.run_benchmark(
            internal_mode, manifest, image_store, class_texts=text_store,
            rerank_depth=rerank_depth, query_split=query_split,
            index_split=index_split,
        )
        if rankings_out:
            retrieval.save_rankings(ranked, rankings_out)
        _emit(report.to_json(), out)
    except (EmbedKitError, KeyError, OSError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise click.ClickException(str(msg))


@main.command("report-diff")
@click.argument("report_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("report_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--tol", type=click.FloatRange(min=0), default=0.0,
              show_default=True)
@_runtime_errors
def report_diff(report_a, report_b, tol):
    """Compare two evaluation reports; exit 1 if they differ beyond --tol."""
    a = json.loads(Path(report_a).read_text(encoding="utf-8"))
    b = json.loads(Path(report_b).read_text(encoding="utf-8"))
    diffs: list[str] = []

    def walk(x, y, path):
        if isinstance(x, dict) and isinstance(y, dict):
            for key in sorted(set(x) | set(y)):
                if key not in x or key not in y:
                    diffs.append(f"{path}/{key}: only in one report")
                else:
                    walk(x[key], y[key], f"{path}/{key}")
        elif isinstance(x, (int, float)) and isinstance(y, (int, float)) \
                and not isinstance(x, bool) and not isinstance(y, bool):
            if abs(x - y) > tol:
                diffs.append(f"{path}: {x} != {y}")
        elif isinstance(x, list) and isinstance(y, list):
            if len(x) != len(y):
                diffs.append(f"{path}: length {len(x)} != {len(y)}")
            else:
                for i, (xi, yi) in enumerate(zip(x, y)):
                    walk(xi, yi, f"{path}[{i}]")
        elif x != y:
            diffs.append(f"{path}: {x!r} != {y!r}")

    walk(a, b, "")
    _emit({"equal": not diffs, "tol": tol, "diffs": diffs[:100]}, None)
    if diffs:
        raise click.ClickException(f"{len(diffs)} difference(s)")


if __name__ == "__main__":
    main()
