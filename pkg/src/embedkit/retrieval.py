"""Zero-shot classification and the four retrieval pipelines.

All scoring is cosine similarity over L2-normalized stores, accumulated
in float64. Every ranking uses a stable tie-break: equal scores keep the
candidate store's entry order.

Pipeline modes:
    visual            rank index images by similarity to the query image
    class_text        zero-shot top-1 class, then text-to-image ranking
    class_text_rerank class_text, with the first ``rerank_depth`` items
                      re-ordered by visual similarity (tail frozen)
    oracle_text       text-to-image ranking with the ground-truth class
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import dot_matrix, row_norms
from .dataset import DatasetManifest, split_view
from .errors import (
    AlignmentError,
    DegenerateVectorError,
    EmptyUniverseError,
    IntegrityError,
)
from .metrics import EvalReport, retrieval_map
from .store import EmbeddingStore

MODES = ("visual", "class_text", "class_text_rerank", "oracle_text")
DEFAULT_RERANK_DEPTH = 100


@dataclass
class RankedList:
    """A query id plus a strictly ordered (item_id, score) list."""

    query_id: str
    ranking: list[tuple[str, float]] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [item_id for item_id, _ in self.ranking]

    def to_json_line(self) -> str:
        return json.dumps(
            {"query": self.query_id,
             "ranking": [[i, s] for i, s in self.ranking]},
            ensure_ascii=False,
        )


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors, accumulated in float64."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(row_norms(a[None, :])[0])
    nb = float(row_norms(b[None, :])[0])
    if na <= 1e-12 or nb <= 1e-12:
        raise DegenerateVectorError("cosine of a (near-)zero vector")
    return float(dot_matrix(a[None, :], b[None, :])[0, 0]) / (na * nb)


def _cosine_rows(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Cosine matrix (num_queries, num_candidates), float64."""
    qn = row_norms(queries)
    cn = row_norms(candidates)
    if np.any(qn <= 1e-12) or np.any(cn <= 1e-12):
        raise DegenerateVectorError("cosine of a (near-)zero vector")
    return dot_matrix(queries, candidates) / (qn[:, None] * cn[None, :])


def _rank(ids: list[str], scores: np.ndarray) -> list[tuple[str, float]]:
    """Sort descending by score; ties keep the given (store) order."""
    order = np.argsort(-scores, kind="stable")
    return [(ids[i], float(scores[i])) for i in order]


def _require_normalized(store: EmbeddingStore, what: str) -> None:
    if not store.normalized:
        raise IntegrityError(
            f"{what} store is not L2-normalized; run `embedkit normalize` first"
        )


def zero_shot_classify(query: np.ndarray, class_texts: EmbeddingStore,
                       query_id: str = "query") -> RankedList:
    """Rank every class description by cosine similarity to the query image."""
    if len(class_texts) == 0:
        raise EmptyUniverseError("class text store is empty")
    scores = _cosine_rows(np.asarray(query)[None, :], class_texts.vectors)[0]
    return RankedList(query_id=query_id, ranking=_rank(class_texts.ids, scores))


def _text_to_image(class_id: str, class_texts: EmbeddingStore,
                   index_ids: list[str], index_vectors: np.ndarray):
    text_vec = class_texts.vector(class_id)
    scores = _cosine_rows(text_vec[None, :], index_vectors)[0]
    return _rank(index_ids, scores)


def _rerank_block(base, query_vec, index_store, depth):
    """Re-sort the top ``depth`` entries by visual similarity.

    Only ids move; the descending score sequence of the base ranking is
    kept positionally so the list invariant (non-increasing scores) holds
    across the block/tail boundary. The tail is untouched.
    """
    depth = min(depth, len(base))
    block_ids = [item_id for item_id, _ in base[:depth]]
    block_vecs = index_store.submatrix(block_ids)
    visual = _cosine_rows(np.asarray(query_vec)[None, :], block_vecs)[0]
    order = np.argsort(-visual, kind="stable")
    reordered = [block_ids[i] for i in order]
    scores = [score for _, score in base]
    return [(item_id, scores[pos]) for pos, item_id in enumerate(reordered)] \
        + base[depth:]


def retrieve(mode: str, query_id: str, query_store: EmbeddingStore,
             index_store: EmbeddingStore,
             class_texts: EmbeddingStore | None = None,
             manifest: DatasetManifest | None = None,
             rerank_depth: int = DEFAULT_RERANK_DEPTH) -> RankedList:
    """Rank the whole index store for one query under the given mode."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if rerank_depth < 1:
        raise ValueError("rerank_depth must be >= 1")
    _require_normalized(query_store, "query")
    _require_normalized(index_store, "index")
    query_vec = query_store.vector(query_id)
    index_ids = index_store.ids

    if mode == "visual":
        scores = _cosine_rows(query_vec[None, :], index_store.vectors)[0]
        return RankedList(query_id, _rank(index_ids, scores))

    if class_texts is None:
        raise ValueError(f"mode {mode!r} needs a class text store")
    _require_normalized(class_texts, "class text")

    if mode == "oracle_text":
        if manifest is None:
            raise ValueError("oracle_text needs a manifest for ground truth")
        class_id = manifest.item(query_id).class_id
        if class_id not in class_texts:
            raise KeyError(f"class {class_id!r} missing from text store")
        return RankedList(
            query_id,
            _text_to_image(class_id, class_texts, index_ids, index_store.vectors),
        )

    top1 = zero_shot_classify(query_vec, class_texts, query_id).ranking[0][0]
    base = _text_to_image(top1, class_texts, index_ids, index_store.vectors)
    if mode == "class_text":
        return RankedList(query_id, base)
    return RankedList(
        query_id, _rerank_block(base, query_vec, index_store, rerank_depth)
    )


def run_benchmark(mode: str, manifest: DatasetManifest,
                  image_store: EmbeddingStore,
                  class_texts: EmbeddingStore | None = None,
                  rerank_depth: int = DEFAULT_RERANK_DEPTH,
                  query_split: str = "val",
                  index_split: str = "test") -> tuple[EvalReport, list[RankedList]]:
    """Evaluate one pipeline over a query split against an index split."""
    queries = split_view(manifest, query_split)
    index_items = split_view(manifest, index_split)
    if not queries:
        raise EmptyUniverseError(f"no items in query split {query_split!r}")
    if not index_items:
        raise EmptyUniverseError(f"no items in index split {index_split!r}")
    missing = [it.id for it in queries + index_items if it.id not in image_store]
    if missing:
        raise AlignmentError(
            f"{len(missing)} manifest ids missing from image store, "
            f"first: {missing[:5]}"
        )
    index_subset = EmbeddingStore(
        dim=image_store.dim,
        modality=image_store.modality,
        ids=[it.id for it in index_items],
        vectors=image_store.submatrix([it.id for it in index_items]),
        normalized=image_store.normalized,
    )
    ranked = [
        retrieve(mode, it.id, image_store, index_subset,
                 class_texts=class_texts, manifest=manifest,
                 rerank_depth=rerank_depth)
        for it in queries
    ]
    config = {
        "mode": mode, "query_split": query_split, "index_split": index_split,
        "num_queries": len(queries), "num_index": len(index_items),
    }
    if mode == "class_text_rerank":
        config["rerank_depth"] = rerank_depth
    report = retrieval_map(ranked, manifest, mode=mode, config=config)
    return report, ranked


def zero_shot_eval(manifest: DatasetManifest, image_store: EmbeddingStore,
                   class_texts: EmbeddingStore,
                   split: str = "test") -> EvalReport:
    """Zero-shot classification accuracy and macro mAP over one split."""
    items = split_view(manifest, split)
    if not items:
        raise EmptyUniverseError(f"no items in split {split!r}")
    if len(class_texts) == 0:
        raise EmptyUniverseError("class text store is empty")
    _require_normalized(image_store, "image")
    _require_normalized(class_texts, "class text")
    missing = [it.id for it in items if it.id not in image_store]
    if missing:
        raise AlignmentError(
            f"{len(missing)} manifest ids missing from image store, "
            f"first: {missing[:5]}"
        )
    absent = [c for c in manifest.classes if c not in class_texts]
    if absent:
        raise AlignmentError(
            f"{len(absent)} classes missing from text store, first: {absent[:5]}"
        )
    X = image_store.submatrix([it.id for it in items])
    scores = _cosine_rows(X, class_texts.vectors)
    # top-1 with the text store's entry order as tie-break
    top1 = np.argmax(scores, axis=1)
    preds = {it.id: manifest.class_index(class_texts.ids[top1[i]])
             for i, it in enumerate(items)}
    truth = {it.id: manifest.class_index(it.class_id) for it in items}
    acc = float(np.mean([preds[k] == truth[k] for k in truth]))
    # score vectors re-indexed to the manifest's class order for mAP
    col_of = {class_id: j for j, class_id in enumerate(class_texts.ids)}
    cols = [col_of[c] for c in manifest.classes]
    probs = {it.id: scores[i, cols] for i, it in enumerate(items)}
    return classification_map_with_accuracy(probs, manifest, acc, split)


def classification_map_with_accuracy(probs, manifest, acc, split):
    from .metrics import classification_map

    return classification_map(
        probs, manifest, mode="zero_shot",
        config={"split": split, "num_items": len(probs)},
        accuracy_value=acc,
    )


def save_rankings(ranked: list[RankedList], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rl in ranked:
            fh.write(rl.to_json_line() + "\n")
