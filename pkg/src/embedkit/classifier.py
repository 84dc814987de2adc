"""Shallow classifier over frozen embeddings, trained from scratch.

Architecture: hidden linear layer -> ReLU -> L2-normalization layer ->
output linear layer -> softmax. Gradients are hand-derived, including the
normalization Jacobian (I - n n^T) / ||h||. All math runs in float64;
parameters are stored in float32 by default.

Checkpoint format (little-endian): magic ``CPRM`` | version u32 = 1 |
input_dim u32 | hidden_dim u32 | num_classes u32 | row-major f32 arrays
W1, b1, W2, b2.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, FormatError, TruncatedFileError

CKPT_MAGIC = b"CPRM"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIII")

NORM_FLOOR = 1e-12


@dataclass
class ClassifierParams:
    W1: np.ndarray  # (hidden_dim, input_dim)
    b1: np.ndarray  # (hidden_dim,)
    W2: np.ndarray  # (num_classes, hidden_dim)
    b2: np.ndarray  # (num_classes,)

    def __post_init__(self):
        hidden, inp = self.W1.shape
        classes = self.W2.shape[0]
        if self.b1.shape != (hidden,) or self.W2.shape != (classes, hidden) \
                or self.b2.shape != (classes,):
            raise ValueError("inconsistent parameter shapes")
        for arr in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite parameter value")

    @property
    def input_dim(self):
        return self.W1.shape[1]

    @property
    def hidden_dim(self):
        return self.W1.shape[0]

    @property
    def num_classes(self):
        return self.W2.shape[0]

    def astype(self, dtype) -> "ClassifierParams":
        return ClassifierParams(
            self.W1.astype(dtype), self.b1.astype(dtype),
            self.W2.astype(dtype), self.b2.astype(dtype),
        )

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy()
        )

    def allclose(self, other, **kw) -> bool:
        return all(
            np.allclose(a, b, **kw)
            for a, b in zip(self._arrays(), other._arrays())
        )

    def _arrays(self):
        return (self.W1, self.b1, self.W2, self.b2)

    def bitwise_equal(self, other) -> bool:
        return all(
            a.dtype == b.dtype and np.array_equal(
                a.view(np.uint8 if a.dtype.itemsize == 1 else f"u{a.dtype.itemsize}"),
                b.view(np.uint8 if b.dtype.itemsize == 1 else f"u{b.dtype.itemsize}"),
            )
            for a, b in zip(self._arrays(), other._arrays())
        )


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 1e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def init_params(input_dim, hidden_dim, num_classes, seed, dtype=np.float32):
    """Glorot-uniform weights from a seeded PCG64 generator, zero biases."""
    if min(input_dim, hidden_dim, num_classes) <= 0:
        raise ValueError("dims must be positive")
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)

    return ClassifierParams(
        W1=glorot(hidden_dim, input_dim),
        b1=np.zeros(hidden_dim, dtype=dtype),
        W2=glorot(num_classes, hidden_dim),
        b2=np.zeros(num_classes, dtype=dtype),
    )


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def forward_batch(p: ClassifierParams, X: np.ndarray):
    """Batched forward pass in float64.

    Returns (probs (B, C), cache). Hidden vectors with exactly zero norm
    map to n = 0 (guarded, no NaN).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != p.input_dim:
        raise ValueError(
            f"input dim {X.shape[1]} != expected {p.input_dim}"
        )
    W1 = p.W1.astype(np.float64)
    W2 = p.W2.astype(np.float64)
    z1 = X @ W1.T + p.b1.astype(np.float64)
    h = np.maximum(z1, 0.0)
    hnorm = np.sqrt(np.einsum("ij,ij->i", h, h))
    safe = np.maximum(hnorm, NORM_FLOOR)
    n = h / safe[:, None]
    logits = n @ W2.T + p.b2.astype(np.float64)
    probs = _softmax(logits)
    cache = {"X": X, "z1": z1, "h": h, "hnorm": hnorm, "n": n,
             "logits": logits, "probs": probs, "W2": W2}
    return probs, cache


def forward(p: ClassifierParams, x: np.ndarray):
    """Single-sample forward pass; returns (probs (C,), cache)."""
    probs, cache = forward_batch(p, np.asarray(x)[None, :])
    return probs[0], cache


def norm_layer_jacobian(h: np.ndarray) -> np.ndarray:
    """Jacobian of h -> h / max(||h||, floor); projects out the radial direction."""
    h = np.asarray(h, dtype=np.float64)
    hnorm = float(np.linalg.norm(h))
    safe = max(hnorm, NORM_FLOOR)
    n = h / safe
    return (np.eye(h.size) - np.outer(n, n)) / safe


def loss_and_grad(p: ClassifierParams, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and exact analytic gradients.

    Returns (loss, grads) with grads as a float64 ClassifierParams.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.intp)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if np.any(y < 0) or np.any(y >= p.num_classes):
        raise ValueError("class index out of range")
    probs, cache = forward_batch(p, X)
    B = X.shape[0]
    logits = cache["logits"]
    # loss via log-sum-exp for stability
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(B), y]))

    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B

    n, h, z1 = cache["n"], cache["h"], cache["z1"]
    safe = np.maximum(cache["hnorm"], NORM_FLOOR)

    gW2 = dlogits.T @ n
    gb2 = dlogits.sum(axis=0)
    dn = dlogits @ cache["W2"]
    # (I - n n^T)/||h|| applied row-wise; zero rows stay zero
    dh = (dn - np.einsum("ij,ij->i", dn, n)[:, None] * n) / safe[:, None]
    dz1 = dh * (z1 > 0.0)
    gW1 = dz1.T @ X
    gb1 = dz1.sum(axis=0)

    grads = ClassifierParams(W1=gW1, b1=gb1, W2=gW2, b2=gb2)
    return loss, grads


def predict_batch(p: ClassifierParams, X: np.ndarray) -> np.ndarray:
    probs, _ = forward_batch(p, X)
    return probs


def predict(p: ClassifierParams, store, item_ids) -> dict[str, np.ndarray]:
    """Class probabilities per item; missing id -> KeyError."""
    X = store.submatrix(item_ids)
    probs = predict_batch(p, X)
    return {item_id: probs[i] for i, item_id in enumerate(item_ids)}


def argmax_class(probs: np.ndarray) -> int:
    """Ties broken by lowest class index (np.argmax contract)."""
    return int(np.argmax(probs))


def train(p0: ClassifierParams, cfg: TrainConfig, train_X, train_y,
          val_X=None, val_y=None):
    """Adam training loop, fully deterministic per (seed, config, data).

    Returns (params, report) where report is a list of per-epoch dicts.
    Raises DivergenceError carrying the last finite-loss params.
    """
    train_X = np.atleast_2d(np.asarray(train_X, dtype=np.float64))
    train_y = np.asarray(train_y, dtype=np.intp)
    if train_X.shape[0] == 0:
        raise ValueError("empty training set")
    n_samples = train_X.shape[0]
    out_dtype = p0.W1.dtype

    params = p0.astype(np.float64)
    moments1 = [np.zeros_like(a) for a in params._arrays()]
    moments2 = [np.zeros_like(a) for a in params._arrays()]
    step = 0
    rng = np.random.default_rng(cfg.seed)
    report = []
    last_good = params.copy()

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_samples)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_samples, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads = loss_and_grad(params, train_X[idx], train_y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}",
                    last_params=last_good.astype(out_dtype),
                    epoch=epoch,
                )
            step += 1
            arrays = params._arrays()
            for i, (arr, g) in enumerate(zip(arrays, grads._arrays())):
                moments1[i] = cfg.beta1 * moments1[i] + (1 - cfg.beta1) * g
                moments2[i] = cfg.beta2 * moments2[i] + (1 - cfg.beta2) * g * g
                m_hat = moments1[i] / (1 - cfg.beta1 ** step)
                v_hat = moments2[i] / (1 - cfg.beta2 ** step)
                arr -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
            epoch_loss += loss
            n_batches += 1
        last_good = params.copy()
        entry = {"epoch": epoch + 1, "train_loss": epoch_loss / n_batches}
        if val_X is not None and val_y is not None and len(val_y):
            probs = predict_batch(params, val_X)
            preds = np.argmax(probs, axis=1)
            entry["val_accuracy"] = float(np.mean(preds == np.asarray(val_y)))
        report.append(entry)

    return params.astype(out_dtype), report


def save_params(p: ClassifierParams, path) -> None:
    """Atomic checkpoint write; arrays stored as row-major f32."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".cprm.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_CKPT_HEADER.pack(
                CKPT_MAGIC, CKPT_VERSION,
                p.input_dim, p.hidden_dim, p.num_classes,
            ))
            for arr in p._arrays():
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_params(path) -> ClassifierParams:
    with open(path, "rb") as fh:
        head = fh.read(_CKPT_HEADER.size)
        if len(head) < _CKPT_HEADER.size:
            raise TruncatedFileError(f"{path}: file shorter than header")
        magic, version, input_dim, hidden_dim, num_classes = _CKPT_HEADER.unpack(head)
        if magic != CKPT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != CKPT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        shapes = [
            (hidden_dim, input_dim), (hidden_dim,),
            (num_classes, hidden_dim), (num_classes,),
        ]
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape))
            payload = fh.read(4 * count)
            if len(payload) < 4 * count:
                raise TruncatedFileError(f"{path}: truncated parameter array")
            arrays.append(np.frombuffer(payload, dtype="<f4").reshape(shape).copy())
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes")
    return ClassifierParams(*arrays)
