"""MLP embedding extractor with a terminal L2 normalization and a linear head.

Shapes: inputs ``(B, d)`` -> hidden layers -> raw embedding ``u`` ``(B, k)``
-> ``z = u / ||u||`` -> logits ``(B, c)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, NonFiniteActivation, NonFiniteGradient
from . import geometry as geo
from . import gradients as gr
from .gradients import normalize_backward

LOG_FLOOR = 1e-12
CHECKPOINT_FORMAT = "addloss-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (128, 128)
    embed_dim: int = 16
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(pre, post):
    return (pre > 0.0).astype(np.float64)


def _tanh_grad(pre, post):
    return 1.0 - post ** 2


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


@dataclass
class MlpParams:
    """Weights are stored ``(fan_in, fan_out)`` so a layer is ``x @ W + b``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_weight: np.ndarray
    head_bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatch("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionMismatch(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionMismatch(f"layer {i} does not chain from layer {i - 1}")
        if self.head_weight.shape[0] != self.embed_dim:
            raise DimensionMismatch("head input must equal the embedding dimension")
        if self.head_bias.shape != (self.head_weight.shape[1],):
            raise DimensionMismatch("head bias shape mismatch")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_classes(self) -> int:
        return self.head_weight.shape[1]

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layers.{i}.weight"] = w
            out[f"layers.{i}.bias"] = b
        out["head.weight"] = self.head_weight
        out["head.bias"] = self.head_bias
        return out

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], activation: str) -> "MlpParams":
        n = sum(1 for name in arrays if name.endswith(".weight") and name.startswith("layers."))
        return cls(
            weights=[arrays[f"layers.{i}.weight"] for i in range(n)],
            biases=[arrays[f"layers.{i}.bias"] for i in range(n)],
            head_weight=arrays["head.weight"],
            head_bias=arrays["head.bias"],
            activation=activation,
        )

    def copy(self) -> "MlpParams":
        return MlpParams.from_named({k: v.copy() for k, v in self.named_arrays().items()},
                                    self.activation)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.named_arrays().values())


def init_params(cfg: ModelConfig, input_dim: int, n_classes: int,
                rng: np.random.Generator) -> MlpParams:
    """He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases."""
    dims = [input_dim, *cfg.hidden, cfg.embed_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    limit = np.sqrt(6.0 / cfg.embed_dim)
    head_w = rng.uniform(-limit, limit, size=(cfg.embed_dim, n_classes))
    return MlpParams(weights, biases, head_w, np.zeros(n_classes), cfg.activation)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    raw: np.ndarray
    norms: np.ndarray
    z: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: MlpParams, inputs) -> ForwardTrace:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionMismatch(
            f"expected inputs of shape (B, {params.input_dim}), got {x.shape}")
    act, _ = ACTIVATIONS[params.activation]
    pre, post = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        pre.append(a)
        # final extractor layer is linear; its output is the raw embedding
        h = a if i == last else act(a)
        post.append(h)
    raw = h
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if not np.all(np.isfinite(raw)) or np.any(norms < 1e-12):
        raise NonFiniteActivation("raw embedding is non-finite or zero")
    z = raw / norms
    logits = z @ params.head_weight + params.head_bias
    if not np.all(np.isfinite(logits)):
        raise NonFiniteActivation("non-finite logits")
    return ForwardTrace(x, pre, post, raw, norms, z, logits, softmax(logits))


def cross_entropy(probs, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits, ``(p - y) / B``.

    Works for soft labels as long as each row of ``labels`` sums to 1.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionMismatch(f"probs {p.shape} vs labels {y.shape}")
    b = p.shape[0]
    loss = float(-(y * np.log(np.maximum(p, LOG_FLOOR))).sum() / b)
    return loss, (p - y) / b


@dataclass
class MlpGrads:
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __add__(self, other: "MlpGrads") -> "MlpGrads":
        return MlpGrads({k: v + other.arrays[k] for k, v in self.arrays.items()})


def backward(params: MlpParams, trace: ForwardTrace, dlogits,
             d_embedding=None) -> MlpGrads:
    """Parameter gradients given dL/dlogits and an extra dL/d(raw embedding).

    ``d_embedding`` is where ADD gradients enter; pass ``None`` for CE only.
    """
    dlogits = np.asarray(dlogits, dtype=np.float64)
    grads = {
        "head.weight": trace.z.T @ dlogits,
        "head.bias": dlogits.sum(axis=0),
    }
    dz = dlogits @ params.head_weight.T
    draw = normalize_backward(trace.z, trace.norms, dz)
    if d_embedding is not None:
        draw = draw + np.asarray(d_embedding, dtype=np.float64)

    _, act_grad = ACTIVATIONS[params.activation]
    delta = draw
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            delta = delta * act_grad(trace.pre[i], trace.post[i])
        below = trace.inputs if i == 0 else trace.post[i - 1]
        grads[f"layers.{i}.weight"] = below.T @ delta
        grads[f"layers.{i}.bias"] = delta.sum(axis=0)
        if i:
            delta = delta @ params.weights[i].T

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    ordered = {name: grads[name] for name in params.named_arrays()}
    return MlpGrads(ordered)


def predict(params: MlpParams, inputs) -> np.ndarray:
    """Class index per row; ties go to the lowest index."""
    return np.argmax(forward(params, inputs).logits, axis=1)


# checkpoints ---------------------------------------------------------------

def model_gradcheck(trials: int = 100, seed: int = 0, h: float = 1e-5,
                    hidden: tuple[int, ...] = (12, 10)) -> float:
    """Largest norm-wise relative error between ``backward`` and central differences.

    Each trial draws a small net, a batch and a loss: cross-entropy plus the
    hard ADD loss on one-hot labels (even trials) or plus the soft loss on
    mixed labels (odd trials). Activations alternate between relu and tanh.
    Every parameter array is compared separately and the worst is returned.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        d, c, b = int(rng.integers(2, 6)), int(rng.integers(2, 5)), int(rng.integers(2, 9))
        act = "tanh" if (t // 2) % 2 else "relu"
        params = init_params(ModelConfig(hidden=hidden, embed_dim=4, activation=act), d, c, rng)
        x = rng.normal(size=(b, d))
        wv = rng.uniform(0.0, 2.0, size=4)
        if t % 2 == 0:
            y = gr.random_hard_labels(rng, b, c)
            w = geo.LossWeights(*wv)

            def add_loss(raw):
                return gr.add_loss_hard_grad(raw, y, w)
        else:
            y = gr.random_soft_labels(rng, b, c)

            def add_loss(raw):
                return gr.add_loss_soft_grad(raw, y, wv[0], wv[1])

        def total(q):
            tr = forward(q, x)
            return cross_entropy(tr.probs, y)[0] + add_loss(tr.raw)[0]

        trace = forward(params, x)
        _, dlogits = cross_entropy(trace.probs, y)
        grads = backward(params, trace, dlogits, add_loss(trace.raw)[1])
        for name, arr in params.named_arrays().items():
            def perturbed(v, name=name):
                q = params.copy()
                q.named_arrays()[name][...] = v
                return total(q)
            fd = gr.finite_difference_grad(perturbed, arr, h)
            worst = max(worst, gr.vector_relative_error(grads.arrays[name], fd))
    return worst


def save_checkpoint(params: MlpParams, path, meta: dict | None = None) -> None:
    """Write params as JSON: each named array carries its shape and flat data.

    Floats are written with ``repr`` precision so a reload is bit-exact.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "activation": params.activation,
        "meta": meta or {},
        "arrays": {
            name: {"shape": list(a.shape), "data": a.ravel().tolist()}
            for name, a in params.named_arrays().items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not an addloss checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    arrays = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["arrays"].items()
    }
    return MlpParams.from_named(arrays, doc["activation"]), doc.get("meta", {})
