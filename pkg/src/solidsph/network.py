"""Shallow classifiers over globally pooled layer responses.

Three model kinds share one architecture: a first layer producing per-stream
channels (solid-harmonic spectrum `sse`, parity-projected bispectrum `ssb`,
or a plain convolution `z3`), global average pooling, a per-feature bias,
ReLU, and one fully connected softmax head trained with cross-entropy.

Training operates on per-volume sufficient statistics extracted once by
`extract_features` (moment tensors for sse/ssb, mean patches for z3), so an
optimization step costs small tensor contractions regardless of volume size;
the numbers are exactly those of the map-level pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import layer
from .invariants import enumerate_triples
from .kernels import default_radial_count
from .layer import LayerGeometry

__all__ = [
    "TrainingError",
    "ModelConfig",
    "Model",
    "build_model",
    "count_parameters",
    "extract_features",
    "FeatureBundle",
    "pooled_batch",
    "forward_logits",
    "cross_entropy",
    "loss_and_grads",
    "TrainConfig",
    "AdamState",
    "adam_step",
    "train",
    "evaluate",
    "learning_curve",
    "confidence_interval",
    "save_model",
    "load_model",
]

KINDS = ("sse", "ssb", "z3")


class TrainingError(RuntimeError):
    """Raised when training hits non-finite losses or gradients."""


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    kernel_size: int
    n_streams: int
    max_degree: int = 0
    stride: int = 1
    padding: str = "zero"
    n_classes: int = 2
    prune_zero: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel size must be odd, got {self.kernel_size}")
        if self.n_streams < 1 or self.n_classes < 2 or self.max_degree < 0:
            raise ValueError("invalid model configuration")

    @property
    def geometry(self) -> LayerGeometry:
        return LayerGeometry(self.kernel_size, self.stride, self.padding)

    @property
    def n_radial(self) -> int:
        return default_radial_count(self.kernel_size)

    def triples(self):
        return enumerate_triples(self.max_degree, self.prune_zero)

    @property
    def n_channels(self) -> int:
        if self.kind == "sse":
            return self.max_degree + 1
        if self.kind == "ssb":
            return len(self.triples())
        return 1

    @property
    def n_features(self) -> int:
        return self.n_streams * self.n_channels


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]
    seed: int | None = None
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


def build_model(config: ModelConfig, rng: np.random.Generator,
                seed: int | None = None) -> Model:
    """Radial/convolution weights ~ N(0, 1), biases zero, fully connected
    head scaled by 1/sqrt(n_features)."""
    n_feat = config.n_features
    params = {}
    if config.kind == "z3":
        params["kernels"] = rng.standard_normal(
            (config.n_streams,) + (config.kernel_size,) * 3)
    else:
        params["radial"] = rng.standard_normal(
            (config.n_streams, config.max_degree + 1, config.n_radial))
    params["feature_bias"] = np.zeros(n_feat)
    params["fc_weight"] = rng.standard_normal((n_feat, config.n_classes)) / np.sqrt(n_feat)
    params["fc_bias"] = np.zeros(config.n_classes)
    model = Model(config, params, seed=seed)
    model.zero_grads()
    return model


def count_parameters(model: Model) -> int:
    return sum(v.size for v in model.params.values())


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

@dataclass
class FeatureBundle:
    """Per-volume sufficient statistics plus labels for one data split."""

    kind: str
    data: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.data.shape[0]

    def subset(self, idx) -> "FeatureBundle":
        return FeatureBundle(self.kind, self.data[idx], self.labels[idx])


def extract_features(volumes, labels, config: ModelConfig,
                     masks=None) -> FeatureBundle:
    """Reduce volumes to the statistics that training needs.

    ``volumes`` is an iterable of 3D arrays; ``masks``, when given, is a
    parallel iterable of input-grid boolean masks used for masked pooling.
    """
    geom = config.geometry
    triples = config.triples() if config.kind == "ssb" else None
    rows = []
    mask_iter = iter(masks) if masks is not None else None
    for vol in volumes:
        mask_out = None
        if mask_iter is not None:
            mask_out = layer.downsample_mask(next(mask_iter), vol.shape, geom)
        if config.kind == "z3":
            rows.append(layer.mean_patch(vol, geom, mask_out))
            continue
        basis_maps = layer.compute_basis_maps(vol, config.max_degree,
                                              config.n_radial, geom)
        if config.kind == "sse":
            rows.append(layer.sse_moments(basis_maps, mask_out))
        else:
            rows.append(layer.ssb_moments(basis_maps, triples, mask_out))
    return FeatureBundle(config.kind, np.stack(rows),
                         np.asarray(labels, dtype=np.intp))


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def pooled_batch(model: Model, data: np.ndarray) -> np.ndarray:
    """(B, n_features) pooled first-layer responses for a batch of extracted
    statistics, ordered stream-major then channel."""
    cfg = model.config
    if cfg.kind == "sse":
        w = model.params["radial"]
        pooled = np.einsum("qnj,bnjk,qnk->bqn", w, data.real, w)
    elif cfg.kind == "ssb":
        w = model.params["radial"]
        triples = cfg.triples()
        pooled = np.empty((data.shape[0], cfg.n_streams, len(triples)))
        for t_idx, t in enumerate(triples):
            b = np.einsum("qi,qj,qk,bijk->bq", w[:, t.n], w[:, t.n_prime],
                          w[:, t.ell], data[:, t_idx])
            pooled[:, :, t_idx] = b.real if t.parity_even else b.imag
    else:
        pooled = np.einsum("qxyz,bxyz->bq", model.params["kernels"], data)
        pooled = pooled[:, :, None]
    return pooled.reshape(data.shape[0], cfg.n_features)


def forward_logits(model: Model, data: np.ndarray):
    """Returns (logits, cache) with the intermediates backward needs."""
    pooled = pooled_batch(model, data)
    pre_act = pooled + model.params["feature_bias"]
    hidden = np.maximum(pre_act, 0.0)
    logits = hidden @ model.params["fc_weight"] + model.params["fc_bias"]
    return logits, (pooled, pre_act, hidden)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    return float(np.mean(logz - shifted[np.arange(len(labels)), labels]))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(model: Model, data: np.ndarray, labels: np.ndarray) -> float:
    """Populates model.grads with the exact loss gradient; returns the loss."""
    cfg = model.config
    logits, (pooled, pre_act, hidden) = forward_logits(model, data)
    loss = cross_entropy(logits, labels)
    batch = data.shape[0]
    dlogits = _softmax(logits)
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch

    grads = model.grads
    grads["fc_weight"][...] = hidden.T @ dlogits
    grads["fc_bias"][...] = dlogits.sum(axis=0)
    dhidden = dlogits @ model.params["fc_weight"].T
    dpre = dhidden * (pre_act > 0.0)
    grads["feature_bias"][...] = dpre.sum(axis=0)
    dpooled = dpre.reshape(batch, cfg.n_streams, cfg.n_channels)

    if cfg.kind == "sse":
        w = model.params["radial"]
        grads["radial"][...] = 2.0 * np.einsum("bqn,bnjk,qnk->qnj",
                                               dpooled, data.real, w)
    elif cfg.kind == "ssb":
        w = model.params["radial"]
        g = grads["radial"]
        g[...] = 0.0
        for t_idx, t in enumerate(triples := cfg.triples()):
            u = dpooled[:, :, t_idx]
            T = data[:, t_idx]
            w1, w2, w3 = w[:, t.n], w[:, t.n_prime], w[:, t.ell]
            d1 = np.einsum("bq,bijk,qj,qk->qi", u, T, w2, w3)
            d2 = np.einsum("bq,bijk,qi,qk->qj", u, T, w1, w3)
            d3 = np.einsum("bq,bijk,qi,qj->qk", u, T, w1, w2)
            take = (lambda z: z.real) if t.parity_even else (lambda z: z.imag)
            g[:, t.n] += take(d1)
            g[:, t.n_prime] += take(d2)
            g[:, t.ell] += take(d3)
    else:
        grads["kernels"][...] = np.einsum("bq,bxyz->qxyz", dpooled[:, :, 0], data)
    return loss


def predict(model: Model, data: np.ndarray) -> np.ndarray:
    logits, _ = forward_logits(model, data)
    return np.argmax(logits, axis=1)


def evaluate(model: Model, bundle: FeatureBundle) -> float:
    """Argmax accuracy on a feature bundle."""
    return float(np.mean(predict(model, bundle.data) == bundle.labels))


# ---------------------------------------------------------------------------
# optimizer and training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.99
    beta2: float = 0.9999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 500

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("invalid training configuration")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in (0, 1)")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.99,
              beta2: float = 0.9999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    t = state.t
    for key, p in params.items():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {key!r} "
                                f"at step {t}")
        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        m_hat = state.m[key] / (1.0 - beta1 ** t)
        v_hat = state.v[key] / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train(model: Model, train_bundle: FeatureBundle,
          test_bundle: FeatureBundle | None, tcfg: TrainConfig) -> list[dict]:
    """Minibatch training; returns metric rows at the eval cadence.

    Each row carries iteration, loss, train_accuracy and test_accuracy
    (NaN when no test split is given). Deterministic for a given seed.
    """
    rng = np.random.default_rng(tcfg.seed)
    state = AdamState.for_params(model.params)
    rows = []
    for it in range(1, tcfg.iterations + 1):
        idx = rng.integers(0, len(train_bundle), size=tcfg.batch_size)
        loss = loss_and_grads(model, train_bundle.data[idx],
                              train_bundle.labels[idx])
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at iteration {it}")
        adam_step(model.params, model.grads, state, tcfg.learning_rate,
                  tcfg.beta1, tcfg.beta2, tcfg.eps)
        if it % tcfg.eval_every == 0 or it == tcfg.iterations:
            rows.append({
                "iteration": it,
                "loss": loss,
                "train_accuracy": evaluate(model, train_bundle),
                "test_accuracy": (evaluate(model, test_bundle)
                                  if test_bundle is not None else float("nan")),
            })
    return rows


def learning_curve(config: ModelConfig, train_bundle: FeatureBundle,
                   test_bundle: FeatureBundle, sizes, seeds,
                   tcfg: TrainConfig) -> list[dict]:
    """Accuracy as a function of the training-set size.

    For each size, draws that many training samples (deterministically per
    seed), trains a fresh model and evaluates on the common test bundle.
    Returns one row per (size, seed).
    """
    rows = []
    for size in sizes:
        if size > len(train_bundle):
            raise ValueError(f"requested {size} training samples, have "
                             f"{len(train_bundle)}")
        for seed in seeds:
            rng = np.random.default_rng(seed)
            idx = rng.choice(len(train_bundle), size=size, replace=False)
            model = build_model(config, rng, seed=seed)
            run_cfg = replace(tcfg, seed=seed)
            train(model, train_bundle.subset(idx), test_bundle, run_cfg)
            rows.append({"size": int(size), "seed": int(seed),
                         "accuracy": evaluate(model, test_bundle)})
    return rows


def confidence_interval(values) -> tuple[float, float]:
    """(mean, half-width) of the 95% Student-t interval."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least two values for a confidence interval")
    mean = float(values.mean())
    stderr = float(values.std(ddof=1)) / np.sqrt(values.size)
    return mean, float(stats.t.ppf(0.975, values.size - 1) * stderr)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

FORMAT_VERSION = 1


def save_model(model: Model, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": {
            "kind": model.config.kind,
            "kernel_size": model.config.kernel_size,
            "n_streams": model.config.n_streams,
            "max_degree": model.config.max_degree,
            "stride": model.config.stride,
            "padding": model.config.padding,
            "n_classes": model.config.n_classes,
            "prune_zero": model.config.prune_zero,
        },
        "seed": model.seed,
        "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                    for k, v in model.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
    config = ModelConfig(**doc["config"])
    params = {k: np.array(v["data"], dtype=float).reshape(v["shape"])
              for k, v in doc["weights"].items()}
    model = Model(config, params, seed=doc.get("seed"))
    model.zero_grads()
    return model
