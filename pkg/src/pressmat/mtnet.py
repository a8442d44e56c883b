"""Deep multitask network: shared tanh trunk, parallel identity and BMI heads.

The trunk is five dense layers (64, 128, 256, 256, 256) with tanh; the
identity head is softmax over the training subjects, the BMI head a single
affine unit. Training minimizes the mean of per-sample cross-entropy plus
half-squared BMI error, with an L2 penalty on weight matrices (biases
excluded), by full-batch L-BFGS (default) or Adam.

Inputs are z-scored per feature with statistics fit on the training data and
stored in the model; an extra multinomial logistic head over the fifth-layer
activations converts the regression model into a 5-way BMI classifier.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import lbfgs

HIDDEN_SIZES = (64, 128, 256, 256, 256)
LOG_EPS = 1e-12

OPTIMIZERS = ("lbfgs", "adaptive")


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 14500
    weight_decay: float = 1e-4
    optimizer: str = "lbfgs"
    lbfgs_memory: int = 10
    grad_tol: float = 1e-6
    loss_tol: float = 1e-10
    learning_rate: float = 0.01  # adaptive optimizer only
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.max_iterations < 1 or self.lbfgs_memory < 1:
            raise ValueError("iteration cap and memory must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not (self.grad_tol > 0 and self.loss_tol > 0):
            raise ValueError("convergence tolerances must be positive")


@dataclass(frozen=True)
class MultitaskOutput:
    identity_probs: np.ndarray  # (n, M), rows on the simplex
    bmi_estimate: np.ndarray    # (n,)


@dataclass
class BmiClassHead:
    """Multinomial logistic head over fifth-layer activations."""

    weight: np.ndarray  # (256, n_classes)
    bias: np.ndarray    # (n_classes,)


@dataclass
class MultitaskModel:
    weights: list[np.ndarray]      # trunk weights, then identity head, then BMI head
    biases: list[np.ndarray]
    subject_ids: tuple[str, ...]   # identity class order
    norm_mean: np.ndarray          # (F,) statistics of the training fold
    norm_std: np.ndarray
    feature_mask: tuple[bool, ...]
    config: TrainConfig
    class_head: BmiClassHead | None = None
    grid_meta: dict | None = None
    train_result: lbfgs.MinimizeResult | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)


def _layer_dims(n_features: int, n_subjects: int) -> list[tuple[int, int]]:
    dims = []
    prev = n_features
    for h in HIDDEN_SIZES:
        dims.append((prev, h))
        prev = h
    dims.append((prev, n_subjects))  # identity head
    dims.append((prev, 1))           # BMI head
    return dims


def _init_params(dims, rng: np.random.Generator):
    weights, biases = [], []
    for fan_in, fan_out in dims:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _pack(weights, biases) -> np.ndarray:
    return np.concatenate([w.ravel() for w in weights] + [b.ravel() for b in biases])


def _unpack(theta: np.ndarray, dims):
    """Views into theta shaped as (weights, biases); no copies."""
    weights, biases = [], []
    off = 0
    for fan_in, fan_out in dims:
        weights.append(theta[off:off + fan_in * fan_out].reshape(fan_in, fan_out))
        off += fan_in * fan_out
    for _, fan_out in dims:
        biases.append(theta[off:off + fan_out])
        off += fan_out
    return weights, biases


def normalize(model_or_stats, x: np.ndarray) -> np.ndarray:
    mean, std = _norm_stats(model_or_stats)
    return (np.asarray(x, dtype=np.float64) - mean) / std


def denormalize(model_or_stats, xn: np.ndarray) -> np.ndarray:
    mean, std = _norm_stats(model_or_stats)
    return np.asarray(xn, dtype=np.float64) * std + mean


def _norm_stats(model_or_stats):
    if isinstance(model_or_stats, MultitaskModel):
        return model_or_stats.norm_mean, model_or_stats.norm_std
    return model_or_stats


def fit_normalization(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std on training data; constant features get std 1."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def _softmax_log(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=1, keepdims=True))


def _forward_hidden(weights, biases, xn: np.ndarray) -> list[np.ndarray]:
    """Activations per trunk layer; index 0 is the (normalized) input."""
    hs = [xn]
    h = xn
    for w, b in zip(weights[:len(HIDDEN_SIZES)], biases[:len(HIDDEN_SIZES)]):
        z = h @ w
        z += b
        np.tanh(z, out=z)
        h = z
        hs.append(h)
    return hs


def forward(model: MultitaskModel, features: np.ndarray) -> MultitaskOutput:
    """Run the network on raw (unnormalized) active feature rows."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.n_features:
        raise ValueError(
            f"model expects {model.n_features} features, got {x.shape[1]}"
        )
    xn = normalize(model, x)
    h = _forward_hidden(model.weights, model.biases, xn)[-1]
    logits = h @ model.weights[-2] + model.biases[-2]
    logp = _softmax_log(logits)
    bmi = (h @ model.weights[-1] + model.biases[-1]).ravel()
    return MultitaskOutput(identity_probs=np.exp(logp), bmi_estimate=bmi)


def hidden_activations(model: MultitaskModel, features: np.ndarray) -> np.ndarray:
    """Fifth-hidden-layer activations (the representation the class head uses)."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {x.shape[1]}")
    return _forward_hidden(model.weights, model.biases, normalize(model, x))[-1]


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def loss_subject(probs: np.ndarray, true_identity: int) -> float:
    """Cross-entropy collapsed on a one-hot target: -log p[target]."""
    p = float(probs[true_identity])
    return -math.log(max(p, LOG_EPS))


def loss_bmi(estimate: float, true_bmi: float) -> float:
    """Half squared error."""
    d = true_bmi - estimate
    return 0.5 * d * d


def _decay_term(weights, weight_decay: float) -> float:
    return weight_decay * sum(float((w * w).sum()) for w in weights)


def _batch_loss_grad(theta, dims, xn, y_idx, bmi, weight_decay):
    """Mean (cross-entropy + half squared error) + L2 on weights, with gradient."""
    weights, biases = _unpack(theta, dims)
    n = xn.shape[0]
    hs = _forward_hidden(weights, biases, xn)
    h = hs[-1]
    logits = h @ weights[-2] + biases[-2]
    logp = np.maximum(_softmax_log(logits), math.log(LOG_EPS))
    bhat = (h @ weights[-1] + biases[-1]).ravel()

    rows = np.arange(n)
    ce = -logp[rows, y_idx].mean()
    err = bhat - bmi
    mse = 0.5 * float(err @ err) / n
    loss = ce + mse + _decay_term(weights, weight_decay)

    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)

    dlogits = np.exp(logp)
    dlogits[rows, y_idx] -= 1.0
    dlogits /= n
    dbhat = (err / n)[:, None]

    grad_w[-2] = h.T @ dlogits + 2.0 * weight_decay * weights[-2]
    grad_b[-2] = dlogits.sum(axis=0)
    grad_w[-1] = h.T @ dbhat + 2.0 * weight_decay * weights[-1]
    grad_b[-1] = dbhat.sum(axis=0)

    dh = dlogits @ weights[-2].T + dbhat @ weights[-1].T
    for k in range(len(HIDDEN_SIZES) - 1, -1, -1):
        h_k = hs[k + 1]
        # dz = dh * (1 - h^2), built in place (h_k is not needed afterwards)
        np.multiply(h_k, h_k, out=h_k)
        np.subtract(1.0, h_k, out=h_k)
        dh *= h_k
        dz = dh
        grad_w[k] = hs[k].T @ dz + 2.0 * weight_decay * weights[k]
        grad_b[k] = dz.sum(axis=0)
        dh = dz @ weights[k].T

    return loss, _pack(grad_w, grad_b)


def loss_total(model: MultitaskModel, features: np.ndarray, identities, bmi) -> float:
    """Batch objective at the model's current parameters (raw features in)."""
    xn = normalize(model, np.atleast_2d(features))
    y_idx = _identity_indices(model.subject_ids, identities)
    theta = _pack(model.weights, model.biases)
    dims = _layer_dims(model.n_features, model.n_subjects)
    loss, _ = _batch_loss_grad(theta, dims, xn, y_idx, np.asarray(bmi, dtype=float),
                               model.config.weight_decay)
    return loss


def loss_gradient(model: MultitaskModel, features: np.ndarray, identities, bmi) -> np.ndarray:
    """Analytic gradient of the batch objective w.r.t. the flat parameters."""
    xn = normalize(model, np.atleast_2d(features))
    y_idx = _identity_indices(model.subject_ids, identities)
    theta = _pack(model.weights, model.biases)
    dims = _layer_dims(model.n_features, model.n_subjects)
    _, grad = _batch_loss_grad(theta, dims, xn, y_idx, np.asarray(bmi, dtype=float),
                               model.config.weight_decay)
    return grad


def _identity_indices(subject_ids: tuple[str, ...], identities) -> np.ndarray:
    index = {sid: i for i, sid in enumerate(subject_ids)}
    try:
        return np.array([index[s] for s in np.atleast_1d(identities)], dtype=int)
    except KeyError as e:
        raise ValueError(f"unknown subject {e.args[0]!r}") from e


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train(
    features: np.ndarray,
    subjects,
    bmi: np.ndarray,
    config: TrainConfig = TrainConfig(),
    feature_mask: tuple[bool, ...] | None = None,
    grid_meta: dict | None = None,
) -> MultitaskModel:
    """Fit the multitask network on raw active feature rows.

    ``subjects`` are string labels; the sorted unique set fixes the identity
    class order. Training is bit-deterministic given (data, config, seed).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("features must be a non-empty 2-D array")
    subjects = np.asarray(subjects)
    bmi = np.asarray(bmi, dtype=np.float64)
    subject_ids = tuple(sorted(set(subjects.tolist())))
    if len(subject_ids) < 2:
        raise ValueError("need at least 2 subjects to train the identity head")

    mean, std = fit_normalization(x)
    xn = (x - mean) / std
    y_idx = _identity_indices(subject_ids, subjects)

    dims = _layer_dims(x.shape[1], len(subject_ids))
    rng = np.random.default_rng(config.seed)
    w0, b0 = _init_params(dims, rng)
    theta0 = _pack(w0, b0)

    def fun(theta):
        return _batch_loss_grad(theta, dims, xn, y_idx, bmi, config.weight_decay)

    if config.optimizer == "lbfgs":
        result = lbfgs.minimize_lbfgs(
            fun, theta0, max_iterations=config.max_iterations,
            memory=config.lbfgs_memory, grad_tol=config.grad_tol,
            loss_tol=config.loss_tol,
        )
    else:
        result = lbfgs.minimize_adam(
            fun, theta0, max_iterations=config.max_iterations,
            learning_rate=config.learning_rate, grad_tol=config.grad_tol,
            loss_tol=config.loss_tol,
        )

    weights, biases = _unpack(result.x.copy(), dims)
    return MultitaskModel(
        weights=[w.copy() for w in weights],
        biases=[b.copy() for b in biases],
        subject_ids=subject_ids,
        norm_mean=mean,
        norm_std=std,
        feature_mask=tuple(feature_mask) if feature_mask is not None else None,
        config=config,
        grid_meta=grid_meta,
        train_result=result,
    )


def fit_bmi_class_head(
    model: MultitaskModel,
    features: np.ndarray,
    class_labels: np.ndarray,
    n_classes: int = 5,
    max_iterations: int = 2000,
) -> BmiClassHead:
    """Fit the post-hoc logistic head on fifth-layer activations.

    Uses the same weight-decay coefficient as the trunk and runs L-BFGS until
    the gradient max-norm is below the model's tolerance (convex problem).
    """
    labels = np.asarray(class_labels, dtype=int)
    present = set(labels.tolist())
    for c in range(n_classes):
        if c not in present:
            raise ValueError(f"BMI class {c} absent from training data")

    h = hidden_activations(model, features)
    n, d = h.shape
    wd = model.config.weight_decay
    rows = np.arange(n)

    def fun(theta):
        w = theta[: d * n_classes].reshape(d, n_classes)
        b = theta[d * n_classes:]
        logp = np.maximum(_softmax_log(h @ w + b), math.log(LOG_EPS))
        loss = -logp[rows, labels].mean() + wd * float((w * w).sum())
        dlogits = np.exp(logp)
        dlogits[rows, labels] -= 1.0
        dlogits /= n
        gw = h.T @ dlogits + 2.0 * wd * w
        gb = dlogits.sum(axis=0)
        return loss, np.concatenate([gw.ravel(), gb])

    theta0 = np.zeros(d * n_classes + n_classes)
    result = lbfgs.minimize_lbfgs(
        fun, theta0, max_iterations=max_iterations,
        memory=model.config.lbfgs_memory,
        grad_tol=model.config.grad_tol, loss_tol=1e-16,
    )
    head = BmiClassHead(
        weight=result.x[: d * n_classes].reshape(d, n_classes).copy(),
        bias=result.x[d * n_classes:].copy(),
    )
    model.class_head = head
    return head


def predict_bmi_class(model: MultitaskModel, features: np.ndarray) -> np.ndarray:
    if model.class_head is None:
        raise ValueError("model has no BMI class head; call fit_bmi_class_head first")
    h = hidden_activations(model, features)
    logits = h @ model.class_head.weight + model.class_head.bias
    return logits.argmax(axis=1)


def predict_identity(model: MultitaskModel, features: np.ndarray) -> np.ndarray:
    """Predicted subject ids (argmax of the identity head)."""
    out = forward(model, features)
    idx = out.identity_probs.argmax(axis=1)
    ids = np.array(model.subject_ids)
    return ids[idx]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

MODEL_FORMAT = "pressmat-multitask-model"
MODEL_VERSION = 1


def save_model(model: MultitaskModel, path: str) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "hidden_sizes": list(HIDDEN_SIZES),
        "subject_ids": list(model.subject_ids),
        "feature_mask": list(model.feature_mask) if model.feature_mask else None,
        "norm_mean": model.norm_mean.tolist(),
        "norm_std": model.norm_std.tolist(),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "config": {
            "max_iterations": model.config.max_iterations,
            "weight_decay": model.config.weight_decay,
            "optimizer": model.config.optimizer,
            "lbfgs_memory": model.config.lbfgs_memory,
            "grad_tol": model.config.grad_tol,
            "loss_tol": model.config.loss_tol,
            "learning_rate": model.config.learning_rate,
            "seed": model.config.seed,
        },
        "class_head": None
        if model.class_head is None
        else {
            "weight": model.class_head.weight.tolist(),
            "bias": model.class_head.bias.tolist(),
        },
        "grid_meta": model.grid_meta,
    }
    parent = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".model-", dir=parent, text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except Exception:
        os.unlink(tmp)
        raise


def load_model(path: str, expect_feature_mask: tuple[bool, ...] | None = None) -> MultitaskModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    stored_mask = doc.get("feature_mask")
    if expect_feature_mask is not None:
        if stored_mask is None or tuple(stored_mask) != tuple(expect_feature_mask):
            raise ValueError(
                f"{path}: model feature mask {stored_mask} does not match "
                f"expected {list(expect_feature_mask)}"
            )
    cfg = TrainConfig(**doc["config"])
    head = None
    if doc.get("class_head"):
        head = BmiClassHead(
            weight=np.asarray(doc["class_head"]["weight"], dtype=np.float64),
            bias=np.asarray(doc["class_head"]["bias"], dtype=np.float64),
        )
    return MultitaskModel(
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        subject_ids=tuple(doc["subject_ids"]),
        norm_mean=np.asarray(doc["norm_mean"], dtype=np.float64),
        norm_std=np.asarray(doc["norm_std"], dtype=np.float64),
        feature_mask=tuple(stored_mask) if stored_mask is not None else None,
        config=cfg,
        class_head=head,
        grid_meta=doc.get("grid_meta"),
    )
