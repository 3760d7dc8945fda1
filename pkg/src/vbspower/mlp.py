"""Black-box power model: a small fully connected ReLU network.

Inputs (airtime, SNR, MCS) are z-scored with training-set statistics, passed
through ReLU hidden layers of 24 and 4 units and a ReLU output unit. Training
minimizes mean squared error plus an L1 penalty on layer activations with
Adam, in float64 throughout so runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Dataset, Sample, VbsPowerError

LAYER_DIMS = (3, 24, 4, 1)
# small positive start keeps ReLU units active through the first updates
HIDDEN_BIAS_INIT = 0.1


class TrainingError(VbsPowerError):
    """Training could not proceed or diverged."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 220
    l1_activity_coeff: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle_each_epoch: bool = True
    layer_dims: tuple[int, ...] = LAYER_DIMS

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l1_activity_coeff < 0:
            raise ValueError("l1_activity_coeff must be >= 0")
        dims = self.layer_dims
        if len(dims) < 2 or dims[0] != 3 or dims[-1] != 1:
            raise ValueError(f"layer_dims must start at 3 inputs and end at 1 output, got {dims}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_dims"] = list(self.layer_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if "layer_dims" in d:
            d["layer_dims"] = tuple(d["layer_dims"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    train_config: TrainConfig | None = None
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        ws = tuple(_frozen(w) for w in self.weights)
        bs = tuple(_frozen(b) for b in self.biases)
        if len(ws) != len(dims) - 1 or len(bs) != len(ws):
            raise ValueError("one weight matrix and bias vector per layer required")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (dims[k], dims[k + 1]) or b.shape != (dims[k + 1],):
                raise ValueError(f"layer {k} has shapes {w.shape}/{b.shape}, expected ({dims[k]}, {dims[k + 1]})")
        mean, std = _frozen(self.norm_mean), _frozen(self.norm_std)
        if mean.shape != (3,) or std.shape != (3,):
            raise ValueError("norm_stats must hold 3 (mean, std) pairs")
        if not np.all(std > 0):
            raise ValueError("norm_std entries must be > 0")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "norm_mean", mean)
        object.__setattr__(self, "norm_std", std)

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
            and np.array_equal(self.norm_mean, other.norm_mean)
            and np.array_equal(self.norm_std, other.norm_std)
            and self.train_config == other.train_config
            and self.seed == other.seed
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params) -> MlpModel:
        return MlpModel(
            self.layer_dims,
            tuple(params[0::2]),
            tuple(params[1::2]),
            self.norm_mean,
            self.norm_std,
            self.train_config,
            self.seed,
        )

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "norm_mean": self.norm_mean.tolist(),
            "norm_std": self.norm_std.tolist(),
            "train_config": None if self.train_config is None else self.train_config.to_dict(),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> MlpModel:
        expected = {"layer_dims", "weights", "biases", "norm_mean", "norm_std", "train_config", "seed"}
        if set(d) != expected:
            raise ValueError(f"unexpected keys {sorted(d)}")
        dims = tuple(d["layer_dims"])
        return cls(
            dims,
            tuple(np.array(w, dtype=np.float64).reshape(dims[k], dims[k + 1]) for k, w in enumerate(d["weights"])),
            tuple(np.array(b, dtype=np.float64) for b in d["biases"]),
            np.array(d["norm_mean"], dtype=np.float64),
            np.array(d["norm_std"], dtype=np.float64),
            None if d["train_config"] is None else TrainConfig.from_dict(d["train_config"]),
            int(d["seed"]),
        )


@dataclass(frozen=True)
class TrainingTrace:
    epoch_loss: tuple[float, ...]
    n_steps: int


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_excluded: int
    details: dict = field(default_factory=dict, compare=False)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# Forward / backward


def _forward(params, z):
    """Returns the list of pre-activations and activations, input first."""
    pre, acts = [], [z]
    h = z
    for k in range(0, len(params), 2):
        zk = h @ params[k] + params[k + 1]
        h = np.maximum(zk, 0.0)
        pre.append(zk)
        acts.append(h)
    return pre, acts


def _loss(params, z, y, l1):
    _, acts = _forward(params, z)
    out = acts[-1][:, 0]
    mse = float(np.mean((out - y) ** 2))
    reg = sum(float(np.mean(np.abs(h))) for h in acts[1:])
    return mse + l1 * reg


def _loss_and_grads(params, z, y, l1):
    pre, acts = _forward(params, z)
    n = z.shape[0]
    out = acts[-1]
    err = out[:, 0] - y
    loss = float(err @ err) / n
    if l1:
        loss += l1 * sum(float(np.mean(np.abs(h))) for h in acts[1:])
    grads = [None] * len(params)
    dh = (2.0 / n) * err[:, None]
    for k in range(len(pre) - 1, -1, -1):
        h = acts[k + 1]
        if l1:
            dh = dh + (l1 / h.size) * np.sign(h)
        dz = dh * (pre[k] > 0)
        grads[2 * k] = acts[k].T @ dz
        grads[2 * k + 1] = dz.sum(axis=0)
        if k:
            dh = dz @ params[2 * k].T
    return loss, grads


def normalize(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return (x - model.norm_mean) / model.norm_std


def predict_features(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Predictions for an (n, 3) array of airtime, SNR, MCS rows."""
    _, acts = _forward(model.params(), normalize(model, np.asarray(x, dtype=np.float64)))
    return acts[-1][:, 0]


def predict(model: MlpModel, a, c, m):
    """Predicted power in watts; broadcasts over array inputs."""
    a, c, m = np.broadcast_arrays(
        np.asarray(a, dtype=np.float64), np.asarray(c, dtype=np.float64), np.asarray(m, dtype=np.float64)
    )
    out = predict_features(model, np.column_stack([a.ravel(), c.ravel(), m.ravel()]))
    if a.ndim == 0:
        return float(out[0])
    return out.reshape(a.shape)


# --------------------------------------------------------------------------
# Construction and training


def norm_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def init_model(
    mean,
    std,
    seed: int = 0,
    layer_dims=LAYER_DIMS,
    output_bias: float = 0.0,
    rng: np.random.Generator | None = None,
    train_config: TrainConfig | None = None,
) -> MlpModel:
    """He-uniform weights, hidden biases ``HIDDEN_BIAS_INIT``, output bias ``output_bias``."""
    rng = np.random.default_rng(seed) if rng is None else rng
    dims = tuple(layer_dims)
    ws, bs = [], []
    for k in range(len(dims) - 1):
        limit = math.sqrt(6.0 / dims[k])
        ws.append(rng.uniform(-limit, limit, size=(dims[k], dims[k + 1])))
        bs.append(np.full(dims[k + 1], HIDDEN_BIAS_INIT))
    bs[-1] = np.full(dims[-1], float(output_bias))
    return MlpModel(dims, tuple(ws), tuple(bs), mean, std, train_config, seed)


def zero_model(mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0), layer_dims=LAYER_DIMS) -> MlpModel:
    dims = tuple(layer_dims)
    ws = tuple(np.zeros((dims[k], dims[k + 1])) for k in range(len(dims) - 1))
    bs = tuple(np.zeros(dims[k + 1]) for k in range(len(dims) - 1))
    return MlpModel(dims, ws, bs, np.asarray(mean, float), np.asarray(std, float))


def _run_adam(model: MlpModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    params = [p.copy() for p in model.params()]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps, lr, l1 = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate, cfg.l1_activity_coeff
    z = normalize(model, x)
    n = len(y)
    order = np.arange(n)
    step = 0
    trace = []
    for epoch in range(cfg.epochs):
        if cfg.shuffle_each_epoch:
            order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(params, z[idx], y[idx], l1)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, step {step + 1}")
            total += loss * len(idx)
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for p, g, mo, ve in zip(params, grads, m1, m2):
                mo *= b1
                mo += (1.0 - b1) * g
                ve *= b2
                ve += (1.0 - b2) * (g * g)
                p -= lr * (mo / c1) / (np.sqrt(ve / c2) + eps)
        trace.append(total / n)
    trained = model.with_params(params)
    return (
        MlpModel(trained.layer_dims, trained.weights, trained.biases, trained.norm_mean, trained.norm_std, cfg, cfg.seed),
        TrainingTrace(tuple(trace), step),
    )


def train(ds: Dataset, cfg: TrainConfig | None = None) -> tuple[MlpModel, TrainingTrace]:
    """Train from scratch; initialization and shuffling both draw from ``cfg.seed``.

    The output bias starts at the mean training power so the final ReLU is
    active from the first step.
    """
    cfg = cfg or TrainConfig()
    if len(ds) == 0:
        raise TrainingError("cannot train on an empty dataset")
    x = ds.features()
    y = np.asarray(ds.power_w, dtype=np.float64)
    mean, std = norm_stats(x)
    rng = np.random.default_rng(cfg.seed)
    model = init_model(mean, std, cfg.seed, cfg.layer_dims, output_bias=float(y.mean()), rng=rng, train_config=cfg)
    return _run_adam(model, x, y, cfg, rng)


def fine_tune(model: MlpModel, ds: Dataset, cfg: TrainConfig | None = None) -> tuple[MlpModel, TrainingTrace]:
    """Continue training from ``model``'s weights; normalization stats are kept."""
    cfg = cfg or TrainConfig()
    if tuple(model.layer_dims) != tuple(cfg.layer_dims):
        raise TrainingError(f"model layer_dims {model.layer_dims} do not match config {cfg.layer_dims}")
    if len(ds) == 0:
        raise TrainingError("cannot fine-tune on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    return _run_adam(model, ds.features(), np.asarray(ds.power_w, dtype=np.float64), cfg, rng)


def dataset_loss(model: MlpModel, ds: Dataset, l1: float = 0.0) -> float:
    return _loss(model.params(), normalize(model, ds.features()), np.asarray(ds.power_w), l1)


def mean_hidden_activation(model: MlpModel, ds: Dataset) -> float:
    _, acts = _forward(model.params(), normalize(model, ds.features()))
    return float(np.mean(np.concatenate([h.ravel() for h in acts[1:-1]])))


# --------------------------------------------------------------------------
# Gradient check


def gradient_check(
    model: MlpModel,
    batch: list[Sample] | Dataset,
    h: float = 1e-5,
    l1_coeff: float | None = None,
    floor: float = 1e-8,
) -> GradCheckResult:
    """Compare backprop gradients with central differences on every parameter.

    The loss includes the L1 activity term. A parameter is excluded when the
    +h or -h perturbation flips any ReLU on/off state in the batch, i.e. a kink
    lies within ``h`` of the evaluation point. Relative error is
    ``|g_a - g_n| / max(|g_a|, |g_n|, floor)``.
    """
    samples = list(batch)
    if not samples:
        raise ValueError("gradient check needs a nonempty batch")
    if l1_coeff is None:
        l1_coeff = model.train_config.l1_activity_coeff if model.train_config else TrainConfig().l1_activity_coeff
    x = np.array([[s.airtime, s.snr_db, s.mcs] for s in samples], dtype=np.float64)
    y = np.array([s.power_w for s in samples], dtype=np.float64)
    z = normalize(model, x)
    params = [p.copy() for p in model.params()]
    _, grads = _loss_and_grads(params, z, y, l1_coeff)
    base_masks = [p > 0 for p in _forward(params, z)[0]]

    worst, checked, excluded = 0.0, 0, 0
    for pi, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            pre_plus, _ = _forward(params, z)
            f_plus = _loss(params, z, y, l1_coeff)
            p[idx] = orig - h
            pre_minus, _ = _forward(params, z)
            f_minus = _loss(params, z, y, l1_coeff)
            p[idx] = orig
            kink = any(
                not (np.array_equal(bm, zp > 0) and np.array_equal(bm, zm > 0))
                for bm, zp, zm in zip(base_masks, pre_plus, pre_minus)
            )
            if kink:
                excluded += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(grads[pi][idx])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, rel)
            checked += 1
    return GradCheckResult(worst, checked, excluded)
