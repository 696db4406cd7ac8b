"""Quality regressor: 3-layer MLP (D->256->128->1) with hand-derived gradients.

Layer order is Linear -> BatchNorm -> GELU -> Dropout(0.1) for the two
hidden layers, then a final affine to a scalar score. Training is plain
minibatch SGD with momentum, L2 weight decay, cosine-annealed learning
rate and stochastic weight averaging over the last quarter of epochs.
All accumulation is float64; checkpoints store float32.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import erf

from .errors import ConfigError, FormatError

HIDDEN1 = 256
HIDDEN2 = 128
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# serialization order of the parameter blob
_PARAM_FIELDS = (
    "feat_mean", "feat_std",
    "w1", "b1", "g1", "beta1", "rm1", "rv1",
    "w2", "b2", "g2", "beta2", "rm2", "rv2",
    "w3", "b3",
)
# fields updated by SGD (running stats and normalization are not trained)
_TRAINED_FIELDS = ("w1", "b1", "g1", "beta1", "w2", "b2", "g2", "beta2", "w3", "b3")


@dataclass
class TrainConfig:
    """Fine-tune preset by default: 200 epochs, lr 1e-2, weight decay 5e-4."""

    epochs: int = 200
    lr0: float = 1e-2
    weight_decay: float = 5e-4
    momentum: float = 0.9
    batch_size: int = 256
    mae_w: float = 0.6
    rank_w: float = 1.0
    rank_margin: float = 0.0
    swa_start_frac: float = 0.75
    seed: int = 0
    split: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must be in (0, 1), got {self.split}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if min(self.mae_w, self.rank_w, self.rank_margin) < 0:
            raise ConfigError("loss weights and margin must be >= 0")

    def hash(self) -> str:
        doc = json.dumps(self.__dict__, sort_keys=True, default=float).encode()
        return hashlib.sha256(doc).hexdigest()[:12]


class MlpModel:
    """Parameters plus input-normalization statistics of the quality regressor."""

    def __init__(self, input_dim: int, dropout_p: float = 0.1, seed: int = 0):
        self.input_dim = input_dim
        self.dropout_p = dropout_p
        self.train_mode = False
        rng = np.random.default_rng(seed)

        def he_uniform(fan_in, shape):
            limit = math.sqrt(6.0 / fan_in)
            return rng.uniform(-limit, limit, size=shape)

        self.feat_mean = np.zeros(input_dim)
        self.feat_std = np.ones(input_dim)
        self.w1 = he_uniform(input_dim, (input_dim, HIDDEN1))
        self.b1 = np.zeros(HIDDEN1)
        self.g1 = np.ones(HIDDEN1)
        self.beta1 = np.zeros(HIDDEN1)
        self.rm1 = np.zeros(HIDDEN1)
        self.rv1 = np.ones(HIDDEN1)
        self.w2 = he_uniform(HIDDEN1, (HIDDEN1, HIDDEN2))
        self.b2 = np.zeros(HIDDEN2)
        self.g2 = np.ones(HIDDEN2)
        self.beta2 = np.zeros(HIDDEN2)
        self.rm2 = np.zeros(HIDDEN2)
        self.rv2 = np.ones(HIDDEN2)
        self.w3 = he_uniform(HIDDEN2, (HIDDEN2,))
        self.b3 = np.float64(0.0)

    def set_train(self):
        self.train_mode = True
        return self

    def set_eval(self):
        self.train_mode = False
        return self

    def params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_FIELDS}

    def trained_params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _TRAINED_FIELDS}

    def copy(self) -> "MlpModel":
        clone = MlpModel.__new__(MlpModel)
        clone.input_dim = self.input_dim
        clone.dropout_p = self.dropout_p
        clone.train_mode = self.train_mode
        for name in _PARAM_FIELDS:
            value = getattr(self, name)
            setattr(clone, name, value.copy() if isinstance(value, np.ndarray) else value)
        return clone


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def forward(model: MlpModel, batch: np.ndarray, rng: Optional[np.random.Generator] = None,
            update_running: bool = True):
    """Run the MLP on a (B, D) batch; returns (scores, cache) in train mode.

    Train mode needs B >= 2 for batch statistics; eval mode is a pure
    function of the running statistics and never mutates the model.
    """
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise FormatError(f"feature dim {x.shape[1]} != model input dim {model.input_dim}")
    if not np.all(np.isfinite(x)):
        raise FormatError("non-finite values in input batch")
    train = model.train_mode
    if train and x.shape[0] < 2:
        raise ConfigError("train-mode forward needs a batch of >= 2 (batch-norm statistics)")

    cache: Optional[dict] = {} if train else None
    x = (x - model.feat_mean) / model.feat_std

    def bn(a, gamma, beta, rm, rv, tag):
        if train:
            mu = a.mean(axis=0)
            var = a.var(axis=0)  # biased, matches the backward pass
            if update_running:
                b = a.shape[0]
                unbiased = var * b / (b - 1)
                rm *= 1.0 - BN_MOMENTUM
                rm += BN_MOMENTUM * mu
                rv *= 1.0 - BN_MOMENTUM
                rv += BN_MOMENTUM * unbiased
        else:
            mu, var = rm, rv
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (a - mu) * inv
        if train:
            cache[f"xhat{tag}"] = xhat
            cache[f"inv{tag}"] = inv
        return gamma * xhat + beta

    def dropout(h, tag):
        if not train or model.dropout_p <= 0.0:
            return h
        if rng is None:
            raise ConfigError("train-mode forward with dropout requires an RNG")
        keep = 1.0 - model.dropout_p
        mask = (rng.random(h.shape) < keep) / keep
        cache[f"mask{tag}"] = mask
        return h * mask

    a1 = x @ model.w1 + model.b1
    n1 = bn(a1, model.g1, model.beta1, model.rm1, model.rv1, 1)
    h1 = gelu(n1)
    d1 = dropout(h1, 1)
    a2 = d1 @ model.w2 + model.b2
    n2 = bn(a2, model.g2, model.beta2, model.rm2, model.rv2, 2)
    h2 = gelu(n2)
    d2 = dropout(h2, 2)
    scores = d2 @ model.w3 + model.b3

    if train:
        cache.update(x=x, n1=n1, d1=d1, n2=n2, d2=d2)
        return scores, cache
    return scores


def mae_loss(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute error."""
    pred, truth = np.asarray(pred, np.float64), np.asarray(truth, np.float64)
    return float(np.mean(np.abs(pred - truth)))


def _rank_terms(pred: np.ndarray, truth: np.ndarray, margin: float):
    delta = np.abs(truth[:, None] - truth[None, :])
    e = np.where(truth[:, None] >= truth[None, :], 1.0, -1.0)
    d = pred[:, None] - pred[None, :]
    hinge = np.maximum(0.0, delta - e * d)
    eligible = delta >= margin
    return hinge, e, eligible


def rank_loss(pred: np.ndarray, truth: np.ndarray, margin: float = 0.0) -> float:
    """Pairwise hinge over all N^2 ordered pairs (diagonal included, it is 0).

    Pairs whose ground-truth gap is below `margin` are disregarded.
    """
    pred, truth = np.asarray(pred, np.float64), np.asarray(truth, np.float64)
    hinge, _, eligible = _rank_terms(pred, truth, margin)
    n = len(pred)
    return float((hinge * eligible).sum() / (n * n))


def composite_loss(pred: np.ndarray, truth: np.ndarray, cfg: TrainConfig) -> float:
    return cfg.mae_w * mae_loss(pred, truth) + cfg.rank_w * rank_loss(pred, truth, cfg.rank_margin)


def loss_grad_wrt_pred(pred: np.ndarray, truth: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """d(composite loss)/d(pred); MAE subgradient at 0 and hinge kink both 0."""
    pred, truth = np.asarray(pred, np.float64), np.asarray(truth, np.float64)
    n = len(pred)
    g = cfg.mae_w * np.sign(pred - truth) / n
    hinge, e, eligible = _rank_terms(pred, truth, cfg.rank_margin)
    active = (hinge > 0.0) & eligible
    contrib = np.where(active, -e, 0.0)
    g += cfg.rank_w * (contrib.sum(axis=1) - contrib.sum(axis=0)) / (n * n)
    return g


def backward(model: MlpModel, cache: dict, dscores: np.ndarray) -> Dict[str, np.ndarray]:
    """Exact gradients for all trained parameters given d(loss)/d(scores)."""
    d2, d1, x = cache["d2"], cache["d1"], cache["x"]

    grads: Dict[str, np.ndarray] = {}
    grads["w3"] = d2.T @ dscores
    grads["b3"] = np.float64(dscores.sum())
    dd2 = np.outer(dscores, model.w3)

    def bn_backward(dout, gamma, tag):
        xhat, inv = cache[f"xhat{tag}"], cache[f"inv{tag}"]
        dgamma = (dout * xhat).sum(axis=0)
        dbeta = dout.sum(axis=0)
        dxhat = dout * gamma
        # includes the batch mean/variance terms
        da = inv * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
        return da, dgamma, dbeta

    dh2 = dd2 * cache["mask2"] if "mask2" in cache else dd2
    dn2 = dh2 * gelu_grad(cache["n2"])
    da2, grads["g2"], grads["beta2"] = bn_backward(dn2, model.g2, 2)
    grads["w2"] = d1.T @ da2
    grads["b2"] = da2.sum(axis=0)
    dd1 = da2 @ model.w2.T

    dh1 = dd1 * cache["mask1"] if "mask1" in cache else dd1
    dn1 = dh1 * gelu_grad(cache["n1"])
    da1, grads["g1"], grads["beta1"] = bn_backward(dn1, model.g1, 1)
    grads["w1"] = x.T @ da1
    grads["b1"] = da1.sum(axis=0)
    return grads


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    """Cosine annealing: lr0 * (1 + cos(pi * epoch / total)) / 2."""
    return lr0 * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0


@dataclass
class OptimState:
    momentum_buffers: Dict[str, np.ndarray]
    epoch: int = 0
    lr_t: float = 0.0
    swa_sums: Optional[Dict[str, np.ndarray]] = None
    swa_count: int = 0

    @classmethod
    def for_model(cls, model: MlpModel) -> "OptimState":
        return cls({k: np.zeros_like(np.asarray(v)) for k, v in model.trained_params().items()})


def sgd_step(model: MlpModel, grads: Dict[str, np.ndarray], state: OptimState,
             lr: float, momentum: float, weight_decay: float) -> None:
    for name in _TRAINED_FIELDS:
        param = np.asarray(getattr(model, name))
        g = grads[name] + weight_decay * param
        buf = state.momentum_buffers[name]
        buf *= momentum
        buf += g
        updated = param - lr * buf
        setattr(model, name, updated if param.ndim else np.float64(updated))


def swa_accumulate(state: OptimState, model: MlpModel) -> None:
    """Add the current trained parameters to the running SWA sum."""
    if state.swa_sums is None:
        state.swa_sums = {k: np.asarray(v).copy() for k, v in model.trained_params().items()}
    else:
        for k, v in model.trained_params().items():
            state.swa_sums[k] += np.asarray(v)
    state.swa_count += 1


def swa_parameters(state: OptimState) -> Dict[str, np.ndarray]:
    """Arithmetic mean of all ingested snapshots (sum / count, one division)."""
    if state.swa_count == 0:
        raise ConfigError("no SWA snapshots accumulated")
    return {k: v / state.swa_count for k, v in state.swa_sums.items()}


@dataclass
class TrainLog:
    epoch: List[int] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_rmse: List[float] = field(default_factory=list)
    val_srcc: List[float] = field(default_factory=list)
    train_indices: Optional[np.ndarray] = None
    val_indices: Optional[np.ndarray] = None
    best_val_rmse: float = math.inf
    swa_val_rmse: float = math.inf
    selected: str = "best"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,lr,train_loss,val_rmse,val_srcc\n")
            for row in zip(self.epoch, self.lr, self.train_loss, self.val_rmse, self.val_srcc):
                fh.write("%d,%.10g,%.10g,%.10g,%.10g\n" % row)


def _rmse(pred, truth) -> float:
    diff = np.asarray(pred, np.float64) - np.asarray(truth, np.float64)
    return float(np.sqrt(np.mean(diff * diff)))


def _safe_srcc(pred, truth) -> float:
    from .metrics import srcc
    try:
        return srcc(pred, truth)
    except FormatError:
        return float("nan")


def recompute_bn_stats(model: MlpModel, features: np.ndarray) -> None:
    """Set running stats from one full deterministic pass (dropout off)."""
    x = (np.asarray(features, np.float64) - model.feat_mean) / model.feat_std
    n = x.shape[0]
    corr = n / (n - 1) if n > 1 else 1.0
    a1 = x @ model.w1 + model.b1
    model.rm1 = a1.mean(axis=0)
    model.rv1 = a1.var(axis=0) * corr
    # normalize layer 1 exactly as eval will, so rm2/rv2 match eval's inputs
    n1 = model.g1 * (a1 - model.rm1) / np.sqrt(model.rv1 + BN_EPS) + model.beta1
    h1 = gelu(n1)
    a2 = h1 @ model.w2 + model.b2
    model.rm2 = a2.mean(axis=0)
    model.rv2 = a2.var(axis=0) * corr


def train(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
          split_indices: Optional[Tuple[np.ndarray, np.ndarray]] = None
          ) -> Tuple[MlpModel, TrainLog]:
    """Train the regressor; returns the better of best-RMSE checkpoint and SWA model.

    The 80/20 split, shuffling, init and dropout all derive from cfg.seed, so
    identical data and config give bit-identical parameters.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n, dim = features.shape
    if n < 4:
        raise ConfigError(f"need at least 4 labeled videos, got {n}")
    if labels.shape != (n,) or not np.all(np.isfinite(labels)):
        raise ConfigError("labels must be finite and match the feature count")

    rng = np.random.default_rng(cfg.seed)
    if split_indices is None:
        perm = rng.permutation(n)
        n_train = int(round(cfg.split * n))
        train_idx, val_idx = perm[:n_train], perm[n_train:]
    else:
        train_idx, val_idx = (np.asarray(i) for i in split_indices)
        rng.permutation(n)  # keep downstream stream identical either way
    if len(val_idx) < 2:
        raise ConfigError(f"validation split has {len(val_idx)} items, need >= 2")
    if len(train_idx) < 2:
        raise ConfigError(f"train split has {len(train_idx)} items, need >= 2")

    x_train, y_train = features[train_idx], labels[train_idx]
    x_val, y_val = features[val_idx], labels[val_idx]

    model = MlpModel(dim, seed=int(rng.integers(2**63)))
    model.feat_mean = x_train.mean(axis=0)
    model.feat_std = np.maximum(x_train.std(axis=0), 1e-8)

    state = OptimState.for_model(model)
    swa_start = math.ceil(cfg.swa_start_frac * cfg.epochs)
    log = TrainLog(train_indices=train_idx, val_indices=val_idx)
    best = model.copy()
    best_rmse = math.inf

    for epoch in range(cfg.epochs):
        # once SWA is active the rate is held at lr0 instead of the cosine value
        lr = cfg.lr0 if epoch >= swa_start else cosine_lr(cfg.lr0, epoch, cfg.epochs)
        state.epoch, state.lr_t = epoch, lr
        order = rng.permutation(len(train_idx))
        model.set_train()
        losses, counted = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            sel = order[lo : lo + cfg.batch_size]
            if len(sel) < 2:
                continue  # batch norm needs >= 2 rows
            xb, yb = x_train[sel], y_train[sel]
            pred, cache = forward(model, xb, rng=rng)
            loss = composite_loss(pred, yb, cfg)
            grads = backward(model, cache, loss_grad_wrt_pred(pred, yb, cfg))
            sgd_step(model, grads, state, lr, cfg.momentum, cfg.weight_decay)
            losses += loss * len(sel)
            counted += len(sel)
        model.set_eval()
        val_pred = forward(model, x_val)
        rmse = _rmse(val_pred, y_val)

        log.epoch.append(epoch)
        log.lr.append(lr)
        log.train_loss.append(losses / max(counted, 1))
        log.val_rmse.append(rmse)
        log.val_srcc.append(_safe_srcc(val_pred, y_val))

        if rmse < best_rmse:
            best_rmse = rmse
            best = model.copy()
        if epoch >= swa_start:
            swa_accumulate(state, model)

    log.best_val_rmse = best_rmse
    final = best
    if state.swa_count > 0:
        swa = model.copy()
        for k, avg in swa_parameters(state).items():
            setattr(swa, k, avg if avg.ndim else np.float64(avg))
        recompute_bn_stats(swa, x_train)
        swa.set_eval()
        log.swa_val_rmse = _rmse(forward(swa, x_val), y_val)
        if log.swa_val_rmse < best_rmse:
            final = swa
            log.selected = "swa"
    return final.set_eval(), log


def predict(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Eval-mode scores for a (B, D) matrix or a single D vector."""
    model.set_eval()
    out = forward(model, np.atleast_2d(features))
    return np.asarray(out, np.float64).reshape(-1)


# ---------------------------------------------------------------------------
# Checkpoint format: one JSON header line + float32 little-endian blob
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: MlpModel, cfg: Optional[TrainConfig] = None,
                    extra: Optional[dict] = None) -> None:
    header = {
        "format": "fragvqa-mlp",
        "version": 1,
        "dims": {"input": model.input_dim, "hidden1": HIDDEN1, "hidden2": HIDDEN2},
        "dropout_p": model.dropout_p,
        "config_hash": cfg.hash() if cfg else "",
        "seed": cfg.seed if cfg else 0,
    }
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in _PARAM_FIELDS:
            fh.write(np.asarray(getattr(model, name), dtype="<f4").tobytes())


def load_checkpoint(path) -> Tuple[MlpModel, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "fragvqa-mlp":
            raise FormatError(f"{path}: not a fragvqa MLP checkpoint")
        dim = int(header["dims"]["input"])
        model = MlpModel(dim, dropout_p=float(header.get("dropout_p", 0.1)))
        for name in _PARAM_FIELDS:
            ref = np.asarray(getattr(model, name))
            raw = fh.read(4 * ref.size)
            if len(raw) != 4 * ref.size:
                raise FormatError(f"{path}: truncated parameter blob at {name}")
            value = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(ref.shape)
            setattr(model, name, value if ref.ndim else np.float64(value))
    return model.set_eval(), header
