"""Training core: explicit feature encoding, a compact rectifier MLP head
over the 8 actions, CE / KL-soft-label / DPO objectives with hand-derived
gradients, AdamW, and the deterministic training loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .datagen import Sample
from .domain import NUM_ACTIONS, Action, AppType, Context, TimeOfDay, action_from_index
from .reward import soft_labels

FEATURE_DIM = 15  # one-hot time (4) | pub batt (1) | sub batt (1) | peer flag (1) | app histogram (8)


class TrainingDiverged(RuntimeError):
    pass


def encode(context: Context, window: int | None = None) -> np.ndarray:
    """15-dim feature vector; masked peer zeroes positions 5 and 6."""
    x = np.zeros(FEATURE_DIM)
    x[int(context.time)] = 1.0
    x[4] = context.publisher_battery / 100.0
    if context.subscriber_battery is not None:
        x[5] = context.subscriber_battery / 100.0
        x[6] = 1.0
    hist = np.zeros(NUM_ACTIONS)
    for app in context.app_history:
        hist[int(app)] += 1.0
    x[7:] = hist / len(context.app_history)
    return x


def encode_batch(contexts: list[Context]) -> np.ndarray:
    return np.stack([encode(c) for c in contexts])


@dataclass
class HeadModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "HeadModel":
        return HeadModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def validate(self) -> None:
        prev = FEATURE_DIM
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != prev or b.shape != (w.shape[0],):
                raise ValueError(f"layer shape chain broken at {w.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("non-finite parameters")
            prev = w.shape[0]
        if prev != NUM_ACTIONS:
            raise ValueError(f"output dimension {prev} != {NUM_ACTIONS}")


def init_head(layers: int, hidden: int = 64, seed: int = 0,
              in_dim: int = FEATURE_DIM, out_dim: int = NUM_ACTIONS) -> HeadModel:
    if layers not in (1, 2, 3):
        raise ValueError("layers must be 1, 2, or 3")
    rng = np.random.default_rng([seed, 1618])
    dims = [in_dim] + [hidden] * (layers - 1) + [out_dim]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / d_in), (d_out, d_in)))
        biases.append(np.zeros(d_out))
    return HeadModel(weights, biases)


def forward(model: HeadModel, x: np.ndarray) -> np.ndarray:
    """Affine-rectifier chain; final layer affine. Accepts (d,) or (N, d)."""
    h = np.asarray(x, dtype=float)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w.T + b
        if i < model.n_layers - 1:
            h = np.maximum(h, 0.0)
    return h


def _forward_cached(model: HeadModel, x: np.ndarray):
    acts = [np.atleast_2d(np.asarray(x, dtype=float))]
    pre = []
    h = acts[0]
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < model.n_layers - 1 else z
        acts.append(h)
    return h, acts, pre


def backward(model: HeadModel, acts, pre, dlogits: np.ndarray):
    """Parameter gradients for a batch given d(loss)/d(logits)."""
    grads_w = [None] * model.n_layers
    grads_b = [None] * model.n_layers
    d = np.atleast_2d(dlogits)
    for i in range(model.n_layers - 1, -1, -1):
        grads_w[i] = d.T @ acts[i]
        grads_b[i] = d.sum(axis=0)
        if i > 0:
            d = (d @ model.weights[i]) * (pre[i - 1] > 0)
    return grads_w, grads_b


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def loss_ce(logits: np.ndarray, label: int) -> float:
    """Negative log softmax probability of the hard label."""
    return float(-log_softmax(logits)[label])


def grad_ce(logits: np.ndarray, label: int) -> np.ndarray:
    g = softmax(logits)
    g[label] -= 1.0
    return g


def loss_kl(logits: np.ndarray, soft: np.ndarray) -> float:
    """KL(soft || softmax(logits)); zero-probability targets contribute 0."""
    soft = np.asarray(soft, dtype=float)
    logq = log_softmax(logits)
    mask = soft > 0
    return float(np.sum(soft[mask] * (np.log(soft[mask]) - logq[mask])))


def grad_kl(logits: np.ndarray, soft: np.ndarray) -> np.ndarray:
    return softmax(logits) - np.asarray(soft, dtype=float)


def _log_sigmoid(m: float) -> float:
    if m >= 0:
        return -np.log1p(np.exp(-m))
    return m - np.log1p(np.exp(m))


def loss_dpo(policy_logits_w, policy_logits_l, ref_logits_w, ref_logits_l,
             y_w: int, y_l: int, beta: float) -> float:
    """-log sigmoid(beta * [(logpi(y_w) - logref(y_w)) - (logpi(y_l) - logref(y_l))])."""
    if y_w == y_l:
        raise ValueError("degenerate pair: preferred == dispreferred")
    m = beta * (
        (log_softmax(policy_logits_w)[y_w] - log_softmax(ref_logits_w)[y_w])
        - (log_softmax(policy_logits_l)[y_l] - log_softmax(ref_logits_l)[y_l])
    )
    return float(-_log_sigmoid(m))


def grad_dpo(policy_logits_w, policy_logits_l, ref_logits_w, ref_logits_l,
             y_w: int, y_l: int, beta: float):
    """Gradients w.r.t. the two policy logits arrays (reference is frozen)."""
    m = beta * (
        (log_softmax(policy_logits_w)[y_w] - log_softmax(ref_logits_w)[y_w])
        - (log_softmax(policy_logits_l)[y_l] - log_softmax(ref_logits_l)[y_l])
    )
    coef = float(1.0 / (1.0 + np.exp(-m)) - 1.0)  # sigmoid(m) - 1
    e_w = np.zeros(NUM_ACTIONS)
    e_w[y_w] = 1.0
    e_l = np.zeros(NUM_ACTIONS)
    e_l[y_l] = 1.0
    d_w = coef * beta * (e_w - softmax(policy_logits_w))
    d_l = -coef * beta * (e_l - softmax(policy_logits_l))
    return d_w, d_l


@dataclass
class TrainConfig:
    loss: str = "kl"  # ce | kl | dpo
    epochs: int = 5
    effective_batch: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    dpo_beta: float = 0.1
    seed: int = 1
    soft_temp: float = 0.25
    layers: int = 3
    hidden: int = 64

    def __post_init__(self):
        if self.loss not in ("ce", "kl", "dpo"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epochs < 0 or self.effective_batch < 1 or self.learning_rate <= 0:
            raise ValueError("invalid epochs/batch/learning rate")
        if self.dpo_beta <= 0 or self.soft_temp <= 0:
            raise ValueError("dpo_beta and soft_temp must be positive")


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(self, params: list[np.ndarray], lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= self.lr * (mhat / (np.sqrt(vhat) + self.eps) + self.wd * p)


def hard_labels(dataset: list[Sample]) -> np.ndarray:
    return np.array([int(np.argmax(s.rewards.objective)) for s in dataset])


def soft_targets(dataset: list[Sample], temperature: float) -> np.ndarray:
    return np.stack([soft_labels(s.rewards.objective, temperature) for s in dataset])


def accuracy_vs_oracle(model: HeadModel, feats: np.ndarray, labels: np.ndarray) -> float:
    pred = np.argmax(forward(model, feats), axis=1)
    return float(np.mean(pred == labels))


def train(dataset: list[Sample], model: HeadModel, cfg: TrainConfig,
          ref_model: HeadModel | None = None,
          test_set: list[Sample] | None = None) -> tuple[HeadModel, dict]:
    """Deterministic mini-batch AdamW training of the head."""
    if not dataset:
        raise ValueError("empty training set")
    if cfg.loss == "dpo" and ref_model is None:
        raise ValueError("dpo training requires a frozen reference model")
    model = model.copy()
    model.validate()

    feats = encode_batch([s.context for s in dataset])
    labels = hard_labels(dataset)
    if cfg.loss == "kl":
        targets = soft_targets(dataset, cfg.soft_temp)
    skipped = 0
    if cfg.loss == "dpo":
        y_w = labels
        y_l = np.array([int(np.argmin(s.rewards.objective)) for s in dataset])
        keep = y_w != y_l
        skipped = int(np.sum(~keep))
        feats, y_w, y_l = feats[keep], y_w[keep], y_l[keep]
        if feats.shape[0] == 0:
            raise ValueError("no usable preference pairs (all rewards degenerate)")
        ref_logits_all = forward(ref_model, feats)

    params = model.weights + model.biases
    opt = AdamW(params, cfg.learning_rate, cfg.weight_decay)
    n = feats.shape[0]
    epoch_loss: list[float] = []

    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 0x5EED, epoch]).permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.effective_batch):
            idx = order[start:start + cfg.effective_batch]
            xb = feats[idx]
            logits, acts, pre = _forward_cached(model, xb)
            if cfg.loss == "ce":
                logq = log_softmax(logits)
                loss = -np.mean(logq[np.arange(len(idx)), labels[idx]])
                d = softmax(logits)
                d[np.arange(len(idx)), labels[idx]] -= 1.0
                d /= len(idx)
            elif cfg.loss == "kl":
                tb = targets[idx]
                logq = log_softmax(logits)
                with np.errstate(divide="ignore", invalid="ignore"):
                    terms = np.where(tb > 0, tb * (np.log(np.where(tb > 0, tb, 1.0)) - logq), 0.0)
                loss = float(np.mean(terms.sum(axis=1)))
                d = (softmax(logits) - tb) / len(idx)
            else:  # dpo
                rb = ref_logits_all[idx]
                lw, ll = y_w[idx], y_l[idx]
                rows = np.arange(len(idx))
                lp = log_softmax(logits)
                rp = log_softmax(rb)
                margin = cfg.dpo_beta * ((lp[rows, lw] - rp[rows, lw]) - (lp[rows, ll] - rp[rows, ll]))
                loss = float(np.mean(np.where(
                    margin >= 0, np.log1p(np.exp(-margin)), -margin + np.log1p(np.exp(margin)))))
                coef = 1.0 / (1.0 + np.exp(-margin)) - 1.0
                d = np.zeros_like(logits)
                d[rows, lw] += coef * cfg.dpo_beta
                d[rows, ll] -= coef * cfg.dpo_beta
                d /= len(idx)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite {cfg.loss} loss at epoch {epoch}, step {batches}")
            gw, gb = backward(model, acts, pre, d)
            opt.step(gw + gb)
            total += float(loss)
            batches += 1
        epoch_loss.append(total / batches)

    report = {
        "loss": cfg.loss,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "samples": len(dataset),
        "skipped_pairs": skipped,
        "epoch_loss": epoch_loss,
        "train_accuracy_vs_oracle": accuracy_vs_oracle(
            model, encode_batch([s.context for s in dataset]), hard_labels(dataset)),
    }
    if test_set:
        report["test_accuracy_vs_oracle"] = accuracy_vs_oracle(
            model, encode_batch([s.context for s in test_set]), hard_labels(test_set))
    return model, report


def head_decide(model: HeadModel, context: Context) -> Action:
    """Single forward pass; argmax with lowest-index tie-break."""
    return action_from_index(int(np.argmax(forward(model, encode(context)))))


CHECKPOINT_FORMAT = "watune-head-v1"


def save_checkpoint(path, model: HeadModel, metadata: dict | None = None) -> None:
    obj = {
        "format": CHECKPOINT_FORMAT,
        "layers": model.n_layers,
        "shapes": [list(w.shape) for w in model.weights],
        "weights": [w.reshape(-1).tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "metadata": metadata or {},
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[HeadModel, dict]:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {obj.get('format')!r}")
    weights = [np.array(flat, dtype=float).reshape(shape)
               for flat, shape in zip(obj["weights"], obj["shapes"])]
    biases = [np.array(b, dtype=float) for b in obj["biases"]]
    model = HeadModel(weights, biases)
    model.validate()
    return model, obj.get("metadata", {})
