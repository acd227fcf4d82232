"""Losses, optimisers and the semi-supervised training loop.

Every row of the feature matrix goes through the forward pass, so
unlabelled rows shape the kNN neighbourhoods; only rows in the labelled
mask contribute to the loss.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import layers
from . import ndcore as nd
from .errors import (Diverged, EmptyMask, LabelOutOfRange, NoComparablePairs, NoEvents,
                     NonFinite, ShapeMismatch)
from .rng import CounterRNG

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# losses

def masked_cross_entropy(logits: nd.Node, labels, mask) -> nd.Node:
    """Mean negative log-likelihood over the rows where ``mask`` is true."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    n, c = logits.shape
    if labels.shape != (n,) or mask.shape != (n,):
        raise ShapeMismatch(f"labels/mask must have length {n}")
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise EmptyMask("no labelled rows in mask")
    picked = labels[rows].astype(np.int64)
    if picked.min() < 0 or picked.max() >= c:
        raise LabelOutOfRange(f"labels must lie in [0, {c})")
    onehot = np.zeros((rows.size, c))
    onehot[np.arange(rows.size), picked] = 1.0
    logp = nd.gather_rows(nd.row_log_softmax(logits), rows)
    return nd.scale(nd.sum(nd.mul(logp, onehot)), -1.0 / rows.size)


def cox_nll(risks: nd.Node, time, event) -> nd.Node:
    """Negative log partial likelihood with Breslow ties, averaged over events.

    The risk set of an event at time ``t`` is every subject with
    ``time >= t``.
    """
    time = np.asarray(time, dtype=np.float64).ravel()
    event = np.asarray(event, dtype=bool).ravel()
    n = risks.value.size
    if time.size != n or event.size != n:
        raise ShapeMismatch(f"time/event must have length {n}")
    if not event.any():
        raise NoEvents("partial likelihood needs at least one event")
    if not np.isfinite(time).all():
        raise NonFinite("non-finite survival time")
    r = nd.reshape(risks, (n, 1))
    order = np.argsort(-time, kind="stable")
    t_sorted = time[order]
    # last position (in descending-time order) holding a time >= t: the end of t's tie block
    block_end = np.searchsorted(-t_sorted, -t_sorted, side="right") - 1

    shift = float(r.value.max())
    e_sorted = nd.exp(nd.add_scalar(nd.gather_rows(r, order), -shift))
    cum = nd.cumsum(e_sorted)
    ev_pos = np.flatnonzero(event[order])
    log_denoms = nd.log(nd.gather_rows(cum, block_end[ev_pos]))
    ev_risk = nd.gather_rows(r, order[ev_pos])
    total = nd.sub(nd.sum(ev_risk), nd.add_scalar(nd.sum(log_denoms), shift * ev_pos.size))
    return nd.scale(total, -1.0 / ev_pos.size)


# ----------------------------------------------------------------------
# optimisers

@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    momentum: float = 0.0
    seed: int = 0
    batch_size: int | None = None
    patience: int | None = None
    lr_scale: dict = field(default_factory=dict)
    frozen: tuple = ()
    eval_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    def lr_for(self, name: str) -> float:
        """Learning rate for a parameter; ``lr_scale`` keys match the field suffix."""
        tag = name.split(".", 1)[-1]
        return self.learning_rate * self.lr_scale.get(name, self.lr_scale.get(tag, 1.0))


def optimizer_step(params: dict, grads: dict, state: dict, config: TrainConfig) -> None:
    """Update ``params`` in place. ``state`` carries moments and the step count."""
    state["t"] = state.get("t", 0) + 1
    t = state["t"]
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ShapeMismatch(f"{name}: param {p.shape} vs grad {g.shape}")
        lr = config.lr_for(name)
        if config.optimizer == "sgd":
            if config.momentum:
                v = state.setdefault(("v", name), np.zeros_like(p))
                v *= config.momentum
                v += g
                g = v
            p -= lr * g
            continue
        b1, b2 = config.betas
        m = state.setdefault(("m", name), np.zeros_like(p))
        v = state.setdefault(("v", name), np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + config.eps)


# ----------------------------------------------------------------------
# training loop

@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)

    def append(self, epoch, loss, train_acc, test_acc):
        self.epoch.append(epoch)
        self.train_loss.append(loss)
        self.train_acc.append(train_acc)
        self.test_acc.append(test_acc)

    def __len__(self):
        return len(self.epoch)

    def rows(self):
        return list(zip(self.epoch, self.train_loss, self.train_acc, self.test_acc))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_acc", "test_acc"])
            for row in self.rows():
                w.writerow([row[0]] + ["" if v is None else format(v, ".17g") for v in row[1:]])


def partial_batch_iter(n: int, batch_size: int, seed: int = 0, epoch: int = 0):
    """Shuffled partition of ``range(n)`` into batches of at most ``batch_size``."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = CounterRNG(seed, "batches").spawn(epoch).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _loss(spec, out: nd.Node, dataset, rows):
    """Loss over ``rows`` given the model outputs for exactly those rows."""
    if spec.head == "cox_head":
        return cox_nll(out, dataset.time[rows], dataset.event[rows])
    return masked_cross_entropy(out, np.asarray(dataset.labels)[rows], np.ones(len(rows), dtype=bool))


def evaluate(spec, out: np.ndarray, dataset, rows_mask) -> float | None:
    """Accuracy (classification) or concordance (survival) over masked rows."""
    rows = np.flatnonzero(rows_mask)
    return _score(spec, out[rows], dataset, rows)


def _score(spec, out_rows: np.ndarray, dataset, rows) -> float | None:
    from . import metrics

    if len(rows) == 0:
        return None
    if spec.head == "cox_head":
        try:
            return metrics.concordance_index(out_rows[:, 0], dataset.time[rows], dataset.event[rows])
        except NoComparablePairs:
            return None
    return metrics.accuracy(out_rows.argmax(axis=1), np.asarray(dataset.labels)[rows])


def train(spec: layers.ModelSpec, dataset, config: TrainConfig, train_mask=None,
          test_mask=None, params: dict | None = None, G_e=None):
    """Fit ``params`` on the rows of ``train_mask`` using every row for pooling.

    ``dataset`` needs ``features`` plus ``labels`` (classification) or
    ``time``/``event`` (survival). ``train_mask`` defaults to
    ``dataset.labeled_mask``. Each history entry describes the parameters
    at the start of that epoch; test scores are filled in every
    ``config.eval_every`` epochs and on the last epoch. Returns
    ``(params, history)``.
    """
    spec.validate()
    X = np.asarray(dataset.features, dtype=np.float64)
    n = X.shape[0]
    train_mask = np.asarray(dataset.labeled_mask if train_mask is None else train_mask, dtype=bool)
    if not train_mask.any():
        raise EmptyMask("no training rows")
    if spec.head == "cox_head" and not np.asarray(dataset.event)[train_mask].any():
        raise NoEvents("no events among training rows")
    if params is None:
        params = layers.init_params(spec, config.seed)
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    frozen = set(config.frozen)
    state: dict = {}
    history = TrainHistory()
    best = (np.inf, 0)

    for epoch in range(config.epochs):
        test_score = None
        last = epoch == config.epochs - 1
        if config.batch_size is None or config.batch_size >= n:
            batches = [np.arange(n)]
        else:
            batches = partial_batch_iter(n, config.batch_size, config.seed, epoch)
        losses, counts, preds, pred_rows = [], [], [], []
        try:
            if test_mask is not None and (epoch % config.eval_every == 0 or last):
                out = predict(spec, params, X, G_e, config.batch_size, config.seed, epoch)
                test_score = evaluate(spec, out, dataset, test_mask)
            for batch in batches:
                local = np.flatnonzero(train_mask[batch])
                if local.size == 0:
                    continue
                if spec.head == "cox_head" and not np.asarray(dataset.event)[batch[local]].any():
                    continue
                whole = len(batches) == 1
                Xb = X if whole else X[batch]
                Gb = G_e if whole or G_e is None else G_e[np.ix_(batch, batch)]
                nodes = {k: (nd.constant(v) if k in frozen else nd.parameter(v)) for k, v in params.items()}
                fwd = layers.model_forward(spec, nodes, Xb, Gb, rows=local)
                loss = _loss(spec, fwd.outputs, dataset, batch[local])
                nd.backward(loss)
                grads = {k: node.grad for k, node in nodes.items() if node.grad is not None}
                optimizer_step(params, grads, state, config)
                losses.append(float(loss.value[0, 0]))
                counts.append(local.size)
                preds.append(fwd.outputs.value)
                pred_rows.append(batch[local])
        except NonFinite as exc:
            raise Diverged(f"non-finite value at epoch {epoch}: {exc}", history) from exc
        if not losses:
            raise EmptyMask("no batch contained a usable training row")
        epoch_loss = float(np.average(losses, weights=counts))
        if not np.isfinite(epoch_loss) or not all(np.isfinite(v).all() for v in params.values()):
            raise Diverged(f"loss diverged at epoch {epoch}", history)
        train_score = _score(spec, np.vstack(preds), dataset, np.concatenate(pred_rows))
        history.append(epoch, epoch_loss, train_score, test_score)
        logger.debug("epoch %d loss %.6g", epoch, epoch_loss)
        if config.patience is not None:
            if epoch_loss < best[0] - 1e-12:
                best = (epoch_loss, epoch)
            elif epoch - best[1] >= config.patience:
                break
    return params, history


def predict(spec, params, X, G_e=None, batch_size: int | None = None, seed: int = 0,
            epoch: int = 0) -> np.ndarray:
    """Model outputs for every row (no gradients).

    With ``batch_size`` the rows are pooled within the same shuffled
    partial graphs that training would use at ``epoch``.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if batch_size is None or batch_size >= n:
        return layers.model_forward(spec, params, X, G_e).outputs.value
    out = np.zeros((n, spec.widths()[-1]))
    for batch in partial_batch_iter(n, batch_size, seed, epoch):
        Gb = None if G_e is None else G_e[np.ix_(batch, batch)]
        out[batch] = layers.model_forward(spec, params, X[batch], Gb).outputs.value
    return out
