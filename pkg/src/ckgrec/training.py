"""Joint training: alternating encoder and ranking updates with Adam.

One epoch runs (a) a pass of encoding-loss mini-batches on the
user-side graph, (b) the same on the item-side graph, then (c) a pass
of pairwise ranking mini-batches.  The regularizer is applied per step
as weight decay on exactly the parameters the step touches, so a
knowledge-graph batch never moves entities outside the batch.

All sampling derives from one root Rng split by (epoch, phase, batch),
making runs bitwise reproducible; validation recall drives early
stopping, and a non-finite loss aborts with the last finite snapshot
attached to the error.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericFaultError, SamplingExhaustedError, TrainingDiverged
from .model import BprBatch, DualModel, bpr_loss
from .rng import Rng
from .transr import kg_loss, sample_batch, touched_rows


class Adam:
    """Adam with per-parameter step counts and lazy row-subset updates.

    For sparse phases only the touched rows' moments advance (lazy
    variant); bias correction uses the per-parameter step count.  A zero
    learning rate is a strict no-op so frozen runs stay bitwise stable.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self, name: str, param: np.ndarray, grad: np.ndarray, rows=None) -> None:
        if self.lr == 0.0:
            return
        if name not in self.m:
            self.m[name] = np.zeros_like(param)
            self.v[name] = np.zeros_like(param)
            self.t[name] = 0
        self.t[name] += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t[name]
        c2 = 1.0 - b2 ** self.t[name]
        if rows is None:
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            param -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        else:
            g = grad[rows]
            m = b1 * self.m[name][rows] + (1.0 - b1) * g
            v = b2 * self.v[name][rows] + (1.0 - b2) * g * g
            self.m[name][rows] = m
            self.v[name][rows] = v
            param[rows] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainSettings:
    lr: float = 0.001
    reg: float = 1e-5
    kg_batch: int = 1024
    cf_batch: int = 1024
    epochs: int = 100
    patience: int = 10
    top_k: int = 10
    eval_every: int = 1
    corrupt_heads: bool = False


@dataclass
class TrainResult:
    model: DualModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_recall: float = float("nan")


def _batches(n: int, size: int, order: np.ndarray):
    for at in range(0, n, size):
        yield order[at: at + size]


def _snapshot(model: DualModel) -> dict[str, np.ndarray]:
    return {name: p.copy() for name, p in model.params().items()}


def _kg_epoch(model, side: str, opt: Adam, settings: TrainSettings, rng: Rng) -> float:
    kg = model.kg_u if side == "u" else model.kg_i
    table = model.table_u if side == "u" else model.table_i
    if kg.n_triples == 0:
        return 0.0
    order = rng.split(0).permutation(kg.n_triples)
    total = 0.0
    for b, idx in enumerate(_batches(kg.n_triples, settings.kg_batch, order)):
        batch = sample_batch(kg, idx, rng.split(1, b), settings.corrupt_heads)
        loss, grads = kg_loss(table, batch)
        total += loss
        ents, rels = touched_rows(batch)
        lam2 = 2.0 * settings.reg
        if lam2:
            # per-step weight decay, restricted to the rows this batch touches
            grads["entity"][ents] += lam2 * table.entity[ents]
            grads["relation"][rels] += lam2 * table.relation[rels]
            grads["projection"][rels] += lam2 * table.projection[rels]
        opt.step(f"{side}.entity", table.entity, grads["entity"], rows=ents)
        opt.step(f"{side}.relation", table.relation, grads["relation"], rows=rels)
        opt.step(f"{side}.projection", table.projection, grads["projection"], rows=rels)
    return total


def _sample_negative_item(pos: set, n_items: int, rng: Rng) -> int:
    for _ in range(4 * n_items):
        cand = int(rng.integers(n_items))
        if cand not in pos:
            return cand
    raise SamplingExhaustedError("user interacts with every item; no ranking negative exists")


def _cf_epoch(model, pairs: np.ndarray, pos_by_user, opt: Adam, settings: TrainSettings, rng: Rng) -> float:
    if len(pairs) == 0:
        return 0.0
    order = rng.split(0).permutation(len(pairs))
    total = 0.0
    params = model.params()
    for b, idx in enumerate(_batches(len(pairs), settings.cf_batch, order)):
        chosen = pairs[idx]
        neg_rng = rng.split(1, b)
        negs = np.array(
            [_sample_negative_item(pos_by_user[u], model.align.n_items, neg_rng) for u in chosen[:, 0]],
            dtype=np.int64,
        )
        batch = BprBatch(chosen[:, 0], chosen[:, 1], negs)
        res_u, res_i = model.propagate_both()
        loss, grads = bpr_loss(model, batch, res_u, res_i)
        total += loss
        lam2 = 2.0 * settings.reg
        for name, p in params.items():
            g = grads[name]
            if lam2:
                g = g + lam2 * p
            opt.step(name, p, g)
    return total


def train(
    model: DualModel,
    train_pairs: np.ndarray,
    settings: TrainSettings,
    rng: Rng,
    val_recall=None,
) -> TrainResult:
    """Alternating optimization; returns the best-validation state.

    `train_pairs` is an (n, 2) array of (user, item) index pairs from the
    training split.  `val_recall`, when given, maps a DualModel to
    validation Recall@K and drives early stopping.
    """
    pairs = np.asarray(train_pairs, dtype=np.int64).reshape(-1, 2)
    pos_by_user: dict[int, set] = {}
    for u, i in pairs.tolist():
        pos_by_user.setdefault(u, set()).add(i)
    # a user holding the whole catalog admits no ranking negative
    rankable = np.array([len(pos_by_user[u]) < model.align.n_items for u in pairs[:, 0]])
    pairs = pairs[rankable]

    opt = Adam(settings.lr)
    history: list[dict] = []
    best = _snapshot(model)
    best_recall = float("-inf")
    best_epoch = -1
    stale = 0

    for epoch in range(settings.epochs):
        started = time.perf_counter()
        last_good = _snapshot(model)
        try:
            loss_u = _kg_epoch(model, "u", opt, settings, rng.split(epoch, 0))
            loss_i = _kg_epoch(model, "i", opt, settings, rng.split(epoch, 1))
            loss_cf = _cf_epoch(model, pairs, pos_by_user, opt, settings, rng.split(epoch, 2))
        except NumericFaultError as err:
            raise TrainingDiverged(
                f"epoch {epoch}: {err}", last_good_state=last_good, history=history
            ) from err
        reg_term = settings.reg * sum(float(np.sum(p * p)) for p in model.params().values())
        row = {
            "epoch": epoch,
            "kg_u": loss_u,
            "kg_i": loss_i,
            "cf": loss_cf,
            "reg": reg_term,
            "total": loss_u + loss_i + loss_cf + reg_term,
            "wall_ms": 0.0,
            "val_recall": float("nan"),
        }
        if not np.isfinite(row["total"]):
            raise TrainingDiverged(
                f"epoch {epoch}: non-finite total loss", last_good_state=last_good, history=history
            )

        if val_recall is not None and (epoch + 1) % settings.eval_every == 0:
            recall = float(val_recall(model))
            row["val_recall"] = recall
            if recall > best_recall:
                best_recall = recall
                best_epoch = epoch
                best = _snapshot(model)
                stale = 0
            else:
                stale += 1
        row["wall_ms"] = (time.perf_counter() - started) * 1e3
        history.append(row)
        if val_recall is not None and stale >= settings.patience:
            break

    if val_recall is not None and best_epoch >= 0:
        model.set_params(best)
    else:
        best_epoch = settings.epochs - 1
        best_recall = float("nan")
    return TrainResult(model=model, history=history, best_epoch=best_epoch, best_recall=best_recall)
