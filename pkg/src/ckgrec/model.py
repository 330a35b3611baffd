"""Dual-graph recommender model: two encoders stitched into one scorer.

Each collaborative graph owns its own embedding table and propagation
stack.  A user's final representation concatenates its stitched vector
from the user-side graph with its stitched vector from the item-side
graph (items symmetrically), and a score is the inner product of the
two final vectors.  The ranking objective is the pairwise BPR loss over
(user, observed item, unobserved item) triplets; the total training
objective adds both graphs' encoding losses and an L2 penalty on every
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ColdEntityError, NumericFaultError
from .graph import AlignmentMap, CollaborativeKG
from .kernels import sigmoid, softplus
from .propagation import LayerStack, PropagationResult, init_stack, propagate, propagate_backward, resolve_dims
from .rng import Rng
from .transr import EmbeddingTable, TripleBatch, init_table, kg_loss


@dataclass
class DualModel:
    kg_u: CollaborativeKG
    kg_i: CollaborativeKG
    table_u: EmbeddingTable
    table_i: EmbeddingTable
    stack_u: LayerStack
    stack_i: LayerStack
    align: AlignmentMap

    @property
    def final_dim(self) -> int:
        return self.stack_u.stitched_dim + self.stack_i.stitched_dim

    def params(self) -> dict[str, np.ndarray]:
        """Every trainable array under a stable flat name."""
        out = {}
        for prefix, table, stack in (("u.", self.table_u, self.stack_u), ("i.", self.table_i, self.stack_i)):
            out[prefix + "entity"] = table.entity
            out[prefix + "relation"] = table.relation
            out[prefix + "projection"] = table.projection
            for name, p in stack.params().items():
                out[prefix + name] = p
        return out

    def set_params(self, values) -> None:
        mine = self.params()
        for name, v in values.items():
            np.copyto(mine[name], v)

    def copy(self) -> "DualModel":
        return DualModel(
            self.kg_u,
            self.kg_i,
            self.table_u.copy(),
            self.table_i.copy(),
            self.stack_u.copy(),
            self.stack_i.copy(),
            self.align,
        )

    def propagate_both(self) -> tuple[PropagationResult, PropagationResult]:
        return (
            propagate(self.kg_u, self.table_u, self.stack_u),
            propagate(self.kg_i, self.table_i, self.stack_i),
        )

    def representations(self, res_u: PropagationResult, res_i: PropagationResult):
        """Final user matrix (n_users, 2S) and item matrix (n_items, 2S).

        Ids missing from one graph get zeros on that side, so cold
        entities still rank (poorly) at evaluation time.
        """
        a = self.align
        su, si = self.stack_u.stitched_dim, self.stack_i.stitched_dim
        users = np.zeros((a.n_users, su + si))
        items = np.zeros((a.n_items, su + si))
        mu = a.users_user_side >= 0
        users[mu, :su] = res_u.stitched[a.users_user_side[mu]]
        mu = a.users_item_side >= 0
        users[mu, su:] = res_i.stitched[a.users_item_side[mu]]
        mi = a.items_user_side >= 0
        items[mi, :su] = res_u.stitched[a.items_user_side[mi]]
        mi = a.items_item_side >= 0
        items[mi, su:] = res_i.stitched[a.items_item_side[mi]]
        return users, items

    def final_representation(self, kind: str, idx: int, res_u: PropagationResult, res_i: PropagationResult) -> np.ndarray:
        """Concatenated [user-side ; item-side] vector; strict about cold ids."""
        a = self.align
        if kind == "user":
            left, right = a.users_user_side[idx], a.users_item_side[idx]
        elif kind == "item":
            left, right = a.items_user_side[idx], a.items_item_side[idx]
        else:
            raise ValueError(f"kind must be 'user' or 'item', got {kind!r}")
        if left < 0 or right < 0:
            raise ColdEntityError(f"{kind} {idx} is missing from one collaborative graph")
        return np.concatenate([res_u.stitched[left], res_i.stitched[right]])

    def predict_score(self, u: int, i: int, res_u: PropagationResult, res_i: PropagationResult) -> float:
        return float(
            self.final_representation("user", u, res_u, res_i)
            @ self.final_representation("item", i, res_u, res_i)
        )


def build_model(
    kg_u: CollaborativeKG,
    kg_i: CollaborativeKG,
    align: AlignmentMap,
    d: int,
    k: int,
    n_layers: int,
    dims,
    std: float,
    rng: Rng,
    shared_weights: bool = True,
    slope: float = 0.2,
    printed_attention: bool = False,
) -> DualModel:
    dims = resolve_dims(d, dims, n_layers)
    table_u = init_table(kg_u.entity_count, kg_u.relation_count, d, k, std, rng.split(0))
    table_i = init_table(kg_i.entity_count, kg_i.relation_count, d, k, std, rng.split(1))
    stack_u = init_stack(dims, kg_u.relation_count, k, std, rng.split(2), shared_weights, slope, printed_attention)
    stack_i = init_stack(dims, kg_i.relation_count, k, std, rng.split(3), shared_weights, slope, printed_attention)
    return DualModel(kg_u, kg_i, table_u, table_i, stack_u, stack_i, align)


@dataclass
class BprBatch:
    """Parallel id arrays: user, observed item, unobserved item."""

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __len__(self) -> int:
        return len(self.users)


def bpr_loss(model: DualModel, batch: BprBatch, res_u: PropagationResult, res_i: PropagationResult):
    """Pairwise ranking loss with gradients through stitch and propagation.

    L = sum -ln sigma(score(u, i) - score(u, j)).  Returns (loss, grads)
    with the same flat parameter names as model.params().
    """
    users, items = model.representations(res_u, res_i)
    fu = users[batch.users]
    fi = items[batch.pos_items]
    fj = items[batch.neg_items]
    # finiteness is checked below; silence the transient inf/nan warnings
    with np.errstate(invalid="ignore", over="ignore"):
        margin = np.einsum("ij,ij->i", fu, fi - fj)
        losses = softplus(-margin)
    if not np.all(np.isfinite(losses)):
        bad = int(np.flatnonzero(~np.isfinite(losses))[0])
        raise NumericFaultError(f"non-finite ranking loss at triplet {bad}")
    coeff = sigmoid(margin) - 1.0

    g_users = np.zeros_like(users)
    g_items = np.zeros_like(items)
    np.add.at(g_users, batch.users, coeff[:, None] * (fi - fj))
    np.add.at(g_items, batch.pos_items, coeff[:, None] * fu)
    np.add.at(g_items, batch.neg_items, -coeff[:, None] * fu)

    # route final-vector gradients back to each graph's stitched output
    a = model.align
    su = model.stack_u.stitched_dim
    gs_u = np.zeros_like(res_u.stitched)
    gs_i = np.zeros_like(res_i.stitched)
    mu = a.users_user_side >= 0
    gs_u[a.users_user_side[mu]] += g_users[mu, :su]
    mi = a.items_user_side >= 0
    gs_u[a.items_user_side[mi]] += g_items[mi, :su]
    mu = a.users_item_side >= 0
    gs_i[a.users_item_side[mu]] += g_users[mu, su:]
    mi = a.items_item_side >= 0
    gs_i[a.items_item_side[mi]] += g_items[mi, su:]

    grads = {}
    for name, g in propagate_backward(model.kg_u, model.table_u, model.stack_u, res_u, gs_u).items():
        grads["u." + name] = g
    for name, g in propagate_backward(model.kg_i, model.table_i, model.stack_i, res_i, gs_i).items():
        grads["i." + name] = g
    return float(np.sum(losses)), grads


def _merge(into: dict, frm: dict) -> dict:
    for name, g in frm.items():
        if name in into:
            into[name] = into[name] + g
        else:
            into[name] = g
    return into


def total_loss(model: DualModel, batch_u: TripleBatch, batch_i: TripleBatch, cf_batch: BprBatch, lam: float):
    """L = L_KG_u + L_KG_i + L_CF + lambda * ||params||^2, with gradients.

    Returns (total, grads, parts); parts carries each term so logs can
    verify the decomposition exactly.
    """
    l_u, g_u = kg_loss(model.table_u, batch_u)
    l_i, g_i = kg_loss(model.table_i, batch_i)
    res_u, res_i = model.propagate_both()
    l_cf, g_cf = bpr_loss(model, cf_batch, res_u, res_i)

    grads: dict[str, np.ndarray] = {}
    _merge(grads, {"u." + n: g for n, g in g_u.items()})
    _merge(grads, {"i." + n: g for n, g in g_i.items()})
    _merge(grads, g_cf)

    reg = 0.0
    for name, p in model.params().items():
        reg += float(np.sum(p * p))
        grads[name] = grads.get(name, 0.0) + 2.0 * lam * p
    reg *= lam

    parts = {"kg_u": l_u, "kg_i": l_i, "cf": l_cf, "reg": reg}
    return l_u + l_i + l_cf + reg, grads, parts
