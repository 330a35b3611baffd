"""Interaction graph and collaborative knowledge-graph construction.

Two directed knowledge graphs are built from the same interaction data:

* the user-side graph points each user at the items it interacted with,
  then hangs item attributes off the items;
* the item-side graph points each item at its users, then hangs user
  attributes off the users.

Edges carrying several fine-grained interaction types (say both "like"
and "favorite") are represented by a single composite relation id per
distinct type set, so the downstream encoder can give each combination
its own relation space.  Graphs are immutable after construction and
indexed per head for O(1) neighborhood lookups.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, UnresolvedEntityError

INTERACTION = "interaction"
COMPOSITE_INTERACTION = "composite-interaction"
USER_ATTRIBUTE = "user-attribute"
ITEM_ATTRIBUTE = "item-attribute"


@dataclass(frozen=True)
class InteractionRecord:
    """One observed user-item interaction with its fine-grained type set."""

    user: str
    item: str
    types: frozenset[str]
    weight: float | None = None
    timestamp: int | None = None
    line: int | None = None


class Vocab:
    """Dense id assignment for string tokens; ids round-trip to tokens."""

    def __init__(self, tokens=()):
        self._index: dict[str, int] = {}
        self._tokens: list[str] = []
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._index[token] = idx
            self._tokens.append(token)
        return idx

    def id_of(self, token: str) -> int:
        return self._index[token]

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def tokens(self) -> list[str]:
        return list(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return len(self._tokens)


class RelationRegistry:
    """Allocates dense relation ids for interaction type sets and attributes.

    Identical type sets map to the same id regardless of insertion order;
    distinct sets get distinct ids.  Attribute relations live in the same
    id space, keyed by their relation name.
    """

    def __init__(self):
        self._by_types: dict[frozenset[str], int] = {}
        self._by_attr: dict[str, int] = {}
        self._kinds: list[str] = []
        self._labels: list[str] = []
        self._types: list[frozenset[str] | None] = []

    def composite(self, types) -> int:
        key = frozenset(types)
        if not key:
            raise FormatError("interaction relation requires a non-empty type set")
        rid = self._by_types.get(key)
        if rid is None:
            rid = len(self._kinds)
            self._by_types[key] = rid
            self._kinds.append(INTERACTION if len(key) == 1 else COMPOSITE_INTERACTION)
            self._labels.append("|".join(sorted(key)))
            self._types.append(key)
        return rid

    def attribute(self, name: str, kind: str) -> int:
        if kind not in (USER_ATTRIBUTE, ITEM_ATTRIBUTE):
            raise ValueError(f"not an attribute kind: {kind}")
        rid = self._by_attr.get(name)
        if rid is None:
            rid = len(self._kinds)
            self._by_attr[name] = rid
            self._kinds.append(kind)
            self._labels.append(name)
            self._types.append(None)
        return rid

    def kind(self, rid: int) -> str:
        return self._kinds[rid]

    def label(self, rid: int) -> str:
        return self._labels[rid]

    def types_of(self, rid: int) -> frozenset[str] | None:
        """Type set backing an interaction relation; None for attributes."""
        return self._types[rid]

    def __len__(self) -> int:
        return len(self._kinds)


@dataclass
class BipartiteGraph:
    """User-item interaction graph; one edge per (user, item) pair."""

    user_vocab: Vocab
    item_vocab: Vocab
    edges: list[tuple[int, int, frozenset[str]]]

    @property
    def n_users(self) -> int:
        return len(self.user_vocab)

    @property
    def n_items(self) -> int:
        return len(self.item_vocab)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_bipartite(
    records,
    order: str = "first-seen",
    vocab_records=None,
) -> BipartiteGraph:
    """Index users/items and merge duplicate (user, item) records.

    Ids are assigned in first-seen order by default, or lexicographically
    with order="sorted".  Duplicate records for the same pair merge by set
    union of their interaction types.  `vocab_records` optionally widens
    the vocabularies beyond the records that contribute edges, so entities
    seen only in held-out data still receive ids.
    """
    if order not in ("first-seen", "sorted"):
        raise FormatError(f"unknown id assignment order: {order!r}")
    records = list(records)
    vocab_source = records if vocab_records is None else list(vocab_records)

    for pos, rec in enumerate(vocab_source):
        if not rec.types:
            where = f"line {rec.line}" if rec.line is not None else f"record {pos + 1}"
            raise FormatError(f"empty interaction-type set ({where}, user={rec.user!r}, item={rec.item!r})")

    user_vocab = Vocab()
    item_vocab = Vocab()
    if order == "sorted":
        for u in sorted({r.user for r in vocab_source}):
            user_vocab.add(u)
        for i in sorted({r.item for r in vocab_source}):
            item_vocab.add(i)
    else:
        for rec in vocab_source:
            user_vocab.add(rec.user)
            item_vocab.add(rec.item)

    edges: list[tuple[int, int, frozenset[str]]] = []
    edge_pos: dict[tuple[int, int], int] = {}
    for pos, rec in enumerate(records):
        if not rec.types:
            where = f"line {rec.line}" if rec.line is not None else f"record {pos + 1}"
            raise FormatError(f"empty interaction-type set ({where}, user={rec.user!r}, item={rec.item!r})")
        u = user_vocab.add(rec.user)
        i = item_vocab.add(rec.item)
        key = (u, i)
        at = edge_pos.get(key)
        if at is None:
            edge_pos[key] = len(edges)
            edges.append((u, i, frozenset(rec.types)))
        else:
            pu, pi, ptypes = edges[at]
            edges[at] = (pu, pi, ptypes | rec.types)
    return BipartiteGraph(user_vocab, item_vocab, edges)


def composite_relation(types, registry: RelationRegistry) -> int:
    """Relation id for a set of interaction types (order-insensitive)."""
    return registry.composite(types)


@dataclass(frozen=True)
class AlignmentMap:
    """Entity ids of each user/item inside the two collaborative graphs.

    A value of -1 marks an id absent from that graph (a cold entity).
    """

    users_user_side: np.ndarray
    items_user_side: np.ndarray
    users_item_side: np.ndarray
    items_item_side: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.users_user_side)

    @property
    def n_items(self) -> int:
        return len(self.items_user_side)


def plan_alignment(bg: BipartiteGraph) -> AlignmentMap:
    """Canonical entity layout: each graph places its head side first."""
    n_u, n_i = bg.n_users, bg.n_items
    return AlignmentMap(
        users_user_side=np.arange(n_u, dtype=np.int64),
        items_user_side=np.arange(n_i, dtype=np.int64) + n_u,
        users_item_side=np.arange(n_u, dtype=np.int64) + n_i,
        items_item_side=np.arange(n_i, dtype=np.int64),
    )


@dataclass
class BuildStats:
    duplicate_attributes: int = 0
    attribute_triples: int = 0
    interaction_triples: int = 0


class CollaborativeKG:
    """Immutable triple store with a per-head neighbor index.

    Triples are grouped by head entity in insertion order; `neighbors`
    returns exactly the (relation, tail) pairs of a head, and membership
    queries back the negative sampler.
    """

    def __init__(self, entity_count, registry, heads, rels, tails, entity_names, stats):
        self.entity_count = int(entity_count)
        self.registry = registry
        self.entity_names = entity_names  # list of (kind, token)
        self.stats = stats

        heads = np.asarray(heads, dtype=np.int64)
        rels = np.asarray(rels, dtype=np.int64)
        tails = np.asarray(tails, dtype=np.int64)
        order = np.argsort(heads, kind="stable")
        self.heads = heads[order]
        self.rels = rels[order]
        self.tails = tails[order]
        counts = np.bincount(self.heads, minlength=self.entity_count) if len(heads) else np.zeros(self.entity_count, dtype=np.int64)
        self.head_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self._members = {(int(h), int(r), int(t)) for h, r, t in zip(self.heads, self.rels, self.tails)}

    @property
    def relation_count(self) -> int:
        return len(self.registry)

    @property
    def n_triples(self) -> int:
        return len(self.heads)

    def has_triple(self, h: int, r: int, t: int) -> bool:
        return (int(h), int(r), int(t)) in self._members

    def neighbor_slice(self, h: int) -> slice:
        if not 0 <= h < self.entity_count:
            raise IndexError(f"head {h} out of range [0, {self.entity_count})")
        return slice(int(self.head_ptr[h]), int(self.head_ptr[h + 1]))

    def serialized(self) -> bytes:
        """Canonical byte form; equal inputs rebuild to equal bytes."""
        parts = [
            b"CKG1",
            np.int64(self.entity_count).tobytes(),
            np.int64(self.relation_count).tobytes(),
            self.heads.tobytes(),
            self.rels.tobytes(),
            self.tails.tobytes(),
            "\x1f".join(f"{k}\x1e{t}" for k, t in self.entity_names).encode(),
            "\x1f".join(
                f"{self.registry.kind(r)}\x1e{self.registry.label(r)}"
                for r in range(self.relation_count)
            ).encode(),
        ]
        return b"".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.serialized()).hexdigest()


def neighbors(kg: CollaborativeKG, h: int) -> list[tuple[int, int]]:
    """All (relation, tail) pairs of head h, in insertion order."""
    s = kg.neighbor_slice(h)
    return list(zip(kg.rels[s].tolist(), kg.tails[s].tolist()))


def _build_side(bg, attrs, align, head_is_user):
    """Shared construction for both collaborative graphs."""
    registry = RelationRegistry()
    stats = BuildStats()
    heads: list[int] = []
    rels: list[int] = []
    tails: list[int] = []

    if head_is_user:
        head_ents, tail_ents = align.users_user_side, align.items_user_side
        attr_head_vocab, attr_kind = bg.item_vocab, ITEM_ATTRIBUTE
        attr_head_ents = align.items_user_side
        names = [("user", bg.user_vocab.token(u)) for u in range(bg.n_users)]
        names += [("item", bg.item_vocab.token(i)) for i in range(bg.n_items)]
    else:
        head_ents, tail_ents = align.items_item_side, align.users_item_side
        attr_head_vocab, attr_kind = bg.user_vocab, USER_ATTRIBUTE
        attr_head_ents = align.users_item_side
        names = [("item", bg.item_vocab.token(i)) for i in range(bg.n_items)]
        names += [("user", bg.user_vocab.token(u)) for u in range(bg.n_users)]

    for u, i, types in bg.edges:
        rid = registry.composite(types)
        if head_is_user:
            heads.append(int(head_ents[u]))
            tails.append(int(tail_ents[i]))
        else:
            heads.append(int(head_ents[i]))
            tails.append(int(tail_ents[u]))
        rels.append(rid)
    stats.interaction_triples = len(heads)

    base = bg.n_users + bg.n_items
    attr_vocab = Vocab()
    seen: set[tuple[int, int, int]] = set()
    unresolved: list[str] = []
    for h_tok, rel_name, t_tok in attrs:
        if h_tok not in attr_head_vocab:
            unresolved.append(h_tok)
            continue
        h_ent = int(attr_head_ents[attr_head_vocab.id_of(h_tok)])
        rid = registry.attribute(rel_name, attr_kind)
        t_ent = base + attr_vocab.add(t_tok)
        key = (h_ent, rid, t_ent)
        if key in seen:
            stats.duplicate_attributes += 1
            continue
        seen.add(key)
        heads.append(h_ent)
        rels.append(rid)
        tails.append(t_ent)
    if unresolved:
        side = "item" if head_is_user else "user"
        missing = ", ".join(sorted(set(unresolved)))
        raise UnresolvedEntityError(
            f"attribute triples reference unknown {side} heads: {missing}"
        )
    stats.attribute_triples = len(heads) - stats.interaction_triples

    names += [("attr", attr_vocab.token(a)) for a in range(len(attr_vocab))]
    return CollaborativeKG(base + len(attr_vocab), registry, heads, rels, tails, names, stats)


def build_user_side_ckg(bg: BipartiteGraph, item_attrs, align: AlignmentMap | None = None) -> CollaborativeKG:
    """Graph rooted at users: (user, interaction, item) plus item attributes."""
    align = plan_alignment(bg) if align is None else align
    return _build_side(bg, item_attrs, align, head_is_user=True)


def build_item_side_ckg(bg: BipartiteGraph, user_attrs, align: AlignmentMap | None = None) -> CollaborativeKG:
    """Graph rooted at items: (item, interaction, user) plus user attributes."""
    align = plan_alignment(bg) if align is None else align
    return _build_side(bg, user_attrs, align, head_is_user=False)


def build_graphs(bg: BipartiteGraph, user_attrs, item_attrs):
    """Convenience: both collaborative graphs plus their shared alignment."""
    align = plan_alignment(bg)
    gu = build_user_side_ckg(bg, item_attrs, align)
    gi = build_item_side_ckg(bg, user_attrs, align)
    return gu, gi, align
