"""Splits, top-K ranking, Precision/Recall@K, baselines, and the depth sweep.

Splitting is per-user: each user's interactions are shuffled and cut to
the requested ratios with stochastic rounding, so expectations match
the ratios while a 10-record user under 8:1:1 splits exactly 8/1/1.
Users with fewer than 3 interactions stay entirely in train, and every
user keeps at least one training record.

Ranking is exact over the full catalog: scores for all items, the
user's training items excluded, ties broken by ascending item id.
Metrics are macro-averaged over users with non-empty ground truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graph import BipartiteGraph
from .rng import Rng


@dataclass
class Split:
    train: list
    validation: list
    test: list
    seed: int
    ratios: tuple[float, float, float]


def split_dataset(records, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> Split:
    """Per-user partition into train/validation/test, deterministic by seed."""
    ratios = tuple(float(x) for x in ratios)
    if len(ratios) != 3 or any(x <= 0 for x in ratios):
        raise ConfigError(f"need three positive split ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")

    by_user: dict[str, list] = {}
    for rec in records:
        by_user.setdefault(rec.user, []).append(rec)

    rng = Rng(seed, (501,))
    train, val, test = [], [], []
    for user, recs in by_user.items():
        n = len(recs)
        if n < 3:
            train.extend(recs)
            continue
        order = rng.permutation(n)

        def rounded(fraction: float) -> int:
            exact = n * fraction
            base = int(exact)
            return base + (1 if rng.random() < exact - base else 0)

        n_val = rounded(ratios[1])
        n_test = rounded(ratios[2])
        # every user keeps at least one training record
        while n - n_val - n_test < 1:
            if n_test > 0:
                n_test -= 1
            else:
                n_val -= 1
        shuffled = [recs[i] for i in order]
        train.extend(shuffled[: n - n_val - n_test])
        val.extend(shuffled[n - n_val - n_test: n - n_test])
        test.extend(shuffled[n - n_test:])
    return Split(train, val, test, seed, ratios)


def topk_from_scores(scores: np.ndarray, k: int, exclude=None) -> np.ndarray:
    """Top-k item ids by descending score, ties by ascending id."""
    if k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    order = np.argsort(-scores, kind="stable")  # stable keeps ties in id order
    if exclude is not None and len(exclude):
        mask = np.zeros(len(scores), dtype=bool)
        mask[list(exclude)] = True
        order = order[~mask[order]]
    return order[:k]


def precision_recall_at_k(recommended, ground_truth, k: int):
    """(|hits|/K, |hits|/|truth|); the caller skips users with empty truth."""
    if k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    truth = set(ground_truth)
    if not truth:
        raise ConfigError("ground truth is empty; exclude this user from averages")
    hits = sum(1 for i in recommended if int(i) in truth)
    return hits / k, hits / len(truth)


def pairs_of(records, bg: BipartiteGraph) -> np.ndarray:
    """(user, item) index pairs of records under the bipartite vocabularies."""
    out = [
        (bg.user_vocab.id_of(r.user), bg.item_vocab.id_of(r.item))
        for r in records
        if r.user in bg.user_vocab and r.item in bg.item_vocab
    ]
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def truth_by_user(pairs: np.ndarray) -> dict[int, set]:
    out: dict[int, set] = {}
    for u, i in pairs.tolist():
        out.setdefault(u, set()).add(i)
    return out


def rank_and_score(score_matrix: np.ndarray, train_items: dict[int, set], truth: dict[int, set], k: int):
    """Macro Precision@K / Recall@K for any per-user score matrix."""
    precisions, recalls = [], []
    for u in sorted(truth):
        if not truth[u]:
            continue
        top = topk_from_scores(score_matrix[u], k, train_items.get(u, ()))
        p, r = precision_recall_at_k(top, truth[u], k)
        precisions.append(p)
        recalls.append(r)
    if not precisions:
        return float("nan"), float("nan")
    return float(np.mean(precisions)), float(np.mean(recalls))


def model_scores(model) -> np.ndarray:
    """Full user-by-item score matrix from the current parameters."""
    res_u, res_i = model.propagate_both()
    users, items = model.representations(res_u, res_i)
    return users @ items.T


def popularity_scores(train_pairs: np.ndarray, n_users: int, n_items: int) -> np.ndarray:
    """Every user sees the same ranking: training interaction counts."""
    counts = np.bincount(train_pairs[:, 1], minlength=n_items).astype(np.float64)
    return np.tile(counts, (n_users, 1))


def random_scores(seed: int, n_users: int, n_items: int) -> np.ndarray:
    """One seeded random ranking shared by all users."""
    values = Rng(seed, (907,)).random(n_items)
    return np.tile(values, (n_users, 1))


@dataclass
class EvalRow:
    label: str
    k: int
    precision: float
    recall: float
    seed: int
    wall_ms: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def add(self, label, k, precision, recall, seed, wall_ms) -> None:
        for value in (precision, recall):
            if np.isfinite(value) and not 0.0 <= value <= 1.0:
                raise ConfigError(f"metric out of [0,1] for {label}: {value}")
        self.rows.append(EvalRow(label, k, precision, recall, seed, wall_ms))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("label,K,precision,recall,seed,wall_ms\n")
            for r in self.rows:
                fh.write(f"{r.label},{r.k},{r.precision},{r.recall},{r.seed},{r.wall_ms}\n")


def evaluate_model(model, train_pairs, eval_pairs, k: int, seed: int, label: str = "model") -> EvalRow:
    started = time.perf_counter()
    scores = model_scores(model)
    p, r = rank_and_score(scores, truth_by_user(train_pairs), truth_by_user(eval_pairs), k)
    return EvalRow(label, k, p, r, seed, (time.perf_counter() - started) * 1e3)


def make_val_recall(train_pairs, val_pairs, k: int):
    """Validation Recall@K callback for early stopping."""
    exclude = truth_by_user(train_pairs)
    truth = truth_by_user(val_pairs)

    def recall(model) -> float:
        _, r = rank_and_score(model_scores(model), exclude, truth, k)
        return 0.0 if np.isnan(r) else r

    return recall


def sweep_layers(build_and_train, l_values=(1, 2, 3, 4), k: int = 10, seed: int = 0) -> EvalReport:
    """Train one model per depth and report a row per L.

    `build_and_train(L)` returns (model, train_pairs, test_pairs); the
    harness times each depth and collects Precision/Recall@K.
    """
    report = EvalReport()
    for l in l_values:
        started = time.perf_counter()
        model, train_pairs, test_pairs = build_and_train(int(l))
        scores = model_scores(model)
        p, r = rank_and_score(scores, truth_by_user(train_pairs), truth_by_user(test_pairs), k)
        report.add(f"L={l}", k, p, r, seed, (time.perf_counter() - started) * 1e3)
    return report
