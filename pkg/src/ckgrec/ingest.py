"""Input parsing, implicit-feedback preparation, and synthetic data.

Interaction files are plain TSV or CSV, one record per line:

    user<TAB>item<TAB>value[<TAB>timestamp]

where `value` is either a numeric rating or a named interaction type
("like", "favorite", ...).  Attribute triples come as TSV
`head<TAB>relation<TAB>tail` with '#' comment lines.  Malformed lines
are collected with their line numbers rather than aborting the whole
parse, unless strict mode is requested.

The synthetic generator builds a latent-factor world: users and items
belong to factor blocks, positives are drawn from a softmax over factor
affinity blended with uniform noise, and each entity carries an
attribute naming its dominant factor.  Everything is deterministic
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError
from .graph import InteractionRecord
from .rng import Rng


@dataclass(frozen=True)
class RawRating:
    """One parsed input line before the implicit transform."""

    user: str
    item: str
    value: float | str
    timestamp: int | None = None


@dataclass(frozen=True)
class ParseIssue:
    line: int
    message: str
    raw: str


@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    issues: list[ParseIssue] = field(default_factory=list)


_SEPARATORS = {"tsv": "\t", "csv": ","}


def _parse_value(token: str) -> float | str:
    try:
        return float(token)
    except ValueError:
        return token


def parse_interactions(path, format: str = "tsv", strict: bool = False) -> ParseResult:
    """Parse an interaction file into RawRating records plus an issue list.

    Blank lines are skipped.  In strict mode the first malformed line
    raises; otherwise issues accumulate in the result.  A file whose
    every non-blank line is malformed raises either way.
    """
    sep = _SEPARATORS.get(format)
    if sep is None:
        raise ConfigError(f"unknown interaction format {format!r} (expected tsv or csv)")

    result = ParseResult()
    n_lines = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            n_lines += 1
            fields = [f.strip() for f in line.split(sep)]
            issue = None
            if len(fields) not in (3, 4):
                issue = f"expected 3 or 4 fields, got {len(fields)}"
            elif not fields[0] or not fields[1]:
                issue = "empty user or item id"
            elif not fields[2]:
                issue = "empty value field"
            else:
                ts = None
                if len(fields) == 4:
                    try:
                        ts = int(fields[3])
                    except ValueError:
                        issue = f"timestamp is not an integer: {fields[3]!r}"
                if issue is None:
                    result.records.append(
                        RawRating(fields[0], fields[1], _parse_value(fields[2]), ts)
                    )
                    continue
            if strict:
                raise FormatError(f"{path}:{lineno}: {issue}")
            result.issues.append(ParseIssue(lineno, issue, line))

    if n_lines > 0 and not result.records:
        raise FormatError(f"{path}: no valid interaction rows among {n_lines} lines")
    return result


def write_interactions(ratings, path, format: str = "tsv") -> None:
    """Serialize RawRating records; parse(write(x)) reproduces x exactly."""
    sep = _SEPARATORS.get(format)
    if sep is None:
        raise ConfigError(f"unknown interaction format {format!r} (expected tsv or csv)")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in ratings:
            value = repr(r.value) if isinstance(r.value, float) else r.value
            fields = [r.user, r.item, value]
            if r.timestamp is not None:
                fields.append(str(r.timestamp))
            fh.write(sep.join(fields) + "\n")


def parse_attribute_triples(path, strict: bool = False):
    """Parse TSV `head<TAB>relation<TAB>tail`; '#' lines are comments.

    Duplicate triples are returned as-is; graph construction dedups them
    with a counter.  Returns (triples, issues).
    """
    triples: list[tuple[str, str, str]] = []
    issues: list[ParseIssue] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = [f.strip() for f in line.split("\t")]
            if len(fields) != 3 or not all(fields):
                msg = f"expected 3 non-empty tab-separated fields, got {len(fields)}"
                if strict:
                    raise FormatError(f"{path}:{lineno}: {msg}")
                issues.append(ParseIssue(lineno, msg, line))
                continue
            triples.append((fields[0], fields[1], fields[2]))
    return triples, issues


def to_implicit(ratings, threshold: float = float("-inf")):
    """Binarize ratings into InteractionRecords.

    Numeric values >= threshold become positives of type "rated"; values
    below are dropped.  Non-numeric tokens pass through as named
    interaction types.  Never increases the record count.
    """
    out: list[InteractionRecord] = []
    for r in ratings:
        if isinstance(r.value, float):
            if r.value >= threshold:
                out.append(InteractionRecord(r.user, r.item, frozenset({"rated"}), timestamp=r.timestamp))
        else:
            out.append(InteractionRecord(r.user, r.item, frozenset({r.value}), timestamp=r.timestamp))
    return out


def merge_records(records):
    """One record per (user, item) pair, interaction types unioned.

    Splitting and filtering treat a user-item pair as a single
    interaction even when the file carries one line per fine-grained
    type, so a pair can never straddle the train/test boundary.
    """
    merged: dict[tuple[str, str], int] = {}
    out: list[InteractionRecord] = []
    for rec in records:
        key = (rec.user, rec.item)
        at = merged.get(key)
        if at is None:
            merged[key] = len(out)
            out.append(rec)
        else:
            prev = out[at]
            out[at] = InteractionRecord(
                prev.user, prev.item, prev.types | rec.types, prev.weight, prev.timestamp, prev.line
            )
    return out


def filter_min_interactions(records, n: int):
    """Drop every record of users with fewer than n records.  Applied once."""
    if n < 0:
        raise ConfigError(f"minimum interaction count must be >= 0, got {n}")
    if n == 0:
        return list(records)
    records = list(records)
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec.user] = counts.get(rec.user, 0) + 1
    return [rec for rec in records if counts[rec.user] >= n]


def verify_manifest(path, n_users: int, n_items: int, n_interactions: int) -> None:
    """Check parsed counts against an announced `key=value` manifest."""
    announced: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            try:
                announced[key.strip()] = int(value.strip())
            except ValueError:
                raise FormatError(f"{path}:{lineno}: count is not an integer: {value.strip()!r}")
    actual = {"users": n_users, "items": n_items, "interactions": n_interactions}
    mismatches = [
        f"{key}: manifest says {announced[key]}, parsed {actual[key]}"
        for key in sorted(announced)
        if key in actual and announced[key] != actual[key]
    ]
    unknown = sorted(set(announced) - set(actual))
    if unknown:
        raise FormatError(f"{path}: unknown manifest keys: {', '.join(unknown)}")
    if mismatches:
        raise FormatError(f"{path}: count mismatch — " + "; ".join(mismatches))


@dataclass(frozen=True)
class SynthConfig:
    n_users: int
    n_items: int
    latent_dim: int
    interactions_per_user: int
    attr_entities_per_factor: int = 3
    noise: float = 0.0
    seed: int = 0
    affinity_scale: float = 6.0

    def validate(self) -> "SynthConfig":
        for name in ("n_users", "n_items", "latent_dim", "interactions_per_user", "attr_entities_per_factor"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"synth {name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.noise < 1.0:
            raise ConfigError(f"synth noise must lie in [0, 1), got {self.noise}")
        if self.latent_dim > min(self.n_users, self.n_items):
            raise ConfigError("synth latent_dim exceeds the user or item count")
        return self


@dataclass
class SynthTruth:
    """Ground-truth factor assignment behind a generated dataset."""

    user_factor: np.ndarray
    item_factor: np.ndarray


def _blocks(n: int, f: int) -> np.ndarray:
    # contiguous, balanced factor blocks: entity i belongs to factor i*f//n
    return (np.arange(n) * f) // n


def synth_generate(cfg: SynthConfig):
    """Generate (interactions, user_attrs, item_attrs, truth) from a seed.

    Factor affinity is 1 between same-factor user/item pairs and 0
    otherwise; sampling weights are softmax(scale * affinity) blended
    with `noise` of uniform mass.  At noise 0 the off-block weights are
    renormalized away entirely, so every interaction stays inside the
    user's own factor block.
    """
    cfg.validate()
    rng = Rng(cfg.seed, (7001,))
    f = cfg.latent_dim
    user_factor = _blocks(cfg.n_users, f)
    item_factor = _blocks(cfg.n_items, f)

    interactions: list[InteractionRecord] = []
    pick_rng = rng.split(1)
    type_rng = rng.split(2)
    for u in range(cfg.n_users):
        affinity = (item_factor == user_factor[u]).astype(np.float64)
        weights = np.exp(cfg.affinity_scale * (affinity - 1.0))
        if cfg.noise == 0.0:
            weights = weights * (affinity > 0)  # exact block support
        weights = weights / weights.sum()
        if cfg.noise > 0.0:
            weights = (1.0 - cfg.noise) * weights + cfg.noise / cfg.n_items
            weights = weights / weights.sum()
        support = int(np.count_nonzero(weights))
        if cfg.interactions_per_user > support:
            raise ConfigError(
                f"interactions_per_user={cfg.interactions_per_user} exceeds the "
                f"{support} items reachable by user {u} at noise {cfg.noise}"
            )
        items = pick_rng.choice(cfg.n_items, size=cfg.interactions_per_user, replace=False, p=weights)
        liked = type_rng.random(cfg.interactions_per_user) < 0.3
        for i, extra in zip(items.tolist(), liked.tolist()):
            types = frozenset({"view", "like"}) if extra else frozenset({"view"})
            interactions.append(InteractionRecord(f"u{u}", f"i{i}", types))

    attr_rng = rng.split(3)
    flip_rng = rng.split(4)

    def attr_links(prefix, factors, relation, tag):
        links = []
        for idx, fac in enumerate(factors.tolist()):
            j = int(attr_rng.integers(cfg.attr_entities_per_factor))
            links.append((f"{prefix}{idx}", relation, f"{tag}_f{fac}_{j}"))
            if cfg.noise > 0.0 and flip_rng.random() < cfg.noise:
                other = int(flip_rng.integers(f))
                jj = int(flip_rng.integers(cfg.attr_entities_per_factor))
                links.append((f"{prefix}{idx}", relation, f"{tag}_f{other}_{jj}"))
        return links

    user_attrs = attr_links("u", user_factor, "group", "g")
    item_attrs = attr_links("i", item_factor, "topic", "t")
    truth = SynthTruth(user_factor=user_factor, item_factor=item_factor)
    return interactions, user_attrs, item_attrs, truth


def write_attribute_triples(triples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")


def records_to_ratings(records):
    """InteractionRecords back to RawRatings, one per interaction type."""
    out = []
    for rec in records:
        for t in sorted(rec.types):
            value = 1.0 if t == "rated" else t
            out.append(RawRating(rec.user, rec.item, value, rec.timestamp))
    return out


def write_records(records, path, format: str = "tsv") -> None:
    """Serialize InteractionRecords as an interaction file."""
    write_interactions(records_to_ratings(records), path, format)
