"""Online evaluation protocols and a synthetic multi-modal dataset generator.

Three scenario kinds split a dataset into rounds:

  iid          all categories may appear in any round; one fixed test set
               drawn up front.
  overlap      per-round category sets grow strictly, each round adding at
               least one new category; instances join the earliest round
               whose (cumulative) set covers one of their labels.
  non_overlap  per-round category sets are pairwise disjoint; instances join
               the earliest round whose set intersects their labels, labels
               outside that round's set are dropped, and instances left
               label-less are discarded.

Overlap and non-overlap rounds are split train:test at a configurable ratio
(9:1 by default); iid carries one global test set on round 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, FeatureChunk, FeatureMatrix, LabelMatrix

KINDS = ("iid", "overlap", "non_overlap")


@dataclass(frozen=True, eq=False)
class RoundSpec:
    """One round: training columns, test columns, and its category set."""

    train_indices: tuple
    test_indices: tuple
    categories: tuple

    def __post_init__(self):
        object.__setattr__(self, "train_indices", tuple(int(i) for i in self.train_indices))
        object.__setattr__(self, "test_indices", tuple(int(i) for i in self.test_indices))
        object.__setattr__(self, "categories", tuple(self.categories))


@dataclass(frozen=True, eq=False)
class ScenarioPlan:
    """A full scenario: ordered rounds plus the kind's category semantics."""

    kind: str
    rounds: tuple
    seed: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        object.__setattr__(self, "rounds", tuple(self.rounds))

    @property
    def round_count(self):
        return len(self.rounds)

    def visible_categories(self, round_):
        """Category names visible once round ``round_`` has arrived."""
        if not 1 <= round_ <= len(self.rounds):
            raise ValueError(f"round {round_} out of range")
        if self.kind == "non_overlap":
            seen = []
            for spec in self.rounds[:round_]:
                seen.extend(spec.categories)
            return tuple(seen)
        return self.rounds[round_ - 1].categories

    def validate(self):
        """Check index disjointness and the kind's category-set invariant."""
        used = set()
        for spec in self.rounds:
            for idx in spec.train_indices + spec.test_indices:
                if idx in used:
                    raise ValueError(f"instance index {idx} assigned twice")
                used.add(idx)
        if self.kind == "overlap":
            prev = set()
            for t, spec in enumerate(self.rounds, start=1):
                cur = set(spec.categories)
                if t > 1 and not (cur > prev):
                    raise ValueError(f"round {t} category set does not strictly grow")
                prev = cur
        if self.kind == "non_overlap":
            seen = set()
            for t, spec in enumerate(self.rounds, start=1):
                cur = set(spec.categories)
                if seen & cur:
                    raise ValueError(f"round {t} categories overlap earlier rounds")
                seen |= cur

    def to_dict(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "rounds": [
                {
                    "train": list(s.train_indices),
                    "test": list(s.test_indices),
                    "categories": list(s.categories),
                }
                for s in self.rounds
            ],
        }

    def save(self, path):
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def from_dict(cls, d):
        rounds = [
            RoundSpec(r["train"], r["test"], r["categories"]) for r in d["rounds"]
        ]
        return cls(kind=d["kind"], rounds=tuple(rounds), seed=int(d["seed"]))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def split_iid(dataset, chunk_sizes, test_size, seed=0):
    """Random disjoint chunks plus one up-front test set."""
    n = dataset.count
    chunk_sizes = [int(s) for s in chunk_sizes]
    if any(s < 1 for s in chunk_sizes) or test_size < 0:
        raise ValueError("chunk sizes must be positive and test_size non-negative")
    if sum(chunk_sizes) + test_size > n:
        raise ValueError(
            f"requested {sum(chunk_sizes)} train + {test_size} test exceeds {n} instances"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test = perm[:test_size]
    rounds = []
    offset = test_size
    names = tuple(dataset.categories)
    for t, size in enumerate(chunk_sizes, start=1):
        train = perm[offset : offset + size]
        offset += size
        rounds.append(
            RoundSpec(train, test if t == 1 else (), names)
        )
    return ScenarioPlan(kind="iid", rounds=tuple(rounds), seed=int(seed))


def _category_groups(n_categories, n_rounds, rng):
    if n_categories < n_rounds:
        raise ValueError(
            f"need at least {n_rounds} categories for {n_rounds} rounds, "
            f"got {n_categories}"
        )
    order = rng.permutation(n_categories)
    sizes = [
        n_categories // n_rounds + (1 if i < n_categories % n_rounds else 0)
        for i in range(n_rounds)
    ]
    groups, offset = [], 0
    for size in sizes:
        groups.append(list(order[offset : offset + size]))
        offset += size
    return groups


def split_category_incremental(dataset, n_rounds, overlap, train_ratio=0.9, seed=0):
    """Category-incremental rounds, growing (overlap) or disjoint sets."""
    if n_rounds < 1:
        raise ValueError("need at least one round")
    if not 0 < train_ratio < 1:
        raise ValueError("train_ratio must be in (0, 1)")
    rng = np.random.default_rng(seed)
    names = dataset.categories
    groups = _category_groups(len(names), n_rounds, rng)
    round_of_category = np.empty(len(names), dtype=np.intp)
    for t, group in enumerate(groups, start=1):
        round_of_category[group] = t

    labels = dataset.labels.values
    members = [[] for _ in range(n_rounds)]
    for j in range(dataset.count):
        rows = np.flatnonzero(labels[:, j])
        if rows.size == 0:
            continue
        members[int(round_of_category[rows].min()) - 1].append(j)

    rounds = []
    visible = []
    for t in range(1, n_rounds + 1):
        group_names = tuple(names[i] for i in groups[t - 1])
        visible.extend(group_names)
        idx = np.array(members[t - 1], dtype=np.intp)
        rng.shuffle(idx)
        if idx.size >= 2:
            n_train = min(max(int(round(idx.size * train_ratio)), 1), idx.size - 1)
        else:
            n_train = idx.size
        rounds.append(
            RoundSpec(
                train_indices=np.sort(idx[:n_train]),
                test_indices=np.sort(idx[n_train:]),
                categories=group_names if not overlap else tuple(visible),
            )
        )
    plan = ScenarioPlan(
        kind="overlap" if overlap else "non_overlap", rounds=tuple(rounds), seed=int(seed)
    )
    plan.validate()
    return plan


def _mask_rows_outside(label_block, visible, own_categories):
    own = set(own_categories)
    out = label_block.copy()
    for i, name in enumerate(visible):
        if name not in own:
            out[i, :] = 0
    return out


def chunk_for_round(dataset, plan, round_):
    """Materialize one round's training chunk from a dataset and a plan."""
    spec = plan.rounds[round_ - 1]
    visible = plan.visible_categories(round_)
    row_of = {name: i for i, name in enumerate(dataset.categories)}
    rows = [row_of[name] for name in visible]
    cols = np.asarray(spec.train_indices, dtype=np.intp)
    block = dataset.labels.values[np.ix_(rows, cols)]
    if plan.kind == "non_overlap":
        block = _mask_rows_outside(block, visible, spec.categories)
    modalities = [
        FeatureMatrix(fm.values[:, cols], fm.modality_id) for fm in dataset.modalities
    ]
    return FeatureChunk(modalities, LabelMatrix(block), round_, visible)


def queries_for_round(dataset, plan, round_):
    """Test queries accumulated through ``round_``: raw features plus labels.

    Labels are expressed over the categories visible at ``round_``; in the
    non-overlap kind each test instance keeps only its own round's labels.
    """
    visible = plan.visible_categories(round_)
    row_of = {name: i for i, name in enumerate(dataset.categories)}
    rows = [row_of[name] for name in visible]
    col_parts, label_parts = [], []
    for s in range(1, round_ + 1):
        spec = plan.rounds[s - 1]
        if not spec.test_indices:
            continue
        cols = np.asarray(spec.test_indices, dtype=np.intp)
        block = dataset.labels.values[np.ix_(rows, cols)]
        if plan.kind == "non_overlap":
            block = _mask_rows_outside(block, visible, spec.categories)
        col_parts.append(cols)
        label_parts.append(block)
    if not col_parts:
        raise ValueError(f"no test instances through round {round_}")
    cols = np.concatenate(col_parts)
    labels = LabelMatrix(np.concatenate(label_parts, axis=1))
    modalities = [
        FeatureMatrix(fm.values[:, cols], fm.modality_id) for fm in dataset.modalities
    ]
    return modalities, labels


DEFAULT_LABEL_CARDINALITY = {1: 0.6, 2: 0.4}


def generate_synthetic(
    n_instances,
    n_categories,
    modalities,
    dims,
    label_cardinality=None,
    noise=0.1,
    seed=0,
    noise_asymmetry=1.0,
    latent_dim=16,
    out_dir=None,
):
    """Synthetic multi-modal labeled data at desk scale.

    Each category gets a latent prototype; an instance's latent vector is
    the mean of its categories' prototypes, and each modality observes it
    through a fixed random linear map plus Gaussian noise. With
    ``noise_asymmetry`` > 1, one uniformly chosen modality per instance gets
    its noise multiplied by that factor, so per-instance fusion weights have
    signal to exploit.
    """
    if len(dims) != modalities:
        raise ValueError("dims must list one dimension per modality")
    if n_categories < 1 or n_instances < 0:
        raise ValueError("need at least one category and non-negative instance count")
    if noise < 0 or noise_asymmetry < 1:
        raise ValueError("noise must be >= 0 and noise_asymmetry >= 1")
    card = dict(DEFAULT_LABEL_CARDINALITY if label_cardinality is None else label_cardinality)
    if any(k < 1 or k > n_categories for k in card) or any(p < 0 for p in card.values()):
        raise ValueError("label cardinality entries must be valid category counts")
    total = sum(card.values())
    if total <= 0:
        raise ValueError("label cardinality probabilities sum to zero")
    cards = sorted(card)
    probs = np.array([card[k] for k in cards], dtype=np.float64) / total

    rng = np.random.default_rng(seed)
    prototypes = rng.standard_normal((latent_dim, n_categories))
    maps = [
        rng.standard_normal((dims[m], latent_dim)) / np.sqrt(latent_dim)
        for m in range(modalities)
    ]
    label_values = np.zeros((n_categories, n_instances), dtype=np.uint8)
    drawn_cards = rng.choice(cards, size=n_instances, p=probs)
    for j in range(n_instances):
        chosen = rng.choice(n_categories, size=int(drawn_cards[j]), replace=False)
        label_values[chosen, j] = 1
    counts = np.maximum(label_values.sum(axis=0), 1).astype(np.float64)

    scale = np.ones((modalities, n_instances))
    if noise_asymmetry > 1 and modalities > 1:
        noisy_modality = rng.integers(0, modalities, size=n_instances)
        scale[noisy_modality, np.arange(n_instances)] = noise_asymmetry
    feature_mats = []
    # per-category feature columns are computed once and combined per
    # instance, so same-category noiseless instances are bit-identical
    label_float = label_values.astype(np.float64)
    for m in range(modalities):
        per_category = maps[m] @ prototypes
        x = (per_category @ label_float) / counts
        x = x + rng.standard_normal((dims[m], n_instances)) * (noise * scale[m][np.newaxis, :])
        feature_mats.append(FeatureMatrix(x, modality_id=m + 1))

    width = max(2, len(str(n_categories - 1)))
    names = [f"category_{i:0{width}d}" for i in range(n_categories)]
    dataset = Dataset(feature_mats, LabelMatrix(label_values), names)
    if out_dir is not None:
        dataset.save(out_dir)
    return dataset
