"""Labelled binary-vector-pair datasets.

A dataset stores its pairs as two ``int8`` bit matrices (``vec1``, ``vec2``,
one row per pair) and a label vector: 1 for a positive relation, 0 for a
negative one. The label doubles as the network's target class index.
"""

from __future__ import annotations

import enum
import io
import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .tensor import Rng, ShapeError

POSITIVE = 1
NEGATIVE = 0


class CapacityError(ValueError):
    """The requested dataset is larger than the pair population allows."""


class TaskKind(enum.Enum):
    EQUALITY = "equality"
    NUMERIC_GE = "numeric_ge"
    DIGIT_SUM_GE3 = "digit_sum_ge3"
    DIGIT_REVERSAL = "digit_reversal"

    @classmethod
    def parse(cls, name: "str | TaskKind") -> "TaskKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        for task in cls:
            if key in (task.value, task.name.lower()):
                return task
        raise ValueError(f"unknown task {name!r}; choose from {[t.value for t in cls]}")


@dataclass(frozen=True)
class BinaryPair:
    vec1: tuple[int, ...]
    vec2: tuple[int, ...]
    label: int

    def __post_init__(self):
        if len(self.vec1) != len(self.vec2):
            raise ShapeError("pair vectors must have equal length")
        if any(b not in (0, 1) for b in self.vec1 + self.vec2):
            raise ValueError("pair vectors must be binary")

    @property
    def n(self) -> int:
        return len(self.vec1)

    def as_input(self) -> np.ndarray:
        return np.array(self.vec1 + self.vec2, dtype=np.float64)


def oracle_label(task, vec1, vec2, msb_first: bool = True) -> int:
    """Ground-truth label of a single pair."""
    task = TaskKind.parse(task)
    v1 = [int(b) for b in vec1]
    v2 = [int(b) for b in vec2]
    if len(v1) != len(v2):
        raise ShapeError(f"vector lengths differ: {len(v1)} vs {len(v2)}")
    if task is TaskKind.EQUALITY:
        hit = v1 == v2
    elif task is TaskKind.NUMERIC_GE:
        if not msb_first:
            v1, v2 = v1[::-1], v2[::-1]
        hit = _to_int(v1) >= _to_int(v2)
    elif task is TaskKind.DIGIT_SUM_GE3:
        hit = sum(v1) + sum(v2) >= 3
    else:
        hit = v2 == v1[::-1]
    return POSITIVE if hit else NEGATIVE


def _to_int(bits) -> int:
    value = 0
    for b in bits:
        value = 2 * value + b
    return value


def oracle_labels(task, vec1: np.ndarray, vec2: np.ndarray, msb_first: bool = True) -> np.ndarray:
    """Vectorised :func:`oracle_label` over bit matrices."""
    task = TaskKind.parse(task)
    vec1 = np.asarray(vec1)
    vec2 = np.asarray(vec2)
    if vec1.shape != vec2.shape:
        raise ShapeError(f"bit matrices differ in shape: {vec1.shape} vs {vec2.shape}")
    if task is TaskKind.EQUALITY:
        hit = np.all(vec1 == vec2, axis=1)
    elif task is TaskKind.NUMERIC_GE:
        a, b = (vec1, vec2) if msb_first else (vec1[:, ::-1], vec2[:, ::-1])
        # first differing bit from the most significant end decides
        diff = a.astype(np.int8) - b.astype(np.int8)
        nz = diff != 0
        first = np.argmax(nz, axis=1)
        decided = diff[np.arange(len(diff)), first]
        hit = ~nz.any(axis=1) | (decided > 0)
    elif task is TaskKind.DIGIT_SUM_GE3:
        hit = vec1.sum(axis=1, dtype=np.int64) + vec2.sum(axis=1, dtype=np.int64) >= 3
    else:
        hit = np.all(vec2 == vec1[:, ::-1], axis=1)
    return hit.astype(np.int8)


@dataclass
class Dataset:
    task: TaskKind
    n: int
    vec1: np.ndarray
    vec2: np.ndarray
    labels: np.ndarray
    split: str = "unsplit"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.task = TaskKind.parse(self.task)
        self.vec1 = np.ascontiguousarray(self.vec1, dtype=np.int8).reshape(-1, self.n)
        self.vec2 = np.ascontiguousarray(self.vec2, dtype=np.int8).reshape(-1, self.n)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int8).reshape(-1)
        if not (len(self.vec1) == len(self.vec2) == len(self.labels)):
            raise ShapeError("vec1, vec2 and labels must have the same number of rows")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def inputs(self) -> np.ndarray:
        """Network inputs ``[vec1, vec2]`` as float64, one row per pair."""
        return np.concatenate([self.vec1, self.vec2], axis=1).astype(np.float64)

    @property
    def pairs(self) -> list[BinaryPair]:
        return [
            BinaryPair(tuple(int(b) for b in a), tuple(int(b) for b in c), int(y))
            for a, c, y in zip(self.vec1, self.vec2, self.labels)
        ]

    def class_counts(self) -> tuple[int, int]:
        pos = int(np.count_nonzero(self.labels == POSITIVE))
        return pos, len(self) - pos

    def pair_keys(self) -> list[bytes]:
        """Hashable identity of each (vec1, vec2) pair."""
        rows = np.concatenate([self.vec1, self.vec2], axis=1)
        return [r.tobytes() for r in rows]

    def subset(self, idx, split: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return replace(
            self,
            vec1=self.vec1[idx],
            vec2=self.vec2[idx],
            labels=self.labels[idx],
            split=self.split if split is None else split,
            meta=dict(self.meta),
        )

    def concat(self, other: "Dataset") -> "Dataset":
        if other.n != self.n:
            raise ShapeError("cannot join datasets of different n")
        return replace(
            self,
            vec1=np.concatenate([self.vec1, other.vec1]),
            vec2=np.concatenate([self.vec2, other.vec2]),
            labels=np.concatenate([self.labels, other.labels]),
            meta=dict(self.meta),
        )

    # -- text format -------------------------------------------------------

    def dumps(self, **header) -> str:
        """Text form. Extra ``header`` items are written as ``key=value``
        tokens on the first line and come back in ``meta`` on load."""
        out = io.StringIO()
        tokens = [f"task={self.task.value}", f"n={self.n}", f"seed={self.seed}"]
        for key, value in header.items():
            value = str(value)
            if not value or any(c.isspace() or c == "=" for c in key + value):
                raise ValueError(f"header item {key}={value!r} must be a single token")
            tokens.append(f"{key}={value}")
        out.write(" ".join(tokens) + "\n")
        for a, b, y in zip(self.vec1, self.vec2, self.labels):
            out.write(f"{_bits(a)} {_bits(b)} {int(y)}\n")
        return out.getvalue()

    def save(self, path, **header) -> None:
        Path(path).write_text(self.dumps(**header), encoding="utf-8")

    @classmethod
    def loads(cls, text: str, split: str = "unsplit") -> "Dataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty dataset file")
        header = {}
        for tok in lines[0].split():
            key, sep, value = tok.partition("=")
            if not sep:
                raise ValueError(f"malformed header token {tok!r}")
            header[key] = value
        try:
            task = TaskKind.parse(header["task"])
            n = int(header["n"])
            seed = int(header.get("seed", 0))
        except KeyError as exc:
            raise ValueError(f"dataset header lacks {exc.args[0]!r}") from None
        rows = len(lines) - 1
        vec1 = np.zeros((rows, n), dtype=np.int8)
        vec2 = np.zeros((rows, n), dtype=np.int8)
        labels = np.zeros(rows, dtype=np.int8)
        for i, line in enumerate(lines[1:]):
            parts = line.split()
            if len(parts) != 3 or len(parts[0]) != n or len(parts[1]) != n or parts[2] not in "01":
                raise ValueError(f"line {i + 2}: malformed pair {line!r}")
            try:
                vec1[i] = [int(c) for c in parts[0]]
                vec2[i] = [int(c) for c in parts[1]]
            except ValueError:
                raise ValueError(f"line {i + 2}: non-binary digit in {line!r}") from None
            if (vec1[i] > 1).any() or (vec2[i] > 1).any():
                raise ValueError(f"line {i + 2}: non-binary digit in {line!r}")
            labels[i] = int(parts[2])
        meta = {k: v for k, v in header.items() if k not in ("task", "n", "seed")}
        return cls(task, n, vec1, vec2, labels, split=split, seed=seed, meta=meta)

    @classmethod
    def load(cls, path, split: str = "unsplit") -> "Dataset":
        return cls.loads(Path(path).read_text(encoding="utf-8"), split=split)


def _bits(row) -> str:
    return "".join("1" if b else "0" for b in row)


# -- generators ---------------------------------------------------------------


def all_vectors(n: int) -> np.ndarray:
    """Every n-bit vector, index 0 most significant, in counting order."""
    codes = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8)


def _distinct_vectors(n: int, count: int, rng: Rng) -> np.ndarray:
    if n < 63:
        if count > 2**n:
            raise CapacityError(f"only {2**n} distinct {n}-bit vectors exist")
        if 2**n <= 4 * count:
            return all_vectors(n)[np.sort(rng.choice(2**n, count))]
    seen = set()
    out = []
    while len(out) < count:
        v = rng.bits(n)
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(v)
    return np.array(out, dtype=np.int8)


def generate_equality_dataset(n: int, rng: Rng, large_count: int = 1000) -> Dataset:
    """Equal pairs from all 2^n vectors (n < 10) or ``large_count`` random
    distinct vectors, plus as many distinct random unequal pairs."""
    if n < 2:
        raise ValueError("n must be at least 2")
    positives = all_vectors(n) if n < 10 else _distinct_vectors(n, large_count, rng)
    count = len(positives)
    if count > 4**n - 2**n:
        raise CapacityError("not enough unequal pairs")
    neg1, neg2 = _sample_pairs(n, count, rng, accept=lambda a, b: not np.array_equal(a, b))
    return Dataset(
        TaskKind.EQUALITY,
        n,
        np.concatenate([positives, neg1]),
        np.concatenate([positives, neg2]),
        np.concatenate([np.ones(count, np.int8), np.zeros(count, np.int8)]),
        seed=rng.seed,
    )


def _sample_pairs(n, count, rng, accept, exclude=()):
    """``count`` distinct random pairs passing ``accept``, by rejection."""
    seen = set(exclude)
    v1, v2 = [], []
    while len(v1) < count:
        a = rng.bits(n)
        b = rng.bits(n)
        key = a.tobytes() + b.tobytes()
        if key in seen or not accept(a, b):
            continue
        seen.add(key)
        v1.append(a)
        v2.append(b)
    return (
        np.array(v1, dtype=np.int8).reshape(-1, n),
        np.array(v2, dtype=np.int8).reshape(-1, n),
    )


def _class_population(task: TaskKind, n: int, msb_first: bool):
    """Every pair in each class, or None when 4^n is too large to enumerate."""
    if 2 * n > 20:
        return None
    vs = all_vectors(n)
    i, j = np.meshgrid(np.arange(len(vs)), np.arange(len(vs)), indexing="ij")
    a, b = vs[i.ravel()], vs[j.ravel()]
    lab = oracle_labels(task, a, b, msb_first)
    return {c: (a[lab == c], b[lab == c]) for c in (POSITIVE, NEGATIVE)}


def _low_weight_pairs(n: int, max_ones: int):
    """Every pair whose 2n bits contain at most ``max_ones`` ones."""
    rows = []
    for k in range(max_ones + 1):
        for pos in itertools.combinations(range(2 * n), k):
            row = np.zeros(2 * n, dtype=np.int8)
            row[list(pos)] = 1
            rows.append(row)
    rows = np.array(rows)
    return rows[:, :n], rows[:, n:]


def _draw_class(pop, want: int, rng: Rng):
    """``want`` pairs from a class population: distinct while the population
    lasts, then whole extra passes over it in fresh random order."""
    a, b = pop
    size = len(a)
    if size == 0:
        raise CapacityError("a class has no members for this task and n")
    order = []
    while len(order) < want:
        take = min(size, want - len(order))
        order.extend(rng.choice(size, take).tolist())
    return a[order], b[order]


def generate_task_dataset(
    task, n: int, size: int, rng: Rng, msb_first: bool = True
) -> Dataset:
    """Balanced dataset of ``size`` pairs labelled by ``task``.

    Each class is sampled without repeats until its distinct population is
    exhausted; only then are pairs repeated. Reversal positives are built
    directly as ``(v, reversed(v))`` and equality positives as ``(v, v)``.
    """
    task = TaskKind.parse(task)
    if size < 2 or size % 2:
        raise ValueError("size must be a positive even number")
    if n < 1:
        raise ValueError("n must be positive")
    if n < 31 and size > 4**n:
        raise CapacityError(f"{size} pairs requested but only {4**n} exist for n={n}")
    half = size // 2
    pop = _class_population(task, n, msb_first)
    if pop is not None:
        p1, p2 = _draw_class(pop[POSITIVE], half, rng)
        q1, q2 = _draw_class(pop[NEGATIVE], half, rng)
    else:
        if task in (TaskKind.EQUALITY, TaskKind.DIGIT_REVERSAL):
            p1 = _distinct_vectors(n, half, rng)
            p2 = p1.copy() if task is TaskKind.EQUALITY else p1[:, ::-1].copy()
        else:
            p1, p2 = _sample_pairs(
                n, half, rng, lambda a, b: oracle_labels(task, a[None], b[None], msb_first)[0] == 1
            )
        if task is TaskKind.DIGIT_SUM_GE3:
            # too rare for rejection sampling; enumerate the small class
            q1, q2 = _draw_class(_low_weight_pairs(n, 2), half, rng)
        else:
            q1, q2 = _sample_pairs(
                n, half, rng, lambda a, b: oracle_labels(task, a[None], b[None], msb_first)[0] == 0
            )
    ds = Dataset(
        task,
        n,
        np.concatenate([p1, q1]),
        np.concatenate([p2, q2]),
        np.concatenate([np.ones(half, np.int8), np.zeros(half, np.int8)]),
        seed=rng.seed,
    )
    if not msb_first:
        ds.meta["msb_first"] = False
    return ds


# -- splitting ----------------------------------------------------------------


def _groups(ds: Dataset, idx: np.ndarray) -> list[list[int]]:
    """Indices in ``idx`` grouped by identical (vec1, vec2), first-seen order."""
    keys = ds.pair_keys()
    groups: dict[bytes, list[int]] = {}
    for i in idx:
        groups.setdefault(keys[i], []).append(int(i))
    return list(groups.values())


def stratified_split(ds: Dataset, train_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Per-class split: ``floor(count * fraction)`` to train, the rest to test.

    Repeated copies of a pair always land on the same side, so no pair is
    shared between train and test.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    train_idx, test_idx = [], []
    for cls in (POSITIVE, NEGATIVE):
        members = np.flatnonzero(ds.labels == cls)
        if len(members) == 0:
            continue
        n_train = int(math.floor(len(members) * train_fraction + 1e-9))
        n_test = len(members) - n_train
        if n_test == 0:
            raise ValueError(f"class {cls} would receive no test items")
        groups = _groups(ds, members)
        order = rng.permutation(len(groups))
        picked, filled = [], 0
        for g in order:
            if filled + len(groups[g]) <= n_test:
                picked.append(g)
                filled += len(groups[g])
            if filled == n_test:
                break
        if filled != n_test:
            raise ValueError("duplicate pairs prevent an exact stratified split")
        chosen = set(picked)
        for g in range(len(groups)):
            (test_idx if g in chosen else train_idx).extend(groups[g])
    train = ds.subset(np.sort(train_idx), split="train")
    test = ds.subset(np.sort(test_idx), split="test")
    return train, test


def subsample_train(train: Dataset, fraction_of_total: float, total_size: int, rng: Rng) -> Dataset:
    """Class-balanced random subset of ``round(fraction * total_size)`` pairs.

    The fraction refers to the whole dataset, not to the training part.
    """
    count = int(math.floor(fraction_of_total * total_size + 0.5))
    if count < 2:
        raise ValueError(f"subsample of {count} pairs is too small")
    if count > len(train):
        raise ValueError(f"subsample of {count} pairs exceeds training size {len(train)}")
    want = {NEGATIVE: count // 2, POSITIVE: count - count // 2}
    picked = []
    for cls in (POSITIVE, NEGATIVE):
        members = np.flatnonzero(train.labels == cls)
        if want[cls] > len(members):
            raise ValueError(f"class {cls} has only {len(members)} training pairs")
        picked.extend(members[rng.choice(len(members), want[cls])])
    sub = train.subset(np.sort(picked))
    sub.meta["fraction_of_total"] = fraction_of_total
    return sub


def build_coverage_dataset(
    variant: str, n: int, rng: Rng, train_fraction: float = 0.75
) -> tuple[Dataset, Dataset]:
    """Equality split whose training part is padded with unequal pairs so that
    every vector in the test set also occurs in a training unequal pair.

    Variant ``"a"`` needs one occurrence in either position; variant ``"b"``
    needs an occurrence at position 1 and one at position 2. The same number
    of equal pairs is added to keep the classes balanced: fresh vectors
    first, then repeats of training equal pairs once fresh vectors run out.
    """
    variant = variant.lower()
    if variant not in ("a", "b"):
        raise ValueError("coverage variant must be 'a' or 'b'")
    ds = generate_equality_dataset(n, rng)
    train, test = stratified_split(ds, train_fraction, rng)

    test_vecs = {}
    for row in np.concatenate([test.vec1, test.vec2]):
        test_vecs.setdefault(row.tobytes(), row)
    neg = train.labels == NEGATIVE
    at1 = {r.tobytes() for r in train.vec1[neg]}
    at2 = {r.tobytes() for r in train.vec2[neg]}
    taken = set(train.pair_keys()) | set(test.pair_keys())

    keys = sorted(test_vecs)
    order = rng.permutation(len(keys))
    keys = [keys[i] for i in order]
    if variant == "a":
        need1 = [k for k in keys if k not in at1 and k not in at2]
        need2: list[bytes] = []
    else:
        need1 = [k for k in keys if k not in at1]
        need2 = [k for k in keys if k not in at2]

    added1, added2 = [], []

    def add(a: np.ndarray, b: np.ndarray) -> bool:
        key = a.tobytes() + b.tobytes()
        if np.array_equal(a, b) or key in taken:
            return False
        taken.add(key)
        added1.append(a)
        added2.append(b)
        return True

    def partner(avoid: np.ndarray, first: bool) -> None:
        while True:
            w = rng.bits(n)
            if add(avoid, w) if first else add(w, avoid):
                return

    if variant == "a":
        # cover two uncovered vectors with one pair where possible
        it = iter(need1)
        for k in it:
            mate = next(it, None)
            a = test_vecs[k]
            if mate is None or not add(a, test_vecs[mate]):
                partner(a, first=True)
                if mate is not None:
                    partner(test_vecs[mate], first=True)
    else:
        for k1, k2 in zip(need1, need2):
            if not add(test_vecs[k1], test_vecs[k2]):
                partner(test_vecs[k1], first=True)
                partner(test_vecs[k2], first=False)
        start = min(len(need1), len(need2))
        for k in need1[start:]:
            partner(test_vecs[k], first=True)
        for k in need2[start:]:
            partner(test_vecs[k], first=False)

    extra = len(added1)
    if extra:
        pos_vecs = _compensating_positives(n, extra, train, test, rng)
        pad = Dataset(
            TaskKind.EQUALITY,
            n,
            np.concatenate([np.array(added1), pos_vecs]),
            np.concatenate([np.array(added2), pos_vecs]),
            np.concatenate([np.zeros(extra, np.int8), np.ones(extra, np.int8)]),
            seed=ds.seed,
        )
        train = train.concat(pad)
    train.meta.update(coverage_variant=variant, added_negatives=extra)
    return train, test


def _compensating_positives(n, count, train, test, rng):
    # a vector is fresh if its equal pair is in neither part yet
    used = {
        d.vec1[i].tobytes()
        for d in (train, test)
        for i in np.flatnonzero(d.labels == POSITIVE)
    }
    out = []
    if n < 20:
        fresh = [v for v in all_vectors(n) if v.tobytes() not in used]
        for i in rng.permutation(len(fresh))[:count]:
            out.append(fresh[i])
    else:
        while len(out) < count:
            v = rng.bits(n)
            if v.tobytes() not in used:
                used.add(v.tobytes())
                out.append(v)
    if len(out) < count:
        existing = train.vec1[train.labels == POSITIVE]
        short = count - len(out)
        reps = np.concatenate([rng.permutation(len(existing)) for _ in range(-(-short // len(existing)))])
        out.extend(existing[reps[:short]])
    return np.array(out, dtype=np.int8).reshape(-1, n)
