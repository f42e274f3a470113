"""Datasets: synthetic generation, text I/O, splitting, evaluation.

Dataset file format (UTF-8, ``#`` starts a comment): one sample per line,
comma-separated feature values, a tab, then the label trace as
slash-separated node names:

    0.125,-0.5,0.75	A/C
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hierarchy import (
    DEFAULT_TRACE_CAP,
    HierarchySpec,
    InvalidTraceError,
    Trace,
    canonical_hash,
    enumerate_traces,
    format_trace,
    parse_trace,
)

__all__ = [
    "Dataset",
    "DatasetError",
    "EvalReport",
    "SyntheticConfig",
    "dataset_from_text",
    "dataset_to_text",
    "evaluate",
    "generate_synthetic",
    "load_dataset",
    "save_dataset",
    "split",
]


class DatasetError(ValueError):
    """Malformed dataset file or inconsistent dataset contents."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus one label trace per row, tied to a hierarchy."""

    features: np.ndarray
    labels: tuple[Trace, ...]
    spec: HierarchySpec

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise DatasetError("features must be a nonempty N x d matrix")
        if feats.shape[0] != len(self.labels):
            raise DatasetError(
                f"{feats.shape[0]} feature rows vs {len(self.labels)} labels"
            )
        from .hierarchy import validate_trace

        for t in self.labels:
            validate_trace(t, self.spec)
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    @property
    def spec_hash(self) -> str:
        return canonical_hash(self.spec)

    def subset(self, indices) -> "Dataset":
        idx = list(indices)
        return Dataset(
            features=self.features[idx],
            labels=tuple(self.labels[i] for i in idx),
            spec=self.spec,
        )


@dataclass(frozen=True)
class SyntheticConfig:
    samples_per_trace: int = 10
    cluster_spread: float = 0.1
    d_in: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_trace < 1:
            raise ValueError("samples_per_trace must be >= 1")
        if self.cluster_spread <= 0:
            raise ValueError("cluster_spread must be > 0")
        if self.d_in < 1:
            raise ValueError("d_in must be >= 1")


@dataclass(frozen=True)
class EvalReport:
    trace_accuracy: float
    per_level_accuracy: tuple[float, ...]
    confusions: tuple[tuple[str, str, int], ...]


def generate_synthetic(
    spec: HierarchySpec,
    config: SyntheticConfig,
    cap: int = DEFAULT_TRACE_CAP,
) -> Dataset:
    """One Gaussian cluster per valid trace.

    For each trace, in enumeration order, a center is drawn uniformly
    from [-1, 1]^d_in and ``samples_per_trace`` points are drawn around
    it with the configured spread.  Deterministic given the seed.
    """
    traces = enumerate_traces(spec, cap=cap)
    rng = np.random.default_rng(config.seed)
    rows, labels = [], []
    for t in traces:
        center = rng.uniform(-1.0, 1.0, config.d_in)
        pts = center + rng.normal(0.0, config.cluster_spread, (config.samples_per_trace, config.d_in))
        rows.append(pts)
        labels.extend([t] * config.samples_per_trace)
    return Dataset(features=np.vstack(rows), labels=tuple(labels), spec=spec)


def dataset_to_text(dataset: Dataset) -> str:
    """Canonical text form; floats use shortest round-trip repr."""
    lines = []
    for row, label in zip(dataset.features, dataset.labels):
        feats = ",".join(repr(float(v)) for v in row)
        lines.append(f"{feats}\t{format_trace(label, dataset.spec)}")
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str, spec: HierarchySpec) -> Dataset:
    rows: list[list[float]] = []
    labels: list[Trace] = []
    arity: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip("\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise DatasetError("expected <features><TAB><trace>", lineno)
        feat_part, label_part = line.split("\t", 1)
        try:
            values = [float(v) for v in feat_part.split(",")]
        except ValueError as exc:
            raise DatasetError(f"bad feature value: {exc}", lineno) from None
        if arity is None:
            arity = len(values)
        elif len(values) != arity:
            raise DatasetError(
                f"expected {arity} features, got {len(values)}", lineno
            )
        try:
            labels.append(parse_trace(label_part, spec))
        except InvalidTraceError as exc:
            raise DatasetError(str(exc), lineno) from None
        rows.append(values)
    if not rows:
        raise DatasetError("dataset holds no samples")
    return Dataset(features=np.array(rows), labels=tuple(labels), spec=spec)


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dataset_to_text(dataset))


def load_dataset(path, spec: HierarchySpec) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        return dataset_from_text(f.read(), spec)


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split into (train, test).

    Stratified by trace when every occurring trace has at least two
    samples, using largest-remainder allocation so the overall train size
    is ``round(fraction * N)``; plain shuffled split otherwise.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    n = len(dataset)
    n_train = int(np.floor(fraction * n + 0.5))
    if n_train < 1 or n - n_train < 1:
        raise ValueError(f"split {fraction} of {n} samples leaves an empty side")
    rng = np.random.default_rng(seed)

    groups: dict[tuple[int, ...], list[int]] = {}
    for i, t in enumerate(dataset.labels):
        groups.setdefault(t.nodes, []).append(i)

    if min(len(g) for g in groups.values()) >= 2:
        keys = sorted(groups)
        quotas = [fraction * len(groups[k]) for k in keys]
        base = [int(np.floor(q)) for q in quotas]
        extras = n_train - sum(base)
        order = sorted(
            range(len(keys)), key=lambda i: (-(quotas[i] - base[i]), i)
        )
        alloc = list(base)
        for i in order[:extras]:
            alloc[i] += 1
        train_idx, test_idx = [], []
        for k, take in zip(keys, alloc):
            perm = rng.permutation(len(groups[k]))
            shuffled = [groups[k][j] for j in perm]
            train_idx.extend(shuffled[:take])
            test_idx.extend(shuffled[take:])
    else:
        perm = rng.permutation(n)
        train_idx = list(perm[:n_train])
        test_idx = list(perm[n_train:])
    return dataset.subset(train_idx), dataset.subset(test_idx)


def evaluate(predict_fn: Callable[[np.ndarray], Trace], dataset: Dataset) -> EvalReport:
    """Exact-match trace accuracy plus per-level accuracy.

    Level l counts samples whose gold depth reaches l; a prediction
    shorter than l contributes its implicit stop there, which never
    matches the gold real node.  The confusion summary lists the most
    frequent gold -> predicted trace pairs among mismatches.
    """
    h = dataset.spec.height
    exact = 0
    level_hits = [0] * h
    level_total = [0] * h
    confusion: Counter[tuple[str, str]] = Counter()
    for row, gold in zip(dataset.features, dataset.labels):
        pred = predict_fn(row)
        if pred.nodes == gold.nodes:
            exact += 1
        else:
            confusion[
                (format_trace(gold, dataset.spec), format_trace(pred, dataset.spec))
            ] += 1
        for l in range(1, gold.depth + 1):
            level_total[l - 1] += 1
            if pred.depth >= l and pred.nodes[l - 1] == gold.nodes[l - 1]:
                level_hits[l - 1] += 1
    per_level = tuple(
        hits / total if total else 1.0
        for hits, total in zip(level_hits, level_total)
    )
    top = sorted(confusion.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
    return EvalReport(
        trace_accuracy=exact / len(dataset),
        per_level_accuracy=per_level,
        confusions=tuple((g, p, c) for (g, p), c in top),
    )
