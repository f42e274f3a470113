"""MAP trace decoding over per-level posteriors.

``downpour`` runs a level-by-level max-product dynamic program: the score
of a trace is the product of its per-level posterior entries, including
the stop entry at the level after its last node.  All arithmetic happens
in log space with ``-inf`` standing in for zero probability, so scores
stay exact and comparable at any depth.

``brute_force_map`` realizes the same maximum by exhaustive scoring and
serves as the independent oracle; ``check_theorems`` verifies, by
exhaustion, the dominance and stopping guarantees that make the greedy
decoder exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hierarchy import (
    HierarchySpec,
    InvalidTraceError,
    Kind,
    LevelMask,
    Trace,
    build_masks,
    enumerate_traces,
)

__all__ = [
    "Counterexample",
    "LevelPosteriors",
    "MalformedMaskError",
    "PosteriorsError",
    "ScoredTrace",
    "TheoremReport",
    "brute_force_map",
    "check_theorems",
    "downpour",
    "posteriors_from_text",
    "random_instance",
    "random_posteriors",
    "random_spec",
    "trace_score",
]

SUM_TOLERANCE = 1e-9


class PosteriorsError(ValueError):
    """Posterior vectors that are not normalized distributions."""


class MalformedMaskError(ValueError):
    """Masks under which no stop-terminated trace has positive score."""


@dataclass(frozen=True, eq=False)
class LevelPosteriors:
    """Per-level probability vectors, levels ``1 .. height + 1``.

    Level 1 has no stop entry; levels ``2 .. height`` carry one stop entry
    last; the virtual level ``height + 1`` is a single stop entry.  Every
    level sums to 1 within 1e-9 and is nonnegative.
    """

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        frozen = []
        for i, y in enumerate(self.levels):
            arr = np.ascontiguousarray(y, dtype=np.float64)
            if arr.ndim != 1 or arr.size == 0:
                raise PosteriorsError(f"level {i + 1}: expected a nonempty vector")
            if not np.all(np.isfinite(arr)):
                raise PosteriorsError(f"level {i + 1}: non-finite entry")
            if np.any(arr < 0):
                raise PosteriorsError(f"level {i + 1}: negative entry")
            if abs(arr.sum() - 1.0) > SUM_TOLERANCE:
                raise PosteriorsError(
                    f"level {i + 1}: sums to {float(arr.sum())!r}, not 1"
                )
            arr.flags.writeable = False
            frozen.append(arr)
        if not frozen:
            raise PosteriorsError("no levels")
        object.__setattr__(self, "levels", tuple(frozen))

    @property
    def height(self) -> int:
        return len(self.levels) - 1


@dataclass(frozen=True)
class ScoredTrace:
    """A trace with its log score; ``terminal_level`` is where it stopped."""

    trace: Trace
    log_score: float
    terminal_level: int


@dataclass(frozen=True)
class Counterexample:
    theorem: int
    sequence: tuple[int, ...]
    lhs: float
    rhs: float
    note: str


@dataclass(frozen=True)
class TheoremReport:
    instance: str
    theorem1_ok: bool
    theorem2_ok: bool
    theorem3_ok: bool
    counterexample: Counterexample | None = None

    @property
    def all_ok(self) -> bool:
        return self.theorem1_ok and self.theorem2_ok and self.theorem3_ok


def _log_levels(posteriors: LevelPosteriors) -> list[np.ndarray]:
    with np.errstate(divide="ignore"):
        return [np.log(y) for y in posteriors.levels]


def _check_shapes(posteriors: LevelPosteriors, masks: list[LevelMask]) -> None:
    if len(masks) != posteriors.height:
        raise ValueError(
            f"got {len(masks)} masks for {posteriors.height + 1} posterior levels"
        )
    prev = posteriors.levels[0].size
    for i, mask in enumerate(masks):
        rows, cols = mask.matrix.shape
        if rows != prev:
            raise ValueError(f"mask level {mask.level}: {rows} rows, expected {prev}")
        if posteriors.levels[i + 1].size != cols:
            raise ValueError(
                f"posterior level {mask.level}: {posteriors.levels[i + 1].size} "
                f"entries, expected {cols}"
            )
        prev = cols - 1


def _dp_tables(posteriors: LevelPosteriors, masks: list[LevelMask]):
    """Forward pass of the decoder.

    Returns per-level max log scores over real nodes, backpointers,
    per-level stop log scores, and the stop backpointers.
    """
    logs = _log_levels(posteriors)
    values = [logs[0]]
    backptrs: list[np.ndarray] = []
    stop_logs: list[float] = []
    stop_parents: list[int] = []

    v = logs[0]
    for i, mask in enumerate(masks):
        m = mask.matrix
        last = i == len(masks) - 1
        n_real = 0 if last else m.shape[1] - 1
        if n_real:
            cand = np.where(m[:, :n_real] > 0.5, v[:, None], -np.inf)
            parent = cand.argmax(axis=0)
            v_next = logs[i + 1][:n_real] + cand[parent, np.arange(n_real)]
            backptrs.append(parent)
        scand = np.where(m[:, -1] > 0.5, v, -np.inf)
        sp = int(scand.argmax())
        stop_logs.append(float(logs[i + 1][-1] + scand[sp]))
        stop_parents.append(sp)
        if n_real:
            v = v_next
            values.append(v)
    return values, backptrs, stop_logs, stop_parents


def downpour(posteriors: LevelPosteriors, masks: list[LevelMask]) -> ScoredTrace:
    """Extract the maximum-score stop-terminated trace.

    Level by level, each node's best log score is the node's own log
    posterior plus the best score among its mask parents; each level's
    stop entry closes off traces ending there.  The returned trace
    backtraces from the best stop.  Ties break toward the smallest
    terminal level, then the smallest parent index at each backtrace
    step.
    """
    _check_shapes(posteriors, masks)
    _, backptrs, stop_logs, stop_parents = _dp_tables(posteriors, masks)

    best = 0
    for i in range(1, len(stop_logs)):
        if stop_logs[i] > stop_logs[best]:
            best = i
    if stop_logs[best] == -np.inf:
        raise MalformedMaskError("every stop-terminated trace has zero probability")

    depth = best + 1
    nodes = [0] * depth
    nodes[depth - 1] = stop_parents[best]
    for pos in range(depth - 1, 0, -1):
        nodes[pos - 1] = int(backptrs[pos - 1][nodes[pos]])
    return ScoredTrace(
        trace=Trace(tuple(nodes)),
        log_score=stop_logs[best],
        terminal_level=depth + 1,
    )


def trace_score(
    trace: Trace, posteriors: LevelPosteriors, masks: list[LevelMask]
) -> float:
    """Log score of a trace: sum of its per-level log posterior entries
    plus the stop entry after its last node.

    An invalid trace raises InvalidTraceError; a valid trace through a
    zero-probability entry scores ``-inf``.
    """
    _check_shapes(posteriors, masks)
    h = posteriors.height
    if not 1 <= trace.depth <= h:
        raise InvalidTraceError(f"trace depth {trace.depth} outside [1..{h}]")
    sizes = [posteriors.levels[0].size] + [m.matrix.shape[1] - 1 for m in masks[:-1]]
    for l, node in enumerate(trace.nodes, start=1):
        if not 0 <= node < sizes[l - 1]:
            raise InvalidTraceError(f"node index {node} out of range at level {l}")
    for l in range(2, trace.depth + 1):
        if masks[l - 2].matrix[trace.nodes[l - 2], trace.nodes[l - 1]] <= 0.5:
            raise InvalidTraceError(
                f"no edge {trace.nodes[l - 2]} -> {trace.nodes[l - 1]} at level {l}"
            )
    if masks[trace.depth - 1].matrix[trace.nodes[-1], -1] <= 0.5:
        raise InvalidTraceError(f"stop not reachable from node {trace.nodes[-1]}")

    logs = _log_levels(posteriors)
    score = logs[0][trace.nodes[0]]
    for l in range(2, trace.depth + 1):
        score = score + logs[l - 1][trace.nodes[l - 1]]
    return float(score + logs[trace.depth][-1])


def _selection_key(log_score: float, trace: Trace):
    # smallest terminal level first, then smallest index scanning from the
    # trace's end: exactly the decoder's backtrace tie rule
    return (-log_score, trace.depth, tuple(reversed(trace.nodes)))


def brute_force_map(
    posteriors: LevelPosteriors, masks: list[LevelMask], spec: HierarchySpec
) -> ScoredTrace:
    """Oracle: score every valid trace and keep the maximum.

    Ties break exactly as in ``downpour``: smallest depth, then smallest
    node indices compared from the terminal end inward.
    """
    best: ScoredTrace | None = None
    best_key = None
    for t in enumerate_traces(spec):
        s = trace_score(t, posteriors, masks)
        key = _selection_key(s, t)
        if best_key is None or key < best_key:
            best, best_key = ScoredTrace(t, s, t.depth + 1), key
    assert best is not None
    if best.log_score == -np.inf:
        raise MalformedMaskError("every stop-terminated trace has zero probability")
    return best


def _path_log_scores(trace: Trace, logs: list[np.ndarray]) -> list[float]:
    """Cumulative log scores of the raw node path (no stop term)."""
    out = []
    s = logs[0][trace.nodes[0]]
    out.append(float(s))
    for l in range(2, trace.depth + 1):
        s = s + logs[l - 1][trace.nodes[l - 1]]
        out.append(float(s))
    return out


def check_theorems(
    posteriors: LevelPosteriors,
    masks: list[LevelMask],
    spec: HierarchySpec,
    descriptor: str = "",
) -> TheoremReport:
    """Exhaustively verify the decoder's three guarantees on one instance.

    1. Every node's forward value dominates the score of every enumerated
       sequence ending at or passing through that node, and equals the
       best score among the sequences ending there.
    2. Whenever a level's stop value dominates all real-node values at
       that level, no deeper sequence (with or without its stop term)
       beats it.
    3. The decoder's result matches the brute-force maximum: same trace,
       log scores within 1e-12.
    """
    _check_shapes(posteriors, masks)
    values, _, stop_logs, _ = _dp_tables(posteriors, masks)
    logs = _log_levels(posteriors)
    traces = enumerate_traces(spec)
    scored = [(t, _path_log_scores(t, logs)) for t in traces]

    counterexample = None
    t1_ok = True
    best_prefix: dict[tuple[int, int], float] = {}
    for t, prefix in scored:
        full = prefix[-1]
        for n in range(1, t.depth + 1):
            node = t.nodes[n - 1]
            key = (n, node)
            if key not in best_prefix or prefix[n - 1] > best_prefix[key]:
                best_prefix[key] = prefix[n - 1]
            v = float(values[n - 1][node])
            if not v >= full:
                t1_ok = False
                counterexample = counterexample or Counterexample(
                    1, t.nodes, v, full, f"value at level {n} node {node}"
                )
    for (n, node), bound in best_prefix.items():
        v = float(values[n - 1][node])
        if v != bound:
            t1_ok = False
            counterexample = counterexample or Counterexample(
                1, (node,), v, bound, f"value != best prefix at level {n}"
            )

    t2_ok = True
    for i, stop in enumerate(stop_logs):
        level = i + 2
        if level <= spec.height and not all(stop >= v for v in values[level - 1]):
            continue
        for t, prefix in scored:
            if t.depth < level:
                continue
            with_stop = float(prefix[-1] + logs[t.depth][-1])
            if not (stop >= prefix[-1] and stop >= with_stop):
                t2_ok = False
                counterexample = counterexample or Counterexample(
                    2, t.nodes, stop, max(prefix[-1], with_stop),
                    f"deeper sequence beats dominant stop at level {level}",
                )
                break

    t3_ok = True
    greedy = downpour(posteriors, masks)
    exhaustive = brute_force_map(posteriors, masks, spec)
    if (
        abs(greedy.log_score - exhaustive.log_score) > 1e-12
        or greedy.trace != exhaustive.trace
    ):
        t3_ok = False
        counterexample = counterexample or Counterexample(
            3, greedy.trace.nodes, greedy.log_score, exhaustive.log_score,
            f"oracle picked {exhaustive.trace.nodes}",
        )

    return TheoremReport(
        instance=descriptor,
        theorem1_ok=t1_ok,
        theorem2_ok=t2_ok,
        theorem3_ok=t3_ok,
        counterexample=counterexample,
    )


def posteriors_from_text(text: str, spec: HierarchySpec) -> LevelPosteriors:
    """Parse a posteriors file: one line per level ``1 .. height + 1``,
    space-separated decimals, stop entry last.

    Each level must sum to 1 within 1e-6 and is then renormalized
    exactly.  Raises PosteriorsError with the offending line number.
    """
    rows: list[tuple[int, list[float]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append((lineno, [float(v) for v in line.split()]))
        except ValueError:
            raise PosteriorsError(f"line {lineno}: bad decimal value") from None
    if len(rows) != spec.height + 1:
        raise PosteriorsError(
            f"expected {spec.height + 1} posterior lines, got {len(rows)}"
        )
    levels = []
    for l, (lineno, values) in enumerate(rows, start=1):
        expected = (
            spec.level_sizes[0]
            if l == 1
            else 1
            if l == spec.height + 1
            else spec.level_sizes[l - 1] + 1
        )
        if len(values) != expected:
            raise PosteriorsError(
                f"line {lineno}: expected {expected} entries for level {l}, "
                f"got {len(values)}"
            )
        y = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise PosteriorsError(f"line {lineno}: entries must be finite and >= 0")
        if abs(y.sum() - 1.0) > 1e-6:
            raise PosteriorsError(
                f"line {lineno}: level {l} sums to {float(y.sum())!r}, not 1"
            )
        levels.append(y / y.sum())
    return LevelPosteriors(levels=tuple(levels))


def random_spec(
    rng: np.random.Generator, max_height: int = 4, max_width: int = 6
) -> HierarchySpec:
    """A random tree or DAG hierarchy with small levels."""
    height = int(rng.integers(1, max_height + 1))
    sizes = [int(rng.integers(1, max_width + 1)) for _ in range(height)]
    kind = Kind.TREE if rng.random() < 0.5 else Kind.DAG
    edges = []
    for l in range(2, height + 1):
        for c in range(sizes[l - 1]):
            if kind is Kind.TREE:
                parents = [int(rng.integers(0, sizes[l - 2]))]
            else:
                parents = [p for p in range(sizes[l - 2]) if rng.random() < 0.5]
                if not parents:
                    parents = [int(rng.integers(0, sizes[l - 2]))]
            edges.extend((l, p, c) for p in parents)
    return HierarchySpec(
        height=height, level_sizes=tuple(sizes), edges=tuple(edges), kind=kind
    )


def random_posteriors(
    rng: np.random.Generator, spec: HierarchySpec
) -> LevelPosteriors:
    """Dirichlet-random posteriors for every level of ``spec``."""
    levels = []
    for l in range(1, spec.height + 1):
        size = spec.level_sizes[l - 1] + (0 if l == 1 else 1)
        y = rng.dirichlet(np.ones(size))
        levels.append(y / y.sum())
    levels.append(np.ones(1))
    return LevelPosteriors(levels=tuple(levels))


def random_instance(
    seed_key, max_height: int = 4, max_width: int = 6
) -> tuple[HierarchySpec, list[LevelMask], LevelPosteriors]:
    """Seeded random (spec, masks, posteriors) triple for verification."""
    rng = np.random.default_rng(seed_key)
    spec = random_spec(rng, max_height=max_height, max_width=max_width)
    return spec, build_masks(spec), random_posteriors(rng, spec)
