"""Label hierarchies: leveled nodes, masked connectivity, traces, targets.

A hierarchy is a layered graph with ``height`` levels of named nodes and
edges only between consecutive levels.  A *trace* is a path starting at
level 1 that may stop after any number of levels; termination is modelled
by a stop column appended to every connectivity mask from level 2 onward,
plus a stop-only virtual level ``height + 1`` so full-depth traces
terminate the same way shallow ones do.

Hierarchy file format (UTF-8, line oriented, ``#`` starts a comment):

    levels 2
    kind tree
    nodes 1 A B
    nodes 2 C D
    edge A C
    edge B D

``levels`` must come first.  ``kind`` is ``tree`` (default) or ``dag``.
``nodes`` lists node names for one level and may repeat to append.
``edge`` connects a node to one on the next level; levels are inferred
from the names and must be consecutive.  Names match ``[A-Za-z0-9_.-]+``
and are unique within a level.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

__all__ = [
    "DEFAULT_TRACE_CAP",
    "CapExceededError",
    "HierarchyError",
    "HierarchySpec",
    "InvalidTraceError",
    "Kind",
    "LevelMask",
    "LevelTargets",
    "Trace",
    "build_masks",
    "canonical_hash",
    "complete_tree",
    "count_traces",
    "dense_spec",
    "encode_targets",
    "enumerate_traces",
    "flat_id_to_trace",
    "format_hierarchy",
    "format_trace",
    "parse_hierarchy",
    "parse_trace",
    "trace_to_flat_id",
    "validate_trace",
]

DEFAULT_TRACE_CAP = 10**6

_NAME_RE = re.compile(r"[A-Za-z0-9_.-]+\Z")


class HierarchyError(ValueError):
    """Structurally invalid hierarchy or malformed hierarchy file."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class InvalidTraceError(ValueError):
    """A trace that does not denote a path in the hierarchy."""


class CapExceededError(RuntimeError):
    """An enumeration would exceed the configured trace cap."""


class Kind(Enum):
    TREE = "tree"
    DAG = "dag"


@dataclass(frozen=True)
class Trace:
    """A root-to-termination path: one real node index per level, the
    implicit stop following the last node.
    """

    nodes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        if not self.nodes:
            raise InvalidTraceError("a trace holds at least one node")

    @property
    def depth(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class HierarchySpec:
    """A validated label hierarchy.

    ``level_sizes`` counts real nodes per level (stop neurons excluded).
    ``edges`` holds ``(level, parent, child)`` triples where ``level`` is
    the child's level and indices are 0-based within their levels.  Node
    names default to ``n<level>_<index+1>`` when not supplied.

    Instances are immutable after construction and safe to share across
    threads.
    """

    height: int
    level_sizes: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...] = ()
    kind: Kind = Kind.TREE
    node_names: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        height = int(self.height)
        sizes = tuple(int(s) for s in self.level_sizes)
        edges = tuple(sorted((int(l), int(p), int(c)) for (l, p, c) in self.edges))
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "level_sizes", sizes)
        object.__setattr__(self, "edges", edges)

        if height < 1:
            raise HierarchyError("height must be >= 1")
        if len(sizes) != height:
            raise HierarchyError(
                f"expected {height} level sizes, got {len(sizes)}"
            )
        if any(s < 1 for s in sizes):
            raise HierarchyError("every level holds at least one node")

        if self.node_names is None:
            names = tuple(
                tuple(f"n{l}_{i + 1}" for i in range(sizes[l - 1]))
                for l in range(1, height + 1)
            )
        else:
            names = tuple(tuple(str(n) for n in level) for level in self.node_names)
        object.__setattr__(self, "node_names", names)

        if len(names) != height:
            raise HierarchyError("node_names must cover every level")
        for l, level_names in enumerate(names, start=1):
            if len(level_names) != sizes[l - 1]:
                raise HierarchyError(f"level {l}: name count != level size")
            seen: set[str] = set()
            for n in level_names:
                if not _NAME_RE.match(n):
                    raise HierarchyError(f"invalid node name {n!r}")
                if n in seen:
                    raise HierarchyError(f"duplicate name {n!r} within level {l}")
                seen.add(n)

        for i, (l, p, c) in enumerate(edges):
            if not 2 <= l <= height:
                raise HierarchyError(f"edge level {l} outside [2..{height}]")
            if not 0 <= p < sizes[l - 2]:
                raise HierarchyError(f"edge parent index {p} out of range at level {l - 1}")
            if not 0 <= c < sizes[l - 1]:
                raise HierarchyError(f"edge child index {c} out of range at level {l}")
            if i > 0 and edges[i - 1] == (l, p, c):
                raise HierarchyError(f"duplicate edge at level {l}: {p} -> {c}")

        indegree = [[0] * sizes[l - 1] for l in range(1, height + 1)]
        children: list[list[list[int]]] = [
            [[] for _ in range(sizes[l - 1])] for l in range(1, height + 1)
        ]
        for l, p, c in edges:
            indegree[l - 1][c] += 1
            children[l - 2][p].append(c)
        for l in range(2, height + 1):
            for c, deg in enumerate(indegree[l - 1]):
                if deg == 0:
                    raise HierarchyError(
                        f"node {names[l - 1][c]!r} at level {l} has no parent"
                    )
                if self.kind is Kind.TREE and deg > 1:
                    raise HierarchyError(
                        f"node {names[l - 1][c]!r} at level {l} has {deg} parents "
                        "but kind is tree"
                    )

        object.__setattr__(self, "_edge_set", frozenset(edges))
        object.__setattr__(
            self,
            "_children",
            tuple(tuple(tuple(cs) for cs in level) for level in children),
        )
        object.__setattr__(
            self,
            "_name_index",
            tuple({n: i for i, n in enumerate(level)} for level in names),
        )

    def name(self, level: int, index: int) -> str:
        return self.node_names[level - 1][index]

    def index(self, level: int, name: str) -> int | None:
        """Index of ``name`` at ``level``, or None when absent."""
        return self._name_index[level - 1].get(name)

    def children(self, level: int, parent: int) -> tuple[int, ...]:
        """Child indices at ``level + 1`` of ``parent`` at ``level``."""
        return self._children[level - 1][parent]

    def has_edge(self, level: int, parent: int, child: int) -> bool:
        return (level, parent, child) in self._edge_set


@dataclass(frozen=True, eq=False)
class LevelMask:
    """Binary parent-by-child connectivity for one level transition.

    Rows are the real nodes of level ``level - 1``.  For ``level <= height``
    the columns are the real nodes of ``level`` followed by one stop column;
    the mask for the virtual level ``height + 1`` is a single stop column.
    The stop column is all ones: any node may terminate a trace.
    """

    level: int
    matrix: np.ndarray

    @property
    def real_columns(self) -> int:
        return self.matrix.shape[1] - 1


def build_masks(spec: HierarchySpec) -> list[LevelMask]:
    """Connectivity masks for levels ``2 .. height + 1``."""
    masks = []
    for l in range(2, spec.height + 1):
        m = np.zeros((spec.level_sizes[l - 2], spec.level_sizes[l - 1] + 1))
        for p in range(spec.level_sizes[l - 2]):
            for c in spec.children(l - 1, p):
                m[p, c] = 1.0
        m[:, -1] = 1.0
        m.flags.writeable = False
        masks.append(LevelMask(level=l, matrix=m))
    stop = np.ones((spec.level_sizes[-1], 1))
    stop.flags.writeable = False
    masks.append(LevelMask(level=spec.height + 1, matrix=stop))
    return masks


def validate_trace(trace: Trace, spec: HierarchySpec) -> None:
    """Raise InvalidTraceError unless ``trace`` is a path in ``spec``."""
    if not 1 <= trace.depth <= spec.height:
        raise InvalidTraceError(
            f"trace depth {trace.depth} outside [1..{spec.height}]"
        )
    for l, node in enumerate(trace.nodes, start=1):
        if not 0 <= node < spec.level_sizes[l - 1]:
            raise InvalidTraceError(f"node index {node} out of range at level {l}")
    for l in range(2, trace.depth + 1):
        p, c = trace.nodes[l - 2], trace.nodes[l - 1]
        if not spec.has_edge(l, p, c):
            raise InvalidTraceError(
                f"no edge {spec.name(l - 1, p)} -> {spec.name(l, c)} at level {l}"
            )


def count_traces(spec: HierarchySpec) -> int:
    """Number of valid traces, computed without enumerating them."""
    counts = [1] * spec.level_sizes[0]
    total = len(counts)
    for l in range(2, spec.height + 1):
        nxt = [0] * spec.level_sizes[l - 1]
        for p, cnt in enumerate(counts):
            for c in spec.children(l - 1, p):
                nxt[c] += cnt
        counts = nxt
        total += sum(counts)
    return total


@lru_cache(maxsize=64)
def _sorted_traces(spec: HierarchySpec) -> tuple[Trace, ...]:
    paths: list[tuple[int, ...]] = []

    def walk(level: int, prefix: tuple[int, ...]) -> None:
        paths.append(prefix)
        if level == spec.height:
            return
        for c in spec.children(level, prefix[-1]):
            walk(level + 1, prefix + (c,))

    for start in range(spec.level_sizes[0]):
        walk(1, (start,))
    paths.sort(key=lambda p: (len(p), p))
    return tuple(Trace(p) for p in paths)


def enumerate_traces(
    spec: HierarchySpec, cap: int = DEFAULT_TRACE_CAP
) -> list[Trace]:
    """All valid traces, sorted by (depth, node indices).

    Raises CapExceededError when the trace count exceeds ``cap``.
    """
    total = count_traces(spec)
    if total > cap:
        raise CapExceededError(f"{total} traces exceed cap {cap}")
    return list(_sorted_traces(spec))


@lru_cache(maxsize=64)
def _trace_index(spec: HierarchySpec) -> dict[tuple[int, ...], int]:
    return {t.nodes: i for i, t in enumerate(_sorted_traces(spec))}


def trace_to_flat_id(
    trace: Trace, spec: HierarchySpec, cap: int = DEFAULT_TRACE_CAP
) -> int:
    """Position of ``trace`` in the sorted enumeration."""
    validate_trace(trace, spec)
    total = count_traces(spec)
    if total > cap:
        raise CapExceededError(f"{total} traces exceed cap {cap}")
    return _trace_index(spec)[trace.nodes]


def flat_id_to_trace(
    flat_id: int, spec: HierarchySpec, cap: int = DEFAULT_TRACE_CAP
) -> Trace:
    """Inverse of trace_to_flat_id."""
    total = count_traces(spec)
    if total > cap:
        raise CapExceededError(f"{total} traces exceed cap {cap}")
    traces = _sorted_traces(spec)
    if not 0 <= flat_id < len(traces):
        raise IndexError(f"flat id {flat_id} outside [0..{len(traces)})")
    return traces[flat_id]


@dataclass(frozen=True, eq=False)
class LevelTargets:
    """One-hot training targets, one vector per level ``1 .. height + 1``.

    Level 1 has no stop entry.  Levels up to the trace depth select the
    trace node; every deeper level selects its stop entry (the last one),
    so the stop keeps being the target beyond the trace's end.
    """

    vectors: tuple[np.ndarray, ...]


def encode_targets(trace: Trace, spec: HierarchySpec) -> LevelTargets:
    validate_trace(trace, spec)
    vectors = []
    for l in range(1, spec.height + 2):
        if l == 1:
            v = np.zeros(spec.level_sizes[0])
        elif l <= spec.height:
            v = np.zeros(spec.level_sizes[l - 1] + 1)
        else:
            v = np.zeros(1)
        if l <= trace.depth:
            v[trace.nodes[l - 1]] = 1.0
        else:
            v[-1] = 1.0
        v.flags.writeable = False
        vectors.append(v)
    return LevelTargets(vectors=tuple(vectors))


def format_trace(trace: Trace, spec: HierarchySpec) -> str:
    """Render a trace as slash-separated node names, e.g. ``A/C``."""
    return "/".join(spec.name(l + 1, n) for l, n in enumerate(trace.nodes))


def parse_trace(text: str, spec: HierarchySpec) -> Trace:
    """Parse slash-separated node names into a validated Trace."""
    parts = text.strip().split("/")
    if not parts or parts == [""]:
        raise InvalidTraceError("empty trace")
    if len(parts) > spec.height:
        raise InvalidTraceError(f"trace deeper than hierarchy: {text!r}")
    nodes = []
    for l, name in enumerate(parts, start=1):
        idx = spec.index(l, name)
        if idx is None:
            raise InvalidTraceError(f"unknown node name {name!r} at level {l}")
        nodes.append(idx)
    trace = Trace(tuple(nodes))
    validate_trace(trace, spec)
    return trace


def format_hierarchy(spec: HierarchySpec) -> str:
    """Canonical hierarchy file text; parse(format(s)) == s."""
    lines = [f"levels {spec.height}", f"kind {spec.kind.value}"]
    for l in range(1, spec.height + 1):
        lines.append(f"nodes {l} " + " ".join(spec.node_names[l - 1]))
    for l, p, c in spec.edges:
        lines.append(f"edge {spec.name(l - 1, p)} {spec.name(l, c)}")
    return "\n".join(lines) + "\n"


def canonical_hash(spec: HierarchySpec) -> str:
    """SHA-256 of the canonical file form; stable identity for checkpoints."""
    return hashlib.sha256(format_hierarchy(spec).encode()).hexdigest()


def dense_spec(width: int, height: int) -> HierarchySpec:
    """Fully connected hierarchy: ``width`` nodes per level, every node at
    level l linked to every node at level l+1 (kind dag for height > 1)."""
    edges = tuple(
        (l, p, c)
        for l in range(2, height + 1)
        for p in range(width)
        for c in range(width)
    )
    kind = Kind.TREE if height == 1 or width == 1 else Kind.DAG
    return HierarchySpec(
        height=height, level_sizes=(width,) * height, edges=edges, kind=kind
    )


def complete_tree(branching: int, height: int) -> HierarchySpec:
    """Complete tree: level l holds ``branching ** l`` nodes, each parent
    fanning out to ``branching`` children."""
    sizes = tuple(branching**l for l in range(1, height + 1))
    edges = tuple(
        (l, c // branching, c)
        for l in range(2, height + 1)
        for c in range(sizes[l - 1])
    )
    return HierarchySpec(
        height=height, level_sizes=sizes, edges=edges, kind=Kind.TREE
    )


def parse_hierarchy(text: str) -> HierarchySpec:
    """Parse hierarchy file contents into a validated HierarchySpec."""
    height: int | None = None
    kind: Kind | None = None
    names: list[list[str]] = []
    name_levels: dict[str, list[int]] = {}
    edges: list[tuple[int, int, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        directive, args = tokens[0], tokens[1:]

        if directive == "levels":
            if height is not None:
                raise HierarchyError("duplicate levels directive", lineno)
            if len(args) != 1 or not args[0].isdigit() or int(args[0]) < 1:
                raise HierarchyError("usage: levels <h> with h >= 1", lineno)
            height = int(args[0])
            names = [[] for _ in range(height)]
            continue
        if height is None:
            raise HierarchyError("levels must be declared first", lineno)

        if directive == "kind":
            if kind is not None:
                raise HierarchyError("duplicate kind directive", lineno)
            if len(args) != 1 or args[0] not in ("tree", "dag"):
                raise HierarchyError("usage: kind tree|dag", lineno)
            kind = Kind(args[0])
        elif directive == "nodes":
            if len(args) < 2 or not args[0].isdigit():
                raise HierarchyError("usage: nodes <level> <name>...", lineno)
            level = int(args[0])
            if not 1 <= level <= height:
                raise HierarchyError(f"level {level} outside [1..{height}]", lineno)
            for n in args[1:]:
                if not _NAME_RE.match(n):
                    raise HierarchyError(f"invalid node name {n!r}", lineno)
                if n in names[level - 1]:
                    raise HierarchyError(
                        f"duplicate name {n!r} within level {level}", lineno
                    )
                names[level - 1].append(n)
                name_levels.setdefault(n, []).append(level)
        elif directive == "edge":
            if len(args) != 2:
                raise HierarchyError("usage: edge <parent-name> <child-name>", lineno)
            pname, cname = args
            if pname not in name_levels:
                raise HierarchyError(f"unknown node name {pname!r}", lineno)
            if cname not in name_levels:
                raise HierarchyError(f"unknown node name {cname!r}", lineno)
            placements = [
                (pl, pl + 1)
                for pl in name_levels[pname]
                if pl + 1 in name_levels[cname]
            ]
            if not placements:
                raise HierarchyError(
                    f"edge {pname} -> {cname} does not connect consecutive levels",
                    lineno,
                )
            if len(placements) > 1:
                raise HierarchyError(
                    f"edge {pname} -> {cname} is ambiguous across levels", lineno
                )
            pl, cl = placements[0]
            p = names[pl - 1].index(pname)
            c = names[cl - 1].index(cname)
            if (cl, p, c) in edges:
                raise HierarchyError(f"duplicate edge {pname} -> {cname}", lineno)
            edges.append((cl, p, c))
        else:
            raise HierarchyError(f"unknown directive {directive!r}", lineno)

    if height is None:
        raise HierarchyError("missing levels directive")
    for l, level_names in enumerate(names, start=1):
        if not level_names:
            raise HierarchyError(f"level {l} declares no nodes")
    return HierarchySpec(
        height=height,
        level_sizes=tuple(len(lvl) for lvl in names),
        edges=tuple(edges),
        kind=kind or Kind.TREE,
        node_names=tuple(tuple(lvl) for lvl in names),
    )
