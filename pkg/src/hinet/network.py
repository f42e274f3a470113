"""Masked hierarchical network: shared trunk, per-level masked cascade,
softmax readouts, combined squared-error cost, exact gradients, SGD.

The trunk maps input features to a shared tanh feature layer of width k.
Level 1 reads the trunk; each deeper level reads the previous level's
tanh activation through a mask-frozen weight matrix, so the connection
pattern mirrors the label hierarchy.  Every level's pre-activation feeds
a softmax readout, and the training cost sums the squared errors of all
levels, which lets the per-level errors shape the shared weights below
them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .hierarchy import (
    HierarchySpec,
    LevelMask,
    LevelTargets,
    Trace,
    build_masks,
    encode_targets,
)
from .inference import LevelPosteriors, downpour

__all__ = [
    "ForwardCache",
    "Gradients",
    "ModelParams",
    "TrainConfig",
    "TrainingDivergedError",
    "backward",
    "combined_cost",
    "forward",
    "hinet_param_count",
    "init_params",
    "train",
]


class TrainingDivergedError(RuntimeError):
    """Non-finite loss during training."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")


@dataclass
class ModelParams:
    """Trunk plus cascaded per-level weights.

    ``level_w[l-1]`` maps the previous activation (the trunk for level 1,
    else the previous level's real nodes) to level l's units: its real
    nodes plus one stop unit for 2 <= l <= height, and the single stop
    unit at level height + 1.  Entries at zero-mask positions stay
    exactly 0 through init and every update.
    """

    trunk_w: np.ndarray
    trunk_b: np.ndarray
    level_w: list[np.ndarray]
    level_b: list[np.ndarray]
    masks: list[LevelMask]

    @property
    def d_in(self) -> int:
        return self.trunk_w.shape[0]

    @property
    def k(self) -> int:
        return self.trunk_w.shape[1]

    @property
    def height(self) -> int:
        return len(self.level_w) - 1

    def masked_level_w(self, l: int) -> np.ndarray:
        """Effective weights of level ``l``: masked for l >= 2."""
        w = self.level_w[l - 1]
        if l == 1:
            return w
        return w * self.masks[l - 2].matrix

    def validate(self) -> None:
        h = self.height
        if self.trunk_b.shape != (self.k,):
            raise ValueError("trunk bias shape mismatch")
        prev = self.k
        for l in range(1, h + 2):
            w, b = self.level_w[l - 1], self.level_b[l - 1]
            if l >= 2:
                if w.shape != self.masks[l - 2].matrix.shape:
                    raise ValueError(f"level {l} weight shape mismatch with mask")
                if np.any(w[self.masks[l - 2].matrix == 0.0] != 0.0):
                    raise ValueError(f"level {l} has nonzero masked weights")
            if w.shape[0] != prev:
                raise ValueError(f"level {l} expects {prev} inputs, got {w.shape[0]}")
            if b.shape != (w.shape[1],):
                raise ValueError(f"level {l} bias shape mismatch")
            prev = w.shape[1] - 1 if l >= 2 else w.shape[1]


@dataclass
class Gradients:
    trunk_w: np.ndarray
    trunk_b: np.ndarray
    level_w: list[np.ndarray]
    level_b: list[np.ndarray]


@dataclass(frozen=True, eq=False)
class ForwardCache:
    """Activations from one forward pass, consumed by backward."""

    x: np.ndarray
    trunk: np.ndarray
    pre: tuple[np.ndarray, ...]
    hidden: tuple[np.ndarray, ...]
    outputs: tuple[np.ndarray, ...]


def init_params(
    spec: HierarchySpec, d_in: int, k: int, config: TrainConfig
) -> ModelParams:
    """Seeded uniform fan-in initialization; masked positions zeroed,
    biases zero."""
    if d_in < 1 or k < 1:
        raise ValueError("d_in and k must be >= 1")
    rng = np.random.default_rng(config.seed)
    masks = build_masks(spec)

    def draw(fan_in: int, shape) -> np.ndarray:
        bound = config.init_scale / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape)

    trunk_w = draw(d_in, (d_in, k))
    level_w, level_b = [], []
    prev = k
    for l in range(1, spec.height + 2):
        cur = (
            spec.level_sizes[0]
            if l == 1
            else 1
            if l == spec.height + 1
            else spec.level_sizes[l - 1] + 1
        )
        w = draw(prev, (prev, cur))
        if l >= 2:
            w *= masks[l - 2].matrix
        level_w.append(w)
        level_b.append(np.zeros(cur))
        prev = cur - 1 if l >= 2 else cur
    params = ModelParams(
        trunk_w=trunk_w,
        trunk_b=np.zeros(k),
        level_w=level_w,
        level_b=level_b,
        masks=masks,
    )
    params.validate()
    return params


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _forward_arrays(params: ModelParams, X: np.ndarray):
    trunk = np.tanh(X @ params.trunk_w + params.trunk_b)
    pre, hidden, outputs = [], [], []
    act = trunk
    for l in range(1, params.height + 2):
        z = act @ params.masked_level_w(l) + params.level_b[l - 1]
        h = np.tanh(z)
        pre.append(z)
        hidden.append(h)
        outputs.append(_softmax(z))
        real = z.shape[1] - 1 if l >= 2 else z.shape[1]
        act = h[:, :real]
    return trunk, pre, hidden, outputs


def _softmax_cost_delta(y: np.ndarray, target: np.ndarray) -> np.ndarray:
    # d/dz of sum((target - softmax(z))^2): softmax Jacobian applied to
    # 2*(y - target)
    g = 2.0 * (y - target)
    return y * (g - (y * g).sum(axis=1, keepdims=True))


def _grad_arrays(
    params: ModelParams,
    X: np.ndarray,
    trunk: np.ndarray,
    hidden: list[np.ndarray],
    outputs: list[np.ndarray],
    targets: list[np.ndarray],
) -> Gradients:
    """Gradients of the summed combined cost over the batch."""
    h = params.height
    level_w_g: list[np.ndarray | None] = [None] * (h + 1)
    level_b_g: list[np.ndarray | None] = [None] * (h + 1)

    delta_next: np.ndarray | None = None
    for l in range(h + 1, 0, -1):
        delta = _softmax_cost_delta(outputs[l - 1], targets[l - 1])
        if delta_next is not None:
            real = hidden[l - 1].shape[1] - 1 if l >= 2 else hidden[l - 1].shape[1]
            hid = hidden[l - 1][:, :real]
            upstream = delta_next @ params.masked_level_w(l + 1).T
            delta[:, :real] += upstream * (1.0 - hid * hid)
        inp = trunk if l == 1 else hidden[l - 2][:, : params.level_w[l - 1].shape[0]]
        gw = inp.T @ delta
        if l >= 2:
            gw *= params.masks[l - 2].matrix
        level_w_g[l - 1] = gw
        level_b_g[l - 1] = delta.sum(axis=0)
        delta_next = delta

    d_trunk = (delta_next @ params.masked_level_w(1).T) * (1.0 - trunk * trunk)
    return Gradients(
        trunk_w=X.T @ d_trunk,
        trunk_b=d_trunk.sum(axis=0),
        level_w=[g for g in level_w_g],
        level_b=[g for g in level_b_g],
    )


def forward(params: ModelParams, x: np.ndarray) -> tuple[LevelPosteriors, ForwardCache]:
    """Posterior distributions for every level of one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.d_in,):
        raise ValueError(f"expected input of shape ({params.d_in},), got {x.shape}")
    trunk, pre, hidden, outputs = _forward_arrays(params, x[None, :])
    posteriors = LevelPosteriors(levels=tuple(y[0] for y in outputs))
    cache = ForwardCache(
        x=x,
        trunk=trunk[0],
        pre=tuple(z[0] for z in pre),
        hidden=tuple(hh[0] for hh in hidden),
        outputs=tuple(y[0] for y in outputs),
    )
    return posteriors, cache


def combined_cost(posteriors: LevelPosteriors, targets: LevelTargets) -> float:
    """Sum over levels of the squared distance between target and output."""
    if len(posteriors.levels) != len(targets.vectors):
        raise ValueError("posterior/target level count mismatch")
    total = 0.0
    for y, t in zip(posteriors.levels, targets.vectors):
        if y.shape != t.shape:
            raise ValueError(f"shape mismatch {y.shape} vs {t.shape}")
        d = t - y
        total += float(d @ d)
    return total


def backward(
    params: ModelParams, cache: ForwardCache, targets: LevelTargets
) -> Gradients:
    """Exact gradients of the combined cost for the cached sample.

    Gradients at masked positions are identically 0.
    """
    return _grad_arrays(
        params,
        cache.x[None, :],
        cache.trunk[None, :],
        [hh[None, :] for hh in cache.hidden],
        [y[None, :] for y in cache.outputs],
        [t[None, :] for t in targets.vectors],
    )


def _stack_targets(dataset: Dataset) -> list[np.ndarray]:
    """Per-level target matrices for the whole dataset, encoded once per
    distinct trace."""
    spec = dataset.spec
    cache: dict[tuple[int, ...], LevelTargets] = {}
    per_level: list[list[np.ndarray]] = [[] for _ in range(spec.height + 1)]
    for tr in dataset.labels:
        enc = cache.get(tr.nodes)
        if enc is None:
            enc = encode_targets(tr, spec)
            cache[tr.nodes] = enc
        for l, v in enumerate(enc.vectors):
            per_level[l].append(v)
    return [np.stack(vs) for vs in per_level]


def train(
    params: ModelParams, dataset: Dataset, config: TrainConfig
) -> tuple[ModelParams, list[float]]:
    """Mini-batch SGD on the combined cost; updates ``params`` in place.

    The shuffle sequence is fixed by the config seed, so identical inputs
    reproduce identical parameters and loss history.  The returned
    history holds one mean loss per epoch, accumulated in dataset order.
    """
    n = dataset.features.shape[0]
    targets = _stack_targets(dataset)
    X = dataset.features
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    history = []
    sample_loss = np.zeros(n)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb = X[idx]
            tb = [t[idx] for t in targets]
            trunk, _, hidden, outputs = _forward_arrays(params, xb)
            losses = sum(
                ((t - y) ** 2).sum(axis=1) for y, t in zip(outputs, tb)
            )
            if not np.all(np.isfinite(losses)):
                raise TrainingDivergedError(epoch, b, float(np.sum(losses)))
            sample_loss[idx] = losses
            g = _grad_arrays(params, xb, trunk, hidden, outputs, tb)
            scale = lr / len(idx)
            params.trunk_w -= scale * g.trunk_w
            params.trunk_b -= scale * g.trunk_b
            for l in range(params.height + 1):
                params.level_w[l] -= scale * g.level_w[l]
                params.level_b[l] -= scale * g.level_b[l]
        history.append(float(sample_loss.sum() / n))
    return params, history


def predict_trace(params: ModelParams, x: np.ndarray) -> Trace:
    """Decode the MAP trace for one input via the downpour decoder."""
    posteriors, _ = forward(params, x)
    return downpour(posteriors, params.masks).trace


def hinet_param_count(k: int, n: int, h: int) -> int:
    """Leading-order weight count for a dense hierarchy of uniform width:
    ``k*n`` input connections plus ``h`` level blocks of ``n*n``.

    Exact integer arithmetic; Python integers cannot overflow.  Biases
    and stop columns are excluded.
    """
    if k < 1 or n < 1 or h < 1:
        raise ValueError("k, n, h must all be >= 1")
    return k * n + h * n * n
