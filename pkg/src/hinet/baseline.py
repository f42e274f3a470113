"""Flatten-network baseline: the same trunk as the hierarchical model,
one softmax over every valid trace treated as an atomic class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .hierarchy import (
    HierarchySpec,
    enumerate_traces,
    trace_to_flat_id,
)
from .network import TrainConfig, TrainingDivergedError, _softmax

__all__ = [
    "FlatParams",
    "flat_forward",
    "flat_train",
    "flatten_param_count",
    "init_flat_params",
]


@dataclass
class FlatParams:
    trunk_w: np.ndarray
    trunk_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    @property
    def d_in(self) -> int:
        return self.trunk_w.shape[0]

    @property
    def k(self) -> int:
        return self.trunk_w.shape[1]

    @property
    def n_classes(self) -> int:
        return self.out_w.shape[1]


def init_flat_params(
    spec: HierarchySpec, d_in: int, k: int, config: TrainConfig
) -> FlatParams:
    """Seeded init mirroring the hierarchical model's trunk; the output
    layer covers all valid traces of every depth."""
    if d_in < 1 or k < 1:
        raise ValueError("d_in and k must be >= 1")
    n_classes = len(enumerate_traces(spec))
    rng = np.random.default_rng(config.seed)
    tb = config.init_scale / np.sqrt(d_in)
    ob = config.init_scale / np.sqrt(k)
    return FlatParams(
        trunk_w=rng.uniform(-tb, tb, (d_in, k)),
        trunk_b=np.zeros(k),
        out_w=rng.uniform(-ob, ob, (k, n_classes)),
        out_b=np.zeros(n_classes),
    )


def _flat_forward_arrays(params: FlatParams, X: np.ndarray):
    trunk = np.tanh(X @ params.trunk_w + params.trunk_b)
    return trunk, _softmax(trunk @ params.out_w + params.out_b)


def flat_forward(params: FlatParams, x: np.ndarray) -> np.ndarray:
    """Probability vector over all trace classes for one input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.d_in,):
        raise ValueError(f"expected input of shape ({params.d_in},), got {x.shape}")
    _, y = _flat_forward_arrays(params, x[None, :])
    return y[0]


def flat_train(
    params: FlatParams, dataset: Dataset, config: TrainConfig
) -> tuple[FlatParams, list[float]]:
    """Mini-batch SGD on squared error against one-hot trace classes.

    Mirrors the hierarchical trainer: seeded shuffle, in-place updates,
    one mean loss per epoch accumulated in dataset order.
    """
    n = len(dataset)
    class_ids = np.array(
        [trace_to_flat_id(t, dataset.spec) for t in dataset.labels]
    )
    onehot = np.zeros((n, params.n_classes))
    onehot[np.arange(n), class_ids] = 1.0
    X = dataset.features
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    history = []
    sample_loss = np.zeros(n)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb, tb = X[idx], onehot[idx]
            trunk, y = _flat_forward_arrays(params, xb)
            losses = ((tb - y) ** 2).sum(axis=1)
            if not np.all(np.isfinite(losses)):
                raise TrainingDivergedError(epoch, b, float(np.sum(losses)))
            sample_loss[idx] = losses
            g = 2.0 * (y - tb)
            delta = y * (g - (y * g).sum(axis=1, keepdims=True))
            d_trunk = (delta @ params.out_w.T) * (1.0 - trunk * trunk)
            scale = lr / len(idx)
            params.out_w -= scale * (trunk.T @ delta)
            params.out_b -= scale * delta.sum(axis=0)
            params.trunk_w -= scale * (xb.T @ d_trunk)
            params.trunk_b -= scale * d_trunk.sum(axis=0)
        history.append(float(sample_loss.sum() / n))
    return params, history


def flatten_param_count(k: int, n: int, h: int) -> int:
    """Leading-order weight count of the flat classifier on a dense
    hierarchy: one ``k x n**h`` block over the leaf-depth classes.

    Exact integer arithmetic; Python integers cannot overflow.  Biases
    are excluded.
    """
    if k < 1 or n < 1 or h < 1:
        raise ValueError("k, n, h must all be >= 1")
    return k * n**h
