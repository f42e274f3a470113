import numpy as np
import pytest

from hinet import LevelPosteriors, build_masks, parse_hierarchy

PAIR_TREE_TEXT = (
    "levels 2\nnodes 1 A B\nnodes 2 C D\nedge A C\nedge B D\n"
)


@pytest.fixture
def pair_tree():
    """Height-2 tree: A -> C, B -> D."""
    return parse_hierarchy(PAIR_TREE_TEXT)


@pytest.fixture
def pair_tree_masks(pair_tree):
    return build_masks(pair_tree)


@pytest.fixture
def worked_posteriors():
    """The running decoder example: best trace is B/D with score ln 0.2."""
    return LevelPosteriors(
        levels=(np.array([0.6, 0.4]), np.array([0.3, 0.5, 0.2]), np.array([1.0]))
    )
