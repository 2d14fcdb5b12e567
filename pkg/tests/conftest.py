import numpy as np
import pytest

from feedforest.data import Dataset, SynthSpec, synth_generator
from feedforest.forest import EnsembleModel, IsolationTree, build_forest


def make_tree(feature, threshold, left, right, depth, counts, sample_range,
              created_at=0):
    return IsolationTree(feature, threshold, left, right, depth, counts,
                         np.asarray(sample_range, dtype=float), created_at)


def single_leaf_tree(sample_range):
    return make_tree([-1], [np.nan], [-1], [-1], [0], [1], sample_range)


def stump_1d(split, lo=0.0, hi=1.0):
    """1-d tree with one split: node 0 internal, leaves 1 (left) and 2."""
    return make_tree(feature=[0, -1, -1], threshold=[split, np.nan, np.nan],
                     left=[1, -1, -1], right=[2, -1, -1], depth=[0, 1, 1],
                     counts=[2, 1, 1], sample_range=[[lo, hi]])


def manual_model(trees, w=None, feature_range=None, subsample=256):
    if feature_range is None:
        feature_range = trees[0].sample_range
    return EnsembleModel(trees, w, feature_range, subsample)


@pytest.fixture
def small_dataset():
    return synth_generator(SynthSpec(n=200, anomaly_rate=0.05), seed=7)


@pytest.fixture
def small_model(small_dataset):
    return build_forest(small_dataset, T=10, subsample=64, seed=7)


def traverse_oracle(tree, x):
    """Independent root-to-leaf walk over the stored node arrays."""
    node = 0
    while tree.feature[node] >= 0:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = tree.left[node]
        else:
            node = tree.right[node]
    return node
