import heapq
from typing import NamedTuple, Callable, Optional, Tuple

import numpy as np

LEAF = -1

# splits must beat this fraction of the node's sum of squared gradients (rounding noise)
_RELATIVE_MIN_GAIN = 1e-10


class RegressionTree(NamedTuple):
    """flat node arrays; node 0 is the root, feature == LEAF marks a leaf.
    samples with x[feature] <= threshold go left"""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def leaf_count(self) -> int:
        return int(np.count_nonzero(self.feature == LEAF))

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.intp)
        for node in range(self.node_count):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())


class _Split(NamedTuple):
    gain: float
    feature: int
    threshold: float


def _best_split(x: np.ndarray, g: np.ndarray) -> Optional[_Split]:
    """variance-reduction split over all features; ties go to the lowest feature, then the lowest threshold"""
    m = g.shape[0]
    if m < 2:
        return None
    total = g.sum()
    node_ss = float(np.sum((g - total / m) ** 2))
    if node_ss <= 0:
        return None
    order = np.argsort(x, axis=0, kind='stable')
    xs = np.take_along_axis(x, order, axis=0)
    gs = g[order]
    left_sum = np.cumsum(gs, axis=0)[:-1]
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    n_right = m - n_left
    gain = left_sum ** 2 / n_left + (total - left_sum) ** 2 / n_right - total ** 2 / m
    gain = np.where(xs[1:] > xs[:-1], gain, -np.inf)
    positions = np.argmax(gain, axis=0)
    best_gains = gain[positions, np.arange(x.shape[1])]
    feature = int(np.argmax(best_gains))
    best_gain = float(best_gains[feature])
    if not best_gain > _RELATIVE_MIN_GAIN * node_ss:
        return None
    pos = positions[feature]
    lo, hi = xs[pos, feature], xs[pos + 1, feature]
    threshold = lo + (hi - lo) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return _Split(best_gain, feature, float(threshold))


def grow_tree(x: np.ndarray,
              gradient: np.ndarray,
              leaf_value: Callable[[np.ndarray], float],
              max_depth: Optional[int],
              max_leaf_nodes: Optional[int]) -> Tuple[RegressionTree, np.ndarray]:
    """best-first growth on `gradient`; the largest gain is split until either bound binds.
    leaf_value maps a leaf's sample indices to its output.
    returns the tree and the leaf node of every training sample"""
    n = x.shape[0]
    feature, threshold, left, right = [LEAF], [0.0], [LEAF], [LEAF]
    members = {0: np.arange(n)}
    depth = {0: 0}
    heap = []
    counter = 0

    def consider(node):
        nonlocal counter
        if max_depth is not None and depth[node] >= max_depth:
            return
        idx = members[node]
        s = _best_split(x[idx], gradient[idx])
        if s is not None:
            heapq.heappush(heap, (-s.gain, counter, node, s))
            counter += 1

    consider(0)
    leaves = 1
    while heap and (max_leaf_nodes is None or leaves < max_leaf_nodes):
        _, _, node, s = heapq.heappop(heap)
        idx = members.pop(node)
        goes_left = x[idx, s.feature] <= s.threshold
        children = []
        for child_idx in (idx[goes_left], idx[~goes_left]):
            child = len(feature)
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            members[child] = child_idx
            depth[child] = depth[node] + 1
            children.append(child)
        feature[node] = s.feature
        threshold[node] = s.threshold
        left[node], right[node] = children
        leaves += 1
        for child in children:
            consider(child)

    value = np.zeros(len(feature))
    leaf_of_sample = np.empty(n, dtype=np.intp)
    for node, idx in members.items():
        value[node] = leaf_value(idx)
        leaf_of_sample[idx] = node
    tree = RegressionTree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        value=value)
    return tree, leaf_of_sample


def apply_tree(tree: RegressionTree, x: np.ndarray) -> np.ndarray:
    """leaf node reached by every row"""
    node = np.zeros(x.shape[0], dtype=np.intp)
    active = tree.feature[node] != LEAF
    while np.any(active):
        rows = np.flatnonzero(active)
        current = node[rows]
        goes_left = x[rows, tree.feature[current]] <= tree.threshold[current]
        node[rows] = np.where(goes_left, tree.left[current], tree.right[current])
        active[rows] = tree.feature[node[rows]] != LEAF
    return node


def predict_tree(tree: RegressionTree, x: np.ndarray) -> np.ndarray:
    return tree.value[apply_tree(tree, x)]
