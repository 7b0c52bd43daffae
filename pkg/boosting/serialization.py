import json
from typing import List

import numpy as np

from boosting.boosting import GBRTModel, BoostingParams, Loss
from boosting.trees import RegressionTree, LEAF
from util.errors import DataError

_FORMAT = 'gbrt-dump/1'


def _preorder(tree: RegressionTree, node: int = 0) -> List[dict]:
    stack = [node]
    nodes = []
    while stack:
        node = stack.pop()
        if tree.feature[node] == LEAF:
            nodes.append({'value': float(tree.value[node])})
        else:
            nodes.append({'feature': int(tree.feature[node]), 'threshold': float(tree.threshold[node])})
            stack.append(int(tree.right[node]))
            stack.append(int(tree.left[node]))
    return nodes


def _from_preorder(nodes: List[dict]) -> RegressionTree:
    feature, threshold, left, right, value = [], [], [], [], []
    position = 0

    def build():
        nonlocal position
        if position >= len(nodes):
            raise DataError('truncated tree dump')
        entry = nodes[position]
        position += 1
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        if 'value' in entry:
            value[node] = float(entry['value'])
            return node
        feature[node] = int(entry['feature'])
        threshold[node] = float(entry['threshold'])
        # children of a node always get larger indices than the node
        left[node] = build()
        right[node] = build()
        return node

    build()
    if position != len(nodes):
        raise DataError('trailing nodes in tree dump')
    return RegressionTree(
        feature=np.array(feature, dtype=np.intp),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.intp),
        right=np.array(right, dtype=np.intp),
        value=np.array(value, dtype=np.float64))


def dump_model(model: GBRTModel) -> dict:
    params = model.params._asdict()
    params['loss'] = Loss(params['loss']).value
    return {
        'format': _FORMAT,
        'params': params,
        'base_value': model.base_value,
        'n_features': model.n_features,
        'trees': [_preorder(tree) for tree in model.trees],
    }


def restore_model(dump: dict) -> GBRTModel:
    if dump.get('format') != _FORMAT:
        raise DataError('not a boosted-tree dump')
    params = dict(dump['params'])
    params['loss'] = Loss(params['loss'])
    return GBRTModel(
        base_value=float(dump['base_value']),
        trees=tuple(_from_preorder(nodes) for nodes in dump['trees']),
        params=BoostingParams(**params),
        n_features=int(dump['n_features']))


def save_model(out_path: str, model: GBRTModel):
    with open(out_path, mode='w', encoding='utf8') as f:
        json.dump(dump_model(model), f)


def load_model(in_path: str) -> GBRTModel:
    with open(in_path, encoding='utf8') as f:
        return restore_model(json.load(f))
