import json
import zipfile

import numpy as np
import pandas as pd

from feature_net.feature_net import MLPModel, MLPConfig, TrainTrace
from util.errors import DataError
from util.text_io import write_csv_table

_FORMAT = 'mlp-checkpoint/1'


def save_checkpoint(out_path: str, model: MLPModel):
    """single .npz: config json, step, and every tensor with its declared shape (row-major)"""
    config = model.config._asdict()
    config['layer_widths'] = list(config['layer_widths'])
    arrays = {
        'format': np.array(_FORMAT),
        'config': np.array(json.dumps(config, sort_keys=True)),
        'step': np.array(model.step, dtype=np.int64),
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f'weight_{i}'] = np.ascontiguousarray(w)
        arrays[f'bias_{i}'] = np.ascontiguousarray(b)
    for i, (m, v) in enumerate(zip(model.first_moment, model.second_moment)):
        arrays[f'first_moment_{i}'] = np.ascontiguousarray(m)
        arrays[f'second_moment_{i}'] = np.ascontiguousarray(v)
    with open(out_path, mode='wb') as f:
        np.savez(f, **arrays)


def load_checkpoint(in_path: str) -> MLPModel:
    try:
        archive = np.load(in_path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise DataError(f'"{in_path}" is not a readable checkpoint ({e})') from e
    if not isinstance(archive, np.lib.npyio.NpzFile):
        raise DataError(f'"{in_path}" is not an MLP checkpoint')
    with archive as data:
        if 'format' not in data or str(data['format']) != _FORMAT:
            raise DataError(f'"{in_path}" is not an MLP checkpoint')
        config = json.loads(str(data['config']))
        config['layer_widths'] = tuple(config['layer_widths'])
        config = MLPConfig(**config)
        layers = len(config.layer_widths) - 1
        weights = tuple(data[f'weight_{i}'] for i in range(layers))
        biases = tuple(data[f'bias_{i}'] for i in range(layers))
        first = tuple(data[f'first_moment_{i}'] for i in range(2 * layers))
        second = tuple(data[f'second_moment_{i}'] for i in range(2 * layers))
        step = int(data['step'])
    for i, w in enumerate(weights):
        expected = (config.layer_widths[i], config.layer_widths[i + 1])
        if w.shape != expected:
            raise DataError(f'checkpoint weight_{i} has shape {w.shape}, expected {expected}')
    return MLPModel(weights, biases, first, second, step, config)


def write_trace_csv(out_path: str, trace: TrainTrace):
    epochs = np.arange(1, len(trace.train_loss) + 1)
    frame = pd.DataFrame({0: epochs, 1: np.asarray(trace.train_loss, dtype=np.float64),
                          2: np.asarray(trace.val_loss, dtype=np.float64)})
    write_csv_table(out_path, ('epoch', 'train_loss', 'val_loss'), frame)
