import logging
from os import path
from typing import NamedTuple, Dict, Tuple, Sequence

import numpy as np
import pandas as pd

from catalogue.schema.schema_parser import Schema, read_schema_from_file, resolve_feature_columns, format_schema
from util.constants import FEATURE_WIDTH
from util.errors import DataError
from util.text_io import read_csv_cells, write_csv_table

logger = logging.getLogger(__name__)

ID_COLUMN = 'id'


class Dataset(NamedTuple):
    features: np.ndarray  # (n_samples, n_features)
    targets: np.ndarray  # (n_samples,)
    metadata: Dict[str, np.ndarray]
    ids: np.ndarray
    feature_names: Tuple[str, ...] = ()
    target_name: str = 'target'

    @property
    def n_samples(self) -> int:
        return self.targets.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


class LoadResult(NamedTuple):
    dataset: Dataset
    dropped_rows: int


def make_dataset(features, targets, metadata=None, ids=None, feature_names=None, target_name='target') -> Dataset:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    n = targets.shape[0]
    if features.shape[0] != n:
        raise DataError(f'features have {features.shape[0]} rows but targets have {n}')
    metadata = {k: np.asarray(v, dtype=np.float64).reshape(-1) for k, v in (metadata or {}).items()}
    for name, column in metadata.items():
        if column.shape[0] != n:
            raise DataError(f'metadata "{name}" has {column.shape[0]} rows, expected {n}')
    if ids is None:
        ids = np.array([str(i) for i in range(n)], dtype=object)
    else:
        ids = np.asarray(ids, dtype=object)
        if ids.shape[0] != n:
            raise DataError(f'ids have {ids.shape[0]} rows, expected {n}')
    if feature_names is None:
        feature_names = tuple(f'f{j}' for j in range(features.shape[1]))
    return Dataset(features=features, targets=targets, metadata=metadata, ids=ids,
                   feature_names=tuple(feature_names), target_name=target_name)


def take(d: Dataset, indices) -> Dataset:
    indices = np.asarray(indices, dtype=np.intp)
    return d._replace(
        features=d.features[indices],
        targets=d.targets[indices],
        metadata={k: v[indices] for k, v in d.metadata.items()},
        ids=d.ids[indices])


def with_features(d: Dataset, features: np.ndarray, feature_names: Sequence[str] = None) -> Dataset:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != d.n_samples:
        raise DataError(f'replacement features have {features.shape[0]} rows, expected {d.n_samples}')
    if feature_names is None:
        feature_names = tuple(f'f{j}' for j in range(features.shape[1]))
    return d._replace(features=features, feature_names=tuple(feature_names))


def truncate_features(d: Dataset, width: int = FEATURE_WIDTH) -> Dataset:
    """keep the first `width` feature columns (pixels)"""
    if d.n_features < width:
        raise DataError(f'cannot truncate {d.n_features} feature columns to {width}')
    return d._replace(features=d.features[:, :width], feature_names=d.feature_names[:width])


def load_schema(in_path: str) -> Schema:
    if not path.exists(in_path):
        raise DataError(f'Path "{in_path}" doesn\'t exist')
    return read_schema_from_file(in_path)


def _parse_numeric_block(body: pd.DataFrame, columns: Sequence[int], header: Sequence[str]) -> np.ndarray:
    cells = body.iloc[:, list(columns)].apply(lambda column: column.str.strip()).replace('', 'nan')
    try:
        return cells.to_numpy(dtype=np.float64).reshape(len(body), len(columns))
    except ValueError:
        pass
    for line_number, row in zip(cells.index, cells.itertuples(index=False)):
        for cell, c in zip(row, columns):
            try:
                float(cell)
            except ValueError:
                raise DataError(f'line {line_number}, column "{header[c]}": cannot parse "{cell}" as a number')
    raise AssertionError('unreachable')


def load_csv(in_path: str, schema: Schema) -> LoadResult:
    if not path.exists(in_path):
        raise DataError(f'Path "{in_path}" doesn\'t exist')
    header, body = read_csv_cells(in_path)
    column_index = {name: i for i, name in enumerate(header)}

    def index_of(column, role):
        if column not in column_index:
            raise DataError(f'missing {role} column "{column}"')
        return column_index[column]

    feature_names = resolve_feature_columns(schema, header)
    feature_columns = [index_of(c, 'feature') for c in feature_names]
    target_column = index_of(schema.target, 'target')
    metadata_columns = {name: index_of(c, f'metadata:{name}') for name, c in schema.metadata.items()}

    features = _parse_numeric_block(body, feature_columns, header)
    targets = _parse_numeric_block(body, [target_column], header)[:, 0]
    metadata = {name: _parse_numeric_block(body, [c], header)[:, 0] for name, c in metadata_columns.items()}
    if schema.id_column:
        ids = body.iloc[:, index_of(schema.id_column, 'id')].to_numpy(dtype=object)
    else:
        ids = np.array([str(i) for i in range(len(body))], dtype=object)

    keep = np.isfinite(targets)
    if features.size:
        keep &= np.all(np.isfinite(features), axis=1)
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        logger.warning('%s: dropped %d of %d rows with non-finite features or target', in_path, dropped, len(body))

    d = Dataset(features=features[keep], targets=targets[keep],
                metadata={k: v[keep] for k, v in metadata.items()}, ids=ids[keep],
                feature_names=feature_names, target_name=schema.target)
    return LoadResult(d, dropped)


def dataset_schema(d: Dataset) -> Schema:
    return Schema(features=d.feature_names, target=d.target_name,
                  metadata={name: name for name in d.metadata}, id_column=ID_COLUMN)


def write_csv(out_path: str, d: Dataset):
    header = [ID_COLUMN, *d.feature_names, d.target_name, *d.metadata.keys()]
    columns = [d.ids.astype(str), *d.features.T, d.targets, *d.metadata.values()]
    write_csv_table(out_path, header, pd.DataFrame(dict(enumerate(columns))))


def write_schema(out_path: str, schema: Schema):
    with open(out_path, mode='w', encoding='utf8') as f:
        f.write(format_schema(schema))
