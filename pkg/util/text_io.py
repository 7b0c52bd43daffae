import io
from io import BufferedIOBase
from typing import Sequence, Tuple, List

import chardet
import pandas as pd

from util.errors import DataError


def decode_text(content: bytes) -> str:
    try:
        return content.decode('utf-8-sig')
    except UnicodeDecodeError:
        pass
    encoding = chardet.detect(content)['encoding'] or 'latin-1'
    return content.decode(encoding)


def read_text_from_file(in_path: str) -> str:
    with open(in_path, 'rb') as f:
        assert isinstance(f, BufferedIOBase)
        content = f.read()
    return decode_text(content)


def read_csv_cells(in_path: str) -> Tuple[List[str], pd.DataFrame]:
    """header and raw string cells; the frame index is the 1-based file line of each row,
    blank lines are skipped and rows with fewer cells than the header are rejected"""
    try:
        frame = pd.read_csv(io.StringIO(read_text_from_file(in_path)), header=None, dtype=str,
                            keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise DataError(f'"{in_path}" is empty, a header row is mandatory')
    except pd.errors.ParserError as e:
        raise DataError(f'{in_path}: {e}') from e
    frame.index = frame.index + 1
    header = [str(h).strip() for h in frame.iloc[0]]
    body = frame.iloc[1:]
    given = body.notna().sum(axis=1)
    body = body[given > 0]
    short = given[(given > 0) & (given < len(header))]
    if len(short):
        line = short.index[0]
        raise DataError(f'line {line}: {short.iloc[0]} cells, header has {len(header)}')
    return header, body


def write_csv_table(out_path: str, header: Sequence[str], frame: pd.DataFrame):
    """header is written verbatim so repeated column names survive"""
    frame.to_csv(out_path, header=list(header), index=False, lineterminator='\n', na_rep='nan', encoding='utf-8')
