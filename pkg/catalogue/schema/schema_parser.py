import fnmatch
import re
from enum import Enum, auto
from typing import Iterable, NamedTuple, Optional, Sequence, Dict, Tuple

from util.errors import ConfigError, DataError
from util.text_io import read_text_from_file


class RoleCmd(Enum):
    FEATURE = auto()
    TARGET = auto()
    ID = auto()
    METADATA = auto()
    EOF = auto()


class Schema(NamedTuple):
    """column role map; feature entries may be glob patterns until resolved against a header"""
    features: Tuple[str, ...]
    target: str
    metadata: Dict[str, str]  # metadata name -> column
    id_column: Optional[str] = None


_whitespace_pattern = re.compile(r'\s+')
_metadata_role_pattern = re.compile(r'metadata:([A-Za-z_][A-Za-z0-9_]*)')


def _parse_schema_cmd(line: str, line_number: int):
    line = line.split('#', 1)[0].strip()
    if not line:
        return None
    parts = _whitespace_pattern.split(line)
    if len(parts) != 2:
        raise ConfigError(f'schema line {line_number}: expected "<column> <role>", got "{line}"')
    column, role = parts
    if role == 'feature':
        return RoleCmd.FEATURE, column
    if role == 'target':
        return RoleCmd.TARGET, column
    if role == 'id':
        return RoleCmd.ID, column
    m = _metadata_role_pattern.fullmatch(role)
    if m:
        return RoleCmd.METADATA, column, m.group(1)
    raise ConfigError(f'schema line {line_number}: unknown role "{role}"')


def parse_schema_str(content: str) -> Iterable[tuple]:
    for line_number, line in enumerate(content.splitlines(), start=1):
        cmd = _parse_schema_cmd(line, line_number)
        if cmd:
            yield cmd
    yield RoleCmd.EOF, None


def schema_from_cmds(cmds: Iterable[tuple]) -> Schema:
    features = []
    target = None
    id_column = None
    metadata = {}
    for cmd, *args in cmds:
        if cmd == RoleCmd.FEATURE:
            features.append(args[0])
        elif cmd == RoleCmd.TARGET:
            if target is not None:
                raise ConfigError(f'schema names two target columns: "{target}" and "{args[0]}"')
            target = args[0]
        elif cmd == RoleCmd.ID:
            id_column = args[0]
        elif cmd == RoleCmd.METADATA:
            column, name = args
            if name in metadata:
                raise ConfigError(f'schema maps metadata "{name}" twice')
            metadata[name] = column
        elif cmd == RoleCmd.EOF:
            break
        else:
            raise NotImplementedError
    if target is None:
        raise ConfigError('schema names no target column')
    if not features:
        raise ConfigError('schema names no feature column')
    return Schema(features=tuple(features), target=target, metadata=metadata, id_column=id_column)


def read_schema_from_file(in_path: str) -> Schema:
    return schema_from_cmds(parse_schema_str(read_text_from_file(in_path)))


def resolve_feature_columns(schema: Schema, header: Sequence[str]) -> Tuple[str, ...]:
    """expand glob entries against the header, keeping header order inside each pattern"""
    resolved = []
    claimed = {schema.target, schema.id_column, *schema.metadata.values()}
    for pattern in schema.features:
        if any(c in pattern for c in '*?['):
            matches = [h for h in header if fnmatch.fnmatchcase(h, pattern) and h not in claimed]
            if not matches:
                raise DataError(f'feature pattern "{pattern}" matches no column')
            resolved.extend(m for m in matches if m not in resolved)
        else:
            if pattern not in header:
                raise DataError(f'missing feature column "{pattern}"')
            if pattern not in resolved:
                resolved.append(pattern)
    return tuple(resolved)


def format_schema(schema: Schema) -> str:
    lines = [f'{c} feature' for c in schema.features]
    lines.append(f'{schema.target} target')
    if schema.id_column:
        lines.append(f'{schema.id_column} id')
    lines.extend(f'{column} metadata:{name}' for name, column in schema.metadata.items())
    return '\n'.join(lines) + '\n'
