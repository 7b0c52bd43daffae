import json
import os
from typing import NamedTuple, Tuple, Optional, Any, Mapping

from boosting import BoostingParams, Loss, SearchSpace, validate_params, validate_space
from catalogue import QualityCutSpec
from catalogue.quality_cuts import validate_cut_spec
from feature_net import MLPConfig, validate_mlp_config
from interval_metrics import validate_alpha_grid
from intervals import IntervalConfig, Method, Aggregation, validate_interval_config
from util.constants import SPLIT_FRACTIONS, DEFAULT_ALPHA, DEFAULT_ALPHA_GRID, OUTPUT_ROOT_ENV, FEATURE_WIDTH
from util.errors import ConfigError
from util.text_io import read_text_from_file


class SearchConfig(NamedTuple):
    space: SearchSpace = SearchSpace()
    iters: int = 100
    folds: int = 10
    seed: int = 0


class FeatureStage(NamedTuple):
    kind: str = 'passthrough'  # or 'mlp'
    truncate: Optional[int] = None
    mlp: MLPConfig = MLPConfig()
    checkpoint: Optional[str] = None  # load instead of training


class RunConfig(NamedTuple):
    dataset: str
    schema: str
    output_dir: str
    methods: Tuple[IntervalConfig, ...]
    seed: int = 0
    split_fractions: Tuple[float, ...] = SPLIT_FRACTIONS
    split_seed: int = 0
    quality_cuts: Optional[QualityCutSpec] = None
    features: FeatureStage = FeatureStage()
    regressor: BoostingParams = BoostingParams()
    search: Optional[SearchConfig] = None
    cv_folds: int = 10  # cv_scores.csv, 0 skips it
    alpha: float = DEFAULT_ALPHA
    alpha_grid: Tuple[float, ...] = DEFAULT_ALPHA_GRID
    refit_cqr_per_alpha: bool = False
    width_properties: Tuple[str, ...] = ()
    reference_error: Optional[str] = None
    threads: int = 1


_FIELDS = set(RunConfig._fields) | {'split', 'output_dir'}


class _Reader:
    """typed field access on a JSON object, every failure names its dotted path"""

    def __init__(self, obj, path: str):
        if not isinstance(obj, dict):
            raise ConfigError(f'{path or "config"}: expected an object, got {type(obj).__name__}')
        self.obj = obj
        self.path = path

    def sub(self, key: str) -> str:
        return f'{self.path}.{key}' if self.path else key

    def check_keys(self, allowed):
        unknown = sorted(set(self.obj) - set(allowed))
        if unknown:
            raise ConfigError(f'{self.sub(unknown[0])}: unknown field')

    def get(self, key, kind, default=None, required=False):
        if key not in self.obj:
            if required:
                raise ConfigError(f'{self.sub(key)}: required field missing')
            return default
        return _typed(self.obj[key], kind, self.sub(key))


def _typed(value, kind, path: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f'{path}: expected a number, got {value!r}')
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f'{path}: expected an integer, got {value!r}')
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f'{path}: expected true or false, got {value!r}')
        return value
    if kind is str:
        if not isinstance(value, str) or not value:
            raise ConfigError(f'{path}: expected a non-empty string, got {value!r}')
        return value
    if isinstance(kind, tuple):
        item_kind, = kind
        if not isinstance(value, list):
            raise ConfigError(f'{path}: expected a list, got {value!r}')
        return tuple(_typed(v, item_kind, f'{path}[{i}]') for i, v in enumerate(value))
    raise TypeError(kind)


def _rewrap(path: str, e: ConfigError):
    """prefix a validator message with the object path it was raised for"""
    return ConfigError(f'{path}.{e}' if path else str(e))


def _read_namedtuple(r: _Reader, kinds: Mapping[str, Any], base):
    r.check_keys(kinds)
    values = {k: r.get(k, kind) for k, kind in kinds.items() if k in r.obj}
    return base._replace(**values)


def _read_method(obj, path: str, seed: int, alpha: float, threads: int) -> IntervalConfig:
    r = _Reader(obj, path)
    r.check_keys(('method', 'n_resamples', 'aggregation', 'seed'))
    name = r.get('method', str, required=True)
    try:
        method = Method(name)
    except ValueError:
        raise ConfigError(f'{r.sub("method")}: unknown method "{name}", '
                          f'expected one of {", ".join(m.value for m in Method)}') from None
    aggregation = r.get('aggregation', str, Aggregation.MEAN.value)
    try:
        aggregation = Aggregation(aggregation)
    except ValueError:
        raise ConfigError(f'{r.sub("aggregation")}: expected mean or median, got "{aggregation}"') from None
    cfg = IntervalConfig(alpha=alpha, method=method, n_resamples=r.get('n_resamples', int, 10),
                         aggregation=aggregation, seed=r.get('seed', int, seed), threads=threads)
    try:
        validate_interval_config(cfg)
    except ConfigError as e:
        raise _rewrap(path, e) from None
    return cfg


def _read_features(obj, path: str, seed: int) -> FeatureStage:
    r = _Reader(obj, path)
    r.check_keys(('kind', 'truncate', 'mlp', 'checkpoint'))
    kind = r.get('kind', str, 'passthrough')
    if kind not in ('passthrough', 'mlp'):
        raise ConfigError(f'{r.sub("kind")}: expected passthrough or mlp, got "{kind}"')
    truncate = r.get('truncate', int)
    if truncate is not None and truncate < 1:
        raise ConfigError(f'{r.sub("truncate")}: must be >= 1')
    mlp = MLPConfig(seed=seed)
    if 'mlp' in r.obj:
        mr = _Reader(r.obj['mlp'], r.sub('mlp'))
        mlp = _read_namedtuple(mr, {
            'layer_widths': (int,), 'hidden_activation': str, 'output_activation': str, 'dropout_prob': float,
            'learning_rate': float, 'weight_decay': float, 'scheduler_gamma': float, 'scheduler_step': int,
            'epochs': int, 'batch_size': int, 'seed': int}, mlp)
        try:
            validate_mlp_config(mlp)
        except ConfigError as e:
            raise _rewrap(r.sub('mlp'), e) from None
    if kind == 'mlp' and truncate is None and mlp.layer_widths[0] == FEATURE_WIDTH:
        truncate = FEATURE_WIDTH
    return FeatureStage(kind, truncate, mlp, r.get('checkpoint', str))


_BOOSTING_KINDS = {'learning_rate': float, 'max_depth': int, 'max_leaf_nodes': int, 'n_estimators': int,
                   'loss': str, 'tau': float, 'seed': int}


def _read_regressor(obj, path: str, seed: int) -> BoostingParams:
    r = _Reader(obj, path)
    r.check_keys(_BOOSTING_KINDS)
    values = {}
    for key, kind in _BOOSTING_KINDS.items():
        if key not in r.obj:
            continue
        if key in ('max_depth', 'max_leaf_nodes') and r.obj[key] is None:
            values[key] = None  # unbounded
        else:
            values[key] = r.get(key, kind)
    params = BoostingParams(seed=seed)._replace(**values)
    try:
        params = params._replace(loss=Loss(params.loss))
    except ValueError:
        raise ConfigError(f'{r.sub("loss")}: expected squared_error or pinball, got "{params.loss}"') from None
    try:
        validate_params(params)
    except ConfigError as e:
        raise _rewrap(path, e) from None
    return params


def _read_search(obj, path: str, seed: int) -> SearchConfig:
    r = _Reader(obj, path)
    r.check_keys(('space', 'iters', 'folds', 'seed'))
    space = SearchSpace()
    if 'space' in r.obj:
        space = _read_namedtuple(_Reader(r.obj['space'], r.sub('space')), {
            'learning_rate': (float,), 'max_depth': (int,), 'max_leaf_nodes': (int,), 'n_estimators': (int,)},
            space)
        for field in SearchSpace._fields:
            if len(getattr(space, field)) != 2:
                raise ConfigError(f'{r.sub("space")}.{field}: expected [low, high]')
        try:
            validate_space(space)
        except ConfigError as e:
            raise _rewrap(r.sub('space'), e) from None
    cfg = SearchConfig(space, r.get('iters', int, 100), r.get('folds', int, 10), r.get('seed', int, seed))
    if cfg.iters < 1:
        raise ConfigError(f'{r.sub("iters")}: must be >= 1')
    if cfg.folds < 2:
        raise ConfigError(f'{r.sub("folds")}: must be >= 2')
    return cfg


def _resolve(base_dir: str, p: str) -> str:
    p = os.path.expanduser(p)
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))


def resolve_output_dir(output_dir: str, base_dir: str, environ: Mapping[str, str] = None) -> str:
    """a relative output_dir goes under $MVIR_OUTPUT_ROOT when set, else next to the config"""
    environ = os.environ if environ is None else environ
    output_dir = os.path.expanduser(output_dir)
    if os.path.isabs(output_dir):
        return output_dir
    root = environ.get(OUTPUT_ROOT_ENV)
    return os.path.normpath(os.path.join(root if root else base_dir, output_dir))


def parse_run_config(obj, base_dir: str = '.', *, seed: int = None, output_dir: str = None,
                     environ: Mapping[str, str] = None, check_paths: bool = True) -> RunConfig:
    """`seed` and `output_dir` override the file; component seeds default to the run seed"""
    r = _Reader(obj, '')
    r.check_keys(_FIELDS)
    run_seed = seed if seed is not None else r.get('seed', int, 0)
    threads = r.get('threads', int, 1)
    if threads < 1:
        raise ConfigError('threads: must be >= 1')

    dataset = _resolve(base_dir, r.get('dataset', str, required=True))
    schema = _resolve(base_dir, r.get('schema', str, required=True))
    if check_paths:
        for key, p in (('dataset', dataset), ('schema', schema)):
            if not os.path.isfile(p):
                raise ConfigError(f'{key}: file not found: {p}')
    out = output_dir if output_dir is not None else r.get('output_dir', str, required=True)
    out = resolve_output_dir(out, base_dir, environ)

    fractions, split_seed = SPLIT_FRACTIONS, run_seed
    if 'split' in r.obj:
        sr = _Reader(r.obj['split'], 'split')
        sr.check_keys(('fractions', 'seed'))
        fractions = sr.get('fractions', (float,), SPLIT_FRACTIONS)
        split_seed = sr.get('seed', int, run_seed)
        if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f'split.fractions: need three positive fractions summing to 1, got {list(fractions)}')

    cuts = None
    if r.obj.get('quality_cuts') is not None:
        cr = _Reader(r.obj['quality_cuts'], 'quality_cuts')
        cuts = _read_namedtuple(cr, {
            'min_flux_snr': float, 'log_lum_range': (float,), 'min_pixel_snr': float, 'max_mass_err': float,
            'max_width_err': float, 'lines': (str,)}, QualityCutSpec())
        if len(cuts.log_lum_range) != 2:
            raise ConfigError('quality_cuts.log_lum_range: expected [low, high]')
        try:
            validate_cut_spec(cuts)
        except ConfigError as e:
            raise _rewrap('quality_cuts', e) from None

    features = _read_features(r.obj.get('features', {}), 'features', run_seed)
    if features.checkpoint is not None:
        features = features._replace(checkpoint=_resolve(base_dir, features.checkpoint))
        if check_paths and not os.path.isfile(features.checkpoint):
            raise ConfigError(f'features.checkpoint: file not found: {features.checkpoint}')
    regressor = _read_regressor(r.obj.get('regressor', {}), 'regressor', run_seed)
    search = None
    if r.obj.get('search') is not None:
        search = _read_search(r.obj['search'], 'search', run_seed)

    alpha = r.get('alpha', float, DEFAULT_ALPHA)
    if not 0 < alpha < 1:
        raise ConfigError(f'alpha: must be inside (0, 1), got {alpha}')
    try:
        alpha_grid = validate_alpha_grid(r.get('alpha_grid', (float,), DEFAULT_ALPHA_GRID))
    except ConfigError as e:
        raise ConfigError(f'alpha_grid: {str(e).split(": ", 1)[-1]}') from None

    raw_methods = r.obj.get('methods')
    if not isinstance(raw_methods, list) or not raw_methods:
        raise ConfigError('methods: expected a non-empty list')
    methods = tuple(_read_method(m, f'methods[{i}]', run_seed, alpha, threads) for i, m in enumerate(raw_methods))
    names = [m.method for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError('methods: each method may appear once')

    cv_folds = r.get('cv_folds', int, 10)
    if cv_folds == 1 or cv_folds < 0:
        raise ConfigError(f'cv_folds: must be 0 (skip) or >= 2, got {cv_folds}')

    return RunConfig(
        dataset=dataset, schema=schema, output_dir=out, methods=methods, seed=run_seed,
        split_fractions=tuple(fractions), split_seed=split_seed, quality_cuts=cuts, features=features,
        regressor=regressor, search=search, cv_folds=cv_folds, alpha=alpha, alpha_grid=alpha_grid,
        refit_cqr_per_alpha=r.get('refit_cqr_per_alpha', bool, False),
        width_properties=r.get('width_properties', (str,), ()),
        reference_error=r.get('reference_error', str), threads=threads)


def load_run_config(in_path: str, **overrides) -> RunConfig:
    try:
        obj = json.loads(read_text_from_file(in_path))
    except FileNotFoundError:
        raise ConfigError(f'config file not found: {in_path}') from None
    except json.JSONDecodeError as e:
        raise ConfigError(f'{in_path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}') from None
    return parse_run_config(obj, os.path.dirname(os.path.abspath(in_path)), **overrides)


def resolved_seeds(cfg: RunConfig) -> dict:
    seeds = {'run': cfg.seed, 'split': cfg.split_seed, 'mlp': cfg.features.mlp.seed,
             'regressor': cfg.regressor.seed}
    if cfg.search is not None:
        seeds['search'] = cfg.search.seed
    for m in cfg.methods:
        seeds[f'method.{m.method.value}'] = m.seed
    return seeds

