import json
import logging
import os
import time
import zipfile
from typing import NamedTuple, Callable, List, Dict, Optional

import numpy as np

from boosting import BoostedRegressor, BoostingParams, evaluate_cv, random_search_cv, regressor_factory, \
    quantile_regressor_factory, save_model
from catalogue import Dataset, load_schema, load_csv, apply_quality_cuts, split, take, fit_normalization, \
    apply_normalization, denormalize_targets, with_features, truncate_features, NormalizationState
from feature_net import mlp_init, mlp_train, mlp_extract, save_checkpoint, load_checkpoint, write_trace_csv, \
    trace_header
from interval_metrics import EvalReport, SweepTable, evaluate, coverage_sweep, width_property_report, \
    bound_distances, read_eval_csv, write_eval_csv, write_width_properties_csv, write_cv_scores_csv, \
    write_bounds_csv, write_summary, SummarySection
from intervals import IntervalBatch, IntervalConfig, Method, calibrate, denormalize_interval, write_intervals_csv
from run_config import RunConfig, resolved_seeds
from util.constants import VERSION, RANDOM_GENERATOR
from util.errors import PipelineError, ConfigError, DataError, NumericError
from util.hashing import file_digest
from util.natural_sort import natural_sort_key

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
MANIFEST_FORMAT = 'mvir-run/1'
LOCK_NAME = '.lock'
SUMMARY_CSV = 'summary.csv'
SUMMARY_TXT = 'summary.txt'


class Parts(NamedTuple):
    train: Dataset
    calibration: Dataset
    test: Dataset


class MethodOutcome(NamedTuple):
    config: IntervalConfig
    batch: IntervalBatch  # run alpha, target units
    at: Callable[[float], IntervalBatch]


def _staged(e: PipelineError, stage: str) -> PipelineError:
    e.stage = stage
    return e


def alpha_tag(alpha: float) -> str:
    return f'{alpha:g}'


def decisions_header(cfg: RunConfig) -> dict:
    header = {
        'quantile_rank': 'k = ceil((1 - alpha)(n + 1)); +inf when k > n',
        'coverage': 'closed intervals',
        'infinite_intervals': 'excluded from mpiw and counted',
        'mpiw': 'mean width',
        'random_generator': RANDOM_GENERATOR,
        'split': 'permutation then contiguous train/calibration/test slices, largest-remainder sizes',
        'aggregation': {m.method.value: m.aggregation.value for m in cfg.methods
                        if m.method == Method.JACKKNIFE_PLUS_AB},
        'cqr_sweep': 'refit per level' if cfg.refit_cqr_per_alpha else 'reuse quantile models fitted at alpha',
        'interval_units': 'calibrated on normalised targets, reported in target units',
    }
    if cfg.features.kind == 'mlp':
        header['mlp'] = dict(trace_header(cfg.features.mlp), scheduler_unit='epoch')
    return header


class _Run:
    def __init__(self, cfg: RunConfig, config_path: Optional[str], progress: Callable[[str], object]):
        self.cfg = cfg
        self.progress = progress
        self.out = cfg.output_dir
        self.outputs: List[str] = []
        self.created_dirs: List[str] = []
        self.manifest = {
            'format': MANIFEST_FORMAT,
            'version': VERSION,
            'numpy': np.__version__,
            'status': 'running',
            'failed_stage': None,
            'error': None,
            'inputs': {'dataset': file_digest(cfg.dataset), 'schema': file_digest(cfg.schema)},
            'seeds': resolved_seeds(cfg),
            'decisions': decisions_header(cfg),
            'stages': [],
            'outputs': self.outputs,
        }
        if config_path is not None:
            self.manifest['inputs']['config'] = file_digest(config_path)
        if cfg.features.checkpoint is not None:
            self.manifest['inputs']['checkpoint'] = file_digest(cfg.features.checkpoint)

    def path(self, *parts) -> str:
        rel = os.path.join(*parts)
        full = os.path.join(self.out, rel)
        directory = os.path.dirname(full)
        if not os.path.isdir(directory):
            os.makedirs(directory)
            self.created_dirs.append(directory)
        self.outputs.append(rel)
        return full

    def write_manifest(self):
        with open(os.path.join(self.out, MANIFEST_NAME), 'w', encoding='utf-8') as f:
            json.dump(self.manifest, f, indent=2, sort_keys=True)
            f.write('\n')

    def stage(self, name: str, fun, *args):
        self.progress(f'[{name}]')
        start = time.time()
        try:
            result = fun(*args)
        except PipelineError as e:
            e.stage = name
            raise
        except (OSError, ValueError, zipfile.BadZipFile) as e:
            raise _staged(DataError(f'{type(e).__name__}: {e}'), name) from e
        except ArithmeticError as e:
            raise _staged(NumericError(f'{type(e).__name__}: {e}'), name) from e
        except Exception:
            self.manifest['failed_stage'] = name
            raise
        self.manifest['stages'].append({'name': name, 'seconds': round(time.time() - start, 3)})
        return result

    def fail(self, e: Exception):
        for rel in self.outputs:
            try:
                os.remove(os.path.join(self.out, rel))
            except FileNotFoundError:
                pass
        for directory in sorted(self.created_dirs, key=len, reverse=True):
            try:
                os.rmdir(directory)
            except OSError:
                pass
        self.outputs.clear()
        self.manifest['status'] = 'failed'
        self.manifest['failed_stage'] = getattr(e, 'stage', None) or self.manifest['failed_stage']
        self.manifest['error'] = f'{type(e).__name__}: {e}'
        self.write_manifest()

    # stages

    def load(self) -> Dataset:
        loaded = load_csv(self.cfg.dataset, load_schema(self.cfg.schema))
        self.manifest['rows'] = {'loaded': loaded.dataset.n_samples, 'dropped_non_finite': loaded.dropped_rows}
        self.progress(f'loaded {loaded.dataset.n_samples} rows ({loaded.dropped_rows} dropped)')
        d = loaded.dataset
        if self.cfg.quality_cuts is not None:
            result = apply_quality_cuts(d, self.cfg.quality_cuts)
            self.manifest['quality_cuts'] = [step._asdict() for step in result.steps]
            for step in result.steps:
                self.progress(f'  {step.criterion}: {step.survivors}')
            d = result.dataset
        return d

    def split(self, d: Dataset) -> Parts:
        idx = split(d.n_samples, self.cfg.split_fractions, self.cfg.split_seed)
        parts = Parts(take(d, idx.train), take(d, idx.calibration), take(d, idx.test))
        self.manifest['split'] = {'train': parts.train.n_samples, 'calibration': parts.calibration.n_samples,
                                  'test': parts.test.n_samples}
        self.progress(f'split {parts.train.n_samples}/{parts.calibration.n_samples}/{parts.test.n_samples}')
        return parts

    def normalize(self, parts: Parts):
        if self.cfg.features.truncate is not None:
            parts = Parts(*(truncate_features(d, self.cfg.features.truncate) for d in parts))
        state = fit_normalization(parts.train)
        return Parts(*(apply_normalization(d, state) for d in parts)), state

    def features(self, parts: Parts) -> Parts:
        stage = self.cfg.features
        if stage.kind == 'passthrough':
            return parts
        if stage.checkpoint is not None:
            model = load_checkpoint(stage.checkpoint)
            self.progress(f'loaded network from {stage.checkpoint}')
        else:
            model, trace = mlp_train(mlp_init(stage.mlp), parts.train, parts.calibration, stage.mlp)
            save_checkpoint(self.path('mlp.npz'), model)
            write_trace_csv(self.path('mlp_trace.csv'), trace)
            if trace.val_loss:
                self.progress(f'network trained, final validation mse {trace.val_loss[-1]:.6g}')
        names = tuple(f'h{i}' for i in range(model.feature_width))
        return Parts(*(with_features(d, mlp_extract(model, d), names) for d in parts))

    def regressor(self, train: Dataset, state: NormalizationState):
        cfg = self.cfg
        params = cfg.regressor
        if cfg.search is not None:
            s = cfg.search
            result = random_search_cv(train.features, train.targets, s.space, folds=s.folds, iters=s.iters,
                                      loss=params.loss, tau=params.tau, seed=s.seed, threads=cfg.threads)
            params = result.params
            self.progress(f'search picked {params} (loss {result.score.loss_mean:.6g})')
        self.manifest['regressor'] = dict(params._asdict(), loss=params.loss.value)
        model = BoostedRegressor(params).fit(train.features, train.targets)
        save_model(self.path('regressor.json'), model.model)
        if cfg.cv_folds:
            score = evaluate_cv(train.features, train.targets, params, folds=cfg.cv_folds, seed=cfg.seed,
                                threads=cfg.threads)
            # fold errors in target units, validation loss stays in the training loss scale
            mae = np.asarray(score.mae) * state.target_range
            rmse = np.asarray(score.rmse) * state.target_range
            write_cv_scores_csv(self.path('cv_scores.csv'), mae, rmse, score.validation_loss)
            self.progress(f'{cfg.cv_folds}-fold mae {mae.mean():.4f} +- {mae.std():.4f}, '
                          f'rmse {rmse.mean():.4f} +- {rmse.std():.4f}')
        return params, model

    def intervals(self, parts: Parts, state: NormalizationState, params: BoostingParams,
                  full_model: BoostedRegressor) -> List[MethodOutcome]:
        cfg = self.cfg
        test_x = parts.test.features
        outcomes = []
        for mcfg in cfg.methods:
            start = time.time()

            def calibrated(c: IntervalConfig):
                return calibrate(c, parts.train, calibration=parts.calibration,
                                 regressor_factory=regressor_factory(params),
                                 quantile_regressor_factory=quantile_regressor_factory(params),
                                 fitted_regressor=full_model).prepare(test_x)

            prepared = calibrated(mcfg)

            def at(alpha, mcfg=mcfg, prepared=prepared, calibrated=calibrated):
                if mcfg.method == Method.CQR and cfg.refit_cqr_per_alpha and alpha != mcfg.alpha:
                    return denormalize_interval(calibrated(mcfg._replace(alpha=alpha)).at(alpha), state)
                return denormalize_interval(prepared.at(alpha), state)

            batch = at(mcfg.alpha)
            outcomes.append(MethodOutcome(mcfg, batch, at))
            self.progress(f'{mcfg.method.value}: calibrated in {time.time() - start:.2f} seconds')
        return outcomes

    def reports(self, test: Dataset, state: NormalizationState, outcomes: List[MethodOutcome]):
        cfg = self.cfg
        y = denormalize_targets(test.targets, state)
        sweep = coverage_sweep({o.config.method.value: o.at for o in outcomes}, y, cfg.alpha_grid)
        write_sweep_csv(self.path('sweep.csv'), sweep)
        reference = None
        if cfg.reference_error:
            reference = test.metadata.get(cfg.reference_error)
            if reference is None:
                raise DataError(f'reference_error: no metadata column "{cfg.reference_error}"')
        bounds = []
        for o in outcomes:
            name = o.config.method.value
            report = evaluate(y, o.batch)
            report = report._replace(r2=sweep.for_method(name)[0].r2)
            write_eval_csv(self.path('eval', f'{name}.csv'), [report])
            write_intervals_csv(self.path('intervals', f'{name}_alpha_{alpha_tag(o.batch.alpha)}.csv'),
                                o.batch, [str(i) for i in test.ids])
            if cfg.width_properties:
                correlations = width_property_report(o.batch, test.metadata, cfg.width_properties)
                write_width_properties_csv(self.path(f'width_properties_{name}.csv'), correlations)
            if np.any(o.batch.finite):
                bounds.append((name, bound_distances(o.batch, reference)))
            self.progress(f'{name}: picp {report.picp:.4f} (nominal {1 - report.alpha:.2f}), '
                          f'mpiw {report.mpiw:.4f}, {report.n_infinite} infinite')
        write_bounds_csv(self.path('bounds.csv'), bounds)

    def execute(self):
        d = self.stage('load', self.load)
        parts = self.stage('split', self.split, d)
        parts, state = self.stage('normalize', self.normalize, parts)
        parts = self.stage('features', self.features, parts)
        params, model = self.stage('regressor', self.regressor, parts.train, state)
        outcomes = self.stage('intervals', self.intervals, parts, state, params, model)
        self.stage('report', self.reports, parts.test, state, outcomes)


def write_sweep_csv(path: str, sweep: SweepTable):
    write_eval_csv(path, sweep.rows)


def run_pipeline(cfg: RunConfig, config_path: str = None, progress: Callable[[str], object] = None) -> dict:
    """runs every stage into cfg.output_dir; on failure the outputs written so far are removed
    and the manifest is kept with the failed stage"""
    progress = progress or (lambda _: None)
    os.makedirs(cfg.output_dir, exist_ok=True)
    lock_path = os.path.join(cfg.output_dir, LOCK_NAME)
    try:
        with open(lock_path, mode='x', encoding='utf8') as f:
            f.write(f'{os.getpid()}\n')
    except FileExistsError:
        raise ConfigError(f'output_dir: {cfg.output_dir} is in use by another run '
                          f'(delete {lock_path} if that run is gone)') from None
    try:
        run = _Run(cfg, config_path, progress)
        try:
            run.execute()
        except BaseException as e:
            run.fail(e)
            raise
        run.manifest['status'] = 'complete'
        run.outputs.sort(key=natural_sort_key)
        run.write_manifest()
        return run.manifest
    finally:
        os.remove(lock_path)


def read_manifest(run_dir: str) -> dict:
    path = os.path.join(run_dir, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise DataError(f'{path}: manifest not found, not a run directory')
    with open(path, encoding='utf8') as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f'{path}: unreadable manifest ({e.msg})') from None
    if manifest.get('format') != MANIFEST_FORMAT:
        raise DataError(f'{path}: unknown manifest format {manifest.get("format")!r}')
    if manifest.get('status') != 'complete':
        raise DataError(f'{path}: run is incomplete (status {manifest.get("status")}, '
                        f'failed stage {manifest.get("failed_stage")})')
    return manifest


def build_report(run_dir: str, write_text: Callable[[str], object] = None) -> List[EvalReport]:
    """merges eval/<method>.csv into summary.csv and a fixed-width summary.txt"""
    manifest = read_manifest(run_dir)
    eval_dir = os.path.join(run_dir, 'eval')
    names = sorted((n for n in (os.listdir(eval_dir) if os.path.isdir(eval_dir) else ()) if n.endswith('.csv')),
                   key=natural_sort_key)
    if not names:
        raise DataError(f'{eval_dir}: no evaluation tables, run is incomplete')
    per_method: Dict[str, List[EvalReport]] = {}
    for n in names:
        per_method[n[:-len('.csv')]] = read_eval_csv(os.path.join(eval_dir, n))

    sweep_path = os.path.join(run_dir, 'sweep.csv')
    sweep_rows = read_eval_csv(sweep_path) if os.path.isfile(sweep_path) else []
    sections = []
    for method, rows in per_method.items():
        levels = [r for r in sweep_rows if r.method == method] or rows
        sections.append(SummarySection(method, levels))

    merged = [r for rows in per_method.values() for r in rows]
    write_eval_csv(os.path.join(run_dir, SUMMARY_CSV), merged)
    header = [f'run version: {manifest.get("version")}',
              f'seeds: {json.dumps(manifest.get("seeds", {}), sort_keys=True)}']
    if write_text is None:
        with open(os.path.join(run_dir, SUMMARY_TXT), mode='w', encoding='utf8') as f:
            write_summary(f.write, sections, header)
    else:
        write_summary(write_text, sections, header)
    return merged
