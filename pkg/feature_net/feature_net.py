import logging
from typing import NamedTuple, Tuple, List, Optional

import numpy as np
from scipy.special import expit

from catalogue.catalogue import Dataset
from catalogue.splitting import make_generator
from util.constants import FEATURE_WIDTH, ADAM_BETA_1, ADAM_BETA_2, ADAM_EPSILON
from util.errors import ConfigError, DataError, NumericError

logger = logging.getLogger(__name__)

_OUTPUT_EPS = np.finfo(np.float64).eps
# rows per broadcast block in _rowwise_product
_ROWWISE_CHUNK = 64


class MLPConfig(NamedTuple):
    layer_widths: Tuple[int, ...] = (FEATURE_WIDTH, 64, 64, 8, 1)
    hidden_activation: str = 'relu'
    output_activation: str = 'sigmoid'
    dropout_prob: float = 0.1
    learning_rate: float = 5e-4
    weight_decay: float = 1e-6
    # the rate is multiplied by scheduler_gamma every scheduler_step epochs
    scheduler_gamma: float = 0.5
    scheduler_step: int = 2
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0


class MLPModel(NamedTuple):
    weights: Tuple[np.ndarray, ...]  # (fan_in, fan_out) per layer
    biases: Tuple[np.ndarray, ...]
    first_moment: Tuple[np.ndarray, ...]  # Adam accumulators, ordered W0, b0, W1, b1, ...
    second_moment: Tuple[np.ndarray, ...]
    step: int
    config: MLPConfig

    @property
    def feature_width(self) -> int:
        return self.config.layer_widths[-2]


class ForwardPass(NamedTuple):
    predictions: np.ndarray  # (n,) in (0, 1)
    features: np.ndarray  # (n, layer_widths[-2]) penultimate activations


class Gradients(NamedTuple):
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    loss: float  # batch MSE without the decay term


class TrainTrace(NamedTuple):
    train_loss: List[float]
    val_loss: List[float]
    header: dict


def validate_mlp_config(config: MLPConfig):
    widths = tuple(config.layer_widths)
    if len(widths) < 3:
        raise ConfigError('layer_widths: need an input, at least one hidden and an output layer')
    if any(int(w) < 1 for w in widths):
        raise ConfigError(f'layer_widths: every width must be >= 1, got {widths}')
    if widths[-1] != 1:
        raise ConfigError(f'layer_widths: the output layer must have width 1, got {widths[-1]}')
    if config.hidden_activation != 'relu' or config.output_activation != 'sigmoid':
        raise ConfigError('only relu hidden and sigmoid output activations are supported')
    if not 0 <= config.dropout_prob < 1:
        raise ConfigError(f'dropout_prob: must be in [0, 1), got {config.dropout_prob}')
    if not config.learning_rate > 0:
        raise ConfigError(f'learning_rate: must be > 0, got {config.learning_rate}')
    if config.weight_decay < 0:
        raise ConfigError(f'weight_decay: must be >= 0, got {config.weight_decay}')
    if not 0 < config.scheduler_gamma <= 1 or config.scheduler_step < 1:
        raise ConfigError('scheduler: gamma must be in (0, 1] and step >= 1')
    if config.epochs < 0 or config.batch_size < 1:
        raise ConfigError('epochs must be >= 0 and batch_size >= 1')


def mlp_init(config: MLPConfig = MLPConfig()) -> MLPModel:
    """weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases and moments zero"""
    validate_mlp_config(config)
    widths = tuple(int(w) for w in config.layer_widths)
    config = config._replace(layer_widths=widths)
    rng = make_generator(config.seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    params = _interleave(weights, biases)
    return MLPModel(
        weights=tuple(weights),
        biases=tuple(biases),
        first_moment=tuple(np.zeros_like(p) for p in params),
        second_moment=tuple(np.zeros_like(p) for p in params),
        step=0,
        config=config)


def _interleave(weights, biases) -> List[np.ndarray]:
    params = []
    for w, b in zip(weights, biases):
        params += [w, b]
    return params


def _check_width(model: MLPModel, batch: np.ndarray):
    if batch.ndim != 2 or batch.shape[1] != model.config.layer_widths[0]:
        raise DataError(f'input has shape {batch.shape}, network expects {model.config.layer_widths[0]} columns')


def _draw_masks(model: MLPModel, n: int, rng: np.random.Generator) -> List[Optional[np.ndarray]]:
    p = model.config.dropout_prob
    if p == 0:
        return [None] * (len(model.weights) - 1)
    keep = 1.0 - p
    return [(rng.random((n, w)) >= p) / keep for w in model.config.layer_widths[1:-1]]


def _rowwise_product(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """a @ w with every row summed over fan_in in a fixed order, independent of the other rows"""
    out = np.empty((a.shape[0], w.shape[1]))
    for start in range(0, a.shape[0], _ROWWISE_CHUNK):
        stop = start + _ROWWISE_CHUNK
        np.add.reduce(a[start:stop, :, None] * w[None, :, :], axis=1, out=out[start:stop])
    return out


def _forward(model: MLPModel, batch: np.ndarray, masks, product=np.matmul):
    """returns (pre-activations, activations); activations[0] is the input"""
    activations = [batch]
    pre_activations = []
    a = batch
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = product(a, w) + b
        pre_activations.append(z)
        if layer == last:
            a = np.clip(expit(z), _OUTPUT_EPS, 1.0 - _OUTPUT_EPS)
        else:
            a = np.maximum(z, 0.0)
            if masks[layer] is not None:
                a = a * masks[layer]
        activations.append(a)
    return pre_activations, activations


def mlp_forward(model: MLPModel, batch, mode: str = 'eval', rng: np.random.Generator = None) -> ForwardPass:
    """eval mode is deterministic; train mode applies inverted dropout (kept units scaled by 1/(1-p))"""
    batch = np.asarray(batch, dtype=np.float64)
    _check_width(model, batch)
    if mode == 'eval':
        masks = [None] * (len(model.weights) - 1)
    elif mode == 'train':
        masks = _draw_masks(model, batch.shape[0], rng if rng is not None else make_generator(model.config.seed))
    else:
        raise ConfigError(f'unknown forward mode "{mode}"')
    _, activations = _forward(model, batch, masks)
    return ForwardPass(predictions=activations[-1][:, 0], features=activations[-2])


def weight_decay_gradients(model: MLPModel, weight_decay: float = None):
    """gradient of (weight_decay / 2) * sum of squared parameters, biases included"""
    if weight_decay is None:
        weight_decay = model.config.weight_decay
    return (tuple(weight_decay * w for w in model.weights),
            tuple(weight_decay * b for b in model.biases))


def mlp_gradients(model: MLPModel, batch, targets, masks=None, weight_decay: float = None) -> Gradients:
    """reverse-mode gradients of mean((p - y)^2) + (weight_decay / 2) * ||theta||^2"""
    batch = np.asarray(batch, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    _check_width(model, batch)
    if masks is None:
        masks = [None] * (len(model.weights) - 1)
    pre_activations, activations = _forward(model, batch, masks)
    n = batch.shape[0]
    p = activations[-1][:, 0]
    residual = p - targets
    loss = float(np.mean(residual ** 2))

    decay_w, decay_b = weight_decay_gradients(model, weight_decay)
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.weights)
    delta = (2.0 / n * residual * p * (1.0 - p))[:, None]
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta + decay_w[layer]
        grad_b[layer] = delta.sum(axis=0) + decay_b[layer]
        if layer == 0:
            break
        upstream = delta @ model.weights[layer].T
        if masks[layer - 1] is not None:
            upstream = upstream * masks[layer - 1]
        delta = upstream * (pre_activations[layer - 1] > 0)
    return Gradients(tuple(grad_w), tuple(grad_b), loss)


def _adam_step(params, grads, first, second, step, learning_rate):
    bias_1 = 1.0 - ADAM_BETA_1 ** step
    bias_2 = 1.0 - ADAM_BETA_2 ** step
    for p, g, m, v in zip(params, grads, first, second):
        m *= ADAM_BETA_1
        m += (1.0 - ADAM_BETA_1) * g
        v *= ADAM_BETA_2
        v += (1.0 - ADAM_BETA_2) * g * g
        p -= learning_rate * (m / bias_1) / (np.sqrt(v / bias_2) + ADAM_EPSILON)


def _copy_model(model: MLPModel) -> MLPModel:
    return model._replace(
        weights=tuple(w.copy() for w in model.weights),
        biases=tuple(b.copy() for b in model.biases),
        first_moment=tuple(m.copy() for m in model.first_moment),
        second_moment=tuple(v.copy() for v in model.second_moment))


def _all_finite(model: MLPModel) -> bool:
    return all(np.all(np.isfinite(p)) for p in _interleave(model.weights, model.biases))


def _mse(model: MLPModel, d: Dataset) -> float:
    return float(np.mean((mlp_forward(model, d.features).predictions - d.targets) ** 2))


def trace_header(config: MLPConfig) -> dict:
    return {
        'optimizer': 'adam',
        'beta_1': ADAM_BETA_1,
        'beta_2': ADAM_BETA_2,
        'epsilon': ADAM_EPSILON,
        'weight_decay': config.weight_decay,
        'weight_decay_mode': 'coupled-l2',
        'scheduler': f'x{config.scheduler_gamma:g} every {config.scheduler_step} epochs',
        'init': 'uniform(+-1/sqrt(fan_in)), zero biases',
        'dropout': 'inverted',
    }


def mlp_train(model: MLPModel, train: Dataset, val: Dataset, config: MLPConfig = None):
    """epochs * ceil(n / batch_size) Adam steps, batches reshuffled every epoch, last partial batch kept"""
    config = config or model.config
    validate_mlp_config(config)
    if tuple(config.layer_widths) != tuple(model.config.layer_widths):
        raise ConfigError('training config layer_widths differ from the model architecture')
    _check_width(model, train.features)
    _check_width(model, val.features)
    if train.n_samples == 0 or val.n_samples == 0:
        raise DataError('training and validation sets must be non-empty')
    if np.any((train.targets < 0) | (train.targets > 1)):
        raise DataError('network targets must be normalised to [0, 1]')

    trace = TrainTrace(train_loss=[], val_loss=[], header=trace_header(config))
    if config.epochs == 0:
        return model, trace

    model = _copy_model(model)._replace(config=model.config._replace(
        dropout_prob=config.dropout_prob, weight_decay=config.weight_decay))
    rng = make_generator(config.seed)
    n = train.n_samples
    step = model.step
    params = _interleave(model.weights, model.biases)

    for epoch in range(config.epochs):
        learning_rate = config.learning_rate * config.scheduler_gamma ** (epoch // config.scheduler_step)
        order = rng.permutation(n)
        loss_sum = 0.0
        for batch_number, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            masks = _draw_masks(model, idx.size, rng)
            grads = mlp_gradients(model, train.features[idx], train.targets[idx], masks=masks)
            if not np.isfinite(grads.loss):
                raise NumericError(f'non-finite training loss at epoch {epoch + 1}, batch {batch_number + 1}')
            step += 1
            _adam_step(params, _interleave(grads.weights, grads.biases),
                       model.first_moment, model.second_moment, step, learning_rate)
            loss_sum += grads.loss * idx.size
        if not _all_finite(model):
            raise NumericError(f'non-finite network parameters after epoch {epoch + 1}')
        val_loss = _mse(model, val)
        if not np.isfinite(val_loss):
            raise NumericError(f'non-finite validation loss at epoch {epoch + 1}')
        trace.train_loss.append(loss_sum / n)
        trace.val_loss.append(val_loss)
        logger.info('epoch %3d  lr %.3g  train %.6f  val %.6f', epoch + 1, learning_rate, loss_sum / n, val_loss)

    return model._replace(step=step), trace


def mlp_extract(model: MLPModel, d, batch_size: int = 4096) -> np.ndarray:
    """eval-mode penultimate activations, n x layer_widths[-2]; each row is bit-identical
    whatever batch it is evaluated in"""
    features = d.features if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)
    _check_width(model, features)
    no_dropout = [None] * (len(model.weights) - 1)
    parts = [_forward(model, features[start:start + batch_size], no_dropout, product=_rowwise_product)[1][-2]
             for start in range(0, features.shape[0], batch_size)]
    if not parts:
        return np.zeros((0, model.feature_width))
    return np.concatenate(parts, axis=0)
