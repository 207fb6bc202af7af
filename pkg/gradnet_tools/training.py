#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# gradnet_tools - Gradient-guided template update for siamese trackers
# Copyright (c) 2019 The gradnet_tools developers
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
#

"""Offline training of the update branch.

The objective depends on the variant:

- ``ours``: template generalization. The template built from the first pair's target patch
  scores the search regions of all k pairs (from k different videos), before and after the
  gradient update.
- ``no_M``, ``two_U``: basic optimization. Each pair builds its own template, scored only on
  its own search region.
- ``no_MG``, ``no_U``: plain matching, the template is U1's embedding without any update.
  This is also the objective of the pre-training phase of the backbone.
"""

from collections import namedtuple
from functools import partial
from pathlib import Path
from .core import ConfigError, NumericalError, AttributeDict, seed_everything, profile
from .net import NetConfig, LabelMap, logistic_loss, label_tensors, image_to_tensor
from .update_branch import VARIANTS, build_model, embed_initial
from .checkpoint import Checkpoint
from .data import build_training_set, generate_suite
from .monitor import RunningMean, CsvLog
from tqdm import tqdm
import math
import queue
import threading
import pendulum
import numpy as np
import torch
import logging

log = logging.getLogger(__name__)


TRAIN_LOG_COLUMNS = ['step', 'loss_initial', 'loss_final', 'lr', 'seconds']
HELDOUT_LOG_COLUMNS = ['step', 'heldout_loss', 'heldout_accuracy']

Batch = namedtuple('Batch', 'x z labels weights video_ids')
StepResult = namedtuple('StepResult', 'loss_initial loss_final')

# seconds between two checks of the stop flag by a blocked batch producer
PREFETCH_POLL = 0.1

OPTIMIZERS = ['sgd', 'adam']


def make_label(map_size, target_cell, radius, label_type='disk', sigma=1.5):
    """+1 within Euclidean distance ``radius`` of the target cell, -1 elsewhere.

    Each class present gets a total weight of 0.5 (1 if it is alone in the map). With
    ``label_type='gaussian'`` the weights inside each class follow a gaussian around the target.
    """
    h, w = (map_size, map_size) if np.isscalar(map_size) else map_size
    r, c = target_cell
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError('Target cell {} is outside the {}x{} score map'.format(tuple(target_cell), h, w))
    if radius < 0:
        raise ValueError('Label radius should be >= 0, got {}'.format(radius))

    yy, xx = np.mgrid[0:h, 0:w]
    dist2 = (yy - r) ** 2 + (xx - c) ** 2
    positive = dist2 <= radius ** 2
    labels = np.where(positive, 1.0, -1.0)

    if label_type == 'disk':
        shape = np.ones((h, w))
    elif label_type == 'gaussian':
        shape = np.exp(-dist2 / (2 * sigma ** 2))
    else:
        raise ConfigError('training.label_type: should be disk or gaussian, got {}'.format(label_type))

    weights = np.zeros((h, w))
    classes = [m for m in (positive, ~positive) if m.any()]
    for mask in classes:
        weights[mask] = shape[mask] / shape[mask].sum() / len(classes)

    return LabelMap(labels, weights)


def label_function(tcfg):
    return partial(make_label, radius=tcfg['label_radius'], label_type=tcfg['label_type'],
                   sigma=tcfg['gaussian_sigma'])


def sample_batch(dataset, k, rng):
    """k pairs from k distinct videos, in random order (the first one provides the template)."""
    videos = list(dataset.videos)
    if len(videos) < k:
        raise ValueError('Need at least {} distinct videos to build a batch, the dataset has {}'.format(k, len(videos)))
    chosen = rng.choice(len(videos), size=k, replace=False)
    return [dataset[int(rng.choice(dataset.videos[videos[i]]))] for i in chosen]


def make_batch(pairs, dtype=torch.float32):
    x = image_to_tensor(np.stack([p.x for p in pairs]), dtype)
    z = image_to_tensor(np.stack([p.z for p in pairs]), dtype)
    labels, weights = label_tensors([p.label for p in pairs], dtype)
    return Batch(x, z, labels, weights, [p.video_id for p in pairs])


def iter_batches(dataset, k, rng, steps, dtype=torch.float32, prefetch=0):
    """Yield ``steps`` batches, built ahead by a producer thread when ``prefetch > 0``.

    There is a single producer, so the batch sequence only depends on the rng. The producer
    stops as soon as the consumer does, even when it stops early (error, ``close()``).
    """
    def produce():
        for _ in range(steps):
            yield make_batch(sample_batch(dataset, k, rng), dtype)

    if prefetch <= 0:
        yield from produce()
        return

    done = object()
    q = queue.Queue(maxsize=prefetch)
    stop = threading.Event()

    def put(item):
        while not stop.is_set():
            try:
                q.put(item, timeout=PREFETCH_POLL)
                return True
            except queue.Full:
                pass
        return False

    def worker():
        try:
            for b in produce():
                if not put(b):
                    return
        except Exception as e:
            put(e)
            return
        put(done)

    threading.Thread(target=worker, name='batch-prefetch', daemon=True).start()
    try:
        while True:
            item = q.get()
            if item is done:
                return
            if isinstance(item, Exception):
                raise item
            yield item
    finally:
        stop.set()


# ---------------------------------------------------------------------------
# objectives

def generalization_losses(model, batch, second_order=True):
    """(L, L*) where the template comes from the first pair's Z and scores all the search regions."""
    f2z = model.shallow_features(batch.z[:1])
    x_features = model.search_features(batch.x)
    result = model.generate_template(f2z, x_features, batch.labels, batch.weights, update=True,
                                     second_order=second_order)
    return result.loss, logistic_loss(result.final_scores, batch.labels, batch.weights)


def basic_losses(model, batch, second_order=True):
    """(L, L*) where each pair's template only scores its own search region."""
    f2z = model.shallow_features(batch.z)
    x_features = model.search_features(batch.x)
    result = model.generate_template(f2z, x_features, batch.labels, batch.weights, update=True,
                                     second_order=second_order)
    return result.loss, logistic_loss(result.final_scores, batch.labels, batch.weights)


def matching_losses(model, batch, second_order=True):
    f2z = model.shallow_features(batch.z)
    x_features = model.search_features(batch.x)
    beta = embed_initial(f2z, model.u1)
    loss = logistic_loss(model.score(beta, x_features), batch.labels, batch.weights)
    return loss, loss


LOSS_FUNCTIONS = {'ours': generalization_losses,
                  'no_M': basic_losses,
                  'two_U': basic_losses,
                  'no_MG': matching_losses,
                  'no_U': matching_losses}


def compute_losses(model, batch, variant=None, second_order=True):
    return LOSS_FUNCTIONS[variant or model.variant](model, batch, second_order)


def _optimize(losses, model, batch, optimizer, second_order, grad_clip=0):
    try:
        loss_initial, loss_final = losses(model, batch, second_order)
        if not torch.isfinite(loss_final):
            raise NumericalError('final loss is {}'.format(loss_final.detach().item()))
    except NumericalError as e:
        raise NumericalError('{} (batch videos: {})'.format(e, ', '.join(str(v) for v in batch.video_ids)))

    optimizer.zero_grad()
    loss_final.backward()
    if grad_clip:
        params = [p for group in optimizer.param_groups for p in group['params']]
        torch.nn.utils.clip_grad_norm_(params, max_norm=grad_clip)
    optimizer.step()
    return StepResult(loss_initial.detach().item(), loss_final.detach().item())


def generalization_step(model, batch, optimizer, second_order=True, grad_clip=0):
    """One SGD step on L* = sum_i l(beta*_1 * f_x(X_i), Y_i), differentiating through the
    shallow gradient unless ``second_order`` is False. ``grad_clip`` > 0 bounds the gradient norm."""
    return _optimize(generalization_losses, model, batch, optimizer, second_order, grad_clip)


def basic_step(model, batch, optimizer, second_order=True, grad_clip=0):
    return _optimize(basic_losses, model, batch, optimizer, second_order, grad_clip)


def matching_step(model, batch, optimizer, second_order=True, grad_clip=0):
    return _optimize(matching_losses, model, batch, optimizer, second_order, grad_clip)


STEP_FUNCTIONS = {'ours': generalization_step,
                  'no_M': basic_step,
                  'two_U': basic_step,
                  'no_MG': matching_step,
                  'no_U': matching_step}


def trainable_parameters(model, variant, freeze_backbone=True):
    if variant == 'no_U':
        freeze_backbone = True
    for p in model.backbone.parameters():
        p.requires_grad_(not freeze_backbone)

    if variant in ('no_MG', 'no_U'):
        params = list(model.u1.parameters())
    else:
        params = model.template_parameters()
    if not freeze_backbone:
        params = list(model.backbone.parameters()) + params
    return params


def make_optimizer(params, name, lr, tcfg):
    """SGD with momentum, or Adam, both with the configured weight decay."""
    if name == 'sgd':
        return torch.optim.SGD(params, lr=lr, momentum=tcfg['momentum'], weight_decay=tcfg['weight_decay'])
    if name == 'adam':
        return torch.optim.Adam(params, lr=lr, weight_decay=tcfg['weight_decay'])
    raise ConfigError('Unknown optimizer: {}, should be one of {}'.format(name, ', '.join(OPTIMIZERS)))


def sync_second_u1(model):
    if model.u1_second is not None:
        model.u1_second.load_state_dict(model.u1.state_dict())


# ---------------------------------------------------------------------------
# training loops

def pretrain(model, dataset, tcfg, rng, output_dir=None, progress=False):
    """Matching objective on backbone + U1, standing in for pre-trained siamese weights."""
    steps = tcfg['pretrain_steps']
    log.info('Pre-training backbone + U1 with the matching objective for {} steps ({} lr={})'
             .format(steps, tcfg['pretrain_optimizer'], tcfg['pretrain_lr']))
    for p in model.backbone.parameters():
        p.requires_grad_(True)
    params = list(model.backbone.parameters()) + list(model.u1.parameters())
    optimizer = make_optimizer(params, tcfg['pretrain_optimizer'], tcfg['pretrain_lr'], tcfg)

    csv_log = None
    if output_dir is not None:
        csv_log = CsvLog(Path(output_dir) / 'pretrain_log.csv', TRAIN_LOG_COLUMNS,
                         meta=dict(variant='pretrain', seed=tcfg['seed']))

    running = RunningMean(50)
    batches = iter_batches(dataset, tcfg['batch_size'], rng, steps, model.dtype, tcfg['prefetch'])
    for step, batch in enumerate(tqdm(batches, total=steps, desc='pretrain', disable=not progress), 1):
        t0 = pendulum.now('UTC')
        result = matching_step(model, batch, optimizer, grad_clip=tcfg['grad_clip'])
        running.push(result.loss_final)
        if csv_log:
            csv_log.write(step, result.loss_initial, result.loss_final, tcfg['pretrain_lr'],
                          (pendulum.now('UTC') - t0).total_seconds())
        if step % tcfg['log_every'] == 0:
            log.info('pretrain step {}/{}: L={:.4f} (running mean {:.4f})'.format(step, steps, result.loss_final, running.mean()))

    if csv_log:
        csv_log.close()
    sync_second_u1(model)
    return model


@profile
def train(cfg, dataset, output_dir=None, heldout=None, progress=False):
    """Train the configured variant on ``dataset`` and return the final Checkpoint.

    ``cfg`` is the full configuration (``network`` and ``training`` sections). When
    ``output_dir`` is given, the checkpoint and the CSV logs are written there.
    """
    tcfg = cfg['training']
    net_cfg = NetConfig.from_config(cfg['network'])
    variant = tcfg['variant']
    if variant not in VARIANTS:
        raise ConfigError('training.variant: unknown variant {}, should be one of {}'.format(variant, ', '.join(VARIANTS)))
    k = tcfg['batch_size']
    if k < 1 or (variant == 'ours' and k < 2):
        raise ConfigError('training.batch_size: variant {} needs k >= {}, got {}'.format(variant, 2 if variant == 'ours' else 1, k))
    for key in ('optimizer', 'pretrain_optimizer'):
        if tcfg[key] not in OPTIMIZERS:
            raise ConfigError('training.{}: unknown optimizer {}, should be one of {}'
                              .format(key, tcfg[key], ', '.join(OPTIMIZERS)))
    if tcfg['grad_clip'] < 0:
        raise ConfigError('training.grad_clip: should be >= 0, got {}'.format(tcfg['grad_clip']))

    seed = tcfg['seed']
    rng = seed_everything(seed)
    model = build_model(net_cfg, variant, seed=seed)

    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)

    if tcfg['init_checkpoint']:
        log.info('Initializing from checkpoint {}'.format(tcfg['init_checkpoint']))
        init = Checkpoint.load(tcfg['init_checkpoint'])
        missing = init.load_into(model, strict=False)
        if any(name.startswith('u1_second.') for name in missing):
            sync_second_u1(model)
    elif tcfg['pretrain_steps'] > 0:
        pretrain(model, dataset, tcfg, rng, output_dir, progress)

    params = trainable_parameters(model, variant, tcfg['freeze_backbone'])
    optimizer = make_optimizer(params, tcfg['optimizer'], tcfg['lr'], tcfg)
    step_fn = STEP_FUNCTIONS[variant]

    train_log = heldout_log = None
    if output_dir is not None:
        train_log = CsvLog(output_dir / 'train_log.csv', TRAIN_LOG_COLUMNS, meta=dict(variant=variant, seed=seed))
        if heldout:
            heldout_log = CsvLog(output_dir / 'heldout_log.csv', HELDOUT_LOG_COLUMNS, meta=dict(variant=variant, seed=seed))

    steps = tcfg['steps']
    log.info('Training variant {} for {} steps (k={}, {} lr={}, second_order={})'
             .format(variant, steps, k, tcfg['optimizer'], tcfg['lr'], tcfg['second_order']))
    running = RunningMean(50)
    start = pendulum.now('UTC')
    batches = iter_batches(dataset, k, rng, steps, model.dtype, tcfg['prefetch'])
    try:
        for step, batch in enumerate(tqdm(batches, total=steps, desc=variant, disable=not progress), 1):
            t0 = pendulum.now('UTC')
            result = step_fn(model, batch, optimizer, second_order=tcfg['second_order'], grad_clip=tcfg['grad_clip'])
            seconds = (pendulum.now('UTC') - t0).total_seconds()
            running.push(result.loss_final)
            if train_log:
                train_log.write(step, result.loss_initial, result.loss_final, tcfg['lr'], seconds)
            if step % tcfg['log_every'] == 0:
                log.info('step {}/{}: L={:.4f} L*={:.4f} running mean L*={:.4f} ({:.3f}s)'
                         .format(step, steps, result.loss_initial, result.loss_final, running.mean(), seconds))
            if heldout and tcfg['eval_every'] and step % tcfg['eval_every'] == 0:
                metrics = evaluate_heldout(model, heldout)
                log.info('step {}: held-out L*={:.4f} accuracy={:.3f} one-step improvement={:.3f}'
                         .format(step, metrics.loss_final, metrics.accuracy, metrics.improvement_rate))
                if heldout_log:
                    heldout_log.write(step, metrics.loss_final, metrics.accuracy)
    finally:
        for l in (train_log, heldout_log):
            if l:
                l.close()

    log.info('Training done in {:.1f}s'.format((pendulum.now('UTC') - start).total_seconds()))
    checkpoint = Checkpoint.from_model(model, training=tcfg, step=steps, seed=seed)
    if output_dir is not None:
        checkpoint.save(str(output_dir / 'checkpoint.ckpt'))
    return checkpoint


def prepare_datasets(cfg, sequences=None, heldout_sequences=None):
    """Training set (and held-out pairs) from the given sequences, or from the synthetic suites."""
    tcfg = cfg['training']
    net_cfg = NetConfig.from_config(cfg['network'])
    rng = np.random.default_rng(tcfg['seed'])
    label_fn = label_function(tcfg)

    if sequences is None:
        sequences = generate_suite(cfg['synthetic'], 'train')
    dataset = build_training_set(sequences, tcfg['pairs_per_video'], tcfg['max_frame_gap'], rng, net_cfg,
                                 label_fn, context=tcfg['context'], max_shift=tcfg['max_shift'])

    heldout = None
    if tcfg['heldout_pairs'] > 0:
        heldout = heldout_pairs(cfg, tcfg['heldout_pairs'], heldout_sequences, rng)
    return dataset, heldout


def heldout_pairs(cfg, n, sequences=None, rng=None):
    """n pairs from sequences never used for training (the synthetic held-out suite by default)."""
    tcfg = cfg['training']
    if rng is None:
        rng = np.random.default_rng(tcfg['seed'] + 1)
    if sequences is None:
        sequences = generate_suite(cfg['synthetic'], 'heldout')
    per_video = max(1, math.ceil(n / max(1, len(sequences))))
    return build_training_set(sequences, per_video, tcfg['max_frame_gap'], rng, NetConfig.from_config(cfg['network']),
                              label_function(tcfg), context=tcfg['context'], max_shift=tcfg['max_shift']).pairs[:n]


# ---------------------------------------------------------------------------
# measurements on trained models

def _chunks(pairs, size):
    pairs = list(pairs)
    for i in range(0, len(pairs), size):
        yield pairs[i:i + size]


def _paired_templates(model, pairs):
    batch = make_batch(pairs, model.dtype)
    with torch.no_grad():
        f2z = model.shallow_features(batch.z)
        x_features = model.search_features(batch.x)
    result = model.generate_template(f2z, x_features, batch.labels, batch.weights,
                                     create_graph=False, second_order=False)
    return batch, f2z, result


def evaluate_heldout(model, pairs, chunk_size=32):
    """Per-pair one-step losses on pairs never seen in training.

    Returns the mean initial / final losses, the fraction of pairs improved by the update, and
    the accuracy (argmax of S* within one cell of the target cell).
    """
    losses_initial, losses_final, hits = [], [], []
    for chunk in _chunks(pairs, chunk_size):
        batch, _, result = _paired_templates(model, chunk)
        l0 = logistic_loss(result.scores.detach(), batch.labels, batch.weights, reduction='none')
        l1 = logistic_loss(result.final_scores.detach(), batch.labels, batch.weights, reduction='none')
        losses_initial.extend(l0.flatten().tolist())
        losses_final.extend(l1.flatten().tolist())
        for scores, pair in zip(result.final_scores.detach(), chunk):
            s = scores[0].cpu().numpy()
            r, c = np.unravel_index(np.argmax(s), s.shape)
            hits.append(max(abs(r - pair.target_cell[0]), abs(c - pair.target_cell[1])) <= 1)

    losses_initial, losses_final = np.array(losses_initial), np.array(losses_final)
    n = len(losses_final)
    return AttributeDict(loss_initial=float(losses_initial.mean()) if n else math.nan,
                         loss_final=float(losses_final.mean()) if n else math.nan,
                         improvement_rate=float((losses_final < losses_initial).mean()) if n else math.nan,
                         accuracy=float(np.mean(hits)) if n else math.nan,
                         losses_initial=losses_initial,
                         losses_final=losses_final)


def gradient_weight_ratio(model, pairs, bins=20, chunk_size=32):
    """Distribution of |U2(G)| / (|f2(Z)| + |U2(G)|) over all feature elements of the probe pairs.

    0/0 elements count as 0.
    """
    ratios = []
    for chunk in _chunks(pairs, chunk_size):
        _, f2z, result = _paired_templates(model, chunk)
        with torch.no_grad():
            if model.uses_gradient:
                correction = model.u2(result.gradient.detach()).abs()
            else:
                correction = torch.zeros_like(f2z)
            num = correction.cpu().numpy().ravel()
            den = f2z.abs().cpu().numpy().ravel() + num
        ratios.append(np.divide(num, den, out=np.zeros_like(num), where=den > 0))

    ratios = np.concatenate(ratios) if ratios else np.zeros(0)
    counts, edges = np.histogram(ratios, bins=bins, range=(0.0, 1.0))
    return AttributeDict(median=float(np.median(ratios)) if len(ratios) else math.nan,
                         mean=float(ratios.mean()) if len(ratios) else math.nan,
                         histogram=counts.tolist(),
                         bin_edges=edges.tolist(),
                         count=int(len(ratios)))


def one_step_sgd_baseline(model, pair, lr_multiples, base_lr=0.01, max_iterations=1000,
                          converge_fraction=0.1, divergence_factor=10.0):
    """Plain gradient descent directly on the template, for each learning rate in the grid.

    Starting from beta = U1(f2(Z)) on a frozen network, counts the iterations until the loss
    gets below ``converge_fraction * log(2)`` (infinite when it never does or diverges), and
    records the loss after one iteration. The loss reached by the learned single update on the
    same pair is reported alongside.
    """
    threshold = converge_fraction * math.log(2)
    batch = make_batch([pair], model.dtype)
    with torch.no_grad():
        f2z = model.shallow_features(batch.z)
        x_features = model.search_features(batch.x)
        beta0 = embed_initial(f2z, model.u1)

    def loss_of(beta):
        return logistic_loss(model.score(beta, x_features), batch.labels, batch.weights)

    with torch.no_grad():
        initial_loss = float(loss_of(beta0))

    rows = []
    for m in lr_multiples:
        lr = base_lr * m
        iterations, diverged, one_step_loss = math.inf, False, initial_loss
        if lr > 0:
            beta = beta0.clone()
            for it in range(1, max_iterations + 1):
                beta.requires_grad_(True)
                grad, = torch.autograd.grad(loss_of(beta), beta)
                with torch.no_grad():
                    beta = beta - lr * grad
                    loss = float(loss_of(beta))
                if it == 1:
                    one_step_loss = loss
                if not math.isfinite(loss) or loss > divergence_factor * initial_loss:
                    diverged = True
                    break
                if loss < threshold:
                    iterations = it
                    break
        rows.append(AttributeDict(lr_multiple=m, lr=lr, iterations=iterations, diverged=diverged,
                                  one_step_loss=one_step_loss))
        log.debug('SGD baseline lr={}: iterations={} one-step loss={:.4f}'.format(lr, iterations, one_step_loss))

    result = model.generate_template(f2z, x_features, batch.labels, batch.weights,
                                     create_graph=False, second_order=False)
    gradnet_loss = float(logistic_loss(result.final_scores.detach(), batch.labels, batch.weights))

    return AttributeDict(rows=rows, initial_loss=initial_loss, gradnet_loss=gradnet_loss, threshold=threshold)


def sgd_baseline_table(model, pairs, ecfg):
    """one_step_sgd_baseline over several pairs, aggregated per learning rate."""
    results = [one_step_sgd_baseline(model, p, ecfg['sgd_lr_multiples'], base_lr=ecfg['sgd_base_lr'],
                                     max_iterations=ecfg['sgd_max_iterations'],
                                     converge_fraction=ecfg['sgd_converge_fraction'],
                                     divergence_factor=ecfg['sgd_divergence_factor'])
               for p in pairs]
    if not results:
        return AttributeDict(rows=[], initial_loss=math.nan, gradnet_loss=math.nan, threshold=math.nan, pairs=0)

    table = []
    for i, m in enumerate(ecfg['sgd_lr_multiples']):
        iterations = [r.rows[i].iterations for r in results]
        table.append(AttributeDict(lr_multiple=m,
                                   lr=ecfg['sgd_base_lr'] * m,
                                   median_iterations=float(np.median(iterations)),
                                   min_iterations=float(np.min(iterations)),
                                   diverged=sum(r.rows[i].diverged for r in results),
                                   mean_one_step_loss=float(np.mean([r.rows[i].one_step_loss for r in results]))))
    return AttributeDict(rows=table,
                         initial_loss=float(np.mean([r.initial_loss for r in results])),
                         gradnet_loss=float(np.mean([r.gradnet_loss for r in results])),
                         threshold=results[0].threshold,
                         pairs=len(results))
