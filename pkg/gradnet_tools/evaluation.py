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

"""One-pass evaluation, ablation tables and diagnostics of trained models."""

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from .core import AttributeDict, SequenceError, profile, to_plain
from .checkpoint import Checkpoint
from .data import read_boxes
from .monitor import read_log
from .net import logistic_loss
from .tracking import GradNetTracker, TrackResult
from .training import make_batch
import csv
import json
import math
import numpy as np
import torch
import logging

log = logging.getLogger(__name__)


ABLATION_VARIANTS = ['ours', 'no_M', 'no_MG', 'no_U', 'two_U']
ABLATION_COLUMNS = ['variant', 'checkpoint', 'precision', 'auc', 'auc_drift', 'auc_distractors', 'auc_occlusion']


def _boxes(b):
    return np.asarray(b, dtype=np.float64).reshape(-1, 4)


def center_error(b1, b2):
    """Euclidean distance between box centers, boxes as (x, y, w, h) or arrays of them."""
    b1, b2 = _boxes(b1), _boxes(b2)
    c1 = b1[:, :2] + (b1[:, 2:] - 1) / 2
    c2 = b2[:, :2] + (b2[:, 2:] - 1) / 2
    d = np.sqrt(((c1 - c2) ** 2).sum(axis=1))
    return d if len(d) > 1 else float(d[0])


def iou(b1, b2):
    """Intersection over union, 0 when the union is empty."""
    b1, b2 = _boxes(b1), _boxes(b2)
    x0 = np.maximum(b1[:, 0], b2[:, 0])
    y0 = np.maximum(b1[:, 1], b2[:, 1])
    x1 = np.minimum(b1[:, 0] + b1[:, 2], b2[:, 0] + b2[:, 2])
    y1 = np.minimum(b1[:, 1] + b1[:, 3], b2[:, 1] + b2[:, 3])
    inter = np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)
    union = b1[:, 2] * b1[:, 3] + b2[:, 2] * b2[:, 3] - inter
    with np.errstate(invalid='ignore', divide='ignore'):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)
    out = np.nan_to_num(out, nan=0.0)
    return out if len(out) > 1 else float(out[0])


def precision_thresholds(n=51):
    return np.arange(n, dtype=np.float64)


def success_thresholds(n=21):
    return np.linspace(0.0, 1.0, n)


def precision_curve(errors, thresholds):
    """Fraction of frames with center error strictly below the threshold. Failed frames (NaN) never count."""
    errors = np.asarray(errors, dtype=np.float64)
    if len(errors) == 0:
        return np.zeros(len(thresholds))
    return (errors[:, None] < thresholds[None, :]).mean(axis=0)


def success_curve(overlaps, thresholds):
    """Fraction of frames with IoU >= threshold."""
    overlaps = np.asarray(overlaps, dtype=np.float64)
    if len(overlaps) == 0:
        return np.zeros(len(thresholds))
    return (overlaps[:, None] >= thresholds[None, :]).mean(axis=0)


class OPEResult(object):
    """Per-sequence error/overlap series and the aggregated precision and success curves.

    ``aggregate='sequence'`` averages the per-sequence curves, ``'frame'`` pools all frames.
    """

    def __init__(self, series, aggregate='sequence', n_precision=51, n_success=21, precision_at=20,
                 attributes=None):
        self.series = OrderedDict(series)
        self.aggregate = aggregate
        self.attributes = attributes or {}
        self.precision_thresholds = precision_thresholds(n_precision)
        self.success_thresholds = success_thresholds(n_success)
        self.precision_at = precision_at

        self.per_sequence = OrderedDict()
        for name, s in self.series.items():
            p = precision_curve(s['errors'], self.precision_thresholds)
            sc = success_curve(s['overlaps'], self.success_thresholds)
            self.per_sequence[name] = AttributeDict(precision_curve=p, success_curve=sc, frames=len(s['errors']),
                                                    precision=self._at(p), auc=float(sc.mean()))

        self.precision_curve, self.success_curve = self._aggregate(list(self.series))

    def _at(self, curve):
        idx = np.searchsorted(self.precision_thresholds, self.precision_at)
        return float(curve[min(idx, len(curve) - 1)])

    def _aggregate(self, names):
        if not names:
            return np.zeros(len(self.precision_thresholds)), np.zeros(len(self.success_thresholds))
        if self.aggregate == 'frame':
            errors = np.concatenate([self.series[n]['errors'] for n in names])
            overlaps = np.concatenate([self.series[n]['overlaps'] for n in names])
            return (precision_curve(errors, self.precision_thresholds),
                    success_curve(overlaps, self.success_thresholds))
        return (np.mean([self.per_sequence[n].precision_curve for n in names], axis=0),
                np.mean([self.per_sequence[n].success_curve for n in names], axis=0))

    @property
    def precision(self):
        return self._at(self.precision_curve)

    @property
    def auc(self):
        return float(self.success_curve.mean())

    @property
    def total_frames(self):
        return sum(len(s['errors']) for s in self.series.values())

    def subset_auc(self, attribute):
        """Success AUC over the sequences having the given attribute (NaN if none)."""
        names = [n for n in self.series if attribute in self.attributes.get(n, [])]
        if not names:
            return math.nan
        return float(self._aggregate(names)[1].mean())

    def as_dict(self):
        return dict(aggregate=self.aggregate,
                    precision=self.precision,
                    auc=self.auc,
                    total_frames=self.total_frames,
                    precision_thresholds=self.precision_thresholds.tolist(),
                    precision_curve=self.precision_curve.tolist(),
                    success_thresholds=self.success_thresholds.tolist(),
                    success_curve=self.success_curve.tolist(),
                    sequences=OrderedDict((n, dict(frames=s.frames, precision=s.precision, auc=s.auc,
                                                   failures=int(np.isnan(self.series[n]['errors']).sum())))
                                          for n, s in self.per_sequence.items()))

    def __repr__(self):
        return '<OPEResult {} sequences, {} frames: precision@{}={:.3f} AUC={:.3f}>'.format(
            len(self.series), self.total_frames, self.precision_at, self.precision, self.auc)


class OracleTracker(object):
    """Emits the ground truth."""

    def __init__(self, sequence):
        self.boxes = sequence.boxes

    def init(self, frame, box):
        return AttributeDict(counter=1, events=[])

    def step(self, state, frame):
        box = self.boxes[state.counter]
        state.counter += 1
        return box, 1.0


class ConstantTracker(object):
    """Never moves from the first box."""

    def __init__(self, sequence=None):
        pass

    def init(self, frame, box):
        return AttributeDict(box=np.asarray(box, dtype=np.float64), events=[])

    def step(self, state, frame):
        return state.box, 0.0


def run_sequence(tracker, sequence):
    """Initialize on the first ground-truth box and track the remaining frames.

    A frame on which the tracker fails gets a NaN box, the run continues with the next frame.
    """
    boxes = np.full((len(sequence), 4), np.nan)
    scores = np.full(len(sequence), np.nan)
    boxes[0] = sequence.boxes[0]
    state = tracker.init(sequence.frame(0), sequence.boxes[0])
    scores[0] = getattr(state, 'thre', 1.0)
    for i in range(1, len(sequence)):
        try:
            boxes[i], scores[i] = tracker.step(state, sequence.frame(i))
        except Exception as e:
            log.warning('Sequence {}: tracker failed on frame {}: {}'.format(sequence.name, i + 1, e))
    return TrackResult(sequence.name, boxes, scores, state.events)


def series_from_boxes(predicted, groundtruth):
    errors = np.atleast_1d(center_error(predicted, groundtruth))
    overlaps = np.nan_to_num(np.atleast_1d(iou(predicted, groundtruth)), nan=0.0)
    return dict(errors=errors, overlaps=overlaps)


@profile
def run_ope(tracker_factory, sequences, workers=1, aggregate='sequence', ecfg=None):
    """One-pass evaluation: ``tracker_factory(sequence)`` returns the tracker used on that sequence.

    Sequences may run in parallel, the aggregation follows the order of ``sequences``.
    Returns the OPEResult, with the per-sequence TrackResults in its ``tracks`` attribute.
    """
    ecfg = ecfg or {}

    def run(seq):
        result = run_sequence(tracker_factory(seq), seq)
        s = series_from_boxes(result.boxes, seq.boxes)
        log.info('Sequence {}: {} frames, mean IoU {:.3f}'.format(seq.name, len(seq), float(s['overlaps'].mean())))
        return result, s

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            outputs = list(executor.map(run, sequences))
    else:
        outputs = [run(seq) for seq in sequences]

    ope = OPEResult(OrderedDict((seq.name, s) for seq, (_, s) in zip(sequences, outputs)),
                    aggregate=aggregate,
                    n_precision=ecfg.get('precision_thresholds', 51),
                    n_success=ecfg.get('success_points', 21),
                    precision_at=ecfg.get('precision_at', 20),
                    attributes={seq.name: seq.attributes for seq in sequences})
    ope.tracks = OrderedDict((seq.name, r) for seq, (r, _) in zip(sequences, outputs))
    return ope


def evaluate_results(results_dir, sequences, aggregate='sequence', ecfg=None):
    """Score existing ``<name>.txt`` result files against the sequences' ground truth."""
    ecfg = ecfg or {}
    results_dir = Path(results_dir)
    series = OrderedDict()
    for seq in sequences:
        filename = results_dir / '{}.txt'.format(seq.name)
        if not filename.exists():
            raise SequenceError('Missing result file for sequence {}: {}'.format(seq.name, filename))
        boxes = read_boxes(filename)
        if len(boxes) != len(seq):
            raise SequenceError('{}: {} boxes for a sequence of {} frames'.format(filename, len(boxes), len(seq)))
        series[seq.name] = series_from_boxes(boxes, seq.boxes)
    return OPEResult(series, aggregate=aggregate,
                     n_precision=ecfg.get('precision_thresholds', 51),
                     n_success=ecfg.get('success_points', 21),
                     precision_at=ecfg.get('precision_at', 20),
                     attributes={seq.name: seq.attributes for seq in sequences})


def write_ope(ope, output_dir, name='ope.json'):
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(str(output_dir / name), 'w') as f:
        json.dump(to_plain(ope.as_dict()), f, indent=2)
    return output_dir / name


# ---------------------------------------------------------------------------
# ablation

def variant_tracker(model, variant, tracking_cfg):
    """Tracker configured for an ablation row: no_U never updates, baseline keeps the plain template."""
    if variant == 'baseline':
        return GradNetTracker(model, tracking_cfg, online_update=False, gradient_step=False, name=variant)
    if variant == 'no_U':
        return GradNetTracker(model, tracking_cfg, online_update=False, name=variant)
    return GradNetTracker(model, tracking_cfg, name=variant)


@profile
def run_ablation(checkpoints, sequences, tracking_cfg, ecfg, workers=1, baseline_from='ours'):
    """OPE metrics per variant on the same sequences.

    ``checkpoints`` maps variant names to checkpoint paths. The ``baseline`` row (fixed plain
    template) uses the checkpoint of ``baseline_from``.
    """
    rows = []
    order = [v for v in ABLATION_VARIANTS if v in checkpoints] + [v for v in checkpoints if v not in ABLATION_VARIANTS]
    if baseline_from in checkpoints:
        order.append('baseline')

    for variant in order:
        path = checkpoints[baseline_from if variant == 'baseline' else variant]
        model = Checkpoint.load(str(path)).build_model()
        tracker = variant_tracker(model, variant, tracking_cfg)
        log.info('Ablation: evaluating {} ({})'.format(variant, path))
        ope = run_ope(lambda seq: tracker, sequences, workers=workers, aggregate=ecfg['aggregate'], ecfg=ecfg)
        rows.append(AttributeDict(variant=variant, checkpoint=str(path), precision=ope.precision, auc=ope.auc,
                                  auc_drift=ope.subset_auc('drift'),
                                  auc_distractors=ope.subset_auc('distractors'),
                                  auc_occlusion=ope.subset_auc('occlusion')))
    return rows


def write_ablation(rows, output_dir):
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(str(output_dir / 'ablation.csv'), 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in ABLATION_COLUMNS])
    with open(str(output_dir / 'ablation.json'), 'w') as f:
        json.dump([{c: _json_float(row[c]) for c in ABLATION_COLUMNS} for row in rows], f, indent=2)
    return output_dir / 'ablation.csv'


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


# ---------------------------------------------------------------------------
# diagnostics

def score_map_entropy(scores):
    """Shannon entropy of the softmax over the cells of each score map, (N, 1, H, W) -> (N,)"""
    flat = scores.reshape(scores.shape[0], -1).double()
    p = torch.softmax(flat, dim=1)
    return -(p * torch.log_softmax(flat, dim=1)).sum(dim=1)


def score_map_diagnostics(models, pairs, grid_count=8, chunk_size=32):
    """Initial and final score maps of each model on the probe pairs.

    For each model: mean entropy of the initial maps, mean one-step loss drop L - L*, and the
    first ``grid_count`` (S, S*) maps for plotting.
    """
    out = OrderedDict()
    for name, model in models.items():
        entropies, drops, grids = [], [], []
        for i in range(0, len(pairs), chunk_size):
            chunk = pairs[i:i + chunk_size]
            batch = make_batch(chunk, model.dtype)
            with torch.no_grad():
                f2z = model.shallow_features(batch.z)
                x_features = model.search_features(batch.x)
            result = model.generate_template(f2z, x_features, batch.labels, batch.weights,
                                             create_graph=False, second_order=False)
            s, s_star = result.scores.detach(), result.final_scores.detach()
            entropies.extend(score_map_entropy(s).tolist())
            l0 = logistic_loss(s, batch.labels, batch.weights, reduction='none').flatten()
            l1 = logistic_loss(s_star, batch.labels, batch.weights, reduction='none').flatten()
            drops.extend((l0 - l1).tolist())
            for j in range(len(chunk)):
                if len(grids) < grid_count:
                    grids.append(dict(initial=s[j, 0].cpu().numpy().tolist(),
                                      final=s_star[j, 0].cpu().numpy().tolist()))
        out[name] = AttributeDict(mean_entropy=float(np.mean(entropies)) if entropies else math.nan,
                                  mean_loss_drop=float(np.mean(drops)) if drops else math.nan,
                                  improved_fraction=float(np.mean(np.array(drops) > 0)) if drops else math.nan,
                                  grids=grids)
    return out


def overfit_diagnostic(train_logs, heldout_logs=None):
    """Training loss and held-out curves per variant, from the CSV logs written by ``train``."""
    heldout_logs = heldout_logs or {}
    curves = OrderedDict()
    for variant, filename in train_logs.items():
        train = read_log(filename).columns
        heldout = read_log(heldout_logs[variant]).columns if variant in heldout_logs else {}
        curves[variant] = AttributeDict(steps=train.get('step', []),
                                        loss_final=train.get('loss_final', []),
                                        loss_initial=train.get('loss_initial', []),
                                        heldout_steps=heldout.get('step', []),
                                        heldout_loss=heldout.get('heldout_loss', []),
                                        heldout_accuracy=heldout.get('heldout_accuracy', []))
    return curves


def write_diagnostics(diagnostics, output_dir):
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(str(output_dir / 'diagnostics.json'), 'w') as f:
        json.dump(_finite(to_plain(diagnostics)), f, indent=2)
    return output_dir / 'diagnostics.json'


def _finite(obj):
    # JSON has no inf/nan
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return 'inf' if obj > 0 else ('-inf' if obj < 0 else None)
    return obj
