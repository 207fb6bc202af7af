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

"""Online tracking.

The first frame builds the optimal template from (Z1, X1, Y1) and keeps h2(Z1). Every frame is
then localized over a scale pyramid with the current template. When the peak score exceeds
``reliability_factor * thre`` the search crop is stored as the reliable sample, and every
``update_interval`` frames the update branch is run again on (h2(Z1), X_i, Y_i). The resulting
template is blended with the initial one.
"""

from collections import namedtuple
from functools import partial
from pathlib import Path
from .data import box_center, center_box, crop_patch, exemplar_size, write_boxes
from .net import image_to_tensor, label_tensors
from .training import make_label
import json
import numpy as np
import torch
import torch.nn.functional as F
import logging

log = logging.getLogger(__name__)


# smallest threshold, when the first frame's peak score is not positive
MIN_THRESHOLD = 1e-6
# relative spread below which a response map is considered constant
FLAT_RESPONSE = 1e-6

TrackResult = namedtuple('TrackResult', 'name boxes scores events')
ReliableSample = namedtuple('ReliableSample', 'crop label frame')


class TrackerState(object):
    def __init__(self, center, size, h2z, initial_template, thre, z_sz, x_sz, frame_size):
        self.center = np.asarray(center, dtype=np.float64)
        self.size = np.asarray(size, dtype=np.float64)
        self.base_size = self.size.copy()
        self.h2z = h2z
        self.initial_template = initial_template
        self.template = initial_template
        self.thre = thre
        self.z_sz = z_sz
        self.x_sz = x_sz
        self.frame_size = frame_size   # (width, height)
        self.sample = None
        self.counter = 1
        self.events = []
        # search crop and predicted score cell of the last tracked frame
        self.last_crop = None
        self.last_cell = None

    @property
    def box(self):
        return center_box(self.center, self.size)


def blend_template(initial, updated, gamma):
    """(1 - gamma) * initial + gamma * updated"""
    if initial.shape != updated.shape:
        raise ValueError('Cannot blend templates of shapes {} and {}'.format(tuple(initial.shape), tuple(updated.shape)))
    if not 0 <= gamma <= 1:
        raise ValueError('Blend weight should be in [0, 1], got {}'.format(gamma))
    return (1 - gamma) * initial + gamma * updated


def is_reliable(max_score, thre, factor):
    return max_score > factor * thre


class GradNetTracker(object):
    """Tracker built around a trained GradNet model.

    ``online_update=False`` keeps the first-frame template for the whole sequence,
    ``gradient_step=False`` also skips the gradient update at initialization (plain siamese template).
    """

    def __init__(self, model, tracking_cfg, online_update=None, gradient_step=None, name='gradnet'):
        self.model = model.eval()
        self.cfg = tracking_cfg
        self.name = name
        self.online_update = tracking_cfg['online_update'] if online_update is None else online_update
        self.gradient_step = tracking_cfg['gradient_step'] if gradient_step is None else gradient_step
        self.net_cfg = model.net_cfg

        n = tracking_cfg['scale_num']
        self.scales = tracking_cfg['scale_step'] ** (np.arange(n) - (n - 1) / 2)
        self.center_scale = (n - 1) // 2
        self.response_up = tracking_cfg['response_up']
        self.up_size = self.response_up * (self.net_cfg.score_size - 1) + 1
        window = np.outer(np.hanning(self.up_size), np.hanning(self.up_size))
        self.window = window / window.sum()
        self.label_fn = partial(make_label, self.net_cfg.score_size, radius=tracking_cfg['label_radius'])

    @property
    def updates_template(self):
        return self.gradient_step and self.model.uses_gradient

    def _features(self, crops):
        with torch.no_grad():
            return self.model.search_features(image_to_tensor(np.stack(crops), self.model.dtype))

    def _generate(self, f2z, crop, label):
        labels, weights = label_tensors([label], self.model.dtype)
        return self.model.generate_template(f2z, self._features([crop]), labels, weights,
                                            update=self.updates_template, create_graph=False, second_order=False)

    def init(self, frame, box):
        """Build the optimal template from the first frame and its ground-truth box."""
        box = np.asarray(box, dtype=np.float64)
        if box[2] <= 0 or box[3] <= 0:
            raise ValueError('Degenerate initial box {}: width and height should be > 0'.format(box.tolist()))

        center = box_center(box)
        z_sz = exemplar_size(box, self.cfg['context'])
        x_sz = z_sz * self.net_cfg.instance_size / self.net_cfg.exemplar_size
        z = crop_patch(frame, center, z_sz, self.net_cfg.exemplar_size)
        x = crop_patch(frame, center, x_sz, self.net_cfg.instance_size)

        with torch.no_grad():
            f2z = self.model.shallow_features(image_to_tensor(z, self.model.dtype))
        c = self.net_cfg.score_size // 2
        result = self._generate(f2z, x, self.label_fn((c, c)))

        thre = result.final_scores.detach().max().item()
        if thre <= MIN_THRESHOLD:
            log.warning('First frame peak score {:.4g} is not positive, using threshold {}'.format(thre, MIN_THRESHOLD))
            thre = MIN_THRESHOLD

        state = TrackerState(center, box[2:], result.updated_feature.detach(), result.optimal_template.detach(),
                             thre, z_sz, x_sz, (frame.shape[1], frame.shape[0]))
        log.debug('Initialized tracker at {} with threshold {:.4f}'.format(box.tolist(), thre))
        return state

    def track_frame(self, state, frame):
        """Localize the target in ``frame``, returns (state, box, max_score)."""
        n_up = self.response_up
        scaled_x = state.x_sz * self.scales
        crops = [crop_patch(frame, state.center, s, self.net_cfg.instance_size) for s in scaled_x]
        with torch.no_grad():
            scores = self.model.score(state.template, self._features(crops))
            responses = F.interpolate(scores, size=(self.up_size, self.up_size), mode='bicubic',
                                      align_corners=True)[:, 0].cpu().numpy().astype(np.float64)
        raw_peaks = scores.reshape(len(crops), -1).max(dim=1).values.cpu().numpy()

        peaks = responses.reshape(len(crops), -1).max(axis=1)
        penalized = peaks - (1 - self.cfg['scale_penalty']) * np.abs(peaks)
        penalized[self.center_scale] = peaks[self.center_scale]
        best = self.center_scale
        for i in range(len(crops)):
            if penalized[i] > penalized[best]:
                best = i

        response = responses[best] - responses[best].min()
        # flat up to rounding: no evidence, the window alone decides
        if response.max() > FLAT_RESPONSE * max(1.0, np.abs(responses[best]).max()):
            response /= response.sum()
        else:
            response = np.zeros_like(response)
        wi = self.cfg['window_influence']
        response = (1 - wi) * response + wi * self.window
        r, c = np.unravel_index(np.argmax(response), response.shape)

        # displacement from the crop center: upsampled cells -> score cells -> crop pixels -> frame pixels
        half = (self.up_size - 1) / 2
        disp_cells = np.array([c - half, r - half]) / n_up
        disp_frame = disp_cells * self.net_cfg.total_stride * scaled_x[best] / self.net_cfg.instance_size
        state.center = state.center + disp_frame

        scale = (1 - self.cfg['scale_lr']) + self.cfg['scale_lr'] * self.scales[best]
        state.x_sz *= scale
        state.z_sz *= scale
        state.size = np.clip(state.size * scale, 0.2 * state.base_size, 5 * state.base_size)

        w, h = state.frame_size
        state.center = np.clip(state.center, [0, 0], [w - 1, h - 1])
        state.size = np.minimum(state.size, [w, h])

        center_cell = self.net_cfg.score_size // 2
        cell = np.clip(np.round(center_cell + disp_cells[::-1]).astype(int), 0, self.net_cfg.score_size - 1)
        state.last_crop = crops[best]
        state.last_cell = (int(cell[0]), int(cell[1]))
        state.counter += 1
        return state, state.box, float(raw_peaks[best])

    def select_reliable_sample(self, state, max_score):
        """Store the last search crop, labelled on the predicted cell, if its peak score is reliable."""
        if state.last_crop is None or not is_reliable(max_score, state.thre, self.cfg['reliability_factor']):
            return state
        state.sample = ReliableSample(state.last_crop, self.label_fn(state.last_cell), state.counter)
        state.events.append(dict(frame=state.counter, event='store', max_score=max_score))
        log.debug('frame {}: stored reliable sample (score {:.4f} > {:.4f})'
                  .format(state.counter, max_score, self.cfg['reliability_factor'] * state.thre))
        return state

    def maybe_update(self, state):
        """Every ``update_interval`` frames, rebuild the template from h2(Z1) and the reliable sample."""
        if not self.online_update or state.sample is None or state.counter % self.cfg['update_interval'] != 0:
            return state
        result = self._generate(state.h2z, state.sample.crop, state.sample.label)
        state.template = blend_template(state.initial_template, result.optimal_template.detach(), self.cfg['blend'])
        state.events.append(dict(frame=state.counter, event='update', sample_frame=state.sample.frame))
        log.debug('frame {}: updated template from the sample of frame {}'.format(state.counter, state.sample.frame))
        return state

    def step(self, state, frame):
        """One frame of the online loop: localize, store the reliable sample, update the template."""
        state, box, max_score = self.track_frame(state, frame)
        self.select_reliable_sample(state, max_score)
        self.maybe_update(state)
        return box, max_score

    def track(self, sequence):
        boxes = np.zeros((len(sequence), 4))
        scores = np.zeros(len(sequence))
        boxes[0] = sequence.boxes[0]
        state = self.init(sequence.frame(0), sequence.boxes[0])
        scores[0] = state.thre
        for i in range(1, len(sequence)):
            boxes[i], scores[i] = self.step(state, sequence.frame(i))
        return TrackResult(sequence.name, boxes, scores, state.events)


def write_results(result, output_dir):
    """``<name>.txt`` (1-based x,y,w,h per frame) and ``<name>.events.json``."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    write_boxes(output_dir / '{}.txt'.format(result.name), result.boxes)
    events = dict(name=result.name,
                  max_scores=[float(s) for s in result.scores],
                  updates=[e['frame'] for e in result.events if e['event'] == 'update'],
                  stores=[e['frame'] for e in result.events if e['event'] == 'store'],
                  events=result.events)
    with open(str(output_dir / '{}.events.json'.format(result.name)), 'w') as f:
        json.dump(events, f, indent=2)
    return output_dir / '{}.txt'.format(result.name)
