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

"""Sequences (synthetic or OTB-format on disk), crops and training pairs.

Boxes are kept internally as 0-based ``(x, y, w, h)`` arrays, with the pixel-center convention
``center = (x + (w - 1) / 2, y + (h - 1) / 2)``. Ground-truth files on disk are 1-based (OTB).
"""

from collections import namedtuple, OrderedDict
from pathlib import Path
from .core import ConfigError, SequenceError, AttributeDict, yaml_dump, yaml_load
import re
import cv2
import numpy as np
import logging

log = logging.getLogger(__name__)


IMAGE_EXTENSIONS = {'.jpg', '.jpeg', '.png', '.bmp'}
GROUNDTRUTH_FILES = ['groundtruth_rect.txt', 'groundtruth.txt']


class Sequence(object):
    """Ordered frames with one ground-truth box per frame.

    Frames are either kept in memory (synthetic sequences) or loaded lazily from image files.
    """

    def __init__(self, name, boxes, frames=None, frame_files=None, attributes=None, meta=None):
        self.name = name
        self.boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        self._frames = frames
        self.frame_files = frame_files
        self.attributes = list(attributes or [])
        self.meta = meta or {}
        n = len(frames) if frames is not None else len(frame_files)
        if n != len(self.boxes):
            raise SequenceError('Sequence {}: {} boxes for {} frames'.format(name, len(self.boxes), n))

    def __len__(self):
        return len(self.boxes)

    def frame(self, i):
        if self._frames is not None:
            return self._frames[i]
        filename = str(self.frame_files[i])
        img = cv2.imread(filename, cv2.IMREAD_COLOR)
        if img is None:
            raise SequenceError('Could not read image: {}'.format(filename))
        return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)

    def frames(self):
        for i in range(len(self)):
            yield self.frame(i)

    def __repr__(self):
        return '<Sequence {}: {} frames, attributes={}>'.format(self.name, len(self), self.attributes)


def box_center(box):
    x, y, w, h = box
    return np.array([x + (w - 1) / 2, y + (h - 1) / 2])


def center_box(center, size):
    """(cx, cy), (w, h) -> (x, y, w, h)"""
    return np.array([center[0] - (size[0] - 1) / 2, center[1] - (size[1] - 1) / 2, size[0], size[1]])


def exemplar_size(box, context):
    """Side of the square target crop: target plus a context margin of context * (w + h)."""
    w, h = box[2], box[3]
    p = context * (w + h)
    return np.sqrt((w + p) * (h + p))


def _round(v):
    return int(np.floor(v + 0.5))


def crop_patch(frame, center, size, out_size, border_value=None):
    """Square crop of side ``size`` centered on ``center`` = (cx, cy), resized to ``out_size``.

    Out-of-frame area is padded with the frame's mean color, resizing is bilinear.
    """
    size = max(1, _round(size))
    x0 = _round(center[0] - (size - 1) / 2)
    y0 = _round(center[1] - (size - 1) / 2)
    x1, y1 = x0 + size, y0 + size
    h, w = frame.shape[:2]

    if border_value is None:
        border_value = tuple(float(m) for m in frame.reshape(-1, frame.shape[2]).mean(axis=0))

    pad = max(0, -x0, -y0, x1 - w, y1 - h)
    if pad > 0:
        frame = cv2.copyMakeBorder(frame, pad, pad, pad, pad, cv2.BORDER_CONSTANT, value=border_value)

    patch = frame[y0 + pad:y1 + pad, x0 + pad:x1 + pad]
    if size != out_size:
        patch = cv2.resize(patch, (out_size, out_size), interpolation=cv2.INTER_LINEAR)
    return np.ascontiguousarray(patch)


# ---------------------------------------------------------------------------
# synthetic scenes

SCENE_KEYS = ['frame_width', 'frame_height', 'length', 'target_width', 'target_height', 'start',
              'shape', 'texture', 'texture_period', 'velocity', 'jitter', 'distractors',
              'similarity', 'distractor_speed', 'occlusions', 'drift_rate', 'clutter', 'seed']


class SyntheticSceneConfig(AttributeDict):
    """Parameters of one synthetic scene, validated against SCENE_KEYS."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.validate()

    def validate(self):
        for k in self:
            if k not in SCENE_KEYS:
                raise ConfigError('Unknown synthetic scene key: {}'.format(k))
        for k in SCENE_KEYS:
            if k not in self:
                raise ConfigError('Missing synthetic scene key: {}'.format(k))
        if self.length < 1:
            raise ConfigError('synthetic.scene.length: should be >= 1, got {}'.format(self.length))
        if self.target_width < 2 or self.target_height < 2:
            raise ConfigError('synthetic.scene.target_width/height: should be >= 2')
        # the motion model keeps the target at least one target size away from the borders
        if 3 * self.target_width > self.frame_width or 3 * self.target_height > self.frame_height:
            raise ConfigError('Target {}x{} is too large for a {}x{} frame (need 3x the target size)'
                              .format(self.target_width, self.target_height,
                                      self.frame_width, self.frame_height))
        if self.shape not in ('rect', 'ellipse'):
            raise ConfigError('synthetic.scene.shape: should be rect or ellipse, got {}'.format(self.shape))
        if self.texture not in ('stripes', 'checker', 'blob'):
            raise ConfigError('synthetic.scene.texture: should be stripes, checker or blob, got {}'
                              .format(self.texture))
        if not 0 <= self.similarity <= 1:
            raise ConfigError('synthetic.scene.similarity: should be in [0, 1], got {}'.format(self.similarity))
        for occ in self.occlusions:
            if len(occ) != 2 or occ[0] > occ[1]:
                raise ConfigError('synthetic.scene.occlusions: invalid interval {}'.format(occ))


def _palette(rng, n=3):
    return rng.uniform(100, 255, size=(n, 3))


def _texture(rng, kind, period, palette, height, width):
    yy, xx = np.mgrid[0:height, 0:width]
    if kind == 'stripes':
        idx = ((xx + yy // 2) // max(1, period)) % len(palette)
        return palette[idx]
    elif kind == 'checker':
        idx = ((xx // max(1, period)) + (yy // max(1, period))) % 2
        return palette[idx]
    # blob: smooth mixture of the palette colors
    weights = rng.random((max(2, height // period), max(2, width // period), len(palette)))
    weights = cv2.resize(weights, (width, height), interpolation=cv2.INTER_LINEAR)
    weights /= weights.sum(axis=2, keepdims=True)
    return weights @ palette


def _shape_mask(shape, height, width):
    if shape == 'rect':
        return np.ones((height, width), dtype=bool)
    yy, xx = np.mgrid[0:height, 0:width]
    cy, cx = (height - 1) / 2, (width - 1) / 2
    return ((yy - cy) / (height / 2)) ** 2 + ((xx - cx) / (width / 2)) ** 2 <= 1.0


def _background(rng, height, width, clutter):
    base = rng.uniform(20, 60, size=3)
    noise = rng.random((height // 8 + 2, width // 8 + 2, 3))
    noise = cv2.resize(noise, (width, height), interpolation=cv2.INTER_LINEAR)
    return base + clutter * 80 * noise


class _Mover(object):
    """Constant velocity plus gaussian jitter, bouncing off the allowed area."""

    def __init__(self, pos, velocity, jitter, lo, hi):
        self.pos = np.asarray(pos, dtype=np.float64)
        self.velocity = np.asarray(velocity, dtype=np.float64)
        self.jitter = jitter
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)

    def step(self, rng):
        new = self.pos + self.velocity
        if self.jitter > 0:
            new = new + self.jitter * rng.normal(size=2)
        for d in range(2):
            if new[d] < self.lo[d]:
                new[d] = 2 * self.lo[d] - new[d]
                self.velocity[d] = abs(self.velocity[d])
            elif new[d] > self.hi[d]:
                new[d] = 2 * self.hi[d] - new[d]
                self.velocity[d] = -abs(self.velocity[d])
            new[d] = min(max(new[d], self.lo[d]), self.hi[d])
        self.pos = new

    def top_left(self):
        return _round(self.pos[0]), _round(self.pos[1])


def _paste(frame, texture, mask, x, y):
    h, w = mask.shape
    region = frame[y:y + h, x:x + w]
    region[mask] = texture[mask]


def generate_sequence(cfg, name=None):
    """Render a synthetic sequence. The seed fully determines the frames, the ground truth is the
    exact extent of the rendered target shape."""
    cfg = SyntheticSceneConfig(cfg)
    rng = np.random.default_rng(cfg.seed)
    W, H = cfg.frame_width, cfg.frame_height
    tw, th = cfg.target_width, cfg.target_height

    background = _background(rng, H, W, cfg.clutter)
    palette = _palette(rng)
    drift_palette = _palette(rng)
    texture = _texture(rng, cfg.texture, cfg.texture_period, palette, th, tw)
    drift_texture = _texture(rng, cfg.texture, cfg.texture_period, drift_palette, th, tw)
    mask = _shape_mask(cfg.shape, th, tw)
    rows, cols = np.nonzero(mask)
    mask_box = (cols.min(), rows.min(), cols.max() - cols.min() + 1, rows.max() - rows.min() + 1)

    lo = (tw, th)
    hi = (W - 2 * tw, H - 2 * th)
    if cfg.start is not None:
        start = np.asarray(cfg.start, dtype=np.float64)
    else:
        start = np.array([rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1])])
    target = _Mover(start, cfg.velocity, cfg.jitter, lo, hi)

    distractors = []
    for _ in range(cfg.distractors):
        angle = rng.uniform(0, 2 * np.pi)
        velocity = cfg.distractor_speed * np.array([np.cos(angle), np.sin(angle)])
        pos = np.array([rng.uniform(0, W - tw), rng.uniform(0, H - th)])
        other = _texture(rng, cfg.texture, cfg.texture_period, _palette(rng), th, tw)
        clone = cfg.similarity * texture + (1 - cfg.similarity) * other
        distractors.append((_Mover(pos, velocity, cfg.jitter, (0, 0), (W - tw, H - th)), clone))

    frames, boxes = [], []
    for t in range(cfg.length):
        if t > 0:
            target.step(rng)
            for mover, _ in distractors:
                mover.step(rng)

        frame = background.copy()
        for mover, clone in distractors:
            dx, dy = mover.top_left()
            _paste(frame, clone, mask, dx, dy)

        a = min(1.0, cfg.drift_rate * t)
        x, y = target.top_left()
        _paste(frame, (1 - a) * texture + a * drift_texture, mask, x, y)

        if any(start_ <= t < end_ for start_, end_ in cfg.occlusions):
            m = 2
            frame[max(0, y - m):y + th + m, max(0, x - m):x + tw + m] = 128.0

        frames.append(np.clip(np.floor(frame + 0.5), 0, 255).astype(np.uint8))
        boxes.append([x + mask_box[0], y + mask_box[1], mask_box[2], mask_box[3]])

    attributes = []
    if cfg.distractors:
        attributes.append('distractors')
    if cfg.occlusions:
        attributes.append('occlusion')
    if cfg.drift_rate > 0:
        attributes.append('drift')

    return Sequence(name or 'synthetic_{}'.format(cfg.seed), boxes, frames=frames,
                    attributes=attributes, meta=dict(seed=cfg.seed))


def generate_suite(synthetic_cfg, kind='eval', count=None, seed=None):
    """A list of synthetic sequences with randomized attributes, for training or evaluation."""
    suite = synthetic_cfg['suite']
    count = suite['{}_count'.format(kind)] if count is None else count
    seed = suite['{}_seed'.format(kind)] if seed is None else seed
    rng = np.random.default_rng(seed)

    sequences = []
    for i in range(count):
        scene = dict(synthetic_cfg['scene'])
        size = int(rng.integers(suite['target_size'][0], suite['target_size'][1] + 1))
        aspect = rng.uniform(0.75, 1.33)
        speed = rng.uniform(*suite['speed'])
        angle = rng.uniform(0, 2 * np.pi)
        scene.update(length=suite['length'],
                     target_width=max(2, int(size * np.sqrt(aspect))),
                     target_height=max(2, int(size / np.sqrt(aspect))),
                     velocity=[float(speed * np.cos(angle)), float(speed * np.sin(angle))],
                     distractors=int(rng.integers(suite['distractors'][0], suite['distractors'][1] + 1)),
                     drift_rate=float(rng.uniform(*suite['drift_rate'])),
                     shape=str(rng.choice(['rect', 'ellipse'])),
                     texture=str(rng.choice(['stripes', 'checker', 'blob'])),
                     occlusions=[],
                     start=None,
                     seed=int(rng.integers(2**31)))
        if rng.random() < suite['occlusion_probability']:
            length = int(rng.integers(suite['occlusion_length'][0], suite['occlusion_length'][1] + 1))
            start = int(rng.integers(suite['length'] // 3, max(suite['length'] // 3 + 1, 2 * suite['length'] // 3)))
            scene['occlusions'] = [[start, min(start + length, suite['length'])]]
        sequences.append(generate_sequence(scene, name='{}_{:03d}'.format(kind, i)))
    return sequences


# ---------------------------------------------------------------------------
# OTB layout

def parse_box_line(line, filename, lineno):
    parts = [p for p in re.split(r'[,\s]+', line.strip()) if p]
    if len(parts) != 4:
        raise SequenceError('{}:{}: expected 4 values x,y,w,h, got "{}"'.format(filename, lineno, line.strip()))
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise SequenceError('{}:{}: could not parse "{}" as numbers'.format(filename, lineno, line.strip()))


def read_boxes(filename, one_based=True):
    """Read an OTB box file (comma or tab separated), returning 0-based boxes."""
    boxes = []
    with open(str(filename)) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            boxes.append(parse_box_line(line, filename, lineno))
    boxes = np.array(boxes, dtype=np.float64).reshape(-1, 4)
    if one_based:
        boxes[:, :2] -= 1
    return boxes


def write_boxes(filename, boxes, one_based=True):
    boxes = np.array(boxes, dtype=np.float64).reshape(-1, 4)
    if one_based:
        boxes[:, :2] += 1
    with open(str(filename), 'w') as f:
        for b in boxes:
            f.write(','.join('{:.4f}'.format(v).rstrip('0').rstrip('.') for v in b) + '\n')


def load_sequence(path):
    """Load a sequence in the OTB layout: numbered images (in ``img/`` or the directory itself)
    and a ground-truth file with one box per frame."""
    path = Path(path)
    if not path.is_dir():
        raise SequenceError('Not a sequence directory: {}'.format(path))

    gt_file = next((path / g for g in GROUNDTRUTH_FILES if (path / g).exists()), None)
    if gt_file is None:
        raise SequenceError('No ground-truth file ({}) in {}'.format(' or '.join(GROUNDTRUTH_FILES), path))

    img_dir = path / 'img' if (path / 'img').is_dir() else path
    frame_files = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    boxes = read_boxes(gt_file)
    if len(boxes) != len(frame_files):
        raise SequenceError('{}: {} ground-truth boxes for {} frames'.format(gt_file, len(boxes), len(frame_files)))

    attributes, meta = [], {}
    meta_file = path / 'meta.yaml'
    if meta_file.exists():
        meta = yaml_load(meta_file.read_text()) or {}
        attributes = meta.get('attributes', [])

    return Sequence(path.name, boxes, frame_files=frame_files, attributes=attributes, meta=meta)


def load_sequences(path):
    """A single sequence directory, or a directory of sequence directories."""
    path = Path(path)
    if any((path / g).exists() for g in GROUNDTRUTH_FILES):
        return [load_sequence(path)]
    return [load_sequence(p) for p in sorted(path.iterdir()) if p.is_dir()]


def export_sequence(sequence, path):
    """Write a sequence in the OTB layout, so that every tool handles it like real data."""
    path = Path(path)
    (path / 'img').mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(sequence.frames()):
        cv2.imwrite(str(path / 'img' / '{:04d}.png'.format(i + 1)), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    write_boxes(path / 'groundtruth_rect.txt', sequence.boxes)
    (path / 'meta.yaml').write_text(yaml_dump(dict(name=sequence.name, length=len(sequence),
                                                   attributes=sequence.attributes, **sequence.meta)))
    return path


# ---------------------------------------------------------------------------
# training pairs

TrainingPair = namedtuple('TrainingPair', ['x',             # search region crop, uint8 (H, W, 3)
                                           'z',             # target patch crop, uint8 (h, w, 3)
                                           'label',         # LabelMap
                                           'video_id',
                                           'frames',        # (z frame, x frame)
                                           'target_cell'])  # (row, col) of the target in the score map


class TrainingSet(object):
    def __init__(self, pairs):
        self.pairs = list(pairs)
        self.videos = OrderedDict()
        for i, p in enumerate(self.pairs):
            self.videos.setdefault(p.video_id, []).append(i)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def __iter__(self):
        return iter(self.pairs)


def make_pair(seq, a, b, net_cfg, label_fn, context, shift, video_id=None):
    """Target patch from frame a, search region from frame b, with the target displaced by
    ``shift`` = (rows, cols) score-map cells from the center of the search region."""
    box_a, box_b = seq.boxes[a], seq.boxes[b]
    frame_a, frame_b = seq.frame(a), seq.frame(b)

    z_sz = exemplar_size(box_a, context)
    z = crop_patch(frame_a, box_center(box_a), z_sz, net_cfg.exemplar_size)

    x_sz = exemplar_size(box_b, context) * net_cfg.instance_size / net_cfg.exemplar_size
    scale = x_sz / net_cfg.instance_size
    offset = np.array([shift[1], shift[0]], dtype=np.float64) * net_cfg.total_stride * scale
    x = crop_patch(frame_b, box_center(box_b) - offset, x_sz, net_cfg.instance_size)

    c = net_cfg.score_size // 2
    target_cell = (c + int(shift[0]), c + int(shift[1]))
    return TrainingPair(x, z, label_fn(net_cfg.score_size, target_cell), video_id or seq.name, (a, b), target_cell)


def build_training_set(sequences, pairs_per_video, max_frame_gap, rng, net_cfg, label_fn,
                       context=0.5, max_shift=0):
    """Pairs (X, Z, Y) where X and Z come from different frames, at most max_frame_gap apart,
    of the same video. ``label_fn(map_size, target_cell)`` builds the label maps."""
    if max_frame_gap < 1:
        raise ValueError('max_frame_gap should be >= 1: target patch and search region must come from different frames')
    max_shift = min(max_shift, net_cfg.score_size // 2)

    pairs = []
    for seq in sequences:
        n = len(seq)
        if n < 2:
            log.warning('Sequence {} has {} frame(s), skipping it for training'.format(seq.name, n))
            continue
        for _ in range(pairs_per_video):
            a = int(rng.integers(n))
            candidates = [b for b in range(max(0, a - max_frame_gap), min(n, a + max_frame_gap + 1)) if b != a]
            b = int(rng.choice(candidates))
            shift = rng.integers(-max_shift, max_shift + 1, size=2)
            pairs.append(make_pair(seq, a, b, net_cfg, label_fn, context, shift))

    log.info('Built training set: {} pairs from {} videos'.format(len(pairs), len({p.video_id for p in pairs})))
    return TrainingSet(pairs)
