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


from gradnet_tools.core import ConfigError, SequenceError
from gradnet_tools.data import (Sequence, box_center, center_box, crop_patch, generate_sequence, generate_suite,
                                load_sequence, load_sequences, export_sequence, read_boxes, write_boxes,
                                build_training_set)
from gradnet_tools.net import NetConfig
from gradnet_tools.training import label_function
from pathlib import Path
import cv2
import numpy as np
import pytest


def test_box_center_roundtrip():
    box = np.array([10.0, 20.0, 30.0, 15.0])
    assert np.allclose(box_center(box), [24.5, 27.0])
    assert np.allclose(center_box(box_center(box), box[2:]), box)


def test_generate_deterministic(scene):
    a = generate_sequence(scene)
    b = generate_sequence(scene)
    assert np.array_equal(a.boxes, b.boxes)
    for fa, fb in zip(a.frames(), b.frames()):
        assert np.array_equal(fa, fb)

    scene['seed'] = 8
    c = generate_sequence(scene)
    assert not np.array_equal(a.frame(0), c.frame(0))


def test_generate_static(scene):
    seq = generate_sequence(scene)
    assert len(seq) == 10
    assert (seq.boxes == seq.boxes[0]).all()
    assert seq.attributes == []


def test_generate_constant_velocity(scene):
    scene.update(frame_width=320, length=50, velocity=[2.0, 0.0])
    seq = generate_sequence(scene)
    centers = np.array([box_center(b) for b in seq.boxes])
    assert centers[-1][0] - centers[0][0] == 98
    assert centers[-1][1] == centers[0][1]


def test_generate_stays_inside(scene):
    scene.update(length=200, velocity=[4.0, 3.0], jitter=1.0)
    seq = generate_sequence(scene)
    assert (seq.boxes[:, 0] >= 0).all() and (seq.boxes[:, 1] >= 0).all()
    assert (seq.boxes[:, 0] + seq.boxes[:, 2] <= scene['frame_width']).all()
    assert (seq.boxes[:, 1] + seq.boxes[:, 3] <= scene['frame_height']).all()


def test_groundtruth_matches_rendering(scene):
    seq = generate_sequence(scene)
    frame = seq.frame(3)
    x, y, w, h = seq.boxes[3].astype(int)
    # target colors are drawn in [100, 255], the background stays below
    assert (frame[y:y + h, x:x + w] >= 100).all()
    border = np.concatenate([frame[y - 1, x:x + w], frame[y + h, x:x + w], frame[y:y + h, x - 1], frame[y:y + h, x + w]])
    assert (border < 100).all()


def test_generate_attributes(scene):
    scene.update(distractors=2, occlusions=[[3, 5]], drift_rate=0.1)
    seq = generate_sequence(scene)
    assert set(seq.attributes) == {'distractors', 'occlusion', 'drift'}
    # occluder color
    x, y, w, h = seq.boxes[4].astype(int)
    assert (seq.frame(4)[y:y + h, x:x + w] == 128).all()


def test_generate_infeasible(scene):
    scene['target_width'] = 60
    with pytest.raises(ConfigError):
        generate_sequence(scene)

    scene['target_width'] = 24
    scene['unknown'] = 1
    with pytest.raises(ConfigError):
        generate_sequence(scene)


def test_generate_suite(cfg):
    suite = generate_suite(cfg.synthetic, 'eval', count=3)
    again = generate_suite(cfg.synthetic, 'eval', count=3)
    assert [s.name for s in suite] == ['eval_000', 'eval_001', 'eval_002']
    assert all(len(s) == cfg.synthetic.suite.length for s in suite)
    for a, b in zip(suite, again):
        assert np.array_equal(a.boxes, b.boxes)


def test_crop_exact_copy(rng):
    frame = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    patch = crop_patch(frame, (9.5, 9.5), 20, 20)
    assert np.array_equal(patch, frame)


def test_crop_outside_is_mean_color(rng):
    frame = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    patch = crop_patch(frame, (-100, -100), 10, 10)
    mean = frame.reshape(-1, 3).mean(axis=0)
    assert patch.shape == (10, 10, 3)
    assert (np.abs(patch.astype(np.float64) - mean) <= 1).all()


def test_crop_half_outside(rng):
    frame = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    patch = crop_patch(frame, (-0.5, 9.5), 20, 20)
    assert np.array_equal(patch[:, 10:], frame[:, :10])
    mean = frame.reshape(-1, 3).mean(axis=0)
    assert (np.abs(patch[:, :10].astype(np.float64) - mean) <= 1).all()


def test_crop_resize(rng):
    frame = np.full((50, 50, 3), 77, dtype=np.uint8)
    patch = crop_patch(frame, (24.5, 24.5), 30, 45)
    assert patch.shape == (45, 45, 3)
    assert (patch == 77).all()


def write_otb(path, n_frames, boxes, sep=','):
    path = Path(str(path))
    (path / 'img').mkdir(parents=True)
    for i in range(n_frames):
        cv2.imwrite(str(path / 'img' / '{:04d}.jpg'.format(i + 1)), np.zeros((30, 40, 3), dtype=np.uint8))
    with open(str(path / 'groundtruth_rect.txt'), 'w') as f:
        for b in boxes:
            f.write(sep.join(str(v) for v in b) + '\n')


def test_load_sequence(tmpdir):
    path = tmpdir.join('Basketball')
    boxes = [[i + 1, 2, 10, 12] for i in range(5)]
    write_otb(path, 5, boxes, sep='\t')
    seq = load_sequence(str(path))
    assert seq.name == 'Basketball'
    assert len(seq) == 5
    # 1-based on disk, 0-based in memory
    assert np.array_equal(seq.boxes[0], [0, 1, 10, 12])
    assert seq.frame(4).shape == (30, 40, 3)


def test_load_sequence_separators(tmpdir):
    write_otb(tmpdir.join('tabs'), 3, [[1, 2, 3, 4]] * 3, sep='\t')
    write_otb(tmpdir.join('commas'), 3, [[1, 2, 3, 4]] * 3, sep=',')
    assert np.array_equal(load_sequence(str(tmpdir.join('tabs'))).boxes,
                          load_sequence(str(tmpdir.join('commas'))).boxes)


def test_load_sequence_errors(tmpdir):
    path = tmpdir.join('bad')
    write_otb(path, 10, [[1, 2, 3, 4]] * 9)
    with pytest.raises(SequenceError) as e:
        load_sequence(str(path))
    assert 'groundtruth_rect.txt' in str(e.value)

    with pytest.raises(SequenceError):
        load_sequence(str(tmpdir.join('missing')))

    path = tmpdir.join('garbage')
    write_otb(path, 2, [['a', 'b', 'c', 'd']] * 2)
    with pytest.raises(SequenceError) as e:
        load_sequence(str(path))
    assert ':1:' in str(e.value)


def test_export_load_roundtrip(scene, tmpdir):
    scene['occlusions'] = [[2, 4]]
    seq = generate_sequence(scene, name='synthetic_a')
    export_sequence(seq, str(tmpdir.join('synthetic_a')))
    loaded = load_sequences(str(tmpdir))
    assert len(loaded) == 1
    loaded = loaded[0]
    assert loaded.name == seq.name
    assert loaded.attributes == ['occlusion']
    assert np.array_equal(loaded.boxes, seq.boxes)
    for i in range(len(seq)):
        assert np.array_equal(loaded.frame(i), seq.frame(i))


def test_write_read_boxes(tmpdir):
    boxes = np.array([[0.0, 1.5, 10.0, 20.25], [3.0, 4.0, 5.0, 6.0]])
    filename = str(tmpdir.join('boxes.txt'))
    write_boxes(filename, boxes)
    assert open(filename).readline().strip() == '1,2.5,10,20.25'
    assert np.allclose(read_boxes(filename), boxes)


def frames_sequence(name, n):
    frames = [np.full((120, 160, 3), 10 * i, dtype=np.uint8) for i in range(n)]
    return Sequence(name, [[60, 40, 24, 24]] * n, frames=frames)


def test_build_training_set(cfg, net_cfg, rng):
    sequences = [frames_sequence('v{}'.format(i), 6) for i in range(10)]
    label_fn = label_function(cfg.training)
    dataset = build_training_set(sequences, 5, 2, rng, net_cfg, label_fn)
    assert len(dataset) == 50
    assert len(dataset.videos) == 10
    for p in dataset:
        a, b = p.frames
        assert a != b and abs(a - b) <= 2
        assert p.x.shape == (net_cfg.instance_size, net_cfg.instance_size, 3)
        assert p.z.shape == (net_cfg.exemplar_size, net_cfg.exemplar_size, 3)
        c = net_cfg.score_size // 2
        assert p.target_cell == (c, c)
        assert p.label.labels[c, c] == 1
        # frame i is filled with 10 * i
        assert (p.z == 10 * a).all() and (p.x == 10 * b).all()


def test_build_training_set_shift(cfg, net_cfg, rng):
    sequences = [frames_sequence('v', 4)]
    dataset = build_training_set(sequences, 20, 1, rng, net_cfg, label_function(cfg.training), max_shift=2)
    c = net_cfg.score_size // 2
    cells = {p.target_cell for p in dataset}
    assert len(cells) > 1
    assert all(abs(r - c) <= 2 and abs(col - c) <= 2 for r, col in cells)


def test_build_training_set_edge_cases(cfg, net_cfg, rng):
    label_fn = label_function(cfg.training)
    with pytest.raises(ValueError):
        build_training_set([frames_sequence('v', 4)], 2, 0, rng, net_cfg, label_fn)

    dataset = build_training_set([frames_sequence('single', 1), frames_sequence('v', 4)], 2, 1, rng, net_cfg, label_fn)
    assert list(dataset.videos) == ['v']


def test_paper_scale_geometry(cfg):
    net_cfg = NetConfig.from_config(dict(cfg.network, paper_scale=True))
    assert net_cfg.template_size == 6
    assert net_cfg.score_size == 17
    assert net_cfg.total_stride == 8
