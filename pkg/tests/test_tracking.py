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


from conftest import randomize_u2
from gradnet_tools.data import Sequence, generate_sequence, crop_patch
from gradnet_tools.tracking import GradNetTracker, blend_template, is_reliable, write_results
from gradnet_tools.update_branch import build_model
import json
import numpy as np
import pytest
import torch
import warnings


@pytest.fixture
def tracker(model, cfg):
    return GradNetTracker(model, cfg.tracking)


@pytest.fixture
def sequence(scene):
    return generate_sequence(scene)


def test_blend_template():
    initial = torch.randn(2, 3, 4, 4, generator=torch.Generator().manual_seed(0))
    updated = torch.randn(2, 3, 4, 4, generator=torch.Generator().manual_seed(1))
    assert torch.equal(blend_template(initial, updated, 0.0), initial)
    assert torch.equal(blend_template(initial, updated, 1.0), updated)
    assert torch.equal(blend_template(initial, -initial, 0.5), torch.zeros_like(initial))

    with pytest.raises(ValueError):
        blend_template(initial, updated[:1], 0.5)
    with pytest.raises(ValueError):
        blend_template(initial, updated, 1.5)


def test_is_reliable():
    assert not is_reliable(0.4, 1.0, 0.5)
    assert not is_reliable(0.5, 1.0, 0.5)
    assert is_reliable(1.0, 1.0, 0.5)


def test_init(tracker, sequence):
    state = tracker.init(sequence.frame(0), sequence.boxes[0])
    assert np.allclose(state.box, sequence.boxes[0])
    assert state.counter == 1
    assert state.thre > 0
    assert state.sample is None
    # zero-initialized U2: the optimal template is the plain embedding of the target
    assert state.h2z.shape[1:] == (tracker.net_cfg.shallow_channels, tracker.net_cfg.shallow_size,
                                   tracker.net_cfg.shallow_size)
    assert torch.equal(state.template, state.initial_template)


def test_init_degenerate_box(tracker, sequence):
    with pytest.raises(ValueError):
        tracker.init(sequence.frame(0), [10, 10, 0, 20])
    with pytest.raises(ValueError):
        tracker.init(sequence.frame(0), [10, 10, 20, -1])


def test_track_first_box_is_groundtruth(tracker, sequence):
    result = tracker.track(sequence)
    assert np.array_equal(result.boxes[0], sequence.boxes[0])
    assert result.boxes.shape == (len(sequence), 4)
    assert np.isfinite(result.boxes).all()


def test_track_deterministic(tracker, sequence):
    a = tracker.track(sequence)
    b = tracker.track(sequence)
    assert np.array_equal(a.boxes, b.boxes)
    assert a.events == b.events


def test_zero_frame_keeps_box(tracker, sequence):
    state = tracker.init(sequence.frame(0), sequence.boxes[0])
    before = state.box.copy()
    state, box, _ = tracker.track_frame(state, np.zeros_like(sequence.frame(0)))
    assert np.allclose(box, before)


def test_update_cadence(tracker, sequence):
    state = tracker.init(sequence.frame(0), sequence.boxes[0])
    tracker.track_frame(state, sequence.frame(1))
    tracker.select_reliable_sample(state, 2 * state.thre)
    assert state.sample is not None

    updates = []
    for counter in range(2, 21):
        state.counter = counter
        n = len(state.events)
        tracker.maybe_update(state)
        if len(state.events) > n:
            updates.append(counter)
    assert updates == [5, 10, 15, 20]


def test_no_update_without_sample(tracker, sequence):
    state = tracker.init(sequence.frame(0), sequence.boxes[0])
    tracker.track_frame(state, sequence.frame(1))
    tracker.select_reliable_sample(state, 0.4 * state.thre)
    assert state.sample is None
    state.counter = 5
    tracker.maybe_update(state)
    assert state.events == []
    assert torch.equal(state.template, state.initial_template)


def test_update_blends_with_initial(model, cfg, sequence):
    tracker = GradNetTracker(randomize_u2(model), cfg.tracking)
    state = tracker.init(sequence.frame(0), sequence.boxes[0])
    tracker.track_frame(state, sequence.frame(1))
    tracker.select_reliable_sample(state, state.thre)
    state.counter = 5
    tracker.maybe_update(state)
    assert state.events[-1]['event'] == 'update'

    result = tracker._generate(state.h2z, state.sample.crop, state.sample.label)
    expected = 0.5 * state.initial_template + 0.5 * result.optimal_template.detach()
    assert torch.allclose(state.template, expected)
    assert not torch.equal(state.template, state.initial_template)


def test_online_update_disabled(model, cfg, sequence):
    tracker = GradNetTracker(model, cfg.tracking, online_update=False)
    result = tracker.track(sequence)
    assert [e for e in result.events if e['event'] == 'update'] == []


def test_matching_variant_never_updates_template(net_cfg, cfg, sequence):
    tracker = GradNetTracker(build_model(net_cfg, 'no_MG', seed=0), cfg.tracking)
    assert not tracker.updates_template
    state = tracker.init(sequence.frame(0), sequence.boxes[0])
    with torch.no_grad():
        assert torch.equal(state.template, tracker.model.u1(state.h2z))


def test_write_results(tracker, sequence, tmpdir):
    result = tracker.track(sequence)
    filename = write_results(result, str(tmpdir))
    lines = open(str(filename)).read().splitlines()
    assert len(lines) == len(sequence)
    x, y, w, h = sequence.boxes[0]
    assert lines[0] == '{:g},{:g},{:g},{:g}'.format(x + 1, y + 1, w, h)

    events = json.load(open(str(tmpdir.join(sequence.name + '.events.json'))))
    assert events['name'] == sequence.name
    assert len(events['max_scores']) == len(sequence)
    assert all(f % 5 == 0 for f in events['updates'])


# A bright 15x15 square on black. With context 1.0 the target crop is exactly 45 px and the
# search crop 77 px, so no resizing happens.
SQUARE_BOX = [73.0, 53.0, 15.0, 15.0]


def square_frame(dx=0, visible=True):
    frame = np.zeros((120, 160, 3), dtype=np.uint8)
    if visible:
        x, y, w, h = (int(v) for v in SQUARE_BOX)
        frame[y:y + h, x + dx:x + dx + w] = 255
    return frame


def sharp_model(net_cfg):
    """Averaging filters everywhere: features are blurred copies of the frame, so the
    cross-correlation peaks where the square is aligned with the template."""
    model = build_model(net_cfg, 'ours', seed=0)
    with torch.no_grad():
        for layer in model.backbone.layers:
            conv = layer[0]
            conv.weight.fill_(1.0 / (conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]))
            conv.bias.zero_()
    model.u1.copy_from(model.backbone)
    return model


@pytest.fixture
def square_tracking(cfg):
    return dict(cfg.tracking, context=1.0, scale_num=1)


def raw_scores(tracker, state, frame):
    crop = crop_patch(frame, state.center, state.x_sz, tracker.net_cfg.instance_size)
    with torch.no_grad():
        return tracker.model.score(state.template, tracker._features([crop]))[0, 0].numpy()


def test_init_peak_at_center(net_cfg, square_tracking):
    tracker = GradNetTracker(sharp_model(net_cfg), square_tracking)
    state = tracker.init(square_frame(), SQUARE_BOX)
    assert state.z_sz == net_cfg.exemplar_size and state.x_sz == net_cfg.instance_size
    scores = raw_scores(tracker, state, square_frame())
    c = net_cfg.score_size // 2
    assert np.unravel_index(np.argmax(scores), scores.shape) == (c, c)
    assert state.thre > 0
    assert np.isclose(scores.max(), state.thre, rtol=1e-5)


def test_static_target_keeps_box(net_cfg, square_tracking):
    tracker = GradNetTracker(sharp_model(net_cfg), square_tracking)
    sequence = Sequence('static', [SQUARE_BOX] * 8, frames=[square_frame() for _ in range(8)])
    result = tracker.track(sequence)
    assert np.allclose(result.boxes, SQUARE_BOX)


def test_shift_by_one_stride(net_cfg, square_tracking):
    square_tracking['window_influence'] = 0.0
    tracker = GradNetTracker(sharp_model(net_cfg), square_tracking)
    state = tracker.init(square_frame(), SQUARE_BOX)
    stride = net_cfg.total_stride
    shifted = square_frame(dx=stride)

    c = net_cfg.score_size // 2
    scores = raw_scores(tracker, state, shifted)
    assert np.unravel_index(np.argmax(scores), scores.shape) == (c, c + 1)

    state, box, max_score = tracker.track_frame(state, shifted)
    assert np.allclose(box, [SQUARE_BOX[0] + stride, SQUARE_BOX[1], SQUARE_BOX[2], SQUARE_BOX[3]])
    assert np.isclose(max_score, state.thre, rtol=1e-5)


def test_occluded_frames_store_nothing(net_cfg, square_tracking):
    tracker = GradNetTracker(sharp_model(net_cfg), square_tracking)
    # frames 5..9 (0-based) are black
    frames = [square_frame(visible=not 5 <= i <= 9) for i in range(12)]
    result = tracker.track(Sequence('occluded', [SQUARE_BOX] * 12, frames=frames))
    stores = [e['frame'] for e in result.events if e['event'] == 'store']
    # events count frames from 1 at the first one
    assert stores == [2, 3, 4, 5, 11, 12]
    assert np.allclose(result.boxes, SQUARE_BOX)
    assert (result.scores[5:10] == 0).all()


def test_reliability_threshold_monotonic(model, cfg, sequence):
    stores = []
    for factor in (0.0, 0.5, 0.9, 1.1):
        tracker = GradNetTracker(model, dict(cfg.tracking, reliability_factor=factor), online_update=False)
        result = tracker.track(sequence)
        stores.append({e['frame'] for e in result.events if e['event'] == 'store'})
    for looser, stricter in zip(stores, stores[1:]):
        assert stricter <= looser
    assert stores[0]


def test_init_threshold_is_plain_float(model, cfg, sequence):
    tracker = GradNetTracker(randomize_u2(model), cfg.tracking)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        state = tracker.init(sequence.frame(0), sequence.boxes[0])
    assert isinstance(state.thre, float)
    assert not any('requires_grad' in str(w.message) for w in caught)
