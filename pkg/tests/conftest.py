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

import os
import tempfile

# keep the user's ~/.gradnet_tools (config file, log file) out of the tests
os.environ['GRADNET_TOOLS_HOMEDIR'] = tempfile.mkdtemp(prefix='gradnet_tools_home_')

import numpy as np
import pytest
import torch
from gradnet_tools.core import load_config
from gradnet_tools.net import NetConfig
from gradnet_tools.update_branch import build_model


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='also run the end-to-end training / tracking tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: trains models for minutes, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='need --runslow option to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


# small enough to train a few steps in a unit test
TINY_TRAINING = {
    'training': {'steps': 3, 'pretrain_steps': 2, 'batch_size': 2, 'pairs_per_video': 3,
                 'heldout_pairs': 0, 'log_every': 1, 'eval_every': 0},
    'synthetic': {'suite': {'train_count': 3, 'eval_count': 2, 'heldout_count': 2, 'length': 8}},
}


@pytest.fixture
def cfg():
    return load_config()


@pytest.fixture
def tiny_cfg():
    return load_config(overrides=TINY_TRAINING)


@pytest.fixture
def net_cfg(cfg):
    return NetConfig.from_config(cfg.network)


@pytest.fixture
def net_cfg64(cfg):
    return NetConfig.from_config(dict(cfg.network, dtype='float64'))


@pytest.fixture
def model(net_cfg):
    return build_model(net_cfg, 'ours', seed=0)


@pytest.fixture
def model64(net_cfg64):
    return build_model(net_cfg64, 'ours', seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def scene(cfg):
    """A static, distractor-free synthetic scene."""
    s = dict(cfg.synthetic.scene)
    s.update(length=10, velocity=[0.0, 0.0], jitter=0.0, distractors=0, drift_rate=0.0,
             occlusions=[], start=[60, 40], seed=7)
    return s


def randomize_u2(model, scale=0.1, seed=0):
    """Give U2's output layer nonzero weights, as if trained midway."""
    g = torch.Generator().manual_seed(seed)
    last = model.u2.layers[-1]
    with torch.no_grad():
        last.weight.copy_(scale * torch.randn(last.weight.shape, generator=g, dtype=last.weight.dtype))
        last.bias.copy_(scale * torch.randn(last.bias.shape, generator=g, dtype=last.bias.dtype))
    return model
