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

"""Checkpoint archive: a zip file containing ``manifest.yaml`` and one raw array per parameter.

Each array is stored as its row-major little-endian bytes under ``arrays/<name>``, the manifest
records its dtype and shape, so that the format does not depend on torch or numpy pickles.
"""

from collections import OrderedDict
from os.path import exists
from pathlib import Path
from .core import CheckpointError, yaml_dump, yaml_load, to_plain
from .net import NetConfig
from .update_branch import GradNet
import zipfile
import numpy as np
import torch
import logging

log = logging.getLogger(__name__)


FORMAT_VERSION = 1


class Checkpoint(object):
    """Named parameter arrays plus the configuration they were trained with."""

    def __init__(self, params, network, training=None, step=0, seed=None, variant='ours'):
        self.params = OrderedDict(params)
        self.network = to_plain(network)
        self.training = to_plain(training or {})
        self.step = int(step)
        self.seed = seed
        self.variant = variant

    @staticmethod
    def from_model(model, training=None, step=0, seed=None):
        params = OrderedDict((name, t.detach().cpu().numpy().copy())
                             for name, t in model.state_dict().items())
        return Checkpoint(params, model.net_cfg.as_dict(), training=training, step=step,
                          seed=seed, variant=model.variant)

    def net_config(self):
        return NetConfig(**self.network)

    def build_model(self, variant=None):
        """Instantiate a GradNet and load the parameters into it."""
        model = GradNet(self.net_config(), variant=variant or self.variant)
        self.load_into(model)
        return model

    def load_into(self, model, strict=True):
        state = model.state_dict()
        missing = [name for name in state if name not in self.params]
        if strict and missing:
            raise CheckpointError('Checkpoint is missing parameters: {}'.format(', '.join(missing)))
        new_state = OrderedDict()
        for name, t in state.items():
            if name not in self.params:
                new_state[name] = t
                continue
            arr = self.params[name]
            if tuple(arr.shape) != tuple(t.shape):
                raise CheckpointError('Parameter {} has shape {} in checkpoint but {} in model'
                                      .format(name, arr.shape, tuple(t.shape)))
            new_state[name] = torch.from_numpy(arr.copy()).to(t.dtype)
        model.load_state_dict(new_state)
        return missing

    def manifest(self):
        return dict(format_version=FORMAT_VERSION,
                    step=self.step,
                    seed=self.seed,
                    variant=self.variant,
                    network=self.network,
                    training=self.training,
                    arrays=[dict(name=name, dtype=arr.dtype.str, shape=list(arr.shape),
                                 file='arrays/{}'.format(name))
                            for name, arr in self.params.items()])

    def save(self, filename):
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        log.info('Saving checkpoint {} (variant={}, step={})'.format(filename, self.variant, self.step))
        try:
            with zipfile.ZipFile(filename, 'w', compression=zipfile.ZIP_DEFLATED) as z:
                z.writestr(_zipinfo('manifest.yaml'), yaml_dump(self.manifest()))
                for name, arr in self.params.items():
                    data = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder('<'), copy=False)
                    z.writestr(_zipinfo('arrays/{}'.format(name)), data.tobytes(order='C'))
        except OSError as e:
            raise CheckpointError('Could not write checkpoint {}: {}'.format(filename, e))
        return filename

    @staticmethod
    def load(filename):
        if not exists(filename):
            raise CheckpointError('Checkpoint not found: {}'.format(filename))
        log.debug('Loading checkpoint {}'.format(filename))
        try:
            with zipfile.ZipFile(filename) as z:
                manifest = yaml_load(z.read('manifest.yaml').decode('utf-8'))
                if manifest.get('format_version') != FORMAT_VERSION:
                    raise CheckpointError('Checkpoint {} has unsupported format version {}'
                                          .format(filename, manifest.get('format_version')))
                params = OrderedDict()
                for entry in manifest['arrays']:
                    dtype = np.dtype(entry['dtype'])
                    arr = np.frombuffer(z.read(entry['file']), dtype=dtype)
                    params[entry['name']] = arr.reshape(entry['shape']).astype(dtype.newbyteorder('='))
        except (zipfile.BadZipFile, KeyError, ValueError) as e:
            raise CheckpointError('Corrupt checkpoint {}: {}'.format(filename, e))

        return Checkpoint(params, manifest['network'], training=manifest.get('training'),
                          step=manifest.get('step', 0), seed=manifest.get('seed'),
                          variant=manifest.get('variant', 'ours'))

    def __repr__(self):
        return '<Checkpoint variant={} step={} arrays={}>'.format(self.variant, self.step, len(self.params))


def _zipinfo(name):
    # fixed timestamp, same seed -> same archive bytes
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    return info


def load_model(filename, variant=None):
    return Checkpoint.load(filename).build_model(variant=variant)
