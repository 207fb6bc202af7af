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

"""Differentiable building blocks of the tracker: the search-region feature extractor f_x,
the shallow target features f_2, the cross-correlation scoring and the logistic loss.

All tensors follow the torch convention and carry a leading batch dimension:
feature maps are (N, C, H, W), templates (T, C, h, w) and score maps (N, 1, H', W').
Unbatched 3-D feature maps / templates are accepted where noted.
"""

from collections import namedtuple
from .core import ConfigError, NumericalError
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
import logging

log = logging.getLogger(__name__)


# |s*y| is clamped to this value inside log(1 + exp(-s*y))
LOGIT_CLAMP = 50.0

DTYPES = {'float32': torch.float32, 'float64': torch.float64}


# labels: +1/-1 per cell, weights: nonnegative, summing to 1 over a map
LabelMap = namedtuple('LabelMap', 'labels weights')


def conv_output_size(size, kernel, stride):
    return (size - kernel) // stride + 1


class NetConfig(object):
    """Geometry of the network: backbone layers, crop sizes, and the update branch options.

    The Z path is f_2 (backbone layers up to ``shallow_layer``) followed by U1, which mirrors
    the remaining backbone layers. The X path is the full backbone. Both must agree so that
    cross-correlating the template over the search features yields the score map.
    """

    def __init__(self, layers, exemplar_size, instance_size, shallow_layer=2, out_scale=0.02,
                 batch_norm=False, u2_layers=1, u2_hidden=32, u2_standardize=False,
                 dtype='float32', paper_scale=False):
        self.layers = [dict(out=int(l['out']), kernel=int(l['kernel']), stride=int(l['stride']),
                            pool=list(l['pool']) if l.get('pool') else None)
                       for l in layers]
        self.exemplar_size = int(exemplar_size)
        self.instance_size = int(instance_size)
        self.shallow_layer = int(shallow_layer)
        self.out_scale = float(out_scale)
        self.batch_norm = bool(batch_norm)
        self.u2_layers = int(u2_layers)
        self.u2_hidden = int(u2_hidden)
        self.u2_standardize = bool(u2_standardize)
        self.dtype = dtype
        self.paper_scale = bool(paper_scale)
        self.validate()

    @staticmethod
    def from_config(cfg):
        """Build from the ``network`` config section."""
        if cfg.get('paper_scale', False):
            layers = cfg['paper_layers']
            exemplar_size = cfg['paper_exemplar_size']
            instance_size = cfg['paper_instance_size']
            out_scale = cfg['paper_out_scale']
            batch_norm = cfg['paper_batch_norm']
        else:
            layers = cfg['layers']
            exemplar_size = cfg['exemplar_size']
            instance_size = cfg['instance_size']
            out_scale = cfg['out_scale']
            batch_norm = cfg['batch_norm']
        return NetConfig(layers, exemplar_size, instance_size,
                         shallow_layer=cfg['shallow_layer'], out_scale=out_scale,
                         batch_norm=batch_norm, u2_layers=cfg['u2_layers'],
                         u2_hidden=cfg['u2_hidden'], u2_standardize=cfg['u2_standardize'],
                         dtype=cfg['dtype'], paper_scale=cfg.get('paper_scale', False))

    def as_dict(self):
        return dict(layers=self.layers, exemplar_size=self.exemplar_size,
                    instance_size=self.instance_size, shallow_layer=self.shallow_layer,
                    out_scale=self.out_scale, batch_norm=self.batch_norm,
                    u2_layers=self.u2_layers, u2_hidden=self.u2_hidden,
                    u2_standardize=self.u2_standardize, dtype=self.dtype,
                    paper_scale=self.paper_scale)

    @property
    def torch_dtype(self):
        return DTYPES[self.dtype]

    def layer_sizes(self, size, first=0, last=None):
        """Spatial sizes after each layer in [first, last), raising ConfigError naming the layer."""
        last = len(self.layers) if last is None else last
        sizes = []
        for i in range(first, last):
            l = self.layers[i]
            new_size = conv_output_size(size, l['kernel'], l['stride'])
            if new_size < 1:
                raise ConfigError('conv{}: input of size {} is smaller than its {}x{} kernel'
                                  .format(i + 1, size, l['kernel'], l['kernel']))
            if l['pool']:
                pk, ps = l['pool']
                pooled = conv_output_size(new_size, pk, ps)
                if pooled < 1:
                    raise ConfigError('pool{}: input of size {} is smaller than its {}x{} kernel'
                                      .format(i + 1, new_size, pk, pk))
                new_size = pooled
            sizes.append(new_size)
            size = new_size
        return sizes

    def validate(self):
        if self.dtype not in DTYPES:
            raise ConfigError('network.dtype: unknown dtype {}, should be one of {}'
                              .format(self.dtype, ', '.join(DTYPES)))
        if len(self.layers) < 2:
            raise ConfigError('network.layers: need at least 2 layers')
        for i, l in enumerate(self.layers):
            for key in ('out', 'kernel', 'stride'):
                if l[key] < 1:
                    raise ConfigError('conv{}: {} should be >= 1, got {}'.format(i + 1, key, l[key]))
        if not 1 <= self.shallow_layer < len(self.layers):
            raise ConfigError('network.shallow_layer: should be in [1, {}), got {}'
                              .format(len(self.layers), self.shallow_layer))
        if self.u2_layers not in (1, 2):
            raise ConfigError('network.u2_layers: should be 1 or 2, got {}'.format(self.u2_layers))
        if self.u2_hidden < 1:
            raise ConfigError('network.u2_hidden: should be >= 1, got {}'.format(self.u2_hidden))

        z_sizes = self.layer_sizes(self.exemplar_size)
        x_sizes = self.layer_sizes(self.instance_size)
        self.shallow_size = z_sizes[self.shallow_layer - 1]
        self.template_size = z_sizes[-1]
        self.search_size = x_sizes[-1]
        if self.template_size >= self.search_size:
            raise ConfigError('template size {} should be smaller than search feature size {}: '
                              'increase network.instance_size'.format(self.template_size, self.search_size))
        self.score_size = self.search_size - self.template_size + 1

    @property
    def total_stride(self):
        stride = 1
        for l in self.layers:
            stride *= l['stride']
            if l['pool']:
                stride *= l['pool'][1]
        return stride

    @property
    def shallow_channels(self):
        return self.layers[self.shallow_layer - 1]['out']

    @property
    def feature_channels(self):
        return self.layers[-1]['out']

    def __repr__(self):
        return ('<NetConfig {}: z={} x={} f2={}x{}x{} template={}x{}x{} score={}x{} stride={}>'
                .format('paper' if self.paper_scale else 'desk', self.exemplar_size, self.instance_size,
                        self.shallow_channels, self.shallow_size, self.shallow_size,
                        self.feature_channels, self.template_size, self.template_size,
                        self.score_size, self.score_size, self.total_stride))


def make_layer(in_channels, spec, relu, batch_norm):
    modules = [nn.Conv2d(in_channels, spec['out'], kernel_size=spec['kernel'], stride=spec['stride'])]
    if batch_norm and relu:
        modules.append(nn.BatchNorm2d(spec['out']))
    if relu:
        modules.append(nn.ReLU())
    if spec['pool']:
        pk, ps = spec['pool']
        modules.append(nn.MaxPool2d(pk, stride=ps))
    return nn.Sequential(*modules)


def check_input(layer_name, conv, x):
    if x.dim() != 4:
        raise ConfigError('{}: expected a 4-D (N, C, H, W) input, got shape {}'.format(layer_name, tuple(x.shape)))
    if x.shape[1] != conv.in_channels:
        raise ConfigError('{}: expected {} input channels, got {}'.format(layer_name, conv.in_channels, x.shape[1]))
    k = conv.kernel_size[0]
    if x.shape[2] < k or x.shape[3] < k:
        raise ConfigError('{}: input of size {}x{} is smaller than its {}x{} kernel'
                          .format(layer_name, x.shape[2], x.shape[3], k, k))


class ConvStack(nn.Module):
    """A stack of conv layers, all followed by a ReLU except the last one of the network."""

    def __init__(self, specs, in_channels, first_index, relu_last, batch_norm):
        super().__init__()
        self.first_index = first_index
        layers = []
        for i, spec in enumerate(specs):
            last = (i == len(specs) - 1)
            layers.append(make_layer(in_channels, spec, relu=(not last) or relu_last, batch_norm=batch_norm))
            in_channels = spec['out']
        self.layers = nn.ModuleList(layers)

    def forward(self, x, upto=None):
        for i, layer in enumerate(self.layers[:upto]):
            check_input('conv{}'.format(self.first_index + i + 1), layer[0], x)
            x = layer(x)
        return x


class Backbone(ConvStack):
    """The feature extractor f_x. Its first ``shallow_layer`` layers compute f_2."""

    def __init__(self, net_cfg):
        super().__init__(net_cfg.layers, 3, 0, relu_last=False, batch_norm=net_cfg.batch_norm)
        self.net_cfg = net_cfg
        self.parameter_initialization()

    def parameter_initialization(self):
        # He init, so that the activation scale is kept through the stack
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity='relu')
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def search_features(self, x):
        check_crop(x, self.net_cfg.instance_size, 'search region')
        return self(x)

    def shallow_features(self, z):
        check_crop(z, self.net_cfg.exemplar_size, 'target patch')
        return self(z, upto=self.net_cfg.shallow_layer)


def check_crop(x, size, name):
    if x.dim() != 4 or x.shape[1] != 3 or x.shape[2] != size or x.shape[3] != size:
        raise ConfigError('conv1: {} should have shape (N, 3, {}, {}), got {}'
                          .format(name, size, size, tuple(x.shape)))


def extract_search_features(x, backbone):
    """f_x(X): full backbone on search crops of the configured instance size."""
    return backbone.search_features(x)


def extract_shallow_features(z, backbone):
    """f_2(Z): backbone up to the shallow layer on target crops of the configured exemplar size."""
    return backbone.shallow_features(z)


def cross_correlate(template, feature):
    """Valid (no padding) sliding inner product of the template over the feature map.

    ``template`` is (C, h, w) or (T, C, h, w), ``feature`` is (C, H, W) or (N, C, H, W).
    With T == 1 the template is shared by all N feature maps, with T == N they are paired.
    Returns (N, 1, H-h+1, W-w+1), or (H-h+1, W-w+1) when both inputs are unbatched.
    """
    unbatched = template.dim() == 3 and feature.dim() == 3
    if template.dim() == 3:
        template = template.unsqueeze(0)
    if feature.dim() == 3:
        feature = feature.unsqueeze(0)

    t, c, h, w = template.shape
    n, fc, fh, fw = feature.shape
    if c != fc:
        raise ConfigError('cross_correlate: template has {} channels but the feature map has {}'.format(c, fc))
    if h > fh or w > fw:
        raise ConfigError('cross_correlate: template {}x{} does not fit inside the {}x{} feature map'
                          .format(h, w, fh, fw))

    if t == 1:
        out = F.conv2d(feature, template)
    elif t == n:
        out = F.conv2d(feature.reshape(1, n * c, fh, fw), template, groups=n)
        out = out.reshape(n, 1, fh - h + 1, fw - w + 1)
    else:
        raise ConfigError('cross_correlate: {} templates cannot be paired with {} feature maps'.format(t, n))

    return out[0, 0] if unbatched else out


def check_finite(t, name):
    bad = ~torch.isfinite(t)
    if bad.any():
        location = tuple(int(i) for i in bad.nonzero()[0])
        kind = 'NaN' if torch.isnan(t[location]) else 'inf'
        raise NumericalError('{} value in {} at index {}'.format(kind, name, location))


def logistic_loss(scores, labels, weights=None, reduction='sum'):
    """Weighted mean over cells of log(1 + exp(-s*y)) for each score map.

    ``weights`` should sum to 1 over each map, uniform weights are used when None.
    With ``reduction='sum'``, the per-map losses are summed over all leading dimensions,
    ``'none'`` returns them as a tensor of the leading shape.
    """
    if scores.shape != labels.shape:
        raise ConfigError('logistic_loss: score map shape {} does not match label shape {}'
                          .format(tuple(scores.shape), tuple(labels.shape)))
    check_finite(scores, 'score map')

    margin = (scores * labels).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    cell = F.softplus(-margin)
    if weights is None:
        per_map = cell.mean(dim=(-2, -1))
    else:
        per_map = (cell * weights).sum(dim=(-2, -1))

    if reduction == 'none':
        return per_map
    return per_map.sum()


def label_tensors(label_maps, dtype=torch.float32, device=None):
    """Stack LabelMaps (numpy arrays) into (N, 1, H, W) label and weight tensors."""
    labels = torch.as_tensor(np.stack([l.labels for l in label_maps])[:, None], dtype=dtype, device=device)
    weights = torch.as_tensor(np.stack([l.weights for l in label_maps])[:, None], dtype=dtype, device=device)
    return labels, weights


def image_to_tensor(patches, dtype=torch.float32):
    """uint8 RGB patches (N, H, W, 3) or (H, W, 3) -> float tensor (N, 3, H, W) in [0, 1]."""
    patches = np.asarray(patches)
    if patches.ndim == 3:
        patches = patches[None]
    return torch.as_tensor(patches.astype(np.float64) / 255.0, dtype=dtype).permute(0, 3, 1, 2).contiguous()
