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

"""The update branch: U1 embeds target features into a template, U2 turns the gradient of the
matching loss w.r.t. the shallow target features into a feature correction.

Template generation takes two forward passes through U1 and one backward pass:

    beta   = U1(f2(Z))
    L      = sum_i l(beta * f_x(X_i), Y_i)
    G      = dL / df2(Z)
    h2(Z)  = f2(Z) + U2(G)
    beta*  = U1(h2(Z))

G is computed with ``create_graph=True`` so that it stays a function of U1's parameters:
training through beta* then includes the second-order terms.
"""

from collections import namedtuple
from .core import ConfigError
from .net import Backbone, ConvStack, NetConfig, cross_correlate, logistic_loss, check_finite
import copy
import torch
import torch.nn as nn
import logging

log = logging.getLogger(__name__)


VARIANTS = ['ours', 'no_M', 'no_MG', 'no_U', 'two_U']


TemplateGenResult = namedtuple('TemplateGenResult', ['template',           # beta
                                                     'scores',             # S
                                                     'loss',               # L
                                                     'gradient',           # G = dL/df2(Z)
                                                     'updated_feature',    # h2(Z)
                                                     'optimal_template',   # beta*
                                                     'final_scores'])      # S*


class U1(ConvStack):
    """Template head, same structure as the backbone layers after the shallow layer."""

    def __init__(self, net_cfg):
        k = net_cfg.shallow_layer
        super().__init__(net_cfg.layers[k:], net_cfg.shallow_channels, k, relu_last=False, batch_norm=False)
        self.net_cfg = net_cfg

    def copy_from(self, backbone):
        """Initialize from the matching backbone layers, so that U1(f2(Z)) = f_x(Z) at start."""
        k = self.net_cfg.shallow_layer
        with torch.no_grad():
            for mine, theirs in zip(self.layers, backbone.layers[k:]):
                mine[0].weight.copy_(theirs[0].weight)
                mine[0].bias.copy_(theirs[0].bias)


class U2(nn.Module):
    """Gradient transformer, a 3x3 conv (or 3x3 -> ReLU -> 3x3) preserving the f2 shape.

    The last conv is zero-initialized, so the update starts as the identity.
    """

    def __init__(self, net_cfg):
        super().__init__()
        c = net_cfg.shallow_channels
        if net_cfg.u2_layers == 1:
            layers = [nn.Conv2d(c, c, kernel_size=3, padding=1)]
        else:
            layers = [nn.Conv2d(c, net_cfg.u2_hidden, kernel_size=3, padding=1),
                      nn.ReLU(),
                      nn.Conv2d(net_cfg.u2_hidden, c, kernel_size=3, padding=1)]
        self.layers = nn.Sequential(*layers)
        self.standardize = net_cfg.u2_standardize
        self.reset_last_layer()

    def reset_last_layer(self):
        with torch.no_grad():
            self.layers[-1].weight.zero_()
            self.layers[-1].bias.zero_()

    def forward(self, g):
        if self.standardize:
            mean = g.mean(dim=(-2, -1), keepdim=True)
            std = g.std(dim=(-2, -1), keepdim=True)
            g = (g - mean) / (std + 1e-12)
        return self.layers(g)


class GradNet(nn.Module):
    """Backbone (f_x, f_2) plus the update branch (U1, U2).

    With ``share_u1=False`` (the 2U variant), the second U1 application uses its own copy.
    """

    def __init__(self, net_cfg, variant='ours'):
        super().__init__()
        if variant not in VARIANTS:
            raise ConfigError('Unknown variant: {}, should be one of {}'.format(variant, ', '.join(VARIANTS)))
        self.net_cfg = net_cfg
        self.variant = variant
        self.out_scale = net_cfg.out_scale
        self.backbone = Backbone(net_cfg)
        self.u1 = U1(net_cfg)
        self.u1.copy_from(self.backbone)
        self.u1_second = copy.deepcopy(self.u1) if variant == 'two_U' else None
        self.u2 = U2(net_cfg)
        self.to(net_cfg.torch_dtype)

    @property
    def share_u1(self):
        return self.u1_second is None

    @property
    def second_u1(self):
        return self.u1 if self.u1_second is None else self.u1_second

    @property
    def uses_gradient(self):
        """no_MG and no_U pass beta through unchanged."""
        return self.variant not in ('no_MG', 'no_U')

    @property
    def dtype(self):
        return self.u2.layers[-1].weight.dtype

    def search_features(self, x):
        return self.backbone.search_features(x)

    def shallow_features(self, z):
        return self.backbone.shallow_features(z)

    def score(self, template, features):
        return self.out_scale * cross_correlate(template, features)

    def generate_template(self, f2z, x_features, labels, weights=None, update=None,
                          create_graph=True, second_order=True):
        if update is None:
            update = self.uses_gradient
        return generate_template(f2z, x_features, labels, self, weights=weights, update=update,
                                 create_graph=create_graph, second_order=second_order)

    def template_parameters(self):
        """Parameters of the update branch."""
        params = list(self.u1.parameters())
        if self.u1_second is not None:
            params += list(self.u1_second.parameters())
        return params + list(self.u2.parameters())


def build_model(net_cfg, variant='ours', seed=None):
    if isinstance(net_cfg, dict):
        net_cfg = NetConfig.from_config(net_cfg)
    if seed is not None:
        torch.manual_seed(seed)
    model = GradNet(net_cfg, variant=variant)
    log.debug('Built model: {} variant={}'.format(net_cfg, variant))
    return model


def embed_initial(f2z, u1):
    """beta = U1(f2(Z))"""
    return u1(f2z)


def _as_batch(x_features):
    if isinstance(x_features, (list, tuple)):
        return torch.cat([x if x.dim() == 4 else x.unsqueeze(0) for x in x_features])
    return x_features if x_features.dim() == 4 else x_features.unsqueeze(0)


def _initial_pass(f2z, u1, x_features, labels, weights, out_scale):
    if not f2z.requires_grad:
        f2z = f2z.detach().requires_grad_(True)
    beta = embed_initial(f2z, u1)
    x_features = _as_batch(x_features)
    labels = _as_batch(labels)
    if weights is not None:
        weights = _as_batch(weights)
    if len(x_features) == 0:
        raise ConfigError('shallow_gradient: need at least one search region')
    if len(labels) != len(x_features):
        raise ConfigError('shallow_gradient: got {} search regions but {} label maps'
                          .format(len(x_features), len(labels)))
    scores = out_scale * cross_correlate(beta, x_features)
    loss = logistic_loss(scores, labels, weights)
    return f2z, beta, scores, loss


def shallow_gradient(f2z, u1, x_features, labels, weights=None, out_scale=1.0, create_graph=True):
    """dL/df2(Z) with L = sum_i l(U1(f2(Z)) * f_x(X_i), Y_i).

    With ``create_graph=True`` the returned gradient is itself differentiable w.r.t. U1's parameters.
    """
    with torch.enable_grad():
        f2z, beta, scores, loss = _initial_pass(f2z, u1, x_features, labels, weights, out_scale)
        gradient, = torch.autograd.grad(loss, f2z, create_graph=create_graph)
    check_finite(gradient, 'shallow gradient')
    return gradient


def apply_gradient_update(f2z, gradient, u2):
    """h2(Z) = f2(Z) + U2(G)"""
    if f2z.shape != gradient.shape:
        raise ConfigError('apply_gradient_update: gradient shape {} does not match feature shape {}'
                          .format(tuple(gradient.shape), tuple(f2z.shape)))
    return f2z + u2(gradient)


def generate_template(f2z, x_features, labels, model, weights=None, update=True,
                      create_graph=True, second_order=True):
    """Full template generation pipeline, returning every intermediate in a TemplateGenResult.

    ``f2z`` is f2(Z) (or a persisted h2(Z) during online updates), with either one template
    shared by all the search regions or one per search region (paired).
    ``second_order=False`` detaches G, dropping the second-order terms from training.
    """
    with torch.enable_grad():
        f2z_in, beta, scores, loss = _initial_pass(f2z, model.u1, x_features, labels, weights, model.out_scale)

        if not update:
            gradient = torch.zeros_like(f2z_in)
            return TemplateGenResult(beta, scores, loss, gradient, f2z, beta, scores)

        gradient, = torch.autograd.grad(loss, f2z_in, create_graph=create_graph and second_order)
        check_finite(gradient, 'shallow gradient')
        if not second_order:
            gradient = gradient.detach()

        # the correction is added to the original f2z so that the outer gradient also flows
        # through it when the backbone is trained
        updated = apply_gradient_update(f2z if f2z.requires_grad else f2z_in.detach(), gradient, model.u2)
        optimal = embed_initial(updated, model.second_u1)
        final_scores = model.score(optimal, _as_batch(x_features))

    return TemplateGenResult(beta, scores, loss, gradient, updated, optimal, final_scores)
