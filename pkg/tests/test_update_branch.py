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
from gradnet_tools.core import ConfigError, NumericalError
from gradnet_tools.net import label_tensors, LOGIT_CLAMP
from gradnet_tools.training import make_label
from gradnet_tools.update_branch import (build_model, embed_initial, shallow_gradient, apply_gradient_update,
                                         generate_template, VARIANTS)
import numpy as np
import pytest
import torch
import torch.nn.functional as F


def instance(model, k=3, seed=0):
    net_cfg = model.net_cfg
    g = torch.Generator().manual_seed(seed)
    z = torch.rand(1, 3, net_cfg.exemplar_size, net_cfg.exemplar_size, generator=g, dtype=model.dtype)
    x = torch.rand(k, 3, net_cfg.instance_size, net_cfg.instance_size, generator=g, dtype=model.dtype)
    c = net_cfg.score_size // 2
    labels, weights = label_tensors([make_label(net_cfg.score_size, (c, c + i - 1), 2) for i in range(k)],
                                    model.dtype)
    with torch.no_grad():
        return model.shallow_features(z), model.search_features(x), labels, weights


def test_variants_build(net_cfg):
    for variant in VARIANTS:
        model = build_model(net_cfg, variant, seed=0)
        assert model.share_u1 == (variant != 'two_U')
        assert model.uses_gradient == (variant not in ('no_MG', 'no_U'))
    with pytest.raises(ConfigError):
        build_model(net_cfg, 'no_X')


def test_u1_mirrors_backbone_at_init(model, net_cfg):
    z = torch.rand(1, 3, net_cfg.exemplar_size, net_cfg.exemplar_size)
    assert torch.equal(embed_initial(model.shallow_features(z), model.u1), model.backbone(z))


def test_template_shape(model, net_cfg):
    f2z, x_features, labels, weights = instance(model)
    beta = embed_initial(f2z, model.u1)
    assert beta.shape == (1, net_cfg.feature_channels, net_cfg.template_size, net_cfg.template_size)


def test_embed_initial_zero(net_cfg):
    model = build_model(net_cfg, seed=0)
    for p in model.u1.parameters():
        if p.dim() == 1:
            torch.nn.init.zeros_(p)
    f2z = torch.zeros(1, net_cfg.shallow_channels, net_cfg.shallow_size, net_cfg.shallow_size)
    assert float(embed_initial(f2z, model.u1).abs().max()) == 0


def test_identity_at_initialization(model):
    f2z, x_features, labels, weights = instance(model)
    result = generate_template(f2z, x_features, labels, model, weights)
    assert torch.equal(result.optimal_template, result.template)
    assert torch.equal(result.final_scores, result.scores)
    assert torch.equal(result.updated_feature, f2z)


def test_apply_gradient_update(model64, rng):
    f2z, _, _, _ = instance(model64)
    zero = torch.zeros_like(f2z)
    assert torch.equal(apply_gradient_update(f2z, zero, model64.u2), f2z)

    randomize_u2(model64)
    with torch.no_grad():
        torch.nn.init.zeros_(model64.u2.layers[-1].bias)
    assert torch.equal(apply_gradient_update(f2z, zero, model64.u2), f2z)

    g = torch.as_tensor(rng.normal(size=tuple(f2z.shape)))
    conv = model64.u2.layers[-1]
    expected = F.conv2d(g, conv.weight, conv.bias, padding=1)
    assert torch.allclose(apply_gradient_update(f2z, g, model64.u2) - f2z, expected, rtol=1e-6, atol=1e-12)

    with pytest.raises(ConfigError):
        apply_gradient_update(f2z, g[..., :-1], model64.u2)


def test_singleton_consistency(model):
    randomize_u2(model)
    f2z, x_features, labels, weights = instance(model, k=1)
    a = generate_template(f2z, x_features, labels, model, weights)
    b = generate_template(f2z, [x_features[0]], [labels[0]], model, [weights[0]])
    assert torch.equal(a.optimal_template, b.optimal_template)
    assert torch.equal(a.final_scores, b.final_scores)


def test_shallow_gradient_zero_at_saturation(model64):
    f2z, x_features, _, _ = instance(model64, k=2)
    with torch.no_grad():
        scores = model64.score(embed_initial(f2z, model64.u1), x_features)
    # labels agreeing with scores far beyond the clamp: the loss is flat
    scale = 10 * LOGIT_CLAMP / float(scores.abs().min())
    model64.out_scale *= scale
    with torch.no_grad():
        labels = torch.sign(scores)
    g = shallow_gradient(f2z, model64.u1, x_features, labels, out_scale=model64.out_scale)
    assert float(g.abs().max()) <= 1e-8


def test_shallow_gradient_linear_in_weights(model64):
    f2z, x_features, labels, weights = instance(model64)
    g1 = shallow_gradient(f2z, model64.u1, x_features, labels, weights, out_scale=model64.out_scale)
    g2 = shallow_gradient(f2z, model64.u1, x_features, labels, 2 * weights, out_scale=model64.out_scale)
    assert torch.allclose(g2, 2 * g1, rtol=1e-12, atol=0)


def test_shallow_gradient_errors(model):
    f2z, x_features, labels, weights = instance(model, k=2)
    with pytest.raises(ConfigError):
        shallow_gradient(f2z, model.u1, x_features, labels[:1], out_scale=model.out_scale)
    with pytest.raises(NumericalError):
        bad = x_features.clone()
        bad[0, 0, 0, 0] = float('inf')
        shallow_gradient(f2z, model.u1, bad, labels, out_scale=model.out_scale)


def test_shallow_gradient_is_differentiable(model64):
    randomize_u2(model64)
    f2z, x_features, labels, weights = instance(model64)
    g = shallow_gradient(f2z, model64.u1, x_features, labels, weights, out_scale=model64.out_scale)
    assert g.requires_grad
    second, = torch.autograd.grad(g.sum(), model64.u1.layers[0][0].weight)
    assert float(second.abs().max()) > 0


def test_second_order_path(model64):
    randomize_u2(model64, scale=0.5)
    f2z, x_features, labels, weights = instance(model64)
    params = list(model64.u1.parameters())

    def grads(second_order):
        result = generate_template(f2z, x_features, labels, model64, weights, second_order=second_order)
        final = (F.softplus(-result.final_scores * labels) * weights).sum()
        return torch.autograd.grad(final, params)

    full, detached = grads(True), grads(False)
    difference = max(float((a - b).abs().max()) for a, b in zip(full, detached))
    assert difference > 1e-6


def test_no_update_variants_pass_template_through(net_cfg):
    for variant in ('no_MG', 'no_U'):
        model = build_model(net_cfg, variant, seed=0)
        randomize_u2(model)
        f2z, x_features, labels, weights = instance(model)
        result = model.generate_template(f2z, x_features, labels, weights)
        assert torch.equal(result.optimal_template, embed_initial(f2z, model.u1))
        assert torch.equal(result.final_scores, result.scores)


def test_two_u_matches_shared_at_init(net_cfg):
    shared = build_model(net_cfg, 'ours', seed=0)
    two = build_model(net_cfg, 'two_U', seed=0)
    randomize_u2(shared)
    randomize_u2(two)
    f2z, x_features, labels, weights = instance(shared)
    a = shared.generate_template(f2z, x_features, labels, weights)
    b = two.generate_template(f2z, x_features, labels, weights)
    assert torch.equal(a.optimal_template, b.optimal_template)

    # updating one copy no longer affects the other
    with torch.no_grad():
        two.u1_second.layers[0][0].weight.add_(1.0)
    assert not torch.equal(two.u1.layers[0][0].weight, two.u1_second.layers[0][0].weight)


def test_generate_template_deterministic(model):
    randomize_u2(model)
    f2z, x_features, labels, weights = instance(model)
    a = generate_template(f2z, x_features, labels, model, weights)
    b = generate_template(f2z, x_features, labels, model, weights)
    assert torch.equal(a.final_scores, b.final_scores)
