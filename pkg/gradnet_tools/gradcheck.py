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

"""Finite-difference checks of the analytic gradients, in double precision.

Each check compares autograd's gradient with central differences on a random sample of
coordinates and reports ``max |analytic - numeric| / scale``, where the scale is the largest
magnitude among the compared analytic and numeric values, bounded below by a fraction of the
largest analytic magnitude over the whole tensor.

Coordinates whose perturbation crosses a ReLU kink are skipped: there the central differences
taken with two step sizes disagree, and neither matches the analytic (one-sided) derivative.
The sample is drawn from a larger pool so that skipped coordinates are replaced.
"""

from collections import namedtuple
from .core import AttributeDict
from .net import NetConfig, logistic_loss, label_tensors
from .update_branch import build_model, embed_initial, shallow_gradient, apply_gradient_update
from .training import make_label
import numpy as np
import torch
import logging

log = logging.getLogger(__name__)


STEP = 1e-4
TOLERANCE = 1e-4
# scale floor, relative to the largest analytic magnitude of the tensor
SCALE_FLOOR = 1e-2
# sampled candidates per checked coordinate, kinks are skipped
POOL_FACTOR = 3
# ratio between the two steps used to detect a kink
KINK_STEP_RATIO = 10

CheckResult = namedtuple('CheckResult', 'name instance max_rel_error passed checked skipped')
Instance = namedtuple('Instance', 'model f2z x_features labels weights')


def relative_error(analytic, numeric, floor=0.0):
    analytic, numeric = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    if scale == 0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def sample_coords(t, n, rng):
    flat = rng.choice(t.numel(), size=min(n, t.numel()), replace=False)
    return [np.unravel_index(int(i), tuple(t.shape)) for i in flat]


def _central(f, t, idx, step):
    orig = t[idx].item()
    t[idx] = orig + step
    fp = float(f())
    t[idx] = orig - step
    fm = float(f())
    t[idx] = orig
    return (fp - fm) / (2 * step)


def finite_difference(f, t, coords, step=STEP):
    """Central differences of the scalar function f() w.r.t. entries of t, modified in place and restored."""
    with torch.no_grad():
        return np.array([_central(f, t, idx, step) for idx in coords])


def smooth_differences(f, t, coords, n, tolerance, floor, step=STEP):
    """Central differences on the first ``n`` coordinates of ``coords`` where f is smooth at the scale
    of the step: the differences taken with ``step`` and ``step / KINK_STEP_RATIO`` agree within
    ``tolerance`` relative to ``max(|difference|, floor)``.

    Returns ``(kept coordinates, their differences, number of skipped coordinates)``.
    """
    kept, numeric, skipped = [], [], 0
    with torch.no_grad():
        for idx in coords:
            if len(kept) == n:
                break
            d = _central(f, t, idx, step)
            fine = _central(f, t, idx, step / KINK_STEP_RATIO)
            if abs(d - fine) > tolerance * max(abs(d), abs(fine), floor):
                skipped += 1
                continue
            kept.append(idx)
            numeric.append(d)
    return kept, np.array(numeric), skipped


def random_instance(network_cfg, rng, k=4, seed=0, update_scale=0.5):
    """A float64 model whose U2 output layer is randomized (as if trained midway), with random crops."""
    net_cfg = NetConfig.from_config(dict(network_cfg, dtype='float64'))
    model = build_model(net_cfg, 'ours', seed=seed)
    with torch.no_grad():
        last = model.u2.layers[-1]
        last.weight.copy_(torch.as_tensor(rng.normal(scale=update_scale, size=tuple(last.weight.shape))))
        last.bias.copy_(torch.as_tensor(rng.normal(scale=update_scale, size=tuple(last.bias.shape))))

    z = torch.as_tensor(rng.random((1, 3, net_cfg.exemplar_size, net_cfg.exemplar_size)))
    x = torch.as_tensor(rng.random((k, 3, net_cfg.instance_size, net_cfg.instance_size)))
    n = net_cfg.score_size
    labels = [make_label(n, tuple(rng.integers(0, n, size=2)), 2) for _ in range(k)]
    labels, weights = label_tensors(labels, torch.float64)
    with torch.no_grad():
        f2z = model.shallow_features(z)
        x_features = model.search_features(x)
    return Instance(model, f2z, x_features, labels, weights)


def _grad(f, t):
    t = t.detach().clone().requires_grad_(True)
    g, = torch.autograd.grad(f(t), t)
    return g.detach()


def _compare(name, i, analytic, f, t, rng, n_coords, fault, tolerance):
    if fault == 'sign_flip':
        analytic = -analytic
    floor = SCALE_FLOOR * analytic.abs().max().item()
    pool = sample_coords(t, POOL_FACTOR * n_coords, rng)
    coords, numeric, skipped = smooth_differences(f, t, pool, n_coords, tolerance, floor)
    if not coords:
        log.warning('{} (instance {}): every sampled coordinate crosses a kink'.format(name, i))
        return CheckResult(name, i, 0.0, False, 0, skipped)
    err = relative_error([analytic[c].item() for c in coords], numeric, floor)
    return CheckResult(name, i, err, err < tolerance, len(coords), skipped)


def check_loss_xcorr(inst, i, rng, n_coords=10, fault=None, tolerance=TOLERANCE):
    """logistic loss of the cross-correlation, w.r.t. the template and the feature map."""
    model = inst.model
    template = embed_initial(inst.f2z, model.u1).detach().clone()
    features = inst.x_features.detach().clone()

    def loss(t, f):
        return logistic_loss(model.score(t, f), inst.labels, inst.weights)

    results = []
    g = _grad(lambda t: loss(t, features), template)
    results.append(_compare('loss_xcorr/template', i, g, lambda: loss(template, features), template,
                            rng, n_coords, fault, tolerance))
    g = _grad(lambda f: loss(template, f), features)
    results.append(_compare('loss_xcorr/feature', i, g, lambda: loss(template, features), features,
                            rng, n_coords, fault, tolerance))
    return results


def check_u1(inst, i, rng, n_coords=10, fault=None, tolerance=TOLERANCE):
    model = inst.model
    f2z = inst.f2z.detach().clone()
    r = torch.as_tensor(rng.normal(size=tuple(embed_initial(f2z, model.u1).shape)))
    g = _grad(lambda t: (embed_initial(t, model.u1) * r).sum(), f2z)
    return [_compare('u1/f2z', i, g, lambda: (embed_initial(f2z, model.u1) * r).sum(), f2z,
                     rng, n_coords, fault, tolerance)]


def check_shallow_gradient(inst, i, rng, n_coords=10, fault=None, tolerance=TOLERANCE):
    model = inst.model
    f2z = inst.f2z.detach().clone()
    g = shallow_gradient(f2z, model.u1, inst.x_features, inst.labels, inst.weights,
                         out_scale=model.out_scale, create_graph=False)

    def loss():
        return logistic_loss(model.score(embed_initial(f2z, model.u1), inst.x_features), inst.labels, inst.weights)

    return [_compare('shallow_gradient', i, g, loss, f2z, rng, n_coords, fault, tolerance)]


def check_u2(inst, i, rng, n_coords=10, fault=None, tolerance=TOLERANCE):
    model = inst.model
    gradient = torch.as_tensor(rng.normal(scale=1e-2, size=tuple(inst.f2z.shape)))
    r = torch.as_tensor(rng.normal(size=tuple(inst.f2z.shape)))
    g = _grad(lambda t: (apply_gradient_update(inst.f2z, t, model.u2) * r).sum(), gradient)
    return [_compare('u2/gradient', i, g, lambda: (apply_gradient_update(inst.f2z, gradient, model.u2) * r).sum(),
                     gradient, rng, n_coords, fault, tolerance)]


def final_loss(inst, second_order=True):
    result = inst.model.generate_template(inst.f2z, inst.x_features, inst.labels, inst.weights,
                                          update=True, second_order=second_order)
    return logistic_loss(result.final_scores, inst.labels, inst.weights)


def check_pipeline(inst, i, rng, n_coords=5, fault=None, tolerance=TOLERANCE):
    """L* = sum_i l(beta* * f_x(X_i), Y_i) w.r.t. the parameters of U1 and U2, second-order terms included."""
    model = inst.model
    results = []
    for prefix, module in (('u1', model.u1), ('u2', model.u2)):
        params = [p for p in module.parameters()]
        grads = torch.autograd.grad(final_loss(inst), params)
        for (name, p), g in zip(module.named_parameters(), grads):
            results.append(_compare('pipeline/{}.{}'.format(prefix, name), i, g.detach(),
                                    lambda: final_loss(inst), p, rng, n_coords, fault, tolerance))
    return results


def second_order_difference(inst):
    """Norm of the difference between the gradients of L* w.r.t. U1's parameters computed with and
    without differentiating through the shallow gradient."""
    params = list(inst.model.u1.parameters())
    full = torch.autograd.grad(final_loss(inst, second_order=True), params)
    detached = torch.autograd.grad(final_loss(inst, second_order=False), params)
    return float(torch.sqrt(sum(((a - b) ** 2).sum() for a, b in zip(full, detached))))


CHECKS = [check_loss_xcorr, check_u1, check_shallow_gradient, check_u2, check_pipeline]


def run_gradchecks(network_cfg, instances=20, seed=0, k=4, tolerance=TOLERANCE, fault=None,
                   second_order=False, min_second_order=1e-6):
    """Run every check on ``instances`` random desk-scale instances.

    Returns an AttributeDict with the individual results, the max relative error per check name,
    the second-order path differences (when requested) and the overall verdict.
    """
    rng = np.random.default_rng(seed)
    results, differences = [], []
    for i in range(instances):
        inst = random_instance(network_cfg, rng, k=k, seed=seed + i)
        for check in CHECKS:
            results.extend(check(inst, i, rng, fault=fault, tolerance=tolerance))
        if second_order:
            differences.append(second_order_difference(inst))

    worst = {}
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.max_rel_error)
    for name, err in worst.items():
        log.info('{:<32} max rel error {:.3e} {}'.format(name, err, 'OK' if err < tolerance else 'FAILED'))

    checked, skipped = sum(r.checked for r in results), sum(r.skipped for r in results)
    log.info('compared {} coordinates, skipped {} across a kink'.format(checked, skipped))
    passed = all(r.passed for r in results)
    if second_order:
        log.info('second-order path: min difference norm {:.3e}'.format(min(differences)))
        passed = passed and min(differences) > min_second_order

    return AttributeDict(results=results, max_rel_errors=worst, second_order_differences=differences,
                         tolerance=tolerance, passed=passed)
