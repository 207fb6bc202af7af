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

from collections import OrderedDict
from pathlib import Path
from . import output_dir, parse_assignments
from ..core import ConfigError
from ..checkpoint import load_model
from ..evaluation import ABLATION_VARIANTS, score_map_diagnostics, overfit_diagnostic, write_diagnostics
from ..training import heldout_pairs, gradient_weight_ratio, sgd_baseline_table
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'diagnostics: weight ratios, score maps, one-step SGD baseline, overfitting curves'


def help():
    return """diag (--checkpoint VARIANT=FILE ... | --runs DIR) [--logs VARIANT=DIR ...] [--plot]

On probe pairs from the held-out synthetic suite, computes for each checkpoint:
  - the distribution of |U2(G)| / (|f2(Z)| + |U2(G)|)
  - the entropy of the initial score maps and the one-step loss drop L - L*
  - iterations needed by plain gradient descent on the template, per learning rate
and, from the training logs, the training / held-out curves.
With two or more checkpoints, the first two are compared.
Writes diagnostics.json (and the plots with --plot).
"""


def add_arguments(parser):
    parser.add_argument('--checkpoint', action='append', help='VARIANT=FILE, can be repeated')
    parser.add_argument('--runs', help='directory containing <variant>/checkpoint.ckpt and the training logs')
    parser.add_argument('--logs', action='append', help='VARIANT=DIR, directory containing train_log.csv')
    parser.add_argument('--probe-pairs', type=int, help='number of probe pairs (default: evaluation.probe_pairs)')
    parser.add_argument('--sgd-pairs', type=int, default=5, help='number of pairs for the SGD baseline (0 to skip)')
    parser.add_argument('--plot', action='store_true', help='also write the diagnostic plots')


def comparison(diagnostics, a, b):
    wr, sm, sgd = diagnostics['weight_ratio'], diagnostics['score_maps'], diagnostics['sgd_baseline']
    result = OrderedDict(a=a, b=b,
                         weight_ratio_median_difference=wr[a].median - wr[b].median,
                         entropy_difference=sm[a].mean_entropy - sm[b].mean_entropy,
                         loss_drop_difference=sm[a].mean_loss_drop - sm[b].mean_loss_drop)
    if a in sgd and b in sgd:
        result['sgd_gradnet_loss_difference'] = sgd[a].gradnet_loss - sgd[b].gradnet_loss
    return result


def run_command(args, cfg):
    checkpoints = parse_assignments(args.checkpoint)
    logs = OrderedDict((k, Path(v)) for k, v in parse_assignments(args.logs, 'logs').items())
    if args.runs:
        for variant in ABLATION_VARIANTS:
            run_dir = Path(args.runs) / variant
            if (run_dir / 'checkpoint.ckpt').exists():
                checkpoints.setdefault(variant, str(run_dir / 'checkpoint.ckpt'))
            if (run_dir / 'train_log.csv').exists():
                logs.setdefault(variant, run_dir)
    if not checkpoints and not logs:
        raise ConfigError('diag: nothing to do, use --checkpoint VARIANT=FILE, --logs VARIANT=DIR or --runs DIR')

    models = OrderedDict((name, load_model(path)) for name, path in checkpoints.items())
    n = args.probe_pairs if args.probe_pairs is not None else cfg.evaluation.probe_pairs
    pairs = heldout_pairs(cfg, n) if models else []
    log.info('Running diagnostics on {} probe pairs for {}'.format(len(pairs), ', '.join(models) or 'logs only'))

    diagnostics = OrderedDict()
    diagnostics['weight_ratio'] = OrderedDict((name, gradient_weight_ratio(m, pairs, bins=cfg.evaluation.histogram_bins))
                                              for name, m in models.items())
    diagnostics['score_maps'] = score_map_diagnostics(models, pairs)
    diagnostics['sgd_baseline'] = OrderedDict()
    if args.sgd_pairs > 0:
        for name, m in models.items():
            diagnostics['sgd_baseline'][name] = sgd_baseline_table(m, pairs[:args.sgd_pairs], cfg.evaluation)
    diagnostics['overfit'] = overfit_diagnostic(OrderedDict((k, d / 'train_log.csv') for k, d in logs.items()),
                                                OrderedDict((k, d / 'heldout_log.csv') for k, d in logs.items()
                                                            if (d / 'heldout_log.csv').exists()))
    names = list(models)
    if len(names) >= 2:
        diagnostics['comparison'] = comparison(diagnostics, names[0], names[1])

    out = output_dir(args, 'diag')
    write_diagnostics(diagnostics, out)

    for name in models:
        line = '{:<8} weight ratio median {:.4f}  entropy {:.4f}  L - L* {:.4f}'.format(
            name, diagnostics['weight_ratio'][name].median, diagnostics['score_maps'][name].mean_entropy,
            diagnostics['score_maps'][name].mean_loss_drop)
        if diagnostics['sgd_baseline'].get(name, {}).get('rows'):
            table = diagnostics['sgd_baseline'][name]
            line += '  SGD min iterations {}  GradNet L* {:.4f}'.format(
                min(r.min_iterations for r in table.rows), table.gradnet_loss)
        print(line)

    if args.plot:
        from ..plots import plot_weight_ratios, plot_score_maps, plot_overfit
        if models:
            plot_weight_ratios(diagnostics['weight_ratio'], out / 'weight_ratio.png')
            plot_score_maps(diagnostics['score_maps'], out / 'score_maps.png')
        if logs:
            plot_overfit(diagnostics['overfit'], out / 'overfit.png')
