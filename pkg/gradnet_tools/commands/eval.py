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

from . import output_dir, input_sequences, require_path, workers, suite_seed_overrides
from ..core import ConfigError
from ..checkpoint import load_model
from ..evaluation import run_ope, evaluate_results, write_ope
from ..tracking import GradNetTracker, write_results
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'one-pass evaluation (precision / success)'


def help():
    return """eval (--checkpoint FILE | --results DIR) [--aggregate sequence|frame] [--plot] [SEQUENCE_DIR...]

With --checkpoint, tracks every sequence from its first ground-truth box and
writes the result files; with --results, scores existing <name>.txt result files.
Writes ope.json (curves, precision@20, success AUC) and optionally ope.png.
"""


def add_arguments(parser):
    parser.add_argument('sequences', nargs='*', help='sequence directories (default: synthetic eval suite)')
    parser.add_argument('--checkpoint', help='trained checkpoint to run')
    parser.add_argument('--results', help='directory of existing result files to score')
    parser.add_argument('--aggregate', choices=['sequence', 'frame'],
                        help='average per-sequence curves, or pool all frames')
    parser.add_argument('--no-update', action='store_true', help='never update the template online')
    parser.add_argument('--plot', action='store_true', help='also write the precision/success plots')


def config_overrides(args):
    overrides = suite_seed_overrides(args)
    if args.aggregate:
        overrides['evaluation'] = {'aggregate': args.aggregate}
    return overrides or None


def run_command(args, cfg):
    if bool(args.checkpoint) == bool(args.results):
        raise ConfigError('eval: give exactly one of --checkpoint or --results')

    sequences = input_sequences(args.sequences, cfg)
    out = output_dir(args, 'eval')
    ecfg = cfg.evaluation

    if args.results:
        ope = evaluate_results(require_path(args.results, 'Results directory'), sequences,
                               aggregate=ecfg.aggregate, ecfg=ecfg)
        label = 'results'
    else:
        tracker = GradNetTracker(load_model(args.checkpoint), cfg.tracking,
                                 online_update=False if args.no_update else None)
        ope = run_ope(lambda seq: tracker, sequences, workers=workers(args, cfg),
                      aggregate=ecfg.aggregate, ecfg=ecfg)
        for result in ope.tracks.values():
            write_results(result, out / 'results')
        label = 'gradnet'

    write_ope(ope, out)
    log.info('{}: precision@{} = {:.3f}, success AUC = {:.3f} over {} sequences ({} frames)'
             .format(label, ecfg.precision_at, ope.precision, ope.auc, len(sequences), ope.total_frames))
    print('precision@{}: {:.4f}'.format(ecfg.precision_at, ope.precision))
    print('success AUC:  {:.4f}'.format(ope.auc))

    if args.plot:
        from ..plots import plot_ope
        plot_ope({label: ope}, out / 'ope.png')
