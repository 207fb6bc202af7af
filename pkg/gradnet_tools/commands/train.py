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

from . import output_dir, require_path
from ..core import yaml_dump
from ..slogging import add_run_logfile
from ..data import load_sequences
from ..update_branch import VARIANTS
from ..training import prepare_datasets, train
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'train the update branch'


def help():
    return """train [--variant VARIANT] [--steps N] [--init-checkpoint FILE] [SEQUENCE_DIR...]

Trains on the given OTB-layout sequences, or on the synthetic train suite.
Writes checkpoint.ckpt, train_log.csv (and pretrain_log.csv, heldout_log.csv), train.log
and the effective config.yaml to the output directory.

variants: ours (template generalization), no_M (per-pair), two_U (per-pair,
unshared U1), no_MG and no_U (plain matching).
"""


def add_arguments(parser):
    parser.add_argument('sequences', nargs='*', help='training sequence directories (default: synthetic train suite)')
    parser.add_argument('--variant', choices=VARIANTS, help='training variant')
    parser.add_argument('--steps', type=int, help='number of training steps')
    parser.add_argument('--pretrain-steps', type=int, help='number of matching pre-training steps')
    parser.add_argument('--batch-size', type=int, help='number of pairs (videos) per batch')
    parser.add_argument('--lr', type=float, help='learning rate')
    parser.add_argument('--init-checkpoint', help='start from this checkpoint instead of pre-training')
    parser.add_argument('--no-second-order', action='store_true',
                        help='treat the shallow gradient as a constant when training')
    parser.add_argument('--no-progress', action='store_true', help='hide the progress bar')


def config_overrides(args):
    training = {}
    for key, value in [('variant', args.variant), ('steps', args.steps), ('seed', args.seed),
                       ('pretrain_steps', args.pretrain_steps), ('batch_size', args.batch_size),
                       ('lr', args.lr), ('init_checkpoint', args.init_checkpoint)]:
        if value is not None:
            training[key] = value
    if args.no_second_order:
        training['second_order'] = False
    return {'training': training} if training else None


def run_command(args, cfg):
    if cfg.training.init_checkpoint:
        require_path(cfg.training.init_checkpoint, 'Initial checkpoint')
    sequences = None
    if args.sequences:
        sequences = []
        for p in args.sequences:
            sequences.extend(load_sequences(require_path(p, 'Sequence directory')))

    out = output_dir(args, 'train')
    (out / 'config.yaml').write_text(yaml_dump(cfg))

    handler = add_run_logfile(str(out / 'train.log'))
    try:
        dataset, heldout = prepare_datasets(cfg, sequences)
        checkpoint = train(cfg, dataset, output_dir=out, heldout=heldout, progress=not args.no_progress)
        log.info('Wrote {} ({})'.format(out / 'checkpoint.ckpt', checkpoint))
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
