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

from pathlib import Path
from . import output_dir, input_sequences, parse_assignments, workers
from ..core import ConfigError
from ..evaluation import ABLATION_VARIANTS, run_ablation, write_ablation
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'ablation table over the training variants'


def help():
    return """ablate (--checkpoint VARIANT=FILE ... | --runs DIR) [SEQUENCE_DIR...]

Runs the one-pass evaluation for each variant checkpoint, plus a baseline row
(plain template from the 'ours' checkpoint, never updated), on the synthetic
eval suite by default. With --runs, looks for DIR/<variant>/checkpoint.ckpt.
Writes ablation.csv and ablation.json.
"""


def add_arguments(parser):
    parser.add_argument('sequences', nargs='*', help='sequence directories (default: synthetic eval suite)')
    parser.add_argument('--checkpoint', action='append', help='VARIANT=FILE, can be repeated')
    parser.add_argument('--runs', help='directory containing one <variant>/checkpoint.ckpt per variant')
    parser.add_argument('--baseline-from', default='ours', help='checkpoint used for the baseline row')


def run_command(args, cfg):
    checkpoints = parse_assignments(args.checkpoint)
    if args.runs:
        for variant in ABLATION_VARIANTS:
            path = Path(args.runs) / variant / 'checkpoint.ckpt'
            if path.exists() and variant not in checkpoints:
                checkpoints[variant] = str(path)
    if not checkpoints:
        raise ConfigError('ablate: no checkpoint given, use --checkpoint VARIANT=FILE or --runs DIR')

    sequences = input_sequences(args.sequences, cfg)
    rows = run_ablation(checkpoints, sequences, cfg.tracking, cfg.evaluation,
                        workers=workers(args, cfg), baseline_from=args.baseline_from)
    filename = write_ablation(rows, output_dir(args, 'ablate'))

    print('{:<10} {:>10} {:>8} {:>10}'.format('variant', 'precision', 'AUC', 'AUC drift'))
    for row in rows:
        print('{:<10} {:>10.3f} {:>8.3f} {:>10.3f}'.format(row.variant, row.precision, row.auc, row.auc_drift))
    log.info('Wrote {}'.format(filename))
