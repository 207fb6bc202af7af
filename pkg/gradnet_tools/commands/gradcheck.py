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

from ..gradcheck import run_gradchecks, TOLERANCE
import logging

log = logging.getLogger(__name__)


def short_description():
    return 'check analytic gradients against finite differences'


def help():
    return """gradcheck [--instances N] [--second-order] [--tolerance T]

Compares the gradients of the loss through cross-correlation, U1 and U2 with
central finite differences in double precision, on random desk-scale instances.
Exits with 0 iff every max relative error is below the tolerance.
"""


def add_arguments(parser):
    parser.add_argument('--instances', type=int, default=20, help='number of random instances')
    parser.add_argument('--tolerance', type=float, default=TOLERANCE, help='max relative error')
    parser.add_argument('--second-order', action='store_true',
                        help='also measure the difference made by differentiating through the shallow gradient')
    parser.add_argument('--inject-fault', choices=['sign_flip'], help='corrupt the analytic gradients (self-test)')


def run_command(args, cfg):
    report = run_gradchecks(cfg.network, instances=args.instances, seed=args.seed or 0,
                            tolerance=args.tolerance, fault=args.inject_fault, second_order=args.second_order)
    for name, err in report.max_rel_errors.items():
        print('{:<32} {:.3e}'.format(name, err))
    if args.second_order:
        print('{:<32} {:.3e}'.format('second_order/min_difference_norm', min(report.second_order_differences)))
    print('PASSED' if report.passed else 'FAILED')
    return 0 if report.passed else 2
