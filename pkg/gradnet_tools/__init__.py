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

import logging
from .slogging import setupLogging
from .core import GRADNET_TOOLS_HOMEDIR

setupLogging(with_time=True, with_lineno=True, homedir=GRADNET_TOOLS_HOMEDIR)

# default logging levels
logging.getLogger('gradnet_tools').setLevel(logging.INFO)


def init(config_file=None, overrides=None, loglevels=None):
    from .core import load_config
    import torch

    cfg = load_config(config_file, overrides=overrides, loglevels=loglevels)

    # bit-identical results on one machine need deterministic kernels
    torch.use_deterministic_algorithms(True)

    log = logging.getLogger('gradnet_tools.profile')
    log.debug('Loaded config with sections: {}'.format(', '.join(sorted(cfg.keys()))))
    return cfg
