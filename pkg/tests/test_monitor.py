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


from gradnet_tools.monitor import RunningMean, CsvLog, read_log
import math
import pytest


def test_running_mean():
    m = RunningMean(3)

    # check initial conditions
    assert math.isnan(m.mean())
    assert not m.full()
    m.push(1.0)
    m.push(2.0)
    assert m.mean() == 1.5
    assert len(m) == 2
    assert not m.full()

    # oldest values drop out
    m.push(3.0)
    m.push(7.0)
    assert m.full()
    assert len(m) == 3
    assert m.mean() == 4.0


def test_csv_log(tmpdir):
    filename = str(tmpdir.join('logs', 'train_log.csv'))
    with CsvLog(filename, ['step', 'loss'], meta={'variant': 'ours', 'seed': 7}) as log:
        log.write(1, 0.5)
        log.write(2, 0.1 + 0.2)
        with pytest.raises(ValueError):
            log.write(3)

    lines = open(filename).read().splitlines()
    assert lines[0] == '# variant=ours seed=7'
    assert lines[1] == 'step,loss'

    result = read_log(filename)
    assert result.meta == {'variant': 'ours', 'seed': '7'}
    assert result.columns['step'] == [1.0, 2.0]
    # floats are written with full precision
    assert result.columns['loss'] == [0.5, 0.1 + 0.2]


def test_read_log_missing_or_empty(tmpdir):
    result = read_log(str(tmpdir.join('missing.csv')))
    assert result.columns == {}

    tmpdir.join('empty.csv').write('')
    assert read_log(str(tmpdir.join('empty.csv'))).columns == {}
