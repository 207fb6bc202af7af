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


from gradnet_tools.slogging import setupLogging, add_run_logfile, SimpleFormatter
from logging.handlers import TimedRotatingFileHandler
import logging
import pytest


@pytest.fixture
def root_handlers():
    root = logging.getLogger()
    before = list(root.handlers)
    yield before
    for h in added_handlers(before):
        root.removeHandler(h)
        h.close()


def added_handlers(before):
    # pytest installs its own capture handlers around each test phase
    return [h for h in logging.getLogger().handlers
            if h not in before and not type(h).__module__.startswith('_pytest')]


def test_setup_logging_handlers(root_handlers, tmpdir):
    setupLogging(colored=False, homedir=str(tmpdir))
    added = added_handlers(root_handlers)
    assert len(added) == 2
    assert sum(isinstance(h, TimedRotatingFileHandler) for h in added) == 1
    stream, = [h for h in added if not isinstance(h, TimedRotatingFileHandler)]
    assert type(stream) is logging.StreamHandler
    assert isinstance(stream.formatter, SimpleFormatter)
    assert tmpdir.join('gradnet_tools.log').check()


def test_setup_logging_without_homedir(root_handlers):
    setupLogging(colored=False)
    added = added_handlers(root_handlers)
    assert len(added) == 1
    assert type(added[0]) is logging.StreamHandler


def test_setup_logging_to_file(root_handlers, tmpdir):
    filename = tmpdir.join('logs', 'run.log')
    setupLogging(filename=str(filename))
    added = added_handlers(root_handlers)
    assert [type(h) for h in added] == [logging.FileHandler]
    logging.getLogger('gradnet_tools.test').warning('to the file')
    added[0].flush()
    assert 'to the file' in filename.read()


def test_add_run_logfile(root_handlers, tmpdir):
    filename = tmpdir.join('train.log')
    handler = add_run_logfile(str(filename))
    assert handler in logging.getLogger().handlers
    logging.getLogger('gradnet_tools.test').warning('copied into the run')
    handler.flush()
    assert 'copied into the run' in filename.read()
