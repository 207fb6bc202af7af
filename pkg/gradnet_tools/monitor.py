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

from collections import deque, OrderedDict
from pathlib import Path
from .core import AttributeDict
import csv
import math
import logging

log = logging.getLogger(__name__)


class RunningMean(object):
    """Mean of the last N pushed values.
    For example, the training loss is reported as a running mean over the last 50 steps
    to smooth out the variance between batches.
    """
    def __init__(self, n):
        self.n = n
        self.values = deque(maxlen=n)

    def push(self, value):
        self.values.append(value)

    def mean(self):
        if not self.values:
            return math.nan
        return sum(self.values) / len(self.values)

    def full(self):
        return len(self.values) == self.n

    def __len__(self):
        return len(self.values)


class CsvLog(object):
    """Append-only CSV log, flushed after each row so that it can be followed while training.

    An optional comment line (``# key=value key=value``) precedes the header.
    """
    def __init__(self, filename, columns, meta=None):
        self.filename = filename
        self.columns = list(columns)
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        self.f = open(str(filename), 'w', newline='')
        if meta:
            self.f.write('# {}\n'.format(' '.join('{}={}'.format(k, v) for k, v in meta.items())))
        self.writer = csv.writer(self.f)
        self.writer.writerow(self.columns)
        self.f.flush()

    def write(self, *values):
        if len(values) != len(self.columns):
            raise ValueError('Expected {} values ({}), got {}'.format(len(self.columns), ', '.join(self.columns), len(values)))
        self.writer.writerow([_format(v) for v in values])
        self.f.flush()

    def close(self):
        self.f.close()

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()


def _format(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_log(filename):
    """Read a CSV log back as ``meta`` (from the comment line) and ``columns`` (name -> list of floats).

    An empty or missing file yields empty columns.
    """
    meta, columns = OrderedDict(), OrderedDict()
    if not Path(filename).exists():
        log.warning('Log file not found: {}'.format(filename))
        return AttributeDict(meta=meta, columns=columns)

    with open(str(filename), newline='') as f:
        lines = []
        for line in f:
            if line.startswith('#'):
                for item in line[1:].split():
                    k, _, v = item.partition('=')
                    meta[k] = v
            elif line.strip():
                lines.append(line)

    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        return AttributeDict(meta=meta, columns=columns)
    for name in header:
        columns[name] = []
    for row in reader:
        for name, value in zip(header, row):
            columns[name].append(float(value))
    return AttributeDict(meta=meta, columns=columns)
