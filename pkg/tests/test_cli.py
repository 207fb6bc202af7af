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


from conftest import TINY_TRAINING
from gradnet_tools.cmdline import main, EXIT_OK, EXIT_USAGE, EXIT_FAILURE
from gradnet_tools.commands import eval as eval_command, track as track_command
from gradnet_tools.core import yaml_dump, yaml_load, load_config
from gradnet_tools.data import generate_suite
from argparse import Namespace
import numpy as np
import shutil
import pytest


def write_config(tmpdir, cfg, name='config.yaml'):
    filename = tmpdir.join(name)
    filename.write(yaml_dump(cfg))
    return str(filename)


def test_version(capsys):
    assert main(['version']) == EXIT_OK
    assert capsys.readouterr().out.strip()


def test_unknown_command():
    with pytest.raises(SystemExit) as e:
        main(['nonexistent'])
    assert e.value.code == EXIT_USAGE


def test_bad_config_key(tmpdir):
    config = write_config(tmpdir, {'training': {'bogus': 1}})
    assert main(['version', '-c', config]) == EXIT_USAGE


def test_config_command(tmpdir, capsys):
    config = write_config(tmpdir, {'training': {'steps': 17}})
    assert main(['config', '-c', config]) == EXIT_OK
    cfg = yaml_load(capsys.readouterr().out)
    assert cfg['training']['steps'] == 17
    assert cfg['tracking']['update_interval'] == 5


def test_config_install(capsys):
    assert main(['config', '--install']) == EXIT_OK
    filename = capsys.readouterr().out.strip()
    assert filename.endswith('config.yaml')
    # the installed file only holds valid keys
    assert main(['config', '-c', filename]) == EXIT_OK


def test_synth(tmpdir):
    out = tmpdir.join('data')
    assert main(['synth', '--count', '3', '-o', str(out)]) == EXIT_OK
    assert sorted(p.basename for p in out.listdir()) == ['eval_000', 'eval_001', 'eval_002']
    assert out.join('eval_000', 'groundtruth_rect.txt').check()
    assert out.join('eval_000', 'img', '0001.png').check()


def test_track_missing_checkpoint(tmpdir):
    assert main(['track', '--checkpoint', str(tmpdir.join('missing.ckpt')), '-o', str(tmpdir)]) == EXIT_USAGE


def test_eval_missing_sequence(tmpdir):
    assert main(['eval', '--results', str(tmpdir), str(tmpdir.join('missing')), '-o', str(tmpdir)]) == EXIT_USAGE


def test_eval_oracle_results(tmpdir, capsys):
    data = tmpdir.join('data')
    assert main(['synth', '--count', '2', '-o', str(data)]) == EXIT_OK
    results = tmpdir.mkdir('results')
    for seq in data.listdir():
        shutil.copyfile(str(seq.join('groundtruth_rect.txt')), str(results.join(seq.basename + '.txt')))
    capsys.readouterr()

    assert main(['eval', str(data), '--results', str(results), '-o', str(tmpdir.join('out'))]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'precision@20: 1.0000' in out
    assert 'success AUC:  1.0000' in out
    assert tmpdir.join('out', 'ope.json').check()


def test_eval_needs_one_source(tmpdir):
    assert main(['eval', '-o', str(tmpdir)]) == EXIT_USAGE


def test_gradcheck_fault(capsys):
    assert main(['gradcheck', '--instances', '1', '--inject-fault', 'sign_flip']) == EXIT_FAILURE
    assert 'FAILED' in capsys.readouterr().out


def test_train_track(tmpdir):
    config = write_config(tmpdir, TINY_TRAINING)
    run = tmpdir.join('run')
    assert main(['train', '-c', config, '-o', str(run), '--no-progress']) == EXIT_OK
    for name in ('checkpoint.ckpt', 'train_log.csv', 'pretrain_log.csv', 'config.yaml', 'train.log'):
        assert run.join(name).check()

    data = tmpdir.join('data')
    assert main(['synth', '--count', '1', '-c', config, '-o', str(data)]) == EXIT_OK
    out = tmpdir.join('track')
    assert main(['track', '--checkpoint', str(run.join('checkpoint.ckpt')), str(data), '-o', str(out)]) == EXIT_OK
    assert out.join('eval_000.txt').check()
    assert out.join('eval_000.events.json').check()


def test_seed_selects_eval_suite():
    args = Namespace(seed=5, aggregate=None)
    assert track_command.config_overrides(args) == {'synthetic': {'suite': {'eval_seed': 5}}}
    assert eval_command.config_overrides(args) == {'synthetic': {'suite': {'eval_seed': 5}}}
    assert eval_command.config_overrides(Namespace(seed=5, aggregate='frame')) == {
        'synthetic': {'suite': {'eval_seed': 5}}, 'evaluation': {'aggregate': 'frame'}}
    assert track_command.config_overrides(Namespace(seed=None)) is None
    assert eval_command.config_overrides(Namespace(seed=None, aggregate=None)) is None

    def first_suite_boxes(seed):
        cfg = load_config(overrides=track_command.config_overrides(Namespace(seed=seed)))
        return generate_suite(cfg.synthetic, 'eval', count=1)[0].boxes

    assert np.array_equal(first_suite_boxes(5), first_suite_boxes(5))
    assert not np.array_equal(first_suite_boxes(5), first_suite_boxes(6))
