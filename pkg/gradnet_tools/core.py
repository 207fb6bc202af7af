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

from os.path import join, dirname, expanduser, exists, abspath
from collections.abc import Mapping
from functools import wraps
from jinja2 import Environment, PackageLoader
from pathlib import Path
from ruamel.yaml import YAML
import importlib
import io
import os
import shutil
import random
import time
import logging

log = logging.getLogger(__name__)


HERE = abspath(dirname(__file__))

GRADNET_TOOLS_HOMEDIR = expanduser(os.environ.get('GRADNET_TOOLS_HOMEDIR', '~/.gradnet_tools'))
GRADNET_TOOLS_CONFIG_FILE = join(GRADNET_TOOLS_HOMEDIR, 'config.yaml')

# root directory for command outputs when --output is not given
OUTPUT_ROOT_ENV = 'GRADNET_OUTPUT_ROOT'


class GradNetError(Exception):
    pass


class ConfigError(GradNetError):
    pass


class NumericalError(GradNetError):
    pass


class SequenceError(GradNetError):
    pass


class CheckpointError(GradNetError):
    pass


class AttributeDict(dict):
    def __init__(self, *args, **kwargs):
        super(AttributeDict, self).__init__(*args, **kwargs)
        self.__dict__ = self


def to_attribute_dict(obj):
    """Recursively convert mappings (and mappings inside lists) to AttributeDicts."""
    if isinstance(obj, Mapping):
        return AttributeDict((k, to_attribute_dict(v)) for k, v in obj.items())
    elif isinstance(obj, list):
        return [to_attribute_dict(x) for x in obj]
    return obj


def to_plain(obj):
    """Inverse of to_attribute_dict, used before dumping to YAML/JSON."""
    if isinstance(obj, Mapping):
        return {str(k): to_plain(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    return obj


config = None


def profile(f):
    @wraps(f)
    def wrapper(*args, **kwargs):
        plog = logging.getLogger('gradnet_tools.profile')
        start_time = time.time()
        try:
            result = f(*args, **kwargs)
            stop_time = time.time()
            plog.debug('Function %s: returned in %0.3f ms' % (f.__name__, (stop_time-start_time)*1000))
            return result
        except Exception:
            stop_time = time.time()
            plog.debug('Function %s: exception in %0.3f ms' % (f.__name__, (stop_time-start_time)*1000))
            raise
    return wrapper


def seed_everything(seed):
    """Seed all the random generators we rely on, and return a numpy Generator for explicit use."""
    import numpy as np
    import torch
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    return np.random.default_rng(seed)


def yaml_load(contents):
    return YAML(typ='safe').load(contents)


def yaml_dump(obj):
    y = YAML()
    y.default_flow_style = False
    out = io.StringIO()
    y.dump(to_plain(obj), out)
    return out.getvalue()


def _render(contents):
    env = Environment(loader=PackageLoader('gradnet_tools', 'templates/config'))
    return env.from_string(contents).render()


def default_config():
    env = Environment(loader=PackageLoader('gradnet_tools', 'templates/config'))
    try:
        default = env.get_template('default.yaml').render()
        return yaml_load(default)
    except Exception:
        log.error('Could not load defaults for config.yaml file...')
        raise


def recursive_update(a, b, check_keys=True, prefix=''):
    for k, v in b.items():
        key = '{}{}'.format(prefix, k)
        if check_keys and k not in a:
            raise ConfigError('Unknown configuration key: {}'.format(key))
        if (k in a
            and isinstance(a[k], dict)
            and isinstance(v, Mapping)):
            recursive_update(a[k], v, check_keys=check_keys, prefix=key + '.')
        else:
            a[k] = v


def load_config(filename=None, overrides=None, loglevels=None):
    """Load the default config, merge the given config file (or the one in the home dir)
    on top of it, then the overrides coming from the command line. Unknown keys are errors."""
    global config

    default = default_config()

    if filename is None and exists(GRADNET_TOOLS_CONFIG_FILE):
        filename = GRADNET_TOOLS_CONFIG_FILE

    if filename is not None:
        log.info('Loading config file: %s' % filename)
        try:
            config_contents = open(filename).read()
        except OSError as e:
            raise ConfigError('Could not read config file: {} ({})'.format(filename, e))

        try:
            config_contents = _render(config_contents)
        except Exception as e:
            raise ConfigError('Could not render config file {} as a valid jinja2 template: {}'.format(filename, e))

        try:
            user_config = yaml_load(config_contents) or {}
        except Exception as e:
            log.debug('Config file contents:\n%s' % config_contents)
            raise ConfigError('Config file {} is not a valid YAML object: {}'.format(filename, e))

        if not isinstance(user_config, Mapping):
            raise ConfigError('Config file {} should contain a mapping at its top level'.format(filename))

        recursive_update(default, user_config)

    if overrides:
        recursive_update(default, overrides)

    config = to_attribute_dict(default)

    # setup given logging levels, otherwise from config file
    loglevels = loglevels or config.get('logging', {})
    for name, level in loglevels.items():
        logging.getLogger(name).setLevel(getattr(logging, level))

    return config


def install_default_config():
    """Copy the commented config.yaml into the home dir, for users to tune."""
    if exists(GRADNET_TOOLS_CONFIG_FILE):
        return GRADNET_TOOLS_CONFIG_FILE
    log.info('Copying default config file to %s' % GRADNET_TOOLS_CONFIG_FILE)
    Path(GRADNET_TOOLS_HOMEDIR).mkdir(parents=True, exist_ok=True)
    shutil.copyfile(join(HERE, 'config.yaml'), GRADNET_TOOLS_CONFIG_FILE)
    return GRADNET_TOOLS_CONFIG_FILE


def output_root():
    return os.environ.get(OUTPUT_ROOT_ENV, 'runs')


def get_version():
    version_file = join(HERE, 'version.txt')
    if exists(version_file):
        with open(version_file) as f:
            return f.read().strip()
    try:
        from importlib.metadata import version
        return version('gradnet_tools')
    except Exception:
        return 'unknown'

VERSION = get_version()


def list_valid_plugins(plugin_type):
    """This will look for files inside a python (sub)package and return a list of names
    in this package which can be imported."""
    base_module = importlib.import_module(plugin_type)
    if 'REQUIRED_FUNCTIONS' not in dir(base_module):
        msg = 'Module {} does not look to be a valid plugins directory. It needs to define ' \
              'at least the REQUIRED_FUNCTIONS variables'.format(plugin_type)
        log.error(msg)
        return []

    base_dir = Path(base_module.__file__).parent
    result = []
    for p in sorted(base_dir.glob('*.py')):
        basename = p.parts[-1]
        if not basename.startswith('_'):
            plugin_name = basename[:-3]  # remove trailing '.py'
            # potential candidate, check for required functions
            plugin_members = dir(get_plugin(plugin_type, plugin_name))
            is_valid = True
            for func in base_module.REQUIRED_FUNCTIONS:
                if func not in plugin_members:
                    log.warning('Function {} is not defined for potential plugin {}:{}, not importing it'
                                .format(func, plugin_type, plugin_name))
                    is_valid = False
                    break
            if is_valid:
                result.append(plugin_name)
    return result


def get_plugin(plugin_type, plugin_name):
    plugin = importlib.import_module('{}.{}'.format(plugin_type, plugin_name))
    return plugin
