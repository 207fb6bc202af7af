#!/usr/bin/env python
# -*- coding: utf-8 -*-

from gradnet_tools.evaluation import ABLATION_VARIANTS
from jinja2 import Template
import subprocess
import sys
import re


DOIT_CONFIG = {
    'default_tasks': ['show_cmds'],
    'backend': 'json',
    'dep_file': '.doit.json',
}

RUNS = 'runs/experiment'
PRETRAIN = '{}/pretrain/checkpoint.ckpt'.format(RUNS)


def task_show_cmds():
    """Show the list of available doit commands"""
    def noargs():
        print('doit has been run without arguments. Please specify which command to run.\n')
    return {'actions': [noargs, 'doit list'],
            'verbosity': 2}


def task_clean_pyc():
    """Clean all the .pyc files."""
    return {'actions': ['find . -iname "*.pyc" -delete']}


def task_test():
    """Run the fast unit tests"""
    return {'actions': ['pytest tests'],
            'verbosity': 2}


def task_test_slow():
    """Run all the tests, including the end-to-end training / tracking ones"""
    return {'actions': ['pytest --runslow tests'],
            'verbosity': 2}


def task_gradcheck():
    """Check the analytic gradients against finite differences"""
    return {'actions': ['gradnet gradcheck --second-order'],
            'verbosity': 2}


def task_pretrain():
    """Train the matching network (backbone + U1) shared by all the variants"""
    return {'actions': ['gradnet train --variant no_MG --steps 0 --no-progress -o {}/pretrain'.format(RUNS)],
            'targets': [PRETRAIN],
            'verbosity': 2}


def task_train():
    """Train one checkpoint per variant, starting from the pretrained weights"""
    for variant in ABLATION_VARIANTS:
        yield {'name': variant,
               'actions': ['gradnet train --variant {v} --init-checkpoint {p} --no-progress -o {r}/{v}'
                           .format(v=variant, p=PRETRAIN, r=RUNS)],
               'file_dep': [PRETRAIN],
               'targets': ['{}/{}/checkpoint.ckpt'.format(RUNS, variant)],
               'verbosity': 2}


def task_experiment():
    """Run the ablation and the diagnostics on the trained variants"""
    checkpoints = ['{}/{}/checkpoint.ckpt'.format(RUNS, v) for v in ABLATION_VARIANTS]
    return {'actions': ['gradnet ablate --runs {r} -o {r}/ablate'.format(r=RUNS),
                        'gradnet diag --runs {r} --plot -o {r}/diag'.format(r=RUNS)],
            'file_dep': checkpoints,
            'verbosity': 2}


def task_doc():
    """Build the Sphinx documentation in docs/_build/html"""
    return {'actions': ['sphinx-build -b html docs docs/_build/html'],
            'task_dep': ['gen_config_yaml_doc', 'gen_cmdline_doc']}


def render_doc(name, **context):
    """Render docs/<name>.rst from its jinja template, with ``context`` indented as a code block"""
    context = {k: ''.join('    {}\n'.format(l) for l in v.splitlines()) for k, v in context.items()}
    with open('docs/{}.rst.jinja'.format(name)) as f:
        template = Template(f.read())
    with open('docs/{}.rst'.format(name), 'w') as out:
        out.write(template.render(**context))


def task_gen_config_yaml_doc():
    """Regenerate docs/config_yaml.rst from the commented config.yaml file"""
    def update():
        with open('gradnet_tools/config.yaml') as f:
            render_doc('config_yaml', config_yaml=f.read())
    return {'actions': [update],
            'file_dep': ['gradnet_tools/config.yaml', 'docs/config_yaml.rst.jinja'],
            'targets': ['docs/config_yaml.rst']}


def task_gen_cmdline_doc():
    """Regenerate docs/cmdline.rst from the output of `gradnet -h`"""
    # run at execution time, not every time doit loads this file
    def update():
        stdout = subprocess.run(['gradnet', '-h'], stdout=subprocess.PIPE, universal_newlines=True).stdout
        render_doc('cmdline', help=stdout)
    return {'actions': [update],
            'verbosity': 2}


# Release management

VERSION_PATTERNS = [
    ('setup.py', r"VERSION = '\S*'", "VERSION = '{release}'"),
    ('docs/conf.py', r"version = '\S*'", "version = '{short}'"),
    ('docs/conf.py', r"release = '\S*'", "release = '{release}'"),
]


def set_version(pos):
    if len(pos) != 1:
        print('usage: doit set_version X.Y.Z', file=sys.stderr)
        sys.exit(1)
    release = pos[0]
    # 0.3.0rc1 -> 0.3
    short = '.'.join(re.split('a|b|rc', release)[0].split('.')[:2])
    print('setting version {}'.format(release))
    for filename, pattern, replacement in VERSION_PATTERNS:
        with open(filename) as f:
            content = f.read()
        with open(filename, 'w') as f:
            f.write(re.sub(pattern, replacement.format(release=release, short=short), content))


def task_set_version():
    """Set the version in setup.py and docs/conf.py"""
    return {'actions': [set_version],
            'pos_arg': 'pos',
            'verbosity': 2}
