# -*- coding: utf-8 -*-
#
# gradnet_tools documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

import sys
import os

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.todo',
    'sphinx.ext.mathjax',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'gradnet_tools'
copyright = '2019, The gradnet_tools developers'

# The short X.Y version.
version = '0.1'
# The full version, including alpha/beta/rc tags.
release = '0.1.0'

exclude_patterns = ['_build']
pygments_style = 'sphinx'
highlight_language = 'text'

sys.path.insert(0, os.path.abspath('..'))


# -- Options for HTML output ----------------------------------------------

# on_rtd is whether we are on readthedocs.org
on_rtd = os.environ.get('READTHEDOCS', None) == 'True'

if not on_rtd:  # only import and set the theme if we're building docs locally
    import sphinx_rtd_theme
    html_theme = 'sphinx_rtd_theme'
    html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]

html_static_path = ['_static']
htmlhelp_basename = 'GradNetToolsdoc'


# -- Options for manual page output ---------------------------------------

man_pages = [
    ('index', 'gradnet', 'gradnet_tools Documentation',
     ['The gradnet_tools developers'], 1)
]
