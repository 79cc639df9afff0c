# Sphinx configuration for the eoscascade API reference. For a full list of
# options see https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

sys.path.insert(0, os.path.abspath('../..'))

from eoscascade import __version__  # noqa: E402

project = 'eoscascade'
copyright = '2023, The eoscascade Authors'
author = 'The eoscascade Authors'
release = __version__

master_doc = 'index'
html_copy_source = False
html_show_sphinx = False
extensions = ['sphinx.ext.autodoc', 'sphinx.ext.napoleon']
autodoc_member_order = 'bysource'
templates_path = ['_templates']
exclude_patterns = []
html_theme = 'alabaster'
html_static_path = ['_static']
