# Configuration file for the Sphinx documentation builder.
#
# This file does only contain a selection of the most common options. For a
# full list see the documentation:
# http://www.sphinx-doc.org/en/master/config

import os
import sys
sys.path.insert(0, os.path.abspath('..'))   # for hyperflow

import hyperflow


# -- Project information -----------------------------------------------------

project = 'Hyperflow'
copyright = '2026, Hyperflow contributors'
author = 'Hyperflow contributors'
version = hyperflow.__version__
release = hyperflow.__version__


# -- General configuration ---------------------------------------------------

nitpicky = True
extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
]
templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
language = None
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = []
htmlhelp_basename = 'Hyperflowdoc'

intersphinx_mapping = {
    'https://docs.python.org/3/': None,
    'https://numpy.org/doc/stable/': None,
    'https://docs.scipy.org/doc/scipy/': None,
}
