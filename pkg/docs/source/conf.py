"""Sphinx configuration for the octa-restore documentation."""

from __future__ import annotations

import sys
from datetime import date
from pathlib import Path

SRC_DIR = Path(__file__).resolve().parents[2] / "src"
sys.path.insert(0, str(SRC_DIR))

from octa_restore import __version__  # noqa: E402

project = "octa-restore"
author = "OCTA Restore Team"
copyright = f"{date.today().year}, {author}"
version = release = __version__
language = "ru"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
    "sphinx.ext.intersphinx",
]

autodoc_mock_imports = ["torch"]  # signatures only
autosummary_generate = True
autodoc_member_order = "bysource"
autodoc_typehints = "description"
autodoc_default_options = {"members": True, "show-inheritance": True}

napoleon_google_docstring = True
napoleon_numpy_docstring = False

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
}

exclude_patterns = ["_build"]
html_theme = "alabaster"
html_title = "octa-restore"
