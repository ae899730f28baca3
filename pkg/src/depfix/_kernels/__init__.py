"""Edit-distance kernel.

The compiled extension ``_levenshtein`` is used when it was built; otherwise
the pure-Python implementation in ``_levenshtein_py`` is used. Set
``DEPFIX_PURE_PYTHON=1`` to force the fallback.
"""

import os

from depfix._kernels._levenshtein_py import levenshtein as py_levenshtein

if os.environ.get("DEPFIX_PURE_PYTHON"):
    levenshtein = py_levenshtein
    BACKEND = "python"
else:
    try:
        from depfix._kernels._levenshtein import levenshtein
        BACKEND = "cython"
    except ImportError:
        levenshtein = py_levenshtein
        BACKEND = "python"

__all__ = ["BACKEND", "levenshtein", "py_levenshtein"]
