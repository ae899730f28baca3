import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DEPFIX_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("depfix._kernels._levenshtein", ["src/depfix/_kernels/_levenshtein.pyx"])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
