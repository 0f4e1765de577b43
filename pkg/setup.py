"""Build the compiled kernel core.

The extension is optional: when Cython or a C compiler is unavailable the
package installs without it and falls back to the pure-Python core.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SEMICLASSICAL_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("semiclassical._ccore", ["src/semiclassical/_ccore.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
