"""Builds the optional compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so the extension is marked optional and a failed compile
only degrades performance.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "frnlayer.kernels._conv_cy",
                ["src/frnlayer/kernels/_conv_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
