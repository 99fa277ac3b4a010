from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "reflectmc._kernels",
                ["src/reflectmc/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: the package still works through the pure-numpy kernels.
    extensions = []

setup(ext_modules=extensions)
