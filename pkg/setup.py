import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "hsipipe._kernels",
                ["src/hsipipe/_kernels.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    # Without Cython the package still installs; the pure-NumPy kernel
    # backend is selected at import time.
    extensions = []

setup(ext_modules=extensions)
