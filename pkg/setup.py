import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "channelgames._kernels._core",
                ["src/channelgames/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Cython unavailable: install pure-Python only, the kernel dispatcher
    # falls back to the numpy backend at import time.
    extensions = []

setup(ext_modules=extensions)
