from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    # The compiled kernels are optional; archevo._kernels falls back to the
    # pure-Python implementations when the extension is absent.
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("archevo._kernels._speedups", ["src/archevo/_kernels/_speedups.pyx"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
