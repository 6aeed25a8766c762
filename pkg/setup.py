import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "damdnet.backend._native",
                sources=["src/damdnet/backend/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-NumPy fallback kernels are selected at import when the compiled
    # extension is missing, so the package still works without Cython.
    ext_modules = []

setup(ext_modules=ext_modules)
