from setuptools import Extension, setup

import numpy

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-python install still works; the numpy kernel fallback is used.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "fedforget.nn._kernels_cy",
                ["src/fedforget/nn/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
