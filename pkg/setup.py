import os

from setuptools import Extension, setup

# DIRTYDERIV_NO_EXT=1 installs the pure-Python fallback only.
ext_modules = []
if not os.environ.get("DIRTYDERIV_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "dirtyderiv._kernels",
                    ["src/dirtyderiv/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
