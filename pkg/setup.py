import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SOFTRMS_BACKEND", "").lower() != "python":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        # no Cython: install the pure-Python kernels only
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "softrms._kernels",
                    ["src/softrms/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
