import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.environ.get("DRIFTGRAPH_NO_EXT") != "1":
    extensions = cythonize(
        [
            Extension(
                "driftgraph.kernels._edgefvm",
                ["src/driftgraph/kernels/_edgefvm.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
