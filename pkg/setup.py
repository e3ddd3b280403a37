import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernels are optional: if the toolchain is missing the package
# falls back to the numpy reference implementation at import time.
extensions = [
    Extension(
        "oplab._core",
        ["src/oplab/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
