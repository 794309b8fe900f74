import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext = Extension(
    "livestyle.kernels._native",
    ["src/livestyle/kernels/_native.pyx"],
    include_dirs=[numpy.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=["-O3"],
)

# The package works without the compiled extension (a numpy fallback is
# selected at import); skip the extension when Cython is unavailable.
ext_modules = cythonize([ext], compiler_directives={"language_level": "3"}) if cythonize else []

setup(ext_modules=ext_modules)
