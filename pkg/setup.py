"""Build script: compiles the optional correlation core extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so a failed compile only costs speed on some
workloads. Build in place with:

    python setup.py build_ext --inplace
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Demote extension build failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            warnings.warn(f"skipping compiled extension ({exc}); "
                          "solidsph will use the NumPy backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            warnings.warn(f"failed to build {ext.name} ({exc}); "
                          "solidsph will use the NumPy backend")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "solidsph._conv_core",
        sources=["src/solidsph/_conv_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
