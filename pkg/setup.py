"""Build script: compiles the kernel extension when a toolchain is present.

The package works without the extension (a NumPy implementation of the same
kernels is selected at import), so compilation failures only cost speed.
Set MFDELTA_SKIP_EXTENSION=1 to skip the build explicitly.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler: fall back to pure python
            print(f"warning: kernel extension build skipped ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); using NumPy kernels")


def extensions():
    if os.environ.get("MFDELTA_SKIP_EXTENSION") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython unavailable; installing with NumPy kernels only")
        return []
    ext = Extension(
        "mfdelta._kernels_cy",
        ["src/mfdelta/_kernels_cy.pyx"],
        # -ffp-contract=off keeps the compiled arithmetic bitwise identical
        # to the NumPy reference kernels (no fused multiply-adds).
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
