"""Build script for the optional compiled physics kernel.

The package works without the extension (pure-Python reference kernel); the
extension is a drop-in speedup. FP contraction is disabled so compiled and
reference kernels produce bit-identical trajectories.

    python setup.py build_ext --inplace
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "saclo._kernel._fast",
                ["src/saclo/_kernel/_fast.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin-sin", "-fno-builtin-cos"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
