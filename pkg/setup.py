"""Build script: compiles the optional statevector extension.

The package is pure Python plus one Cython extension holding the hot
quantum-gate kernels.  If Cython (or a C compiler) is unavailable the
build silently falls back to the pure-numpy kernels selected at import
time in ``gqmu.statevec``.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "gqmu._statevec",
                ["src/gqmu/_statevec.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build host
    print(f"gqmu: skipping compiled kernels ({exc}); using pure-Python fallback")

setup(ext_modules=ext_modules)
