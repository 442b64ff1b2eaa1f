"""Build script: compiles the optional fast kernel extension.

The package works without the extension (pure numpy fallback); if Cython
or a C compiler is missing the build degrades gracefully.
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
                "eegfactor._fastkern",
                sources=["src/eegfactor/_fastkern.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-march=native", "-funroll-loops", "-ffast-math"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
