from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: install the pure-Python package only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "drnet._ckernel",
                ["src/drnet/_ckernel.pyx"],
                extra_compile_args=["-O3"],
                # a failed compile leaves the numpy kernel in charge
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
