# Native rollout kernel.  Optional: if Cython or a C compiler is missing the
# package installs anyway and runs on the pure-Python fallback.
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "policyevo._kernel",
                ["src/policyevo/_kernel.pyx"],
                # no FMA contraction or fast-math: results must match CPython bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
