from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = cythonize(
    [Extension("qgforge._lcs", ["src/qgforge/_lcs.pyx"])],
    language_level=3,
)

setup(ext_modules=ext_modules)
