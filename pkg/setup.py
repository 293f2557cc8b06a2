#!/usr/bin/env python
from os import path

from setuptools import find_packages, setup

pkg_name = next(p for p in find_packages(exclude=["tests*"]) if "." not in p)
here = path.abspath(path.dirname(__file__))

with open(path.join(here, "README.md"), "r") as f:
    long_description = f.read()

with open(path.join(here, "requirements.txt")) as f:
    requirements = f.read().splitlines()

with open(path.join(here, pkg_name, "version.py")) as f:
    exec(f.read())

setup(
    name=pkg_name,
    version=__version__,  # noqa F821
    description="Robust spectral clustering of weighted graphs with pass-to-ranks",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT",
    keywords="spectral-clustering stochastic-blockmodel ranks robust-statistics weighted-graphs",
    packages=find_packages(exclude=["contrib", "docs", "tests*"]),
    python_requires=">=3.8",
    install_requires=requirements,
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": [f"{pkg_name}={pkg_name}.cli:main"]},
)
