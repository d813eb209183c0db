#!/usr/bin/env python
import os
from codecs import open

from setuptools import find_packages, setup

here = os.path.abspath(os.path.dirname(__file__))

with open(os.path.join(here, "README.rst"), "r", "utf-8") as handle:
    readme = handle.read()


setup(
    name="udit",
    version="0.1.0",
    description="Unbiased image-to-image translation with a semantic "
    "constraint on unwanted attributes, plus the datasets and bias "
    "metrics needed to measure it.",
    long_description=readme,
    packages=find_packages(exclude=["test", "test.*"]),
    python_requires=">=3.8",
    install_requires=[
        "matplotlib>=3.5",
        "numpy>=1.21",
        "pillow>=9.1",
        "pyyaml>=5.1",
        "regex",
        "torch>=1.13",
    ],
    extras_require={
        "dev": [
            "coverage==7.1.0",
            "flake8==3.9.2",
            "isort==5.11.5",
            "mock>=1.2",
            "pylint==2.16.2",
            "pytest==6.2.5",
            "pytest-cov==2.5.1",
            "pytest-timeout==1.3.3",
        ],
    },
    entry_points={
        "console_scripts": [
            "udit=udit.cli.main:main",
        ],
        "pytest11": ["pytest_udit=udit.testing.pytest"],
    },
    zip_safe=False,
    license="Apache License, Version 2.0",
    classifiers=[
        "Programming Language :: Python",
        "Operating System :: MacOS :: MacOS X",
        "Operating System :: POSIX",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Image Processing",
        "Intended Audience :: Science/Research",
    ],
)
