#!/usr/bin/env python
# coding=utf-8
"""A setuptools-based script for installing Mask-FPAN.

For more information, see:

* https://packaging.python.org/en/latest/index.html
* https://docs.python.org/distutils/sourcedist.html
"""
from __future__ import unicode_literals

from setuptools import find_packages, setup  # prefer setuptools over distutils


with open('README.rst') as handle:
    LONG_DESCRIPTION = handle.read()


with open('VERSION') as handle:
    VERSION = handle.read().strip()


setup(
    name='mask-fpan',
    version=VERSION,
    description='Semi-supervised, occlusion-robust face parsing',
    long_description=LONG_DESCRIPTION,
    license='GPLv3',
    # See https://pypi.python.org/pypi?%3Aaction=list_classifiers
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        ('License :: OSI Approved :: GNU General Public License v3 or later '
         '(GPLv3+)'),
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Image Recognition',
    ],
    packages=find_packages(exclude=('tests',)),
    python_requires='>=3.6',
    install_requires=[
        'mock',
        'numpy>=1.17',
        'packaging',
        'Pillow',
        'plumbum',
        'pyxdg',
        'scipy',
    ],
    entry_points={
        'console_scripts': ['mask-fpan=mask_fpan.cli:main'],
    },
    test_suite='tests',
)
