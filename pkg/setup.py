#!/usr/bin/env python

# ----------------------------------------------------------------------------
# Copyright (c) 2024--, diwr development team.
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file COPYING.txt, distributed with this software.
# ----------------------------------------------------------------------------

from setuptools import find_packages, setup

classifiers = [
    'Development Status :: 3 - Alpha',
    'License :: OSI Approved :: BSD License',
    'Environment :: Console',
    'Topic :: Scientific/Engineering',
    'Topic :: Scientific/Engineering :: Visualization',
    'Programming Language :: Python',
    'Programming Language :: Python :: 3',
    'Programming Language :: Python :: 3.11',
    'Programming Language :: Python :: 3.12',
    'Operating System :: Unix',
    'Operating System :: POSIX',
    'Operating System :: MacOS :: MacOS X',
    'Operating System :: Microsoft :: Windows']


description = ('Surface reconstruction from unoriented, corrupted point '
               'clouds by Dirichlet energy minimization of winding numbers')

with open('README.md') as f:
    long_description = f.read()

keywords = 'point cloud surface reconstruction winding number geometry',

base = ['numpy', 'scipy', 'pandas', 'matplotlib >= 3.5', 'seaborn >= 0.12',
        'click', 'plyfile', 'scikit-image', 'trimesh >= 4']
test = ['pytest', 'flake8']
coverage = ['coverage']
all_deps = base + test + coverage

setup(name='diwr',
      version='0.1.0',
      license='BSD',
      description=description,
      long_description=long_description,
      long_description_content_type='text/markdown',
      keywords=keywords,
      classifiers=classifiers,
      python_requires='>=3.11',
      packages=find_packages(),
      package_data={
        'diwr': ['tests/data/*.xyz', 'tests/data/*.toml',
                 'tests/data/*.json', 'tests/data/*.obj']},
      install_requires=base,
      extras_require={'test': test,
                      'coverage': coverage,
                      'all': all_deps},
      entry_points='''
          [console_scripts]
          diwr=diwr.scripts.cli:diwr
      ''')
