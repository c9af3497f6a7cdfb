#!/usr/bin/env python

from os import path

import setuptools

path_to_repo = path.abspath(path.dirname(__file__))
with open(path.join(path_to_repo, 'readme.md'), encoding='utf-8') as f:
    long_description = f.read()

setuptools.setup(name='hgdta',
                 version='0.1',
                 description='Hierarchical graph representation learning for drug-target affinity',
                 long_description=long_description,
                 long_description_content_type="text/markdown",
                 packages=setuptools.find_packages(exclude=['tests']),
                 install_requires=[
                     'torch>=2.2',
                     'numpy',
                     'pandas',
                     'scipy',
                     'scikit-learn',
                     'numba',
                     'tqdm',
                 ],
                 entry_points={
                     'console_scripts': ['hgdta = hgdta.cli:main'],
                 },
                 python_requires='>=3.8',
                 classifiers=[
                     "Programming Language :: Python :: 3",
                     "License :: OSI Approved :: MIT License",
                     "Operating System :: OS Independent",
                 ],
                 )
