#!/usr/bin/env python

from setuptools import setup

# note: this is a repeat of the README, to evolve, good enough for now.
long_desc = """
Simulate end-of-sentence segmentation in a two-pass streaming speech
recognizer and measure segment length, EOS latency and word error rate.
"""

setup(
    name="eoscascade",
    version="0.1.0",  # keep in sync with eoscascade.__version__
    license="LGPL-2.1-or-later",
    description="Segmentation and latency experiments for cascaded streaming ASR",
    long_description=long_desc,
    author="The eoscascade Authors",
    packages=[
        "eoscascade",
    ],
    include_package_data=True,
    zip_safe=False,
    python_requires=">=3.7",
    install_requires=[
        "numpy",
        "PyYAML",
    ],
    entry_points={
        "console_scripts": [
            "eoscascade = eoscascade.cli:main",
        ],
    },
    classifiers=[
        # complete classifier list: http://pypi.python.org/pypi?%3Aaction=list_classifiers
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: GNU Lesser General Public License v2 or later (LGPLv2+)",
        "Programming Language :: Python",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Multimedia :: Sound/Audio :: Speech",
    ],
    keywords=["asr", "streaming", "segmentation", "endpointing", "beam search"],
    package_data={
        "eoscascade": [
            "py.typed",
        ]
    },
)
