#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods

import zlib

from typing import List, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

BLANK = "<b>"
EOS = "<eos>"

SCHEMA_EVENTS = "eoscascade.events/1"
SCHEMA_LATTICE = "eoscascade.lattice/1"
SCHEMA_CSV = "eoscascade.csv/1"


def _stable_hash(text: str) -> int:
    """Hash a string the same way on every platform and interpreter run"""
    return zlib.crc32(text.encode("utf-8"))


def _rng(*keys: int) -> np.random.Generator:
    """Get a PCG64 generator seeded from a tuple of non-negative integers"""
    return np.random.default_rng([abs(int(key)) for key in keys])


def _chunkify(arr: Sequence[T], size: int) -> List[List[T]]:
    """Split up a sequence into rows of at most size items"""
    return [list(arr[i : i + size]) for i in range(0, len(arr), size)]
