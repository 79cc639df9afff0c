#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+

from eoscascade.corpus import UtteranceSpec, Word, annotate_eos, generate_corpus
from eoscascade.decoder import BeamConfig, PathMerge, StreamDecoder
from eoscascade.lattice import Lattice
from eoscascade.pipeline import SegmentResult, Strategy, SystemConfig, run_utterance
from eoscascade.config import ExperimentConfig, load_config
from eoscascade.errors import (
    ConfigurationError,
    ContractError,
    SchemaError,
    UndefinedRateError,
)

__version__ = "0.1.0"
