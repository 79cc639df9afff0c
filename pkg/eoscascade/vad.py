#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods

import enum

from dataclasses import dataclass
from typing import Optional, Tuple

from eoscascade.acoustics import FeatureFrame
from eoscascade.errors import ConfigurationError, ContractError


class VadLabel(str, enum.Enum):
    SPEECH = "speech"
    SILENCE = "silence"


class FilterDecision(str, enum.Enum):
    KEEP = "keep"
    DROP = "drop"


@dataclass(frozen=True)
class VadConfig:
    trigger_ms: int = 200
    frame_ms: int = 30
    filter_enabled: bool = True

    def validate(self) -> None:
        if self.trigger_ms <= 0 or self.frame_ms <= 0:
            raise ConfigurationError("vad trigger_ms and frame_ms must be positive")


@dataclass(frozen=True)
class VadState:
    consecutive_silence_ms: int = 0
    silence_since_trigger_ms: int = 0
    emitted_in_current_silence: bool = False
    last_frame_end_ms: int = 0


@dataclass(frozen=True)
class EosEvent:

    """An end-of-segment decision, stamped with the audio time it refers to"""

    timestamp_ms: int
    frame_index: int
    source: str


def classify(frame: FeatureFrame) -> VadLabel:
    """Speech/silence decision; the synthetic front-end carries the truth"""
    return VadLabel.SPEECH if frame.is_speech else VadLabel.SILENCE


def vad_step(
    state: VadState, label: VadLabel, frame_end_ms: int, config: VadConfig
) -> Tuple[VadState, Optional[EosEvent]]:
    """Advance the smoothing state machine by one frame.

    An EOS fires on the first frame whose run of consecutive silence reaches
    ``trigger_ms``. Inside the same silence, another EOS needs a further full
    ``trigger_ms`` of silence. Speech resets every counter.

    Raises:
        ContractError: The frame does not end after the previous one.
    """
    if frame_end_ms <= state.last_frame_end_ms:
        raise ContractError(
            f"frame ending at {frame_end_ms} ms after {state.last_frame_end_ms} ms"
        )
    if label == VadLabel.SPEECH:
        return VadState(last_frame_end_ms=frame_end_ms), None

    silence = state.consecutive_silence_ms + config.frame_ms
    since = state.silence_since_trigger_ms + config.frame_ms
    if state.emitted_in_current_silence:
        fire = since >= config.trigger_ms
    else:
        fire = silence >= config.trigger_ms
    new_state = VadState(
        consecutive_silence_ms=silence,
        silence_since_trigger_ms=0 if fire else since,
        emitted_in_current_silence=state.emitted_in_current_silence or fire,
        last_frame_end_ms=frame_end_ms,
    )
    if not fire:
        return new_state, None
    frame_index = frame_end_ms // config.frame_ms - 1
    return new_state, EosEvent(frame_end_ms, frame_index, "vad")


def frame_filter(state: VadState, label: VadLabel, config: VadConfig) -> FilterDecision:
    """Decide whether a frame reaches the decoders.

    ``state`` is the state after :func:`vad_step` consumed the frame. Silence
    frames are kept while the silence accumulated before them is under
    ``trigger_ms``, so the frame crossing the threshold is the last one kept.
    """
    if not config.filter_enabled or label == VadLabel.SPEECH:
        return FilterDecision.KEEP
    before_ms = state.consecutive_silence_ms - config.frame_ms
    if before_ms < config.trigger_ms:
        return FilterDecision.KEEP
    return FilterDecision.DROP
