#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods,too-many-instance-attributes,too-many-locals

import collections
import enum
import functools
import json
import math

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from eoscascade.corpus import (
    DEFAULT_FILLERS,
    DEFAULT_VOCAB,
    AnnotatedTranscript,
    UtteranceSpec,
)
from eoscascade.errors import ConfigurationError, ContractError
from eoscascade.utils import BLANK, EOS, _rng, _stable_hash

# raw (pre-normalization) costs of the synthetic joint
COST_WORD_FINAL = 0.2
COST_BLANK_AT_WORD_FINAL = 2.5
COST_WORD_INSIDE = 4.5
COST_BLANK_INSIDE = 0.1
COST_BLANK_SILENCE = 0.05
COST_OTHER = 9.0
COST_CONFUSER_FINAL = 6.0
COST_CONFUSER_BLANK = 9.0
CONFUSER_GAIN = 4.0
EOS_COST_CAP = 40.0


class Stream(str, enum.Enum):
    CAUSAL = "causal"
    CASCADED = "cascaded"


class DummyMode(str, enum.Enum):
    ZERO = "zero"
    LAST = "last"


@dataclass(frozen=True)
class AcousticConfig:
    dim: int = 16
    right_context_frames: int = 30
    frame_ms: int = 30
    causal_noise: float = 0.6
    cascaded_noise: float = 0.4
    feature_noise: float = 0.01
    seed: int = 17
    silence_feature: Optional[Tuple[float, ...]] = None
    vocab: Tuple[str, ...] = DEFAULT_VOCAB + DEFAULT_FILLERS
    decay: float = 0.7
    eos_base: float = 1.0
    eos_slope: float = 2.0
    eos_silence_slope: float = 0.5
    eos_offset_frames: int = 4
    eos_pause_floor: float = 4.0
    distortion_weight: float = 16.0
    context_ms: int = 1500
    context_weight: float = 2.0
    drift_ms: int = 10000
    drift_weight: float = 0.5

    @property
    def lag_ms(self) -> int:
        return self.right_context_frames * self.frame_ms

    def validate(self) -> None:
        if self.dim <= 0 or self.frame_ms <= 0 or self.right_context_frames < 0:
            raise ConfigurationError("acoustic dim and frame_ms must be positive")
        if min(self.causal_noise, self.cascaded_noise, self.feature_noise) < 0:
            raise ConfigurationError("acoustic noise levels must be >= 0")
        if self.cascaded_noise > self.causal_noise:
            raise ConfigurationError(
                f"cascaded_noise {self.cascaded_noise} > "
                f"causal_noise {self.causal_noise}"
            )
        if self.silence_feature is not None and len(self.silence_feature) != self.dim:
            raise ConfigurationError("silence_feature length must equal dim")
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigurationError("decay must be in [0,1]")
        if min(self.context_ms, self.drift_ms) < 0:
            raise ConfigurationError("context_ms and drift_ms must be >= 0")
        if min(self.context_weight, self.drift_weight, self.eos_pause_floor) < 0:
            raise ConfigurationError(
                "context_weight, drift_weight and eos_pause_floor must be >= 0"
            )

    def silence_vector(self) -> np.ndarray:
        return _silence_vector(self.dim, self.silence_feature)


@dataclass(eq=False)
class FeatureFrame:

    """One encoder output frame.

    ``sources`` lists the frame indices the values were computed from, in
    window order, and ``synthetic`` is set when any of them is a dummy frame.
    Dummy frames always trail the window; ``dummy_sources`` counts them.
    """

    values: np.ndarray
    frame_index: int
    is_speech: bool
    sources: Tuple[int, ...] = ()
    synthetic: bool = False
    dummy_sources: int = 0

    def __post_init__(self) -> None:
        if not self.sources:
            self.sources = (self.frame_index,)


@dataclass
class PosteriorFrame:

    """Per-frame negative log probabilities over vocabulary, blank and EOS"""

    costs: Dict[str, float]
    frame_index: int
    stream: Stream
    end_ms: int = 0

    def best(self) -> str:
        return min(sorted(self.costs), key=lambda tok: self.costs[tok])

    def candidates(self, cutoff: float) -> List[Tuple[str, float]]:
        """Non-blank, non-EOS tokens with cost below the cutoff, cheapest first"""
        cands = [
            (tok, cost)
            for tok, cost in self.costs.items()
            if cost < cutoff and tok not in (BLANK, EOS)
        ]
        cands.sort(key=lambda item: (item[1], item[0]))
        return cands


@functools.lru_cache(maxsize=16)
def _silence_vector(
    dim: int, silence_feature: Optional[Tuple[float, ...]]
) -> np.ndarray:
    if silence_feature is None:
        vec = np.ones(dim) / math.sqrt(dim)
    else:
        vec = np.asarray(silence_feature, dtype=float)
    vec.setflags(write=False)
    return vec


@functools.lru_cache(maxsize=1024)
def _word_embedding(text: str, dim: int) -> np.ndarray:
    vec = _rng(_stable_hash(text)).standard_normal(dim)
    vec /= np.linalg.norm(vec)
    vec.setflags(write=False)
    return vec


@functools.lru_cache(maxsize=64)
def _cascade_weights(right_context_frames: int, decay: float) -> np.ndarray:
    weights = decay ** np.arange(right_context_frames + 1, dtype=float)
    weights /= weights.sum()
    weights.setflags(write=False)
    return weights


class _UtteranceModel:

    """Frame layout and EOS geometry of one utterance, computed once"""

    def __init__(
        self,
        spec: UtteranceSpec,
        annotated: Optional[AnnotatedTranscript],
        config: AcousticConfig,
    ) -> None:
        f = config.frame_ms
        self.nr_frames = spec.total_ms // f
        self.word_at: List[Optional[int]] = [None] * self.nr_frames
        self.is_final: List[bool] = [False] * self.nr_frames
        self.silence_ms: List[int] = [0] * self.nr_frames
        self.prev_word: List[int] = [-1] * self.nr_frames
        self.final_frame: List[int] = []
        for widx, word in enumerate(spec.words):
            stop = min(self.nr_frames, word.end_ms // f + 1)
            frames = [
                i
                for i in range(word.start_ms // f, stop)
                if word.start_ms <= i * f + f // 2 < word.end_ms
            ]
            if not frames:
                middle = (word.start_ms + word.end_ms) // 2 // f
                frames = [min(self.nr_frames - 1, middle)]
            for i in frames:
                self.word_at[i] = widx
            self.final_frame.append(frames[-1])
            self.is_final[frames[-1]] = True
        last_word = -1
        for i in range(self.nr_frames):
            if self.word_at[i] is not None:
                last_word = self.word_at[i]  # type: ignore
                continue
            self.prev_word[i] = last_word
            if last_word >= 0:
                self.silence_ms[i] = (i + 1) * f - spec.words[last_word].end_ms
        self.eos_frames: List[int] = []
        self.t_sil_ms = 0
        self.t_sil_hes_ms = 0
        if annotated is not None:
            self.eos_frames = sorted(
                self.final_frame[widx] + config.eos_offset_frames
                for widx in annotated.eos_word_indices()
                if widx >= 0
            )
            self.t_sil_ms = annotated.t_sil_ms
            self.t_sil_hes_ms = annotated.t_sil_hes_ms
        self.vocab = tuple(sorted(set(config.vocab) | set(spec.texts)))
        self.spec_hash = _stable_hash(spec.id)

    def eos_distance(self, idx: int) -> Optional[int]:
        if not self.eos_frames:
            return None
        return min(abs(idx - pos) for pos in self.eos_frames)


_CacheEntry = Tuple[object, object, object, _UtteranceModel]
_MODELS: "collections.OrderedDict[Tuple[int, int, int], _CacheEntry]" = (
    collections.OrderedDict()
)


def _model_for(
    spec: UtteranceSpec,
    annotated: Optional[AnnotatedTranscript],
    config: AcousticConfig,
) -> _UtteranceModel:
    key = (id(spec), id(annotated), id(config))
    hit = _MODELS.get(key)
    if hit is not None and hit[0] is spec and hit[1] is annotated and hit[2] is config:
        _MODELS.move_to_end(key)
        return hit[3]
    model = _UtteranceModel(spec, annotated, config)
    _MODELS[key] = (spec, annotated, config, model)
    while len(_MODELS) > 16:
        _MODELS.popitem(last=False)
    return model


def clean_feature(
    spec: UtteranceSpec, frame_index: int, config: AcousticConfig
) -> np.ndarray:
    """Noise-free feature of a frame; frames outside the audio are silence"""
    model = _model_for(spec, None, config)
    if 0 <= frame_index < model.nr_frames:
        widx = model.word_at[frame_index]
        if widx is not None:
            return _word_embedding(spec.words[widx].text, config.dim)
    return config.silence_vector()


def causal_features(
    spec: UtteranceSpec, config: AcousticConfig
) -> Iterator[FeatureFrame]:
    """Yield one causal encoder frame per frame_ms tick covering [0, total_ms)"""
    model = _model_for(spec, None, config)
    for idx in range(model.nr_frames):
        values = np.array(clean_feature(spec, idx, config), dtype=float)
        if config.feature_noise > 0:
            values += _rng(config.seed, model.spec_hash, idx).normal(
                0.0, config.feature_noise, config.dim
            )
        yield FeatureFrame(values, idx, model.word_at[idx] is not None)


def cascaded_encode(
    window: List[FeatureFrame], right_context_frames: int, decay: float = 0.7
) -> FeatureFrame:
    """Aggregate a center frame and its right context into one frame.

    The output is a weighted average with weights ``decay**k`` over right
    context offset k, renormalized to sum to one.

    Raises:
        ContractError: The window is not exactly right_context_frames + 1 long.
    """
    if len(window) != right_context_frames + 1:
        raise ContractError(
            f"window has {len(window)} frames, expected {right_context_frames + 1}"
        )
    weights = _cascade_weights(right_context_frames, decay)
    values = weights @ np.stack([frame.values for frame in window])
    center = window[0]
    return FeatureFrame(
        values,
        center.frame_index,
        center.is_speech,
        sources=tuple(frame.frame_index for frame in window),
        synthetic=any(frame.synthetic for frame in window),
        dummy_sources=sum(frame.synthetic for frame in window),
    )


def inject_dummy_frames(
    last_frame: FeatureFrame, mode: DummyMode, right_context_frames: int
) -> List[FeatureFrame]:
    """Synthesize right-context frames following the last causal frame"""
    if right_context_frames < 0:
        raise ContractError("right_context_frames must be >= 0")
    frames: List[FeatureFrame] = []
    for offset in range(1, right_context_frames + 1):
        if mode == DummyMode.ZERO:
            values = np.zeros_like(last_frame.values)
            is_speech = False
        else:
            values = np.array(last_frame.values, copy=True)
            is_speech = last_frame.is_speech
        frame_index = last_frame.frame_index + offset
        frames.append(FeatureFrame(values, frame_index, is_speech, synthetic=True))
    return frames


def _reference(
    spec: UtteranceSpec, frame: FeatureFrame, stream: Stream, config: AcousticConfig
) -> np.ndarray:
    if stream == Stream.CAUSAL or len(frame.sources) == 1:
        return clean_feature(spec, frame.frame_index, config)
    # a dummy source stands for the last real frame it was synthesized after
    real = frame.sources[: max(1, len(frame.sources) - frame.dummy_sources)]
    clean = [clean_feature(spec, idx, config) for idx in real]
    clean += [clean[-1]] * (len(frame.sources) - len(real))
    weights = _cascade_weights(len(frame.sources) - 1, config.decay)
    return weights @ np.stack(clean)


def _segment_age_cost(age_ms: int, sigma: float, config: AcousticConfig) -> float:
    """Extra cost of a word that ends age_ms into its segment.

    Words close to the segment start lack context, and words far into a
    long segment suffer from drift. Both scale with the stream noise.
    """
    cost = 0.0
    if config.context_ms > 0:
        cost += config.context_weight * max(0.0, 1.0 - age_ms / config.context_ms)
    cost += config.drift_weight * max(0, age_ms - config.drift_ms) / 1000.0
    return sigma * cost


def posteriors(
    frame: FeatureFrame,
    spec: UtteranceSpec,
    annotated: AnnotatedTranscript,
    stream: Stream,
    config: AcousticConfig,
    segment_start_ms: Optional[int] = None,
) -> PosteriorFrame:
    """Synthetic joint output for one frame of one stream.

    The ground-truth label is cheapest when the stream is noise-free. Its cost
    rises with the distance between the frame and the noise-free encoding of
    the same source frames, which is how missing or dummy right context shows
    up in the 2nd pass. When the start of the segment being decoded is given,
    word-final frames also pay for a segment that is too young or too old.

    The EOS cost is ``eos_base + eos_slope * d`` for a frame d frames away
    from an annotated EOS position. In any pause it is also bounded by
    ``eos_pause_floor`` plus ``eos_silence_slope`` per frame the running
    silence falls short of the annotation silence threshold, so a pause
    never looks like an annotated EOS.
    """
    model = _model_for(spec, annotated, config)
    idx = frame.frame_index
    f = config.frame_ms
    if not 0 <= idx < model.nr_frames:
        raise ContractError(f"frame {idx} outside of {spec.id}")

    raw = {tok: COST_OTHER for tok in model.vocab}
    widx = model.word_at[idx]
    if widx is not None and model.is_final[idx]:
        truth = spec.words[widx].text
        raw[truth] = COST_WORD_FINAL
        raw[BLANK] = COST_BLANK_AT_WORD_FINAL
    elif widx is not None:
        truth = BLANK
        raw[spec.words[widx].text] = COST_WORD_INSIDE
        raw[BLANK] = COST_BLANK_INSIDE
    else:
        truth = BLANK
        raw[BLANK] = COST_BLANK_SILENCE

    reference = _reference(spec, frame, stream, config)
    distortion = float(np.linalg.norm(frame.values - reference))
    raw[truth] += config.distortion_weight * distortion

    # always draw both values so streams stay aligned across noise levels
    sigma = config.causal_noise if stream == Stream.CAUSAL else config.cascaded_noise
    stream_code = 0 if stream == Stream.CAUSAL else 1
    rng = _rng(config.seed, model.spec_hash, idx, stream_code)
    z = sigma * abs(float(rng.standard_normal()))
    others = [tok for tok in model.vocab if tok != truth]
    confuser = others[int(rng.integers(len(others)))] if others else None
    if truth != BLANK:
        raw[truth] += z
        if segment_start_ms is not None:
            age_ms = (idx + 1) * f - segment_start_ms
            raw[truth] += _segment_age_cost(age_ms, sigma, config)
    if confuser is not None:
        ceiling = COST_CONFUSER_FINAL if truth != BLANK else COST_CONFUSER_BLANK
        raw[confuser] = max(0.0, min(raw[confuser], ceiling - CONFUSER_GAIN * z))

    eos_cost = EOS_COST_CAP
    dist = model.eos_distance(idx)
    if dist is not None:
        eos_cost = min(eos_cost, config.eos_base + config.eos_slope * dist)
    silence_ms = model.silence_ms[idx]
    if silence_ms > 0 and model.t_sil_ms > 0:
        prev = spec.words[model.prev_word[idx]]
        limit = model.t_sil_hes_ms if prev.hesitation else model.t_sil_ms
        shortfall = max(0.0, (limit - silence_ms) / f)
        pause_cost = config.eos_pause_floor + config.eos_silence_slope * shortfall
        eos_cost = min(eos_cost, pause_cost)

    p_eos = math.exp(-eos_cost)
    log_z = math.log(sum(math.exp(-cost) for cost in raw.values()))
    shift = log_z - math.log1p(-p_eos)
    costs = {tok: max(0.0, cost + shift) for tok, cost in raw.items()}
    costs[EOS] = eos_cost
    return PosteriorFrame(costs, idx, stream, end_ms=(idx + 1) * f)


def dump_costs(frames: Iterable[PosteriorFrame]) -> str:
    """Debug dump of per-frame costs as JSON lines"""
    lines = []
    for frame in frames:
        record = {
            "frame_index": frame.frame_index,
            "stream": frame.stream.value,
            "costs": {tok: round(cost, 6) for tok, cost in sorted(frame.costs.items())},
        }
        lines.append(json.dumps(record, sort_keys=True))
    return "".join(line + "\n" for line in lines)
