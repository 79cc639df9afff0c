#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods,too-many-instance-attributes

import enum
import json
import logging
import math

from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

from eoscascade.errors import ConfigurationError, ContractError, SchemaError
from eoscascade.utils import EOS, _rng

logger = logging.getLogger(__name__)

DEFAULT_VOCAB: Tuple[str, ...] = (
    "the",
    "a",
    "and",
    "you",
    "can",
    "put",
    "it",
    "just",
    "up",
    "over",
    "there",
    "hello",
    "world",
    "video",
    "today",
    "we",
    "will",
    "look",
    "at",
    "this",
    "part",
    "next",
    "right",
    "so",
)
DEFAULT_FILLERS: Tuple[str, ...] = ("uh", "um")


class DomainKind(str, enum.Enum):
    SHORT_QUERY = "short_query"
    LONG_FORM = "long_form"


@dataclass(frozen=True)
class Word:

    """A single scripted word with its ground-truth timing"""

    text: str
    start_ms: int
    end_ms: int
    hesitation: bool = False

    def __post_init__(self) -> None:
        if self.start_ms >= self.end_ms:
            raise ContractError(
                f"word {self.text!r} has start {self.start_ms} >= end {self.end_ms}"
            )


@dataclass(frozen=True)
class UtteranceSpec:

    """A scripted ground-truth utterance.

    Words are sorted by start time and never overlap; the synthetic corpus
    makes these timings the exact forced alignment.

    .. code-block:: python

        spec = UtteranceSpec(
            "u0",
            (Word("hello", 300, 660), Word("world", 1200, 1560)),
            total_ms=3000,
        )
    """

    id: str
    words: Tuple[Word, ...]
    total_ms: int
    domain_kind: DomainKind = DomainKind.LONG_FORM

    def __post_init__(self) -> None:
        prev_end = 0
        for word in self.words:
            if word.start_ms < prev_end:
                raise ContractError(f"{self.id}: words overlap or are unsorted")
            prev_end = word.end_ms
        if prev_end > self.total_ms:
            raise ContractError(f"{self.id}: last word ends after total_ms")

    @property
    def texts(self) -> List[str]:
        return [word.text for word in self.words]

    def gap_after(self, idx: int) -> int:
        """Silence between word idx and the next word, or the trailing silence"""
        if idx + 1 < len(self.words):
            return self.words[idx + 1].start_ms - self.words[idx].end_ms
        return self.total_ms - self.words[idx].end_ms


@dataclass(frozen=True)
class AnnotatedTranscript:

    """Reference tokens with EOS markers inserted at segment boundaries"""

    tokens: Tuple[str, ...]
    t_sil_ms: int = 0
    t_sil_hes_ms: int = 0

    def __post_init__(self) -> None:
        for prev, cur in zip(self.tokens, self.tokens[1:]):
            if prev == EOS and cur == EOS:
                raise ContractError("consecutive EOS markers")

    def words(self) -> List[str]:
        return [tok for tok in self.tokens if tok != EOS]

    def eos_word_indices(self) -> List[int]:
        """Index of the word each EOS marker follows"""
        indices: List[int] = []
        nr_words = 0
        for tok in self.tokens:
            if tok == EOS:
                indices.append(nr_words - 1)
            else:
                nr_words += 1
        return indices


@dataclass(frozen=True)
class AnnotationConfig:
    t_sil_ms: int = 600
    t_sil_hes_ms: Optional[int] = None

    @property
    def hesitation_ms(self) -> int:
        if self.t_sil_hes_ms is None:
            return 2 * self.t_sil_ms
        return self.t_sil_hes_ms


@dataclass(frozen=True)
class CorpusConfig:
    seed: int = 17
    num_utterances: int = 200
    vocab: Tuple[str, ...] = DEFAULT_VOCAB
    fillers: Tuple[str, ...] = DEFAULT_FILLERS
    min_gap_ms: int = 60
    max_gap_ms: int = 1500
    word_min_ms: int = 150
    word_max_ms: int = 600
    trailing_ms: int = 1500
    short_query_tail_ms: int = 600
    hesitation_prob: float = 0.08
    short_query_fraction: float = 0.0
    short_query_cap_ms: int = 5000
    long_form_floor_ms: int = 30000
    long_form_ms: int = 60000
    quantum_ms: int = 30
    id_prefix: str = "utt"

    def validate(self) -> None:
        if not self.vocab:
            raise ConfigurationError("corpus vocab must not be empty")
        for name in ("hesitation_prob", "short_query_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"corpus {name}={value} not in [0,1]")
        if self.num_utterances < 0:
            raise ConfigurationError("corpus num_utterances must be >= 0")
        if self.quantum_ms <= 0:
            raise ConfigurationError("corpus quantum_ms must be positive")
        if self.hesitation_prob > 0 and not self.fillers:
            raise ConfigurationError("hesitation_prob > 0 needs filler words")
        if _quanta(self.min_gap_ms, self.max_gap_ms, self.quantum_ms) is None:
            raise ConfigurationError(
                f"no multiple of {self.quantum_ms} ms in gap range "
                f"[{self.min_gap_ms}, {self.max_gap_ms}]"
            )
        if _quanta(self.word_min_ms, self.word_max_ms, self.quantum_ms) is None:
            raise ConfigurationError(
                f"no multiple of {self.quantum_ms} ms in word range "
                f"[{self.word_min_ms}, {self.word_max_ms}]"
            )
        if self.long_form_ms < self.long_form_floor_ms:
            raise ConfigurationError("long_form_ms must be >= long_form_floor_ms")


def _quanta(lo_ms: int, hi_ms: int, quantum_ms: int) -> Optional[Tuple[int, int]]:
    """Inclusive range of quantum counts that land inside [lo_ms, hi_ms]"""
    lo = max(1, math.ceil(lo_ms / quantum_ms))
    hi = hi_ms // quantum_ms
    if lo > hi:
        return None
    return lo, hi


def _generate_one(config: CorpusConfig, idx: int) -> UtteranceSpec:
    rng = _rng(config.seed, idx)
    q = config.quantum_ms
    gap_lo, gap_hi = _quanta(config.min_gap_ms, config.max_gap_ms, q)  # type: ignore
    word_lo, word_hi = _quanta(  # type: ignore
        config.word_min_ms, config.word_max_ms, q
    )

    def _gap() -> int:
        # skewed toward short pauses, occasional long ones
        u = float(rng.random())
        return min(gap_hi, gap_lo + int((gap_hi - gap_lo + 1) * u**3)) * q

    def _word(start_ms: int) -> Word:
        dur = int(rng.integers(word_lo, word_hi + 1)) * q
        if config.fillers and rng.random() < config.hesitation_prob:
            text = config.fillers[int(rng.integers(len(config.fillers)))]
            return Word(text, start_ms, start_ms + dur, hesitation=True)
        text = config.vocab[int(rng.integers(len(config.vocab)))]
        return Word(text, start_ms, start_ms + dur)

    is_short = rng.random() < config.short_query_fraction
    words: List[Word] = []
    cursor = _gap()
    if is_short:
        nr_words = int(rng.integers(1, 6))
        budget = config.short_query_cap_ms - config.short_query_tail_ms
        while len(words) < nr_words:
            word = _word(cursor)
            if words and word.end_ms > budget:
                break
            words.append(word)
            cursor = word.end_ms + _gap()
        tail_ms = words[-1].end_ms + config.short_query_tail_ms
        total_ms = min(config.short_query_cap_ms, tail_ms)
        kind = DomainKind.SHORT_QUERY
    else:
        target = int(config.long_form_ms * (0.9 + 0.2 * float(rng.random())))
        target = max(target, config.long_form_floor_ms)
        while not words or words[-1].end_ms + config.trailing_ms < target:
            word = _word(cursor)
            words.append(word)
            cursor = word.end_ms + _gap()
        total_ms = max(words[-1].end_ms + config.trailing_ms, config.long_form_floor_ms)
        kind = DomainKind.LONG_FORM
    return UtteranceSpec(f"{config.id_prefix}{idx:05d}", tuple(words), total_ms, kind)


def generate_corpus(config: CorpusConfig) -> List[UtteranceSpec]:
    """Generate a deterministic synthetic corpus.

    Each utterance draws its randomness from (seed, utterance index) only, so
    the output is identical across runs and platforms for a fixed config.

    Args:
        config: A CorpusConfig instance.
    Returns:
        A list of UtteranceSpec, ordered by utterance index.
    Raises:
        ConfigurationError: The configuration was invalid.
    """
    config.validate()
    specs = [_generate_one(config, idx) for idx in range(config.num_utterances)]
    logger.debug("generated %i utterances with seed %i", len(specs), config.seed)
    return specs


def annotate_eos(
    spec: UtteranceSpec, t_sil_ms: int, t_sil_hes_ms: Optional[int] = None
) -> AnnotatedTranscript:
    """Insert EOS markers into the reference transcript.

    Short queries get a single EOS at the end. Long-form utterances get an EOS
    after word i when the following silence is longer than ``t_sil_ms`` and
    word i is not a hesitation, or longer than ``t_sil_hes_ms`` after a
    hesitation. The trailing silence is judged by the same rule.

    Args:
        spec: The utterance to annotate.
        t_sil_ms: Silence length threshold in milliseconds.
        t_sil_hes_ms: Threshold after a hesitation, defaults to 2 * t_sil_ms.
    Returns:
        An AnnotatedTranscript.
    Raises:
        ContractError: The thresholds were not 0 < t_sil_ms <= t_sil_hes_ms.
    """
    if t_sil_hes_ms is None:
        t_sil_hes_ms = 2 * t_sil_ms
    if not 0 < t_sil_ms <= t_sil_hes_ms:
        raise ContractError(
            f"need 0 < t_sil_ms ({t_sil_ms}) <= t_sil_hes_ms ({t_sil_hes_ms})"
        )
    tokens: List[str] = []
    if spec.domain_kind == DomainKind.SHORT_QUERY:
        tokens.extend(spec.texts)
        if tokens:
            tokens.append(EOS)
        return AnnotatedTranscript(tuple(tokens), t_sil_ms, t_sil_hes_ms)
    for idx, word in enumerate(spec.words):
        tokens.append(word.text)
        limit = t_sil_hes_ms if word.hesitation else t_sil_ms
        if spec.gap_after(idx) > limit:
            tokens.append(EOS)
    return AnnotatedTranscript(tuple(tokens), t_sil_ms, t_sil_hes_ms)


def forced_alignment(spec: UtteranceSpec) -> List[Tuple[int, int, int]]:
    """Get (word index, start_ms, end_ms) for every word; exact for this corpus"""
    return [(idx, word.start_ms, word.end_ms) for idx, word in enumerate(spec.words)]


def end_of_speech(
    spec: UtteranceSpec, before_ms: Optional[int] = None
) -> Optional[int]:
    """End time of the last word starting before ``before_ms``.

    With no bound this is the utterance's end-of-speech. Returns None when no
    word precedes the bound.
    """
    last: Optional[int] = None
    for _, start_ms, end_ms in forced_alignment(spec):
        if before_ms is not None and start_ms >= before_ms:
            break
        last = end_ms
    return last


def spec_to_record(spec: UtteranceSpec) -> Dict[str, Any]:
    return {
        "id": spec.id,
        "domain_kind": spec.domain_kind.value,
        "total_ms": spec.total_ms,
        "words": [
            {
                "text": w.text,
                "start_ms": w.start_ms,
                "end_ms": w.end_ms,
                "hesitation": w.hesitation,
            }
            for w in spec.words
        ],
    }


def spec_from_record(record: Dict[str, Any]) -> UtteranceSpec:
    try:
        words = tuple(
            Word(
                str(w["text"]),
                int(w["start_ms"]),
                int(w["end_ms"]),
                bool(w["hesitation"]),
            )
            for w in record["words"]
        )
        return UtteranceSpec(
            str(record["id"]),
            words,
            int(record["total_ms"]),
            DomainKind(record["domain_kind"]),
        )
    except (KeyError, TypeError, ValueError, ContractError) as e:
        raise SchemaError(f"invalid corpus record: {e}") from e


def dumps_corpus(specs: Iterable[UtteranceSpec]) -> str:
    """Serialize utterances as JSON lines, one record per utterance"""
    lines = [json.dumps(spec_to_record(spec), sort_keys=True) for spec in specs]
    return "".join(line + "\n" for line in lines)


def loads_corpus(text: str) -> List[UtteranceSpec]:
    specs: List[UtteranceSpec] = []
    for nr, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"line {nr} is not JSON") from e
        specs.append(spec_from_record(record))
    return specs
