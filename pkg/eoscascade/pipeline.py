#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods,too-many-instance-attributes,too-many-arguments

import collections
import enum
import json
import logging
import re

from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Tuple

from eoscascade.acoustics import (
    AcousticConfig,
    DummyMode,
    FeatureFrame,
    PosteriorFrame,
    Stream,
    cascaded_encode,
    causal_features,
    inject_dummy_frames,
    posteriors,
)
from eoscascade.corpus import (
    AnnotatedTranscript,
    AnnotationConfig,
    UtteranceSpec,
    annotate_eos,
)
from eoscascade.decoder import Beam, BeamConfig, StreamDecoder, eos_check
from eoscascade.errors import ConfigurationError, ContractError, SchemaError
from eoscascade.lattice import Lattice
from eoscascade.utils import SCHEMA_EVENTS
from eoscascade.vad import (
    EosEvent,
    FilterDecision,
    VadConfig,
    VadState,
    classify,
    frame_filter,
    vad_step,
)

logger = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    B1_IMMEDIATE = "B1_immediate"
    B2_WAIT = "B2_wait"
    E1_DUMMY_ZERO = "E1_dummy_zero"
    E2_DUMMY_LAST = "E2_dummy_last"

    @property
    def dummy_mode(self) -> Optional[DummyMode]:
        if self == Strategy.E1_DUMMY_ZERO:
            return DummyMode.ZERO
        if self == Strategy.E2_DUMMY_LAST:
            return DummyMode.LAST
        return None


class SegmenterKind(str, enum.Enum):
    FIXED = "fixed"
    VAD = "vad"
    E2E = "e2e"


class EventKind(str, enum.Enum):
    FRAME_ARRIVAL = "frame_arrival"
    EOS_EMITTED = "eos_emitted"
    SECOND_PASS_CENTER_ADVANCED = "second_pass_center_advanced"
    DUMMY_INJECTION = "dummy_injection"
    SEGMENT_FINALIZED = "segment_finalized"


_FIXED_RE = re.compile(r"^fixed-(\d+)(ms|s)$")


def parse_segmenter(name: str) -> Tuple[SegmenterKind, int]:
    """Parse a segmenter label such as ``vad``, ``e2e`` or ``fixed-3s``.

    Returns:
        The kind and the fixed segment length in ms (0 unless fixed).
    Raises:
        ConfigurationError: The label is not recognized.
    """
    match = _FIXED_RE.match(name)
    if match:
        length = int(match.group(1)) * (1000 if match.group(2) == "s" else 1)
        if length <= 0:
            raise ConfigurationError(f"fixed segmenter length must be positive: {name}")
        return SegmenterKind.FIXED, length
    try:
        kind = SegmenterKind(name)
    except ValueError as e:
        raise ConfigurationError(f"unknown segmenter {name!r}") from e
    if kind == SegmenterKind.FIXED:
        raise ConfigurationError("fixed segmenter needs a length, e.g. fixed-3s")
    return kind, 0


@dataclass(frozen=True)
class PipelineConfig:
    frame_ms: int = 30
    lag_ms: int = 900
    comp_latency_ms: int = 208
    strategy: Strategy = Strategy.E2_DUMMY_LAST
    segmenter: SegmenterKind = SegmenterKind.E2E
    fixed_len_ms: int = 3000

    @property
    def right_context_frames(self) -> int:
        return self.lag_ms // self.frame_ms

    @property
    def segmenter_label(self) -> str:
        if self.segmenter != SegmenterKind.FIXED:
            return self.segmenter.value
        if self.fixed_len_ms % 1000 == 0:
            return f"fixed-{self.fixed_len_ms // 1000}s"
        return f"fixed-{self.fixed_len_ms}ms"

    def validate(self) -> None:
        if self.frame_ms <= 0 or self.lag_ms <= 0 or self.comp_latency_ms < 0:
            raise ConfigurationError("pipeline frame_ms and lag_ms must be positive")
        if self.lag_ms % self.frame_ms:
            raise ConfigurationError(
                f"lag_ms {self.lag_ms} is not a multiple of frame_ms {self.frame_ms}"
            )
        if not isinstance(self.strategy, Strategy):
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        if not isinstance(self.segmenter, SegmenterKind):
            raise ConfigurationError(f"unknown segmenter {self.segmenter!r}")
        if self.segmenter == SegmenterKind.FIXED and self.fixed_len_ms <= 0:
            raise ConfigurationError("fixed_len_ms must be positive")


@dataclass(frozen=True)
class SystemConfig:

    """Every module configuration one simulated run needs"""

    acoustic: AcousticConfig = field(default_factory=AcousticConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    annotation: AnnotationConfig = field(default_factory=AnnotationConfig)
    beam_first: BeamConfig = field(default_factory=BeamConfig)
    beam_second: BeamConfig = field(default_factory=lambda: BeamConfig(beam_size=8))
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def validate(self) -> None:
        """Check each section and the values they must share.

        Raises:
            ConfigurationError: A section is invalid or two sections disagree.
        """
        self.acoustic.validate()
        self.vad.validate()
        self.beam_first.validate()
        self.beam_second.validate()
        self.pipeline.validate()
        annotation = self.annotation
        if annotation.t_sil_ms <= 0 or annotation.hesitation_ms < annotation.t_sil_ms:
            raise ConfigurationError("annotation needs 0 < t_sil_ms <= t_sil_hes_ms")
        frame_ms = {self.acoustic.frame_ms, self.vad.frame_ms, self.pipeline.frame_ms}
        if len(frame_ms) != 1:
            raise ConfigurationError(
                f"modules disagree on frame_ms: {sorted(frame_ms)}"
            )
        if self.acoustic.lag_ms != self.pipeline.lag_ms:
            raise ConfigurationError(
                f"pipeline lag_ms {self.pipeline.lag_ms} != right context "
                f"{self.acoustic.right_context_frames} x {self.acoustic.frame_ms} ms"
            )


@dataclass(frozen=True)
class SegmentResult:

    """Both passes' transcripts for one segment and its finalization bookkeeping.

    ``start_ms`` is the previous EOS timestamp, so the segment covers audio
    in (start_ms, eos_timestamp_ms]. ``finalized_at_ms`` is the simulated
    time the 2nd pass actually finalized; ``fallback`` marks a wait that
    could not complete before the end of the audio.
    """

    index: int
    start_ms: int
    transcript_1st: Tuple[str, ...]
    transcript_2nd: Tuple[str, ...]
    eos_emit_ms: int
    eos_timestamp_ms: int
    finalize_algorithmic_ms: int
    finalize_computational_ms: int
    eos_source: str = ""
    is_flush: bool = False
    fallback: bool = False
    finalized_at_ms: int = 0
    lattice_1st: Optional[Lattice] = None
    lattice_2nd: Optional[Lattice] = None

    def __post_init__(self) -> None:
        if self.eos_emit_ms < self.eos_timestamp_ms:
            raise ContractError(
                f"segment {self.index} emitted EOS before its timestamp"
            )
        if self.finalize_algorithmic_ms < 0 or self.finalize_computational_ms < 0:
            raise ContractError(f"segment {self.index} has negative latency")


@dataclass(frozen=True)
class TimelineEvent:
    time_ms: int
    kind: EventKind
    payload: Dict[str, Any]
    seq: int = 0


def segmenter_decision(
    config: PipelineConfig,
    frame_index: int,
    vad_event: Optional[EosEvent] = None,
    beam: Optional[Beam] = None,
    posterior: Optional[PosteriorFrame] = None,
    beam_config: Optional[BeamConfig] = None,
) -> Optional[EosEvent]:
    """Ask the configured segmenter whether a segment ends on this frame.

    The fixed segmenter fires on the frame whose end crosses a multiple of
    ``fixed_len_ms``. The VAD segmenter returns the event of :func:`vad_step`
    and the E2E segmenter defers to :func:`eos_check`; it stays silent on
    frames the filter dropped, which have no posterior.
    """
    if config.segmenter == SegmenterKind.FIXED:
        end_ms = (frame_index + 1) * config.frame_ms
        length = config.fixed_len_ms
        if end_ms // length > (end_ms - config.frame_ms) // length:
            return EosEvent(end_ms, frame_index, config.segmenter_label)
        return None
    if config.segmenter == SegmenterKind.VAD:
        return vad_event
    if beam is None or posterior is None:
        return None
    return eos_check(beam, posterior, beam_config or beam.config)


@dataclass
class EosState:
    index: int
    start_ms: int
    transcript_1st: Tuple[str, ...]
    lattice_1st: Lattice
    eos: EosEvent
    emit_ms: int
    position: int
    is_flush: bool


class UtteranceRun:

    """Tick-by-tick simulation of one utterance through both passes"""

    def __init__(
        self,
        spec: UtteranceSpec,
        annotated: AnnotatedTranscript,
        config: SystemConfig,
        second_pass: bool,
    ) -> None:
        self.spec = spec
        self.annotated = annotated
        self.config = config
        self.acoustic = config.acoustic
        self.pipeline = config.pipeline
        self.right_context = config.acoustic.right_context_frames
        self.first = StreamDecoder(config.beam_first, Stream.CAUSAL, "1st")
        self.second: Optional[StreamDecoder] = None
        if second_pass:
            self.second = StreamDecoder(config.beam_second, Stream.CASCADED, "2nd")
        self.kept: List[FeatureFrame] = []
        self.next_center = 0
        self.vad_state = VadState()
        self.pending: Deque[EosState] = collections.deque()
        self.results: List[SegmentResult] = []
        self.events: List[TimelineEvent] = []
        self.nr_segments = 0
        self.boundary_ms = 0
        self.second_start_ms = 0
        self.now_ms = 0

    def _emit(self, kind: EventKind, max_real_frame: int, **payload: Any) -> None:
        payload["max_real_frame"] = max_real_frame
        self.events.append(TimelineEvent(self.now_ms, kind, payload, len(self.events)))

    def _last_real_frame(self) -> int:
        return self.kept[-1].frame_index if self.kept else -1

    def run(self) -> Tuple[List[SegmentResult], List[TimelineEvent]]:
        for frame in causal_features(self.spec, self.acoustic):
            self._tick(frame)
        self._flush()
        self.results.sort(key=lambda result: result.index)
        self.events.sort(key=lambda event: (event.time_ms, event.seq))
        return self.results, self.events

    def _tick(self, frame: FeatureFrame) -> None:
        self.now_ms = (frame.frame_index + 1) * self.pipeline.frame_ms
        label = classify(frame)
        self.vad_state, vad_event = vad_step(
            self.vad_state, label, self.now_ms, self.config.vad
        )
        decision = frame_filter(self.vad_state, label, self.config.vad)
        self._emit(
            EventKind.FRAME_ARRIVAL,
            frame.frame_index,
            frame_index=frame.frame_index,
            label=label.value,
            decision=decision.value,
        )
        posterior: Optional[PosteriorFrame] = None
        if decision == FilterDecision.KEEP:
            self.kept.append(frame)
            posterior = posteriors(
                frame,
                self.spec,
                self.annotated,
                Stream.CAUSAL,
                self.acoustic,
                segment_start_ms=self.boundary_ms,
            )
            self.first.step(posterior)
        if self.second is not None:
            self._advance_second()
        eos = segmenter_decision(
            self.pipeline,
            frame.frame_index,
            vad_event=vad_event,
            beam=self.first.beam if posterior is not None else None,
            posterior=posterior,
            beam_config=self.config.beam_first,
        )
        if eos is not None:
            self._on_eos(eos, is_flush=False)

    def _advance_second(self) -> None:
        while self.next_center + self.right_context < len(self.kept):
            self._decode_center(self.kept)
            while self.pending and self.next_center > self.pending[0].position:
                self._finalize_second(
                    self.pending.popleft(), self.pipeline.lag_ms, 0, fallback=False
                )

    def _decode_center(self, frames: List[FeatureFrame]) -> None:
        assert self.second is not None
        window = frames[self.next_center : self.next_center + self.right_context + 1]
        encoded = cascaded_encode(window, self.right_context, self.acoustic.decay)
        posterior = posteriors(
            encoded,
            self.spec,
            self.annotated,
            Stream.CASCADED,
            self.acoustic,
            segment_start_ms=self.second_start_ms,
        )
        self.second.step(posterior)
        self._emit(
            EventKind.SECOND_PASS_CENTER_ADVANCED,
            max(frame.frame_index for frame in window if not frame.synthetic),
            center=encoded.frame_index,
            position=self.next_center,
            synthetic=encoded.synthetic,
        )
        self.next_center += 1

    def _on_eos(self, eos: EosEvent, is_flush: bool) -> None:
        final, lattice = self.first.finalize()
        self._emit(
            EventKind.EOS_EMITTED,
            self._last_real_frame(),
            source=eos.source,
            timestamp_ms=eos.timestamp_ms,
            frame_index=eos.frame_index,
        )
        logger.debug(
            "%s: EOS from %s at %i ms", self.spec.id, eos.source, eos.timestamp_ms
        )
        segment = EosState(
            index=self.nr_segments,
            start_ms=self.boundary_ms,
            transcript_1st=final.tokens,
            lattice_1st=lattice,
            eos=eos,
            emit_ms=self.now_ms,
            position=len(self.kept) - 1,
            is_flush=is_flush,
        )
        self.nr_segments += 1
        self.boundary_ms = eos.timestamp_ms
        if self.second is None:
            self._complete(segment, (), None, 0, 0, fallback=False)
            return
        self.finalize_second_pass(segment)

    def finalize_second_pass(self, segment: EosState) -> Optional[Tuple[int, int, int]]:
        """Finalize the 2nd pass for an EOS according to the strategy.

        B1 finalizes at once and never decodes the centers up to the EOS. B2
        waits for real frames until the cascaded center reaches the EOS,
        unless the audio has ended. E1 and E2 decode those centers right
        away over dummy right context.

        Returns:
            The number of centers decoded for this finalization with the
            algorithmic and computational latency in ms, or None when B2
            defers the finalization.
        """
        _, algorithmic_ms, computational_ms = strategy_latency(
            self.pipeline.strategy, self.pipeline
        )
        mode = self.pipeline.strategy.dummy_mode
        if self.pipeline.strategy == Strategy.B1_IMMEDIATE:
            self.next_center = max(self.next_center, segment.position + 1)
        elif self.pipeline.strategy == Strategy.B2_WAIT:
            if self.next_center <= segment.position:
                if not segment.is_flush:
                    self.pending.append(segment)
                    return None
                self._fallback(segment)
                return 0, algorithmic_ms, computational_ms
        elif mode is not None and self.next_center <= segment.position:
            last = self.kept[segment.position]
            dummies = inject_dummy_frames(last, mode, self.right_context)
            self._emit(
                EventKind.DUMMY_INJECTION,
                last.frame_index,
                mode=mode.value,
                after_frame=last.frame_index,
                count=len(dummies),
            )
            frames = self.kept[: segment.position + 1] + dummies
            decoded = segment.position + 1 - self.next_center
            while self.next_center <= segment.position:
                self._decode_center(frames)
            self._finalize_second(segment, algorithmic_ms, computational_ms, False)
            return decoded, algorithmic_ms, computational_ms
        self._finalize_second(segment, algorithmic_ms, computational_ms, False)
        return 0, algorithmic_ms, computational_ms

    def _fallback(self, segment: EosState) -> None:
        logger.warning(
            "%s: no future frames to wait for EOS at %i ms, finalizing without them",
            self.spec.id,
            segment.eos.timestamp_ms,
        )
        self.next_center = max(self.next_center, segment.position + 1)
        self._finalize_second(segment, self.pipeline.lag_ms, 0, fallback=True)

    def _finalize_second(
        self,
        segment: EosState,
        algorithmic_ms: int,
        computational_ms: int,
        fallback: bool,
    ) -> None:
        assert self.second is not None
        final, lattice = self.second.finalize()
        self.second_start_ms = segment.eos.timestamp_ms
        self._complete(
            segment, final.tokens, lattice, algorithmic_ms, computational_ms, fallback
        )

    def _complete(
        self,
        segment: EosState,
        transcript_2nd: Tuple[str, ...],
        lattice_2nd: Optional[Lattice],
        algorithmic_ms: int,
        computational_ms: int,
        fallback: bool,
    ) -> None:
        result = SegmentResult(
            index=segment.index,
            start_ms=segment.start_ms,
            transcript_1st=segment.transcript_1st,
            transcript_2nd=transcript_2nd,
            eos_emit_ms=segment.emit_ms,
            eos_timestamp_ms=segment.eos.timestamp_ms,
            finalize_algorithmic_ms=algorithmic_ms,
            finalize_computational_ms=computational_ms,
            eos_source=segment.eos.source,
            is_flush=segment.is_flush,
            fallback=fallback,
            finalized_at_ms=self.now_ms,
            lattice_1st=segment.lattice_1st,
            lattice_2nd=lattice_2nd,
        )
        self.results.append(result)
        self._emit(
            EventKind.SEGMENT_FINALIZED,
            self._last_real_frame(),
            index=result.index,
            transcript_1st=list(result.transcript_1st),
            transcript_2nd=list(result.transcript_2nd),
            algorithmic_ms=algorithmic_ms,
            computational_ms=computational_ms,
            fallback=fallback,
        )

    def _flush(self) -> None:
        while self.pending:
            self._fallback(self.pending.popleft())
        last_index = self.now_ms // self.pipeline.frame_ms - 1
        self._on_eos(EosEvent(self.now_ms, last_index, "flush"), is_flush=True)


def run_utterance(
    spec: UtteranceSpec,
    config: SystemConfig,
    annotated: Optional[AnnotatedTranscript] = None,
    second_pass: bool = True,
) -> Tuple[List[SegmentResult], List[TimelineEvent]]:
    """Simulate one utterance through the segmenter and both passes.

    Each tick produces a causal frame, runs the VAD state machine and frame
    filter, decodes kept frames in the 1st pass and advances the 2nd pass
    whenever a full right-context window of kept frames exists. An EOS
    finalizes the 1st pass at once and the 2nd pass per the strategy. The end
    of the audio always finalizes a terminal segment.

    Args:
        spec: The utterance.
        config: All module configurations.
        annotated: EOS-annotated reference; derived from ``config.annotation``
            when not given.
        second_pass: Set to False to run the causal pass and segmenter only.
    Returns:
        Segment results in order, and the time-ordered event log.
    Raises:
        ConfigurationError: The configurations are inconsistent.
    """
    config.validate()
    if annotated is None:
        annotated = annotate_eos(
            spec, config.annotation.t_sil_ms, config.annotation.hesitation_ms
        )
    results, events = UtteranceRun(spec, annotated, config, second_pass).run()
    logger.debug("%s: %i segments, %i events", spec.id, len(results), len(events))
    return results, events


def strategy_latency(
    strategy: Strategy, config: PipelineConfig
) -> Tuple[Optional[DummyMode], int, int]:
    """Latency bookkeeping of a strategy.

    Returns:
        The dummy frame mode (None if no dummies are injected), the
        algorithmic latency and the computational latency in ms.
    """
    if strategy == Strategy.B1_IMMEDIATE:
        return None, 0, 0
    if strategy == Strategy.B2_WAIT:
        return None, config.lag_ms, 0
    return strategy.dummy_mode, 0, config.comp_latency_ms


def dumps_events(events: List[TimelineEvent]) -> str:
    """Serialize an event log as JSON lines after a schema header line"""
    lines = [json.dumps({"schema": SCHEMA_EVENTS})]
    for event in events:
        record = {
            "seq": event.seq,
            "time_ms": event.time_ms,
            "kind": event.kind.value,
            "payload": event.payload,
        }
        lines.append(json.dumps(record, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def loads_events(text: str) -> List[TimelineEvent]:
    lines = text.splitlines()
    try:
        header = json.loads(lines[0]) if lines else {}
        if header.get("schema") != SCHEMA_EVENTS:
            raise SchemaError(f"unsupported event log schema {header.get('schema')!r}")
        events = []
        for line in lines[1:]:
            record = json.loads(line)
            events.append(
                TimelineEvent(
                    int(record["time_ms"]),
                    EventKind(record["kind"]),
                    dict(record["payload"]),
                    int(record["seq"]),
                )
            )
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise SchemaError(f"invalid event log: {e}") from e
    return events
