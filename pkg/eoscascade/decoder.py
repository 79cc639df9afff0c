#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods,too-many-instance-attributes,too-many-locals

import enum
import logging
import math

from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Tuple

from eoscascade.acoustics import PosteriorFrame, Stream
from eoscascade.errors import ConfigurationError, ContractError
from eoscascade.lattice import (
    DEPTH_END,
    DEPTH_START,
    Lattice,
    LatticeNode,
    lattice_paths,
)
from eoscascade.utils import BLANK, EOS
from eoscascade.vad import EosEvent

logger = logging.getLogger(__name__)

# n of the n-gram state used for path merging
MERGE_ORDER = 2

__all__ = [
    "BeamConfig",
    "Beam",
    "Hypothesis",
    "PathMerge",
    "StreamDecoder",
    "decode_step",
    "eos_check",
    "finalize",
    "lattice_paths",
    "merge_paths",
]


class PathMerge(str, enum.Enum):
    NONE = "none"
    BIGRAM = "bigram"


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 4
    pruning_threshold: float = 5.0
    expansion_cutoff: float = 5.0
    max_expansion_depth: int = 10
    path_merge: PathMerge = PathMerge.NONE
    eos_threshold: float = 3.7

    def validate(self) -> None:
        if self.beam_size <= 0 or self.max_expansion_depth <= 0:
            raise ConfigurationError(
                "beam_size and max_expansion_depth must be positive"
            )
        if min(self.pruning_threshold, self.expansion_cutoff) <= 0:
            raise ConfigurationError(
                "beam pruning_threshold and expansion_cutoff must be positive"
            )
        if self.eos_threshold < 0:
            raise ConfigurationError("beam eos_threshold must be >= 0")
        if not isinstance(self.path_merge, PathMerge):
            raise ConfigurationError(f"unknown path_merge {self.path_merge!r}")


class Emission(NamedTuple):
    token: str
    cost: float
    depth: int


@dataclass(frozen=True)
class Hypothesis:

    """A partial transcript with its accumulated cost.

    ``node`` and ``node_cost`` locate the hypothesis in the segment lattice;
    ``pending`` holds the emissions of the latest frame that have not been
    written to a lattice yet.
    """

    tokens: Tuple[str, ...] = ()
    token_end_ms: Tuple[int, ...] = ()
    cost: float = 0.0
    merge_context: Tuple[str, ...] = ()
    node: int = -1
    node_cost: float = 0.0
    pending: Tuple[Emission, ...] = ()

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.token_end_ms):
            raise ContractError("tokens and token_end_ms differ in length")
        if self.cost < 0:
            raise ContractError(f"negative hypothesis cost {self.cost}")


def _rank(hyp: Hypothesis) -> Tuple[float, Tuple[str, ...]]:
    return (hyp.cost, hyp.tokens)


def _context(context: Tuple[str, ...], added: Tuple[str, ...]) -> Tuple[str, ...]:
    if not added:
        return context
    return (context + added)[-(MERGE_ORDER - 1) :]


@dataclass
class Beam:
    hypotheses: List[Hypothesis]
    config: BeamConfig

    @classmethod
    def initial(cls, config: BeamConfig, merge_context: Tuple[str, ...] = ()) -> "Beam":
        return cls([Hypothesis(merge_context=merge_context)], config)

    def __len__(self) -> int:
        return len(self.hypotheses)

    def best(self) -> Hypothesis:
        if not self.hypotheses:
            raise ContractError("empty beam")
        return self.hypotheses[0]


def _prune(hyps: List[Hypothesis], config: BeamConfig) -> List[Hypothesis]:
    hyps = sorted(hyps, key=_rank)
    if not hyps:
        return hyps
    bound = hyps[0].cost + config.pruning_threshold
    return [hyp for hyp in hyps if hyp.cost <= bound][: config.beam_size]


def decode_step(beam: Beam, frame: PosteriorFrame, config: BeamConfig) -> Beam:
    """Consume one posterior frame.

    Every hypothesis either consumes the frame with a blank, or emits a
    breadth-first expansion of up to ``max_expansion_depth`` tokens, each
    with a cost below ``expansion_cutoff``, and then consumes the frame with
    a free blank. Candidates with identical token sequences keep the lower
    cost, and the result is pruned to ``beam_size`` hypotheses within
    ``pruning_threshold`` of the best. Ties are broken by token sequence.

    Args:
        beam: The beam before the frame.
        frame: Posteriors of the frame.
        config: Search parameters.
    Returns:
        A new Beam; the input beam is not modified.
    Raises:
        ContractError: The beam is empty or the frame has no blank cost.
    """
    return Beam(_prune(_expand(beam, frame, config), config), config)


def _expand(beam: Beam, frame: PosteriorFrame, config: BeamConfig) -> List[Hypothesis]:
    """All candidates of a frame, one per token sequence, before pruning"""
    if not beam.hypotheses:
        raise ContractError("decode_step on an empty beam")
    try:
        blank = frame.costs[BLANK]
    except KeyError as e:
        raise ContractError(f"frame {frame.frame_index} has no blank cost") from e
    tokens = frame.candidates(config.expansion_cutoff)

    best: Dict[Tuple[str, ...], Hypothesis] = {}
    running = math.inf
    for hyp in beam.hypotheses:
        candidates = [replace(hyp, cost=hyp.cost + blank, pending=())]
        frontier: List[Tuple[Tuple[Emission, ...], float]] = [((), hyp.cost)]
        for depth in range(config.max_expansion_depth):
            grown: List[Tuple[Tuple[Emission, ...], float]] = []
            for emitted, cost in frontier:
                for token, token_cost in tokens:
                    total = cost + token_cost
                    grown.append((emitted + (Emission(token, total, depth),), total))
            running = min([running, candidates[0].cost] + [cost for _, cost in grown])
            bound = running + config.pruning_threshold
            grown = [item for item in grown if item[1] <= bound]
            grown.sort(key=lambda item: (item[1], tuple(e.token for e in item[0])))
            frontier = grown[: config.beam_size]
            for emitted, cost in frontier:
                added = tuple(e.token for e in emitted)
                candidates.append(
                    Hypothesis(
                        tokens=hyp.tokens + added,
                        token_end_ms=hyp.token_end_ms + (frame.end_ms,) * len(added),
                        cost=cost,
                        merge_context=_context(hyp.merge_context, added),
                        node=hyp.node,
                        node_cost=hyp.node_cost,
                        pending=emitted,
                    )
                )
            if not frontier:
                break
        for cand in candidates:
            known = best.get(cand.tokens)
            if known is None or cand.cost < known.cost:
                best[cand.tokens] = cand
    return list(best.values())


def _commit(lattice: Lattice, hyp: Hypothesis, frame_index: int) -> Hypothesis:
    """Write a hypothesis' unrecorded emissions into the lattice"""
    if hyp.node < 0:
        parent, parent_cost = lattice.start, 0.0
        for depth, token in enumerate(hyp.tokens):
            cost = hyp.cost if depth == len(hyp.tokens) - 1 else parent_cost
            node = LatticeNode(frame_index, depth, (token,))
            parent = lattice.emit(parent, token, cost - parent_cost, node)
            parent_cost = cost
        return replace(hyp, node=parent, node_cost=parent_cost, pending=())
    parent, parent_cost = hyp.node, hyp.node_cost
    for emission in hyp.pending:
        node = LatticeNode(frame_index, emission.depth, (emission.token,))
        parent = lattice.emit(parent, emission.token, emission.cost - parent_cost, node)
        parent_cost = emission.cost
    return replace(hyp, node=parent, node_cost=parent_cost, pending=())


def merge_paths(beam: Beam, lattice: Lattice, frame_index: int) -> Tuple[Beam, Lattice]:
    """Merge hypotheses that share a bigram state, then prune.

    Hypotheses whose last token is the same collapse into one lattice node
    for the frame. Each of them reaches the node through an epsilon arc
    carrying its cost since its own node, and only the cheapest continues in
    the beam. The beam may hold more than ``beam_size`` unpruned candidates;
    merging runs first so a shared state takes a single beam slot. Only
    candidates within ``pruning_threshold`` of the best are written to the
    lattice, at most ``beam_size`` per merged state.

    Raises:
        ContractError: Path merging is not enabled in the beam's config.
    """
    config = beam.config
    if config.path_merge != PathMerge.BIGRAM:
        raise ContractError("merge_paths needs path_merge=bigram")
    if lattice.start < 0:
        lattice.start = lattice.add_node(LatticeNode(frame_index, DEPTH_START))
    if not beam.hypotheses:
        return Beam([], config), lattice
    groups: Dict[Tuple[str, ...], List[Hypothesis]] = {}
    for hyp in sorted(beam.hypotheses, key=_rank):
        groups.setdefault(hyp.merge_context, []).append(hyp)
    bound = min(hyp.cost for hyp in beam.hypotheses) + config.pruning_threshold
    kept = _prune([group[0] for group in groups.values()], config)

    survivors: List[Hypothesis] = []
    for best in kept:
        members = groups[best.merge_context][: config.beam_size]
        group = [
            _commit(lattice, hyp, frame_index) for hyp in members if hyp.cost <= bound
        ]
        if len(group) == 1:
            survivors.append(group[0])
            continue
        node = lattice.merge_node(frame_index, best.merge_context)
        for hyp in group:
            if hyp.node != node:
                lattice.add_arc(hyp.node, None, hyp.cost - hyp.node_cost, node)
        survivors.append(replace(group[0], node=node, node_cost=group[0].cost))
    return Beam(survivors, config), lattice


def eos_check(
    beam: Beam, frame: PosteriorFrame, config: BeamConfig
) -> Optional[EosEvent]:
    """Return an EOS event when the causal pass should finalize on this frame.

    Only the top hypothesis is consulted: it must have emitted a token since
    the previous EOS, and the frame's EOS cost must be under the threshold.
    The EOS cost is not added to the hypothesis.

    Raises:
        ContractError: The frame does not come from the causal stream.
    """
    if frame.stream != Stream.CAUSAL:
        raise ContractError("eos_check reads causal frames only")
    if not beam.best().tokens:
        return None
    if frame.costs.get(EOS, math.inf) >= config.eos_threshold:
        return None
    return EosEvent(frame.end_ms, frame.frame_index, "e2e")


def finalize(beam: Beam) -> Tuple[Hypothesis, Beam]:
    """Keep the top hypothesis and reset the beam.

    Returns:
        The lowest-cost hypothesis, and a fresh beam holding one empty
        hypothesis with zero cost that carries over its merge context.
    Raises:
        ContractError: The beam is empty.
    """
    if not beam.hypotheses:
        raise ContractError("finalize on an empty beam")
    final = min(beam.hypotheses, key=_rank)
    return final, Beam.initial(beam.config, final.merge_context)


class StreamDecoder:

    """One decoding pass: its beam, its segment lattice and the carryover"""

    def __init__(self, config: BeamConfig, stream: Stream, name: str = "") -> None:
        self.config = config
        self.stream = stream
        self.name = name or stream.value
        self.frames_decoded = 0
        self._next_frame = 0
        self.beam = Beam.initial(config)
        self.lattice = Lattice()
        self._start_segment()

    def _start_segment(self) -> None:
        self.lattice = Lattice()
        context = self.beam.best().merge_context
        self.lattice.start = self.lattice.add_node(
            LatticeNode(self._next_frame, DEPTH_START, context)
        )
        start = self.lattice.start
        hypotheses = [
            replace(hyp, node=start, node_cost=hyp.cost) for hyp in self.beam.hypotheses
        ]
        self.beam = Beam(hypotheses, self.config)

    def step(self, frame: PosteriorFrame) -> Beam:
        if self.config.path_merge == PathMerge.BIGRAM:
            expanded = Beam(_expand(self.beam, frame, self.config), self.config)
            beam, self.lattice = merge_paths(expanded, self.lattice, frame.frame_index)
        else:
            beam = decode_step(self.beam, frame, self.config)
            beam.hypotheses = [
                _commit(self.lattice, hyp, frame.frame_index) for hyp in beam.hypotheses
            ]
        self.beam = beam
        self.frames_decoded += 1
        self._next_frame = frame.frame_index + 1
        return beam

    def check_eos(self, frame: PosteriorFrame) -> Optional[EosEvent]:
        return eos_check(self.beam, frame, self.config)

    def finalize(self) -> Tuple[Hypothesis, Lattice]:
        """Close the segment lattice, finalize the beam and start a new segment"""
        lattice = self.lattice
        lattice.end = lattice.add_node(LatticeNode(self._next_frame - 1, DEPTH_END))
        for hyp in self.beam.hypotheses:
            lattice.add_arc(hyp.node, None, hyp.cost - hyp.node_cost, lattice.end)
        final, self.beam = finalize(self.beam)
        logger.debug(
            "%s finalized %d tokens at frame %d (cost %.3f, lattice %s)",
            self.name,
            len(final.tokens),
            self._next_frame - 1,
            final.cost,
            lattice,
        )
        self._start_segment()
        return final, lattice
