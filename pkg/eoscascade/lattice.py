#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods

import math

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from eoscascade.errors import ContractError, SchemaError
from eoscascade.utils import SCHEMA_LATTICE

EPSILON = "<eps>"
DEPTH_START = -1
DEPTH_MERGE = 1000
DEPTH_END = 1001


@dataclass(frozen=True)
class LatticeNode:
    frame_index: int
    depth: int
    context: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Arc:
    src: int
    token: Optional[str]
    cost: float
    dst: int


class Lattice:

    """A segment's search lattice.

    Node ids are handed out in creation order and every arc goes from a lower
    id to a higher one, so id order is a topological order. Arcs with a None
    token are epsilon arcs, used when hypotheses are merged and to join the
    surviving hypotheses to the end node.

    .. code-block:: python

        lat = Lattice()
        s = lat.add_node(LatticeNode(0, DEPTH_START))
        a = lat.add_node(LatticeNode(3, 0, ("a",)))
        lat.add_arc(s, "a", 0.2, a)
        lat.start, lat.end = s, a
    """

    def __init__(self) -> None:
        self.nodes: List[LatticeNode] = []
        self.arcs: List[Arc] = []
        self.start: int = -1
        self.end: int = -1
        self._children: Dict[Tuple[int, str, int], int] = {}
        self._merges: Dict[Tuple[int, Tuple[str, ...]], int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, node: LatticeNode) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def add_arc(self, src: int, token: Optional[str], cost: float, dst: int) -> None:
        if not 0 <= src < dst < len(self.nodes):
            raise ContractError(f"arc {src}->{dst} breaks node order")
        if not math.isfinite(cost):
            raise ContractError(f"arc {src}->{dst} has non-finite cost")
        self.arcs.append(Arc(src, token, cost, dst))

    def emit(self, parent: int, token: str, cost: float, node: LatticeNode) -> int:
        """Get the node reached from parent by token, creating it once"""
        key = (parent, token, node.frame_index)
        idx = self._children.get(key)
        if idx is None:
            idx = self.add_node(node)
            self.add_arc(parent, token, cost, idx)
            self._children[key] = idx
        return idx

    def merge_node(self, frame_index: int, context: Tuple[str, ...]) -> int:
        key = (frame_index, context)
        idx = self._merges.get(key)
        if idx is None:
            idx = self.add_node(LatticeNode(frame_index, DEPTH_MERGE, context))
            self._merges[key] = idx
        return idx

    def outgoing(self) -> Dict[int, List[Arc]]:
        out: Dict[int, List[Arc]] = {idx: [] for idx in range(len(self.nodes))}
        for arc in self.arcs:
            out[arc.src].append(arc)
        return out

    def incoming(self) -> Dict[int, List[Arc]]:
        into: Dict[int, List[Arc]] = {idx: [] for idx in range(len(self.nodes))}
        for arc in self.arcs:
            into[arc.dst].append(arc)
        return into

    def dumps(self) -> str:
        """Serialize as text: a header, start/end lines, then nodes and arcs"""
        lines = [f"# {SCHEMA_LATTICE}", f"start {self.start}", f"end {self.end}"]
        for idx, node in enumerate(self.nodes):
            context = " ".join(node.context) if node.context else "-"
            lines.append(f"node {idx} {node.frame_index} {node.depth} {context}")
        for arc in self.arcs:
            token = EPSILON if arc.token is None else arc.token
            lines.append(f"arc {arc.src} {arc.dst} {token} {arc.cost:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Lattice":
        lat = cls()
        lines = text.splitlines()
        if not lines or lines[0] != f"# {SCHEMA_LATTICE}":
            raise SchemaError("missing lattice header")
        try:
            for line in lines[1:]:
                parts = line.split(" ")
                if parts[0] == "start":
                    lat.start = int(parts[1])
                elif parts[0] == "end":
                    lat.end = int(parts[1])
                elif parts[0] == "node":
                    if int(parts[1]) != len(lat.nodes):
                        raise SchemaError(f"node {parts[1]} out of order")
                    context = () if parts[4:] == ["-"] else tuple(parts[4:])
                    lat.add_node(LatticeNode(int(parts[2]), int(parts[3]), context))
                elif parts[0] == "arc":
                    token = None if parts[3] == EPSILON else parts[3]
                    lat.add_arc(int(parts[1]), token, float(parts[4]), int(parts[2]))
                elif line.strip():
                    raise SchemaError(f"unknown lattice line {line!r}")
        except (IndexError, ValueError, ContractError) as e:
            raise SchemaError(f"invalid lattice line: {e}") from e
        return lat

    def __repr__(self) -> str:
        return f"Lattice(nodes={len(self.nodes)}, arcs={len(self.arcs)})"


def lattice_paths(lattice: Lattice, limit: int) -> Tuple[List[Tuple[str, ...]], bool]:
    """Enumerate the distinct token sequences spelled by start-to-end paths.

    Args:
        lattice: A Lattice with start and end set.
        limit: Maximum number of sequences to return.
    Returns:
        The sequences in depth-first order, and True if enumeration stopped
        at the limit.
    """
    if not lattice.nodes or lattice.start < 0 or lattice.end < 0:
        return [], False
    out = lattice.outgoing()
    seen: Dict[Tuple[str, ...], None] = {}
    stack: List[Tuple[int, Tuple[str, ...]]] = [(lattice.start, ())]
    while stack:
        node, tokens = stack.pop()
        if node == lattice.end:
            if tokens not in seen:
                if len(seen) >= limit:
                    return list(seen), True
                seen[tokens] = None
            continue
        for arc in reversed(out[node]):
            nxt = tokens if arc.token is None else tokens + (arc.token,)
            stack.append((arc.dst, nxt))
    return list(seen), False
