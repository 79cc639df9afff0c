#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods,too-many-locals,too-many-branches

import csv
import dataclasses
import enum
import io
import json
import logging
import math

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from eoscascade.corpus import UtteranceSpec, end_of_speech
from eoscascade.errors import ContractError, UndefinedRateError
from eoscascade.lattice import Lattice
from eoscascade.pipeline import SegmentResult
from eoscascade.utils import EOS, SCHEMA_CSV, _chunkify

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "segmenter",
    "sl50_s",
    "sl90_s",
    "eos50_ms",
    "eos90_ms",
    "wer_2nd",
    "wer_1st",
    "ower",
]

# alignment operations
OP_MATCH = "="
OP_SUB = "S"
OP_INS = "I"
OP_DEL = "D"
OP_EOS = "E"


class LatencyMode(str, enum.Enum):
    LAST_ONLY = "last_only"
    ALL = "all"


@dataclass(frozen=True)
class WerBreakdown:

    """Edit counts of a hypothesis against a reference.

    Breakdowns add up, so corpus WER is the pooled error count over the
    pooled reference length.
    """

    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_words: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        if self.ref_words <= 0:
            raise UndefinedRateError("WER of an empty reference")
        return self.errors / self.ref_words

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_words + other.ref_words,
        )


def align(
    ref: Sequence[str], hyp: Sequence[str]
) -> List[Tuple[str, Optional[str], Optional[str]]]:
    """Minimum edit distance alignment with unit costs.

    When several alignments are optimal, the backtrace prefers a match, then
    a substitution, then an insertion, then a deletion.

    Returns:
        (operation, ref token, hyp token) triples in order.
    """
    nr_ref, nr_hyp = len(ref), len(hyp)
    dist = [[0] * (nr_hyp + 1) for _ in range(nr_ref + 1)]
    for i in range(nr_ref + 1):
        dist[i][0] = i
    for j in range(nr_hyp + 1):
        dist[0][j] = j
    for i in range(1, nr_ref + 1):
        for j in range(1, nr_hyp + 1):
            diag = dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            dist[i][j] = min(diag, dist[i][j - 1] + 1, dist[i - 1][j] + 1)

    ops: List[Tuple[str, Optional[str], Optional[str]]] = []
    i, j = nr_ref, nr_hyp
    while i or j:
        here = dist[i][j]
        if i and j and ref[i - 1] == hyp[j - 1] and dist[i - 1][j - 1] == here:
            ops.append((OP_MATCH, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i and j and dist[i - 1][j - 1] + 1 == here:
            ops.append((OP_SUB, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif j and dist[i][j - 1] + 1 == here:
            ops.append((OP_INS, None, hyp[j - 1]))
            j -= 1
        else:
            ops.append((OP_DEL, ref[i - 1], None))
            i -= 1
    ops.reverse()
    return ops


def wer(ref: Sequence[str], hyp: Sequence[str]) -> WerBreakdown:
    """Word error rate of hyp against ref.

    Raises:
        UndefinedRateError: The reference is empty.
    """
    if not ref:
        raise UndefinedRateError("WER of an empty reference")
    counts = {OP_SUB: 0, OP_INS: 0, OP_DEL: 0}
    for op, _, _ in align(ref, hyp):
        if op in counts:
            counts[op] += 1
    return WerBreakdown(counts[OP_SUB], counts[OP_INS], counts[OP_DEL], len(ref))


def _deletion_sweep(row: np.ndarray) -> np.ndarray:
    """Close a cost row under deleting reference words: row[j] <= row[j-1] + 1"""
    offsets = np.arange(len(row), dtype=float)
    return np.minimum.accumulate(row - offsets) + offsets


def _lattice_rows(
    lattice: Lattice, incoming: np.ndarray, ref: Sequence[str]
) -> List[np.ndarray]:
    """Best edit cost of reaching every node having consumed ref[:j], for all j"""
    rows = [np.full(len(incoming), np.inf) for _ in lattice.nodes]
    rows[lattice.start] = incoming
    mismatch = {
        token: np.array([0.0] + [float(word != token) for word in ref])
        for token in {arc.token for arc in lattice.arcs if arc.token is not None}
    }
    for arc in sorted(lattice.arcs, key=lambda arc: arc.dst):
        src = rows[arc.src]
        if arc.token is None:
            cand = src
        else:
            cand = src + 1.0
            cand[1:] = np.minimum(cand[1:], src[:-1] + mismatch[arc.token][1:])
            cand = _deletion_sweep(cand)
        rows[arc.dst] = np.minimum(rows[arc.dst], cand)
    return rows


def _backtrace(
    lattice: Lattice, rows: List[np.ndarray], j: int, ref: Sequence[str]
) -> Tuple[List[str], int]:
    """Recover the tokens of one optimal path through a lattice, ending at ref[:j]"""
    into = lattice.incoming()
    tokens: List[str] = []
    node = lattice.end
    while node != lattice.start:
        value = rows[node][j]
        if j and rows[node][j - 1] + 1 == value:
            j -= 1
            continue
        for arc in into[node]:
            src = rows[arc.src]
            if arc.token is None:
                if src[j] == value:
                    break
            elif j and src[j - 1] + float(ref[j - 1] != arc.token) == value:
                tokens.append(arc.token)
                j -= 1
                break
            elif src[j] + 1 == value:
                tokens.append(arc.token)
                break
        else:
            raise ContractError(f"no optimal arc into lattice node {node}")
        node = arc.src
    tokens.reverse()
    return tokens, j


def _has_path(lattice: Optional[Lattice]) -> bool:
    if lattice is None or not lattice.nodes:
        return False
    return lattice.start >= 0 and lattice.end >= 0


def oracle_wer(
    lattices: Sequence[Optional[Lattice]], ref: Sequence[str]
) -> WerBreakdown:
    """Lowest WER reachable by choosing one path through each segment lattice.

    The segment lattices are chained in order and scored with one edit
    distance dynamic program over the reference. A missing or empty lattice,
    or one with no path from start to end, contributes no words.

    Returns:
        The breakdown of the best concatenated path.
    Raises:
        UndefinedRateError: The reference is empty.
    """
    if not ref:
        raise UndefinedRateError("oracle WER of an empty reference")
    row = np.arange(len(ref) + 1, dtype=float)
    tables: List[Optional[List[np.ndarray]]] = []
    for lattice in lattices:
        if not _has_path(lattice):
            tables.append(None)
            continue
        assert lattice is not None
        rows = _lattice_rows(lattice, row, ref)
        if not np.isfinite(rows[lattice.end][-1]):
            tables.append(None)
            continue
        tables.append(rows)
        row = rows[lattice.end]

    j = len(ref)
    pieces: List[List[str]] = []
    for lattice, rows in zip(reversed(lattices), reversed(tables)):
        if rows is None:
            continue
        assert lattice is not None
        tokens, j = _backtrace(lattice, rows, j, ref)
        pieces.append(tokens)
    path = [token for tokens in reversed(pieces) for token in tokens]
    return wer(ref, path)


def segment_lengths(segments: Sequence[SegmentResult]) -> List[int]:
    """Audio length of every segment in ms; a zero-length terminal flush is skipped"""
    lengths = []
    for seg in segments:
        length = seg.eos_timestamp_ms - seg.start_ms
        if seg.is_flush and length == 0:
            continue
        lengths.append(length)
    return lengths


def _eos_pairs(
    segments: Sequence[SegmentResult], spec: UtteranceSpec
) -> Tuple[List[Tuple[int, Optional[int]]], int]:
    pairs = [
        (seg.eos_timestamp_ms, end_of_speech(spec, seg.eos_timestamp_ms))
        for seg in segments
        if not seg.is_flush
    ]
    return pairs, sum(1 for _, end_ms in pairs if end_ms is None)


def eos_latency(
    segments: Sequence[SegmentResult], spec: UtteranceSpec, mode: LatencyMode
) -> List[int]:
    """Delay from end-of-speech to each EOS timestamp.

    End-of-speech is the end of the last word starting before the EOS.
    Negative delays are kept. The terminal flush is not an EOS, and an EOS
    with no speech before it is left out.

    Args:
        segments: The segments of one utterance, in order.
        spec: The utterance.
        mode: LAST_ONLY keeps only the final EOS, ALL keeps every EOS.
    Returns:
        Latencies in ms.
    """
    pairs, excluded = _eos_pairs(segments, spec)
    if mode == LatencyMode.LAST_ONLY:
        pairs = pairs[-1:]
    if excluded:
        logger.debug("%s: %i EOS without preceding speech", spec.id, excluded)
    return [eos_ms - end_ms for eos_ms, end_ms in pairs if end_ms is not None]


def count_excluded_eos(segments: Sequence[SegmentResult], spec: UtteranceSpec) -> int:
    return _eos_pairs(segments, spec)[1]


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile.

    Raises:
        ContractError: values is empty or p is not in (0, 1].
    """
    if not values:
        raise ContractError("percentile of an empty list")
    if not 0.0 < p <= 1.0:
        raise ContractError(f"percentile p={p} not in (0, 1]")
    ordered = sorted(values)
    rank = math.ceil(round(p * len(ordered), 9))
    return ordered[max(rank, 1) - 1]


@dataclass(frozen=True)
class LatencyStats:
    values_ms: Tuple[float, ...] = ()
    p50: Optional[float] = None
    p90: Optional[float] = None

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "LatencyStats":
        if not values:
            return cls()
        return cls(tuple(values), percentile(values, 0.5), percentile(values, 0.9))


def histogram(
    values: Sequence[float], bin_width: float
) -> List[Tuple[float, float, int]]:
    """Fixed-width histogram as (low edge, high edge, count) rows"""
    if not values:
        return []
    if bin_width <= 0:
        raise ContractError("bin_width must be positive")
    low = math.floor(min(values) / bin_width) * bin_width
    nr_bins = int(math.floor((max(values) - low) / bin_width)) + 1
    edges = low + bin_width * np.arange(nr_bins + 1)
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
    return [
        (float(edges[i]), float(edges[i + 1]), int(count))
        for i, count in enumerate(counts)
    ]


@dataclass(frozen=True)
class ReportRow:
    segmenter: str
    sl50_s: float
    sl90_s: float
    eos50_ms: Optional[float]
    eos90_ms: Optional[float]
    wer_2nd: float
    wer_1st: float
    ower: Optional[float] = None


def _cell(value: Optional[float], digits: int) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


@dataclass
class RunReport:

    """Per-segmenter rows of segment lengths, EOS latencies and WERs"""

    rows: List[ReportRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(
                {
                    "segmenter": row.segmenter,
                    "sl50_s": _cell(row.sl50_s, 2),
                    "sl90_s": _cell(row.sl90_s, 2),
                    "eos50_ms": _cell(row.eos50_ms, 0),
                    "eos90_ms": _cell(row.eos90_ms, 0),
                    "wer_2nd": _cell(row.wer_2nd, 4),
                    "wer_1st": _cell(row.wer_1st, 4),
                    "ower": _cell(row.ower, 4),
                }
            )
        return buf.getvalue()

    def to_json(self) -> str:
        record = {
            "schema": SCHEMA_CSV,
            "columns": REPORT_COLUMNS,
            "rows": [dataclasses.asdict(row) for row in self.rows],
        }
        return json.dumps(record, indent=2, sort_keys=True) + "\n"


def _split_eos(tokens: Sequence[str]) -> Tuple[List[str], List[int]]:
    """Drop EOS markers, returning the words and how many words precede each marker"""
    words: List[str] = []
    marks: List[int] = []
    for token in tokens:
        if token == EOS:
            marks.append(len(words))
        else:
            words.append(token)
    return words, marks


def _columns(ref: Sequence[str], tokens: Sequence[str]) -> List[Tuple[str, str, str]]:
    words, marks = _split_eos(tokens)
    columns: List[Tuple[str, str, str]] = []
    nr_hyp = 0
    pending = list(marks)
    while pending and pending[0] == 0:
        columns.append((OP_EOS, "", EOS))
        pending.pop(0)
    for op, ref_tok, hyp_tok in align(ref, words):
        columns.append((op, ref_tok or "*", hyp_tok or "*"))
        if hyp_tok is not None:
            nr_hyp += 1
            while pending and pending[0] == nr_hyp:
                columns.append((OP_EOS, "", EOS))
                pending.pop(0)
    for _ in pending:
        columns.append((OP_EOS, "", EOS))
    return columns


def _row(cells: Sequence[str], sizes: Sequence[int]) -> str:
    return " ".join(cell.ljust(size) for cell, size in zip(cells, sizes)).rstrip()


def diff_report(
    ref: Sequence[str], runs: Dict[str, Sequence[str]], width: int = 12
) -> str:
    """Side-by-side error analysis of transcripts against one reference.

    Each run is a token list that may contain EOS markers. Words are aligned
    against the reference with :func:`align`; the ``OP`` line marks
    substitutions (S), insertions (I), deletions (D) and EOS positions (E),
    with ``*`` standing in for the missing side.

    Args:
        ref: The reference words.
        runs: Transcript per run name; runs are reported in sorted order.
        width: Alignment columns per output line.
    Returns:
        The report as text.
    """
    lines: List[str] = []
    for name in sorted(runs):
        columns = _columns(ref, runs[name])
        words, marks = _split_eos(runs[name])
        counts = {OP_SUB: 0, OP_INS: 0, OP_DEL: 0}
        for op, _, _ in columns:
            if op in counts:
                counts[op] += 1
        lines.append(
            f"== {name}: S={counts[OP_SUB]} I={counts[OP_INS]} D={counts[OP_DEL]} "
            f"EOS={len(marks)} words={len(words)}/{len(ref)}"
        )
        for chunk in _chunkify(columns, width):
            sizes = [max(len(c[1]), len(c[2]), 1) for c in chunk]
            ops = [" " if c[0] == OP_MATCH else c[0] for c in chunk]
            lines.append("REF: " + _row([c[1] for c in chunk], sizes))
            lines.append("HYP: " + _row([c[2] for c in chunk], sizes))
            lines.append("OP:  " + _row(ops, sizes))
        lines.append("")
    return "\n".join(lines)
