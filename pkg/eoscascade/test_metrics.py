#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=wrong-import-position

import functools
import itertools
import os
import random
import sys
import unittest

from typing import List, Optional, Sequence, Tuple

# allows us to run this from the project root
sys.path.append(os.path.realpath("."))

from eoscascade.corpus import CorpusConfig, UtteranceSpec, Word, generate_corpus
from eoscascade.errors import ContractError, UndefinedRateError
from eoscascade.lattice import Lattice, LatticeNode, lattice_paths
from eoscascade.metrics import (
    REPORT_COLUMNS,
    LatencyMode,
    LatencyStats,
    ReportRow,
    RunReport,
    WerBreakdown,
    count_excluded_eos,
    diff_report,
    eos_latency,
    histogram,
    oracle_wer,
    percentile,
    segment_lengths,
    wer,
)
from eoscascade.pipeline import (
    PipelineConfig,
    SegmentResult,
    SegmenterKind,
    SystemConfig,
    run_utterance,
)
from eoscascade.utils import EOS


def _edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    @functools.lru_cache(maxsize=None)
    def dist(i: int, j: int) -> int:
        if i == len(ref):
            return len(hyp) - j
        if j == len(hyp):
            return len(ref) - i
        return min(
            dist(i + 1, j + 1) + (ref[i] != hyp[j]),
            dist(i + 1, j) + 1,
            dist(i, j + 1) + 1,
        )

    return dist(0, 0)


def _segment(
    index: int, start_ms: int, eos_ms: int, is_flush: bool = False
) -> SegmentResult:
    return SegmentResult(
        index, start_ms, (), (), eos_ms, eos_ms, 0, 0, is_flush=is_flush
    )


def _random_lattice(rng: random.Random) -> Lattice:
    lat = Lattice()
    nr_nodes = rng.randint(1, 5)
    for idx in range(nr_nodes):
        lat.add_node(LatticeNode(idx, 0))
    for _ in range(rng.randint(0, 8)):
        if nr_nodes < 2:
            break
        src = rng.randrange(nr_nodes - 1)
        dst = rng.randrange(src + 1, nr_nodes)
        lat.add_arc(src, rng.choice(["a", "b", "c", None]), 1.0, dst)
    lat.start, lat.end = 0, nr_nodes - 1
    return lat


def _brute_oracle(lattices: Sequence[Optional[Lattice]], ref: Sequence[str]) -> int:
    choices: List[List[Tuple[str, ...]]] = []
    for lat in lattices:
        paths: List[Tuple[str, ...]] = []
        if lat is not None:
            paths, truncated = lattice_paths(lat, 10000)
            assert not truncated
        choices.append(paths or [()])
    return min(
        _edit_distance(ref, [tok for path in combo for tok in path])
        for combo in itertools.product(*choices)
    )


class TestWer(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(wer(["hello", "world"], ["hello", "world"]).wer, 0.0)
        result = wer(["hello", "world"], ["hello"])
        self.assertEqual((result.deletions, result.wer), (1, 0.5))
        result = wer("a b c".split(), "a x c d".split())
        counts = (result.substitutions, result.insertions, result.deletions)
        self.assertEqual(counts, (1, 1, 0))
        self.assertAlmostEqual(result.wer, 2 / 3)

    def test_empty_reference(self):
        with self.assertRaises(UndefinedRateError):
            wer([], ["a"])
        with self.assertRaises(UndefinedRateError):
            _ = WerBreakdown(insertions=2).wer

    def test_pooled(self):
        total = wer(["a", "b"], ["a"]) + wer(["c", "d"], ["c", "d", "e"])
        self.assertEqual(total, WerBreakdown(0, 1, 1, 4))
        self.assertEqual(total.wer, 0.5)

    def test_exhaustive_short(self):
        alphabet = "abc"
        seqs = [seq for n in range(5) for seq in itertools.product(alphabet, repeat=n)]
        for ref in seqs:
            if not ref:
                continue
            for hyp in seqs:
                result = wer(ref, hyp)
                self.assertEqual(result.errors, _edit_distance(ref, hyp), (ref, hyp))
                kept = len(ref) - result.deletions
                self.assertEqual(len(hyp), kept + result.insertions)

    def test_random_long(self):
        rng = random.Random(6)
        for _ in range(3000):
            ref = [rng.choice("abc") for _ in range(rng.randint(1, 8))]
            hyp = [rng.choice("abc") for _ in range(rng.randint(0, 8))]
            self.assertEqual(wer(ref, hyp).errors, _edit_distance(ref, hyp), (ref, hyp))


class TestOracleWer(unittest.TestCase):
    def _linear(self, tokens: Sequence[str]) -> Lattice:
        lat = Lattice()
        prev = lat.start = lat.add_node(LatticeNode(0, -1))
        for token in tokens:
            node = lat.add_node(LatticeNode(0, 0))
            lat.add_arc(prev, token, 1.0, node)
            prev = node
        lat.end = prev
        return lat

    def test_linear(self):
        ref = ["hello", "world"]
        self.assertEqual(oracle_wer([self._linear(ref)], ref).wer, 0.0)
        result = oracle_wer([self._linear(["hello"]), self._linear(["word"])], ref)
        self.assertEqual((result.substitutions, result.errors), (1, 1))

    def test_diamond(self):
        lat = Lattice()
        nodes = [lat.add_node(LatticeNode(idx, 0)) for idx in range(4)]
        lat.add_arc(nodes[0], "hello", 1.0, nodes[1])
        lat.add_arc(nodes[0], "yellow", 0.5, nodes[2])
        lat.add_arc(nodes[1], "world", 1.0, nodes[3])
        lat.add_arc(nodes[2], "word", 0.5, nodes[3])
        lat.start, lat.end = nodes[0], nodes[3]
        self.assertEqual(oracle_wer([lat], ["hello", "world"]).wer, 0.0)

    def test_missing_lattices(self):
        ref = ["a", "b"]
        result = oracle_wer([None, Lattice(), self._linear(["a"])], ref)
        self.assertEqual((result.deletions, result.errors), (1, 1))
        result = oracle_wer([], ref)
        self.assertEqual(result.deletions, 2)
        with self.assertRaises(UndefinedRateError):
            oracle_wer([self._linear(["a"])], [])

    def test_random_brute_force(self):
        rng = random.Random(7)
        for _ in range(500):
            lattices = [_random_lattice(rng) for _ in range(rng.randint(1, 3))]
            ref = [rng.choice("abc") for _ in range(rng.randint(1, 5))]
            expected = _brute_oracle(lattices, ref)
            dumps = [lat.dumps() for lat in lattices]
            self.assertEqual(oracle_wer(lattices, ref).errors, expected, dumps)

    def test_bounded_by_best_path(self):
        ref = ["a", "b", "c"]
        lat = self._linear(["a", "x", "c"])
        best_path = wer(ref, ["a", "x", "c"])
        self.assertLessEqual(oracle_wer([lat], ref).errors, best_path.errors)


class TestLatency(unittest.TestCase):
    spec = UtteranceSpec("u", (Word("a", 11000, 12000),), 15000)

    def test_examples(self):
        segments = [_segment(0, 0, 12240), _segment(1, 12240, 15000, is_flush=True)]
        self.assertEqual(eos_latency(segments, self.spec, LatencyMode.LAST_ONLY), [240])
        segments = [_segment(0, 0, 12000), _segment(1, 12000, 15000, is_flush=True)]
        self.assertEqual(eos_latency(segments, self.spec, LatencyMode.ALL), [0])

    def test_negative_kept(self):
        segments = [_segment(0, 0, 11900), _segment(1, 11900, 12300)]
        self.assertEqual(eos_latency(segments, self.spec, LatencyMode.ALL), [-100, 300])
        self.assertEqual(eos_latency(segments, self.spec, LatencyMode.LAST_ONLY), [300])

    def test_excluded(self):
        segments = [
            _segment(0, 0, 500),
            _segment(1, 500, 12300),
            _segment(2, 12300, 15000, True),
        ]
        self.assertEqual(eos_latency(segments, self.spec, LatencyMode.ALL), [300])
        self.assertEqual(count_excluded_eos(segments, self.spec), 1)
        leading = [_segment(0, 0, 500)]
        self.assertEqual(eos_latency(leading, self.spec, LatencyMode.LAST_ONLY), [])

    def test_segment_lengths(self):
        segments = [
            _segment(0, 0, 3000),
            _segment(1, 3000, 4500),
            _segment(2, 4500, 4500, True),
        ]
        self.assertEqual(segment_lengths(segments), [3000, 1500])

    def test_vad_floor(self):
        corpus = CorpusConfig(
            num_utterances=2, long_form_ms=10000, long_form_floor_ms=8000
        )
        for segmenter, floor_ok in (
            (SegmenterKind.VAD, True),
            (SegmenterKind.E2E, False),
        ):
            system = SystemConfig(pipeline=PipelineConfig(segmenter=segmenter))
            latencies: List[int] = []
            for spec in generate_corpus(corpus):
                segments, _ = run_utterance(spec, system, second_pass=False)
                latencies.extend(eos_latency(segments, spec, LatencyMode.ALL))
            self.assertTrue(latencies)
            if floor_ok:
                self.assertGreaterEqual(min(latencies), 200)
            else:
                self.assertLess(min(latencies), 200)

    def test_percentile(self):
        self.assertEqual(percentile([1, 2, 3, 4], 0.5), 2)
        self.assertEqual(percentile([5], 0.1), 5)
        self.assertEqual(percentile([5], 1.0), 5)
        self.assertEqual(percentile(list(range(10, 0, -1)), 0.9), 9)
        with self.assertRaises(ContractError):
            percentile([], 0.5)
        with self.assertRaises(ContractError):
            percentile([1], 0.0)
        stats = LatencyStats.from_values([300, 100, 200])
        self.assertEqual((stats.p50, stats.p90), (200, 300))
        self.assertIsNone(LatencyStats.from_values([]).p50)

    def test_histogram(self):
        rows = histogram([0, 10, 59, 60, 200], 60)
        self.assertEqual(
            rows,
            [(0.0, 60.0, 3), (60.0, 120.0, 1), (120.0, 180.0, 0), (180.0, 240.0, 1)],
        )
        self.assertEqual(
            histogram([-100, 30], 60),
            [(-120.0, -60.0, 1), (-60.0, 0.0, 0), (0.0, 60.0, 1)],
        )
        self.assertEqual(histogram([], 60), [])
        with self.assertRaises(ContractError):
            histogram([1], 0)


class TestReports(unittest.TestCase):
    def test_csv(self):
        report = RunReport(
            [
                ReportRow("fixed-3s", 3.0, 3.0, None, None, 0.125, 0.2, 0.05),
                ReportRow("e2e", 4.567, 9.0, 240.0, 610.4, 0.1, 0.15),
            ]
        )
        lines = report.to_csv().splitlines()
        self.assertEqual(lines[0], ",".join(REPORT_COLUMNS))
        self.assertEqual(len(REPORT_COLUMNS), 8)
        self.assertEqual(lines[1], "fixed-3s,3.00,3.00,-,-,0.1250,0.2000,0.0500")
        self.assertEqual(lines[2], "e2e,4.57,9.00,240,610,0.1000,0.1500,-")
        self.assertIn('"schema": "eoscascade.csv/1"', report.to_json())

    def test_diff_identical(self):
        ref = ["a", "b", "c"]
        text = diff_report(ref, {"e2e": ["a", "b", EOS, "c"]})
        lines = text.splitlines()
        self.assertEqual(lines[0], "== e2e: S=0 I=0 D=0 EOS=1 words=3/3")
        self.assertEqual(lines[1].split(), ["REF:", "a", "b", "c"])
        self.assertEqual(lines[2].split(), ["HYP:", "a", "b", EOS, "c"])
        self.assertEqual(lines[3].split(), ["OP:", "E"])

    def test_diff_deletions(self):
        ref = "so you can put the video up".split()
        text = diff_report(ref, {"vad": ["so", "video", "up", EOS]})
        lines = text.splitlines()
        self.assertEqual(lines[0], "== vad: S=0 I=0 D=4 EOS=1 words=3/7")
        self.assertEqual(
            lines[2].split(), ["HYP:", "so", "*", "*", "*", "*", "video", "up", EOS]
        )
        self.assertEqual(lines[3].split(), ["OP:", "D", "D", "D", "D", "E"])

    def test_diff_insertion(self):
        text = diff_report(["a", "b"], {"x": ["a", "z", "b"], "w": ["a", "b"]})
        lines = text.splitlines()
        # runs are reported in sorted order
        self.assertEqual(lines[0], "== w: S=0 I=0 D=0 EOS=0 words=2/2")
        self.assertEqual(lines[5], "== x: S=0 I=1 D=0 EOS=0 words=3/2")
        self.assertEqual(lines[6].split(), ["REF:", "a", "*", "b"])
        self.assertEqual(lines[8].split(), ["OP:", "I"])

    def test_diff_width(self):
        ref = [f"w{idx}" for idx in range(5)]
        lines = diff_report(ref, {"r": ref}, width=2).splitlines()
        self.assertEqual(len([line for line in lines if line.startswith("REF:")]), 3)


if __name__ == "__main__":
    unittest.main()
