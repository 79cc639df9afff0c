#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=wrong-import-position

import contextlib
import csv
import io
import json
import os
import sys
import tempfile
import unittest

from typing import Any, Dict, List
from unittest import mock

# allows us to run this from the project root
sys.path.append(os.path.realpath("."))

from eoscascade.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from eoscascade.config import ExperimentConfig, parse_config
from eoscascade.corpus import UtteranceSpec, Word, generate_corpus
from eoscascade.errors import UndefinedRateError
from eoscascade.experiment import (
    ORACLE_COLUMNS,
    STRATEGY_COLUMNS,
    SWEEP_COLUMNS,
    UtteranceOutcome,
    run_experiment,
    run_oracle_study,
    run_report,
    run_sweep,
    simulate_corpus,
    sweep_rows,
)
from eoscascade.metrics import REPORT_COLUMNS
from eoscascade.pipeline import Strategy
from eoscascade.utils import EOS

TINY_CORPUS = {"num_utterances": 2, "long_form_ms": 8000, "long_form_floor_ms": 6000}

# little noise, but a strong cost for segments that are too short or too long
QUIET_AGING = {
    "causal_noise": 0.05,
    "cascaded_noise": 0.05,
    "feature_noise": 0.0,
    "context_ms": 1000,
    "context_weight": 100.0,
    "drift_ms": 2500,
    "drift_weight": 100.0,
}


def _config(**sections: Any) -> ExperimentConfig:
    raw: Dict[str, Any] = {"corpus": dict(TINY_CORPUS)}
    raw.update(sections)
    return parse_config(raw)


def _sweep_spec(blocks: int) -> UtteranceSpec:
    """Blocks of four 300 ms words after gaps of 840, 450, 240 and 150 ms"""
    words: List[Word] = []
    end = 0
    for _ in range(blocks):
        for gap in (840, 450, 240, 150):
            start = end + gap
            end = start + 300
            words.append(Word(f"w{len(words)}", start, end))
    return UtteranceSpec("sweep", tuple(words), end + 60)


def _read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


class TestExperiment(unittest.TestCase):
    def test_segmenter_table(self):
        config = _config(
            grid={"segmenters": ["vad", "e2e"], "strategies": ["E2_dummy_last"]}
        )
        with tempfile.TemporaryDirectory() as tmp:
            written = run_experiment(config, tmp)
            names = sorted(os.path.basename(path) for path in written)
            self.assertEqual(
                names,
                [
                    "corpus.jsonl",
                    "eos_latency_hist.csv",
                    "report.json",
                    "segment_length_hist.csv",
                    "segmenters_E2_dummy_last.csv",
                    "strategies.csv",
                ],
            )
            table = os.path.join(tmp, "segmenters_E2_dummy_last.csv")
            with open(table, encoding="utf-8") as f:
                lines = f.read().splitlines()
            self.assertEqual(lines[0], ",".join(REPORT_COLUMNS))
            self.assertEqual(len(lines), 3)
            for line in lines[1:]:
                self.assertEqual(len(line.split(",")), 8)
            rows = _read_csv(table)
            self.assertEqual([row["segmenter"] for row in rows], ["vad", "e2e"])
            with open(os.path.join(tmp, "report.json"), encoding="utf-8") as f:
                report = json.load(f)
            self.assertEqual(report["utterances"], 2)
            self.assertIn("E2_dummy_last/e2e", report["runs"])
            hist = _read_csv(os.path.join(tmp, "eos_latency_hist.csv"))
            self.assertEqual({row["segmenter"] for row in hist}, {"vad", "e2e"})

    def test_fixed_has_no_latency(self):
        config = _config(
            grid={"segmenters": ["fixed-3s"], "strategies": ["B1_immediate"]}
        )
        with tempfile.TemporaryDirectory() as tmp:
            run_experiment(config, tmp)
            rows = _read_csv(os.path.join(tmp, "segmenters_B1_immediate.csv"))
            self.assertEqual((rows[0]["eos50_ms"], rows[0]["eos90_ms"]), ("-", "-"))
            self.assertEqual(rows[0]["sl50_s"], "3.00")
            self.assertEqual(_read_csv(os.path.join(tmp, "eos_latency_hist.csv")), [])

    def test_deterministic(self):
        config = _config(
            grid={"segmenters": ["fixed-3s", "e2e"], "strategies": ["B2_wait"]}
        )
        with tempfile.TemporaryDirectory() as first:
            with tempfile.TemporaryDirectory() as second:
                written = run_experiment(config, first)
                run_experiment(config, second)
                for path in written:
                    name = os.path.basename(path)
                    again = _read_bytes(os.path.join(second, name))
                    self.assertEqual(_read_bytes(path), again, name)

    def test_strategy_table(self):
        config = _config(grid={"segmenters": ["e2e"]})
        with tempfile.TemporaryDirectory() as tmp:
            run_experiment(config, tmp)
            with open(os.path.join(tmp, "strategies.csv"), encoding="utf-8") as f:
                self.assertEqual(f.readline().strip(), ",".join(STRATEGY_COLUMNS))
            rows = _read_csv(os.path.join(tmp, "strategies.csv"))
        self.assertEqual([row["strategy"] for row in rows], [s.value for s in Strategy])
        algorithmic = [row["algorithmic_ms"] for row in rows]
        computational = [row["computational_ms"] for row in rows]
        self.assertEqual(algorithmic, ["0", "900", "0", "0"])
        self.assertEqual(computational, ["0", "0", "208", "208"])

    def test_strategy_ordering(self):
        corpus = dict(
            TINY_CORPUS, num_utterances=4, long_form_ms=10000, long_form_floor_ms=8000
        )
        config = parse_config({"corpus": corpus})
        specs = generate_corpus(config.corpus)
        strategies = (
            Strategy.B1_IMMEDIATE,
            Strategy.E1_DUMMY_ZERO,
            Strategy.E2_DUMMY_LAST,
        )
        wers = {
            strategy: simulate_corpus(specs, config.system_for("e2e", strategy))
            .wer_2nd()
            .wer
            for strategy in strategies
        }
        self.assertLessEqual(wers[Strategy.E2_DUMMY_LAST], wers[Strategy.B1_IMMEDIATE])
        self.assertLess(wers[Strategy.E2_DUMMY_LAST], wers[Strategy.E1_DUMMY_ZERO])

    def test_zero_threshold(self):
        config = _config()
        specs = generate_corpus(config.corpus)
        run = simulate_corpus(specs, config.system_for("e2e", eos_threshold=0.0))
        for outcome in run.outcomes:
            self.assertEqual(len(outcome.segments), 1)
            self.assertTrue(outcome.segments[0].is_flush)
            self.assertNotIn(EOS, outcome.marked_transcript())

    def test_marked_transcript(self):
        config = _config()
        spec = generate_corpus(config.corpus)[0]
        outcome = simulate_corpus([spec], config.system_for("fixed-3s")).outcomes[0]
        self.assertIsInstance(outcome, UtteranceOutcome)
        marked = outcome.marked_transcript()
        self.assertEqual(marked.count(EOS), len(outcome.segments) - 1)
        self.assertEqual([tok for tok in marked if tok != EOS], outcome.transcript())

    def test_sweep(self):
        config = _config(
            sweep={
                "eos_thresholds": [2.0, 3.7, 6.0],
                "silence_thresholds_ms": [300, 600, 900],
            },
            corpus=dict(TINY_CORPUS, num_utterances=1),
        )
        with tempfile.TemporaryDirectory() as tmp:
            run_sweep(config, tmp)
            with open(os.path.join(tmp, "sweep.csv"), encoding="utf-8") as f:
                self.assertEqual(f.readline().strip(), ",".join(SWEEP_COLUMNS))
            rows = _read_csv(os.path.join(tmp, "sweep.csv"))
        self.assertEqual(len(rows), 9)
        silence = [row["silence_length_threshold"] for row in rows[:3]]
        thresholds = [row["eos_threshold"] for row in rows[:3]]
        self.assertEqual(silence, ["300"] * 3)
        self.assertEqual(thresholds, ["2.0000", "3.7000", "6.0000"])

    def test_sweep_shape(self):
        config = _config(
            acoustic=QUIET_AGING,
            vad={"filter_enabled": False},
            sweep={
                "eos_thresholds": [6.0, 2.0],
                "silence_thresholds_ms": [300, 600, 900],
            },
        )
        rows = sweep_rows(config, [_sweep_spec(3)])
        best = []
        for t_sil_ms in (300, 600, 900):
            curve = sorted(
                (row["eos_threshold"], row["wer_2nd"], row["sl50"])
                for row in rows
                if row["silence_length_threshold"] == t_sil_ms
            )
            self.assertEqual([point[0] for point in curve], [2.0, 6.0])
            # a higher threshold never gives longer segments
            self.assertGreaterEqual(curve[0][2], curve[1][2])
            best.append(min(curve, key=lambda point: (point[1], point[0]))[0])
        self.assertEqual(best, sorted(best))
        self.assertEqual(best, [2.0, 2.0, 6.0])

    def test_oracle_study(self):
        config = _config(oracle={"max_iterations": 4})
        with tempfile.TemporaryDirectory() as tmp:
            written, flagged = run_oracle_study(config, tmp)
            self.assertIsInstance(flagged, bool)
            self.assertEqual(len(written), 2)
            with open(os.path.join(tmp, "oracle.csv"), encoding="utf-8") as f:
                self.assertEqual(f.readline().strip(), ",".join(ORACLE_COLUMNS))
            rows = _read_csv(os.path.join(tmp, "oracle.csv"))
            with open(os.path.join(tmp, "oracle.json"), encoding="utf-8") as f:
                meta = json.load(f)
        self.assertEqual([row["segmenter"] for row in rows], ["vad", "e2e"])
        self.assertEqual(meta["matched"], not flagged)
        for row in rows:
            for merge in ("standard", "merged"):
                ower, wer = float(row[f"ower_{merge}"]), float(row[f"wer_{merge}"])
                self.assertLessEqual(ower, wer)
            ower_merged = float(row["ower_merged"])
            self.assertLessEqual(ower_merged, float(row["ower_standard"]) + 1e-9)

    def test_report(self):
        config = _config(
            grid={"segmenters": ["vad", "e2e"]}, report={"num_utterances": 1}
        )
        with tempfile.TemporaryDirectory() as tmp:
            written = run_report(config, tmp)
            self.assertEqual(
                sorted(os.path.basename(path) for path in written),
                ["events_e2e.jsonl", "events_vad.jsonl", "report.txt"],
            )
            with open(os.path.join(tmp, "report.txt"), encoding="utf-8") as f:
                text = f.read()
            with open(os.path.join(tmp, "events_e2e.jsonl"), encoding="utf-8") as f:
                header = json.loads(f.readline())
        lines = text.splitlines()
        self.assertTrue(lines[0].startswith("# "))
        self.assertTrue(lines[1].startswith("REF+EOS: "))
        self.assertIn("== e2e: ", text)
        self.assertIn("== vad: ", text)
        self.assertEqual(header, {"schema": "eoscascade.events/1"})


class TestCli(unittest.TestCase):
    TINY = [
        "--set",
        "corpus.num_utterances=1",
        "--set",
        "corpus.long_form_ms=6000",
        "--set",
        "corpus.long_form_floor_ms=5000",
        "--set",
        "grid.segmenters=[e2e]",
    ]

    def _main(self, argv: List[str]) -> int:
        with contextlib.redirect_stdout(io.StringIO()):
            with self.assertLogs("eoscascade", level="ERROR"):
                return main(argv)

    def test_ok(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = io.StringIO()
            with contextlib.redirect_stdout(out):
                argv = ["report", "--out", tmp, "--set", "report.num_utterances=1"]
                code = main(argv + self.TINY)
            self.assertEqual(code, EXIT_OK)
            self.assertEqual(
                out.getvalue().splitlines(),
                [
                    os.path.join(tmp, "report.txt"),
                    os.path.join(tmp, "events_e2e.jsonl"),
                ],
            )

    def test_bad_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            argv = ["sweep", "--out", tmp, "--set", "vad.bogus=1"]
            self.assertEqual(self._main(argv), EXIT_CONFIG)
            missing = os.path.join(tmp, "missing.yaml")
            self.assertEqual(self._main(["sweep", "--config", missing]), EXIT_CONFIG)

    def test_empty_corpus(self):
        with tempfile.TemporaryDirectory() as tmp:
            for key in ("corpus", "sweep", "oracle", "report"):
                argv = ["experiment", "--out", tmp, "--set", f"{key}.num_utterances=0"]
                self.assertEqual(self._main(argv), EXIT_CONFIG)
            self.assertEqual(os.listdir(tmp), [])

    def test_undefined_result(self):
        error = UndefinedRateError("WER of an empty reference")
        with mock.patch("eoscascade.cli.run_sweep", side_effect=error):
            self.assertEqual(self._main(["sweep"]), EXIT_CONFIG)

    def test_unwritable(self):
        with tempfile.TemporaryDirectory() as tmp:
            blocker = os.path.join(tmp, "file")
            with open(blocker, "w", encoding="utf-8") as f:
                f.write("x")
            argv = ["experiment", "--out", blocker] + self.TINY
            self.assertEqual(self._main(argv), EXIT_IO)


if __name__ == "__main__":
    unittest.main()
