#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods,too-many-locals

import logging

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from eoscascade.config import ExperimentConfig
from eoscascade.corpus import (
    AnnotatedTranscript,
    UtteranceSpec,
    annotate_eos,
    dumps_corpus,
    generate_corpus,
)
from eoscascade.decoder import PathMerge
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
    SegmentResult,
    SegmenterKind,
    Strategy,
    SystemConfig,
    TimelineEvent,
    dumps_events,
    run_utterance,
    strategy_latency,
)
from eoscascade.utils import EOS, SCHEMA_CSV
from eoscascade.writer import ReportWriter

logger = logging.getLogger(__name__)

STRATEGY_COLUMNS = [
    "strategy",
    "segmenter",
    "wer_2nd",
    "algorithmic_ms",
    "computational_ms",
]
HISTOGRAM_COLUMNS = ["segmenter", "low_ms", "high_ms", "count"]
SWEEP_COLUMNS = ["eos_threshold", "silence_length_threshold", "wer_2nd", "sl50"]
ORACLE_COLUMNS = [
    "segmenter",
    "sl50",
    "wer_standard",
    "ower_standard",
    "wer_merged",
    "ower_merged",
]


@dataclass
class UtteranceOutcome:
    spec: UtteranceSpec
    annotated: AnnotatedTranscript
    segments: List[SegmentResult]
    events: List[TimelineEvent] = field(default_factory=list)

    def transcript(self, second_pass: bool = True) -> List[str]:
        tokens: List[str] = []
        for seg in self.segments:
            tokens.extend(seg.transcript_2nd if second_pass else seg.transcript_1st)
        return tokens

    def marked_transcript(self) -> List[str]:
        """2nd-pass words with an EOS marker after every segment the segmenter closed"""
        tokens: List[str] = []
        for seg in self.segments:
            tokens.extend(seg.transcript_2nd)
            if not seg.is_flush:
                tokens.append(EOS)
        return tokens


def _score(ref: Sequence[str], hyp: Sequence[str]) -> WerBreakdown:
    if not ref:
        return WerBreakdown(insertions=len(hyp))
    return wer(ref, hyp)


@dataclass
class CorpusRun:

    """Simulated segments of a whole corpus under one SystemConfig"""

    label: str
    system: SystemConfig
    outcomes: List[UtteranceOutcome] = field(default_factory=list)

    def wer_1st(self) -> WerBreakdown:
        total = WerBreakdown()
        for outcome in self.outcomes:
            total += _score(outcome.spec.texts, outcome.transcript(second_pass=False))
        return total

    def wer_2nd(self) -> WerBreakdown:
        total = WerBreakdown()
        for outcome in self.outcomes:
            total += _score(outcome.spec.texts, outcome.transcript())
        return total

    def ower(self) -> WerBreakdown:
        total = WerBreakdown()
        for outcome in self.outcomes:
            if not outcome.spec.words:
                continue
            lattices = [seg.lattice_2nd for seg in outcome.segments]
            total += oracle_wer(lattices, outcome.spec.texts)
        return total

    def lengths(self) -> List[int]:
        return [
            length
            for outcome in self.outcomes
            for length in segment_lengths(outcome.segments)
        ]

    def latencies(self, mode: LatencyMode) -> List[int]:
        return [
            latency
            for outcome in self.outcomes
            for latency in eos_latency(outcome.segments, outcome.spec, mode)
        ]

    def excluded_eos(self) -> int:
        return sum(
            count_excluded_eos(outcome.segments, outcome.spec)
            for outcome in self.outcomes
        )

    def fallbacks(self) -> int:
        return sum(
            seg.fallback for outcome in self.outcomes for seg in outcome.segments
        )

    def sl50_s(self) -> float:
        """Median segment length in seconds.

        Raises:
            ContractError: The run has no segments.
        """
        return percentile(self.lengths(), 0.5) / 1000


def simulate_corpus(
    specs: Sequence[UtteranceSpec],
    system: SystemConfig,
    label: str = "",
    second_pass: bool = True,
) -> CorpusRun:
    """Run every utterance through the pipeline, in corpus order"""
    run = CorpusRun(label or system.pipeline.segmenter_label, system)
    for spec in specs:
        annotation = system.annotation
        annotated = annotate_eos(spec, annotation.t_sil_ms, annotation.hesitation_ms)
        segments, events = run_utterance(
            spec, system, annotated, second_pass=second_pass
        )
        run.outcomes.append(UtteranceOutcome(spec, annotated, segments, events))
    logger.info(
        "simulated %s/%s on %i utterances",
        run.label,
        system.pipeline.strategy.value,
        len(run.outcomes),
    )
    return run


def _report_row(run: CorpusRun) -> ReportRow:
    lengths = run.lengths()
    latency = LatencyStats()
    if run.system.pipeline.segmenter != SegmenterKind.FIXED:
        latency = LatencyStats.from_values(run.latencies(LatencyMode.LAST_ONLY))
    return ReportRow(
        segmenter=run.label,
        sl50_s=percentile(lengths, 0.5) / 1000,
        sl90_s=percentile(lengths, 0.9) / 1000,
        eos50_ms=latency.p50,
        eos90_ms=latency.p90,
        wer_2nd=run.wer_2nd().wer,
        wer_1st=run.wer_1st().wer,
        ower=run.ower().wer,
    )


def _histogram_rows(
    segmenter: str, values: Sequence[float], bin_ms: int
) -> List[Dict[str, object]]:
    return [
        {
            "segmenter": segmenter,
            "low_ms": int(low),
            "high_ms": int(high),
            "count": count,
        }
        for low, high, count in histogram(values, bin_ms)
    ]


def _subset(specs: List[UtteranceSpec], limit: Optional[int]) -> List[UtteranceSpec]:
    return specs if limit is None else specs[:limit]


def run_experiment(
    config: ExperimentConfig, out_dir: Optional[str] = None
) -> List[str]:
    """Simulate the segmenter x strategy grid on the generated corpus.

    Writes one segmenter table per strategy, the strategy latency table, the
    EOS latency and segment length histograms, and ``report.json``.

    Returns:
        The paths written.
    Raises:
        OSError: The output directory is not writable.
    """
    writer = ReportWriter(out_dir or config.output_dir)
    specs = generate_corpus(config.corpus)
    writer.write_text("corpus.jsonl", dumps_corpus(specs))
    strategy_rows: List[Dict[str, object]] = []
    latency_hist: List[Dict[str, object]] = []
    length_hist: List[Dict[str, object]] = []
    meta_runs: Dict[str, Dict[str, object]] = {}
    for idx, strategy in enumerate(config.grid.strategies):
        report = RunReport()
        for segmenter in config.grid.segmenters:
            system = config.system_for(segmenter, strategy)
            run = simulate_corpus(specs, system, segmenter)
            row = _report_row(run)
            report.rows.append(row)
            _, algorithmic_ms, computational_ms = strategy_latency(
                strategy, system.pipeline
            )
            strategy_rows.append(
                {
                    "strategy": strategy.value,
                    "segmenter": segmenter,
                    "wer_2nd": row.wer_2nd,
                    "algorithmic_ms": algorithmic_ms,
                    "computational_ms": computational_ms,
                }
            )
            meta_runs[f"{strategy.value}/{segmenter}"] = {
                "excluded_eos": run.excluded_eos(),
                "fallbacks": run.fallbacks(),
                "segments": len(run.lengths()),
            }
            # segmentation does not depend on the strategy
            if idx:
                continue
            length_hist.extend(
                _histogram_rows(segmenter, run.lengths(), config.report.length_bin_ms)
            )
            if run.system.pipeline.segmenter == SegmenterKind.FIXED:
                continue
            latencies = run.latencies(LatencyMode.ALL)
            latency_hist.extend(
                _histogram_rows(segmenter, latencies, config.report.latency_bin_ms)
            )
        writer.write_text(f"segmenters_{strategy.value}.csv", report.to_csv())
    writer.write_csv("strategies.csv", STRATEGY_COLUMNS, strategy_rows)
    writer.write_csv("eos_latency_hist.csv", HISTOGRAM_COLUMNS, latency_hist)
    writer.write_csv("segment_length_hist.csv", HISTOGRAM_COLUMNS, length_hist)
    writer.write_json(
        "report.json",
        {
            "schema": SCHEMA_CSV,
            "seed": config.seed,
            "utterances": len(specs),
            "config": config.raw,
            "columns": {
                "segmenters": REPORT_COLUMNS,
                "strategies": STRATEGY_COLUMNS,
                "histograms": HISTOGRAM_COLUMNS,
            },
            "runs": meta_runs,
        },
    )
    return writer.written


def sweep_rows(
    config: ExperimentConfig, specs: Optional[Sequence[UtteranceSpec]] = None
) -> List[Dict[str, object]]:
    """WER and SL50 of the E2E segmenter over the threshold grids.

    The utterances default to the configured corpus, cut to
    ``sweep.num_utterances``.
    """
    if specs is None:
        specs = _subset(generate_corpus(config.corpus), config.sweep.num_utterances)
    rows: List[Dict[str, object]] = []
    for t_sil_ms in config.sweep.silence_thresholds_ms:
        for threshold in config.sweep.eos_thresholds:
            system = config.system_for(
                "e2e", eos_threshold=threshold, t_sil_ms=t_sil_ms
            )
            run = simulate_corpus(specs, system, f"e2e@{threshold}/{t_sil_ms}")
            rows.append(
                {
                    "eos_threshold": float(threshold),
                    "silence_length_threshold": t_sil_ms,
                    "wer_2nd": run.wer_2nd().wer,
                    "sl50": run.sl50_s(),
                }
            )
    return rows


def run_sweep(config: ExperimentConfig, out_dir: Optional[str] = None) -> List[str]:
    """Write ``sweep.csv``, one row per (silence threshold, EOS threshold) point"""
    writer = ReportWriter(out_dir or config.output_dir)
    writer.write_csv("sweep.csv", SWEEP_COLUMNS, sweep_rows(config))
    return writer.written


@dataclass
class ThresholdMatch:
    target_sl50_s: float
    threshold: float
    sl50_s: float
    iterations: int
    matched: bool


def match_sl50(
    config: ExperimentConfig, specs: Sequence[UtteranceSpec]
) -> ThresholdMatch:
    """Bisect the E2E EOS threshold until its SL50 is close to the VAD's.

    Only the causal pass runs. SL50 shrinks as the threshold grows, so the
    search keeps the threshold bracketing the VAD SL50 and remembers the
    closest point seen.
    """
    vad = simulate_corpus(specs, config.system_for("vad"), "vad", second_pass=False)
    target = vad.sl50_s()
    tolerance = config.oracle.sl50_tolerance * target

    def measure(threshold: float) -> float:
        system = config.system_for("e2e", eos_threshold=threshold)
        return simulate_corpus(specs, system, "e2e", second_pass=False).sl50_s()

    low, high = config.oracle.threshold_low, config.oracle.threshold_high
    points: List[Tuple[float, float]] = [(low, measure(low)), (high, measure(high))]
    iterations = 0
    bracketed = points[1][1] <= target <= points[0][1]
    while bracketed and iterations < config.oracle.max_iterations:
        if min(abs(sl50 - target) for _, sl50 in points) <= tolerance:
            break
        mid = (low + high) / 2
        sl50 = measure(mid)
        points.append((mid, sl50))
        iterations += 1
        if sl50 > target:
            low = mid
        else:
            high = mid
    threshold, sl50 = min(points, key=lambda point: (abs(point[1] - target), point[0]))
    matched = abs(sl50 - target) <= tolerance
    match = ThresholdMatch(target, threshold, sl50, iterations, matched)
    if not match.matched:
        logger.warning(
            "E2E SL50 %.2f s at threshold %.3f misses VAD SL50 %.2f s by over %.0f%%",
            sl50,
            threshold,
            target,
            100 * config.oracle.sl50_tolerance,
        )
    return match


def run_oracle_study(
    config: ExperimentConfig, out_dir: Optional[str] = None
) -> Tuple[List[str], bool]:
    """Compare WER and oracle WER with and without path merging.

    The E2E threshold is first matched to the VAD SL50. Each of the two
    segmenters is then run with standard and bigram-merged beam search.

    Returns:
        The paths written, and True when the SL50 matching failed.
    """
    writer = ReportWriter(out_dir or config.output_dir)
    specs = _subset(generate_corpus(config.corpus), config.oracle.num_utterances)
    match = match_sl50(config, specs)
    rows: List[Dict[str, object]] = []
    for segmenter, threshold in (("vad", None), ("e2e", match.threshold)):
        runs = {
            merge: simulate_corpus(
                specs,
                config.system_for(segmenter, eos_threshold=threshold, path_merge=merge),
                f"{segmenter}/{merge.value}",
            )
            for merge in (PathMerge.NONE, PathMerge.BIGRAM)
        }
        rows.append(
            {
                "segmenter": segmenter,
                "sl50": runs[PathMerge.NONE].sl50_s(),
                "wer_standard": runs[PathMerge.NONE].wer_2nd().wer,
                "ower_standard": runs[PathMerge.NONE].ower().wer,
                "wer_merged": runs[PathMerge.BIGRAM].wer_2nd().wer,
                "ower_merged": runs[PathMerge.BIGRAM].ower().wer,
            }
        )
    writer.write_csv("oracle.csv", ORACLE_COLUMNS, rows)
    writer.write_json(
        "oracle.json",
        {
            "schema": SCHEMA_CSV,
            "target_sl50_s": match.target_sl50_s,
            "e2e_threshold": match.threshold,
            "e2e_sl50_s": match.sl50_s,
            "iterations": match.iterations,
            "tolerance": config.oracle.sl50_tolerance,
            "matched": match.matched,
        },
    )
    return writer.written, not match.matched


def run_report(config: ExperimentConfig, out_dir: Optional[str] = None) -> List[str]:
    """Write diff reports of the first utterances across the segmenter grid.

    ``report.txt`` holds one diff block per utterance; ``events_<segmenter>.jsonl``
    holds the event log of the first utterance under each segmenter.
    """
    writer = ReportWriter(out_dir or config.output_dir)
    corpus = replace(config.corpus, num_utterances=config.report.num_utterances)
    specs = generate_corpus(corpus)
    runs = {
        segmenter: simulate_corpus(specs, config.system_for(segmenter), segmenter)
        for segmenter in config.grid.segmenters
    }
    lines: List[str] = []
    for idx, spec in enumerate(specs):
        annotated = runs[config.grid.segmenters[0]].outcomes[idx].annotated
        lines.append(f"# {spec.id} ({len(spec.words)} words, {spec.total_ms} ms)")
        lines.append("REF+EOS: " + " ".join(annotated.tokens))
        transcripts = {
            name: run.outcomes[idx].marked_transcript() for name, run in runs.items()
        }
        lines.append(diff_report(spec.texts, transcripts, config.report.width))
    writer.write_text("report.txt", "\n".join(lines) + "\n")
    for name, run in runs.items():
        if run.outcomes:
            events = dumps_events(run.outcomes[0].events)
            writer.write_text(f"events_{name}.jsonl", events)
    return writer.written
