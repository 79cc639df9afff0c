#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+
#
# pylint: disable=too-few-public-methods,too-many-instance-attributes

import copy
import dataclasses
import enum
import logging

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Type, TypeVar

import yaml

from eoscascade.acoustics import AcousticConfig
from eoscascade.corpus import AnnotationConfig, CorpusConfig
from eoscascade.decoder import BeamConfig, PathMerge
from eoscascade.errors import ConfigurationError
from eoscascade.pipeline import PipelineConfig, Strategy, SystemConfig, parse_segmenter
from eoscascade.vad import VadConfig

logger = logging.getLogger(__name__)

C = TypeVar("C")

SECTIONS = (
    "corpus",
    "acoustic",
    "vad",
    "annotation",
    "beam_first",
    "beam_second",
    "pipeline",
    "grid",
    "sweep",
    "oracle",
    "report",
    "seed",
    "output_dir",
)


@dataclass(frozen=True)
class GridConfig:
    segmenters: Tuple[str, ...] = ("fixed-3s", "fixed-5s", "fixed-10s", "vad", "e2e")
    strategies: Tuple[Strategy, ...] = tuple(Strategy)
    table_strategy: Strategy = Strategy.E2_DUMMY_LAST


@dataclass(frozen=True)
class SweepConfig:
    eos_thresholds: Tuple[float, ...] = (2.0, 3.0, 3.7, 4.5, 6.0)
    silence_thresholds_ms: Tuple[int, ...] = (300, 600, 900)
    num_utterances: Optional[int] = None


@dataclass(frozen=True)
class OracleConfig:
    sl50_tolerance: float = 0.1
    threshold_low: float = 1.0
    threshold_high: float = 12.0
    max_iterations: int = 16
    num_utterances: Optional[int] = None


@dataclass(frozen=True)
class ReportConfig:
    num_utterances: int = 3
    width: int = 12
    latency_bin_ms: int = 60
    length_bin_ms: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:

    """Everything one invocation of the experiment runner needs"""

    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    system: SystemConfig = field(default_factory=SystemConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    seed: int = 17
    output_dir: str = "out"
    raw: Dict[str, Any] = field(default_factory=dict, compare=False)

    def validate(self) -> None:
        """Check every section and the grids.

        Raises:
            ConfigurationError: A section is invalid, a grid is empty or a
                study has no utterances.
        """
        self.corpus.validate()
        self.system.validate()
        if self.corpus.num_utterances < 1:
            raise ConfigurationError("corpus needs at least one utterance")
        for name in ("sweep", "oracle", "report"):
            limit = getattr(self, name).num_utterances
            if limit is not None and limit < 1:
                raise ConfigurationError(f"{name} needs at least one utterance")
        if not self.grid.segmenters or not self.grid.strategies:
            raise ConfigurationError("segmenter and strategy grids must not be empty")
        for name in self.grid.segmenters:
            parse_segmenter(name)
        if not self.sweep.eos_thresholds or not self.sweep.silence_thresholds_ms:
            raise ConfigurationError("sweep grids must not be empty")
        if min(self.sweep.silence_thresholds_ms) <= 0:
            raise ConfigurationError("sweep silence thresholds must be positive")
        if not 0 < self.oracle.sl50_tolerance < 1:
            raise ConfigurationError("oracle sl50_tolerance must be in (0,1)")
        if not 0 < self.oracle.threshold_low < self.oracle.threshold_high:
            raise ConfigurationError("oracle needs 0 < threshold_low < threshold_high")
        if self.report.latency_bin_ms <= 0 or self.report.length_bin_ms <= 0:
            raise ConfigurationError("histogram bins must be positive")

    def system_for(
        self,
        segmenter: str,
        strategy: Optional[Strategy] = None,
        eos_threshold: Optional[float] = None,
        t_sil_ms: Optional[int] = None,
        path_merge: Optional[PathMerge] = None,
    ) -> SystemConfig:
        """Derive the SystemConfig of one grid cell"""
        kind, fixed_len_ms = parse_segmenter(segmenter)
        system = self.system
        pipeline = dataclasses.replace(
            system.pipeline,
            segmenter=kind,
            fixed_len_ms=fixed_len_ms or system.pipeline.fixed_len_ms,
            strategy=strategy or self.grid.table_strategy,
        )
        beam_first, beam_second = system.beam_first, system.beam_second
        if eos_threshold is not None:
            beam_first = dataclasses.replace(beam_first, eos_threshold=eos_threshold)
        if path_merge is not None:
            beam_first = dataclasses.replace(beam_first, path_merge=path_merge)
            beam_second = dataclasses.replace(beam_second, path_merge=path_merge)
        annotation = system.annotation
        if t_sil_ms is not None:
            annotation = AnnotationConfig(t_sil_ms=t_sil_ms)
        return dataclasses.replace(
            system,
            pipeline=pipeline,
            beam_first=beam_first,
            beam_second=beam_second,
            annotation=annotation,
        )


def _convert(default: Any, value: Any) -> Any:
    if isinstance(default, enum.Enum):
        return type(default)(value)
    if isinstance(default, tuple):
        if isinstance(value, str):
            raise TypeError(f"expected a list, got {value!r}")
        if default and isinstance(default[0], enum.Enum):
            return tuple(type(default[0])(item) for item in value)
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"expected true or false, got {value!r}")
        return value
    if isinstance(default, float) and isinstance(value, int):
        return float(value)
    if isinstance(value, list):
        return tuple(value)
    return value


def _build(
    cls: Type[C], section: str, mapping: Optional[Dict[str, Any]], **defaults: Any
) -> C:
    """Create a config dataclass from a YAML mapping, rejecting unknown keys"""
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"section {section} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}  # type: ignore
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown keys in {section}: {', '.join(unknown)}")
    template = cls(**defaults)  # type: ignore
    kwargs = dict(defaults)
    for key, value in mapping.items():
        try:
            kwargs[key] = _convert(getattr(template, key), value)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"invalid {section}.{key}: {e}") from e
    try:
        return cls(**kwargs)  # type: ignore
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid section {section}: {e}") from e


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply ``key.sub=value`` overrides to a raw configuration mapping.

    Values are parsed as YAML scalars, so ``3.7``, ``true`` and ``[vad, e2e]``
    keep their types. The input mapping is not modified.

    Raises:
        ConfigurationError: An override is malformed.
    """
    raw = copy.deepcopy(raw)
    for override in overrides:
        key, sep, text = override.partition("=")
        parts = key.strip().split(".")
        if not sep or not all(parts):
            raise ConfigurationError(f"override {override!r} is not key.sub=value")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"override {override!r}: {e}") from e
        node = raw
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(
                    f"override {override!r}: {part} is not a section"
                )
            node = child
        node[parts[-1]] = value
    return raw


def parse_config(raw: Dict[str, Any], seed: Optional[int] = None) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a raw mapping.

    The top-level seed, or ``seed`` when given, seeds the corpus and the
    acoustic model unless those sections set their own. Frame length and
    right context default to the pipeline's values.

    Raises:
        ConfigurationError: Unknown keys, bad values or inconsistent sections.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a mapping")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
    if seed is None:
        seed = raw.get("seed", ExperimentConfig.seed)
    if not isinstance(seed, int):
        raise ConfigurationError(f"seed must be an integer, got {seed!r}")

    pipeline = _build(PipelineConfig, "pipeline", raw.get("pipeline"))
    frame_ms = pipeline.frame_ms
    system = SystemConfig(
        acoustic=_build(
            AcousticConfig,
            "acoustic",
            raw.get("acoustic"),
            seed=seed,
            frame_ms=frame_ms,
            right_context_frames=pipeline.lag_ms // frame_ms,
        ),
        vad=_build(VadConfig, "vad", raw.get("vad"), frame_ms=frame_ms),
        annotation=_build(AnnotationConfig, "annotation", raw.get("annotation")),
        beam_first=_build(BeamConfig, "beam_first", raw.get("beam_first")),
        beam_second=_build(
            BeamConfig, "beam_second", raw.get("beam_second"), beam_size=8
        ),
        pipeline=pipeline,
    )
    config = ExperimentConfig(
        corpus=_build(CorpusConfig, "corpus", raw.get("corpus"), seed=seed),
        system=system,
        grid=_build(GridConfig, "grid", raw.get("grid")),
        sweep=_build(SweepConfig, "sweep", raw.get("sweep")),
        oracle=_build(OracleConfig, "oracle", raw.get("oracle")),
        report=_build(ReportConfig, "report", raw.get("report")),
        seed=seed,
        output_dir=str(raw.get("output_dir", ExperimentConfig.output_dir)),
        raw=raw,
    )
    config.validate()
    return config


def load_config(
    path: Optional[str], overrides: Sequence[str] = (), seed: Optional[int] = None
) -> ExperimentConfig:
    """Read a YAML configuration file, apply overrides and validate it.

    Args:
        path: YAML file, or None for the built-in defaults.
        overrides: ``key.sub=value`` strings.
        seed: Replaces the top-level seed when given.
    Returns:
        An ExperimentConfig.
    Raises:
        ConfigurationError: The file cannot be read or parsed, or is invalid.
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                raw = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigurationError(f"cannot read {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigurationError(f"cannot parse {path}: {e}") from e
    raw = apply_overrides(raw, overrides)
    config = parse_config(raw, seed=seed)
    logger.debug("loaded configuration from %s", path or "defaults")
    return config
