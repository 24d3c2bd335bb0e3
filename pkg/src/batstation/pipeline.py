"""End-to-end sensing front end: separation, reshape, correlation, decision."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .grid import ResourceGrid
from .phy import UplinkAllocation
from .reshape import PooledGrid, ReshapeConfig, reshape_all
from .sensing import Correlator, CorrelationOutput, SensingReport, TemplateSet, TrainingItem, decide
from .separation import separate


def front_end(y_raw: ResourceGrid, alloc: UplinkAllocation, dmrs_seed: int,
              reshape: ReshapeConfig) -> dict[int, PooledGrid]:
    """Residual after 5G cancellation, reshaped and pooled for every radar type."""
    residual, _ = separate(y_raw, alloc, dmrs_seed)
    return reshape_all(residual, reshape)


def training_item(sample, reshape: ReshapeConfig) -> TrainingItem:
    pooled = front_end(sample.grid, sample.allocation, sample.dmrs_seed, reshape)
    return TrainingItem({r: p.amp for r, p in pooled.items()}, int(sample.labels.type_id))


@dataclass
class StageTimes:
    separation: float
    reshape: float
    correlation: float

    @property
    def total(self) -> float:
        return self.separation + self.reshape + self.correlation


class Sensor:
    """Stateful detector holding templates, their cached spectra and a threshold."""

    def __init__(self, templates: TemplateSet, threshold: float = np.inf):
        self.templates = templates
        self.threshold = float(threshold)
        self.correlator = Correlator(templates)

    @property
    def reshape(self) -> ReshapeConfig:
        return self.templates.reshape

    def correlate(self, y_raw: ResourceGrid, alloc: UplinkAllocation, dmrs_seed: int) -> CorrelationOutput:
        return self.correlator(front_end(y_raw, alloc, dmrs_seed, self.reshape))

    def sense(self, y_raw: ResourceGrid, alloc: UplinkAllocation, dmrs_seed: int) -> SensingReport:
        return decide(self.correlate(y_raw, alloc, dmrs_seed), self.threshold, self.reshape)

    def timed(self, y_raw: ResourceGrid, alloc: UplinkAllocation, dmrs_seed: int):
        """``(SensingReport, StageTimes)`` with wall-clock seconds per stage."""
        t0 = time.perf_counter()
        residual, _ = separate(y_raw, alloc, dmrs_seed)
        t1 = time.perf_counter()
        pooled = reshape_all(residual, self.reshape)
        t2 = time.perf_counter()
        corr = self.correlator(pooled)
        report = decide(corr, self.threshold, self.reshape)
        t3 = time.perf_counter()
        return report, StageTimes(t1 - t0, t2 - t1, t3 - t2)
