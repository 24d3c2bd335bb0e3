"""Metrics, SNR sweeps and efficiency accounting.

Per-sample results are merged by sample index, never by completion order,
so every CSV written here is a pure function of the dataset, the templates
and the threshold, whatever the thread count.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import Sample, SyntheticConfig, generate_samples
from .errors import ConfigError, DataError
from .pipeline import Sensor, front_end
from .radar import TYPE_NAMES, RadarPulse
from .sensing import Correlator, TemplateSet, decide

FREQ_NORM_HZ = 100e6
TIME_NORM_S = 0.5e-3

SAMPLE_COLUMNS = ("index", "true_detected", "true_type", "snr_db", "pred_detected", "pred_type", "likelihood",
                  "freq_err_norm", "time_err_norm")
SUMMARY_COLUMNS = ("type_id", "type_name", "samples", "detected", "detection_prob", "correct_type",
                   "classification_acc", "median_freq_err_norm", "median_time_err_norm")


@dataclass(frozen=True)
class SampleResult:
    index: int
    true_type: int  # 0 = no radar
    snr_db: float | None
    likelihood: float
    pred_type: int  # argmax type, kept even below threshold
    freq_hz: float
    time_s: float
    true_freq_hz: float | None
    true_time_s: float | None

    def detected(self, y_th: float) -> bool:
        return self.likelihood >= y_th


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass
class EvalRun:
    """Results of running the sensing pipeline over a labelled split."""

    results: list
    y_th: float
    dataset_ref: str = ""
    templates_ref: str = ""
    type_ids: tuple = (1, 2, 3, 4, 5)

    def _radar(self, r: int | None = None):
        return [s for s in self.results if s.true_type > 0 and (r is None or s.true_type == r)]

    def _detected(self, r: int | None = None):
        return [s for s in self._radar(r) if s.detected(self.y_th)]

    @property
    def detection_probability(self) -> dict:
        return {r: _ratio(len(self._detected(r)), len(self._radar(r))) for r in self.type_ids}

    @property
    def aggregate_detection(self) -> float:
        return _ratio(len(self._detected()), len(self._radar()))

    @property
    def false_alarm_rate(self) -> float:
        nulls = [s for s in self.results if s.true_type == 0]
        return _ratio(sum(s.detected(self.y_th) for s in nulls), len(nulls))

    @property
    def confusion(self) -> np.ndarray:
        """Rows: true type, columns: predicted type, over detected radar samples."""
        k = len(self.type_ids)
        pos = {r: i for i, r in enumerate(self.type_ids)}
        cm = np.zeros((k, k), dtype=np.int64)
        for s in self._detected():
            cm[pos[s.true_type], pos[s.pred_type]] += 1
        return cm

    @property
    def accuracy(self) -> float:
        cm = self.confusion
        return _ratio(int(np.trace(cm)), int(cm.sum()))

    def localization_errors(self, r: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Normalised ``(freq, time)`` errors of detected radar samples."""
        det = self._detected(r)
        f = np.array([abs(s.freq_hz - s.true_freq_hz) / FREQ_NORM_HZ for s in det])
        t = np.array([abs(s.time_s - s.true_time_s) / TIME_NORM_S for s in det])
        return f, t

    def by_snr(self) -> dict:
        snrs = sorted({s.snr_db for s in self.results if s.snr_db is not None})
        nulls = [s for s in self.results if s.true_type == 0]
        return {snr: EvalRun([s for s in self.results if s.snr_db == snr] + nulls, self.y_th, self.dataset_ref,
                             self.templates_ref, self.type_ids) for snr in snrs}

    def summary_rows(self) -> list[dict]:
        rows = []
        for r in self.type_ids:
            radar = self._radar(r)
            det = self._detected(r)
            f, t = self.localization_errors(r)
            rows.append({"type_id": r, "type_name": TYPE_NAMES.get(r, str(r)), "samples": len(radar),
                         "detected": len(det), "detection_prob": _ratio(len(det), len(radar)),
                         "correct_type": sum(s.pred_type == r for s in det),
                         "classification_acc": _ratio(sum(s.pred_type == r for s in det), len(det)),
                         "median_freq_err_norm": float(np.median(f)) if f.size else float("nan"),
                         "median_time_err_norm": float(np.median(t)) if t.size else float("nan")})
        nulls = [s for s in self.results if s.true_type == 0]
        rows.append({"type_id": 0, "type_name": "none", "samples": len(nulls),
                     "detected": sum(s.detected(self.y_th) for s in nulls), "detection_prob": self.false_alarm_rate,
                     "correct_type": "", "classification_acc": "", "median_freq_err_norm": "",
                     "median_time_err_norm": ""})
        return rows

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for s in sorted(self.results, key=lambda s: s.index):
            det = s.detected(self.y_th)
            fe = abs(s.freq_hz - s.true_freq_hz) / FREQ_NORM_HZ if det and s.true_type else None
            te = abs(s.time_s - s.true_time_s) / TIME_NORM_S if det and s.true_type else None
            w.writerow([s.index, int(s.true_type > 0), s.true_type, _fmt(s.snr_db), int(det),
                        s.pred_type if det else 0, _fmt(s.likelihood), _fmt(fe), _fmt(te)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("# y_th", _fmt(self.y_th), "dataset", self.dataset_ref, "templates", self.templates_ref))
        w.writerow(SUMMARY_COLUMNS)
        for row in self.summary_rows():
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
        return buf.getvalue()


def _ratio(a: int, b: int) -> float:
    return a / b if b else float("nan")


def score_sample(sample: Sample, correlator: Correlator, templates: TemplateSet) -> SampleResult:
    pooled = front_end(sample.grid, sample.allocation, sample.dmrs_seed, templates.reshape)
    corr = correlator(pooled)
    rep = decide(corr, -np.inf, templates.reshape)
    lab = sample.labels
    return SampleResult(sample.index, int(lab.type_id or 0) if lab.detected else 0, lab.snr_db, corr.y_star,
                        corr.r_star, rep.freq_hz, rep.time_s, lab.freq_hz, lab.time_s)


def score_samples(samples: Iterable[Sample], templates: TemplateSet, threads: int = 1) -> list[SampleResult]:
    """Pipeline output for every sample, returned in sample-index order."""
    correlator = Correlator(templates)
    samples = list(samples)
    if samples:
        correlator(front_end(samples[0].grid, samples[0].allocation, samples[0].dmrs_seed, templates.reshape))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(lambda s: score_sample(s, correlator, templates), samples))
    else:
        out = [score_sample(s, correlator, templates) for s in samples]
    return sorted(out, key=lambda r: r.index)


def evaluate(samples: Iterable[Sample], templates: TemplateSet, y_th: float, threads: int = 1,
             dataset_ref: str = "", templates_ref: str = "") -> EvalRun:
    """Detection, false alarm, confusion and localisation over a labelled split."""
    samples = list(samples)
    for s in samples:
        if s.grid.config != templates.reshape.numerology:
            raise DataError("dataset numerology does not match the template reshape binding")
    return EvalRun(score_samples(samples, templates, threads), float(y_th), dataset_ref, templates_ref,
                   templates.type_ids)


SWEEP_COLUMNS = ("snr_db", "type_id", "type_name", "samples", "detection_prob", "classification_acc",
                 "median_freq_err_norm", "median_time_err_norm", "false_alarm_rate")


def sweep_snr(config: SyntheticConfig, pulses: Sequence[RadarPulse], templates: TemplateSet, y_th: float,
              snr_list: Sequence[float], per_type: int, nulls: int, seed: int = 0, threads: int = 1):
    """Evaluate a fresh synthetic split per SNR point; returns ``({snr: EvalRun}, csv_text)``."""
    if not snr_list:
        raise ConfigError("snr_list must not be empty")
    runs = {}
    for i, snr in enumerate(snr_list):
        counts = {0: nulls, **{r: per_type for r in templates.type_ids}}
        samples = generate_samples(config.with_snr(snr), counts, seed + i, pulses, threads)
        runs[float(snr)] = evaluate(samples, templates, y_th, threads, dataset_ref=f"synthetic:seed={seed + i}")
    return runs, sweep_csv(runs)


def sweep_csv(runs: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for snr in sorted(runs):
        run = runs[snr]
        for row in run.summary_rows():
            if row["type_id"] == 0:
                continue
            w.writerow([_fmt(float(snr)), row["type_id"], row["type_name"], row["samples"],
                        _fmt(row["detection_prob"]), _fmt(row["classification_acc"]),
                        _fmt(row["median_freq_err_norm"]), _fmt(row["median_time_err_norm"]),
                        _fmt(run.false_alarm_rate)])
    return buf.getvalue()


# -- efficiency ------------------------------------------------------------------

def fft_macs(length: int) -> int:
    """Real MACs of one ``length``-point FFT: ``(L/2) log2 L`` butterflies, 4 real MACs each."""
    return int(round(4 * (length / 2) * math.log2(length))) if length > 1 else 0


def macs_per_slot(templates: TemplateSet) -> dict:
    """Analytic multiply-accumulates per slot, split into reshape and correlation."""
    rs = templates.reshape
    num = rs.numerology
    n, m, a = num.active_subcarriers, num.symbols_per_slot, rs.alpha
    reshape = m * fft_macs(n) + a * m * fft_macs(n // a)
    corr = {}
    for r in templates.type_ids:
        rows, cols = rs.pooled_shape(r)
        corr[r] = int(templates[r].weights.size * rows * cols)
    return {"reshape": reshape, "correlation": corr, "total": reshape + sum(corr.values())}


@dataclass
class EfficiencyReport:
    parameter_count: int
    macs_per_slot: int
    macs_breakdown: dict
    latency_ms: dict = field(default_factory=dict)
    backend: str = ""

    def to_dict(self) -> dict:
        return {"parameter_count": self.parameter_count, "macs_per_slot": self.macs_per_slot,
                "macs_breakdown": {"reshape": self.macs_breakdown["reshape"],
                                   "correlation": {str(k): v for k, v in self.macs_breakdown["correlation"].items()}},
                "mac_convention": "complex MAC = 4 real MACs; L-point FFT = (L/2)log2(L) complex butterflies",
                "latency_ms": self.latency_ms, "backend": self.backend}


def _quartiles(x) -> dict:
    q1, med, q3 = np.percentile(np.asarray(x) * 1e3, [25, 50, 75])
    return {"p25": float(q1), "median": float(med), "p75": float(q3)}


def count_efficiency(templates: TemplateSet, samples: Sequence[Sample] | None = None, slots: int = 100,
                     warmup: int = 5, seed: int = 0) -> EfficiencyReport:
    """Parameter and MAC counts plus wall-clock latency per stage over ``slots`` slots."""
    from . import _kernels

    macs = macs_per_slot(templates)
    report = EfficiencyReport(templates.parameter_count, macs["total"], macs, backend=_kernels.BACKEND)
    if slots <= 0:
        return report
    if samples is None:
        samples = generate_samples(SyntheticConfig(numerology=templates.reshape.numerology), {0: slots}, seed)
    samples = list(samples)
    if not samples:
        raise ConfigError("no slots to benchmark")
    sensor = Sensor(templates, np.inf)
    for s in samples[:warmup]:
        sensor.timed(s.grid, s.allocation, s.dmrs_seed)
    times = {"separation": [], "reshape": [], "correlation": [], "end_to_end": []}
    for i in range(slots):
        s = samples[i % len(samples)]
        _, st = sensor.timed(s.grid, s.allocation, s.dmrs_seed)
        times["separation"].append(st.separation)
        times["reshape"].append(st.reshape)
        times["correlation"].append(st.correlation)
        times["end_to_end"].append(st.total)
    report.latency_ms = {k: _quartiles(v) for k, v in times.items()}
    return report
