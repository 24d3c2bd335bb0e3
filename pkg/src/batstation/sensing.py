"""Template correlation, decision rule, template training and the energy baseline.

The correlation of a pooled grid with a template is a single linear 2-D
correlation layer followed by a max over the template's channels. Template
rows are centred on the output row (frequency) and template columns run
forward from the output column (start time), so a peak at ``(n, m)`` reads as
"a pulse centred on row ``n`` that starts in column ``m``".
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from . import _kernels
from .errors import ConfigError, DataError, InsufficientDataError, TrainingError
from .grid import ResourceGrid, as_array
from .radar import (DEFAULT_RADAR_TYPES, ChirpDirection, RadarPulse, RadarTypeParams, radar_only_grid)
from .reshape import PooledGrid, ReshapeConfig, reshape_all

# the numpy fallback loops over taps in Python, so it always prefers the FFT path
DIRECT_MAX_TAPS = 64 if _kernels.BACKEND == "cython" else 0
TEMPLATE_MAGIC = b"BATT"
TEMPLATE_VERSION = 1
_TEMPLATE_HEADER = struct.Struct("<4sHI")


@dataclass(frozen=True, eq=False)
class Template:
    weights: np.ndarray
    type_id: int
    channel_meaning: tuple[str, ...] = ("none",)
    alpha: int = 4
    pool_size: int = 3

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 3:
            raise ConfigError("template weights must be C x N_t x M_t")
        if w.shape[0] != len(self.channel_meaning):
            raise ConfigError("channel count does not match channel_meaning")
        if not np.all(np.isfinite(w)):
            raise DataError("template weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "channel_meaning", tuple(self.channel_meaning))

    @property
    def channels(self) -> int:
        return self.weights.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return self.weights.shape[1], self.weights.shape[2]

    @property
    def freq_offset(self) -> int:
        """Row of the template aligned with the output row."""
        return (self.weights.shape[1] - 1) // 2

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    def with_weights(self, w: np.ndarray) -> "Template":
        return replace(self, weights=w)


@dataclass(frozen=True, eq=False)
class TemplateSet:
    templates: dict
    reshape: ReshapeConfig = field(default_factory=ReshapeConfig)
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, type_id: int) -> Template:
        return self.templates[type_id]

    @property
    def type_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.templates))

    @property
    def parameter_count(self) -> int:
        return int(sum(t.weights.size for t in self.templates.values()))

    def with_weights(self, weights: Mapping[int, np.ndarray], **meta) -> "TemplateSet":
        tpl = {r: self.templates[r].with_weights(weights[r]) for r in self.type_ids}
        return TemplateSet(tpl, self.reshape, {**self.metadata, **meta})

    def weights(self) -> dict[int, np.ndarray]:
        return {r: np.array(t.weights) for r, t in self.templates.items()}


def template_dims(params: RadarTypeParams, reshape: ReshapeConfig, margin: float = 1.25) -> tuple[int, int]:
    """Smallest template covering ``margin`` x the largest bandwidth and duration.

    One extra row and column absorb the misalignment between the pulse and
    the pooled bin edges; both are capped at the pooled grid size.
    """
    r = params.type_id
    rows, cols = reshape.pooled_shape(r)
    nt = math.ceil(margin * params.bandwidth_range_hz[1] / reshape.freq_resolution_hz(r)) + 1
    mt = math.ceil(margin * params.duration_range_s[1] / reshape.time_resolution_s) + 1
    return min(nt, rows), min(mt, cols)


def channel_meaning(params: RadarTypeParams) -> tuple[str, ...]:
    return tuple(d.value for d in params.chirp_directions)


def channel_of(direction: ChirpDirection | str, meaning: Sequence[str]) -> int:
    d = ChirpDirection(direction).value
    return list(meaning).index(d) if d in meaning else 0


# -- correlation ---------------------------------------------------------------

def correlate_channels(amp: np.ndarray, weights: np.ndarray, f_off: int, method: str = "auto"):
    """``(out, channel)``: max-over-channels correlation and the winning channel.

    ``method`` is ``"direct"`` (compiled kernel), ``"fft"`` or ``"auto"``
    (direct for templates with at most ``DIRECT_MAX_TAPS`` taps per channel,
    which is zero under the pure-Python backend).
    """
    amp = np.ascontiguousarray(amp, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if method == "auto":
        method = "direct" if weights[0].size <= DIRECT_MAX_TAPS else "fft"
    if method == "direct":
        return _kernels.correlate_max(amp, weights, f_off)
    if method != "fft":
        raise ConfigError(f"unknown correlation method {method!r}")
    shape = _fft_shape(amp.shape, weights.shape, f_off)
    return _fft_correlate(sfft.rfft2(amp, s=shape), shape, amp.shape, weights.shape, f_off,
                          _kernel_spectra(weights, shape))


def _fft_shape(grid_shape, wshape, f_off):
    """Smallest fast FFT size for which circular correlation equals the zero-padded one."""
    _, nt, mt = wshape
    rows = max(grid_shape[0] + max(f_off, nt - 1 - f_off), nt)
    cols = grid_shape[1] + mt - 1
    return sfft.next_fast_len(rows, real=True), sfft.next_fast_len(cols, real=True)


def _kernel_spectra(weights: np.ndarray, shape) -> np.ndarray:
    c, nt, mt = weights.shape
    k = np.zeros((c,) + tuple(shape))
    k[:, :nt, :mt] = weights[:, ::-1, ::-1]
    return sfft.rfft2(k, axes=(1, 2))


def _fft_correlate(grid_spec, shape, grid_shape, wshape, f_off, spectra):
    """Crop the circular correlation computed from spectra of FFT size ``shape``."""
    _, nt, mt = wshape
    n, m = grid_shape
    full = sfft.irfft2(grid_spec[None] * spectra, s=shape, axes=(1, 2))
    r0 = nt - 1 - f_off
    return _max_channels(full[:, r0:r0 + n, mt - 1:mt - 1 + m])


def _max_channels(per: np.ndarray):
    """Max over the leading axis with ties to the lowest channel."""
    out = np.array(per[0])
    chan = np.zeros(out.shape, dtype=np.int64)
    for ci in range(1, per.shape[0]):
        better = per[ci] > out
        np.copyto(out, per[ci], where=better)
        chan[better] = ci
    return out, chan


def correlate(pooled: PooledGrid | np.ndarray, template: Template, method: str = "auto") -> np.ndarray:
    """Correlation map of one pooled grid with its type's template (same shape as the grid)."""
    if isinstance(pooled, PooledGrid):
        if pooled.type_id != template.type_id:
            raise ConfigError(f"pooled grid type {pooled.type_id} != template type {template.type_id}")
        amp = pooled.amp
    else:
        amp = np.asarray(pooled, dtype=np.float64)
    if amp.ndim != 2:
        raise ConfigError("pooled grid must be two dimensional")
    return correlate_channels(amp, template.weights, template.freq_offset, method)[0]


@dataclass(frozen=True, eq=False)
class CorrelationOutput:
    maps: dict
    r_star: int
    n_star: int
    m_star: int
    y_star: float
    channels: dict = field(default_factory=dict)

    @classmethod
    def from_maps(cls, maps: Mapping[int, np.ndarray], channels: Mapping[int, np.ndarray] | None = None):
        r_star, n_star, m_star, y_star = argmax_record(maps)
        return cls(dict(maps), r_star, n_star, m_star, y_star, dict(channels or {}))


def argmax_record(maps: Mapping[int, np.ndarray]) -> tuple[int, int, int, float]:
    """Global maximum over all maps; ties go to the lowest ``(r, n, m)``."""
    best = None
    for r in sorted(maps):
        a = maps[r]
        flat = int(np.argmax(a))
        v = float(a.flat[flat])
        if best is None or v > best[3]:
            n, m = divmod(flat, a.shape[1])
            best = (r, n, m, v)
    if best is None:
        raise ConfigError("no correlation maps")
    return best


class Correlator:
    """Correlates pooled grids with a fixed template set.

    Kernel spectra are cached per grid shape, and types that share a pooled
    grid (same pool size) share one forward FFT of it.
    """

    def __init__(self, templates: TemplateSet, method: str = "auto"):
        self.templates = templates
        self.method = method
        self._plans: dict = {}

    def _method(self, r: int) -> str:
        if self.method != "auto":
            return self.method
        return "direct" if self.templates[r].weights[0].size <= DIRECT_MAX_TAPS else "fft"

    def _plan(self, group: tuple, grid_shape):
        key = (group, grid_shape)
        if key not in self._plans:
            shapes = [_fft_shape(grid_shape, self.templates[r].weights.shape, self.templates[r].freq_offset)
                      for r in group]
            shape = (max(s[0] for s in shapes), max(s[1] for s in shapes))
            self._plans[key] = (shape, {r: _kernel_spectra(self.templates[r].weights, shape) for r in group})
        return self._plans[key]

    def correlate_type(self, amp: np.ndarray, r: int):
        """``(map, channel)`` for one type, without grid-FFT sharing."""
        amp = np.ascontiguousarray(amp, dtype=np.float64)
        t = self.templates[r]
        if self._method(r) == "direct":
            return _kernels.correlate_max(amp, t.weights, t.freq_offset)
        shape, spectra = self._plan((r,), amp.shape)
        return _fft_correlate(sfft.rfft2(amp, s=shape), shape, amp.shape, t.weights.shape, t.freq_offset,
                              spectra[r])

    def __call__(self, pooled: Mapping[int, PooledGrid | np.ndarray]) -> CorrelationOutput:
        maps, chans = {}, {}
        groups: dict = {}
        for r in self.templates.type_ids:
            p = pooled[r]
            amp = np.ascontiguousarray(p.amp if isinstance(p, PooledGrid) else p, dtype=np.float64)
            if self._method(r) == "direct":
                t = self.templates[r]
                maps[r], chans[r] = _kernels.correlate_max(amp, t.weights, t.freq_offset)
            else:
                groups.setdefault(id(amp), (amp, []))[1].append(r)
        for amp, members in groups.values():
            group = tuple(members)
            shape, spectra = self._plan(group, amp.shape)
            spec = sfft.rfft2(amp, s=shape)
            for r in group:
                t = self.templates[r]
                maps[r], chans[r] = _fft_correlate(spec, shape, amp.shape, t.weights.shape, t.freq_offset,
                                                   spectra[r])
        return CorrelationOutput.from_maps(maps, chans)


# -- decision ------------------------------------------------------------------

@dataclass(frozen=True)
class SensingReport:
    """Detection result; type and location are ``None`` when nothing is detected."""

    detected: int
    type_id: int | None
    freq_hz: float | None
    time_s: float | None
    likelihood: float
    threshold: float
    peaks: tuple = ()

    @property
    def likelihood_db(self) -> float:
        return float(20 * np.log10(self.likelihood)) if self.likelihood > 0 else float("-inf")

    def to_dict(self) -> dict:
        return {"detected": self.detected, "type_id": self.type_id, "freq_hz": self.freq_hz,
                "time_s": self.time_s, "likelihood": self.likelihood, "likelihood_db": self.likelihood_db,
                "threshold": self.threshold, "peaks": [dict(p) for p in self.peaks]}


def decide(corr: CorrelationOutput, y_th: float, reshape: ReshapeConfig) -> SensingReport:
    """Detect iff ``Y* >= Y_th``; type and location come from the argmax."""
    if corr.y_star >= y_th:
        return SensingReport(1, corr.r_star, float(reshape.row_to_freq(corr.r_star, corr.n_star)),
                             float(reshape.col_to_time(corr.m_star)), corr.y_star, float(y_th))
    return SensingReport(0, None, None, None, corr.y_star, float(y_th))


_RING = np.ones((3, 3), dtype=bool)
_RING[1, 1] = False


def detect_multi(corr: CorrelationOutput, y_th: float, templates: TemplateSet) -> list[dict]:
    """Multi-pulse mode: strict local maxima above ``y_th`` after footprint suppression.

    A candidate is dropped when it lies within the time-frequency footprint
    (either template's) of an already accepted, stronger peak.
    """
    reshape = templates.reshape
    cands = []
    for r in sorted(corr.maps):
        a = corr.maps[r]
        ring = ndimage.maximum_filter(a, footprint=_RING, mode="constant", cval=-np.inf)
        for n, m in zip(*np.nonzero((a > ring) & (a > y_th))):
            cands.append((-float(a[n, m]), r, int(n), int(m)))
    cands.sort()
    accepted = []
    for negv, r, n, m in cands:
        f = float(reshape.row_to_freq(r, n))
        t = float(reshape.col_to_time(m))
        nt, mt = templates[r].dims
        half_f = nt * reshape.freq_resolution_hz(r) / 2
        span_t = mt * reshape.time_resolution_s
        clash = False
        for p in accepted:
            hf = max(half_f, p["_half_f"])
            st = max(span_t, p["_span_t"])
            if abs(f - p["freq_hz"]) < hf and abs(t - p["time_s"]) < st:
                clash = True
                break
        if not clash:
            accepted.append({"type_id": r, "row": n, "col": m, "freq_hz": f, "time_s": t,
                             "likelihood": -negv, "_half_f": half_f, "_span_t": span_t})
    return [{k: v for k, v in p.items() if not k.startswith("_")} for p in accepted]


# -- template initialisation ---------------------------------------------------------

def extract_patch(amp: np.ndarray, row: int, col: int, nt: int, mt: int, f_off: int | None = None) -> np.ndarray:
    """``nt x mt`` window with row ``row`` at offset ``f_off`` and column ``col`` first; zero padded."""
    f_off = (nt - 1) // 2 if f_off is None else f_off
    out = np.zeros((nt, mt))
    r0 = row - f_off
    rs, re_ = max(r0, 0), min(r0 + nt, amp.shape[0])
    cs, ce = max(col, 0), min(col + mt, amp.shape[1])
    if rs < re_ and cs < ce:
        out[rs - r0:re_ - r0, cs - col:ce - col] = amp[rs:re_, cs:ce]
    return out


def init_templates(pulses: Iterable[RadarPulse], reshape: ReshapeConfig | None = None,
                   types: dict[int, RadarTypeParams] | None = None, reference_snr_db: float = 30.0,
                   noise_psd: float = 1.0) -> TemplateSet:
    """Average noise-free pooled patterns per type (and chirp direction), then unit-normalise.

    ``pulses`` are placed pulses (centre offset and start time set). Every
    pulse is rendered radar-only at ``reference_snr_db`` so the average
    weighs waveforms by their PSD-normalised pattern rather than by the SNR
    they happen to be used at.
    """
    reshape = ReshapeConfig() if reshape is None else reshape
    types = DEFAULT_RADAR_TYPES if types is None else types
    config = reshape.numerology
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, np.ndarray] = {}
    dims = {r: template_dims(types[r], reshape) for r in reshape.type_ids}
    meaning = {r: channel_meaning(types[r]) for r in reshape.type_ids}
    for p in pulses:
        r = p.type_id
        if r not in dims:
            continue
        nt, mt = dims[r]
        c = len(meaning[r])
        sums.setdefault(r, np.zeros((c, nt, mt)))
        counts.setdefault(r, np.zeros(c, dtype=np.int64))
        g = radar_only_grid(replace(p, snr_db=reference_snr_db), config, noise_psd, types)
        pooled = reshape_all(g, _single_type(reshape, r))[r].amp
        ci = channel_of(p.chirp_direction, meaning[r])
        sums[r][ci] += extract_patch(pooled, reshape.freq_to_row(r, p.center_freq_offset_hz),
                                     reshape.time_to_col(p.start_time_s), nt, mt)
        counts[r][ci] += 1
    templates = {}
    for r in reshape.type_ids:
        if r not in counts or np.any(counts[r] == 0):
            raise InsufficientDataError(f"no training pulses for type {r} (every chirp direction is needed)")
        w = sums[r] / counts[r][:, None, None]
        w /= np.linalg.norm(w)
        templates[r] = Template(w, r, meaning[r], reshape.alpha, reshape.pool_size(r))
    return TemplateSet(templates, reshape, {"stage": "init", "samples": {str(r): int(counts[r].sum())
                                                                        for r in counts}})


def _single_type(reshape: ReshapeConfig, r: int) -> ReshapeConfig:
    return ReshapeConfig(reshape.alpha, {r: reshape.pool_size(r)}, reshape.numerology)


# -- fine-tuning ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainingItem:
    """Pooled grids of one D=1 sample keyed by radar type, plus its true type."""

    pooled: dict
    label: int


def forward(pooled: Mapping[int, np.ndarray], weights: Mapping[int, np.ndarray], templates: TemplateSet,
            method: str = "auto"):
    """Per-type logits ``z_r = max Y_out^(r)`` and their argmax ``(c, n, m)``."""
    z, where = {}, {}
    for r in templates.type_ids:
        w = weights[r]
        out, chan = correlate_channels(pooled[r], w, (w.shape[1] - 1) // 2, method)
        flat = int(np.argmax(out))
        n, m = divmod(flat, out.shape[1])
        z[r] = float(out[n, m])
        where[r] = (int(chan[n, m]), n, m)
    return z, where


def loss_and_grad(item: TrainingItem, weights: Mapping[int, np.ndarray], templates: TemplateSet,
                  method: str = "auto"):
    """Cross-entropy of softmax over per-type max logits, with its (sub)gradient.

    The gradient of ``z_r`` flows only through the argmax channel and
    location: it equals the pooled patch under the template there.
    """
    z, where = forward(item.pooled, weights, templates, method)
    types = templates.type_ids
    zv = np.array([z[r] for r in types])
    shift = zv - zv.max()
    logp = shift - np.log(np.exp(shift).sum())
    prob = np.exp(logp)
    label_idx = types.index(item.label)
    loss = -float(logp[label_idx])
    grads = {}
    for i, r in enumerate(types):
        w = weights[r]
        g = np.zeros_like(w)
        coef = prob[i] - (1.0 if i == label_idx else 0.0)
        if coef != 0.0:
            c, n, m = where[r]
            g[c] = coef * extract_patch(item.pooled[r], n, m, w.shape[1], w.shape[2])
        grads[r] = g
    return loss, grads, z


def predict_types(items: Sequence[TrainingItem], weights, templates: TemplateSet, method="auto") -> np.ndarray:
    out = []
    for it in items:
        z, _ = forward(it.pooled, weights, templates, method)
        best = max(templates.type_ids, key=lambda r: (z[r], -r))
        out.append(best)
    return np.array(out)


def classification_accuracy(items: Sequence[TrainingItem], weights, templates: TemplateSet) -> float:
    if not items:
        return float("nan")
    pred = predict_types(items, weights, templates)
    return float(np.mean(pred == np.array([it.label for it in items])))


@dataclass
class FinetuneHistory:
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = 0
    initial_val_accuracy: float = float("nan")


def finetune(templates: TemplateSet, train_set: Sequence[TrainingItem], lr: float = 1e-3,
             weight_decay: float = 1e-3, epochs: int = 200, val_set: Sequence[TrainingItem] | None = None,
             seed: int = 0, progress: Callable[[int, float, float], None] | None = None):
    """Plain SGD (batch size 1, shuffled each epoch) on the cross-entropy loss.

    After every epoch the templates are scored on ``val_set`` (classification
    accuracy) and the best epoch is kept; epoch 0 is the input set. Returns
    ``(TemplateSet, FinetuneHistory)``.
    """
    if not train_set:
        raise InsufficientDataError("no training samples")
    rng = np.random.default_rng([seed, 0x46540])
    weights = templates.weights()
    hist = FinetuneHistory()
    val_set = list(val_set) if val_set is not None else []
    best_acc = classification_accuracy(val_set, weights, templates) if val_set else float("-inf")
    hist.initial_val_accuracy = best_acc
    best_weights = {r: w.copy() for r, w in weights.items()}
    for epoch in range(1, epochs + 1):
        total = 0.0
        for i in rng.permutation(len(train_set)):
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
                loss, grads, _ = loss_and_grad(train_set[i], weights, templates)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch)
            total += loss
            with np.errstate(over="ignore", invalid="ignore"):
                for r in weights:
                    weights[r] -= lr * (grads[r] + weight_decay * weights[r])
        mean_loss = total / len(train_set)
        if not all(np.all(np.isfinite(w)) for w in weights.values()):
            raise TrainingError(f"template weights diverged at epoch {epoch}", epoch)
        hist.train_loss.append(mean_loss)
        if val_set:
            acc = classification_accuracy(val_set, weights, templates)
            hist.val_accuracy.append(acc)
            if acc > best_acc:
                best_acc, hist.best_epoch = acc, epoch
                best_weights = {r: w.copy() for r, w in weights.items()}
        else:
            hist.best_epoch = epoch
            best_weights = {r: w.copy() for r, w in weights.items()}
        if progress is not None:
            progress(epoch, mean_loss, hist.val_accuracy[-1] if val_set else float("nan"))
    tuned = templates.with_weights(best_weights, stage="finetuned", lr=lr, weight_decay=weight_decay,
                                   epochs=epochs, best_epoch=hist.best_epoch,
                                   best_val_accuracy=None if not val_set else best_acc)
    return tuned, hist


# -- threshold & baseline ---------------------------------------------------------

def calibrate_threshold(scores_no_radar: Sequence[float], target_far: float = 0.05) -> float:
    """Empirical ``1 - target_far`` quantile of null scores (linear interpolation)."""
    s = np.asarray(scores_no_radar, dtype=float)
    if s.size < 20:
        raise InsufficientDataError(f"need at least 20 null scores to calibrate, got {s.size}")
    if not 0 < target_far < 1:
        raise ConfigError("target_far must be in (0, 1)")
    return float(np.quantile(s, 1.0 - target_far))


def energy_detect(y_raw: ResourceGrid | np.ndarray, threshold: float, config=None) -> SensingReport:
    """Baseline: compare the strongest element power to ``threshold``; never classifies."""
    data = as_array(y_raw)
    config = getattr(y_raw, "config", config)
    if config is None:
        raise ConfigError("a numerology config is needed for raw arrays")
    power = np.abs(data) ** 2
    flat = int(np.argmax(power))
    n, m = divmod(flat, power.shape[1])
    peak = float(power[n, m])
    if peak >= threshold:
        return SensingReport(1, None, float(config.subcarrier_frequency(n)),
                             float(m * config.symbol_duration_s), peak, float(threshold))
    return SensingReport(0, None, None, None, peak, float(threshold))


# -- template files ---------------------------------------------------------------

def save_templates(templates: TemplateSet, path) -> None:
    entries, blobs, offset = [], [], 0
    for r in templates.type_ids:
        t = templates[r]
        blob = np.ascontiguousarray(t.weights, dtype="<f4").tobytes()
        entries.append({"type_id": r, "dims": list(t.weights.shape), "channel_meaning": list(t.channel_meaning),
                        "alpha": t.alpha, "pool_size": t.pool_size, "norm": t.norm,
                        "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {"format": "batstation-templates", "version": TEMPLATE_VERSION, "templates": entries,
              "reshape": templates.reshape.to_dict(), "numerology": templates.reshape.numerology.to_dict(),
              "metadata": templates.metadata}
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_TEMPLATE_HEADER.pack(TEMPLATE_MAGIC, TEMPLATE_VERSION, len(hb)))
        fh.write(hb)
        for b in blobs:
            fh.write(b)


def load_templates(path, types: dict[int, RadarTypeParams] | None = None) -> TemplateSet:
    from .grid import NumerologyConfig

    types = DEFAULT_RADAR_TYPES if types is None else types
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _TEMPLATE_HEADER.size:
        raise DataError("truncated template file")
    magic, version, hlen = _TEMPLATE_HEADER.unpack_from(raw)
    if magic != TEMPLATE_MAGIC:
        raise DataError("not a template file")
    if version != TEMPLATE_VERSION:
        raise DataError(f"unsupported template version {version}")
    try:
        header = json.loads(raw[_TEMPLATE_HEADER.size:_TEMPLATE_HEADER.size + hlen])
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt template header: {exc}") from exc
    body = raw[_TEMPLATE_HEADER.size + hlen:]
    reshape = ReshapeConfig.from_dict(header["reshape"], NumerologyConfig.from_dict(header["numerology"]))
    templates = {}
    for e in header["templates"]:
        r = int(e["type_id"])
        blob = body[e["offset"]:e["offset"] + e["nbytes"]]
        shape = tuple(e["dims"])
        if len(blob) != 4 * int(np.prod(shape)):
            raise DataError(f"truncated weights for type {r}")
        w = np.frombuffer(blob, dtype="<f4").astype(np.float64).reshape(shape)
        t = Template(w, r, tuple(e["channel_meaning"]), int(e["alpha"]), int(e["pool_size"]))
        if t.alpha != reshape.alpha or t.pool_size != reshape.pool_size(r):
            raise DataError(f"template {r} is bound to a different reshape configuration")
        if r in types and t.channels != types[r].channels:
            raise DataError(f"template {r} has {t.channels} channels, type needs {types[r].channels}")
        rows, cols = reshape.pooled_shape(r)
        if t.dims[0] > rows or t.dims[1] > cols:
            raise DataError(f"template {r} is larger than its pooled grid")
        templates[r] = t
    return TemplateSet(templates, reshape, header.get("metadata", {}))
