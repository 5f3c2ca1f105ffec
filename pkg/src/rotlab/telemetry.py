"""Per-step measurement of the quantities the equilibrium analysis
predicts: weight norms, angular updates, RMS update sizes, radial gradient
coefficients, and momentum-gradient alignment.

Recording is passive (it never touches the trajectory) and is written
incrementally to CSV with one row per (step, unit). The layer aggregate row
uses neuron = -1. Numbers are formatted with repr(), the shortest string
that round-trips the exact double, so re-reading the CSV reproduces the
run's values bit for bit and equal runs produce byte-equal files.

Aggregation conventions: across neurons at one step, angular updates and
weight norms average arithmetically while RMS update sizes combine as the
root of the mean square (an RMS of RMS values is again an RMS). Time-window
means follow the same kinds.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .core import angle_between, rms_downsample
from .optimizers import UpdateDecomposition

CSV_COLUMNS = (
    "step",
    "layer",
    "neuron",
    "weight_norm",
    "angular_update",
    "rms_update",
    "radial_coeff",
    "grad_sq_norm",
    "unit_grad_sq_norm",
    "momentum_grad_cos",
)
CSV_HEADER = ",".join(CSV_COLUMNS)

METRIC_COLUMNS = CSV_COLUMNS[3:]

# Metrics whose cross-neuron aggregate is an RMS rather than an arithmetic mean.
RMS_METRICS = frozenset({"rms_update"})

AGGREGATE_NEURON = -1

DEFAULT_FLUSH_INTERVAL = 1000


@dataclass
class TelemetryRecord:
    """One unit's measurements at one step. None marks a metric that is
    undefined there (zero-norm weight, or an optimizer without momentum);
    None becomes an empty CSV field."""

    step: int
    layer: str
    neuron: int
    weight_norm: Optional[float] = None
    angular_update: Optional[float] = None
    rms_update: Optional[float] = None
    radial_coeff: Optional[float] = None
    grad_sq_norm: Optional[float] = None
    unit_grad_sq_norm: Optional[float] = None
    momentum_grad_cos: Optional[float] = None


@dataclass
class AggregateSeries:
    """A raw per-step series reduced for reporting: RMS-downsampled values
    plus the declared factor, so report consumers know the smoothing."""

    layer: str
    metric: str
    factor: int
    values: np.ndarray


def _cos(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.dot(a, b) / (na * nb))


def record_step(
    prev_omega: np.ndarray,
    new_omega: np.ndarray,
    decomposition: UpdateDecomposition,
    gradient: np.ndarray,
    momentum: Optional[np.ndarray] = None,
    step: int = 0,
    layer: str = "layer0",
    neuron: int = 0,
) -> TelemetryRecord:
    """Measure one unit's step: the angle between the old and new weight
    vector, the new norm, the gradient-driven update RMS, and the gradient
    diagnostics evaluated at the pre-step weights."""
    prev_omega = np.asarray(prev_omega, dtype=np.float64)
    new_omega = np.asarray(new_omega, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    prev_sq = float(np.dot(prev_omega, prev_omega))
    new_norm = float(np.linalg.norm(new_omega))
    angular: Optional[float]
    if prev_sq == 0.0 or new_norm == 0.0:
        angular = None
    else:
        angular = angle_between(prev_omega, new_omega)
    grad_sq = float(np.dot(gradient, gradient))
    return TelemetryRecord(
        step=step,
        layer=layer,
        neuron=neuron,
        weight_norm=new_norm,
        angular_update=angular,
        rms_update=float(np.linalg.norm(decomposition.delta_g)),
        radial_coeff=None if prev_sq == 0.0 else float(np.dot(prev_omega, gradient)) / prev_sq,
        grad_sq_norm=grad_sq,
        unit_grad_sq_norm=prev_sq * grad_sq,
        momentum_grad_cos=None if momentum is None else _cos(momentum, gradient),
    )


def record_layer_step(
    prev_W: np.ndarray,
    new_W: np.ndarray,
    decomposition: UpdateDecomposition,
    grad: np.ndarray,
    momentum: Optional[np.ndarray] = None,
    step: int = 0,
    layer: str = "layer0",
) -> List[TelemetryRecord]:
    """Vectorized record_step over the rows of a weight matrix; returns one
    record per row, in row order."""
    prev_sq = np.sum(prev_W * prev_W, axis=1)
    new_sq = np.sum(new_W * new_W, axis=1)
    new_norm = np.sqrt(new_sq)
    dot = np.sum(prev_W * new_W, axis=1)
    grad_sq = np.sum(grad * grad, axis=1)
    rms = np.sqrt(np.sum(decomposition.delta_g * decomposition.delta_g, axis=1))
    radial = np.sum(prev_W * grad, axis=1)

    ok = (prev_sq > 0.0) & (new_sq > 0.0)
    cosine = np.zeros_like(dot)
    np.divide(dot, np.sqrt(prev_sq * new_sq), out=cosine, where=ok)
    cosine = np.clip(cosine, -1.0, 1.0)
    angular = np.arccos(cosine)

    mom_cos = None
    if momentum is not None:
        m_norm = np.sqrt(np.sum(momentum * momentum, axis=1))
        g_norm = np.sqrt(grad_sq)
        denom = m_norm * g_norm
        mom_cos = np.full(denom.shape, np.nan)
        np.divide(np.sum(momentum * grad, axis=1), denom, out=mom_cos, where=denom > 0.0)

    records = []
    for k in range(prev_W.shape[0]):
        records.append(
            TelemetryRecord(
                step=step,
                layer=layer,
                neuron=k,
                weight_norm=float(new_norm[k]),
                angular_update=float(angular[k]) if ok[k] else None,
                rms_update=float(rms[k]),
                radial_coeff=float(radial[k] / prev_sq[k]) if prev_sq[k] > 0.0 else None,
                grad_sq_norm=float(grad_sq[k]),
                unit_grad_sq_norm=float(prev_sq[k] * grad_sq[k]),
                momentum_grad_cos=None
                if mom_cos is None or not np.isfinite(mom_cos[k])
                else float(mom_cos[k]),
            )
        )
    return records


def layer_mean(records: Sequence[TelemetryRecord], metric: str) -> Optional[float]:
    """Aggregate one metric across the neurons of a single step. Arithmetic
    mean except for RMS-kind metrics; units where the metric is undefined
    are left out, and None is returned if no unit defines it."""
    if len(records) == 0:
        raise ValueError("layer_mean needs at least one neuron record")
    if metric not in METRIC_COLUMNS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRIC_COLUMNS}")
    vals = [getattr(r, metric) for r in records]
    vals = [v for v in vals if v is not None]
    if not vals:
        return None
    arr = np.asarray(vals, dtype=np.float64)
    if metric in RMS_METRICS:
        return float(np.sqrt(np.mean(arr * arr)))
    return float(np.mean(arr))


def aggregate_record(records: Sequence[TelemetryRecord]) -> TelemetryRecord:
    """Layer-aggregate row (neuron = -1) for one step."""
    if len(records) == 0:
        raise ValueError("cannot aggregate an empty record set")
    out = TelemetryRecord(step=records[0].step, layer=records[0].layer, neuron=AGGREGATE_NEURON)
    for metric in METRIC_COLUMNS:
        setattr(out, metric, layer_mean(records, metric))
    return out


def window_mean(
    values: Sequence[float],
    from_step: int,
    to_step: int,
    kind: str = "arithmetic",
    steps: Optional[Sequence[int]] = None,
) -> float:
    """Time mean of a series over the inclusive step window
    [from_step, to_step]. steps gives each value's step index (defaults to
    0..n-1). kind is "arithmetic" or "rms"."""
    if kind not in ("arithmetic", "rms"):
        raise ValueError(f"kind must be 'arithmetic' or 'rms', got {kind!r}")
    arr = np.asarray(values, dtype=np.float64)
    idx = np.arange(arr.size) if steps is None else np.asarray(steps)
    mask = (idx >= from_step) & (idx <= to_step)
    if not np.any(mask):
        raise ValueError(f"window [{from_step}, {to_step}] selects no samples")
    window = arr[mask]
    if kind == "rms":
        return float(np.sqrt(np.mean(window * window)))
    return float(np.mean(window))


def downsample_series(layer: str, metric: str, values: np.ndarray, factor: int) -> AggregateSeries:
    """RMS-downsample a raw series for compact reporting, keeping the factor
    alongside the values."""
    return AggregateSeries(layer=layer, metric=metric, factor=factor, values=rms_downsample(values, factor))


def format_value(x: Optional[float]) -> str:
    if x is None:
        return ""
    return repr(float(x))


def format_record(rec: TelemetryRecord) -> str:
    parts = [str(rec.step), rec.layer, str(rec.neuron)]
    for metric in METRIC_COLUMNS:
        parts.append(format_value(getattr(rec, metric)))
    return ",".join(parts)


class TelemetryWriter:
    """Incremental CSV writer. Lines buffer in memory and flush to disk
    every flush_interval steps; close() flushes the remainder. The file
    always starts with the mandatory header row."""

    def __init__(self, path: str, flush_interval: int = DEFAULT_FLUSH_INTERVAL):
        if flush_interval < 1:
            raise ValueError(f"flush_interval must be >= 1, got {flush_interval}")
        self.path = path
        self.flush_interval = flush_interval
        self._fh: Optional[io.TextIOWrapper] = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(CSV_HEADER + "\n")
        self._buffer: List[str] = []
        self._steps_buffered = 0

    def write_step(self, records: Sequence[TelemetryRecord]) -> None:
        for rec in records:
            self._buffer.append(format_record(rec))
        self._steps_buffered += 1
        if self._steps_buffered >= self.flush_interval:
            self.flush()

    def flush(self) -> None:
        if self._fh is None:
            raise ValueError("writer is closed")
        if self._buffer:
            self._fh.write("\n".join(self._buffer) + "\n")
            self._buffer.clear()
        self._fh.flush()
        self._steps_buffered = 0

    def close(self) -> None:
        if self._fh is not None:
            self.flush()
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "TelemetryWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
