"""Per-epoch records and run summaries."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .rtk import SolutionStatus

CSV_HEADER = "t,status,err_e,err_n,err_u,err_3d,n_sats,ratio,attack"


class EmptyRun(ValueError):
    pass


@dataclass
class EpochRecord:
    t: float
    status: SolutionStatus
    err_e: float
    err_n: float
    err_u: float
    n_sats: int
    ratio: float
    station_under_attack: bool = False
    corrections_available: bool = True

    @property
    def error_3d(self) -> float:
        return math.sqrt(self.err_e**2 + self.err_n**2 + self.err_u**2)

    def csv_row(self) -> str:
        return ",".join([
            f"{self.t:.3f}",
            self.status.value,
            _num(self.err_e),
            _num(self.err_n),
            _num(self.err_u),
            _num(self.error_3d),
            str(self.n_sats),
            _num(self.ratio, 4),
            "1" if self.station_under_attack else "0",
        ])


def _num(v: float, digits: int = 6) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}f}"


@dataclass
class MetricsSummary:
    n_epochs: int
    n_attempted: int
    fix_rate: float
    fail_fraction: float
    rms_3d: float
    mean_3d: float
    max_3d: float
    p95_3d: float
    status_histogram: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in asdict(self).items()}


def compute_metrics(records: list[EpochRecord]) -> MetricsSummary:
    """fail_fraction is the share of non-FIX epochs among epochs in which station
    corrections were available; error statistics use every epoch with a solution."""
    if not records:
        raise EmptyRun("no epochs")
    hist = {s.value: 0 for s in SolutionStatus}
    for r in records:
        hist[r.status.value] += 1
    attempted = [r for r in records if r.corrections_available]
    n_fix = sum(r.status is SolutionStatus.FIX for r in attempted)
    if attempted:
        fix_rate = n_fix / len(attempted)
        fail = 1.0 - fix_rate
    else:
        fix_rate = fail = math.nan
    err = np.array([r.error_3d for r in records])
    err = err[np.isfinite(err)]
    if err.size:
        rms = float(np.sqrt(np.mean(err**2)))
        mean = float(np.mean(err))
        mx = float(np.max(err))
        p95 = float(np.percentile(err, 95))
    else:
        rms = mean = mx = p95 = math.nan
    return MetricsSummary(len(records), len(attempted), fix_rate, fail, rms, mean, mx, p95, hist)


def window(records: list[EpochRecord], start: float, end: float) -> list[EpochRecord]:
    return [r for r in records if start <= r.t < end]


def write_csv(records: list[EpochRecord], path) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as f:
        f.write(CSV_HEADER + "\n")
        for r in records:
            f.write(r.csv_row() + "\n")
