"""Per-step diagnostics: Sobolev norms, dissipation, potential, CSV persistence."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .constitutive import ConstitutiveLaw
from .errors import DomainError
from .fields import sobolev_norm, velocity_gradient

__all__ = [
    "DiagnosticsRecord",
    "DiagnosticsSeries",
    "SeriesFormatError",
    "record",
    "fit_decay_rate",
    "write_series",
    "read_series",
    "summarize",
    "CSV_COLUMNS",
]

MAX_ORDER = 6
CSV_COLUMNS = (
    ["t", "step", "l2"] + [f"h{l}" for l in range(1, MAX_ORDER + 1)]
    + ["dissipation", "potential", "max_grad", "energy_residual"]
)


class SeriesFormatError(ValueError):
    """Malformed diagnostics CSV."""


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    step: int
    l2_norm: float
    h_norms: tuple  # h_norms[l-1] is the H^l norm
    dissipation: float
    potential: float
    max_grad: float
    energy_residual: float = 0.0

    def value(self, name: str) -> float:
        if name in ("l2", "l2_norm"):
            return self.l2_norm
        if len(name) == 2 and name[0] == "h" and name[1].isdigit():
            l = int(name[1])
            if not 1 <= l <= len(self.h_norms):
                raise DomainError(f"record has no H^{l} norm (l_max = {len(self.h_norms)})")
            return self.h_norms[l - 1]
        if name in ("dissipation", "potential", "max_grad", "energy_residual", "t"):
            return getattr(self, name)
        raise DomainError(f"unknown diagnostics field {name!r}")


@dataclass
class DiagnosticsSeries:
    l_max: int = 3
    records: List[DiagnosticsRecord] = field(default_factory=list)
    max_abs_energy_residual: float = 0.0  # over every step, not only recorded ones

    def append(self, rec: DiagnosticsRecord) -> None:
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([r.value(name) for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


def record(state, law: ConstitutiveLaw, l_max: int = 3, energy_residual: float = 0.0) -> DiagnosticsRecord:
    """Diagnostics of ``state`` (any object with ``u``, ``t``, ``step``)."""
    if int(l_max) != l_max or not 0 <= l_max <= MAX_ORDER:
        raise DomainError(f"l_max must be an integer in 0..{MAX_ORDER}")
    u = state.u
    grad = velocity_gradient(u)
    D = 0.5 * (grad + grad.transpose(1, 0, 2, 3, 4))
    s = np.einsum("ij...,ij...->...", D, D)
    vol = u.grid.volume
    return DiagnosticsRecord(
        t=float(state.t),
        step=int(state.step),
        l2_norm=sobolev_norm(u, 0),
        h_norms=tuple(sobolev_norm(u, l) for l in range(1, int(l_max) + 1)),
        dissipation=float(np.mean(law(s) * s) * vol),
        potential=float(np.mean(law.antideriv(s)) * vol),
        max_grad=float(np.sqrt(np.max(np.einsum("ij...,ij...->...", grad, grad)))),
        energy_residual=float(energy_residual),
    )


def fit_decay_rate(series, field: str = "l2", window: Optional[Sequence[float]] = None,
                   min_records: int = 10) -> float:
    """Least-squares slope of ``log(field)`` against ``t`` over ``window``."""
    recs = list(series)
    if window is not None:
        t0, t1 = window
        recs = [r for r in recs if t0 <= r.t <= t1]
    if len(recs) < max(2, min_records):
        raise DomainError(f"need at least {max(2, min_records)} records in the window, got {len(recs)}")
    t = np.array([r.t for r in recs])
    y = np.array([r.value(field) for r in recs])
    if np.any(~(y > 0)):
        raise DomainError(f"{field} must be positive to fit a decay rate")
    slope, _ = np.polyfit(t, np.log(y), 1)
    return float(slope)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_series(series: DiagnosticsSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in series:
            h = [_fmt(v) for v in r.h_norms] + [""] * (MAX_ORDER - len(r.h_norms))
            w.writerow(
                [_fmt(r.t), str(r.step), _fmt(r.l2_norm)] + h
                + [_fmt(r.dissipation), _fmt(r.potential), _fmt(r.max_grad), _fmt(r.energy_residual)]
            )


def read_series(path) -> DiagnosticsSeries:
    with open(path, newline="") as fh:
        text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_COLUMNS:
        raise SeriesFormatError(f"{path}: line 1: header does not match {','.join(CSV_COLUMNS)}")
    records = []
    l_max = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise SeriesFormatError(f"{path}: line {lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        try:
            vals = dict(zip(CSV_COLUMNS, row))
            h = []
            for l in range(1, MAX_ORDER + 1):
                cell = vals[f"h{l}"]
                if cell == "":
                    break
                h.append(float(cell))
            if any(vals[f"h{l}"] != "" for l in range(len(h) + 1, MAX_ORDER + 1)):
                raise ValueError("h-norm columns must be filled contiguously from h1")
            rec = DiagnosticsRecord(
                t=float(vals["t"]),
                step=int(vals["step"]),
                l2_norm=float(vals["l2"]),
                h_norms=tuple(h),
                dissipation=float(vals["dissipation"]),
                potential=float(vals["potential"]),
                max_grad=float(vals["max_grad"]),
                energy_residual=float(vals["energy_residual"]),
            )
        except ValueError as exc:
            raise SeriesFormatError(f"{path}: line {lineno}: {exc}") from None
        if l_max is None:
            l_max = len(h)
        elif len(h) != l_max:
            raise SeriesFormatError(f"{path}: line {lineno}: inconsistent number of h-norm columns")
        records.append(rec)
    series = DiagnosticsSeries(l_max=l_max if l_max is not None else 0, records=records)
    if records:
        series.max_abs_energy_residual = max(abs(r.energy_residual) for r in records)
    return series


def summarize(series: DiagnosticsSeries) -> dict:
    """JSON-ready summary: final norms, per-column extrema and fitted decay rates."""
    if not len(series):
        return {"final_norms": {}, "min": {}, "max": {}, "fitted_rates": {}}
    names = ["l2"] + [f"h{l}" for l in range(1, series.l_max + 1)]
    cols = names + ["dissipation", "potential", "max_grad", "energy_residual"]
    last = series[-1]
    rates = {}
    for name in names:
        try:
            rates[name] = fit_decay_rate(series, name)
        except DomainError:
            rates[name] = None
    return {
        "t_final": last.t,
        "steps": last.step,
        "final_norms": {name: last.value(name) for name in names},
        "min": {c: float(np.min(series.column(c))) for c in cols},
        "max": {c: float(np.max(series.column(c))) for c in cols},
        "fitted_rates": rates,
        "max_abs_energy_residual": series.max_abs_energy_residual,
    }

