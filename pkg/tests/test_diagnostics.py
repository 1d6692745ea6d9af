import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnflow.constitutive import Newtonian, PowerLawA, PowerLawB
from nnflow.diagnostics import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    DiagnosticsSeries,
    SeriesFormatError,
    fit_decay_rate,
    read_series,
    record,
    summarize,
    write_series,
)
from nnflow.errors import DomainError
from nnflow.fields import Grid, SpectralField, random_solenoidal, sym_gradient, taylor_green
from nnflow.solver import SimConfig, SimState, run


def _rec(t, value, **kw):
    base = dict(t=t, step=0, l2_norm=value, h_norms=(), dissipation=0.0, potential=0.0, max_grad=0.0)
    base.update(kw)
    return DiagnosticsRecord(**base)


def test_zero_state_record():
    rec = record(SimState(SpectralField.zeros(Grid(8))), PowerLawA(3.0), l_max=6)
    assert rec.l2_norm == 0.0 and rec.h_norms == (0.0,) * 6
    assert rec.dissipation == rec.potential == rec.max_grad == 0.0


def test_taylor_green_dissipation():
    rec = record(SimState(taylor_green(Grid(32))), Newtonian(1.0), l_max=3)
    assert rec.dissipation == pytest.approx(4 * math.pi**3, rel=1e-13)
    assert rec.dissipation == pytest.approx(124.03, abs=0.01)
    # Newtonian potential is m0 |Du|^2 integrated
    assert rec.potential == pytest.approx(rec.dissipation, rel=1e-13)
    assert rec.max_grad == pytest.approx(math.sqrt(2), rel=1e-12)


def test_record_norms_monotone_in_order():
    rec = record(SimState(random_solenoidal(Grid(16), 3, 5, 2.0)), PowerLawB(1.5), l_max=6)
    norms = (rec.l2_norm,) + rec.h_norms
    assert all(a <= b for a, b in zip(norms, norms[1:]))
    assert rec.h_norms[2] == pytest.approx(2.0, rel=1e-12)


def test_record_rejects_large_l_max():
    with pytest.raises(DomainError):
        record(SimState(taylor_green(Grid(8))), Newtonian(), l_max=7)


@pytest.mark.parametrize("law", [Newtonian(1.0), PowerLawA(3.0), PowerLawB(1.5, m0=0.5)], ids=repr)
def test_dissipation_lower_bound(law):
    for seed in range(3):
        u = random_solenoidal(Grid(16), seed, 4, 10.0)
        rec = record(SimState(u), law)
        # Parseval: ||Du||^2 = (||grad u||^2) / 2 for solenoidal u, i.e. (h1^2 - l2^2) / 2
        du2 = 0.5 * (rec.h_norms[0] ** 2 - rec.l2_norm**2)
        assert du2 == pytest.approx(float(np.mean(sym_gradient(u).mag2)) * u.grid.volume, rel=1e-10)
        assert rec.dissipation >= law.m0 * du2 * (1 - 1e-10)


def test_fit_decay_rate_examples():
    two = DiagnosticsSeries(0, [_rec(0.0, 3.0), _rec(1.0, 3.0 * math.exp(-1))])
    assert fit_decay_rate(two, min_records=2) == pytest.approx(-1.0, rel=1e-12)
    const = DiagnosticsSeries(0, [_rec(0.1 * i, 2.5) for i in range(12)])
    assert fit_decay_rate(const) == pytest.approx(0.0, abs=1e-14)
    ramp = DiagnosticsSeries(0, [_rec(0.1 * i, math.exp(-0.7 * 0.1 * i)) for i in range(20)])
    assert fit_decay_rate(ramp, window=(0.5, 1.5)) == pytest.approx(-0.7, rel=1e-10)


def test_fit_decay_rate_errors():
    few = DiagnosticsSeries(0, [_rec(0.1 * i, 1.0) for i in range(5)])
    with pytest.raises(DomainError):
        fit_decay_rate(few)
    bad = DiagnosticsSeries(0, [_rec(0.1 * i, 1.0 - 0.1 * i) for i in range(12)])
    with pytest.raises(DomainError):
        fit_decay_rate(bad)
    with pytest.raises(DomainError):
        fit_decay_rate(bad, field="h3")


def test_newtonian_taylor_green_rate():
    cfg = SimConfig(n=16, dt=1e-2, t_end=0.5, l_max=1, diag_every=5)
    _, series = run(cfg)
    assert fit_decay_rate(series, "l2") == pytest.approx(-1.0, abs=1e-4)
    # potential is exactly m0 ||Du||^2 for the Newtonian law, which decays
    pot = series.column("potential")
    assert np.all(np.diff(pot) < 0)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def series_strategy(draw):
    l_max = draw(st.integers(0, 6))
    n = draw(st.integers(0, 5))
    recs = [
        DiagnosticsRecord(
            t=draw(finite), step=draw(st.integers(0, 2**40)), l2_norm=draw(finite),
            h_norms=tuple(draw(finite) for _ in range(l_max)), dissipation=draw(finite),
            potential=draw(finite), max_grad=draw(finite), energy_residual=draw(finite),
        )
        for _ in range(n)
    ]
    return DiagnosticsSeries(l_max, recs)


@settings(max_examples=60, deadline=None)
@given(series=series_strategy())
def test_csv_round_trip(tmp_path_factory, series):
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    write_series(series, path)
    back = read_series(path)
    assert back.records == series.records
    if series.records:
        assert back.l_max == series.l_max


def test_empty_series_is_header_only(tmp_path):
    path = tmp_path / "d.csv"
    write_series(DiagnosticsSeries(3), path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert len(read_series(path)) == 0


def test_unused_h_columns_are_empty(tmp_path):
    path = tmp_path / "d.csv"
    write_series(DiagnosticsSeries(2, [_rec(0.0, 1.0, h_norms=(2.0, 3.0))]), path)
    row = path.read_text().splitlines()[1].split(",")
    assert row[3:9] == ["2", "3", "", "", "", ""]


def test_malformed_row_names_line(tmp_path):
    path = tmp_path / "d.csv"
    write_series(DiagnosticsSeries(0, [_rec(0.0, 1.0), _rec(1.0, 0.5)]), path)
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace("0.5", "abc", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SeriesFormatError, match="line 3"):
        read_series(path)
    path.write_text(lines[0] + "\n1,2,3\n")
    with pytest.raises(SeriesFormatError, match="line 2"):
        read_series(path)
    path.write_text("t,step\n")
    with pytest.raises(SeriesFormatError, match="line 1"):
        read_series(path)


def test_summarize_keys():
    cfg = SimConfig(n=8, dt=0.05, t_end=0.6, l_max=2)
    _, series = run(cfg)
    s = summarize(series)
    assert set(s["final_norms"]) == {"l2", "h1", "h2"}
    assert s["fitted_rates"]["l2"] == pytest.approx(-1.0, abs=1e-3)
    assert s["min"]["l2"] == series[-1].l2_norm and s["max"]["l2"] == series[0].l2_norm
    assert summarize(DiagnosticsSeries())["final_norms"] == {}
