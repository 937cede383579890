import itertools

import numpy as np
import pytest

from photonfuse.analysis import (
    CSV_COLUMNS,
    PRIOR_THRESHOLD,
    UNATTAINABLE,
    beats_prior,
    parse_grid,
    rows_to_csv,
    rows_to_json,
    sweep,
    threshold_eta_d_min,
    threshold_from_kappa,
    tolerance_report,
)
from photonfuse.sources import EmissionParams, LossParams, loss_from_emission


def test_threshold_endpoints():
    assert threshold_eta_d_min(0.0) == 0.5
    assert threshold_eta_d_min(0.25) == pytest.approx(2 / 3, abs=1e-15)
    assert threshold_eta_d_min(0.5) is UNATTAINABLE
    assert threshold_eta_d_min(0.7) is UNATTAINABLE
    with pytest.raises(ValueError):
        threshold_eta_d_min(1.0)
    with pytest.raises(ValueError):
        threshold_eta_d_min(-0.1)


def test_kappa_form():
    assert threshold_from_kappa(0.0) == 0.5
    assert threshold_from_kappa(1 / 3) == pytest.approx(2 / 3, abs=1e-15)
    assert threshold_from_kappa(1.0) is UNATTAINABLE
    with pytest.raises(ValueError):
        threshold_from_kappa(-1)


@pytest.mark.parametrize("s,b", list(itertools.product((0.1, 0.3, 0.6, 0.9), (0.0, 0.02, 0.05, 0.1))))
def test_forms_agree(s, b):
    if s + b > 1:
        pytest.skip("invalid emission point")
    e = EmissionParams(s, 0.0, b)
    k, f = threshold_from_kappa(b / s), threshold_eta_d_min(loss_from_emission(e).f_a)
    assert (k is UNATTAINABLE) == (f is UNATTAINABLE)
    if k is not UNATTAINABLE:
        assert abs(k - f) < 1e-12


def test_monotone_and_convex():
    fa = np.linspace(0, 0.49, 50)
    t = np.array([threshold_eta_d_min(x) for x in fa])
    assert np.all(np.diff(t) > 0)
    assert np.all(np.diff(t, 2) > 0)
    assert t[fa <= 0.5 - 1e-9].max() <= 1 / (2 * 0.51) + 1e-12


def test_beats_prior():
    assert PRIOR_THRESHOLD == pytest.approx(2 / 3)
    assert beats_prior(0.6)
    assert not beats_prior(2 / 3)
    assert not beats_prior(UNATTAINABLE)


def test_tolerance_report_examples():
    r = tolerance_report(EmissionParams(1.0), 0.51)
    assert r.tolerant and r.margin == pytest.approx(0.01, abs=1e-15)
    r = tolerance_report(LossParams(f_a=0.2), 0.6)
    assert not r.tolerant and r.margin == pytest.approx(-0.02, abs=1e-15)
    for f_a in (0.0, 0.1, 0.24):
        assert tolerance_report(LossParams(f_a=f_a), 2 / 3 + 1e-9).tolerant
    with pytest.raises(ValueError, match="eta_s must be positive"):
        tolerance_report(EmissionParams(0.0, 0.1, 0.1), 0.9)


def test_tolerance_report_slow_path():
    r = tolerance_report(LossParams(0.1, 0.3, 0.2), 0.8, simulate=True)
    assert abs(r.sim_epsilon - r.epsilon) < 1e-9
    assert r.sim_residual < 1e-9


def test_parse_grid():
    var, vals = parse_grid("f_a=0:0.49:0.01")
    assert var == "f_a" and len(vals) == 50 and vals[0] == 0.0 and vals[-1] == 0.49
    assert parse_grid("eta_d=0.5,1") == ("eta_d", [0.5, 1.0])
    for bad in ("f_a", "x=0:1:0.1", "f_a=1:0:0.1", "f_a=0:1:0", "f_a=", "f_a=a:b:c"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_sweep_examples():
    rows = sweep({"f_a": [0.0, 0.1, 0.2, 0.3, 0.4]})
    mins = [r["eta_d_min"] for r in rows]
    assert mins[0] == 0.5 and all(b > a for a, b in zip(mins, mins[1:]))
    assert list(rows[0])[: len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    assert rows[0]["p_success"] == 0.125
    for r in sweep({"f_a": [0.0, 0.2, 0.24, 0.25, 0.3, 0.6]}):
        assert r["improved"] == (r["f_a"] < 0.25)
    with pytest.raises(ValueError):
        sweep({})
    with pytest.raises(ValueError):
        sweep({"f_a": [0.1], "eta_s": [0.5]})


def test_sweep_two_dimensional_ordering():
    rows = sweep({"eta_s": [0.5, 0.6], "eta_b": [0.0, 0.1]}, base=EmissionParams(0.5), eta_d=0.9)
    assert len(rows) == 4
    assert [r["kappa"] for r in rows] == pytest.approx([0, 0.2, 0, 0.1 / 0.6])


def test_sweep_slow_path_matches():
    rows = sweep({"f_a": [0.0, 0.15, 0.45]}, base=LossParams(f_c=0.2, f_b=0.1), eta_d=0.7, simulate=True)
    for r in rows:
        assert abs(r["sim_epsilon"] - r["epsilon"]) < 1e-9


def test_serialization():
    rows = sweep({"f_a": [0.25, 0.6]})
    text = rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0].startswith(",".join(CSV_COLUMNS))
    assert "unattainable" in lines[2]
    assert lines[1].split(",")[3] == repr(2 / 3)
    assert '"unattainable"' in rows_to_json(rows)
    assert rows_to_csv([]) == ""
