import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from shortpulse import diagnostics as dg
from shortpulse.errors import DiagnosticError, FitError, PartialFluxError
from shortpulse.nullgrid import extract_cone


@pytest.fixture(scope="module")
def lin(get_sheet):
    return get_sheet("linear", 0.05)


@pytest.fixture(scope="module")
def q0(get_sheet):
    return get_sheet("q0", 0.05)


# --- fits -------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 1), st.floats(1e-3, 1e3))
def test_power_law_fit_recovers_exact_data(p, a):
    t = np.geomspace(5, 40, 12)
    f = dg.fit_decay(list(zip(t, a * t**p)))
    assert f.exponent == pytest.approx(p, abs=1e-9)
    assert f.amplitude == pytest.approx(a, rel=1e-8)
    assert f.residual_rms < 1e-9


def test_fit_errors():
    t = np.geomspace(5, 40, 6)
    with pytest.raises(FitError):
        dg.fit_decay(list(zip(t, t**-1)))
    with pytest.raises(FitError):
        dg.fit_power_law([1, 2, 3], [1, 0, 1])
    with pytest.raises(FitError):
        dg.fit_power_law([2, 2], [1, 3])


def test_plateau_is_median_of_compensated_values():
    t = np.array([5.0, 10.0, 20.0, 40.0])
    v = np.array([2.0, 3.0, 100.0, 4.0]) / t**2
    assert dg.plateau(list(zip(t, v)), 2) == pytest.approx(3.5)


# --- vector fields ----------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["T", "S", "B"]), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 5), st.floats(0, 5))
def test_null_frame_fields_match_definitions(z, ft, fr, u, ubar):
    field = dg.FIELDS[z]
    via_null = field.apply(ft + fr, ft - fr, u, ubar)
    via_tr = field.apply_tr(ft, fr, u + ubar, ubar - u)
    assert float(via_null) == pytest.approx(float(via_tr), abs=1e-9)


def test_good_bad_classification():
    assert not dg.FIELDS["T"].good and dg.FIELDS["S"].good and dg.FIELDS["B"].good


def test_vectorfield_identities_hold():
    t, r = sp.symbols("t r", positive=True)
    expr = sp.exp(-((t - r - 1) ** 2)) / (1 + t + r) + sp.sin(r) * t
    assert dg.vectorfield_identity_check(expr, t, r) < 1e-8


def test_norm_config_validation():
    with pytest.raises(DiagnosticError):
        dg.NormConfig(alpha=1.0)
    with pytest.raises(DiagnosticError):
        dg.NormConfig(max_order=3)


# --- sheets -----------------------------------------------------------------

def test_word_tree_first_letters(lin):
    words = {w: (f, lf, lbf) for w, f, lf, lbf in dg.word_tree(lin, 1)}
    assert set(words) == {"", "T", "S", "B"}
    _, lf, lbf = words[""]
    np.testing.assert_array_equal(words["T"][0], 0.5 * (lf + lbf))


def test_bad_then_good_word_count(q0):
    _, _, parts = dg.weighted_energy(q0, dg.NormConfig(0.9, 0.05, 2), 0.05, 10.0, terms=True)
    words = [p["word"] for p in parts]
    assert len(words) == 11 and "ST" not in words and "TS" in words


def test_linear_energy_balance(lin):
    for t in (5.0, 10.0, 40.0):
        assert dg.linear_energy_balance(lin, t)["relative_defect"] < 1e-3


@pytest.mark.parametrize("X", dg.MULTIPLIERS)
def test_energy_identity_balances(lin, q0, X):
    # same relative-imbalance bound as the acceptance check
    assert dg.energy_identity_residual(lin, X, 0.05, 10.0) <= 0.02
    assert dg.energy_identity_residual(q0, X, 0.05, 10.0) <= 0.02


def test_energy_identity_unknown_multiplier(lin):
    with pytest.raises(DiagnosticError):
        dg.energy_identity_terms(lin, "S", 0.05, 10.0)


def test_flux_tail_is_non_increasing(q0):
    tail = dg.flux_tail(q0, np.linspace(1, 40, 30))
    vals = [v for _, v in tail]
    assert all(b <= a + 1e-15 for a, b in zip(vals[:-1], vals[1:]))
    assert vals[0] <= dg.slice_energy(q0, 1.0) * 1.01


def test_sup_norm_rejects_unknown_derivative(q0):
    with pytest.raises(DiagnosticError):
        dg.sup_norm(q0, extract_cone(q0.grid, "slice", 5.0), "Lb2")


def test_partial_flux_after_blow_up(get_sheet):
    s = get_sheet("dt2", 0.05, 1.0)
    with pytest.raises(PartialFluxError):
        dg.sup_series(s, [10.0], "L")


def test_certificate_keys(q0):
    cert = dg.c_delta_certificate(q0, 0.05, max_order=1)
    assert set(cert) == {f"{k}:{w}" for k in ("L", "Lb") for w in ("id", "T", "S", "B")}
    assert all(np.isfinite(v) and v >= 0 for v in cert.values())


def test_klainerman_sobolev_on_analytic_field_is_grid_stable():
    t, r = sp.symbols("t r", positive=True)
    f = dg.AnalyticField(sp.exp(-(t - r - 1) ** 2) / (1 + t + r), t, r)
    a = dg.klainerman_sobolev_check(f, (5.0, 10.0), delta=0.05, h=0.01, max_order=2)
    b = dg.klainerman_sobolev_check(f, (5.0, 10.0), delta=0.05, h=0.005, max_order=2)
    assert 0 < a < 10 and abs(a - b) / b < 0.05


def test_klainerman_sobolev_sheet_ratio_positive(q0):
    v = dg.klainerman_sobolev_check(q0, (10.0,))
    assert 0 < v < 1
