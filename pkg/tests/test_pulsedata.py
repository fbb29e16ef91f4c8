import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from shortpulse.errors import ConfigError, InputError, ResolutionError
from shortpulse.nullforms import default_coupling
from shortpulse.pulsedata import (
    PulseProfile,
    bump,
    data_constraint_defect,
    initial_classical_energy,
    initial_weighted_norm,
    make_short_pulse,
    zero_data,
)

# frozen reference values (quadrature with step delta/64, 8-point Gauss panels)
FROZEN_E = {
    0.1: (85.5396382511131, 264995.61709973594, 1308161784.013055),
    0.05: (95.24133609126642, 1179946.40691736, 23287676055.11998),
    0.025: (100.30449007017933, 4970456.821876086, 392348326307.8888),
}
FROZEN_WEIGHTED_LE1 = {0.1: 527.606443399856, 0.05: 831.8765032584736, 0.025: 1419.8253345488667}


def test_bump_closed_form_values():
    assert bump(-1.0) == 0.0 and bump(1.5) == 0.0
    assert bump(0.5) == pytest.approx(1.0, rel=1e-14)
    # 4**10 (1/4)**10 (3/4)**10 = 3**10 / 2**20
    assert bump(0.25) == pytest.approx(3**10 / 2**20, rel=1e-13)


def test_profile_validation():
    for bad in [("poly", (9, 10)), ("poly", (10.5, 10)), ("poly", (10,)), ("exp", (10, 10))]:
        with pytest.raises(ConfigError):
            PulseProfile(*bad)


def test_profile_is_flat_to_order_nine_at_endpoints():
    # the n-th derivative behaves like eps**(10 - n) at both ends for n <= 9
    p = PulseProfile()
    for n in range(10):
        for edge in (lambda e: e, lambda e: 1.0 - e):
            ratio = p(edge(1e-4), n) / p(edge(1e-3), n)
            assert abs(ratio) == pytest.approx(10.0 ** -(10 - n), rel=0.1)
    assert abs(p(1e-12, 10)) > 1.0


def test_make_short_pulse_rejects_delta_out_of_range():
    for d in (0.0, -0.1, 0.3, 0.5, float("nan")):
        with pytest.raises(ConfigError):
            make_short_pulse(d)


def test_support_and_amplitude():
    d = 0.05
    D = make_short_pulse(d, amplitude=1.0)
    r = np.linspace(0.0, 1.5, 30001)
    outside = (r <= 1 - 2 * d) | (r >= 1.0)
    assert not D.phi0(r)[outside].any() and not D.phi1(r)[outside].any()
    assert D.sup_norms()["sup_dr0_phi0"] == pytest.approx(np.sqrt(d), rel=1e-12)
    assert np.sqrt(d) == pytest.approx(0.2236, abs=1e-4)


def test_phi1_is_minus_radial_derivative():
    D = make_short_pulse(0.05)
    r = np.linspace(0.9, 1.0, 2001)[1:-1]
    h = 1e-7
    fd = (D.phi0(r + h) - D.phi0(r - h)) / (2 * h)
    np.testing.assert_allclose(D.phi1(r), -fd, atol=1e-5 * np.max(np.abs(fd)))


def test_phi0_integral_matches_quadrature():
    D = make_short_pulse(0.1)
    r = np.linspace(0.0, 1.2, 120001)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(r) * (D.phi0(r)[1:] + D.phi0(r)[:-1]))])
    np.testing.assert_allclose(D.phi0_integral(r), cum, atol=1e-9)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_derivative_scaling_law(k):
    vals = [make_short_pulse(d).sup_norms()[f"sup_dr{k}_phi0"] * d ** (k - 0.5) for d in (0.1, 0.05, 0.025)]
    assert max(vals) / min(vals) <= 2.0


def test_initial_energy_zero_data_and_resolution_guard():
    assert initial_classical_energy(zero_data(0.05), 1) == 0.0
    with pytest.raises(ResolutionError):
        initial_classical_energy(make_short_pulse(0.05), 0, step=0.05 / 8)


@pytest.mark.parametrize("d", sorted(FROZEN_E))
def test_initial_energies_frozen(d):
    D = make_short_pulse(d)
    for k in range(3):
        assert initial_classical_energy(D, k) == pytest.approx(FROZEN_E[d][k], rel=1e-9)


def test_e0_matches_symbolic_oracle():
    # E_0 = int (phi0'^2 + phi1^2) 4 pi r^2 dr = 4 pi int_0^1 psi'(s)^2 (1 - 2 delta s)^2 ds
    s, d = sp.symbols("s d", positive=True)
    psi = 4**10 * s**10 * (1 - s) ** 10
    expr = 4 * sp.pi * sp.integrate(sp.diff(psi, s) ** 2 * (1 - 2 * d * s) ** 2, (s, 0, 1))
    for dv in (0.1, 0.05, 0.025):
        exact = float(expr.subs(d, dv))
        assert initial_classical_energy(make_short_pulse(dv), 0) == pytest.approx(exact, rel=1e-10)


def test_initial_weighted_norm_frozen_and_uniform():
    for d, v in FROZEN_WEIGHTED_LE1.items():
        assert initial_weighted_norm(make_short_pulse(d), 1) == pytest.approx(v, rel=1e-8)
    ratio = FROZEN_WEIGHTED_LE1[0.025] / FROZEN_WEIGHTED_LE1[0.1]
    assert 0.25 <= ratio <= 4.0
    assert initial_weighted_norm(zero_data(0.05), 1) == 0.0
    with pytest.raises(InputError):
        initial_weighted_norm(make_short_pulse(0.05), 4)


def test_bad_derivative_single_term_uniform():
    vals = []
    for d in (0.1, 0.05, 0.025):
        _, parts = initial_weighted_norm(make_short_pulse(d), 1, terms=True)
        vals.append(next(v for k, l, w, i, which, v in parts if w == "T" and which == "Lb"))
    assert all(np.isfinite(vals)) and max(vals) / min(vals) <= 4.0


def test_data_constraint_defect_is_reported_not_small():
    # (2/r) phi0' - Q is O(delta^(-1/2)) for this data
    vals = [data_constraint_defect(make_short_pulse(d), default_coupling()) for d in (0.1, 0.05, 0.025)]
    assert vals[0] < vals[1] < vals[2]


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.25), st.floats(0.1, 5.0), st.floats(-0.5, 1.5))
def test_support_property(d, amp, s):
    D = make_short_pulse(d, amp)
    r = 1.0 - 2.0 * d * s
    if s <= 0 or s >= 1:
        assert D.phi0(r) == 0.0 and D.phi1(r) == 0.0
    else:
        assert abs(D.phi0(r)) <= amp * np.sqrt(d) * (1 + 1e-12)
