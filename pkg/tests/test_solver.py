import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortpulse.errors import ConfigError, SolverError
from shortpulse.nullforms import default_coupling, dt_squared_coupling, linear_coupling
from shortpulse.nullgrid import build_grid
from shortpulse.oracle import linear_psi, linear_psi_grid
from shortpulse.pulsedata import make_short_pulse
from shortpulse.solver import EvolutionParams, convergence_study, evolve, load_checkpoint

LIN = EvolutionParams(coupling=linear_coupling())

# frozen: oracle errors at h = delta/32, /64, /128 (delta = 0.05, ubar_max = 4)
FROZEN_LINEAR_ERRORS = (5.256613876240268e-04, 1.3040440014337393e-04, 3.251648650518966e-05)


@pytest.fixture(scope="module")
def small():
    d = 0.05
    return make_short_pulse(d), build_grid(d, ubar_max=4.0)


def test_oracle_initial_slice_reproduces_data():
    D = make_short_pulse(0.05)
    r = np.linspace(0.85, 1.05, 401)
    u = (1 - r) / 2
    np.testing.assert_allclose(linear_psi(D, u, 1 - u), r * D.phi0(r), atol=1e-10)


def test_linear_run_matches_oracle(small):
    D, g = small
    s = evolve(D, g, LIN)
    err = np.nanmax(np.abs(np.where(s.valid, s.psi[0] - linear_psi_grid(D, g), 0.0)))
    assert err < 2e-4
    assert not s.report.detected
    assert s.region_iii_sup() == 0.0


def test_linear_convergence_frozen():
    rep = convergence_study(make_short_pulse(0.05), LIN, [0.05 / 32, 0.05 / 64, 0.05 / 128])
    np.testing.assert_allclose(rep.errors, FROZEN_LINEAR_ERRORS, rtol=1e-6)
    assert rep.monotone and abs(rep.order - 2.0) < 0.05


def test_null_form_self_convergence():
    rep = convergence_study(make_short_pulse(0.05), EvolutionParams(), [0.05 / 32, 0.05 / 64, 0.05 / 128])
    assert rep.reference.startswith("self") and rep.order >= 1.8


def test_convergence_needs_three_halving_levels():
    D = make_short_pulse(0.05)
    with pytest.raises(ConfigError):
        convergence_study(D, LIN, [0.05 / 32, 0.05 / 64])
    with pytest.raises(ConfigError):
        convergence_study(D, LIN, [0.05 / 32, 0.05 / 48, 0.05 / 64])


def test_non_null_blow_up_frozen(small):
    D, g = small
    rep = evolve(D, g, EvolutionParams(coupling=dt_squared_coupling())).report
    assert rep.detected and rep.t_star == pytest.approx(1.15234375, abs=1e-12)
    assert rep.trigger == "corrector divergence" and rep.peak > 100


def test_blow_up_time_decreases_with_amplitude():
    g = build_grid(0.05, ubar_max=3.0)
    ts = [evolve(make_short_pulse(0.05, a), g, EvolutionParams(coupling=dt_squared_coupling())).report.t_star
          for a in (1.0, 2.0, 4.0)]
    assert ts[0] > ts[1] > ts[2]


def test_corrector_stall_raises(small):
    D, g = small
    with pytest.raises(SolverError, match="did not converge"):
        evolve(D, g, EvolutionParams(max_iter=1))


def test_configuration_mismatch(small):
    D, g = small
    with pytest.raises(ConfigError):
        evolve(make_short_pulse(0.05, n_fields=2), g, EvolutionParams())
    with pytest.raises(ConfigError):
        evolve(make_short_pulse(0.1), g, EvolutionParams())
    with pytest.raises(ConfigError):
        EvolutionParams(max_iter=0)


def test_checkpoints_and_callback(tmp_path, small):
    D, g = small
    seen = []
    s = evolve(D, g, EvolutionParams(), checkpoint_every=300, checkpoint_dir=str(tmp_path),
               callback=lambda jj, psi, status: seen.append(jj))
    assert seen[-1] == g.n_ubar and seen == sorted(seen)
    man, psi, status, level = load_checkpoint(str(tmp_path))
    assert level == g.n_ubar and man["grid_hash"] == g.node_hash()
    ok = s.valid
    np.testing.assert_array_equal(psi[:, ok], s.psi[:, ok])


def test_mean_corrector_iterations_small(small):
    D, g = small
    st_ = evolve(D, g, EvolutionParams(coupling=default_coupling())).stats
    assert 1.0 <= st_["mean_iterations"] <= 4.0 and st_["max_iterations_at_cell"] <= 60


@settings(max_examples=10, deadline=None)
@given(st.floats(-3.0, 3.0).filter(lambda a: abs(a) > 1e-3))
def test_linear_evolution_is_homogeneous(a):
    g = build_grid(0.1, ubar_max=2.5)
    base = evolve(make_short_pulse(0.1, 1.0), g, LIN).psi
    scaled = evolve(make_short_pulse(0.1, a), g, LIN).psi
    np.testing.assert_allclose(scaled, a * base, rtol=1e-12, atol=1e-13)
