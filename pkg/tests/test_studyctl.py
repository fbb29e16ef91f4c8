import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortpulse import cli
from shortpulse.errors import ConfigError
from shortpulse.studyctl import (
    CSV_COLUMNS,
    RunConfig,
    _check_scan,
    cmd_compare,
    cmd_convergence,
    cmd_run,
    load_config,
    read_csv,
)

# a run small enough for unit tests: delta = 0.1 out to ubar = 3
SMALL = {
    "data": {"delta": 0.1},
    "grid": {"ubar_max": 3.0, "h_coarse": 0.05},
    "diagnostics": {"sup_t_min": 1.5, "sup_t_max": 3.0, "sup_samples": 8, "identity_ubar": 2.5, "ks_times": [2.0, 3.0]},
}


def small(**over):
    d = json.loads(json.dumps(SMALL))
    for k, v in over.items():
        d.setdefault(k, {}).update(v) if isinstance(v, dict) else d.__setitem__(k, v)
    return RunConfig.from_dict(d)


def _files(path):
    return {n: open(os.path.join(path, n), "rb").read() for n in sorted(os.listdir(path)) if not os.path.isdir(os.path.join(path, n))}


# --- configuration ----------------------------------------------------------

def test_default_config_validates():
    cfg = RunConfig().validate()
    assert cfg.h_fine() == pytest.approx(0.05 / 64)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.01, 0.1),
    st.floats(0.1, 5.0),
    st.sampled_from([{"preset": "q0", "strength": 1.0}, {"preset": "dt_squared", "strength": 2.0}, {"preset": "linear"}]),
    st.floats(0.5, 0.99, exclude_min=True),
    st.integers(0, 2),
)
def test_config_round_trip_is_bit_identical(delta, amp, coupling, alpha, refine):
    cfg = RunConfig.from_dict({
        "data": {"delta": delta, "amplitude": amp},
        "coupling": coupling,
        "norm": {"alpha": alpha},
        "grid": {"refine": refine},
    })
    text = cfg.to_json()
    again = RunConfig.from_json(text)
    assert again == cfg and again.to_json() == text


def test_load_config_files_in_repo():
    here = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in sorted(os.listdir(here)):
        cfg = load_config(os.path.join(here, name))
        assert RunConfig.from_json(cfg.to_json()) == cfg


@pytest.mark.parametrize("bad", [
    {"data": {"delta": 0.5}},
    {"data": {"delta": 0.0}},
    {"grid": {"h_fine": 0.01}},
    {"grid": {"ubar_max": 1.0}},
    {"norm": {"alpha": 1.2}},
    {"norm": {"max_order": 3}},
    {"coupling": {"preset": "cubic"}},
    {"data": {"n_fields": 2}},
    {"diagnostics": {"sup_samples": 4}},
    {"compare": {"amplitudes": [1.0, -1.0]}},
    {"checkpoint_every": 0},
    {"typo": 1},
    {"data": {"width": 0.1}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_invalid_json_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(p))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


@pytest.mark.parametrize("deltas", [[0.05], [0.1, 0.05], [0.1, 0.05, 0.02], [0.1, 0.1, 0.05]])
def test_bad_scans_rejected(deltas):
    with pytest.raises(ConfigError):
        _check_scan(deltas)


def test_scan_sorted_descending():
    assert _check_scan([0.025, 0.1, 0.05]) == [0.1, 0.05, 0.025]


def test_convergence_needs_three_levels(tmp_path):
    with pytest.raises(ConfigError):
        cmd_convergence(small(), levels=2, out=str(tmp_path))


# --- runs -------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("run") / "a")
    return cmd_run(small(), out=out)


def test_run_writes_manifest_and_csvs(small_run):
    names = os.listdir(small_run)
    csvs = [n for n in names if n.endswith(".csv")]
    assert "manifest.json" in names and "config.json" in names and len(csvs) >= 6
    man = json.load(open(os.path.join(small_run, "manifest.json")))
    assert set(man["csv"]) == set(csvs)
    for name in csvs:
        header, rows = read_csv(os.path.join(small_run, name))
        assert tuple(header) == tuple(CSV_COLUMNS[name]) and rows
    assert man["coupling"]["is_null"] and not man["blow_up"]["detected"]
    assert man["region_iii_sup_abs_psi"] == 0.0


def test_rerun_is_byte_identical(small_run):
    first = _files(small_run)
    cmd_run(small(), out=small_run)
    assert _files(small_run) == first


def test_checkpoints_written(tmp_path):
    out = cmd_run(small(grid={"ubar_max": 2.0}), out=str(tmp_path / "ck"), checkpoint_every=50)
    man = json.load(open(os.path.join(out, "checkpoints", "checkpoints.json")))
    assert man["levels"] and man["latest"].endswith(".npz")


def test_non_null_run_reports_blow_up(tmp_path):
    cfg = small(coupling={"preset": "dt_squared", "strength": 1.0}, data={"amplitude": 4.0})
    out = cmd_run(cfg, out=str(tmp_path / "dt2"))
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert man["blow_up"]["detected"] and 1.0 < man["blow_up"]["t_star"] < 3.0
    assert not man["coupling"]["is_null"]
    assert any(isinstance(v, dict) and v.get("status") == "unavailable" for v in man["diagnostics"].values())


def test_compare_verdicts(tmp_path):
    cfg = small(compare={"amplitudes": [4.0]})
    rep = cmd_compare(cfg, out=str(tmp_path / "cmp"))
    assert rep["verdict"] == "null survives / non-null blows up"
    assert os.path.exists(tmp_path / "cmp" / "peak_Lb_comparison_amp4.csv")
    both = small(compare={"amplitudes": [1.0], "coupling": {"preset": "q0", "strength": 2.0}})
    assert cmd_compare(both, out=str(tmp_path / "both"))["verdict"] == "both survive"


# --- command line -----------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMALL))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert os.path.exists(tmp_path / "r" / "manifest.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"data": {"delta": 0.5}}))
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "delta" in capsys.readouterr().err
    assert cli.main(["study", "--config", str(cfg), "--deltas", "0.1", "0.05", "--out", str(tmp_path / "s")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["bogus"])
