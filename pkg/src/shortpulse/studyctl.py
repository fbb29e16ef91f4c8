"""Run configuration, single runs, delta scans, convergence suites and null/non-null comparisons.

Everything a run produces goes to its own directory: ``manifest.json`` plus
two-column CSV series.  Study-level verdicts are recomputed from those CSVs
only, so a finished study can be re-audited without re-running anything.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import diagnostics as dg
from .errors import ConfigError, DiagnosticError, PartialFluxError, ShortPulseError
from .nullforms import (
    SystemCoupling,
    default_coupling,
    dt_squared_coupling,
    linear_coupling,
)
from .nullgrid import build_grid
from .pulsedata import DELTA_MAX, PulseProfile, initial_classical_energy, initial_weighted_norm, make_short_pulse
from .solver import EvolutionParams, convergence_study, evolve

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_PRESETS = {"q0": default_coupling, "dt_squared": dt_squared_coupling}


def coupling_from_json(d) -> SystemCoupling:
    """Either the full serialization or a preset {"preset": "q0" | "dt_squared" | "linear", "strength": c}."""
    if not isinstance(d, dict):
        raise ConfigError(f"coupling must be an object, got {type(d).__name__}", module="studyctl")
    try:
        if "preset" in d:
            name = d["preset"]
            if name == "linear":
                return linear_coupling(int(d.get("n_fields", 1)))
            if name not in _PRESETS:
                raise ConfigError(f"unknown coupling preset {name!r}", module="studyctl")
            return _PRESETS[name](float(d.get("strength", 1.0)))
        c = SystemCoupling.from_dict(d)
        c.reduced()
        return c
    except ConfigError:
        raise
    except (ShortPulseError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid coupling: {e}", module="studyctl") from e


@dataclass(frozen=True)
class DataConfig:
    delta: float = 0.05
    amplitude: float = 1.0
    profile_kind: str = "poly"
    profile_params: tuple = (10, 10)
    n_fields: int = 1


@dataclass(frozen=True)
class GridConfig:
    ubar_max: float = 40.0
    h_fine: float | None = None  # None means delta / 64
    h_coarse: float = 0.05
    refine: int = 0


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 60
    tol: float = 1e-12
    threshold: float = 1e6
    divergence_ratio: float = 0.5


@dataclass(frozen=True)
class DiagnosticsConfig:
    sup_t_min: float = 5.0
    sup_t_max: float = 40.0
    sup_samples: int = 16
    weighted: bool = True
    certificate: bool = True
    energy_identity: bool = True
    identity_ubar: float = 10.0
    klainerman_sobolev: bool = True
    ks_times: tuple = (5.0, 10.0, 20.0, 40.0)
    flux_tail: bool = True
    initial_norms: bool = True


@dataclass(frozen=True)
class NormSettings:
    alpha: float = 0.9
    max_order: int = 2


@dataclass(frozen=True)
class CompareConfig:
    coupling: dict | None = None  # the second coupling; None means (d_t phi)^2
    amplitudes: tuple = (1.0,)


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    coupling: dict = field(default_factory=lambda: {"preset": "q0", "strength": 1.0})
    solver: SolverConfig = field(default_factory=SolverConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    norm: NormSettings = field(default_factory=NormSettings)
    compare: CompareConfig = field(default_factory=CompareConfig)
    out: str = "runs/run"
    checkpoint_every: int | None = None

    # -- derived objects -------------------------------------------------
    def make_data(self):
        d = self.data
        try:
            prof = PulseProfile(d.profile_kind, tuple(d.profile_params))
            return make_short_pulse(d.delta, d.amplitude, prof, d.n_fields)
        except ConfigError as e:
            raise ConfigError(str(e).split("] ", 1)[-1], module="studyctl") from e

    def make_coupling(self) -> SystemCoupling:
        return coupling_from_json(self.coupling)

    def make_params(self, coupling: SystemCoupling | None = None) -> EvolutionParams:
        s = self.solver
        return EvolutionParams(coupling or self.make_coupling(), s.max_iter, s.tol, s.threshold, s.divergence_ratio)

    def h_fine(self) -> float:
        return self.grid.h_fine if self.grid.h_fine is not None else self.data.delta / 64

    def make_grid(self):
        g = self.grid
        return build_grid(self.data.delta, ubar_max=g.ubar_max, h_coarse=g.h_coarse, h_fine=self.h_fine(), refine=g.refine)

    def sup_times(self) -> np.ndarray:
        d = self.diagnostics
        return np.geomspace(d.sup_t_min, d.sup_t_max, d.sup_samples)

    # -- validation and serialization -------------------------------------
    def validate(self) -> "RunConfig":
        d, g = self.data, self.grid
        if not (0 < d.delta <= DELTA_MAX):
            raise ConfigError(f"delta must lie in (0, {DELTA_MAX}], got {d.delta}", module="studyctl")
        self.make_data()
        c = self.make_coupling()
        if c.n_fields != d.n_fields:
            raise ConfigError(f"coupling acts on {c.n_fields} fields, data has {d.n_fields}", module="studyctl")
        if self.h_fine() > d.delta / 32 * (1 + 1e-12):
            raise ConfigError("h_fine must resolve the pulse (h_fine <= delta/32)", module="studyctl")
        if g.ubar_max <= 1.0 + d.delta or g.h_coarse <= 0 or g.refine < 0:
            raise ConfigError("grid needs ubar_max > 1 + delta, h_coarse > 0, refine >= 0", module="studyctl")
        try:
            self.make_params(c)
            dg.NormConfig(self.norm.alpha, d.delta, self.norm.max_order)
        except ShortPulseError as e:
            raise ConfigError(str(e).split("] ", 1)[-1], module="studyctl") from e
        dc = self.diagnostics
        if not (1.0 < dc.sup_t_min < dc.sup_t_max) or dc.sup_samples < 8:
            raise ConfigError("sup-norm series needs 1 < t_min < t_max and >= 8 samples", module="studyctl")
        if self.compare.coupling is not None:
            coupling_from_json(self.compare.coupling)
        if any(a <= 0 for a in self.compare.amplitudes):
            raise ConfigError("comparison amplitudes must be positive", module="studyctl")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ConfigError("checkpoint cadence must be >= 1 level", module="studyctl")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}", module="studyctl")

        def sub(klass, key):
            v = d.get(key) or {}
            bad = set(v) - set(klass.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}", module="studyctl")
            v = {k: (tuple(x) if isinstance(x, list) else x) for k, x in v.items()}
            try:
                return klass(**v)
            except TypeError as e:
                raise ConfigError(f"section {key!r}: {e}", module="studyctl") from e

        return cls(
            data=sub(DataConfig, "data"),
            grid=sub(GridConfig, "grid"),
            coupling=d.get("coupling", {"preset": "q0", "strength": 1.0}),
            solver=sub(SolverConfig, "solver"),
            diagnostics=sub(DiagnosticsConfig, "diagnostics"),
            norm=sub(NormSettings, "norm"),
            compare=sub(CompareConfig, "compare"),
            out=d.get("out", "runs/run"),
            checkpoint_every=d.get("checkpoint_every"),
        ).validate()

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}", module="studyctl") from e
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object", module="studyctl")
        return cls.from_dict(d)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            return RunConfig.from_json(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}", module="studyctl") from e


# ---------------------------------------------------------------------------
# Persistence helpers


def _clean(x):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python numbers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path: str, header: tuple[str, ...], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path: str) -> tuple[list[str], list[list]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    out = []
    for row in rows[1:]:
        vals = []
        for v in row:
            try:
                vals.append(float(v))
            except ValueError:
                vals.append(v)
        out.append(vals)
    return rows[0], out


# CSV name -> column header; documented in the README
CSV_COLUMNS = {
    "sup_L.csv": ("t", "sup_abs_L_phi"),
    "sup_Lb.csv": ("t", "sup_abs_Lb_phi"),
    "peak_Lb_level.csv": ("ubar", "max_abs_Lb_phi_on_level"),
    "slice_energy.csv": ("t", "energy"),
    "incoming_flux.csv": ("ubar", "incoming_flux_u_le_delta"),
    "c_delta_profile.csv": ("ubar", "ubar_times_abs_Lb_phi"),
    "flux_tail.csv": ("ubar", "remaining_flux"),
    "initial_energy.csv": ("k", "E_k"),
    "certificate.csv": ("word", "value"),
    "weighted_energy.csv": ("word", "E", "Ebar"),
    "energy_identity.csv": ("multiplier", "lhs", "rhs", "relative_residual"),
    "klainerman_sobolev.csv": ("t", "max_ratio"),
}


# ---------------------------------------------------------------------------
# Single run


def _guard(manifest: dict, name: str, blown: bool, fn):
    """Run one diagnostic; after blow-up, missing domain is recorded instead of raised."""
    try:
        return fn()
    except (PartialFluxError, DiagnosticError) as e:
        if not blown:
            raise
        manifest["diagnostics"][name] = {"status": "unavailable", "reason": str(e)}
        return None


def _series_available(sheet, t_values, derivative):
    out = []
    for t in t_values:
        try:
            out.extend(dg.sup_series(sheet, [t], derivative))
        except (PartialFluxError, DiagnosticError):
            break
    return out


def run_sheet(cfg: RunConfig, coupling: SystemCoupling | None = None, amplitude: float | None = None):
    data = cfg.make_data()
    if amplitude is not None:
        data = make_short_pulse(data.delta, amplitude, data.profile, data.n_fields)
    grid = cfg.make_grid()
    ckdir = os.path.join(cfg.out, "checkpoints") if cfg.checkpoint_every else None
    return evolve(data, grid, cfg.make_params(coupling), checkpoint_every=cfg.checkpoint_every, checkpoint_dir=ckdir)


def cmd_run(cfg: RunConfig, out: str | None = None, checkpoint_every: int | None = None) -> str:
    """data -> grid -> evolve -> diagnostics; returns the run directory."""
    if out is not None or checkpoint_every is not None:
        cfg = replace(cfg, out=out or cfg.out, checkpoint_every=checkpoint_every or cfg.checkpoint_every)
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.json"), "w") as fh:
        fh.write(cfg.to_json())
    coupling = cfg.make_coupling()
    sheet = run_sheet(cfg, coupling)
    data, grid = sheet.data, sheet.grid
    delta = data.delta
    blown = sheet.report.detected
    dc = cfg.diagnostics
    man = {
        "schema_version": SCHEMA_VERSION,
        "run_id": os.path.basename(os.path.normpath(cfg.out)),
        "config": cfg.to_dict(),
        "data": {**data.to_dict(), "sup_norms": data.sup_norms()},
        "grid": grid.summary(),
        "coupling": {
            "serialized": coupling.to_dict(),
            "is_null": coupling.is_null(),
            "reduction": [{"target": t, "pair": [j, k], **red.to_dict()} for t, j, k, red in coupling.reduced()],
        },
        "blow_up": sheet.report.to_dict(),
        "solver_stats": sheet.stats,
        "region_iii_sup_abs_psi": sheet.region_iii_sup(),
        "diagnostics": {},
        "csv": {},
    }
    files = {}

    def put(name, rows):
        write_csv(os.path.join(cfg.out, name), CSV_COLUMNS[name], rows)
        files[name] = CSV_COLUMNS[name]

    tv = cfg.sup_times()
    sL = _series_available(sheet, tv, "L")
    sB = _series_available(sheet, tv, "Lb")
    put("sup_L.csv", sL)
    put("sup_Lb.csv", sB)
    for name, s, power in (("L", sL, 2), ("Lb", sB, 1)):
        entry = {}
        try:
            entry["fit"] = dg.fit_decay(s, (dc.sup_t_min, dc.sup_t_max), quantity=name).to_dict()
            entry["plateau"] = dg.plateau(s, power, (dc.sup_t_min, dc.sup_t_max))
        except ShortPulseError as e:
            if not blown:
                raise
            entry = {"status": "unavailable", "reason": str(e)}
        man["diagnostics"]["sup_" + name] = entry
    done = sheet.peak_level > 0
    put("peak_Lb_level.csv", zip(grid.ubar[done], sheet.peak_level[done]))
    t_slices = [t for t in (1.0, 2.0, 5.0, 10.0, 20.0, 40.0) if t <= grid.ubar_max]
    put("slice_energy.csv", [(t, e) for t in t_slices
                             for e in [_guard(man, f"slice_energy_{t:g}", blown, lambda t=t: dg.slice_energy(sheet, t))]
                             if e is not None])
    ub = [b for b in np.linspace(1.0, grid.ubar_max, 40)]
    inc = _guard(man, "incoming_flux", blown, lambda: dg.incoming_flux_series(sheet, ub, delta))
    put("incoming_flux.csv", inc or [])
    if inc:
        man["diagnostics"]["incoming_flux"] = {"sup": max(v for _, v in inc)}
    # |ubar| |Lb phi| along C_delta
    cone = dg.extract_cone(grid, "outgoing", delta)
    vals = cone.sample(sheet.lbphi[0])
    ok = np.isfinite(vals)
    put("c_delta_profile.csv", zip(cone.ubar[ok], np.abs(cone.ubar[ok]) * np.abs(vals[ok])))
    if ok.any():
        man["diagnostics"]["c_delta_sup"] = float(np.max(np.abs(cone.ubar[ok]) * np.abs(vals[ok])))
    if dc.initial_norms:
        put("initial_energy.csv", [(k, initial_classical_energy(data, k)) for k in (0, 1, 2)])
        try:
            man["diagnostics"]["initial_weighted_norm_le1"] = initial_weighted_norm(data, 1, coupling)
        except ShortPulseError as e:
            man["diagnostics"]["initial_weighted_norm_le1"] = {"status": "unavailable", "reason": str(e)}
    if dc.flux_tail:
        tail = _guard(man, "flux_tail", blown, lambda: dg.flux_tail(sheet, np.linspace(1.0, grid.ubar_max, 40)))
        if tail is not None:
            put("flux_tail.csv", tail)
            e1 = dg.slice_energy(sheet, 1.0)
            man["diagnostics"]["flux_tail"] = {"final": tail[-1][1], "initial_energy": e1,
                                               "final_over_initial": tail[-1][1] / e1 if e1 > 0 else None}
    if dc.certificate:
        cert = _guard(man, "certificate", blown, lambda: dg.c_delta_certificate(sheet, delta, cfg.norm.max_order))
        if cert is not None:
            put("certificate.csv", sorted(cert.items()))
            man["diagnostics"]["certificate"] = cert
    if dc.weighted:
        nc = dg.NormConfig(cfg.norm.alpha, delta, cfg.norm.max_order)
        res = _guard(man, "weighted_energy", blown, lambda: dg.weighted_energy(sheet, nc, delta, grid.ubar_max, terms=True))
        if res is not None:
            e, eb, parts = res
            put("weighted_energy.csv", [(p["word"], p["E"], p["Ebar"]) for p in parts])
            man["diagnostics"]["weighted_energy"] = {"u": delta, "ubar": grid.ubar_max, "E": e, "Ebar": eb, "sum": e + eb}
    if dc.energy_identity:
        rows = []
        for X in dg.MULTIPLIERS:
            tm = _guard(man, "energy_identity", blown,
                        lambda X=X: dg.energy_identity_terms(sheet, X, delta, dc.identity_ubar, cfg.norm.alpha))
            if tm is None:
                break
            rel = abs(tm["lhs"] - tm["rhs"]) / max(abs(tm["lhs"]), abs(tm["rhs"]), 1e-300)
            rows.append((X, tm["lhs"], tm["rhs"], rel))
            man["diagnostics"].setdefault("energy_identity", {})[X] = {**tm, "relative_residual": rel}
        put("energy_identity.csv", rows)
    if dc.klainerman_sobolev:
        ks = []
        for t in dc.ks_times:
            v = _guard(man, "klainerman_sobolev", blown, lambda t=t: dg.klainerman_sobolev_check(sheet, [t]))
            if v is None:
                break
            ks.append((t, v))
        put("klainerman_sobolev.csv", ks)
        if ks:
            man["diagnostics"]["klainerman_sobolev_max"] = max(v for _, v in ks)
    man["csv"] = {k: list(v) for k, v in sorted(files.items())}
    write_json(os.path.join(cfg.out, "manifest.json"), man)
    log.info("run written to %s", cfg.out)
    return cfg.out


# ---------------------------------------------------------------------------
# Delta scans


# acceptance bands used for study verdicts: (low, high) on the fitted delta-exponent
BANDS = {
    "E_0": (-0.1, 0.1),
    "E_1": (-2.1, -1.9),
    "E_2": (-4.1, -3.9),
    "L_plateau": (0.35, 0.65),
    "Lb_plateau": (-0.65, -0.35),
    "c_delta": (0.15, math.inf),
}


def _check_scan(deltas) -> list[float]:
    ds = sorted((float(d) for d in deltas), reverse=True)
    if len(ds) < 3:
        raise ConfigError("a delta scan needs at least three values", module="studyctl")
    if len(set(ds)) != len(ds):
        raise ConfigError("delta values must be distinct", module="studyctl")
    ratios = [a / b for a, b in zip(ds[:-1], ds[1:])]
    if max(ratios) - min(ratios) > 1e-9 * max(ratios):
        raise ConfigError(f"delta values must form a geometric progression, ratios {ratios}", module="studyctl")
    return ds


def _run_member(args):
    cfg_json, out = args
    cfg = RunConfig.from_json(cfg_json)
    return cmd_run(cfg, out=out)


def _exponent(ds, ys, name):
    f = dg.fit_power_law(ds, ys, name)
    return {"exponent": f.exponent, "residual_rms": f.residual_rms}


def study_report_from_csv(run_dirs: list[str]) -> dict:
    """Cross-run fits and verdicts using only the per-run CSVs and manifests."""
    runs = []
    for d in run_dirs:
        with open(os.path.join(d, "manifest.json")) as fh:
            man = json.load(fh)
        runs.append((man["config"]["data"]["delta"], man["run_id"], d, man))
    runs.sort(key=lambda r: -r[0])
    ds = np.array([r[0] for r in runs])
    ids = [r[1] for r in runs]
    quantities: dict[str, list[float]] = {}

    def col(d, name, k=1):
        return np.array([row[k] for row in read_csv(os.path.join(d, name))[1]], dtype=float)

    def series(d, name):
        rows = read_csv(os.path.join(d, name))[1]
        return [(r[0], r[1]) for r in rows]

    for delta, rid, d, man in runs:
        dc = man["config"]["diagnostics"]
        win = (dc["sup_t_min"], dc["sup_t_max"])
        e = col(d, "initial_energy.csv")
        for k in range(3):
            quantities.setdefault(f"E_{k}", []).append(float(e[k]))
        quantities.setdefault("L_plateau", []).append(dg.plateau(series(d, "sup_L.csv"), 2, win))
        quantities.setdefault("Lb_plateau", []).append(dg.plateau(series(d, "sup_Lb.csv"), 1, win))
        quantities.setdefault("L_t_exponent", []).append(dg.fit_decay(series(d, "sup_L.csv"), win).exponent)
        quantities.setdefault("Lb_t_exponent", []).append(dg.fit_decay(series(d, "sup_Lb.csv"), win).exponent)
        quantities.setdefault("c_delta", []).append(float(np.max(col(d, "c_delta_profile.csv"))))
        w = read_csv(os.path.join(d, "weighted_energy.csv"))[1]
        quantities.setdefault("weighted_sum", []).append(float(sum(r[1] + r[2] for r in w)))
        quantities.setdefault("incoming_flux_sup", []).append(float(np.max(col(d, "incoming_flux.csv"))))
    fits = {}
    verdicts = {}
    for name in ("E_0", "E_1", "E_2", "L_plateau", "Lb_plateau", "c_delta"):
        fits[name] = _exponent(ds, quantities[name], name)
        lo, hi = BANDS[name]
        verdicts[name] = bool(lo <= fits[name]["exponent"] <= hi)
    ratio = [c / d**0.25 for c, d in zip(quantities["c_delta"], ds)]
    verdicts["c_delta_ratio_non_increasing"] = bool(all(b <= a * (1 + 1e-12) for a, b in zip(ratio[:-1], ratio[1:])))
    ws = quantities["weighted_sum"]
    verdicts["weighted_within_factor_4"] = bool(max(ws) <= 4 * min(ws))
    fl = quantities["incoming_flux_sup"]
    verdicts["incoming_flux_within_factor_4"] = bool(max(fl) <= 4 * min(fl))
    verdicts["L_t_exponent_le_-1.8"] = bool(all(p <= -1.8 for p in quantities["L_t_exponent"]))
    verdicts["Lb_t_exponent_-1_pm_0.2"] = bool(all(abs(p + 1) <= 0.2 for p in quantities["Lb_t_exponent"]))
    return {
        "deltas": ds.tolist(),
        "run_ids": ids,
        "inputs": {rid: sorted(man["csv"]) for _, rid, _, man in runs},
        "quantities": quantities,
        "c_delta_over_delta_quarter": ratio,
        "weighted_max_over_min": max(ws) / min(ws),
        "fits": fits,
        "bands": {k: list(v) for k, v in BANDS.items()},
        "verdicts": verdicts,
    }


def cmd_study(cfg: RunConfig, deltas, out: str | None = None, threads: int = 1) -> dict:
    """Run every delta (in parallel when threads > 1) and write study_report.json."""
    ds = _check_scan(deltas)
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    members = []
    for d in ds:
        c = replace(cfg, data=replace(cfg.data, delta=d), out=os.path.join(out, f"delta_{d:.6g}"))
        if cfg.grid.h_fine is not None:
            c = replace(c, grid=replace(c.grid, h_fine=cfg.grid.h_fine * d / cfg.data.delta))
        members.append((c.validate().to_json(), c.out))
    done, failure = [], None
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            futs = [ex.submit(_run_member, m) for m in members]
            for m, f in zip(members, futs):
                try:
                    done.append(f.result())
                except Exception as e:  # noqa: BLE001 - recorded, then re-raised below
                    failure = failure or (m[1], e)
    else:
        for m in members:
            try:
                done.append(_run_member(m))
            except Exception as e:  # noqa: BLE001
                failure = (m[1], e)
                break
    if failure is not None:
        write_json(os.path.join(out, "study_partial.json"), {"completed": done, "failed": failure[0], "error": str(failure[1])})
        raise failure[1]
    report = study_report_from_csv(done)
    write_json(os.path.join(out, "study_report.json"), report)
    return report


# ---------------------------------------------------------------------------
# Convergence and comparison


def cmd_convergence(cfg: RunConfig, levels: int = 3, out: str | None = None, ubar_max: float = 4.0) -> dict:
    if levels < 3:
        raise ConfigError("a convergence study needs at least three levels", module="studyctl")
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    h0 = cfg.h_fine()
    spacings = [h0 / 2**k for k in range(levels)]
    rep = convergence_study(cfg.make_data(), cfg.make_params(), spacings, ubar_max=ubar_max, h_coarse=cfg.grid.h_coarse)
    d = {"config": cfg.to_dict(), "ubar_max": ubar_max, **rep.to_dict()}
    write_json(os.path.join(out, "convergence.json"), d)
    write_csv(os.path.join(out, "convergence.csv"), ("h", "error"), zip(spacings[: len(rep.errors)], rep.errors))
    return d


def _compare_member(args):
    cfg_json, coupling_json, amplitude = args
    cfg = RunConfig.from_json(cfg_json)
    s = run_sheet(cfg, coupling_from_json(json.loads(coupling_json)), amplitude)
    done = s.peak_level > 0
    return {
        "report": s.report.to_dict(),
        "last_marched_ubar": float(s.grid.ubar[np.nonzero(done)[0][-1]]) if done.any() else float(s.grid.ubar[0]),
        "peak_series": list(zip(s.grid.ubar[done].tolist(), s.peak_level[done].tolist())),
    }


def cmd_compare(cfg: RunConfig, out: str | None = None, threads: int = 1) -> dict:
    """Primary coupling against the comparison coupling, same data and grid, per amplitude."""
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    second = cfg.compare.coupling if cfg.compare.coupling is not None else {"preset": "dt_squared", "strength": 1.0}
    pair = [("primary", cfg.coupling), ("comparison", second)]
    jobs = [(cfg.to_json(), json.dumps(c, sort_keys=True), float(a)) for _, c in pair for a in cfg.compare.amplitudes]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_compare_member, jobs))
    else:
        results = [_compare_member(j) for j in jobs]
    report = {"config": cfg.to_dict(), "amplitudes": list(cfg.compare.amplitudes), "couplings": {}}
    k = 0
    for label, c in pair:
        sc = coupling_from_json(c)
        entry = {"coupling": sc.to_dict(), "is_null": sc.is_null(), "runs": []}
        for a in cfg.compare.amplitudes:
            r = results[k]
            k += 1
            name = f"peak_Lb_{label}_amp{a:g}.csv"
            write_csv(os.path.join(out, name), ("ubar", "max_abs_Lb_phi_on_level"), r["peak_series"])
            entry["runs"].append({"amplitude": a, "blow_up": r["report"], "last_marched_ubar": r["last_marched_ubar"], "peak_csv": name})
        t_star = [run["blow_up"]["t_star"] if run["blow_up"]["detected"] else math.inf for run in entry["runs"]]
        entry["all_survive"] = all(math.isinf(t) for t in t_star)
        entry["all_blow_up"] = all(math.isfinite(t) for t in t_star)
        order = sorted(zip(cfg.compare.amplitudes, t_star))
        entry["blow_up_time_decreasing_in_amplitude"] = bool(
            entry["all_blow_up"] and all(b[1] < a[1] for a, b in zip(order[:-1], order[1:])))
        report["couplings"][label] = entry
    p, q = report["couplings"]["primary"], report["couplings"]["comparison"]
    if p["all_survive"] and q["all_survive"]:
        verdict = "both survive"
    elif p["all_survive"] and q["all_blow_up"]:
        verdict = "null survives / non-null blows up" if p["is_null"] and not q["is_null"] else "primary survives / comparison blows up"
    elif p["all_blow_up"] and q["all_blow_up"]:
        verdict = "both blow up"
    else:
        verdict = "mixed"
    report["verdict"] = verdict
    report["null_survives_non_null_blows_up"] = verdict == "null survives / non-null blows up"
    write_json(os.path.join(out, "compare_report.json"), report)
    return report
