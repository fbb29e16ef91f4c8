"""Characteristic (diamond) evolution of the radial system in psi = r * phi.

In null coordinates the reduced equation is d_u d_ubar psi = -r Q, integrated
over each null rectangle with the source at the cell centre.  Levels of
constant ubar are advanced in order; inside a level the u-sweep is sequential
because a cell's east corner is the north corner of the previous cell.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels as K
from .errors import ConfigError, SolverError
from .nullforms import SystemCoupling, default_coupling
from .nullgrid import DoubleNullGrid, REGION_III, build_grid
from .oracle import linear_psi_grid
from .pulsedata import ShortPulseData

log = logging.getLogger(__name__)

TRIGGER_NAMES = {0: "none", 1: "threshold |Lb phi|", 2: "non-finite value", 3: "corrector divergence"}


@dataclass(frozen=True)
class EvolutionParams:
    coupling: SystemCoupling = field(default_factory=default_coupling)
    max_iter: int = 60
    tol: float = 1e-12
    threshold: float = 1e6
    # successive corrector updates shrinking by less than this factor count as loss of contraction
    divergence_ratio: float = 0.5

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("corrector iterations must be >= 1", module="solver")
        if not (self.tol > 0 and self.threshold > 0):
            raise ConfigError("tolerance and threshold must be positive", module="solver")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coupling"] = self.coupling.to_dict()
        return d


@dataclass(frozen=True)
class BlowUpReport:
    detected: bool = False
    t_star: float = float("nan")
    u_star: float = float("nan")
    ubar_star: float = float("nan")
    peak: float = float("nan")
    trigger: str = "none"

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in asdict(self).items()}


@dataclass
class SolutionSheet:
    grid: DoubleNullGrid
    data: ShortPulseData
    params: EvolutionParams
    psi: np.ndarray  # (n_fields, n_u, n_ubar); NaN off the valid set
    status: np.ndarray  # int8 codes from _kernels
    report: BlowUpReport
    peak_level: np.ndarray
    stats: dict

    @property
    def coupling(self) -> SystemCoupling:
        return self.params.coupling

    @property
    def n_fields(self) -> int:
        return self.psi.shape[0]

    @cached_property
    def valid(self) -> np.ndarray:
        return self.status == K.VALID

    @cached_property
    def diff_mask(self) -> np.ndarray:
        """Nodes usable in difference stencils (valid plus the ghost row below the initial slice)."""
        return (self.status == K.VALID) | (self.status == K.GHOST)

    @cached_property
    def phi(self) -> np.ndarray:
        g = self.grid
        return np.stack([K.phi_from_psi(self.psi[f], self.diff_mask, g.u, g.ubar, g.i_half) for f in range(self.n_fields)])

    @cached_property
    def lphi(self) -> np.ndarray:
        """L phi = d_ubar phi at nodes."""
        return np.stack([K.masked_diff(self.phi[f], self.diff_mask, self.grid.ubar, 1) for f in range(self.n_fields)])

    @cached_property
    def lbphi(self) -> np.ndarray:
        """Lb phi = d_u phi at nodes."""
        return np.stack([K.masked_diff(self.phi[f], self.diff_mask, self.grid.u, 0) for f in range(self.n_fields)])

    def derivative(self, name: str, f: int = 0) -> np.ndarray:
        if name == "phi":
            return self.phi[f]
        if name == "L":
            return self.lphi[f]
        if name == "Lb":
            return self.lbphi[f]
        if name == "dt":
            return 0.5 * (self.lphi[f] + self.lbphi[f])
        if name == "dr":
            return 0.5 * (self.lphi[f] - self.lbphi[f])
        raise SolverError(f"unknown derivative {name!r}")

    def source(self) -> np.ndarray:
        """Q at nodes for every field."""
        return self.coupling.source(self.lphi, self.lbphi)

    def region_iii_sup(self) -> float:
        rows = self.grid.region(self.grid.u) == REGION_III
        vals = np.abs(self.psi[:, rows, :][:, self.valid[rows, :]])
        return float(vals.max()) if vals.size else 0.0

    def valid_through(self, ubar: float) -> bool:
        jj = np.searchsorted(self.grid.ubar, ubar + 1e-12, side="right")
        adm = self.grid.admissible()[:, :jj]
        return bool(np.all(self.valid[:, :jj][adm]))


def _initial_values(data: ShortPulseData, grid: DoubleNullGrid, coupling: SystemCoupling, psi, status):
    i, jj = grid.initial_nodes()
    r = grid.ubar[jj] - grid.u[i]
    for f in range(data.n_fields):
        psi[f, i, jj] = r * data.phi0(r)
    psi[:, grid.i_half, 0] = 0.0
    status[i, jj] = K.VALID
    # the first u-line lies in the vacuum region: psi = 0 there
    status[0, jj[0]:] = K.VALID
    # ghost nodes one ubar-step below the slice: second-order Taylor expansion in t
    ig = i[:-1]
    jg = jj[:-1] - 1
    rg = grid.ubar[jg] - grid.u[ig]
    tau = grid.ubar[jg] - grid.ubar[jj[:-1]]
    p0 = rg * data.phi0(rg)
    p1 = rg * data.phi1(rg)
    p0rr = rg * data.phi0(rg, 2) + 2.0 * data.phi0(rg, 1)
    lp = np.broadcast_to(data.phi1(rg) + data.phi0(rg, 1), (data.n_fields, len(rg)))
    lb = np.broadcast_to(data.phi1(rg) - data.phi0(rg, 1), (data.n_fields, len(rg)))
    q = coupling.source(lp, lb) if coupling.terms else np.zeros((data.n_fields, len(rg)))
    for f in range(data.n_fields):
        psi[f, ig, jg] = p0 + tau * p1 + 0.5 * tau**2 * (p0rr - rg * q[f])
    status[ig, jg] = K.GHOST


def evolve(
    data: ShortPulseData,
    grid: DoubleNullGrid,
    params: EvolutionParams | None = None,
    checkpoint_every: int | None = None,
    checkpoint_dir: str | None = None,
    callback=None,
) -> SolutionSheet:
    """March the whole grid; returns the sheet with its blow-up report.

    ``callback(jj_done, psi, status)`` is invoked after every chunk of levels with
    read-only views.
    """
    params = params or EvolutionParams()
    coupling = params.coupling
    if coupling.n_fields != data.n_fields:
        raise ConfigError(f"coupling has {coupling.n_fields} fields, data has {data.n_fields}", module="solver")
    if grid.h_fine > data.delta / 32 * (1 + 1e-9) or abs(grid.delta - data.delta) > 1e-15:
        raise ConfigError("grid does not resolve the data (needs matching delta and h_fine <= delta/32)", module="solver")
    nf = data.n_fields
    nu, nb = grid.shape
    psi = np.zeros((nf, nu, nb))
    status = np.zeros((nu, nb), dtype=np.int8)
    _initial_values(data, grid, coupling, psi, status)
    sig = np.full(nu, -1, dtype=np.int64)
    ii = np.arange(min(grid.i_half + 1, nu))
    sig[ii] = grid.sigma(ii) - grid.off
    tgt, tj, tk, cc = coupling.kernel_arrays()
    last_rq = np.zeros((nf, nu))
    peak = np.zeros(nb)
    stats = np.zeros(3, dtype=np.int64)
    det = np.zeros(6)
    err = np.zeros(3, dtype=np.int64)
    i_lim = nu
    chunk = checkpoint_every if checkpoint_every else (64 if callback else nb)
    xu = np.ascontiguousarray(grid.u)
    xb = np.ascontiguousarray(grid.ubar)
    jj = 1
    while jj < nb:
        stop = min(nb, jj + chunk)
        i_lim = K.march(psi, status, xu, xb, sig, grid.i_half, jj, stop, i_lim, tgt, tj, tk, cc,
                        params.max_iter, params.tol, params.threshold, params.divergence_ratio,
                        last_rq, peak, stats, det, err)
        if err[0]:
            i, j = int(err[1]), int(err[2])
            raise SolverError(f"corrector did not converge at node (u, ubar) = ({grid.u[i]:.6g}, {grid.ubar[j]:.6g}), index ({i}, {j})")
        if checkpoint_every and checkpoint_dir:
            write_checkpoint(checkpoint_dir, grid, params, psi, status, stop)
        if callback is not None:
            callback(stop, psi, status)
        jj = stop
        if i_lim <= 1:
            break
    adm = grid.admissible()
    status[adm & (status == K.OUTSIDE)] = K.INVALID
    keep = (status == K.VALID) | (status == K.GHOST)
    psi[:, ~keep] = np.nan
    report = BlowUpReport()
    if det[0]:
        report = BlowUpReport(True, float(det[1]), float(det[2]), float(det[3]), float(det[4]), TRIGGER_NAMES[int(det[5])])
        log.info("blow-up detected at t* = %.4f (%s)", report.t_star, report.trigger)
    st = {"cells": int(stats[0]), "corrector_iterations": int(stats[1]), "max_iterations_at_cell": int(stats[2])}
    st["mean_iterations"] = st["corrector_iterations"] / st["cells"] if st["cells"] else 0.0
    return SolutionSheet(grid, data, params, psi, status, report, peak, st)


def run_non_null_comparison(data: ShortPulseData, grid: DoubleNullGrid, params: EvolutionParams) -> BlowUpReport:
    """Evolve with a coupling that keeps the bad-bad product; same marching as evolve."""
    if all(abs(red.c_bb) == 0.0 for *_, red in params.coupling.reduced()):
        log.warning("coupling has c_bb = 0 everywhere; this is an ordinary null-form run")
    return evolve(data, grid, params).report


# ---------------------------------------------------------------------------
# Checkpoints


def write_checkpoint(directory: str, grid: DoubleNullGrid, params: EvolutionParams, psi, status, level: int):
    os.makedirs(directory, exist_ok=True)
    name = f"level_{level:06d}.npz"
    cols = slice(0, level)
    np.savez_compressed(os.path.join(directory, name), psi=psi[:, :, cols], status=status[:, cols], level=level)
    man_path = os.path.join(directory, "checkpoints.json")
    man = {"grid_hash": grid.node_hash(), "params": params.to_dict(), "levels": []}
    if os.path.exists(man_path):
        with open(man_path) as fh:
            man = json.load(fh)
    man["levels"] = sorted(set(man["levels"]) | {level})
    man["latest"] = name
    with open(man_path, "w") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)


def load_checkpoint(directory: str):
    with open(os.path.join(directory, "checkpoints.json")) as fh:
        man = json.load(fh)
    with np.load(os.path.join(directory, man["latest"])) as z:
        return man, z["psi"], z["status"], int(z["level"])


# ---------------------------------------------------------------------------
# Convergence


@dataclass(frozen=True)
class ConvergenceReport:
    spacings: list
    errors: list
    orders: list
    order: float | str
    reference: str
    monotone: bool
    warning: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _restrict(fine: np.ndarray, levels: int) -> np.ndarray:
    s = 2**levels
    return fine[..., ::s, ::s]


def _order_from_errors(errors):
    orders = [float(np.log2(a / b)) if a > 0 and b > 0 else float("nan") for a, b in zip(errors[:-1], errors[1:])]
    return orders


def convergence_study(data: ShortPulseData, params: EvolutionParams, spacings, ubar_max: float = 4.0,
                      h_coarse: float = 0.05, window=None) -> ConvergenceReport:
    """Observed order from nested runs at the given fine spacings (each half the previous).

    With a linear coupling the error is measured against the closed-form
    solution on every run; otherwise successive differences of nested runs
    on the coarsest grid nodes give the self-convergence order.
    ``window`` = (u_lo, u_hi) restricts the sup-norm to a u-band.
    """
    spacings = [float(h) for h in spacings]
    if len(spacings) < 3:
        raise ConfigError("convergence study needs at least three spacings", module="solver")
    for a, b in zip(spacings[:-1], spacings[1:]):
        if abs(a / b - 2.0) > 1e-9:
            raise ConfigError("each spacing must halve the previous one", module="solver")
    linear = params.coupling.is_linear()
    sheets = []
    for lvl, h in enumerate(spacings):
        g = build_grid(data.delta, ubar_max=ubar_max, h_coarse=h_coarse, h_fine=spacings[0], refine=lvl)
        sheets.append(evolve(data, g, params))
    base = build_grid(data.delta, ubar_max=ubar_max, h_coarse=h_coarse, h_fine=spacings[0])
    rows = np.ones(base.n_u, dtype=bool)
    if window is not None:
        rows = (base.u >= window[0] - 1e-12) & (base.u <= window[1] + 1e-12)
    mask = base.admissible() & rows[:, None]
    for s in sheets:
        if s.report.detected:
            raise SolverError("convergence study requires runs without blow-up")
    errors = []
    if linear:
        ref = "closed-form linear solution"
        for lvl, s in enumerate(sheets):
            exact = np.stack([linear_psi_grid(data, s.grid)] * s.n_fields)
            e = _restrict(np.abs(s.psi - exact), lvl)[:, mask]
            errors.append(float(np.nanmax(e)) if e.size else 0.0)
    else:
        ref = "self-convergence (successive nested differences)"
        coarse = [_restrict(s.psi, lvl) for lvl, s in enumerate(sheets)]
        for a, b in zip(coarse[:-1], coarse[1:]):
            d = np.abs(a - b)[:, mask]
            errors.append(float(np.nanmax(d)) if d.size else 0.0)
    if all(e == 0.0 for e in errors):
        return ConvergenceReport(spacings, errors, [], "exact", ref, True)
    orders = _order_from_errors(errors)
    monotone = all(a > b for a, b in zip(errors[:-1], errors[1:]))
    warning = "" if monotone else "errors are not monotonically decreasing"
    if warning:
        log.warning(warning)
    return ConvergenceReport(spacings, errors, orders, float(orders[-1]), ref, monotone, warning)
