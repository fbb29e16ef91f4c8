"""Measurements on evolved sheets: fluxes, commuted norms, sup-norms and fits.

Conventions
-----------
* Cone and slice integrals carry the area density 4 pi r^2; outgoing cones are
  parametrized by ubar, incoming cones by u, slices by r.
* Energy density on a time slice: (phi_t**2 + phi_r**2)/2 = ((L phi)**2 + (Lb phi)**2)/4.
* Bulk integrals use dt dr = 2 du dubar.
* Commuting fields act as Z = c_L L + c_Lb Lb with
  T = (L + Lb)/2, S = ubar L + u Lb, B = ubar L - u Lb.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .errors import DiagnosticError, FitError, PartialFluxError
from .nullgrid import ConeSlice, extract_cone

# ---------------------------------------------------------------------------
# Reduced commuting fields


@dataclass(frozen=True)
class ReducedVectorField:
    name: str
    good: bool

    def coefficients(self, u, ubar):
        """(c_L, c_Lb) as functions of the null coordinates."""
        u = np.asarray(u, dtype=float)
        ubar = np.asarray(ubar, dtype=float)
        if self.name == "T":
            return 0.5 + 0 * u * ubar, 0.5 + 0 * u * ubar
        if self.name == "S":
            return ubar + 0 * u, u + 0 * ubar
        if self.name == "B":
            return ubar + 0 * u, -u + 0 * ubar
        raise DiagnosticError(f"unknown field {self.name!r}")

    def apply(self, lf, lbf, u, ubar):
        c_l, c_lb = self.coefficients(u, ubar)
        return c_l * lf + c_lb * lbf

    def apply_tr(self, f_t, f_r, t, r):
        """Definition in (t, r): T = d_t, S = t d_t + r d_r, B = r d_t + t d_r."""
        if self.name == "T":
            return f_t
        if self.name == "S":
            return t * f_t + r * f_r
        if self.name == "B":
            return r * f_t + t * f_r
        raise DiagnosticError(f"unknown field {self.name!r}")


FIELDS = {"T": ReducedVectorField("T", False), "S": ReducedVectorField("S", True), "B": ReducedVectorField("B", True)}


@dataclass(frozen=True)
class NormConfig:
    alpha: float = 0.9
    delta: float = 0.05
    max_order: int = 2

    def __post_init__(self):
        if not (0.5 < self.alpha < 1.0):
            raise DiagnosticError(f"alpha must lie in (1/2, 1), got {self.alpha}")
        if not (0 <= self.max_order <= 2):
            raise DiagnosticError("weighted norms are available up to order 2")


def _check_sheet_cone(sheet, cone: ConeSlice, what: str):
    ok = cone.sample_mask(sheet.valid)
    if not np.all(ok):
        bad = np.nonzero(~ok)[0][0]
        raise PartialFluxError(f"{what}: {cone.kind} cone {cone.value} leaves the valid region at (u, ubar) = "
                               f"({cone.u[bad]:.6g}, {cone.ubar[bad]:.6g})")


def _sample(sheet, cone: ConeSlice, arr: np.ndarray, what: str) -> np.ndarray:
    _check_sheet_cone(sheet, cone, what)
    v = cone.sample(arr)
    if not np.all(np.isfinite(v)):
        raise PartialFluxError(f"{what}: derivative stencil unavailable on part of the {cone.kind} cone {cone.value}")
    return v


def word_tree(sheet, max_order: int, letters: Sequence[str] = ("T", "S", "B"), field: int = 0,
              allowed: Callable[[str, str], bool] | None = None, leaf_derivatives: bool = True):
    """Depth-first (word, Z^w phi, L Z^w phi, Lb Z^w phi); the word's leftmost letter acts last.

    Only the current branch is kept in memory.
    """
    g = sheet.grid
    mask = sheet.diff_mask
    uu = g.u[:, None]
    bb = g.ubar[None, :]

    def rec(word, f, lf, lbf, depth):
        yield word, f, lf, lbf
        if depth == max_order:
            return
        for z in letters:
            if allowed is not None and not allowed(word, z):
                continue
            h = FIELDS[z].apply(lf, lbf, uu, bb)
            if depth + 1 < max_order or leaf_derivatives:
                lh = K.masked_diff(h, mask, g.ubar, 1)
                lbh = K.masked_diff(h, mask, g.u, 0)
            else:
                lh = lbh = None
            yield from rec(z + word, h, lh, lbh, depth + 1)

    yield from rec("", sheet.phi[field], sheet.lphi[field], sheet.lbphi[field], 0)


def _bad_then_good(word: str, z: str) -> bool:
    """Words of the form T^l G: once a T is applied, only T may follow."""
    return z == "T" or not word.startswith("T")


# ---------------------------------------------------------------------------
# Fluxes and sup-norms


def cone_flux(sheet, cone: ConeSlice, which: str = "outgoing", alpha: float = 0.9, field: int = 0) -> float:
    """Integral over the cone of (L phi)^2 ('outgoing'), (Lb phi)^2 ('incoming') or ubar^alpha (L phi)^2 ('weighted')."""
    if len(cone) == 0:
        return 0.0
    if which == "outgoing":
        v = _sample(sheet, cone, sheet.lphi[field], "cone_flux") ** 2
    elif which == "incoming":
        v = _sample(sheet, cone, sheet.lbphi[field], "cone_flux") ** 2
    elif which == "weighted":
        v = np.abs(cone.ubar) ** alpha * _sample(sheet, cone, sheet.lphi[field], "cone_flux") ** 2
    else:
        raise DiagnosticError(f"unknown flux kind {which!r}")
    return float(np.sum(cone.weights * v))


_DERIVS = {"phi": "phi", "L": "L", "Lb": "Lb", "dt+dr": "L", "(dt+dr)": "L"}


def sup_norm(sheet, cone: ConeSlice, derivative: str = "phi", field: int = 0) -> float:
    if derivative not in _DERIVS:
        raise DiagnosticError(f"unknown derivative {derivative!r}")
    if len(cone) == 0:
        return 0.0
    v = _sample(sheet, cone, sheet.derivative(_DERIVS[derivative], field), "sup_norm")
    return float(np.max(np.abs(v)))


def sup_series(sheet, t_values: Iterable[float], derivative: str, field: int = 0) -> list[tuple[float, float]]:
    out = []
    for t in t_values:
        out.append((float(t), sup_norm(sheet, extract_cone(sheet.grid, "slice", t), derivative, field)))
    return out


def argmax_location(sheet, t: float, derivative: str = "L", field: int = 0) -> float:
    """u-coordinate of the sup over the slice Sigma_t."""
    c = extract_cone(sheet.grid, "slice", t)
    v = np.abs(_sample(sheet, c, sheet.derivative(_DERIVS[derivative], field), "argmax"))
    return float(c.u[int(np.argmax(v))])


def slice_energy(sheet, t: float, u_max: float | None = None, field: int = 0) -> float:
    """int over Sigma_t (optionally u <= u_max) of ((L phi)^2 + (Lb phi)^2)/4 * 4 pi r^2 dr."""
    c = extract_cone(sheet.grid, "slice", t, lower=None if u_max is None else t - 2 * u_max)
    if len(c) == 0:
        return 0.0
    lp = _sample(sheet, c, sheet.lphi[field], "slice_energy")
    lb = _sample(sheet, c, sheet.lbphi[field], "slice_energy")
    return float(np.sum(c.weights * 0.25 * (lp**2 + lb**2)))


def outgoing_energy_flux(sheet, u: float, ubar_hi: float, field: int = 0) -> float:
    """Energy through C_u between the initial slice and ubar_hi: int (L phi)^2/2 * 4 pi r^2 dubar."""
    c = extract_cone(sheet.grid, "outgoing", u, upper=ubar_hi)
    return 0.5 * cone_flux(sheet, c, "outgoing", field=field)


def incoming_flux_series(sheet, ubar_values, u_hi: float, field: int = 0):
    """(ubar, int_{incoming cone, u' <= u_hi} (Lb phi)^2) pairs."""
    return [(float(b), cone_flux(sheet, extract_cone(sheet.grid, "incoming", b, upper=u_hi), "incoming", field=field))
            for b in ubar_values]


def linear_energy_balance(sheet, t: float, field: int = 0) -> dict:
    """E(Sigma_t, u <= delta) + outgoing flux through C_delta up to Sigma_t versus E(Sigma_1)."""
    d = sheet.grid.delta
    e1 = slice_energy(sheet, 1.0, field=field)
    et = slice_energy(sheet, t, u_max=d, field=field)
    flux = outgoing_energy_flux(sheet, d, t - d, field=field)
    return {"E_initial": e1, "E_t": et, "flux": flux, "relative_defect": abs(et + flux - e1) / max(e1, 1e-300)}


# ---------------------------------------------------------------------------
# Fits


@dataclass(frozen=True)
class DecayFit:
    quantity: str
    window: tuple[float, float]
    exponent: float
    amplitude: float
    residual_rms: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(x, y, quantity: str = "", min_points: int = 2) -> DecayFit:
    """Least squares log y = log A + p log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < min_points:
        raise FitError(f"{quantity}: need at least {min_points} points, got {len(x)}")
    bad = [(float(a), float(b)) for a, b in zip(x, y) if not (b > 0 and a > 0 and np.isfinite(b))]
    if bad:
        raise FitError(f"{quantity}: non-positive or non-finite samples {bad}")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise FitError(f"{quantity}: abscissae are all equal")
    p, c = np.polyfit(lx, ly, 1)
    res = ly - (c + p * lx)
    return DecayFit(quantity, (float(x.min()), float(x.max())), float(p), float(np.exp(c)),
                    float(np.sqrt(np.mean(res**2))), len(x))


def fit_decay(series, window=(5.0, 40.0), quantity: str = "") -> DecayFit:
    """Power-law fit of (t, value) pairs inside the window; requires >= 8 samples."""
    s = np.asarray(list(series), dtype=float).reshape(-1, 2)
    sel = (s[:, 0] >= window[0] - 1e-12) & (s[:, 0] <= window[1] + 1e-12)
    s = s[sel]
    if len(s) < 8:
        raise FitError(f"{quantity}: window {window} holds {len(s)} samples, need >= 8")
    f = fit_power_law(s[:, 0], s[:, 1], quantity, min_points=8)
    return DecayFit(quantity, (float(window[0]), float(window[1])), f.exponent, f.amplitude, f.residual_rms, f.n)


def plateau(series, power: float, window=(5.0, 40.0)) -> float:
    """Median of t**power * value over the window."""
    s = np.asarray(list(series), dtype=float).reshape(-1, 2)
    sel = (s[:, 0] >= window[0] - 1e-12) & (s[:, 0] <= window[1] + 1e-12)
    return float(np.median(s[sel, 0] ** power * s[sel, 1]))


# ---------------------------------------------------------------------------
# Commuted norms and the C_delta certificate


def weighted_energy(sheet, config: NormConfig, u: float, ubar: float, field: int = 0, terms: bool = False):
    """(E_<=k, Ebar_<=k) on the outgoing cone u (up to ubar) and the incoming cone ubar (up to u).

    Word T^l G contributes delta**(l - 1/2) || ubar^(alpha/2) L (.) || to E and
    delta**l || Lb (.) || to Ebar.
    """
    d = config.delta
    c_out = extract_cone(sheet.grid, "outgoing", u, upper=ubar)
    c_in = extract_cone(sheet.grid, "incoming", ubar, upper=u)
    e = eb = 0.0
    parts = []
    for word, f, lf, lbf in word_tree(sheet, config.max_order, field=field, allowed=_bad_then_good):
        l = word.count("T")
        vo = _sample(sheet, c_out, lf, "weighted_energy")
        vi = _sample(sheet, c_in, lbf, "weighted_energy")
        no = d ** (l - 0.5) * np.sqrt(np.sum(c_out.weights * np.abs(c_out.ubar) ** config.alpha * vo**2))
        ni = d**l * np.sqrt(np.sum(c_in.weights * vi**2))
        e += no
        eb += ni
        parts.append({"word": word or "id", "order": len(word), "bad": l, "E": float(no), "Ebar": float(ni)})
    return (float(e), float(eb), parts) if terms else (float(e), float(eb))


def c_delta_certificate(sheet, delta: float | None = None, max_order: int = 2, ubar_range=None, field: int = 0) -> dict:
    """sup over C_delta of ubar^(3/2)|L Z^w phi| and ubar |Lb Z^w phi| for words up to max_order."""
    delta = sheet.grid.delta if delta is None else delta
    lo, hi = ubar_range if ubar_range is not None else (None, None)
    c = extract_cone(sheet.grid, "outgoing", delta, lower=lo, upper=hi)
    out = {}
    for word, f, lf, lbf in word_tree(sheet, max_order, field=field):
        w = word or "id"
        out["L:" + w] = float(np.max(np.abs(c.ubar) ** 1.5 * np.abs(_sample(sheet, c, lf, "certificate")), initial=0.0))
        out["Lb:" + w] = float(np.max(np.abs(c.ubar) * np.abs(_sample(sheet, c, lbf, "certificate")), initial=0.0))
    return out


# ---------------------------------------------------------------------------
# Multiplier identity

MULTIPLIERS = ("dt", "Lb", "ubar^alpha L")


def _multiplier_terms(X: str, lp, lb, ubar, r, alpha):
    """(T(X, L), T(X, Lb), T(X, L + Lb), K^X) pointwise."""
    z = np.zeros_like(lp)
    if X == "dt":
        return 0.5 * lp**2, 0.5 * lb**2, 0.5 * (lp**2 + lb**2), z
    if X == "Lb":
        return z, lb**2, lb**2, -lp * lb / r
    if X == "ubar^alpha L":
        w = np.abs(ubar) ** alpha
        return w * lp**2, z, w * lp**2, w * lp * lb / r
    raise DiagnosticError(f"unknown multiplier {X!r}")


def _x_of_phi(X: str, lp, lb, ubar, alpha):
    if X == "dt":
        return 0.5 * (lp + lb)
    if X == "Lb":
        return lb
    return np.abs(ubar) ** alpha * lp


def _trap(p, v):
    return float(np.sum(0.5 * np.diff(p) * (v[1:] + v[:-1]))) if len(p) > 1 else 0.0


def energy_identity_terms(sheet, X: str, u: float, ubar: float, alpha: float = 0.9, field: int = 0) -> dict:
    """Both sides of the multiplier identity on D = {t >= 1, u' <= u, ubar' <= ubar}.

    flux(C_u, T(X, L)) + flux(Cbar_ubar, T(X, Lb))
        = 1/2 int_{Sigma_1} T(X, L + Lb) - int int (K^X + Q X phi) 4 pi r^2 dt dr
    """
    g = sheet.grid
    # snap to the nearest grid lines so that the boundary cones are exact grid objects
    iu = int(np.argmin(np.abs(g.u - u)))
    jb = int(np.argmin(np.abs(g.ubar - ubar)))
    if not sheet.valid[: iu + 1, : jb + 1][g.admissible()[: iu + 1, : jb + 1]].all():
        raise PartialFluxError("energy identity domain crosses the blow-up frontier")
    uu = g.u[: iu + 1, None]
    bb = g.ubar[None, : jb + 1]
    r = bb - uu
    lp = sheet.lphi[field][: iu + 1, : jb + 1]
    lb = sheet.lbphi[field][: iu + 1, : jb + 1]
    adm = g.admissible()[: iu + 1, : jb + 1]
    tl, tlb, tsum, kx = _multiplier_terms(X, lp, lb, bb + 0 * uu, np.where(r > 0, r, np.inf), alpha)
    area = 4 * np.pi * r**2
    # outgoing cone u (row iu), from the initial slice to ubar
    row = adm[iu]
    out = _trap(g.ubar[: jb + 1][row], (area * tl)[iu][row])
    col = adm[:, jb]
    inc = _trap(g.u[: iu + 1][col], (area * tlb)[:, jb][col])
    # initial slice: nodes (i, sigma(i) - off) with both indices in range
    i0, j0 = g.initial_nodes()
    keep = (i0 <= iu) & (j0 <= jb)
    i0, j0 = i0[keep], j0[keep]
    r0 = g.ubar[j0] - g.u[i0]
    order = np.argsort(r0)
    init = 0.5 * _trap(r0[order], (area * tsum)[i0, j0][order])
    # bulk
    q = sheet.source()[field][: iu + 1, : jb + 1] if sheet.coupling.terms else np.zeros_like(lp)
    xphi = _x_of_phi(X, lp, lb, bb + 0 * uu, alpha)
    dens = np.where(adm, (kx + q * xphi) * area, 0.0)
    du = np.diff(g.u[: iu + 1])[:, None]
    db = np.diff(g.ubar[: jb + 1])[None, :]
    a_n, a_e, a_w, a_s = adm[1:, 1:], adm[:-1, 1:], adm[1:, :-1], adm[:-1, :-1]
    full = a_n & a_e & a_w & a_s
    tri = a_n & a_e & a_w & ~a_s
    d_n, d_e, d_w, d_s = dens[1:, 1:], dens[:-1, 1:], dens[1:, :-1], dens[:-1, :-1]
    cell = np.where(full, 0.25 * (d_n + d_e + d_w + d_s), 0.0) + np.where(tri, (d_n + d_e + d_w) / 6.0, 0.0)
    bulk = float(np.sum(2.0 * cell * du * db))
    return {"u": float(g.u[iu]), "ubar": float(g.ubar[jb]), "outgoing": out, "incoming": inc, "initial": init,
            "bulk": bulk, "lhs": out + inc, "rhs": init - bulk}


def energy_identity_residual(sheet, X: str, u: float, ubar: float, alpha: float = 0.9, field: int = 0,
                             eps_guard: float = 1e-300) -> float:
    t = energy_identity_terms(sheet, X, u, ubar, alpha, field)
    return abs(t["lhs"] - t["rhs"]) / max(abs(t["lhs"]), abs(t["rhs"]), eps_guard)


# ---------------------------------------------------------------------------
# Flux tail


def flux_tail(sheet, ubar_values, field: int = 0, tail_fit_from: float | None = None) -> list[tuple[float, float]]:
    """R(ubar): energy still to cross C_delta beyond ubar, ubar' in [ubar, inf).

    The part beyond the grid is a power-law continuation of the flux density
    fitted on [tail_fit_from, ubar_max]; R is non-increasing by construction.
    """
    g = sheet.grid
    c = extract_cone(g, "outgoing", g.delta)
    lp = _sample(sheet, c, sheet.lphi[field], "flux_tail")
    # pointwise energy density along the cone: (L phi)^2/2 * 4 pi r^2
    rho = 0.5 * lp**2 * 4 * np.pi * c.r**2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(c.ubar) * (rho[1:] + rho[:-1]))])
    beyond = 0.0
    start = tail_fit_from if tail_fit_from is not None else g.ubar_max / 2
    sel = (c.ubar >= start) & (rho > 0)
    if sel.sum() >= 8:
        f = fit_power_law(c.ubar[sel], rho[sel], "flux density")
        if f.exponent < -1:
            beyond = f.amplitude * g.ubar_max ** (f.exponent + 1) / -(f.exponent + 1)
        else:
            beyond = float("inf")
    total = cum[-1]
    out = []
    for b in ubar_values:
        b = float(b)
        part = total - float(np.interp(b, c.ubar, cum)) if b <= c.ubar[-1] else 0.0
        out.append((b, part + beyond))
    return out


def _trapezoid_len(p):
    w = np.zeros_like(p)
    if len(p) > 1:
        w[:-1] += 0.5 * np.diff(p)
        w[1:] += 0.5 * np.diff(p)
    return w


# ---------------------------------------------------------------------------
# Klainerman-Sobolev check


@dataclass
class AnalyticField:
    """A closed-form radial function of (t, r) given as a sympy expression."""

    expr: object
    t: object
    r: object

    def words(self, max_order: int, letters=("T", "S", "B")):
        import sympy as sp

        t, r = self.t, self.r
        ops = {
            "T": lambda e: sp.diff(e, t),
            "S": lambda e: t * sp.diff(e, t) + r * sp.diff(e, r),
            "B": lambda e: r * sp.diff(e, t) + t * sp.diff(e, r),
        }
        out = {"": self.expr}
        frontier = [""]
        for _ in range(max_order):
            nxt = []
            for w in frontier:
                for z in letters:
                    out[z + w] = ops[z](out[w])
                    nxt.append(z + w)
            frontier = nxt
        return {w: sp.lambdify((t, r), e, "numpy") for w, e in out.items()}


def _ks_ratio(t, r, u, ubar, f_vals, f_b, norm):
    lhs = np.abs(f_vals)
    rhs = (1 + np.abs(u)) ** -0.5 * abs(f_b) + (1 + np.abs(ubar)) ** -1 * (1 + np.abs(u)) ** -0.5 * norm
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(lhs > 0, lhs / rhs, 0.0)
    return float(np.max(q)) if q.size else 0.0


def klainerman_sobolev_check(source, t_values, delta: float | None = None, h: float | None = None,
                             max_order: int = 3, field: int = 0) -> float:
    """max over region-I points of |f| / ((1+|u|)^(-1/2)|f(B)| + (1+|ubar|)^(-1)(1+|u|)^(-1/2) sum ||Z^w f||).

    ``source`` is a solution sheet (f = phi) or an AnalyticField sampled with
    radial spacing ``h``.  B is the point of C_delta on the same slice.
    """
    if isinstance(source, AnalyticField):
        if delta is None or h is None:
            raise DiagnosticError("analytic check needs delta and h")
        fns = source.words(max_order)
        worst = 0.0
        for t in t_values:
            r_hi = t - 2 * delta
            if r_hi <= 0:
                raise DiagnosticError(f"no region I points on Sigma_{t}")
            n = int(np.ceil(r_hi / h))
            r = np.linspace(0.0, r_hi, n + 1)
            tt = np.full_like(r, t)
            w = 4 * np.pi * r**2 * _trapezoid_len(r)
            norm = 0.0
            for fn in fns.values():
                v = np.broadcast_to(np.asarray(fn(tt, r), dtype=float), r.shape)
                norm += np.sqrt(np.sum(w * v**2))
            f_vals = np.broadcast_to(np.asarray(fns[""](tt, r), dtype=float), r.shape)
            f_b = float(fns[""](t, r_hi))
            worst = max(worst, _ks_ratio(t, r, (t - r) / 2, (t + r) / 2, f_vals, f_b, norm))
        return worst
    sheet = source
    g = sheet.grid
    delta = g.delta if delta is None else delta
    slices = {}
    for t in t_values:
        c = extract_cone(g, "slice", t)
        c = c.restrict(c.u >= delta - 1e-12)
        if len(c) == 0:
            raise DiagnosticError(f"no region I samples on Sigma_{t}")
        _check_sheet_cone(sheet, c, "klainerman_sobolev")
        slices[t] = c
    norms = {t: 0.0 for t in t_values}
    for word, f, _, _ in word_tree(sheet, max_order, field=field, leaf_derivatives=False):
        for t, c in slices.items():
            v = c.sample(f)
            if not np.all(np.isfinite(v)):
                raise PartialFluxError(f"Z-derivative {word!r} unavailable on Sigma_{t}")
            norms[t] += float(np.sqrt(np.sum(c.weights * v**2)))
    worst = 0.0
    phi = sheet.phi[field]
    for t, c in slices.items():
        b = extract_cone(g, "sphere", (t - delta, delta))
        f_b = float(b.sample(phi)[0]) if len(b) else 0.0
        worst = max(worst, _ks_ratio(t, c.r, c.u, c.ubar, c.sample(phi), f_b, norms[t]))
    return worst


# ---------------------------------------------------------------------------
# Vector field identities


def vectorfield_identity_check(expr, t, r, samples=None, directions=None) -> float:
    """Max error of the radial formulas expressing d_t, d_r and d_i through S, Omega_0i, Omega_ij.

    With sum_i x^i Omega_0i = r B on radial functions:
      d_t f = (t S f - r B f)/(t^2 - r^2),  d_r f = (t B f - r S f)/(t^2 - r^2);
    the Cartesian d_i identity is checked with explicit Omega_0i and Omega_ij.
    Points with t = r are skipped.
    """
    import sympy as sp

    x1, x2, x3 = sp.symbols("x1 x2 x3", real=True)
    rr = sp.sqrt(x1**2 + x2**2 + x3**2)
    fc = expr.subs(r, rr)
    xs = (x1, x2, x3)
    ft, fr = sp.diff(expr, t), sp.diff(expr, r)
    radial = sp.lambdify((t, r), [ft, fr, t * ft + r * fr, r * ft + t * fr], "numpy")
    dfc = [sp.diff(fc, v) for v in xs]
    ftc = sp.diff(fc, t)
    cart = sp.lambdify((t, x1, x2, x3), [ftc, *dfc], "numpy")
    if samples is None:
        rng = np.random.default_rng(12345)
        tt = rng.uniform(1.0, 40.0, 200)
        samples = np.column_stack([tt, tt * rng.uniform(0.0, 0.95, 200)])
    samples = np.asarray(samples, dtype=float)
    keep = np.abs(samples[:, 0] - samples[:, 1]) > 1e-9
    samples = samples[keep]
    if directions is None:
        rng = np.random.default_rng(54321)
        directions = rng.normal(size=(len(samples), 3))
    err = 0.0
    for (tv, rv), n in zip(samples, directions):
        dt_, dr_, s_, b_ = [float(v) for v in np.broadcast_arrays(*radial(tv, rv))]
        den = tv**2 - rv**2
        err = max(err, abs(dt_ - (tv * s_ - rv * b_) / den), abs(dr_ - (tv * b_ - rv * s_) / den))
        if rv <= 0:
            continue
        n = np.asarray(n, dtype=float)
        x = rv * n / np.linalg.norm(n)
        vals = [float(v) for v in np.broadcast_arrays(*cart(tv, *x))]
        c_t, grad = vals[0], np.array(vals[1:])
        s_c = tv * c_t + x @ grad
        for i in range(3):
            om0i = x[i] * c_t + tv * grad[i]
            omij = sum(x[j] * (x[i] * grad[j] - x[j] * grad[i]) for j in range(3))
            rhs = -(x[i] * s_c - tv * om0i - omij) / ((tv - rv) * (tv + rv))
            err = max(err, abs(grad[i] - rhs))
    return err
