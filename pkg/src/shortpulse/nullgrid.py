"""Double-null computational domain.

A single node array ``x`` serves both null coordinates: u-nodes are the entries
with x <= u_cap and ubar-nodes the entries with x >= 1/2.  The array is built
mirror-symmetric under x -> 1 - x on [-delta, 1 + delta], so the initial slice
u + ubar = 1 passes exactly through grid nodes (i, sigma(i)) with
sigma(i) = 2 * i_half - i.

Sheets are stored as dense arrays indexed (i, jj) with u = x[i] and
ubar = x[jj + off], off = i_half.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError

REGION_III, REGION_II, REGION_I = 3, 2, 1
MAX_RATIO = 1.2
_TOL = 1e-12


def _graded_segment(a: float, b: float, h_a: float | None, h_b: float | None, h_max: float, slope: float) -> np.ndarray:
    """Interior nodes on (a, b) following h(x) = min(h_max, h_a + slope*(x-a), h_b + slope*(b-x))."""
    length = b - a
    if length <= 0:
        return np.empty(0)
    h_min = min(v for v in (h_a, h_b, h_max) if v is not None)
    xs = np.linspace(a, b, int(min(max(20001, 16 * length / h_min), 4_000_001)))
    h = np.full_like(xs, h_max)
    if h_a is not None:
        h = np.minimum(h, h_a + slope * (xs - a))
    if h_b is not None:
        h = np.minimum(h, h_b + slope * (b - xs))
    inv = 1.0 / h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(xs))])
    n = max(1, int(round(cum[-1])))
    targets = cum[-1] * np.arange(1, n) / n
    return np.interp(targets, cum, xs)


def _check_ratios(x: np.ndarray, what: str):
    d = np.diff(x)
    if np.any(d <= 0):
        raise GridError(f"{what}: nodes are not strictly increasing")
    ratio = np.maximum(d[1:] / d[:-1], d[:-1] / d[1:])
    if ratio.size and ratio.max() > MAX_RATIO + 1e-9:
        k = int(np.argmax(ratio))
        raise GridError(f"{what}: spacing ratio {ratio[k]:.3f} > {MAX_RATIO} near x = {x[k + 1]:.6g}")


@dataclass(frozen=True)
class DoubleNullGrid:
    delta: float
    x: np.ndarray
    i_half: int
    n_u: int
    ubar_max: float
    u_cap: float
    h_fine: float
    h_coarse: float
    bands: tuple = ()
    refine_level: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    # --- coordinates -------------------------------------------------------
    @property
    def off(self) -> int:
        return self.i_half

    @property
    def u(self) -> np.ndarray:
        return self.x[: self.n_u]

    @property
    def ubar(self) -> np.ndarray:
        return self.x[self.i_half :]

    @property
    def n_ubar(self) -> int:
        return len(self.x) - self.i_half

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_u, self.n_ubar)

    def sigma(self, i):
        """u-index i -> x-index of the initial-slice partner (ubar = 1 - u)."""
        return 2 * self.i_half - np.asarray(i)

    def t_r(self):
        uu, bb = np.meshgrid(self.u, self.ubar, indexing="ij")
        return uu + bb, bb - uu

    def admissible(self) -> np.ndarray:
        """Mask of nodes with t >= 1 and r >= 0 (combinatorial, exact)."""
        i = np.arange(self.n_u)[:, None]
        j = np.arange(self.n_ubar)[None, :] + self.off
        lower = np.where(i <= self.i_half, self.sigma(i), i)
        return (j >= lower) & (j >= i)

    def initial_nodes(self):
        """(i, jj) index arrays of nodes on the initial slice, i = 0..i_half."""
        i = np.arange(self.i_half + 1)
        return i, self.sigma(i) - self.off

    def axis_nodes(self):
        i = np.arange(self.i_half, self.n_u)
        return i, i - self.off

    def region(self, u):
        u = np.asarray(u, dtype=float)
        tol = _TOL * max(1.0, abs(self.delta))
        return np.where(u < -tol, REGION_III, np.where(u <= self.delta + tol, REGION_II, REGION_I))

    def region_tags(self) -> np.ndarray:
        return np.broadcast_to(self.region(self.u)[:, None], self.shape)

    def u_index(self, value: float) -> int | None:
        k = int(np.argmin(np.abs(self.u - value)))
        return k if abs(self.u[k] - value) <= 1e-9 * max(1.0, abs(value)) else None

    def ubar_index(self, value: float) -> int | None:
        k = int(np.argmin(np.abs(self.ubar - value)))
        return k if abs(self.ubar[k] - value) <= 1e-9 * max(1.0, abs(value)) else None

    def node_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.x).tobytes() + f"{self.i_half},{self.n_u}".encode()).hexdigest()[:16]

    def summary(self) -> dict:
        adm = int(self.admissible().sum())
        counts = {}
        for lo, hi, h in self.bands:
            sel = (self.x >= lo - _TOL) & (self.x <= hi + _TOL)
            counts[f"[{lo:.6g},{hi:.6g}]"] = {"target": h, "nodes": int(sel.sum())}
        return {
            "delta": self.delta,
            "n_x": len(self.x),
            "n_u": self.n_u,
            "n_ubar": self.n_ubar,
            "admissible_nodes": adm,
            "h_fine": self.h_fine,
            "h_coarse": self.h_coarse,
            "ubar_max": self.ubar_max,
            "u_cap": self.u_cap,
            "refine_level": self.refine_level,
            "bands": counts,
            "memory_bytes_per_field_array": int(self.n_u * self.n_ubar * 8),
            "hash": self.node_hash(),
        }


def _upper_nodes(delta: float, ubar_max: float, h: float, n_per_delta: int, h_coarse: float, slope: float):
    """Nodes on [1/2, ubar_max]: fine lattice 1 + k h on [max(1/2, 1-5delta), 1+4delta], graded elsewhere."""
    k_lo = 5 * n_per_delta
    if 1.0 - k_lo * h < 0.5:
        k_lo = int(np.floor(0.5 / h + 1e-9))
    k_hi = 4 * n_per_delta
    lattice = 1.0 + h * np.arange(-k_lo, k_hi + 1)
    parts = []
    gap = lattice[0] - 0.5
    if gap > _TOL:
        if gap < 1.2 * h:
            # single cell next to the mirror point
            parts.append(np.array([0.5]))
        else:
            parts.append(np.concatenate([[0.5], _graded_segment(0.5, lattice[0], None, h, h_coarse, slope)]))
    parts.append(lattice)
    if ubar_max < lattice[-1] + h:
        raise GridError(f"ubar_max = {ubar_max} leaves no room above the fine band")
    parts.append(_graded_segment(lattice[-1], ubar_max, h, None, h_coarse, slope))
    parts.append([ubar_max])
    return np.concatenate(parts), (lattice[0], lattice[-1])


def _bisect(x: np.ndarray, levels: int) -> np.ndarray:
    for _ in range(levels):
        mid = 0.5 * (x[1:] + x[:-1])
        y = np.empty(2 * len(x) - 1)
        y[0::2] = x
        y[1::2] = mid
        x = y
    return x


def build_grid(
    delta: float,
    ubar_max: float = 40.0,
    h_coarse: float = 0.05,
    h_fine: float | None = None,
    u_cap: float | None = None,
    refine: int = 0,
    slope: float = 0.15,
) -> DoubleNullGrid:
    """Graded double-null grid.

    ``h_fine`` is the target spacing inside the pulse bands (default delta/64);
    ``refine`` bisects every cell that many times, giving nested grids.
    """
    if not (0 < delta <= 0.25):
        raise GridError(f"delta must lie in (0, 0.25], got {delta}")
    h_fine = delta / 64 if h_fine is None else float(h_fine)
    if h_fine > delta / 32 * (1 + 1e-12):
        raise GridError(f"h_fine = {h_fine:g} exceeds delta/32")
    if ubar_max < 2:
        raise GridError("ubar_max must be at least 2")
    if h_coarse < h_fine:
        raise GridError("h_coarse must not be finer than h_fine")
    n_per_delta = int(np.ceil(delta / h_fine - 1e-9))
    h = delta / n_per_delta
    upper, (f_lo, f_hi) = _upper_nodes(delta, ubar_max, h, n_per_delta, h_coarse, slope)
    upper = _bisect(upper, refine)
    h_eff = h / 2**refine
    # mirror (1/2, 1 + delta] onto [-delta, 1/2); fine lattice values are mirrored exactly
    k_mirror = np.round((upper - 1.0) / h_eff)
    on_lattice = (upper >= f_lo - _TOL) & (upper <= f_hi + _TOL) & (np.abs(upper - (1.0 + k_mirror * h_eff)) < 1e-9)
    upper = np.where(on_lattice, 1.0 + k_mirror * h_eff, upper)
    sel = (upper > 0.5 + _TOL) & (upper <= 1.0 + delta + _TOL)
    mirrored = np.where(on_lattice[sel], -k_mirror[sel] * h_eff, 1.0 - upper[sel])[::-1]
    if abs(upper[0] - 0.5) > _TOL:
        raise GridError("internal: upper nodes must start at 1/2")
    x = np.concatenate([mirrored, upper])
    i_half = len(mirrored)
    _check_ratios(x, "grid")
    if u_cap is None:
        u_cap = ubar_max / 2 + 1.0
    u_cap = min(float(u_cap), ubar_max)
    n_u = int(np.searchsorted(x, u_cap + _TOL, side="right"))
    if n_u <= i_half:
        raise GridError("u_cap must exceed 1/2")
    bands = (
        (-delta, delta, h_eff),
        (f_lo, f_hi, h_eff),
        (1 - delta, 1 + delta, h_eff),
    )
    for lo, hi, target in bands:
        sel = (x >= lo - _TOL) & (x <= hi + _TOL)
        d = np.diff(x[sel])
        if d.size and d.max() > target * (1 + 1e-9):
            raise GridError(f"band [{lo:g}, {hi:g}] spacing {d.max():g} exceeds target {target:g}")
    x.setflags(write=False)
    return DoubleNullGrid(delta, x, i_half, n_u, float(ubar_max), u_cap, h_eff, h_coarse / 2**refine, bands, refine)


# ---------------------------------------------------------------------------
# Cones, slices and spheres


@dataclass(frozen=True)
class ConeSlice:
    """Samples on a null cone, time slice or sphere.

    Each sample is a two-point linear interpolation ``wa*F[ia, ja] + wb*F[ib, jb]``;
    ``weights`` already include the 4 pi r^2 area factor.
    """

    kind: str
    value: float
    u: np.ndarray
    ubar: np.ndarray
    ia: np.ndarray
    ja: np.ndarray
    ib: np.ndarray
    jb: np.ndarray
    wa: np.ndarray
    wb: np.ndarray
    weights: np.ndarray

    @property
    def r(self) -> np.ndarray:
        return self.ubar - self.u

    @property
    def t(self) -> np.ndarray:
        return self.ubar + self.u

    @property
    def param(self) -> np.ndarray:
        """Ordering coordinate: ubar on outgoing cones, u on incoming cones, r on slices."""
        return {"outgoing": self.ubar, "incoming": self.u, "slice": self.r, "sphere": self.r}[self.kind]

    def __len__(self) -> int:
        return len(self.u)

    def sample(self, field2d: np.ndarray) -> np.ndarray:
        return self.wa * field2d[self.ia, self.ja] + self.wb * field2d[self.ib, self.jb]

    def sample_mask(self, mask2d: np.ndarray) -> np.ndarray:
        a = mask2d[self.ia, self.ja]
        b = mask2d[self.ib, self.jb] | (self.wb == 0)
        return a & b

    def restrict(self, keep: np.ndarray) -> "ConeSlice":
        """Sub-slice; quadrature weights are recomputed for the kept samples."""
        keep = np.asarray(keep, dtype=bool)
        new = {k: getattr(self, k)[keep] for k in ("u", "ubar", "ia", "ja", "ib", "jb", "wa", "wb")}
        p = self.param[keep]
        return ConeSlice(self.kind, self.value, weights=_weights(self.kind, p, new["ubar"] - new["u"]), **new)


def _trapezoid_weights(p: np.ndarray) -> np.ndarray:
    w = np.zeros_like(p)
    if len(p) > 1:
        d = np.diff(p)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    return w


def _weights(kind: str, p: np.ndarray, r: np.ndarray) -> np.ndarray:
    if kind == "sphere":
        return 4 * np.pi * r**2
    w = _trapezoid_weights(p)
    return 4 * np.pi * r**2 * np.abs(w)


def _bracket(nodes: np.ndarray, value: float):
    """Indices (a, b) and weights so that value = wa*nodes[a] + wb*nodes[b]."""
    k = int(np.searchsorted(nodes, value))
    scale = max(1.0, abs(value))
    if k < len(nodes) and abs(nodes[k] - value) <= 1e-9 * scale:
        return k, k, 1.0, 0.0
    if k > 0 and abs(nodes[k - 1] - value) <= 1e-9 * scale:
        return k - 1, k - 1, 1.0, 0.0
    if k == 0 or k == len(nodes):
        return None
    a, b = k - 1, k
    wb = (value - nodes[a]) / (nodes[b] - nodes[a])
    return a, b, 1.0 - wb, wb


def _empty(kind, value):
    e = np.empty(0)
    ei = np.empty(0, dtype=np.int64)
    return ConeSlice(kind, value, e, e, ei, ei, ei, ei, e, e, e)


def extract_cone(grid: DoubleNullGrid, kind: str, value, lower: float | None = None, upper: float | None = None) -> ConeSlice:
    """Outgoing cone (u = value), incoming cone (ubar = value), slice (t = value) or sphere ((ubar, u) = value).

    Off-grid cones are linearly interpolated between the neighbouring grid lines;
    ``lower``/``upper`` truncate along the ordering coordinate.
    """
    adm = grid.admissible()
    ub, uu = grid.ubar, grid.u
    if kind == "sphere":
        ubar_v, u_v = value
        bu, bb = _bracket(uu, u_v), _bracket(ub, ubar_v)
        if bu is None or bb is None or u_v + ubar_v < 1 - 1e-12 or ubar_v < u_v:
            return _empty(kind, value)
        if bu[3] == 0.0:  # on a u-line: interpolate in ubar
            ia = ib = bu[0]
            ja, jb, wa, wb = bb
        else:  # interpolate in u at the nearest ubar-line
            ia, ib, wa, wb = bu
            ja = jb = bb[0] if bb[2] >= bb[3] else bb[1]
        r = np.array([ubar_v - u_v])
        A = lambda v: np.array([v])
        return ConeSlice(kind, value, A(u_v), A(ubar_v), A(ia), A(ja), A(ib), A(jb), A(wa), A(wb), 4 * np.pi * r**2)
    value = float(value)
    if kind == "outgoing":
        br = _bracket(uu, value)
        if br is None:
            return _empty(kind, value)
        ia, ib, wa, wb = br
        js = np.nonzero(adm[ia] & adm[ib])[0]
        s_ub = ub[js]
        keep = (s_ub >= value - 1e-12) & (s_ub + value >= 1 - 1e-12)
        js, s_ub = js[keep], s_ub[keep]
        s_u = np.full_like(s_ub, value)
        n = len(js)
        I = lambda v: np.full(n, v, dtype=np.int64)
        out = dict(u=s_u, ubar=s_ub, ia=I(ia), ja=js, ib=I(ib), jb=js, wa=np.full(n, wa), wb=np.full(n, wb))
        p = s_ub
    elif kind == "incoming":
        br = _bracket(ub, value)
        if br is None:
            return _empty(kind, value)
        ja, jb, wa, wb = br
        is_ = np.nonzero(adm[:, ja] & adm[:, jb])[0]
        s_u = uu[is_]
        keep = (s_u <= value + 1e-12) & (s_u + value >= 1 - 1e-12)
        is_, s_u = is_[keep], s_u[keep]
        n = len(is_)
        I = lambda v: np.full(n, v, dtype=np.int64)
        out = dict(u=s_u, ubar=np.full(n, value), ia=is_, ja=I(ja), ib=is_, jb=I(jb), wa=np.full(n, wa), wb=np.full(n, wb))
        p = s_u
    elif kind == "slice":
        rows = []
        for i in range(grid.n_u):
            if uu[i] > value / 2 + 1e-12:
                break
            br = _bracket(ub, value - uu[i])
            if br is None:
                continue
            ja, jb, wa, wb = br
            if adm[i, ja] and adm[i, jb]:
                rows.append((i, ja, jb, wa, wb))
        if not rows:
            return _empty(kind, value)
        arr = np.array(rows, dtype=float)
        is_ = arr[:, 0].astype(np.int64)
        s_u = uu[is_]
        out = dict(u=s_u, ubar=value - s_u, ia=is_, ja=arr[:, 1].astype(np.int64), ib=is_, jb=arr[:, 2].astype(np.int64),
                   wa=arr[:, 3], wb=arr[:, 4])
        p = value - 2 * s_u
    else:
        raise GridError(f"unknown slice kind {kind!r}")
    keep = np.ones(len(p), dtype=bool)
    if lower is not None:
        keep &= p >= lower - 1e-12
    if upper is not None:
        keep &= p <= upper + 1e-12
    out = {k: v[keep] for k, v in out.items()}
    p = p[keep]
    return ConeSlice(kind, value, weights=_weights(kind, p, out["ubar"] - out["u"]), **out)


def cone_area(kind: str, value: float, lo: float, hi: float) -> float:
    """Exact truncated measure int 4 pi r^2 d(param) for comparisons."""
    if kind == "outgoing":  # r = ubar - u, param ubar
        f = lambda s: 4 * np.pi * (s - value) ** 3 / 3
    elif kind == "incoming":  # r = ubar - u, param u
        f = lambda s: -4 * np.pi * (value - s) ** 3 / 3
    elif kind == "slice":  # param r
        f = lambda s: 4 * np.pi * s**3 / 3
    else:
        raise GridError(f"no closed-form area for {kind!r}")
    return float(f(hi) - f(lo))
