"""Short-pulse Cauchy data on the t = 1 slice.

The pulse lives in the annulus 1 - 2*delta < r < 1 with height ~ delta**0.5, so
each r-derivative costs a factor 1/delta.  The momentum is tied to the profile
by phi1 = -d_r phi0, which makes (d_t + d_r) phi vanish on the initial slice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, InputError, ResolutionError

DELTA_MAX = 0.25


@dataclass(frozen=True)
class PulseProfile:
    """Normalized bump C s**p (1-s)**q on (0, 1), zero outside.

    The first p-1 (resp. q-1) derivatives vanish at the endpoints, so p = q = 10
    gives a C^9 function: the function plus nine derivatives are continuous.
    """

    kind: str = "poly"
    params: tuple[float, ...] = (10, 10)
    poly: Polynomial = field(init=False, repr=False, compare=False)
    norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind != "poly":
            raise ConfigError(f"unknown profile kind {self.kind!r}", module="pulsedata")
        if len(self.params) != 2:
            raise ConfigError("poly profile takes an exponent pair (p, q)", module="pulsedata")
        p, q = self.params
        if int(p) != p or int(q) != q or p < 10 or q < 10:
            raise ConfigError(f"exponents must be integers >= 10, got {self.params}", module="pulsedata")
        p, q = int(p), int(q)
        object.__setattr__(self, "params", (p, q))
        s_star = p / (p + q)
        c = 1.0 / (s_star**p * (1.0 - s_star) ** q)
        poly = c * Polynomial([0.0, 1.0]) ** p * Polynomial([1.0, -1.0]) ** q
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "norm", c)

    def __call__(self, s, n: int = 0):
        """n-th derivative of the profile at s (vectorized)."""
        s = np.asarray(s, dtype=float)
        inside = (s > 0.0) & (s < 1.0)
        x = np.where(inside, s, 0.5)
        p, q = self.params
        # Leibniz rule on the factored form; the expanded power basis cancels badly near s = 1
        out = np.zeros_like(x)
        for k in range(n + 1):
            a, b = k, n - k
            if a > p or b > q:
                continue
            fa = float(np.prod(np.arange(p - a + 1, p + 1)))
            fb = float(np.prod(np.arange(q - b + 1, q + 1))) * (-1.0) ** b
            out = out + comb(n, k) * fa * fb * x ** (p - a) * (1.0 - x) ** (q - b)
        return np.where(inside, self.norm * out, 0.0)

    def antiderivative(self, s):
        """Integral of the profile from 0 to s, constant beyond 1."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        prim = self.poly.integ()
        return prim(s) - prim(0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


DEFAULT_PROFILE = PulseProfile()


def bump(s):
    """Default profile 4**10 s**10 (1-s)**10 on (0, 1), zero elsewhere."""
    return DEFAULT_PROFILE(s)


@dataclass(frozen=True)
class ShortPulseData:
    delta: float
    amplitude: float = 1.0
    profile: PulseProfile = DEFAULT_PROFILE
    n_fields: int = 1

    @property
    def scale(self) -> float:
        return self.amplitude * np.sqrt(self.delta)

    @property
    def r_inner(self) -> float:
        return 1.0 - 2.0 * self.delta

    def s_of_r(self, r):
        return (1.0 - np.asarray(r, dtype=float)) / (2.0 * self.delta)

    def phi0(self, r, n: int = 0):
        """n-th r-derivative of the initial profile."""
        r = np.asarray(r, dtype=float)
        fac = (-0.5 / self.delta) ** n
        # mask on r itself so the support is exact despite rounding in s
        return np.where((r > self.r_inner) & (r < 1.0), self.scale * fac * self.profile(self.s_of_r(r), n), 0.0)

    def phi1(self, r, n: int = 0):
        """n-th r-derivative of the initial time derivative, -d_r phi0."""
        return -self.phi0(r, n + 1)

    def phi0_integral(self, r):
        """Integral of phi0 from 0 to r."""
        # d r = -2 delta d s; from r to 1 corresponds to s from 0 to s(r)
        total = 2.0 * self.delta * self.scale * self.profile.antiderivative(1.0)
        tail = 2.0 * self.delta * self.scale * self.profile.antiderivative(self.s_of_r(r))
        return total - tail

    def sup_norms(self) -> dict:
        s = np.linspace(0.0, 1.0, 4001)
        r = 1.0 - 2.0 * self.delta * s
        return {f"sup_dr{k}_phi0": float(np.max(np.abs(self.phi0(r, k)))) for k in range(4)}

    def to_dict(self) -> dict:
        return {"delta": self.delta, "amplitude": self.amplitude, "profile": self.profile.to_dict(), "n_fields": self.n_fields}


def make_short_pulse(delta: float, amplitude: float = 1.0, profile: PulseProfile | None = None, n_fields: int = 1) -> ShortPulseData:
    if not (np.isfinite(delta) and 0.0 < delta <= DELTA_MAX):
        raise ConfigError(f"delta must lie in (0, {DELTA_MAX}], got {delta}", module="pulsedata")
    if not np.isfinite(amplitude):
        raise ConfigError("amplitude must be finite", module="pulsedata")
    if n_fields < 1:
        raise ConfigError("n_fields must be positive", module="pulsedata")
    return ShortPulseData(float(delta), float(amplitude), profile or DEFAULT_PROFILE, int(n_fields))


def zero_data(delta: float, n_fields: int = 1) -> ShortPulseData:
    return make_short_pulse(delta, 0.0, n_fields=n_fields)


def _quadrature(a: float, b: float, step: float, order: int = 8):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    n = max(1, int(np.ceil((b - a) / step - 1e-9)))
    x, w = leggauss(order)
    edges = np.linspace(a, b, n + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


def _laplacian_deriv(f, r, n: int):
    """n-th r-derivative of the radial Laplacian f'' + 2 f'/r, with f(r, m) the m-th derivative."""
    out = f(r, n + 2)
    for m in range(n + 1):
        j = n - m
        inv = (-1.0) ** j * float(np.prod(np.arange(1, j + 1))) / r ** (j + 1)
        out = out + 2.0 * comb(n, m) * f(r, m + 1) * inv
    return out


def _sobolev_density(f, r, order: int):
    """|grad^order f|^2 for radial compactly supported f, via integration by parts."""
    if order == 0:
        return f(r, 0) ** 2
    if order == 1:
        return f(r, 1) ** 2
    if order == 2:
        return _laplacian_deriv(f, r, 0) ** 2
    if order == 3:
        return _laplacian_deriv(f, r, 1) ** 2
    raise InputError(f"derivative order {order} not supported")


def initial_classical_energy(data: ShortPulseData, k: int, step: float | None = None) -> float:
    """E_k = int |grad^{k+1} phi0|^2 + |grad^k phi1|^2 dx over R^3, summed over fields."""
    if k not in (0, 1, 2):
        raise InputError(f"k must be 0, 1 or 2, got {k}")
    step = data.delta / 64 if step is None else float(step)
    if step > data.delta / 16:
        raise ResolutionError(f"quadrature step {step:g} does not resolve the pulse (need <= delta/16)")
    r, w = _quadrature(data.r_inner, 1.0, step)
    dens = _sobolev_density(data.phi0, r, k + 1) + _sobolev_density(data.phi1, r, k)
    return float(data.n_fields * np.sum(4.0 * np.pi * r**2 * w * dens))


def data_constraint_defect(data: ShortPulseData, coupling=None, n: int = 4001) -> float:
    """sup |d_t^2 phi - d_r^2 phi| on the initial slice with d_t^2 phi taken from the equation.

    On t = 1, d_t^2 phi - d_r^2 phi = (2/r) d_r phi0 - Q, which is of size delta**-0.5.
    """
    r = 1.0 - 2.0 * data.delta * np.linspace(0.0, 1.0, n)
    val = 2.0 * data.phi0(r, 1) / r
    if coupling is not None and coupling.terms:
        lp = data.phi1(r) + data.phi0(r, 1)
        lb = data.phi1(r) - data.phi0(r, 1)
        lp = np.broadcast_to(lp, (coupling.n_fields, n))
        lb = np.broadcast_to(lb, (coupling.n_fields, n))
        val = val - coupling.source(lp, lb)
    return float(np.max(np.abs(val)))


# ---------------------------------------------------------------------------
# Weighted initial norm: Taylor jets in t at t = 1, built from the equation.

GOOD_FIELDS = ("S", "B")
BAD_FIELDS = ("T",)


def _words(k: int):
    """(bad count l, word) for words T^l followed by a good word of length k - l."""
    from itertools import product

    for l in range(k + 1):
        for g in product(GOOD_FIELDS, repeat=k - l):
            yield l, ("T",) * l + g


class _Jet:
    """Time-Taylor jet of a radial function at t = 1: entries are d_t^m g(1, r) as sympy exprs."""

    def __init__(self, terms, r):
        self.terms = list(terms)
        self.r = r

    def dt(self):
        return _Jet(self.terms[1:], self.r)

    def dr(self):
        return _Jet([g.diff(self.r) for g in self.terms], self.r)

    def times_t(self):
        return _Jet([g + (m * self.terms[m - 1] if m else 0) for m, g in enumerate(self.terms)], self.r)

    def times_r(self):
        return _Jet([self.r * g for g in self.terms], self.r)

    def __add__(self, other):
        n = min(len(self.terms), len(other.terms))
        return _Jet([self.terms[m] + other.terms[m] for m in range(n)], self.r)

    def __sub__(self, other):
        n = min(len(self.terms), len(other.terms))
        return _Jet([self.terms[m] - other.terms[m] for m in range(n)], self.r)

    def apply(self, z: str):
        if z == "T":
            return self.dt()
        if z == "S":
            return self.dt().times_t() + self.dr().times_r()
        if z == "B":
            return self.dt().times_r() + self.dr().times_t()
        if z == "L":
            return self.dt() + self.dr()
        if z == "Lb":
            return self.dt() - self.dr()
        raise InputError(f"unknown vector field {z!r}")


def _solution_jets(data: ShortPulseData, coupling, order: int):
    """Jets of every field up to d_t^order using phi_tt = Laplacian(phi) - Q."""
    import sympy as sp

    r = sp.Symbol("r", positive=True)
    s = (1 - r) / (2 * data.delta)
    p, q = data.profile.params
    norm = (p + q) ** (p + q) / (p**p * q**q)
    base = data.scale * norm * s**p * (1 - s) ** q
    nf = data.n_fields
    jets = [[base, -base.diff(r)] for _ in range(nf)]
    reduced = coupling.reduced() if coupling is not None else []
    for k in range(order - 1):
        # entry k + 2 from entry k
        for i in range(nf):
            g = jets[i][k]
            jets[i].append(g.diff(r, 2) + 2 * g.diff(r) / r)
        for tgt, jj, kk, red in reduced:
            lj = [jets[jj][m + 1] + jets[jj][m].diff(r) for m in range(k + 1)]
            bj = [jets[jj][m + 1] - jets[jj][m].diff(r) for m in range(k + 1)]
            lk = [jets[kk][m + 1] + jets[kk][m].diff(r) for m in range(k + 1)]
            bk = [jets[kk][m + 1] - jets[kk][m].diff(r) for m in range(k + 1)]
            dq = 0
            for m in range(k + 1):
                b = comb(k, m)
                dq += b * (red.c_ll * lj[m] * lk[k - m] + red.c_lb * lj[m] * bk[k - m]
                           + red.c_bl * bj[m] * lk[k - m] + red.c_bb * bj[m] * bk[k - m])
            jets[tgt][k + 2] = jets[tgt][k + 2] - dq
    return r, [_Jet(j, r) for j in jets]


@lru_cache(maxsize=32)
def _weighted_norm_cached(data: ShortPulseData, coupling_json: str, n: int, step: float) -> tuple:
    import sympy as sp

    from .nullforms import SystemCoupling

    coupling = SystemCoupling.from_dict(json.loads(coupling_json)) if coupling_json else None
    r, jets = _solution_jets(data, coupling, n + 1)
    rq, wq = _quadrature(data.r_inner, 1.0, step)
    meas = 4.0 * np.pi * rq**2 * wq
    pieces = []
    for k in range(n + 1):
        for l, word in _words(k):
            for i, jet in enumerate(jets):
                g = jet
                for z in reversed(word):
                    g = g.apply(z)
                for which, wexp in (("Lb", l), ("L", l - 1)):
                    expr = g.apply(which).terms[0]
                    f = sp.lambdify(r, expr, "numpy")
                    vals = np.broadcast_to(np.asarray(f(rq), dtype=float), rq.shape)
                    norm = float(np.sqrt(np.sum(meas * vals**2)))
                    pieces.append((k, l, "".join(word) or "id", i, which, data.delta**wexp * norm))
    return tuple(pieces)


def initial_weighted_norm(data: ShortPulseData, n: int, coupling=None, step: float | None = None, terms: bool = False):
    """Delta-weighted norm of the commuted data on the initial slice, orders 0..n.

    Each word T^l W_good contributes delta**l ||Lb W phi|| + delta**(l-1) ||L W phi||
    in L2(4 pi r^2 dr); time derivatives come from the equation evaluated at t = 1.
    """
    if not (0 <= n <= 3):
        raise InputError(f"order n must be 0..3, got {n}")
    step = data.delta / 32 if step is None else float(step)
    if step > data.delta / 16:
        raise ResolutionError(f"quadrature step {step:g} does not resolve the pulse")
    if data.amplitude == 0.0:
        return (0.0, []) if terms else 0.0
    key = json.dumps(coupling.to_dict(), sort_keys=True) if coupling is not None and coupling.terms else ""
    pieces = _weighted_norm_cached(data, key, n, step)
    total = float(sum(p[-1] for p in pieces))
    return (total, list(pieces)) if terms else total
