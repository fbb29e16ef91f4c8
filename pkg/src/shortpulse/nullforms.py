"""Quadratic forms on Minkowski space and their radial null-frame reduction.

A form ``A`` acts on covectors: ``Q(dphi, dpsi) = A[a, b] d_a phi d_b psi`` with
index 0 the time direction.  Under spherical symmetry the Cartesian gradient
of a radial function is ``(phi_t, n phi_r)`` for the unit direction ``n``, and
with ``phi_t = (L + Lb)/2``, ``phi_r = (L - Lb)/2`` every reducible form
collapses to four coefficients on the products of ``L`` and ``Lb`` derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import InputError, PreconditionError, ReductionError

MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])
NULL_RTOL = 1e-12


@dataclass(frozen=True)
class QuadraticForm:
    coeffs: np.ndarray
    field_pair: tuple[int, int] = (0, 0)
    sym: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=float)
        if a.shape != (4, 4):
            raise InputError(f"coefficient matrix must be 4x4, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("coefficient matrix contains non-finite entries")
        a.setflags(write=False)
        s = 0.5 * (a + a.T)
        s.setflags(write=False)
        object.__setattr__(self, "coeffs", a)
        object.__setattr__(self, "sym", s)
        object.__setattr__(self, "field_pair", (int(self.field_pair[0]), int(self.field_pair[1])))

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        if self.field_pair != other.field_pair:
            raise InputError("cannot add forms acting on different field pairs")
        return QuadraticForm(self.coeffs + other.coeffs, self.field_pair)

    def __mul__(self, c: float) -> "QuadraticForm":
        return QuadraticForm(float(c) * self.coeffs, self.field_pair)

    __rmul__ = __mul__

    def __call__(self, xi, eta) -> float:
        return float(np.asarray(xi) @ self.coeffs @ np.asarray(eta))

    @classmethod
    def from_row_major(cls, values: Sequence[float], field_pair=(0, 0)) -> "QuadraticForm":
        values = list(values)
        if len(values) != 16:
            raise InputError(f"expected 16 coefficients, got {len(values)}")
        return cls(np.reshape(np.asarray(values, dtype=float), (4, 4)), tuple(field_pair))

    def row_major(self) -> list[float]:
        return [float(v) for v in self.coeffs.ravel()]


def q0(field_pair=(0, 0)) -> QuadraticForm:
    """The metric form g(dphi, dpsi) = -phi_t psi_t + grad phi . grad psi."""
    return QuadraticForm(MINKOWSKI.copy(), field_pair)


def q_ab(a: int, b: int, field_pair=(0, 0)) -> QuadraticForm:
    """Antisymmetric form d_a phi d_b psi - d_b phi d_a psi."""
    if not (0 <= a < 4 and 0 <= b < 4) or a == b:
        raise InputError(f"invalid index pair ({a}, {b})")
    m = np.zeros((4, 4))
    m[a, b] = 1.0
    m[b, a] = -1.0
    return QuadraticForm(m, field_pair)


def dt_squared(field_pair=(0, 0)) -> QuadraticForm:
    """(d_t phi)(d_t psi); violates the null condition."""
    m = np.zeros((4, 4))
    m[0, 0] = 1.0
    return QuadraticForm(m, field_pair)


def null_basis(field_pair=(0, 0)) -> list[QuadraticForm]:
    return [q0(field_pair)] + [q_ab(a, b, field_pair) for a, b in combinations(range(4), 2)]


def null_vector(theta: float, varphi: float) -> np.ndarray:
    return np.array([1.0, np.sin(theta) * np.cos(varphi), np.sin(theta) * np.sin(varphi), np.cos(theta)])


def _witness_candidates(n_theta: int = 13, n_phi: int = 24) -> np.ndarray:
    # equator first so that axis-aligned witnesses like (1, 1, 0, 0) come out of ties
    thetas = np.pi / 2 + np.concatenate([[0.0], *[[d, -d] for d in np.linspace(0, np.pi / 2, n_theta)[1:]]])
    phis = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    return np.array([null_vector(th, ph) for th in thetas for ph in phis])


@dataclass(frozen=True)
class NullCheck:
    is_null: bool
    witness: np.ndarray | None = None
    witness_value: float = 0.0

    def __bool__(self) -> bool:
        return self.is_null


def check_null_condition(form: QuadraticForm) -> NullCheck:
    """Decide the null condition algebraically: sym(A) must be a multiple of g.

    When the test fails, a null covector with A(xi, xi) != 0 is returned from a
    deterministic scan over (1, sin th cos ph, sin th sin ph, cos th).
    """
    s = form.sym
    scale = float(np.linalg.norm(form.coeffs))
    if scale == 0.0:
        return NullCheck(True)
    c = float(np.sum(s * MINKOWSKI)) / 4.0
    if np.linalg.norm(s - c * MINKOWSKI) <= NULL_RTOL * scale:
        return NullCheck(True)
    cands = _witness_candidates()
    vals = np.einsum("ka,ab,kb->k", cands, form.coeffs, cands)
    k = int(np.argmax(np.abs(vals)))
    if vals[k] == 0.0:  # pragma: no cover - the scan is dense enough for any non-null form
        raise ReductionError("no witness found for a non-null form")
    return NullCheck(False, cands[k], float(vals[k]))


@dataclass(frozen=True)
class RadialNullFrameForm:
    """Coefficients of (L phi)(L psi), (L phi)(Lb psi), (Lb phi)(L psi), (Lb phi)(Lb psi)."""

    c_ll: float
    c_lb: float
    c_bl: float
    c_bb: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c_ll, self.c_lb, self.c_bl, self.c_bb])

    def __add__(self, other: "RadialNullFrameForm") -> "RadialNullFrameForm":
        return RadialNullFrameForm(*(self.as_array() + other.as_array()))

    def to_dict(self) -> dict:
        return {"c_ll": self.c_ll, "c_lb": self.c_lb, "c_bl": self.c_bl, "c_bb": self.c_bb}


def reduce_to_null_frame(form: QuadraticForm) -> RadialNullFrameForm:
    """Restrict a form to spherically symmetric arguments.

    Mixed time-space entries leave an odd angular factor n_i and spatial blocks
    that are not isotropic leave n_i n_j; both are rejected.  For a diagonal
    pair (J == J) only the symmetric part can act, so it is reduced instead.
    """
    a = form.sym if form.field_pair[0] == form.field_pair[1] else form.coeffs
    tol = NULL_RTOL * max(float(np.linalg.norm(form.coeffs)), 1.0)
    bad = []
    for i in range(1, 4):
        if abs(a[0, i]) > tol:
            bad.append(f"A[0,{i}]={a[0, i]:g}")
        if abs(a[i, 0]) > tol:
            bad.append(f"A[{i},0]={a[i, 0]:g}")
    spatial = 0.5 * (a[1:, 1:] + a[1:, 1:].T)
    c = float(np.trace(spatial)) / 3.0
    dev = spatial - c * np.eye(3)
    for i in range(3):
        for j in range(i, 3):
            if abs(dev[i, j]) > tol:
                bad.append(f"sym(A)[{i + 1},{j + 1}] deviates from isotropy by {dev[i, j]:g}")
    if bad:
        raise ReductionError("form has angular dependence on radial arguments: " + "; ".join(bad))
    a00 = float(a[0, 0])
    plus, minus = 0.25 * (a00 + c), 0.25 * (a00 - c)
    return RadialNullFrameForm(plus, minus, minus, plus)


def _combine(form: RadialNullFrameForm, dphi, dpsi):
    lp, lbp = dphi
    lq, lbq = dpsi
    return form.c_ll * lp * lq + form.c_lb * lp * lbq + form.c_bl * lbp * lq + form.c_bb * lbp * lbq


def evaluate(form: RadialNullFrameForm, dphi, dpsi):
    """Evaluate the reduced form on (L phi, Lb phi) and (L psi, Lb psi); broadcasts."""
    out = _combine(form, dphi, dpsi)
    if not np.all(np.isfinite(out)):
        raise InputError("non-finite derivative input")
    return out


def evaluate_cartesian(form: QuadraticForm, dphi_t, dphi_r, dpsi_t, dpsi_r, direction=(1.0, 0.0, 0.0)):
    """Evaluate the 4x4 form on radial gradients (f_t, n f_r) along a unit direction n."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    gp = np.stack(np.broadcast_arrays(dphi_t, *(dphi_r * ni for ni in n)))
    gq = np.stack(np.broadcast_arrays(dpsi_t, *(dpsi_r * ni for ni in n)))
    return np.einsum("a...,ab,b...->...", gp, form.coeffs, gq)


def nullform_pointwise_bound_check(form: RadialNullFrameForm, samples, eps_guard: float = 1e-300) -> float:
    """Max of |Q| / (|L phi||Lb psi| + |Lb phi||L psi|) over rows (L phi, Lb phi, L psi, Lb psi)."""
    scale = max(float(np.max(np.abs(form.as_array()))), 1e-300)
    if abs(form.c_bb) > NULL_RTOL * scale:
        raise PreconditionError(f"c_bb = {form.c_bb:g} != 0: the bad-bad product is present")
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    q = evaluate(form, (s[:, 0], s[:, 1]), (s[:, 2], s[:, 3]))
    den = np.abs(s[:, 0] * s[:, 3]) + np.abs(s[:, 1] * s[:, 2]) + eps_guard
    return float(np.max(np.abs(q) / den)) if len(s) else 0.0


def commutator_correction(form: QuadraticForm, z: str) -> QuadraticForm:
    """Form Qt with Z Q(dphi, dpsi) = Q(dZphi, dpsi) + Q(dphi, dZpsi) + Qt(dphi, dpsi).

    Translations commute with d, so Qt = 0 for T; for the scaling field
    [S, d_a] = -d_a, giving Qt = -2 Q.
    """
    if z == "T":
        return QuadraticForm(np.zeros((4, 4)), form.field_pair)
    if z == "S":
        return QuadraticForm(-2.0 * form.coeffs, form.field_pair)
    raise InputError(f"commutator correction available for T and S only, got {z!r}")


@dataclass(frozen=True)
class CouplingTerm:
    target: int
    form: QuadraticForm


@dataclass(frozen=True)
class SystemCoupling:
    n_fields: int
    terms: tuple[CouplingTerm, ...] = ()

    def __post_init__(self):
        if self.n_fields < 1:
            raise InputError("n_fields must be positive")
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            idx = (t.target, *t.form.field_pair)
            if any(not (0 <= k < self.n_fields) for k in idx):
                raise InputError(f"field index out of range in term {idx} for N = {self.n_fields}")

    def reduced(self) -> list[tuple[int, int, int, RadialNullFrameForm]]:
        return [(t.target, *t.form.field_pair, reduce_to_null_frame(t.form)) for t in self.terms]

    def kernel_arrays(self):
        red = self.reduced()
        tgt = np.array([r[0] for r in red], dtype=np.int64)
        jj = np.array([r[1] for r in red], dtype=np.int64)
        kk = np.array([r[2] for r in red], dtype=np.int64)
        cc = np.array([r[3].as_array() for r in red], dtype=float).reshape(len(red), 4)
        return tgt, jj, kk, cc

    def is_null(self) -> bool:
        return all(check_null_condition(t.form).is_null for t in self.terms)

    def is_linear(self) -> bool:
        return all(not np.any(t.form.coeffs) for t in self.terms)

    def source(self, lphi: np.ndarray, lbphi: np.ndarray) -> np.ndarray:
        """Q^I at points, given arrays of shape (n_fields, ...); NaN inputs propagate."""
        out = np.zeros_like(np.asarray(lphi, dtype=float))
        for tgt, j, k, red in self.reduced():
            out[tgt] += _combine(red, (lphi[j], lbphi[j]), (lphi[k], lbphi[k]))
        return out

    def to_dict(self) -> dict:
        return {
            "n_fields": self.n_fields,
            "terms": [{"target": t.target, "pair": list(t.form.field_pair), "coeffs": t.form.row_major()} for t in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemCoupling":
        terms = [
            CouplingTerm(int(t["target"]), QuadraticForm.from_row_major(t["coeffs"], tuple(t.get("pair", (0, 0)))))
            for t in d.get("terms", [])
        ]
        return cls(int(d.get("n_fields", 1)), tuple(terms))


def default_coupling(strength: float = 1.0) -> SystemCoupling:
    return SystemCoupling(1, (CouplingTerm(0, strength * q0()),))


def dt_squared_coupling(strength: float = 1.0) -> SystemCoupling:
    return SystemCoupling(1, (CouplingTerm(0, strength * dt_squared()),))


def linear_coupling(n_fields: int = 1) -> SystemCoupling:
    return SystemCoupling(n_fields, ())
