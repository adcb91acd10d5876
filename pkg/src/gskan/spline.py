"""Uniform B-spline bases on a fixed domain.

Knot vectors are uniform: ``d`` padding knots continue the spacing on each
side of the active interval ``[lo, hi]``.  Every basis evaluation is local
(only the ``d + 1`` functions supported on the containing span are computed)
and returns exact zeros outside the active interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KnotVector:
    degree: int
    knots: np.ndarray
    domain_lo: float
    domain_hi: float

    @property
    def n_coeffs(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def n_spans(self) -> int:
        """Number of knot spans inside the active interval."""
        return len(self.knots) - 1 - 2 * self.degree

    @property
    def spacing(self) -> float:
        return (self.domain_hi - self.domain_lo) / self.n_spans

    def interior_knots(self) -> np.ndarray:
        d = self.degree
        return self.knots[d : len(self.knots) - d]


def build_uniform_knots(domain_lo: float, domain_hi: float, K: int, d: int = 3) -> KnotVector:
    """Uniform knot vector of total length ``K`` for degree ``d`` on ``[lo, hi]``.

    The resulting basis has ``K - d - 1`` functions.
    """
    if d < 1:
        raise ValueError(f"degree must be >= 1, got {d}")
    if K < 2 * d + 2:
        raise ValueError(f"insufficient knots for degree: K={K} < 2*d+2={2 * d + 2}")
    lo, hi = float(domain_lo), float(domain_hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("domain bounds must be finite")
    if lo >= hi:
        raise ValueError(f"inverted domain: [{lo}, {hi}]")
    n_spans = K - 1 - 2 * d
    h = (hi - lo) / n_spans
    knots = lo + (np.arange(K, dtype=np.float64) - d) * h
    # pin the active endpoints exactly
    knots[d] = lo
    knots[K - 1 - d] = hi
    knots.setflags(write=False)
    return KnotVector(degree=d, knots=knots, domain_lo=lo, domain_hi=hi)


def _locate(kv: KnotVector, t: np.ndarray):
    """Span offset, fractional position within the span, and in-domain mask."""
    inside = (t >= kv.domain_lo) & (t <= kv.domain_hi)
    s = (np.where(inside, t, kv.domain_lo) - kv.domain_lo) / kv.spacing
    j = np.clip(np.floor(s), 0, kv.n_spans - 1)
    u = s - j
    return j.astype(np.intp), u, inside


def _uniform_cox_de_boor(u: np.ndarray, degree: int) -> list[np.ndarray]:
    """Local Cox-de Boor recursion on a uniform grid in span coordinates.

    Returns the ``k + 1`` nonzero values for every degree ``k = 0..degree``;
    entry ``r`` of stage ``k`` belongs to basis function ``span - k + r``.
    With unit spacing the recursion denominators all equal ``k``.
    """
    stages = [np.ones(u.shape + (1,))]
    for k in range(1, degree + 1):
        prev = stages[-1]
        out = np.empty(u.shape + (k + 1,))
        saved = np.zeros(u.shape)
        for r in range(k):
            # right[r+1] = r + 1 - u, left[k-r] = u + k - r - 1
            temp = prev[..., r] / k
            out[..., r] = saved + (r + 1 - u) * temp
            saved = (u + k - r - 1) * temp
        out[..., k] = saved
        stages.append(out)
    return stages


def _evaluate(kv: KnotVector, t, with_derivative: bool):
    t = np.asarray(t, dtype=np.float64)
    offset, u, inside = _locate(kv, t)
    stages = _uniform_cox_de_boor(u, kv.degree)
    mask = inside[..., None]
    values = np.where(mask, stages[-1], 0.0)
    if not with_derivative:
        return offset, values, None
    lower = stages[-2]
    d = kv.degree
    deriv = np.zeros_like(values)
    # dB_{j,d}/dt = (B_{j,d-1} - B_{j+1,d-1}) / h on a uniform grid
    deriv[..., 1:] += lower
    deriv[..., :d] -= lower
    deriv = np.where(mask, deriv / kv.spacing, 0.0)
    return offset, values, deriv


def basis_values(kv: KnotVector, t):
    """Return ``(offset, values)`` for the ``d + 1`` basis functions active at ``t``.

    ``values[..., r]`` is ``B_{offset + r}(t)``.  Works elementwise on arrays.
    Outside the domain the values are zero and the offset is clamped.
    """
    offset, values, _ = _evaluate(kv, t, with_derivative=False)
    return offset, values


def basis_derivatives(kv: KnotVector, t):
    """Like :func:`basis_values` but returns ``dB/dt``."""
    offset, _, deriv = _evaluate(kv, t, with_derivative=True)
    return offset, deriv


def basis_values_and_derivatives(kv: KnotVector, t):
    """One pass returning ``(offset, values, derivatives)``."""
    return _evaluate(kv, t, with_derivative=True)


def greville_abscissae(kv: KnotVector) -> np.ndarray:
    d = kv.degree
    k = kv.knots
    return np.array([k[j + 1 : j + d + 1].mean() for j in range(kv.n_coeffs)])


@dataclass
class SharedBasis:
    """A single learnable spline: fixed knots plus a coefficient vector."""

    kv: KnotVector
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.kv.n_coeffs,):
            raise ValueError(
                f"expected {self.kv.n_coeffs} coefficients, got shape {self.coeffs.shape}"
            )
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("spline coefficients must be finite")

    def __call__(self, t):
        return spline_eval(self, t)


def gather_coeffs(coeffs: np.ndarray, offset: np.ndarray, degree: int) -> np.ndarray:
    """Coefficients aligned with local basis values, shape ``offset.shape + (d+1,)``."""
    return coeffs[offset[..., None] + np.arange(degree + 1)]


def spline_eval(basis: SharedBasis, t):
    offset, values = basis_values(basis.kv, t)
    return np.sum(values * gather_coeffs(basis.coeffs, offset, basis.kv.degree), axis=-1)


def spline_eval_derivative(basis: SharedBasis, t):
    offset, deriv = basis_derivatives(basis.kv, t)
    return np.sum(deriv * gather_coeffs(basis.coeffs, offset, basis.kv.degree), axis=-1)
