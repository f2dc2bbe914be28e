"""Purity-latitude embedding of density matrices, its distance and speed.

A state ``rho`` of dimension ``N`` is mapped onto the unit sphere of
Hermitian matrices by

    F(rho) = (rho + (sqrt(N) sqrt(f(P) - P) - 1) I/N) / sqrt(f(P) - 1/N),
    P = Tr rho^2,

for an alternative function ``f`` with ``f(x) >= x``.  The distance is the
great-circle angle between embeddings and the speed is the matching line
element along a trajectory.

All functions accept a single ``(N, N)`` matrix or a stack ``(K, N, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConstraintViolated, DegenerateGeometry, DimensionMismatch, NegativeRadicand

EPS_DEG = 1e-14        # f(P) - 1/N must exceed this
EPS_SING = 1e-12       # f(P) - P below this counts as "on the frozen latitude"
CONSTRAINT_TOL = 1e-12  # allowed f(P) < P slack from round-off
RADICAND_TOL = 1e-10
TRACE_DOT_TOL = 1e-10
PURITY_CLAMP = 1e-12
LATITUDE_SNAP = 64 * np.finfo(float).eps  # relative f - P treated as exactly zero


@dataclass(frozen=True)
class AlternativeFunction:
    """The scalar function ``f`` with its first two derivatives.

    Use the constructors rather than building instances by hand.  ``value``
    holds the constant for the constant kinds; ``n`` pins the dimension for
    ``purity_plus_inv_n`` (``None`` means "use the state's dimension").
    """

    kind: str
    value: float | None = None
    n: int | None = None
    func: Callable | None = field(default=None, compare=False)
    d1: Callable | None = field(default=None, compare=False)
    d2: Callable | None = field(default=None, compare=False)
    name: str = ""

    @classmethod
    def constant(cls, alpha2: float) -> "AlternativeFunction":
        return cls("constant_alpha2", value=float(alpha2), name=f"const({alpha2:g})")

    @classmethod
    def purity_plus_inv_n(cls, n: int | None = None) -> "AlternativeFunction":
        return cls("purity_plus_inv_n", n=n, name="x+1/N")

    @classmethod
    def frozen_max_purity(cls, value: float) -> "AlternativeFunction":
        return cls("frozen_max_purity", value=float(value), name=f"frozen({value:.6g})")

    @classmethod
    def custom(cls, func, d1, d2=None, name: str = "custom") -> "AlternativeFunction":
        """Arbitrary ``f``; callables must accept numpy arrays."""
        if d2 is None:
            d2 = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
        return cls("custom", func=func, d1=d1, d2=d2, name=name)

    @property
    def is_constant(self) -> bool:
        return self.kind in ("constant_alpha2", "frozen_max_purity")

    def __call__(self, x, n: int | None = None):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.full_like(x, self.value)
        if self.kind == "purity_plus_inv_n":
            dim = self.n if self.n is not None else n
            if dim is None:
                raise ValueError("dimension needed to evaluate x + 1/N")
            return x + 1.0 / dim
        return np.asarray(self.func(x), dtype=float)

    def deriv1(self, x, n: int | None = None):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.zeros_like(x)
        if self.kind == "purity_plus_inv_n":
            return np.ones_like(x)
        return np.asarray(self.d1(x), dtype=float) * np.ones_like(x)

    def deriv2(self, x, n: int | None = None):
        x = np.asarray(x, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.d2(x), dtype=float) * np.ones_like(x)
        return np.zeros_like(x)


@dataclass(frozen=True)
class EmbeddedState:
    matrix: np.ndarray
    source_purity: float
    f_value: float


def _dim(rho) -> int:
    return np.shape(rho)[-1]


def _tr(a, b):
    return np.einsum("...ij,...ji->...", a, b).real


def purity(rho):
    """``Tr rho^2``, clamped into ``[1/N, 1]`` when round-off pushes it just outside."""
    rho = np.asarray(rho)
    n = _dim(rho)
    p = _tr(rho, rho)
    lo, hi = 1.0 / n, 1.0
    p = np.where((p < lo) & (p > lo - PURITY_CLAMP), lo, p)
    p = np.where((p > hi) & (p < hi + PURITY_CLAMP), hi, p)
    return float(p) if np.ndim(p) == 0 else p


def _checked_f(f: AlternativeFunction, p, n: int):
    fv = f(p, n)
    if np.any(fv < p - CONSTRAINT_TOL):
        bad = np.argmax(np.ravel(p - fv))
        raise ConstraintViolated(
            f"alternative function {f.name!r} gives f({np.ravel(p)[bad]:.12g}) = "
            f"{np.ravel(fv)[bad]:.12g} < x"
        )
    if np.any(fv - 1.0 / n <= EPS_DEG):
        raise DegenerateGeometry(
            f"f(Tr rho^2) - 1/N <= {EPS_DEG:g} for {f.name!r}; the embedding is undefined "
            "(maximally mixed state with f(x) = x?)"
        )
    return fv


def _latitude_gap(fv, p):
    # sqrt(f - P) amplifies purity roundoff near the frozen latitude: snap it
    gap = fv - p
    return np.where(gap < LATITUDE_SNAP * np.maximum(1.0, np.abs(fv)), 0.0, gap)


def _embed_array(rho, f: AlternativeFunction):
    rho = np.asarray(rho, dtype=complex)
    n = _dim(rho)
    p = np.asarray(purity(rho))
    fv = _checked_f(f, p, n)
    gap = np.sqrt(_latitude_gap(fv, p))
    shift = (np.sqrt(n) * gap - 1.0) / n
    eye = np.eye(n)
    mat = (rho + shift[..., None, None] * eye) / np.sqrt(fv - 1.0 / n)[..., None, None]
    return mat, p, fv


def embed(rho, f: AlternativeFunction) -> EmbeddedState:
    """Embed one state; the result has unit Hilbert-Schmidt norm."""
    mat, p, fv = _embed_array(rho, f)
    return EmbeddedState(mat, float(p), float(fv))


def embed_many(rhos, f: AlternativeFunction) -> np.ndarray:
    return _embed_array(rhos, f)[0]


def latitude(rho, f: AlternativeFunction):
    """``<I/N, F(rho)>``; depends on ``rho`` only through its purity."""
    mat = _embed_array(rho, f)[0]
    return np.trace(mat, axis1=-2, axis2=-1).real / _dim(rho)


def latitude_closed_form(p, f: AlternativeFunction, n: int):
    fv = f(p, n)
    return np.sqrt(_latitude_gap(fv, p)) / (np.sqrt(n) * np.sqrt(fv - 1.0 / n))


def angle(a, b):
    """Angle between unit-norm Hermitian matrices, ``arccos <A, B>`` in ``[0, pi]``.

    Evaluated as ``2 atan2(|A - B|, |A + B|)`` which stays accurate near 0 and pi.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    dm = np.linalg.norm(a - b, axis=(-2, -1))
    dp = np.linalg.norm(a + b, axis=(-2, -1))
    out = 2.0 * np.arctan2(dm, dp)
    return float(out) if np.ndim(out) == 0 else out


def distance(rho, sigma, f: AlternativeFunction):
    """Geodesic distance between two states (radians).

    ``f`` is evaluated at each state's own purity, so the constant kinds use one
    shared value while ``purity_plus_inv_n`` is state-local.
    """
    if np.shape(rho)[-1] != np.shape(sigma)[-1]:
        raise DimensionMismatch("states have different dimensions")
    return angle(_embed_array(rho, f)[0], _embed_array(sigma, f)[0])


def inner_embedded(rho, sigma, f: AlternativeFunction):
    return _tr(_embed_array(rho, f)[0], _embed_array(sigma, f)[0])


def speed_from_traces(p, tdot2, x, n: int, f: AlternativeFunction, interior: bool = False):
    """Line element ``ds/dt`` from the scalar invariants of ``(rho, rho_dot)``.

    Args:
        p: ``Tr rho^2``.
        tdot2: ``Tr rho_dot^2``.
        x: ``Tr rho rho_dot`` (half the purity rate).
        interior: the sample is strictly inside a trajectory.  There a vanishing
            ``f - P`` can only come from a purity maximum, where ``x -> 0`` and the
            ``(f'-1)^2 x^2 / (f - P)`` term is a bounded 0/0; it is dropped
            instead of being flagged as singular.

    The ``x^2`` coefficient is ``(f'-1)^2/(f-P) - f'^2/(f-1/N)``, the exact
    pull-back of the sphere metric under the embedding.  The form
    ``f'(2-3f')/(f-1/N)`` sometimes quoted for the second part coincides with it
    only for ``f'`` in ``{0, 1}``; see :func:`legacy_coefficient`.

    Returns ``inf`` where the frozen-latitude term diverges (an integrable
    endpoint singularity).
    """
    p = np.asarray(p, dtype=float)
    tdot2 = np.asarray(tdot2, dtype=float)
    x = np.asarray(x, dtype=float)
    fv = _checked_f(f, p, n)
    f1 = f.deriv1(p, n)
    denom = fv - 1.0 / n
    gap = fv - p
    w = (f1 - 1.0) ** 2
    on_latitude = gap < EPS_SING
    singular = on_latitude & (w > 0) & (np.abs(x) >= np.sqrt(EPS_SING))
    if interior:
        singular = np.zeros_like(singular)
    with np.errstate(divide="ignore", invalid="ignore"):
        frozen = np.where(on_latitude | (w == 0), 0.0, w / np.where(on_latitude, 1.0, gap))
    # pull-back of the sphere metric: |dF|^2 = [Tr drho^2 + ((f'-1)^2/(f-P) - f'^2/(f-1/N)) x^2] / (f-1/N)
    coef = -f1 * f1 / denom + frozen
    bracket = tdot2 + coef * x * x
    scale = np.maximum(1.0, tdot2 + np.abs(coef) * x * x)
    bad = (bracket < -RADICAND_TOL * scale) & ~singular
    if np.any(bad):
        raise NegativeRadicand(
            f"speed radicand {np.min(np.where(bad, bracket, 0.0)):.3g} < 0 for {f.name!r}"
        )
    v = np.sqrt(np.maximum(bracket, 0.0) / denom)
    v = np.where(singular, np.inf, v)
    return float(v) if np.ndim(v) == 0 else v


def legacy_coefficient(f1, f, p, n):
    """The ``f'(2-3f')/(f-1/N) + (f'-1)^2/(f-P)`` coefficient, kept for comparison."""
    return f1 * (2.0 - 3.0 * f1) / (f - 1.0 / n) + (f1 - 1.0) ** 2 / (f - p)


def speed(rho, rho_dot, f: AlternativeFunction, interior: bool = False):
    """Instantaneous speed of a trajectory through ``rho`` with velocity ``rho_dot``."""
    rho = np.asarray(rho)
    rho_dot = np.asarray(rho_dot)
    if rho.shape != rho_dot.shape:
        raise DimensionMismatch(f"shape mismatch {rho.shape} vs {rho_dot.shape}")
    n = _dim(rho)
    trd = np.trace(rho_dot, axis1=-2, axis2=-1)
    scale = np.maximum(1.0, np.linalg.norm(rho_dot, axis=(-2, -1)))
    if np.any(np.abs(trd) > TRACE_DOT_TOL * scale):
        raise ValueError("rho_dot is not traceless; dynamics must preserve trace")
    return speed_from_traces(purity(rho), _tr(rho_dot, rho_dot), _tr(rho, rho_dot), n, f, interior)
