"""Quantum speed limit times for a trajectory.

Every bound has the shape ``tau * D(rho_0, rho_tau) / integral(ds/dt)``.  The
general evaluator takes any :class:`AlternativeFunction`; the specialised
evaluators implement the closed forms for particular choices of ``f`` with
their own integrands, so they can be checked against the general one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from . import metric
from .dynamics import Trajectory
from .errors import ConstraintViolated, DegenerateGeometry, NonConvergence, NumericalError
from .metric import AlternativeFunction

log = logging.getLogger(__name__)

LABELS = ("F1", "F2", "F3")
TIE_TOL = 1e-12
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class QuadratureConfig:
    """How the speed integral is evaluated.

    ``gauss`` (default) is composite Gauss-Legendre with panel doubling; if an
    endpoint is singular the time axis is remapped by ``t ~ u^2`` there so the
    ``t^{-1/2}`` blow-up becomes a smooth integrand.  ``midpoint`` and
    ``trapezoid`` are plain dyadic composite rules in ``t``; ``trapezoid`` falls
    back to ``midpoint`` when an endpoint is singular.

    Sampled trajectories (no evaluator) are integrated on their own grid:
    trapezoid in ``t``, or trapezoid in ``u = sqrt|t - t_end|`` on a half with
    a singular end.  ``midpoint`` forces the open midpoint rule there.
    """

    rule: str = "gauss"
    rel_tol: float = 1e-6
    max_levels: int = 8
    order: int = 16
    refinement_factor: int = 2

    def __post_init__(self):
        if self.rule not in ("gauss", "midpoint", "trapezoid"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.refinement_factor != 2:
            raise ValueError("only dyadic refinement is supported")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    evaluations: int
    levels: int
    singular_left: bool
    singular_right: bool
    converged: bool
    error_estimate: float

    @property
    def singular(self) -> bool:
        return self.singular_left or self.singular_right


# -- integrands -------------------------------------------------------------------
#
# An integrand maps (states, derivs, interior) -> speed values.

def _invariants(states, derivs):
    p = np.asarray(metric.purity(states), dtype=float)
    tdot2 = np.einsum("...ij,...ji->...", derivs, derivs).real
    x = np.einsum("...ij,...ji->...", states, derivs).real
    return p, tdot2, x


def _general_integrand(f: AlternativeFunction):
    def g(states, derivs, interior):
        p, tdot2, x = _invariants(states, derivs)
        return np.atleast_1d(metric.speed_from_traces(p, tdot2, x, states.shape[-1], f, interior))
    return g


def _frozen_term(x, gap, interior):
    """``x^2 / gap`` with the frozen-latitude conventions of :func:`metric.speed_from_traces`."""
    if np.any(gap < -metric.CONSTRAINT_TOL):
        raise ConstraintViolated(
            f"purity exceeds the frozen value by {-np.min(gap):.3g}; constant f must bound Tr rho^2"
        )
    on_lat = gap < metric.EPS_SING
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(on_lat, 0.0, x * x / np.where(on_lat, 1.0, gap))
    if not interior:
        term = np.where(on_lat & (np.abs(x) >= math.sqrt(metric.EPS_SING)), np.inf, term)
    return term


def _f1_integrand(states, derivs, interior):
    _, tdot2, _ = _invariants(states, derivs)
    return np.sqrt(np.maximum(tdot2, 0.0))


def _f2_integrand(states, derivs, interior):
    p, tdot2, x = _invariants(states, derivs)
    return np.sqrt(np.maximum(tdot2 * p - x * x, 0.0)) / p


def _f3_integrand(max_purity: float):
    def g(states, derivs, interior):
        p, tdot2, x = _invariants(states, derivs)
        n = states.shape[-1]
        return np.sqrt((tdot2 + _frozen_term(x, max_purity - p, interior)) / (max_purity - 1.0 / n))
    return g


def _const_alpha_integrand(alpha2: float):
    def g(states, derivs, interior):
        p, tdot2, x = _invariants(states, derivs)
        return np.sqrt(tdot2 + _frozen_term(x, alpha2 - p, interior))
    return g


def _uni_p0_integrand(p0: float):
    def g(states, derivs, interior):
        _, tdot2, _ = _invariants(states, derivs)
        return np.sqrt(np.maximum(tdot2, 0.0) / (p0 - 1.0 / states.shape[-1]))
    return g


# -- quadrature ---------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _time_map(sl: bool, sr: bool):
    """Map ``u in [0, 1]`` to ``s in [0, 1]`` with ``ds/du`` vanishing at singular ends."""
    if sl and sr:
        return lambda u: u * u * (3.0 - 2.0 * u), lambda u: 6.0 * u * (1.0 - u)
    if sl:
        return lambda u: u * u, lambda u: 2.0 * u
    if sr:
        return lambda u: 1.0 - (1.0 - u) ** 2, lambda u: 2.0 * (1.0 - u)
    return lambda u: u, lambda u: np.ones_like(u)


def _nodes(cfg: QuadratureConfig, rule: str, level: int):
    """Nodes and weights on ``[0, 1]`` for refinement ``level``."""
    if rule == "gauss":
        panels = 2 ** level
        x, w = _gauss(cfg.order)
        left = np.arange(panels)[:, None] / panels
        return (left + x[None, :] / panels).ravel(), np.tile(w / panels, panels)
    k = cfg.order * 2 ** level
    if rule == "midpoint":
        return (np.arange(k) + 0.5) / k, np.full(k, 1.0 / k)
    u = np.arange(k + 1) / k
    w = np.full(k + 1, 1.0 / k)
    w[0] = w[-1] = 0.5 / k
    return u, w


def _integrate_analytic(traj: Trajectory, g, cfg: QuadratureConfig) -> QuadratureResult:
    t0, t1 = float(traj.times[0]), float(traj.times[-1])
    tau = t1 - t0
    ends = g(*traj.at(np.array([t0, t1])), False)
    sl, sr = bool(np.isinf(ends[0])), bool(np.isinf(ends[1]))
    rule = cfg.rule
    if rule == "trapezoid" and (sl or sr):
        rule = "midpoint"
    if rule == "gauss":
        smap, jac = _time_map(sl, sr)
    else:
        smap, jac = _time_map(False, False)

    prev = None
    evaluations = 0
    history = []
    for level in range(cfg.max_levels + 1):
        u, w = _nodes(cfg, rule, level)
        s = smap(u)
        t = t0 + tau * s
        vals = np.empty_like(t)
        inner = (t > t0) & (t < t1)
        if np.any(inner):
            vals[inner] = g(*traj.at(t[inner]), True)
        if np.any(~inner):
            # trapezoid touches the ends; they are finite here
            vals[~inner] = np.where(t[~inner] == t0, ends[0], ends[1])
        evaluations += len(t)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("speed is not finite at an interior quadrature node")
        est = float(tau * np.sum(w * jac(u) * vals))
        history.append(est)
        if prev is not None:
            err = abs(est - prev)
            if err <= cfg.rel_tol * abs(est) or err == 0.0:
                return QuadratureResult(est, evaluations, level, sl, sr, True, err)
        prev = est
    raise NonConvergence(
        f"speed integral did not converge after {cfg.max_levels} refinements "
        f"(last estimates {history[-2]:.12g}, {history[-1]:.12g})",
        history[-2:],
    )


def _strided(t, vals, stride):
    tt, vv = t[::stride], vals[::stride]
    if tt[-1] != t[-1]:
        tt, vv = np.append(tt, t[-1]), np.append(vv, vals[-1])
    return tt, vv


def _sqrt_half(tt, vv, singular: bool) -> float:
    """Integral over ``tt`` (outer end first); ``abs`` makes the orientation irrelevant."""
    if not singular:
        return float(abs(np.sum(0.5 * (vv[1:] + vv[:-1]) * np.diff(tt))))
    u = np.sqrt(np.abs(tt - tt[0]))
    w = np.empty_like(u)
    w[1:] = 2.0 * u[1:] * vv[1:]
    # w = 2 u v(u^2) is smooth; its endpoint value is the limit, extrapolated linearly
    w[0] = w[1] - (w[2] - w[1]) * u[1] / (u[2] - u[1]) if len(w) > 2 else w[1]
    return float(np.sum(0.5 * (w[1:] + w[:-1]) * np.diff(u)))


def _open_mid_rule(t, vals):
    def open_mid(stride):
        # panels [t_{2k}, t_{2k+2}] sampled at the centre node only
        idx = np.arange(0, len(t), stride)
        if idx[-1] != len(t) - 1:
            idx = np.append(idx, len(t) - 1)
        tt = t[idx]
        total = 0.0
        k = 0
        while k + 2 < len(idx):
            total += (tt[k + 2] - tt[k]) * vals[idx[k + 1]]
            k += 2
        if k + 1 < len(idx):
            a, b = idx[k], idx[k + 1]
            fin = [v for v in (vals[a], vals[b]) if np.isfinite(v)]
            total += (t[b] - t[a]) * (sum(fin) / len(fin))
        return total
    return open_mid


def _integrate_grid(traj: Trajectory, g, cfg: QuadratureConfig) -> QuadratureResult:
    t = traj.times
    vals = np.empty(len(t))
    vals[[0, -1]] = g(traj.states[[0, -1]], traj.derivs[[0, -1]], False)
    vals[1:-1] = g(traj.states[1:-1], traj.derivs[1:-1], True)
    sl, sr = bool(np.isinf(vals[0])), bool(np.isinf(vals[-1]))
    if not np.all(np.isfinite(vals[1:-1])):
        raise NumericalError("speed is not finite at an interior grid point")

    def trap(stride):
        tt, vv = _strided(t, vals, stride)
        return float(np.sum(0.5 * (vv[1:] + vv[:-1]) * np.diff(tt)))

    def sqrt_map(stride):
        # trapezoid in u = sqrt|t - t_end| on each half with a singular outer end
        tt, vv = _strided(t, vals, stride)
        m = len(tt) // 2
        return _sqrt_half(tt[: m + 1], vv[: m + 1], sl) + _sqrt_half(tt[m:][::-1], vv[m:][::-1], sr)

    if cfg.rule == "midpoint":
        rule = _open_mid_rule(t, vals)
    elif sl or sr:
        rule = sqrt_map
    else:
        rule = trap
    est = rule(1)
    err = abs(est - rule(2)) if len(t) >= 5 else float("nan")
    converged = bool(err <= cfg.rel_tol * abs(est)) if np.isfinite(err) else False
    if not converged:
        log.warning("grid quadrature error estimate %.3g exceeds tolerance (M=%d)", err, traj.grid_size)
    return QuadratureResult(est, len(t), 0, sl, sr, converged, err)


def integrate(traj: Trajectory, integrand: Callable, cfg: QuadratureConfig | None = None) -> QuadratureResult:
    """Integrate an ``(states, derivs, interior) -> speed`` callable over the trajectory."""
    cfg = cfg or QuadratureConfig()
    if traj.has_evaluator:
        return _integrate_analytic(traj, integrand, cfg)
    return _integrate_grid(traj, integrand, cfg)


def integrate_speed(traj: Trajectory, f: AlternativeFunction, cfg: QuadratureConfig | None = None) -> float:
    """Path length ``int_0^tau ds`` under the metric induced by ``f``."""
    return integrate(traj, _general_integrand(f), cfg).value


# -- helpers -------------------------------------------------------------------------

def max_purity(traj: Trajectory) -> tuple[float, float]:
    """Largest ``Tr rho_t^2`` on ``[0, tau]`` and where it occurs.

    Starts from the grid maximum; with an evaluator the neighbouring cells
    are searched with a bounded scalar minimiser.
    """
    p = np.asarray(metric.purity(traj.states))
    k = int(np.argmax(p))
    best, t_best = float(p[k]), float(traj.times[k])
    if traj.has_evaluator:
        lo = traj.times[max(k - 1, 0)]
        hi = traj.times[min(k + 1, len(traj.times) - 1)]

        def neg(t):
            return -float(metric.purity(traj.at(t)[0][0]))

        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
        if -res.fun > best:
            best, t_best = -res.fun, float(res.x)
    return min(best, 1.0), t_best


def _arccos(c):
    return math.acos(min(1.0, max(-1.0, c)))


def _ratio(traj: Trajectory, numerator: float, q: QuadratureResult) -> float:
    if q.value <= ZERO_TOL * max(1.0, traj.tau):
        if numerator <= ZERO_TOL:
            return 0.0
        raise NumericalError(
            f"endpoints differ (distance {numerator:.3g}) but the speed integral vanishes"
        )
    return traj.tau * numerator / q.value


def _tr(a, b) -> float:
    return float(np.einsum("ij,ji->", a, b).real)


# -- bounds ----------------------------------------------------------------------------

def tau_general(traj: Trajectory, f: AlternativeFunction, cfg: QuadratureConfig | None = None) -> float:
    num = metric.distance(traj.initial, traj.final, f)
    return _ratio(traj, num, integrate(traj, _general_integrand(f), cfg))


def _f1(traj, cfg):
    diff = traj.initial - traj.final
    num = math.sqrt(max(_tr(diff, diff), 0.0))
    q = integrate(traj, _f1_integrand, cfg)
    return _ratio(traj, num, q), num, q


def tau_f1(traj: Trajectory, cfg: QuadratureConfig | None = None) -> float:
    """Euclidean (Hilbert-Schmidt) bound, the ``alpha^2 -> infinity`` limit."""
    return _f1(traj, cfg)[0]


def _f2(traj, cfg):
    r0, rt = traj.initial, traj.final
    num = _arccos(_tr(r0, rt) / math.sqrt(_tr(r0, r0) * _tr(rt, rt)))
    q = integrate(traj, _f2_integrand, cfg)
    return _ratio(traj, num, q), num, q


def tau_f2(traj: Trajectory, cfg: QuadratureConfig | None = None) -> float:
    """Bound for ``f(x) = x + 1/N``: the angle between ``rho_0`` and ``rho_tau``."""
    return _f2(traj, cfg)[0]


def _frozen_numerator(r0, rt, c: float, n: int) -> float:
    # arccos[(Tr r0 rt - 1/N + sqrt(c - P0) sqrt(c - Pt)) / (c - 1/N)], via the
    # embedding angle, which is better conditioned near the frozen latitude
    return metric.distance(r0, rt, AlternativeFunction.frozen_max_purity(c))


def _f3(traj, cfg):
    pmax, _ = max_purity(traj)
    n = traj.dim
    if pmax - 1.0 / n <= metric.EPS_DEG:
        raise DegenerateGeometry("trajectory stays at the maximally mixed state")
    num = _frozen_numerator(traj.initial, traj.final, pmax, n)
    q = integrate(traj, _f3_integrand(pmax), cfg)
    return _ratio(traj, num, q), num, q, pmax


def tau_f3(traj: Trajectory, cfg: QuadratureConfig | None = None) -> float:
    """Bound with ``f`` frozen at the largest purity reached along the trajectory."""
    return _f3(traj, cfg)[0]


def tau_const_alpha(traj: Trajectory, alpha2: float, cfg: QuadratureConfig | None = None) -> float:
    """Bound for constant ``f = alpha^2`` (requires ``alpha^2 >= max purity``)."""
    pmax, _ = max_purity(traj)
    if alpha2 < pmax - metric.CONSTRAINT_TOL:
        raise ConstraintViolated(f"alpha^2 = {alpha2:.12g} is below the maximum purity {pmax:.12g}")
    n = traj.dim
    c = alpha2 - 1.0 / n
    num = math.sqrt(c) * _frozen_numerator(traj.initial, traj.final, alpha2, n)
    return _ratio(traj, num, integrate(traj, _const_alpha_integrand(alpha2), cfg))


def tau_uni_p0(traj: Trajectory, cfg: QuadratureConfig | None = None) -> float:
    """Unitary-orbit bound with ``f`` fixed at the initial purity."""
    r0, rt = traj.initial, traj.final
    n = traj.dim
    p0 = _tr(r0, r0)
    if p0 - 1.0 / n < 1e-12:
        raise DegenerateGeometry("initial state is maximally mixed")
    num = _arccos((_tr(r0, rt) - 1.0 / n) / (p0 - 1.0 / n))
    return _ratio(traj, num, integrate(traj, _uni_p0_integrand(p0), cfg))


def argmax_label(t1: float, t2: float, t3: float) -> str:
    """Index of the largest bound; near-ties resolve to F3, then F2."""
    top = max(t1, t2, t3)
    if t3 >= top - TIE_TOL:
        return "F3"
    if t2 >= top - TIE_TOL:
        return "F2"
    return "F1"


def tau_combined(traj: Trajectory, cfg: QuadratureConfig | None = None) -> tuple[float, str]:
    t1, t2, t3 = tau_f1(traj, cfg), tau_f2(traj, cfg), tau_f3(traj, cfg)
    return max(t1, t2, t3), argmax_label(t1, t2, t3)


# -- report ------------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """All bounds for one trajectory.

    ``distance`` and ``meanSpeed`` refer to the frozen-max-purity bound ``tauF3``.
    ``tauUniP0`` is NaN when the initial state is maximally mixed, and the
    ``alpha2``/``tauConstAlpha`` pair is NaN unless requested.
    """

    tauActual: float
    distance: float
    meanSpeed: float
    tauF1: float
    tauF2: float
    tauF3: float
    tauUniP0: float
    tauCombined: float
    alpha2: float
    tauConstAlpha: float
    argmaxLabel: str
    maxPurity: float
    quadratureResolution: int
    singularEndpointFlag: bool
    zeroMotionFlag: bool

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> list[str]:
        return [format_value(v) for v in asdict(self).values()]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def evaluate_bounds(
    traj: Trajectory, cfg: QuadratureConfig | None = None, alpha2: float | None = None
) -> BoundReport:
    """Evaluate every bound on one trajectory."""
    cfg = cfg or QuadratureConfig()
    t1, _, q1 = _f1(traj, cfg)
    t2, _, q2 = _f2(traj, cfg)
    t3, num3, q3, pmax = _f3(traj, cfg)
    try:
        tu = tau_uni_p0(traj, cfg)
    except DegenerateGeometry:
        tu = float("nan")
    tc = tau_const_alpha(traj, alpha2, cfg) if alpha2 is not None else float("nan")
    return BoundReport(
        tauActual=traj.tau,
        distance=num3,
        meanSpeed=q3.value / traj.tau,
        tauF1=t1,
        tauF2=t2,
        tauF3=t3,
        tauUniP0=tu,
        tauCombined=max(t1, t2, t3),
        alpha2=float(alpha2) if alpha2 is not None else float("nan"),
        tauConstAlpha=tc,
        argmaxLabel=argmax_label(t1, t2, t3),
        maxPurity=float(pmax),
        quadratureResolution=int(q3.evaluations),
        singularEndpointFlag=bool(q1.singular or q2.singular or q3.singular),
        zeroMotionFlag=bool(q3.value <= ZERO_TOL * max(1.0, traj.tau)),
    )
