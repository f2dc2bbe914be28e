"""Trajectories and the dynamics that generate them.

Generators return a :class:`Trajectory` sampled on a uniform grid together
with an exact evaluator, so downstream quadrature can ask for states at any
time.  Externally supplied samples go through :func:`from_samples`, which
differentiates numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from . import linalg
from .errors import InvalidState, ParseError, PSDViolation

ANALYTIC = "analytic"
FINITE_DIFFERENCE = "finite_difference"
DEFAULT_GRID = 512
TRACELESS_TOL = 1e-10
MONOTONE_SAMPLES = 1000

Evaluator = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``rho_t`` and velocities ``rho_dot_t`` on a strictly increasing grid.

    ``evaluator`` maps an array of times to ``(states, derivs)`` stacks and is
    present for analytically generated dynamics only.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    provenance: str = ANALYTIC
    evaluator: Evaluator | None = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("trajectory needs at least two grid points")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be strictly increasing")
        if self.states.shape != self.derivs.shape or self.states.shape[0] != len(t):
            raise ValueError("states/derivs/grid lengths disagree")
        tr = np.trace(self.derivs, axis1=-2, axis2=-1)
        if np.any(np.abs(tr) > TRACELESS_TOL * np.maximum(1.0, np.linalg.norm(self.derivs, axis=(-2, -1)))):
            raise InvalidState("trajectory derivatives are not traceless")

    @property
    def tau(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def dim(self) -> int:
        return self.states.shape[-1]

    @property
    def grid_size(self) -> int:
        """``M``: number of grid intervals."""
        return len(self.times) - 1

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def has_evaluator(self) -> bool:
        return self.evaluator is not None

    def at(self, t):
        """Exact ``(states, derivs)`` at arbitrary times (analytic trajectories only)."""
        if self.evaluator is None:
            raise ValueError("trajectory has no evaluator; only grid samples are available")
        return self.evaluator(np.atleast_1d(np.asarray(t, dtype=float)))

    def resample(self, m: int) -> "Trajectory":
        """Same dynamics on a uniform grid with ``m`` intervals."""
        times = np.linspace(self.times[0], self.times[-1], m + 1)
        states, derivs = self.at(times)
        return Trajectory(times, states, derivs, self.provenance, self.evaluator, self.label)


def _grid(tau: float, m: int) -> np.ndarray:
    if tau <= 0:
        raise ValueError("tau must be positive")
    if m < 2:
        raise ValueError("grid needs at least 2 intervals")
    return np.linspace(0.0, tau, m + 1)


def _build(evaluator: Evaluator, tau: float, m: int, label: str) -> Trajectory:
    times = _grid(tau, m)
    states, derivs = evaluator(times)
    linalg.as_density(states, trace_tol=1e-10)
    return Trajectory(times, states, derivs, ANALYTIC, evaluator, label)


# -- schedules -----------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Scalar control ``s(t)`` on ``[0, tau]`` with its derivative.

    Works on numpy arrays.  Instances are checked to be monotone on
    construction through the named constructors.
    """

    kind: str
    eval: Callable = field(repr=False)
    deriv: Callable = field(repr=False)
    tau: float = 1.0

    def __call__(self, t):
        return self.eval(np.asarray(t, dtype=float))

    @classmethod
    def linear(cls, tau: float, start: float = 1.0, end: float = 0.0) -> "Schedule":
        slope = (end - start) / tau
        return cls("linear", lambda t: start + slope * t, lambda t: np.full_like(t, slope), tau)

    @classmethod
    def cosine(cls, tau: float, start: float = 1.0, end: float = 0.0) -> "Schedule":
        """Smooth ramp with zero slope at both ends."""
        amp = end - start
        w = np.pi / tau
        return cls(
            "cosine",
            lambda t: start + 0.5 * amp * (1.0 - np.cos(w * t)),
            lambda t: 0.5 * amp * w * np.sin(w * t),
            tau,
        )

    @classmethod
    def custom(cls, func, deriv, tau: float) -> "Schedule":
        s = cls("custom", func, deriv, tau)
        s.direction()
        return s

    def direction(self) -> int:
        """+1 non-decreasing, -1 non-increasing, 0 constant; raises if neither."""
        v = self(np.linspace(0.0, self.tau, MONOTONE_SAMPLES))
        d = np.diff(v)
        tol = 1e-14 * max(1.0, float(np.max(np.abs(v))))
        if np.all(np.abs(d) <= tol):
            return 0
        if np.all(d >= -tol):
            return 1
        if np.all(d <= tol):
            return -1
        raise ValueError(f"{self.kind} schedule is not monotone on [0, {self.tau}]")


# -- generators ------------------------------------------------------------------

def _line_evaluator(rho0: np.ndarray, beta: Schedule) -> Evaluator:
    n = rho0.shape[0]
    direction = rho0 - np.eye(n) / n

    def ev(t):
        b = beta(t)
        db = beta.deriv(np.asarray(t, dtype=float)) * np.ones_like(b)
        return rho0 + b[:, None, None] * direction, db[:, None, None] * direction

    return ev


def _check_line_psd(rho0: np.ndarray, beta: Schedule, times: np.ndarray) -> None:
    # eigenvalues of rho0 + b (rho0 - I/N) are lam + b (lam - 1/N)
    n = rho0.shape[0]
    lam = np.linalg.eigvalsh(rho0)
    b = beta(times)
    mins = np.min(lam[None, :] + b[:, None] * (lam[None, :] - 1.0 / n), axis=1)
    bad = np.nonzero(mins < -linalg.PSD_TOL)[0]
    if len(bad):
        k = bad[0]
        raise PSDViolation(
            f"state leaves the positive cone at t = {times[k]:.12g} "
            f"(min eigenvalue {mins[k]:.3g})",
            time=float(times[k]),
        )


def geodesic(rho0, beta: Schedule, tau: float, m: int = DEFAULT_GRID) -> Trajectory:
    """Straight path ``rho_t = rho0 + beta_t (rho0 - I/N)`` with ``beta_0 = 0``.

    ``beta`` decreasing moves towards (and through) the maximally mixed state.
    """
    rho0 = linalg.as_density(rho0)
    if abs(float(beta(0.0))) > 1e-15:
        raise ValueError("geodesic schedule must start at beta(0) = 0")
    beta.direction()
    times = _grid(tau, m)
    _check_line_psd(rho0, beta, times)
    ev = _line_evaluator(rho0, beta)
    states, derivs = ev(times)
    return Trajectory(times, states, derivs, ANALYTIC, ev, "geodesic")


def depolarize(rho0, p: Schedule, tau: float, m: int = DEFAULT_GRID) -> Trajectory:
    """Pure depolarizing dynamics ``rho_t = p_t rho0 + (1 - p_t) I/N``.

    ``p`` must stay in ``[0, 1]`` and be non-increasing; the trajectory starts
    at ``p(0) rho0 + (1 - p(0)) I/N``.
    """
    rho0 = linalg.as_density(rho0)
    times = _grid(tau, m)
    dense = np.linspace(0.0, tau, MONOTONE_SAMPLES)
    pv = p(dense)
    if np.any(pv < -1e-15) or np.any(pv > 1 + 1e-15):
        raise ValueError("depolarizing schedule must stay within [0, 1]")
    if p.direction() > 0:
        raise ValueError("depolarizing schedule must be non-increasing")
    beta = Schedule("shifted", lambda t: p(t) - 1.0, p.deriv, tau)
    ev = _line_evaluator(rho0, beta)
    states, derivs = ev(times)
    return Trajectory(times, states, derivs, ANALYTIC, ev, "depolarize")


def qubit_mixture_unitary(lam: float, phi: float, tau: float, m: int = DEFAULT_GRID) -> Trajectory:
    """Qubit ``lam|0><0| + (1-lam)|1><1|`` under ``H = e^{i phi}|0><1| + h.c.``.

    ``H^2 = I`` so ``U_t = cos t I - i sin t H``; the Bloch vector sweeps a
    great circle at angular speed 2.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if abs(lam - 0.5) < 1e-12:
        raise ValueError("lambda = 1/2 gives the maximally mixed state, which does not move")
    rho0 = np.diag([lam, 1.0 - lam]).astype(complex)
    h = np.array([[0.0, np.exp(1j * phi)], [np.exp(-1j * phi), 0.0]])

    def ev(t):
        c = np.cos(t)[:, None, None]
        s = np.sin(t)[:, None, None]
        u = c * np.eye(2) - 1j * s * h
        rho = u @ rho0 @ np.conj(np.swapaxes(u, -1, -2))
        return rho, -1j * (h @ rho - rho @ h)

    return _build(ev, tau, m, "qubit_mixture_unitary")


def composite_unitary(rho_s, rho_e, h, tau: float, m: int = DEFAULT_GRID) -> Trajectory:
    """Reduced dynamics of ``S`` when ``rho_s (x) rho_e`` evolves under ``exp(-iHt)``."""
    rho_s = linalg.as_density(rho_s)
    rho_e = linalg.as_density(rho_e)
    ds, de = rho_s.shape[0], rho_e.shape[0]
    h = linalg.as_hermitian(h, tol=1e-10)
    if h.shape[0] != ds * de:
        raise ValueError(f"Hamiltonian dimension {h.shape[0]} != {ds}*{de}")
    rho = linalg.kron(rho_s, rho_e)
    if linalg.is_diagonal(h):
        lam, v = np.real(np.diag(h)), None
        rt = rho
    else:
        lam, v = linalg.herm_eig(h)
        rt = v.conj().T @ rho @ v
    gaps = lam[:, None] - lam[None, :]

    def ev(t):
        r = rt[None] * np.exp(-1j * gaps[None] * t[:, None, None])
        dr = -1j * gaps[None] * r
        if v is not None:
            r = v @ r @ v.conj().T
            dr = v @ dr @ v.conj().T
        return linalg.partial_trace(r, ds, de, "S"), linalg.partial_trace(dr, ds, de, "S")

    return _build(ev, tau, m, "composite_unitary")


def from_samples(times: Sequence[float], states) -> Trajectory:
    """Trajectory from raw samples; derivatives by second-order finite differences."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=complex)
    if times.ndim != 1 or len(times) < 3:
        raise ValueError(f"need at least 3 samples, got {times.size}")
    if states.shape[0] != len(times):
        raise ValueError(f"{len(times)} times but {states.shape[0]} states")
    bad = np.nonzero(np.diff(times) <= 0)[0]
    if len(bad):
        raise ValueError(f"times not strictly increasing at index {bad[0] + 1}")
    for k, rho in enumerate(states):
        try:
            linalg.as_density(rho)
        except InvalidState as exc:
            raise InvalidState(f"sample {k} (t = {times[k]:.12g}): {exc}") from None
    n = states.shape[-1]
    d = np.gradient(states, times, axis=0, edge_order=2)
    d = 0.5 * (d + np.conj(np.swapaxes(d, -1, -2)))
    d = d - (np.trace(d, axis1=-2, axis2=-1).real / n)[:, None, None] * np.eye(n)
    return Trajectory(times, states, d, FINITE_DIFFERENCE, None, "samples")


# -- text format -------------------------------------------------------------------
#
#   M N tau
#   t_0
#   <matrix block>
#   ...                 (M + 1 blocks)

def write_trajectory(traj: Trajectory, fh: TextIO) -> None:
    fh.write(f"{traj.grid_size} {traj.dim} {traj.tau:.17g}\n")
    for t, rho in zip(traj.times, traj.states):
        fh.write(f"{t:.17g}\n")
        linalg.write_matrix(rho, fh)


def read_trajectory(fh_or_text) -> Trajectory:
    lines = linalg._numbered(fh_or_text)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise ParseError("empty trajectory file", 1) from None
    parts = head.split()
    try:
        if len(parts) != 3:
            raise ValueError
        m, n, tau = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise ParseError(f"header must be 'M N tau', got {head.strip()!r}", lineno) from None
    if m < 2 or n < 1 or not tau > 0:
        raise ParseError(f"invalid header values M={m} N={n} tau={tau}", lineno)
    times, states = [], []
    for k in range(m + 1):
        try:
            lineno, tline = next(lines)
        except StopIteration:
            raise ParseError(f"expected {m + 1} samples, found {k}") from None
        try:
            times.append(float(tline))
        except ValueError:
            raise ParseError(f"expected time value, got {tline.strip()!r}", lineno) from None
        rho = linalg._read_matrix_lines(lines, role="state")
        if rho.shape[0] != n:
            raise ParseError(f"sample {k} has dimension {rho.shape[0]}, header says {n}", lineno)
        states.append(rho)
    try:
        lineno, extra = next(lines)
        raise ParseError("unexpected trailing data", lineno)
    except StopIteration:
        pass
    traj = from_samples(times, states)
    if abs(traj.tau - tau) > 1e-12 * max(1.0, tau):
        raise ParseError(f"header tau {tau} disagrees with sample span {traj.tau}", 1)
    return traj
