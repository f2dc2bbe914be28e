"""Randomised experiments and self-verification suites."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from . import bounds, dynamics, linalg, metric
from .bounds import BoundReport, QuadratureConfig
from .errors import QSLError
from .metric import AlternativeFunction

# stream id reserved for the shared environment state of --fixed-environment
FIXED_ENV_STREAM = 2**63 - 1
GENERIC_CONTROL_SEED = 0


class TrialFailed(QSLError):
    def __init__(self, message, cause: Exception):
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(message)


@dataclass(frozen=True)
class ExperimentConfig:
    samples: int = 1000
    seed: int = 0
    tau: float = 1.0
    grid_m: int = dynamics.DEFAULT_GRID
    hamiltonian_scale: float = 2 * math.pi
    output_path: str | None = None
    format: str = "csv"
    fixed_environment: bool = False
    state_rank: int | None = None
    workers: int = 1
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.state_rank is not None and not 1 <= self.state_rank:
            raise ValueError("state_rank must be >= 1")
        if self.format not in ("csv", "json"):
            raise ValueError(f"unknown format {self.format!r}")


@dataclass(frozen=True)
class ExperimentRecord:
    trialIndex: int
    streamId: int
    initialPurity: float
    finalPurity: float
    maxPurity: float
    report: BoundReport

    def flat(self) -> dict:
        row = {
            "trialIndex": self.trialIndex,
            "streamId": self.streamId,
            "initialPurity": self.initialPurity,
            "finalPurity": self.finalPurity,
        }
        row.update(self.report.to_dict())
        return row


RECORD_COLUMNS = ["trialIndex", "streamId", "initialPurity", "finalPurity"] + BoundReport.columns()


@dataclass(frozen=True)
class ExperimentSummary:
    counts: dict
    fractions: dict
    ratio_mean: float
    ratio_min: float
    ratio_max: float
    config: dict


def trial_trajectory(cfg: ExperimentConfig, index: int) -> dynamics.Trajectory:
    """Draw trial ``index``: system state, environment state and Hamiltonian."""
    gen = linalg.RngStream(cfg.seed, index).generator()
    rank = cfg.state_rank
    rho_s = linalg.random_density(2, gen, rank)
    if cfg.fixed_environment:
        rho_e = linalg.random_density(2, linalg.RngStream(cfg.seed, FIXED_ENV_STREAM), rank)
    else:
        rho_e = linalg.random_density(2, gen, rank)
    h = linalg.random_diag_hamiltonian(4, gen, cfg.hamiltonian_scale)
    return dynamics.composite_unitary(rho_s, rho_e, h, cfg.tau, cfg.grid_m)


def run_trial(cfg: ExperimentConfig, index: int) -> ExperimentRecord:
    try:
        traj = trial_trajectory(cfg, index)
        rep = bounds.evaluate_bounds(traj, cfg.quadrature)
    except Exception as exc:  # noqa: BLE001 - re-raised with reproduction info
        raise TrialFailed(
            f"trial {index} failed (seed={cfg.seed}, stream={index}): {type(exc).__name__}: {exc}", exc
        ) from exc
    return ExperimentRecord(
        trialIndex=index,
        streamId=index,
        initialPurity=float(metric.purity(traj.initial)),
        finalPurity=float(metric.purity(traj.final)),
        maxPurity=rep.maxPurity,
        report=rep,
    )


def summarize(records: Sequence[ExperimentRecord], cfg: ExperimentConfig) -> ExperimentSummary:
    counts = {label: 0 for label in bounds.LABELS}
    for r in records:
        counts[r.report.argmaxLabel] += 1
    n = len(records)
    ratios = np.array([r.report.tauCombined / r.report.tauActual for r in records])
    cfg_echo = asdict(cfg)
    return ExperimentSummary(
        counts=counts,
        fractions={k: v / n for k, v in counts.items()},
        ratio_mean=float(ratios.mean()),
        ratio_min=float(ratios.min()),
        ratio_max=float(ratios.max()),
        config=cfg_echo,
    )


def run_random_experiment(cfg: ExperimentConfig):
    """Evaluate all bounds on ``cfg.samples`` random composite-system trials.

    Records come back in trial order whatever ``cfg.workers`` is.
    """
    indices = range(cfg.samples)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(partial(run_trial, cfg), indices, chunksize=16))
    else:
        records = [run_trial(cfg, i) for i in indices]
    return records, summarize(records, cfg)


def records_csv(records: Sequence[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([bounds.format_value(v) for v in r.flat().values()])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def records_json(records: Sequence[ExperimentRecord], summary: ExperimentSummary | None = None) -> str:
    doc = {"records": [{k: _jsonable(v) for k, v in r.flat().items()} for r in records]}
    if summary is not None:
        doc["summary"] = summary_dict(summary)
    return json.dumps(doc, indent=1) + "\n"


def summary_dict(summary: ExperimentSummary) -> dict:
    d = asdict(summary)
    return json.loads(json.dumps(d, default=str))


# -- verification: metric --------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    violations: int = 0
    worst: float = 0.0
    example: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def record(self, errors: np.ndarray, tol: float, describe=None) -> None:
        """Count ``errors > tol`` as violations; keep the worst one."""
        errors = np.atleast_1d(np.asarray(errors, dtype=float))
        if not errors.size:
            return
        first = self.checks == 0
        self.checks += errors.size
        bad = errors > tol
        self.violations += int(np.count_nonzero(bad))
        k = int(np.argmax(errors))
        if first or errors[k] > self.worst:
            self.worst = float(errors[k])
        if bad[k] and describe is not None and not self.example:
            self.example = describe(k)


@dataclass
class VerificationReport:
    suites: list

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> list[str]:
        out = []
        for s in self.suites:
            tag = "PASS" if s.passed else "FAIL"
            extra = f"  e.g. {s.example}" if s.example else ""
            out.append(f"{tag} {s.name}: {s.violations}/{s.checks} violations, worst {s.worst:.3g}{extra}")
        return out

    def to_dict(self) -> dict:
        return {"passed": self.passed, "suites": [asdict(s) | {"passed": s.passed} for s in self.suites]}


@dataclass(frozen=True)
class MetricTolerances:
    triangle: float = 1e-10
    symmetry: float = 0.0
    identity: float = 1e-10
    unitary: float = 1e-10
    norm: float = 1e-10
    latitude: float = 1e-10
    range: float = 1e-12
    fd_ratio: float = 3.5


def _sqrt_f():
    return AlternativeFunction.custom(
        np.sqrt, lambda x: 0.5 / np.sqrt(x), lambda x: -0.25 * x**-1.5, name="sqrt(x)"
    )


def default_f_kinds(states=None) -> list[AlternativeFunction]:
    """One function of each kind, valid for any state set."""
    pmax = 1.0 if states is None else float(np.max(metric.purity(states)))
    return [
        AlternativeFunction.constant(1.0),
        AlternativeFunction.purity_plus_inv_n(),
        AlternativeFunction.frozen_max_purity(pmax),
        _sqrt_f(),
    ]


def verify_metric(
    seed: int = 0,
    trials: int = 10_000,
    dims: Sequence[int] = (2, 3, 4),
    f_kinds: Sequence[AlternativeFunction] | None = None,
    tol: MetricTolerances = MetricTolerances(),
    fd_probes: int = 20,
) -> VerificationReport:
    """Check the distance axioms and embedding identities on random states.

    Raises :class:`ConstraintViolated` if a supplied ``f`` breaks ``f(x) >= x``.
    """
    tri = SuiteResult("triangle inequality")
    sym = SuiteResult("symmetry")
    ident = SuiteResult("identity of indiscernibles")
    uni = SuiteResult("unitary invariance")
    norm = SuiteResult("unit norm of embedding")
    lat = SuiteResult("latitude formula")
    rng_ = SuiteResult("inner product range")
    for n in dims:
        gen = linalg.RngStream(seed, 1000 + n).generator()
        a, b, c = (linalg.random_densities(n, trials, gen) for _ in range(3))
        u = np.stack([linalg.random_unitary(n, gen) for _ in range(min(trials, 500))])
        u = u[np.arange(trials) % len(u)]
        udag = np.conj(np.swapaxes(u, -1, -2))
        kinds = f_kinds if f_kinds is not None else default_f_kinds(np.concatenate([a, b, c]))
        for f in kinds:
            def where(k, f=f, n=n):
                return f"N={n}, f={f.name}, sample {k}"

            fa, fb, fc = (metric.embed_many(x, f) for x in (a, b, c))
            dab, dbc, dac = metric.angle(fa, fb), metric.angle(fb, fc), metric.angle(fa, fc)
            tri.record(dac - dab - dbc, tol.triangle, where)
            sym.record(np.abs(metric.angle(fb, fa) - dab), tol.symmetry, where)
            ident.record(metric.angle(fa, fa), tol.identity, where)
            ident.record((dab <= tol.identity).astype(float), 0.5, where)
            d_rot = metric.distance(u @ a @ udag, u @ b @ udag, f)
            uni.record(np.abs(d_rot - dab), tol.unitary, where)
            norm.record(np.abs(linalg.hs_inner(fa, fa) - 1.0), tol.norm, where)
            lat.record(
                np.abs(np.trace(fa, axis1=-2, axis2=-1).real / n - metric.latitude_closed_form(metric.purity(a), f, n)),
                tol.latitude,
                where,
            )
            ip = linalg.hs_inner(fa, fb)
            rng_.record(np.abs(ip) - 1.0, tol.range, where)
    fd = verify_speed_consistency(seed, fd_probes, f_kinds, tol.fd_ratio)
    return VerificationReport([tri, sym, ident, uni, norm, lat, rng_, fd])


def _probe_trajectory(gen: np.random.Generator, k: int) -> dynamics.Trajectory:
    if k % 2 == 0:
        rs, re = linalg.random_density(2, gen), linalg.random_density(2, gen)
        return dynamics.composite_unitary(rs, re, linalg.random_diag_hamiltonian(4, gen), 1.0, 64)
    n = int(gen.integers(2, 5))
    return dynamics.depolarize(linalg.random_density(n, gen), dynamics.Schedule.cosine(1.0, 1.0, 0.0), 1.0, 64)


def verify_speed_consistency(
    seed: int = 0,
    probes: int = 20,
    f_kinds: Sequence[AlternativeFunction] | None = None,
    min_ratio: float = 3.5,
    h: float = 1e-3,
) -> SuiteResult:
    """Distance to a nearby state must match ``speed * h`` to second order.

    At each probe the residual ``|D(rho_t, rho_{t+h}) - v h|`` is computed for
    ``h`` and ``h/2``; the shrink factor must be at least ``min_ratio``.
    Probes are kept away from the frozen latitude where the embedding is not
    smooth, and from extrema of the speed where the ``h^2`` term vanishes.
    """
    res = SuiteResult("speed/distance consistency")
    gen = linalg.RngStream(seed, 77).generator()
    ratios, labels = [], []
    k = 0
    while len(ratios) < probes:
        traj = _probe_trajectory(gen, k)
        k += 1
        t = float(gen.uniform(0.2, 0.7))
        (r0,), (d0,) = traj.at(t)
        window, _ = traj.at(np.linspace(t - h, t + h, 9))
        kinds = f_kinds if f_kinds is not None else default_f_kinds(traj.states)
        for f in kinds:
            pw = metric.purity(window)
            if np.min(f(pw, traj.dim) - pw) < 1e-3 and (f.kind != "purity_plus_inv_n"):
                continue
            v = metric.speed(r0, d0, f)
            # the h^2 residual coefficient is v'/2; skip extrema of v where it vanishes
            (rm, rp), (dm, dp) = traj.at([t - h, t + h])
            dv = (metric.speed(rp, dp, f) - metric.speed(rm, dm, f)) / (2 * h)
            if abs(dv) < 0.05 * max(v, 1e-300):
                continue
            resid = []
            for step in (h, h / 2):
                (r1,), _ = traj.at(t + step)
                resid.append(abs(metric.distance(r0, r1, f) - v * step))
            ratios.append(resid[0] / resid[1] if resid[1] > 0 else np.inf)
            labels.append(f"{traj.label} t={t:.4f} f={f.name} residuals={resid[0]:.3g},{resid[1]:.3g}")
            if len(ratios) >= probes:
                break
    shortfall = min_ratio - np.array(ratios)
    res.record(shortfall, 0.0, lambda j: labels[j])
    res.worst = float(np.min(ratios))
    return res


# -- verification: attainability ----------------------------------------------------

@dataclass(frozen=True)
class AttainabilityTolerances:
    saturation_low: float = 0.999
    saturation_high: float = 1e-6
    closed_form: float = 1e-6
    unitary: float = 1e-3
    unitary_f3: float = 1e-6
    generic_gap: float = 1e-3


def verify_attainability(
    seed: int = 0,
    states_per_dim: int = 10,
    unitary_trials: int = 100,
    generic_trials: int = 10,
    tol: AttainabilityTolerances = AttainabilityTolerances(),
    cfg: QuadratureConfig | None = None,
) -> VerificationReport:
    """Saturation checks: depolarizing (any N), qubit unitary orbit, and a generic control."""
    cfg = cfg or QuadratureConfig()
    gen = linalg.RngStream(seed, 4242).generator()
    dep = SuiteResult("depolarizing saturation of tauF3")
    closed = SuiteResult("depolarizing path length = arccos(p_tau)")
    for n in (2, 3, 4):
        for _ in range(states_per_dim):
            rho0 = linalg.random_density(n, gen)
            tau = float(gen.uniform(0.5, 2.0))
            traj = dynamics.depolarize(rho0, dynamics.Schedule.linear(tau, 1.0, 0.0), tau)
            ratio = bounds.tau_f3(traj, cfg) / tau
            dep.record(
                max(tol.saturation_low - ratio, ratio - 1.0 - tol.saturation_high), 0.0,
                lambda _k, n=n, r=ratio: f"N={n} ratio={r!r}",
            )
            length = bounds.integrate_speed(traj, AlternativeFunction.frozen_max_purity(metric.purity(rho0)), cfg)
            closed.record(abs(length - math.acos(0.0)), tol.closed_form, lambda _k, n=n: f"N={n}")
    uni = SuiteResult("qubit unitary saturation of tauUniP0")
    agree = SuiteResult("tauF3 = tauUniP0 on unitary orbits")
    for _ in range(unitary_trials):
        lam = float(gen.uniform(0.5, 1.0))
        if abs(lam - 0.5) < 1e-3:
            lam = 0.75
        phi = float(gen.uniform(0.0, 2 * math.pi))
        tau = float(gen.uniform(0.05, math.pi / 2))
        traj = dynamics.qubit_mixture_unitary(lam, phi, tau)
        tu = bounds.tau_uni_p0(traj, cfg)
        uni.record(abs(tu / tau - 1.0), tol.unitary, lambda _k, l=lam, p=phi: f"lambda={l:.6f} phi={p:.6f}")
        agree.record(abs(bounds.tau_f3(traj, cfg) - tu), tol.unitary_f3, lambda _k, l=lam: f"lambda={l:.6f}")
    generic = SuiteResult("generic composite dynamics is not optimal")
    for i in range(generic_trials):
        # a fixed control set: a random draw can land arbitrarily close to optimal
        traj = trial_trajectory(ExperimentConfig(samples=1, seed=GENERIC_CONTROL_SEED), i)
        ratio = bounds.tau_f3(traj, cfg) / traj.tau
        generic.record(ratio - (1.0 - tol.generic_gap), 0.0, lambda _k, i=i, r=ratio: f"trial {i} ratio={r:.6f}")
    return VerificationReport([dep, closed, uni, agree, generic])
