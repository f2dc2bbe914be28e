import numpy as np
import pytest

from geoqsl import dynamics, linalg

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, title, passed, detail)``."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        _CRITERIA[number] = (title, bool(passed), detail)
        print(f"[criterion {number}] {'PASS' if passed else 'FAIL'} {title}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_trajectory(kind: str, gen: np.random.Generator, m: int = 64) -> dynamics.Trajectory:
    """A randomly parameterised trajectory from one of the generators."""
    tau = float(gen.uniform(0.3, 2.0))
    if kind == "depolarize":
        n = int(gen.integers(2, 5))
        end = float(gen.uniform(0.0, 0.95))
        sched = dynamics.Schedule.linear if gen.random() < 0.5 else dynamics.Schedule.cosine
        return dynamics.depolarize(linalg.random_density(n, gen), sched(tau, 1.0, end), tau, m)
    if kind == "geodesic":
        n = int(gen.integers(2, 5))
        rho0 = linalg.random_density(n, gen)
        lam = np.linalg.eigvalsh(rho0)[0]
        beta_max = min(1.0, lam / (1.0 / n - lam))
        end = float(gen.uniform(-1.0, 0.9 * beta_max))
        sched = dynamics.Schedule.linear if gen.random() < 0.5 else dynamics.Schedule.cosine
        return dynamics.geodesic(rho0, sched(tau, 0.0, end), tau, m)
    if kind == "qubit_unitary":
        lam = float(gen.uniform(0.51, 1.0))
        return dynamics.qubit_mixture_unitary(lam, float(gen.uniform(0, 2 * np.pi)), tau, m)
    if kind == "composite":
        rs, re = linalg.random_density(2, gen), linalg.random_density(2, gen)
        if gen.random() < 0.5:
            h = linalg.random_diag_hamiltonian(4, gen)
        else:
            h = linalg.random_hermitian(4, gen)
        return dynamics.composite_unitary(rs, re, h, tau, m)
    raise ValueError(kind)


GENERATORS = ("depolarize", "geodesic", "qubit_unitary", "composite")
