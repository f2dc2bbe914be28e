"""Small dense complex linear algebra.

Matrices are plain ``numpy`` arrays of shape ``(N, N)``; most helpers also
accept stacks ``(..., N, N)`` so that whole trajectories can be processed in
one call.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import DimensionMismatch, InvalidState, NonConvergence, ParseError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class RngStream:
    """Reproducible random substream identified by ``(seed, stream_id)``.

    Distinct stream ids give statistically independent generators, so Monte
    Carlo trials can be drawn in any order (or in parallel) with identical
    results.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# -- structure checks --------------------------------------------------------

def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return bool(np.all(np.abs(a - np.swapaxes(a.conj(), -1, -2)) <= tol))


def as_hermitian(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``a`` as a complex array after checking Hermiticity entry-wise."""
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatch(f"expected square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidState("matrix has non-finite entries")
    if not is_hermitian(a, tol):
        err = np.max(np.abs(a - np.swapaxes(a.conj(), -1, -2)))
        raise InvalidState(f"matrix is not Hermitian (max |A - A^dag| = {err:.3g})")
    return a


def as_density(rho, trace_tol: float = TRACE_TOL, psd_tol: float = PSD_TOL) -> np.ndarray:
    """Validate a density matrix (or a stack of them) and return it as complex."""
    rho = as_hermitian(rho)
    tr = np.trace(rho, axis1=-2, axis2=-1).real
    if np.any(np.abs(tr - 1.0) > trace_tol):
        raise InvalidState(f"trace differs from 1 (got {np.ravel(tr)[np.argmax(np.abs(np.ravel(tr) - 1))]!r})")
    lam = np.linalg.eigvalsh(rho)
    if np.any(lam < -psd_tol):
        raise InvalidState(f"matrix is not positive semidefinite (min eigenvalue {lam.min():.3g})")
    return rho


# -- products and traces -----------------------------------------------------

def hs_inner(a, b) -> float | np.ndarray:
    """Hilbert-Schmidt inner product ``Tr(AB)`` of Hermitian matrices.

    Works on stacks; the imaginary residue is dropped.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:]:
        raise DimensionMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    # Tr(AB) = sum_ij A_ij B_ji
    val = np.einsum("...ij,...ji->...", a, b).real
    return float(val) if np.ndim(val) == 0 else val


def kron(a, b) -> np.ndarray:
    """Kronecker product with the first factor on the slow (left) index."""
    return np.kron(np.asarray(a), np.asarray(b))


def partial_trace(rho, dim_s: int, dim_e: int, keep: str = "S") -> np.ndarray:
    """Reduce a bipartite ``S (x) E`` operator to one factor.

    ``rho`` may be a stack ``(..., dS*dE, dS*dE)``.
    """
    rho = np.asarray(rho)
    n = rho.shape[-1]
    if n != dim_s * dim_e or rho.shape[-2] != n:
        raise DimensionMismatch(f"dimension {n} does not factor as {dim_s}x{dim_e}")
    t = rho.reshape(rho.shape[:-2] + (dim_s, dim_e, dim_s, dim_e))
    keep = keep.upper()
    if keep == "S":
        return np.einsum("...aebe->...ab", t)
    if keep == "E":
        return np.einsum("...sasb->...ab", t)
    raise ValueError(f"keep must be 'S' or 'E', got {keep!r}")


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


# -- eigensolver and propagators ----------------------------------------------

def _offdiag_norm(a):
    return np.linalg.norm(a - np.diag(np.diag(a)))


def herm_eig(a, tol: float = 1e-15, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi.

    Returns ``(eigenvalues, V)`` with eigenvalues ascending and the columns of
    ``V`` the matching orthonormal eigenvectors.

    Raises:
        NonConvergence: off-diagonal mass did not fall below ``tol * ||A||_F``
            within ``max_sweeps`` sweeps.
    """
    a = as_hermitian(a, tol=1e-10).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = np.linalg.norm(a)
    if scale == 0.0 or n == 1:
        return np.real(np.diag(a)).copy(), v

    for _ in range(max_sweeps):
        off = _offdiag_norm(a)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # phase-fix q so the pivot is real, then a real Givens rotation
                j = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ j
                a[idx, :] = j.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ j
    else:
        off = _offdiag_norm(a)
        if off > tol * scale:
            raise NonConvergence(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off:.3g})"
            )

    lam = np.real(np.diag(a))
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order]


def is_diagonal(a) -> bool:
    a = np.asarray(a)
    return not np.any(a - np.diag(np.diag(a)))


def unitary_at(h, t: float) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H``.

    Diagonal ``H`` takes an elementwise-phase fast path.
    """
    h = as_hermitian(h, tol=1e-10)
    if is_diagonal(h):
        return np.diag(np.exp(-1j * np.real(np.diag(h)) * t))
    lam, v = herm_eig(h)
    return (v * np.exp(-1j * lam * t)) @ v.conj().T


# -- random objects -----------------------------------------------------------

def random_density(n: int, rng, rank: int | None = None) -> np.ndarray:
    """Random density matrix ``G G^dag / Tr(G G^dag)`` from a complex Ginibre ``G``.

    With ``rank=None`` the ancilla dimension equals ``n`` (Hilbert-Schmidt
    measure); ``rank=1`` gives Haar-random pure states.
    """
    if n < 2:
        raise ValueError("dimension must be >= 2")
    k = n if rank is None else int(rank)
    gen = _as_rng(rng)
    g = gen.standard_normal((n, k)) + 1j * gen.standard_normal((n, k))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def random_densities(n: int, count: int, rng, rank: int | None = None) -> np.ndarray:
    """Stack of ``count`` independent Ginibre density matrices, shape ``(count, n, n)``."""
    k = n if rank is None else int(rank)
    gen = _as_rng(rng)
    g = gen.standard_normal((count, n, k)) + 1j * gen.standard_normal((count, n, k))
    rho = g @ np.conj(np.swapaxes(g, -1, -2))
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    return rho / np.trace(rho, axis1=-2, axis2=-1).real[:, None, None]


def random_diag_hamiltonian(n: int, rng, scale: float = 2 * np.pi) -> np.ndarray:
    """Diagonal Hamiltonian with i.i.d. entries uniform on ``[0, scale]``."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    gen = _as_rng(rng)
    return np.diag(gen.uniform(0.0, scale, size=n)).astype(complex)


def random_hermitian(n: int, rng) -> np.ndarray:
    gen = _as_rng(rng)
    g = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
    return 0.5 * (g + g.conj().T)


def random_unitary(n: int, rng) -> np.ndarray:
    """Haar unitary via QR with the usual phase correction."""
    gen = _as_rng(rng)
    z = (gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


# -- text format --------------------------------------------------------------
#
#   N
#   re im re im ...   (N pairs per row, N rows)

def format_matrix(a) -> str:
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    rows = [str(n)]
    for i in range(n):
        rows.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in a[i]))
    return "\n".join(rows) + "\n"


def write_matrix(a, fh: TextIO) -> None:
    fh.write(format_matrix(a))


def _read_matrix_lines(lines: Iterable[tuple[int, str]], role: str | None) -> np.ndarray:
    it = iter(lines)
    try:
        lineno, head = next(it)
    except StopIteration:
        raise ParseError("unexpected end of input, expected matrix dimension") from None
    try:
        n = int(head.strip())
    except ValueError:
        raise ParseError(f"expected integer dimension, got {head.strip()!r}", lineno) from None
    if n < 1:
        raise ParseError(f"dimension must be positive, got {n}", lineno)
    a = np.empty((n, n), dtype=complex)
    for i in range(n):
        try:
            lineno, row = next(it)
        except StopIteration:
            raise ParseError(f"unexpected end of input in matrix row {i}") from None
        parts = row.split()
        if len(parts) != 2 * n:
            raise ParseError(f"expected {2 * n} numbers, got {len(parts)}", lineno)
        try:
            vals = [float(x) for x in parts]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        a[i] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    if role in ("state", "hamiltonian"):
        try:
            a = as_density(a) if role == "state" else as_hermitian(a)
        except InvalidState as exc:
            raise ParseError(f"invalid {role}: {exc}", lineno) from None
    return a


def _numbered(text_or_fh):
    if isinstance(text_or_fh, str):
        text_or_fh = io.StringIO(text_or_fh)
    for k, line in enumerate(text_or_fh, start=1):
        if line.strip():
            yield k, line


def parse_matrix(text_or_fh, role: str | None = None) -> np.ndarray:
    """Parse the matrix text format.

    ``role`` may be ``"state"`` or ``"hamiltonian"`` to reject matrices that
    are not valid in that role.
    """
    return _read_matrix_lines(_numbered(text_or_fh), role)
