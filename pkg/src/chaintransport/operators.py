"""
Operator algebra for a chain of N two-level emitters.

Basis convention: a computational basis index ``b`` in ``[0, 2**N)`` encodes
the chain configuration with atom 1 as the most significant bit. Bit
``N - i`` of ``b`` is set iff atom ``i`` is excited, so ``|g...g>`` is index 0
and ``|g...ge>`` (only atom N excited) is index 1.

Density matrices are vectorized by column stacking, which gives
``vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ChainSpec",
    "lowering_operator",
    "raising_operator",
    "number_operator",
    "system_hamiltonian",
    "basis_state",
    "basis_index",
    "vectorize",
    "devectorize",
    "check_density_matrix",
]

_SIGMA = sp.csr_array(np.array([[0.0, 1.0], [0.0, 0.0]]))

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8


@dataclass(frozen=True)
class ChainSpec:
    """Geometry and frequency of an N-atom chain.

    Parameters
    ----------
    n_atoms : int
        Number of emitters N (N = 1 is allowed as a degenerate case).
    omega0 : float
        Common transition frequency. Rates and times are expressed in units
        where the local decay rate of atom 1 is one, and ``hbar = 1``.
    step : float
        Interatomic spacing in units of the free-space wavelength.
    dipole_note : str
        Free-text metadata; not used in any computation.
    """

    n_atoms: int
    omega0: float = 1.0
    step: float = 0.0
    dipole_note: str = "y-oriented, |d| = 60 D"

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        if not np.isfinite(self.step) or self.step < 0:
            raise ValueError(f"step must be a nonnegative real, got {self.step!r}")
        if not np.isfinite(self.omega0):
            raise ValueError(f"omega0 must be finite, got {self.omega0!r}")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

    @property
    def dim(self) -> int:
        return 2**self.n_atoms

    def positions(self) -> np.ndarray:
        """Atom coordinates along the chain, ``x_m = (m - 1) * step``."""
        return self.step * np.arange(self.n_atoms, dtype=float)


def _check_index(i: int, n_atoms: int) -> None:
    if n_atoms < 1:
        raise ValueError(f"chain size must be >= 1, got {n_atoms}")
    if not 1 <= i <= n_atoms:
        raise ValueError(f"atom index {i} out of range 1..{n_atoms}")


def lowering_operator(i: int, n_atoms: int) -> sp.csr_array:
    """Return ``sigma_i = |g_i><e_i|`` embedded in the 2**N dimensional space.

    ``i`` is 1-based. The result is sparse with ``2**(N-1)`` unit entries.
    """
    _check_index(i, n_atoms)
    left = sp.identity(2 ** (i - 1), format="csr")
    right = sp.identity(2 ** (n_atoms - i), format="csr")
    return sp.csr_array(sp.kron(sp.kron(left, _SIGMA), right, format="csr"))


def raising_operator(i: int, n_atoms: int) -> sp.csr_array:
    return sp.csr_array(lowering_operator(i, n_atoms).T)


def number_operator(i: int, n_atoms: int) -> sp.csr_array:
    """Projector ``sigma_i^dag sigma_i`` onto the excited state of atom i."""
    _check_index(i, n_atoms)
    b = np.arange(2**n_atoms)
    occupied = ((b >> (n_atoms - i)) & 1).astype(float)
    return sp.csr_array(sp.diags(occupied, format="csr"))


def system_hamiltonian(chain: ChainSpec) -> sp.csr_array:
    """Bare chain Hamiltonian ``omega0 * sum_i sigma_i^dag sigma_i`` (hbar = 1).

    Diagonal in the computational basis, with entry ``omega0 * popcount(b)``.
    """
    b = np.arange(chain.dim)
    counts = np.array([bin(x).count("1") for x in b], dtype=float)
    return sp.csr_array(sp.diags(chain.omega0 * counts, format="csr"))


def basis_index(labels: str) -> int:
    """Computational basis index of a product state written as e.g. ``"gegg"``."""
    if not isinstance(labels, str) or len(labels) == 0:
        raise ValueError("labels must be a nonempty string over {'g', 'e'}")
    index = 0
    for pos, ch in enumerate(labels):
        if ch not in "ge":
            raise ValueError(f"invalid character {ch!r} at position {pos + 1} in {labels!r}")
        index = (index << 1) | (ch == "e")
    return index


def basis_state(labels: str, n_atoms: int | None = None) -> np.ndarray:
    """Pure-state density matrix of the product basis state ``labels``."""
    if n_atoms is not None and len(labels) != n_atoms:
        raise ValueError(f"state {labels!r} has length {len(labels)}, expected {n_atoms}")
    index = basis_index(labels)
    dim = 2 ** len(labels)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[index, index] = 1.0
    return rho


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stacked vector of a square matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize`.

    The length must be ``4**N`` for some N >= 0, i.e. the square of a power
    of two.
    """
    vec = np.asarray(vec)
    if vec.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {vec.shape}")
    n = vec.shape[0]
    dim = int(round(np.sqrt(n)))
    if n == 0 or dim * dim != n or dim & (dim - 1):
        raise ValueError(f"length {n} is not the square of a power of two")
    return vec.reshape((dim, dim), order="F")


def check_density_matrix(
    rho: np.ndarray,
    hermitian_tol: float = HERMITIAN_TOL,
    trace_tol: float = TRACE_TOL,
    positivity_tol: float = POSITIVITY_TOL,
) -> list[str]:
    """Return a list of violated density-matrix invariants (empty if valid)."""
    rho = np.asarray(rho)
    problems = []
    herm = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if herm > hermitian_tol:
        problems.append(f"not Hermitian (max |rho - rho^dag| = {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        problems.append(f"trace {tr.real:.12g}{tr.imag:+.3e}j differs from 1")
    min_eig = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if min_eig < -positivity_tol:
        problems.append(f"not positive (min eigenvalue {min_eig:.3e})")
    return problems
