"""
Master-equation generator, time evolution and steady states.

With hbar = 1 the generator reads::

    d rho/dt = -i [H, rho] + sum_i (G_ii / 2) D(s_i) rho
             + sum_{i != j} [ (G_ij / 2) Dx(s_j, s_i) + g_ij Dx(i s_j, s_i) ] rho
             + (G_in / 2) D(s_1^dag) rho + (G_out / 2) D(s_N) rho

with ``D(s) rho = 2 s rho s^dag - s^dag s rho - rho s^dag s`` and
``Dx(a, b) rho = [b rho, a^dag] + [a, rho b^dag]``. ``Dx(a, b)`` moves
excitation from the atom of ``b`` to the atom of ``a``; a RateSet entry
``[i, j]`` describes propagation i -> j, hence the argument order above.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .environment import RateSet
from .operators import (
    ChainSpec,
    devectorize,
    lowering_operator,
    number_operator,
    system_hamiltonian,
    vectorize,
)

__all__ = [
    "DENSE_MAX_ATOMS",
    "MATRIX_FREE_MAX_ATOMS",
    "IntegrationError",
    "SteadyStateError",
    "AmbiguousSteadyStateError",
    "NoSteadyStateError",
    "PositivityWarning",
    "Liouvillian",
    "Trajectory",
    "dissipator",
    "cross_dissipator",
    "generator_terms",
    "build_liouvillian",
    "evolve",
    "steady_state",
    "steady_state_oracle",
]

DENSE_MAX_ATOMS = 7
MATRIX_FREE_MAX_ATOMS = 12
ORACLE_MAX_ATOMS = 4

RTOL = 1e-8
ATOL = 1e-10
RESIDUAL_TOL = 1e-9


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t_reached: float):
        self.t_reached = t_reached
        super().__init__(f"{message} (integration stopped at t = {t_reached:.6g})")


class SteadyStateError(RuntimeError):
    pass


class AmbiguousSteadyStateError(SteadyStateError):
    def __init__(self, null_dim):
        self.null_dim = null_dim
        super().__init__(f"steady state is not unique: null-space dimension {null_dim}")


class NoSteadyStateError(SteadyStateError):
    pass


class PositivityWarning(RuntimeWarning):
    pass


def _dense(op):
    return op.toarray() if sp.issparse(op) else np.asarray(op)


def _check_dims(rho, *ops):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"rho must be square, got shape {rho.shape}")
    for op in ops:
        if op.shape != rho.shape:
            raise ValueError(f"operator shape {op.shape} does not match rho shape {rho.shape}")
    return rho


def dissipator(sigma, rho) -> np.ndarray:
    """``2 s rho s^dag - s^dag s rho - rho s^dag s``."""
    s = _dense(sigma)
    rho = _check_dims(rho, s)
    sd = s.conj().T
    return 2 * s @ rho @ sd - sd @ s @ rho - rho @ sd @ s


def cross_dissipator(sigma_i, sigma_j, rho) -> np.ndarray:
    """``[s_j rho, s_i^dag] + [s_i, rho s_j^dag]``.

    Transfers excitation from the atom of ``sigma_j`` into the atom of
    ``sigma_i``. Reduces to :func:`dissipator` when both arguments coincide.
    """
    a = _dense(sigma_i)
    b = _dense(sigma_j)
    rho = _check_dims(rho, a, b)
    ad = a.conj().T
    bd = b.conj().T
    b_rho = b @ rho
    rho_bd = rho @ bd
    return b_rho @ ad - ad @ b_rho + a @ rho_bd - rho_bd @ a


def _check_sizes(chain: ChainSpec, rates: RateSet) -> None:
    if rates.n_atoms != chain.n_atoms:
        raise ValueError(f"RateSet is for N={rates.n_atoms} atoms but the chain has N={chain.n_atoms}")


def generator_terms(chain: ChainSpec, rates: RateSet,
                    include_hamiltonian: bool = True) -> list[tuple[str, Callable]]:
    """Each nonzero term of the generator as ``(label, rho -> matrix)``.

    Built from :func:`dissipator` and :func:`cross_dissipator` with dense
    operators; meant for checking the assembled Liouvillian at small N.
    """
    _check_sizes(chain, rates)
    n = chain.n_atoms
    s = [lowering_operator(k + 1, n).toarray() for k in range(n)]
    terms = []
    if include_hamiltonian:
        H = system_hamiltonian(chain).toarray()
        terms.append(("hamiltonian", lambda r, H=H: -1j * (H @ r - r @ H)))
    for k in range(n):
        if rates.gamma[k, k] != 0:
            terms.append((f"decay[{k + 1}]",
                          lambda r, c=rates.gamma[k, k] / 2, a=s[k]: c * dissipator(a, r)))
    for src in range(n):
        for dst in range(n):
            if src == dst:
                continue
            if rates.gamma[src, dst] != 0:
                terms.append((f"dissipative[{src + 1}->{dst + 1}]",
                              lambda r, c=rates.gamma[src, dst] / 2, a=s[dst], b=s[src]:
                              c * cross_dissipator(a, b, r)))
            if rates.g[src, dst] != 0:
                terms.append((f"coherent[{src + 1}->{dst + 1}]",
                              lambda r, c=rates.g[src, dst], a=1j * s[dst], b=s[src]:
                              c * cross_dissipator(a, b, r)))
    if rates.gamma_in != 0:
        terms.append(("pump", lambda r, c=rates.gamma_in / 2, a=s[0].conj().T: c * dissipator(a, r)))
    if rates.gamma_out != 0:
        terms.append(("extraction", lambda r, c=rates.gamma_out / 2, a=s[-1]: c * dissipator(a, r)))
    return terms


def _generator_parts(chain: ChainSpec, rates: RateSet, include_hamiltonian: bool):
    """Split the generator as ``K rho + rho K^dag + sum_ab C[a, b] s_a rho s_b^dag + pumps``."""
    n = chain.n_atoms
    s = [lowering_operator(k + 1, n) for k in range(n)]
    dim = chain.dim
    off_gamma = rates.gamma - np.diag(np.diag(rates.gamma))
    # alpha[src, dst] weights (s_src rho s_dst^dag - s_dst^dag s_src rho)
    alpha = 0.5 * off_gamma - 1j * rates.g
    C = np.diag(np.diag(rates.gamma)).astype(complex) + alpha + alpha.conj().T
    K = sp.csr_array((dim, dim), dtype=complex)
    if include_hamiltonian:
        K = K - 1j * system_hamiltonian(chain)
    for k in range(n):
        K = K - 0.5 * rates.gamma[k, k] * number_operator(k + 1, n)
    for src, dst in zip(*np.nonzero(alpha)):
        K = K - alpha[src, dst] * (s[dst].T @ s[src])
    if rates.gamma_in:
        K = K - 0.5 * rates.gamma_in * (s[0] @ s[0].T)
    if rates.gamma_out:
        K = K - 0.5 * rates.gamma_out * number_operator(n, n)
    return s, sp.csr_array(K), C


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Generator of ``d vec(rho)/dt = L vec(rho)`` (column stacking).

    ``matrix`` is a sparse ``4**N x 4**N`` array for N <= 7 and ``None`` for
    larger chains, where only :meth:`apply_matrix` (acting on ``2**N``
    square matrices) is available.
    """

    n_atoms: int
    matrix: sp.csr_array | None
    apply_matrix: Callable[[np.ndarray], np.ndarray]

    @property
    def dim(self) -> int:
        return 4**self.n_atoms

    @property
    def has_matrix(self) -> bool:
        return self.matrix is not None

    def dense(self) -> np.ndarray:
        if self.matrix is None:
            raise ValueError(f"no matrix representation for N={self.n_atoms} (matrix-free generator)")
        return self.matrix.toarray()

    def apply(self, vec: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ vec
        return vectorize(self.apply_matrix(devectorize(vec)))

    def __matmul__(self, vec):
        return self.apply(vec)


def build_liouvillian(chain: ChainSpec, rates: RateSet,
                      include_hamiltonian: bool = True) -> Liouvillian:
    """Assemble the generator for ``chain`` in environment ``rates``.

    ``include_hamiltonian=False`` drops ``-i[H, rho]``; with identical
    transition frequencies it only rotates coherences and never changes
    populations or fluxes.
    """
    _check_sizes(chain, rates)
    n = chain.n_atoms
    if n > MATRIX_FREE_MAX_ATOMS:
        raise ValueError(f"N={n} exceeds the supported maximum of {MATRIX_FREE_MAX_ATOMS}")
    s, K, C = _generator_parts(chain, rates, include_hamiltonian)
    K_dag = sp.csr_array(K.conj().T)
    # M[a] = sum_b C[a, b] s_b^dag so that the jump part is sum_a s_a rho M[a]
    M = []
    for a in range(n):
        acc = sp.csr_array((chain.dim, chain.dim), dtype=complex)
        for b in np.flatnonzero(C[a]):
            acc = acc + C[a, b] * s[b].T
        M.append(sp.csr_array(acc))
    s_first = s[0]
    s_last = s[-1]
    gamma_in, gamma_out = rates.gamma_in, rates.gamma_out

    def apply_matrix(rho):
        out = K @ rho
        out += (K_dag.T @ rho.T).T
        for a in range(n):
            if M[a].nnz:
                out += s[a] @ (M[a].T @ rho.T).T
        if gamma_in:
            out += gamma_in * (s_first.T @ (s_first.T @ rho.T).T)
        if gamma_out:
            out += gamma_out * (s_last @ (s_last @ rho.T).T)
        return out

    matrix = None
    if n <= DENSE_MAX_ATOMS:
        eye = sp.identity(chain.dim, dtype=complex, format="csr")
        L = sp.kron(eye, K) + sp.kron(K.conj(), eye)
        for a, b in zip(*np.nonzero(C)):
            L = L + C[a, b] * sp.kron(s[b], s[a])
        if gamma_in:
            L = L + gamma_in * sp.kron(s_first.T, s_first.T)
        if gamma_out:
            L = L + gamma_out * sp.kron(s_last, s_last)
        matrix = sp.csr_array(L)
        matrix.sum_duplicates()
        matrix.eliminate_zeros()
    return Liouvillian(n, matrix, apply_matrix)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def traces(self) -> np.ndarray:
        return np.trace(self.states, axis1=1, axis2=2)

    def min_eigenvalues(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(r)[0] for r in self.states])


def evolve(L: Liouvillian, rho0: np.ndarray, times, rtol: float = RTOL,
           atol: float = ATOL) -> Trajectory:
    """Integrate ``d vec(rho)/dt = L vec(rho)`` and sample at ``times``.

    Uses embedded Runge-Kutta 4(5) stepping (Dormand-Prince) with dense
    output. Each sample is re-Hermitized as ``(rho + rho^dag) / 2``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a nonempty 1-d grid")
    if times[0] != 0:
        raise ValueError(f"times must start at 0, got {times[0]}")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    rho0 = np.asarray(rho0, dtype=complex)
    dim = 2**L.n_atoms
    if rho0.shape != (dim, dim):
        raise ValueError(f"rho0 has shape {rho0.shape}, expected {(dim, dim)}")

    if len(times) == 1:
        states = rho0[None].copy()
    else:
        if L.matrix is not None:
            mat = L.matrix
            fun = lambda t, y: mat @ y
            y0 = vectorize(rho0)
        else:
            # row-major flattening of the matrix-free form avoids copies
            apply = L.apply_matrix
            fun = lambda t, y: apply(y.reshape(dim, dim)).reshape(-1)
            y0 = rho0.reshape(-1)
        sol = solve_ivp(fun, (times[0], times[-1]), y0, method="RK45",
                        t_eval=times, rtol=rtol, atol=atol)
        if sol.status != 0:
            t_reached = float(sol.t[-1]) if len(sol.t) else 0.0
            raise IntegrationError(sol.message, t_reached)
        if L.matrix is not None:
            states = sol.y.T.reshape(len(times), dim, dim).transpose(0, 2, 1)
        else:
            states = sol.y.T.reshape(len(times), dim, dim)
    states = 0.5 * (states + states.conj().transpose(0, 2, 1))
    return Trajectory(times, np.ascontiguousarray(states))


def _trace_row(dim: int) -> np.ndarray:
    return vectorize(np.eye(dim)).astype(complex)


def _null_dimension(L: Liouvillian, tol: float = 1e-10):
    if L.dim > 4**5:
        return "unknown (>= 2)"
    sv = np.linalg.svd(L.dense(), compute_uv=False)
    return int(np.sum(sv <= tol * max(1.0, sv[0])))


def steady_state(L: Liouvillian, residual_tol: float = RESIDUAL_TOL,
                 positivity_tol: float = 1e-8) -> np.ndarray:
    """Unit-trace null vector of ``L``.

    Replaces the first row of ``L`` by the trace functional and solves the
    resulting linear system. Issues :class:`PositivityWarning` when the
    solution has an eigenvalue below ``-positivity_tol``.
    """
    if L.matrix is None:
        raise ValueError(f"steady_state needs a matrix Liouvillian (N <= {DENSE_MAX_ATOMS})")
    dim = 2**L.n_atoms
    rhs = np.zeros(L.dim, dtype=complex)
    rhs[0] = 1.0
    trace_row = _trace_row(dim)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            if L.dim <= 1024:
                A = L.dense()
                A[0, :] = trace_row
                vec = np.linalg.solve(A, rhs)
            else:
                A = sp.lil_array(L.matrix)
                A[[0], :] = trace_row[None, :]
                vec = spla.spsolve(sp.csc_array(A), rhs)
    except (np.linalg.LinAlgError, spla.MatrixRankWarning, RuntimeError):
        raise AmbiguousSteadyStateError(_null_dimension(L)) from None

    rho = devectorize(vec)
    residual = np.max(np.abs(L.matrix @ vec)) if np.all(np.isfinite(vec)) else np.inf
    # entries of a density matrix are bounded by 1; larger values mean a null direction leaked in
    if not np.isfinite(residual) or np.max(np.abs(rho)) > 1 + 1e-6:
        null_dim = _null_dimension(L)
        if null_dim != 1:
            raise AmbiguousSteadyStateError(null_dim)
        raise SteadyStateError("steady-state solve is ill-conditioned")
    if residual > residual_tol:
        raise SteadyStateError(f"steady-state residual {residual:.3e} exceeds {residual_tol:.1e}")
    rho = 0.5 * (rho + rho.conj().T)
    min_eig = np.linalg.eigvalsh(rho)[0]
    if min_eig < -positivity_tol:
        warnings.warn(f"steady state has negative eigenvalue {min_eig:.3e}", PositivityWarning,
                      stacklevel=2)
    return rho


def steady_state_oracle(L: Liouvillian, zero_tol: float = 1e-6) -> np.ndarray:
    """Steady state from the full eigendecomposition of ``L`` (N <= 4).

    Independent cross-check of :func:`steady_state`.
    """
    if L.n_atoms > ORACLE_MAX_ATOMS:
        raise ValueError(f"eigendecomposition oracle limited to N <= {ORACLE_MAX_ATOMS}")
    evals, evecs = np.linalg.eig(L.dense())
    k = int(np.argmin(np.abs(evals)))
    if abs(evals[k]) > zero_tol:
        raise NoSteadyStateError(f"smallest |eigenvalue| is {abs(evals[k]):.3e}")
    rho = devectorize(evecs[:, k])
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)
