"""
Transport observables: populations, pump and extraction fluxes, and the
transport efficiency

    chi(t) = [E(rho(t)) - E(rho_0(t))] / P(rho(t))

where ``rho`` is driven by both pump and extraction and ``rho_0`` is the same
chain with the pump switched off. Also hosts the parameter scans.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    PositivityWarning,
    build_liouvillian,
    dissipator,
    evolve,
    steady_state,
)
from .environment import (
    QuadratureModel,
    RateSet,
    SppChainModel,
    quadrature_rate_set,
    spp_chain_rate_set,
    unidirectionalize_two_atom,
    validate_rates,
)
from .operators import ChainSpec, lowering_operator, system_hamiltonian

__all__ = [
    "DEFAULT_DRIVE",
    "UndefinedEfficiencyError",
    "EfficiencyTrace",
    "ScanBase",
    "ScanResult",
    "SCAN_PARAMETERS",
    "excited_populations",
    "pump_flux",
    "extraction_flux",
    "efficiency_trace",
    "stationary_efficiency",
    "scan_point_rates",
    "scan",
]

DEFAULT_DRIVE = 1.5
PUMP_FLOOR = 1e-12
GROUND_TOL = 1e-9
STATIONARY_HORIZON = 50.0
CONVERGENCE_TOL = 1e-5
SCAN_PARAMETERS = ("gamma12_ratio", "phi", "chain_step", "n_atoms")


class UndefinedEfficiencyError(ArithmeticError):
    """The pump flux vanishes, so the efficiency is not defined."""


def excited_populations(rho) -> np.ndarray:
    """``Tr(s_i^dag s_i rho)`` for every atom."""
    rho = np.asarray(rho)
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    if rho.shape != (dim, dim) or 2**n != dim:
        raise ValueError(f"rho must be a 2**N square matrix, got shape {rho.shape}")
    diag = np.real(np.diagonal(rho))
    b = np.arange(dim)
    return np.array([diag[((b >> (n - i)) & 1) == 1].sum() for i in range(1, n + 1)])


def _n_atoms(rho) -> int:
    return np.asarray(rho).shape[0].bit_length() - 1


def pump_flux(rho, rates: RateSet, chain: ChainSpec) -> float:
    """Energy flux injected at atom 1, ``(G_in/2) Tr(H D(s_1^dag) rho)``."""
    if rates.gamma_in == 0:
        return 0.0
    H = system_hamiltonian(chain).toarray()
    s1 = lowering_operator(1, chain.n_atoms).toarray()
    return float(np.real(0.5 * rates.gamma_in * np.trace(H @ dissipator(s1.conj().T, rho))))


def extraction_flux(rho, rates: RateSet, chain: ChainSpec) -> float:
    """Energy flux removed at atom N, ``-(G_out/2) Tr(H D(s_N) rho)``."""
    if rates.gamma_out == 0:
        return 0.0
    H = system_hamiltonian(chain).toarray()
    sN = lowering_operator(chain.n_atoms, chain.n_atoms).toarray()
    return float(np.real(-0.5 * rates.gamma_out * np.trace(H @ dissipator(sN, rho))))


def _flux_series(states, rates, chain):
    # the traces are linear in rho, so evaluate them via diagonal weights
    n = chain.n_atoms
    H = system_hamiltonian(chain).toarray()
    s1 = lowering_operator(1, n).toarray()
    sN = lowering_operator(n, n).toarray()
    w_pump = 0.5 * rates.gamma_in * _trace_weights(H, s1.conj().T)
    w_ext = -0.5 * rates.gamma_out * _trace_weights(H, sN)
    flat = states.reshape(len(states), -1)
    return np.real(flat @ w_pump), np.real(flat @ w_ext)


def _trace_weights(H, s):
    """Matrix W with ``Tr(H D(s) rho) == sum(W * rho)`` for every rho."""
    sd = s.conj().T
    # Tr(H D(s) rho) = Tr((2 s^dag H s - H s^dag s - s^dag s H) rho)
    A = 2 * sd @ H @ s - H @ sd @ s - sd @ s @ H
    return A.T.reshape(-1)


@dataclass(frozen=True, eq=False)
class EfficiencyTrace:
    times: np.ndarray
    pump_flux: np.ndarray
    extraction_flux_pumped: np.ndarray
    extraction_flux_unpumped: np.ndarray
    chi: np.ndarray
    chi_stationary: float
    converged: bool = True

    def at_end(self) -> float:
        return float(self.chi[-1])


def _efficiency(e_pumped, e_unpumped, p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = (np.asarray(e_pumped) - np.asarray(e_unpumped)) / p
    return np.where(p > PUMP_FLOOR, chi, np.nan)


def stationary_efficiency(chain: ChainSpec, rates: RateSet,
                          include_hamiltonian: bool = True) -> float:
    """Steady-state efficiency from the two stationary solutions.

    The unpumped chain must relax to the global ground state, which is
    checked rather than assumed.
    """
    rho = steady_state(build_liouvillian(chain, rates, include_hamiltonian))
    unpumped = rates.replace(gamma_in=0.0)
    rho0 = steady_state(build_liouvillian(chain, unpumped, include_hamiltonian))
    if abs(rho0[0, 0] - 1.0) > GROUND_TOL:
        raise ArithmeticError(
            f"unpumped steady state is not the ground state (ground population {rho0[0, 0].real:.12g})")
    p = pump_flux(rho, rates, chain)
    if p <= PUMP_FLOOR:
        raise UndefinedEfficiencyError(f"stationary pump flux {p:.3e} vanishes")
    e = extraction_flux(rho, rates, chain)
    e0 = extraction_flux(rho0, rates, chain)
    return (e - e0) / p


def efficiency_trace(chain: ChainSpec, rates: RateSet, rho_init, times,
                     include_hamiltonian: bool = True,
                     stationary: bool = True) -> EfficiencyTrace:
    """Efficiency dynamics from a pumped and an unpumped solve.

    Both solves start from ``rho_init``. ``chi`` is NaN where the pump flux
    is below 1e-12. ``converged`` compares chi at the last sample and at
    80 % of the final time.
    """
    times = np.asarray(times, dtype=float)
    unpumped = rates.replace(gamma_in=0.0)
    traj = evolve(build_liouvillian(chain, rates, include_hamiltonian), rho_init, times)
    traj0 = evolve(build_liouvillian(chain, unpumped, include_hamiltonian), rho_init, times)
    p, e = _flux_series(traj.states, rates, chain)
    _, e0 = _flux_series(traj0.states, rates, chain)
    chi = _efficiency(e, e0, p)

    chi_inf = math.nan
    if stationary:
        if chain.n_atoms > 7:
            raise ValueError("stationary efficiency needs N <= 7; pass stationary=False")
        chi_inf = stationary_efficiency(chain, rates, include_hamiltonian)
    k = int(np.searchsorted(times, 0.8 * times[-1]))
    converged = bool(abs(chi[-1] - chi[min(k, len(chi) - 1)]) < CONVERGENCE_TOL)
    return EfficiencyTrace(times, p, e, e0, chi, chi_inf, converged)


@dataclass(frozen=True)
class ScanBase:
    """Everything held fixed during a scan.

    ``gamma12_ratio`` and ``phi`` scans use the two-atom quadrature model,
    ``chain_step`` and ``n_atoms`` scans use the surface-plasmon chain model.
    """

    mode: str = "uni"
    n_atoms: int = 2
    step: float = 0.6
    gamma_in: float = DEFAULT_DRIVE
    gamma_out: float = DEFAULT_DRIVE
    quadrature: QuadratureModel = field(default_factory=lambda: QuadratureModel(X=1.0))
    spp: SppChainModel = field(default_factory=SppChainModel)
    include_hamiltonian: bool = True


def scan_point_rates(parameter: str, value, base: ScanBase) -> tuple[ChainSpec, RateSet]:
    """Chain and environment for one grid point.

    For ``gamma12_ratio`` the reciprocal set has ``X = ratio * gamma_local``
    with ``phi`` from the base; the unidirectional branch is obtained from it
    by :func:`unidirectionalize_two_atom`, so both share one axis.
    """
    drive = dict(gamma_in=base.gamma_in, gamma_out=base.gamma_out)
    if parameter == "gamma12_ratio":
        q = replace(base.quadrature, X=float(value) * base.quadrature.gamma_local)
        rec = quadrature_rate_set(q, "rec", **drive)
        rates = unidirectionalize_two_atom(rec) if base.mode == "uni" else rec
        return ChainSpec(2), rates
    if parameter == "phi":
        q = replace(base.quadrature, phi=float(value))
        return ChainSpec(2), quadrature_rate_set(q, base.mode, **drive)
    if parameter == "chain_step":
        chain = ChainSpec(base.n_atoms, step=float(value))
        return chain, spp_chain_rate_set(chain, base.spp, base.mode, **drive)
    if parameter == "n_atoms":
        if float(value) != int(value):
            raise ValueError(f"n_atoms grid values must be integers, got {value!r}")
        chain = ChainSpec(int(value), step=base.step)
        return chain, spp_chain_rate_set(chain, base.spp, base.mode, **drive)
    raise ValueError(f"unknown scan parameter {parameter!r}; expected one of {SCAN_PARAMETERS}")


@dataclass(frozen=True, eq=False)
class ScanResult:
    parameter: str
    values: np.ndarray
    chi_stationary: np.ndarray
    diagnostics: tuple
    rates: tuple = ()

    @property
    def warned(self) -> np.ndarray:
        return np.array([bool(d) for d in self.diagnostics])

    def __len__(self):
        return len(self.values)


def _scan_point(args):
    parameter, value, base = args
    diags = []
    rates = None
    try:
        chain, rates = scan_point_rates(parameter, value, base)
        diags.extend(str(d) for d in validate_rates(rates))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", PositivityWarning)
            chi = stationary_efficiency(chain, rates, base.include_hamiltonian)
        diags.extend(f"positivity: {w.message}" for w in caught
                     if issubclass(w.category, PositivityWarning))
        if not -1e-9 <= chi <= 1 + 1e-9:
            diags.append(f"chi_out_of_range: {chi:.6g} outside [0, 1]")
    except Exception as exc:  # recorded per point, the scan goes on
        chi = math.nan
        diags.append(f"failed: {type(exc).__name__}: {exc}")
    return chi, tuple(diags), rates


def scan(parameter: str, grid, base: ScanBase | None = None,
         workers: int | None = None) -> ScanResult:
    """Stationary efficiency over ``grid`` for one parameter.

    Points are independent; with ``workers > 1`` they run in a process pool.
    Results are always ordered by grid index.
    """
    if parameter not in SCAN_PARAMETERS:
        raise ValueError(f"unknown scan parameter {parameter!r}; expected one of {SCAN_PARAMETERS}")
    base = ScanBase() if base is None else base
    values = np.asarray(list(grid), dtype=float)
    if values.size == 0:
        raise ValueError("scan grid is empty")
    jobs = [(parameter, v, base) for v in values]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_scan_point, jobs))
    else:
        points = [_scan_point(job) for job in jobs]
    chi = np.array([p[0] for p in points], dtype=float)
    return ScanResult(parameter, values, chi,
                      tuple(p[1] for p in points), tuple(p[2] for p in points))
