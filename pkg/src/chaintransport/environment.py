"""
Rate matrices describing the photonic environment of the chain.

A :class:`RateSet` carries the dissipative matrix ``gamma`` and the coherent
matrix ``g``. Entry ``[i, j]`` (0-based in arrays, 1-based in files and
messages) mediates propagation from upstream atom i to downstream atom j, so
a downstream-unidirectional environment is upper triangular.

Modes
-----
``"uni"``
    unidirectional, propagation towards increasing index (atom 1 is the most
    upstream atom): ``gamma[i, j] == g[i, j] == 0`` for ``i > j``.
``"uni_up"``
    unidirectional towards decreasing index, e.g. after reversing the bias.
``"rec"``
    reciprocal: ``gamma`` and ``g`` symmetric.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .operators import ChainSpec

__all__ = [
    "MODES",
    "ModeError",
    "RateTableError",
    "RateSet",
    "QuadratureModel",
    "SppChainModel",
    "Diagnostic",
    "quadrature_rate_set",
    "spp_chain_rate_set",
    "make_artificially_reciprocal",
    "unidirectionalize_two_atom",
    "reverse_bias",
    "validate_rates",
    "load_rate_table",
    "save_rate_table",
    "format_rate_table",
]

MODES = ("uni", "uni_up", "rec")


class ModeError(ValueError):
    """A transformation was applied to a RateSet of the wrong mode."""


class RateTableError(ValueError):
    """Malformed rate-table file. ``lineno`` is 1-based (0 when file-level)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno else ""
        super().__init__(prefix + message)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RateSet:
    """Environment of an N-atom chain in units of the atom-1 decay rate.

    ``gamma`` and ``g`` are frozen (read-only) copies. The constructor checks
    structure only; physical admissibility is reported by
    :func:`validate_rates`.
    """

    gamma: np.ndarray
    g: np.ndarray
    gamma_in: float = 0.0
    gamma_out: float = 0.0
    mode: str = "uni"

    def __post_init__(self):
        gamma = np.asarray(self.gamma)
        g = np.asarray(self.g)
        if np.iscomplexobj(gamma) or np.iscomplexobj(g):
            raise ValueError("rates must be real")
        gamma, g = _frozen(gamma), _frozen(g)
        if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1] or gamma.shape[0] < 1:
            raise ValueError(f"gamma must be a nonempty square matrix, got shape {gamma.shape}")
        if g.shape != gamma.shape:
            raise ValueError(f"g has shape {g.shape}, expected {gamma.shape}")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(g))):
            raise ValueError("rates must be finite")
        if np.any(np.diag(g) != 0):
            raise ValueError("coherent matrix g must have a zero diagonal")
        if np.any(np.diag(gamma) < 0):
            raise ValueError("local decay rates gamma[i, i] must be nonnegative")
        for name in ("gamma_in", "gamma_out"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a nonnegative real, got {value!r}")
            object.__setattr__(self, name, value)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "g", g)

    @property
    def n_atoms(self) -> int:
        return self.gamma.shape[0]

    def replace(self, **changes) -> "RateSet":
        fields = dict(gamma=self.gamma, g=self.g, gamma_in=self.gamma_in,
                      gamma_out=self.gamma_out, mode=self.mode)
        fields.update(changes)
        return RateSet(**fields)

    def scaled(self, factor: float) -> "RateSet":
        """All rates multiplied by a common positive factor."""
        if factor <= 0:
            raise ValueError("factor must be positive")
        return self.replace(gamma=factor * self.gamma, g=factor * self.g,
                            gamma_in=factor * self.gamma_in,
                            gamma_out=factor * self.gamma_out)

    def __eq__(self, other):
        if not isinstance(other, RateSet):
            return NotImplemented
        return (self.mode == other.mode
                and self.gamma_in == other.gamma_in
                and self.gamma_out == other.gamma_out
                and np.array_equal(self.gamma, other.gamma)
                and np.array_equal(self.g, other.g))

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "n_atoms": self.n_atoms,
            "mode": self.mode,
            "gamma_in": self.gamma_in,
            "gamma_out": self.gamma_out,
            "gamma": self.gamma.tolist(),
            "g": self.g.tolist(),
        }


@dataclass(frozen=True)
class QuadratureModel:
    """Two-atom coupling where ``g12 = X cos(phi) / 2`` and ``gamma12 = X sin(phi)``."""

    X: float
    phi: float = math.pi / 2
    gamma_local: float = 1.0

    def __post_init__(self):
        if not self.X >= 0:
            raise ValueError(f"coupling amplitude X must be >= 0, got {self.X!r}")
        if not self.gamma_local > 0:
            raise ValueError(f"gamma_local must be > 0, got {self.gamma_local!r}")


@dataclass(frozen=True)
class SppChainModel:
    """Surface-plasmon mediated coupling along a chain.

    The amplitude decays as ``gamma_local * exp(-d / decay_length)`` with
    separation ``d`` (units of the wavelength) and the phase advances as
    ``pi/2 + 2 pi k d``, so that ``gamma_ij -> gamma_local`` as ``d -> 0``.
    """

    gamma_local: float = 1.0
    decay_length: float = 5.0
    wavenumber: float = 1.0
    direction: str = "downstream"

    def __post_init__(self):
        if not self.gamma_local > 0:
            raise ValueError(f"gamma_local must be > 0, got {self.gamma_local!r}")
        if not self.decay_length > 0:
            raise ValueError(f"decay_length must be > 0, got {self.decay_length!r}")
        if not self.wavenumber >= 0:
            raise ValueError(f"wavenumber must be >= 0, got {self.wavenumber!r}")
        if self.direction not in ("downstream", "upstream"):
            raise ValueError(f"direction must be 'downstream' or 'upstream', got {self.direction!r}")

    def amplitude(self, d):
        return self.gamma_local * np.exp(-np.asarray(d, dtype=float) / self.decay_length)

    def couplings(self, d):
        """``(gamma_ij, g_ij)`` for separation ``d``.

        Uses ``sin(pi/2 + t) = cos(t)`` and ``cos(pi/2 + t) = -sin(t)`` so the
        zero-separation limit is exact.
        """
        d = np.asarray(d, dtype=float)
        X = self.amplitude(d)
        theta = 2 * np.pi * self.wavenumber * d
        return X * np.cos(theta), -0.5 * X * np.sin(theta)


def _check_transform_mode(mode: str) -> None:
    if mode not in ("uni", "rec"):
        raise ValueError(f"mode must be 'uni' or 'rec', got {mode!r}")


def quadrature_rate_set(model: QuadratureModel, mode: str = "uni",
                        gamma_in: float = 0.0, gamma_out: float = 0.0) -> RateSet:
    """Two-atom RateSet from the quadrature parametrization."""
    _check_transform_mode(mode)
    gamma12 = model.X * math.sin(model.phi)
    g12 = 0.5 * model.X * math.cos(model.phi)
    gamma = np.array([[model.gamma_local, gamma12], [0.0, model.gamma_local]])
    g = np.array([[0.0, g12], [0.0, 0.0]])
    if mode == "rec":
        gamma[1, 0] = gamma12
        g[1, 0] = g12
    return RateSet(gamma, g, gamma_in, gamma_out, mode)


def spp_chain_rate_set(chain: ChainSpec, model: SppChainModel, mode: str = "uni",
                       gamma_in: float = 0.0, gamma_out: float = 0.0) -> RateSet:
    """N-atom RateSet for atoms at ``x_m = (m - 1) * chain.step``.

    In ``"uni"`` mode only upstream-to-downstream pairs couple; with
    ``model.direction == "upstream"`` the roles are swapped and the result
    has mode ``"uni_up"``. In ``"rec"`` mode both directions carry the same
    rates and ``direction`` is irrelevant.
    """
    _check_transform_mode(mode)
    x = chain.positions()
    sep = np.abs(x[None, :] - x[:, None])
    gamma_c, g_c = model.couplings(sep)
    upper = np.triu(np.ones_like(sep, dtype=bool), k=1)
    gamma = np.where(upper, gamma_c, 0.0)
    g = np.where(upper, g_c, 0.0)
    if mode == "rec":
        gamma = gamma + gamma.T
        g = g + g.T
    elif model.direction == "upstream":
        gamma, g = gamma.T.copy(), g.T.copy()
        mode = "uni_up"
    np.fill_diagonal(gamma, model.gamma_local)
    return RateSet(gamma, g, gamma_in, gamma_out, mode)


def make_artificially_reciprocal(rates: RateSet) -> RateSet:
    """Symmetrize a downstream-unidirectional RateSet and double its local rates.

    Builds the reciprocal environment with the same coupling strengths, used
    as the fair comparison for a one-way environment.
    """
    if rates.mode != "uni":
        raise ModeError(f"artificial reciprocity needs a downstream-unidirectional set, got mode {rates.mode!r}")
    upper_gamma = np.triu(rates.gamma, k=1)
    upper_g = np.triu(rates.g, k=1)
    gamma = upper_gamma + upper_gamma.T + np.diag(2.0 * np.diag(rates.gamma))
    g = upper_g + upper_g.T
    return rates.replace(gamma=gamma, g=g, mode="rec")


def unidirectionalize_two_atom(rates: RateSet) -> RateSet:
    """Turn a reciprocal two-atom set into a one-way one.

    Drops the 2 -> 1 channel and halves the local decay rates.
    """
    if rates.n_atoms != 2:
        raise ValueError(f"two-atom recipe applied to an N={rates.n_atoms} RateSet")
    if rates.mode != "rec":
        raise ModeError(f"expected a reciprocal RateSet, got mode {rates.mode!r}")
    gamma = np.array(rates.gamma)
    g = np.array(rates.g)
    gamma[1, 0] = 0.0
    g[1, 0] = 0.0
    gamma[np.diag_indices(2)] *= 0.5
    return rates.replace(gamma=gamma, g=g, mode="uni")


def reverse_bias(rates: RateSet) -> RateSet:
    """Reverse the propagation direction of a unidirectional environment."""
    if rates.mode == "rec":
        raise ModeError("reversing the bias requires a unidirectional RateSet")
    flipped = "uni_up" if rates.mode == "uni" else "uni"
    return rates.replace(gamma=rates.gamma.T, g=rates.g.T, mode=flipped)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    entries: tuple = field(default=())

    def __str__(self):
        return f"{self.code}: {self.message}"


def validate_rates(rates: RateSet, mode: str | None = None, tol: float = 1e-12) -> list[Diagnostic]:
    """Check a RateSet against the admissibility rules of its mode.

    Reciprocal sets must have symmetric rates and a positive semidefinite
    dissipative matrix. Unidirectional sets must respect the directional zero
    pattern; positivity of ``gamma`` is not required there. Never mutates.
    """
    mode = rates.mode if mode is None else mode
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    out = []
    diag = np.diag(rates.gamma)
    bad = [i + 1 for i in np.flatnonzero(diag <= 0)]
    if bad:
        out.append(Diagnostic("nonpositive_decay",
                              f"local decay rate not positive for atoms {bad}",
                              tuple((i, i) for i in bad)))
    if mode == "rec":
        for name, m in (("gamma", rates.gamma), ("g", rates.g)):
            asym = np.argwhere(np.abs(m - m.T) > tol * max(1.0, np.max(np.abs(m))))
            pairs = tuple((int(i) + 1, int(j) + 1) for i, j in asym if i < j)
            if pairs:
                out.append(Diagnostic("not_symmetric", f"{name} is not symmetric at {list(pairs)}", pairs))
        sym = 0.5 * (rates.gamma + rates.gamma.T)
        min_eig = float(np.linalg.eigvalsh(sym)[0])
        scale = max(1.0, float(np.max(np.abs(sym))))
        if min_eig < -tol * scale:
            out.append(Diagnostic("not_psd",
                                  f"dissipative matrix is not positive semidefinite "
                                  f"(min eigenvalue {min_eig:.6g})"))
    else:
        n = rates.n_atoms
        lower = np.tril(np.ones((n, n), dtype=bool), k=-1)
        forbidden = lower if mode == "uni" else lower.T
        hits = np.argwhere(forbidden & ((rates.gamma != 0) | (rates.g != 0)))
        if len(hits):
            pairs = tuple((int(i) + 1, int(j) + 1) for i, j in hits)
            which = "downstream" if mode == "uni" else "upstream"
            out.append(Diagnostic("direction",
                                  f"nonzero rates against the {which} direction at {list(pairs)}",
                                  pairs))
    return out


_HEADER_RE = re.compile(r"^#\s*(.*)$")
_HEADER_KEYS = ("N", "mode", "gamma_in", "gamma_out")


def _parse_header(line: str) -> dict:
    m = _HEADER_RE.match(line.strip())
    if not m:
        raise RateTableError("missing '# N=... mode=... gamma_in=... gamma_out=...' header", 1)
    values = {}
    for token in m.group(1).split():
        if "=" not in token:
            raise RateTableError(f"malformed header token {token!r}", 1)
        key, value = token.split("=", 1)
        values[key] = value
    missing = [k for k in _HEADER_KEYS if k not in values]
    if missing:
        raise RateTableError(f"header lacks {', '.join(missing)}", 1)
    try:
        n = int(values["N"])
        gamma_in = float(values["gamma_in"])
        gamma_out = float(values["gamma_out"])
    except ValueError as exc:
        raise RateTableError(f"malformed header value ({exc})", 1) from None
    if n < 1:
        raise RateTableError(f"N must be >= 1, got {n}", 1)
    if values["mode"] not in MODES:
        raise RateTableError(f"mode must be one of {MODES}, got {values['mode']!r}", 1)
    if gamma_in < 0 or gamma_out < 0:
        raise RateTableError("drive rates must be nonnegative", 1)
    return {"N": n, "mode": values["mode"], "gamma_in": gamma_in, "gamma_out": gamma_out}


def load_rate_table(path) -> RateSet:
    """Read a RateSet from the CSV rate-table format.

    The first line is ``# N=<int> mode=<uni|uni_up|rec> gamma_in=<float>
    gamma_out=<float>``; every further nonblank line is ``i,j,gamma,g`` with
    1-based indices. All diagonal rows must be present (with ``g = 0``);
    absent off-diagonal rows mean zero.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise RateTableError("empty rate table")
    head = _parse_header(lines[0])
    n = head["N"]
    gamma = np.zeros((n, n))
    g = np.zeros((n, n))
    seen = set()
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        if len(row) != 4:
            raise RateTableError(f"expected 4 fields 'i,j,gamma,g', got {len(row)}", lineno)
        try:
            i, j = int(row[0]), int(row[1])
            gij, cij = float(row[2]), float(row[3])
        except ValueError:
            raise RateTableError(f"malformed row {','.join(row)!r}", lineno) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise RateTableError(f"index ({i},{j}) outside 1..{n} (N mismatch)", lineno)
        if not (math.isfinite(gij) and math.isfinite(cij)):
            raise RateTableError("non-finite rate", lineno)
        if (i, j) in seen:
            raise RateTableError(f"duplicate entry ({i},{j})", lineno)
        if i == j:
            if gij < 0:
                raise RateTableError(f"negative local decay rate gamma[{i},{i}] = {gij}", lineno)
            if cij != 0:
                raise RateTableError(f"diagonal entry ({i},{i}) must have g = 0", lineno)
        seen.add((i, j))
        gamma[i - 1, j - 1] = gij
        g[i - 1, j - 1] = cij
    missing = [k for k in range(1, n + 1) if (k, k) not in seen]
    if missing:
        raise RateTableError(f"missing diagonal entries for atoms {missing}")
    return RateSet(gamma, g, head["gamma_in"], head["gamma_out"], head["mode"])


def format_rate_table(rates: RateSet) -> str:
    """Serialize a RateSet; rows sorted by (i, j), zero off-diagonals omitted."""
    buf = io.StringIO()
    buf.write(f"# N={rates.n_atoms} mode={rates.mode} "
              f"gamma_in={rates.gamma_in!r} gamma_out={rates.gamma_out!r}\n")
    writer = csv.writer(buf, lineterminator="\n")
    n = rates.n_atoms
    for i in range(n):
        for j in range(n):
            gij = float(rates.gamma[i, j])
            cij = float(rates.g[i, j])
            if i != j and gij == 0 and cij == 0:
                continue
            writer.writerow([i + 1, j + 1, repr(gij), repr(cij)])
    return buf.getvalue()


def save_rate_table(rates: RateSet, path) -> None:
    Path(path).write_text(format_rate_table(rates), encoding="utf-8")
