"""Spin operator algebra, lab-frame Hamiltonians and Boltzmann states.

Hamiltonians are returned in angular-frequency units (rad/s), so the
propagator is simply ``exp(-1j * H * t)``. Basis ordering is the Kronecker
product of the species in the order given, each running m = j, j-1, ..., -j.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

from . import constants as C

DEFAULT_MAX_DIM = 64
HERMITIAN_RTOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_FLOOR = -1e-10


class SpinOps(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    plus: np.ndarray
    minus: np.ndarray


def _check_half_integer(j: float) -> Fraction:
    two_j = 2 * Fraction(j).limit_denominator(8)
    if two_j.denominator != 1 or two_j < 1 or abs(float(two_j) - 2 * j) > 1e-12:
        raise ValueError(f"spin quantum number must be a positive half-integer, got {j!r}")
    return two_j / 2


def spin_operators(j: float) -> SpinOps:
    """Angular momentum matrices for quantum number ``j`` (hbar = 1)."""
    jj = float(_check_half_integer(j))
    m = jj - np.arange(int(round(2 * jj)) + 1)
    jz = np.diag(m).astype(complex)
    # <m+1|J+|m> = sqrt(j(j+1) - m(m+1)), on the superdiagonal for descending m
    sup = np.sqrt(jj * (jj + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(sup, k=1).astype(complex)
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    return SpinOps(jx, jy, jz, jp, jm)


@dataclass(frozen=True)
class SpinSpecies:
    label: str
    kind: str  # "electron" | "nuclear"
    quantum_number: float = 0.5
    g_or_gamma: float = C.FREE_ELECTRON_G

    def __post_init__(self):
        if self.kind not in ("electron", "nuclear"):
            raise ValueError(f"species kind must be 'electron' or 'nuclear', got {self.kind!r}")
        _check_half_integer(self.quantum_number)

    @property
    def multiplicity(self) -> int:
        return int(round(2 * self.quantum_number)) + 1

    @property
    def lower_level_index(self) -> int:
        """Index (in m = j..-j order) of the energetically lower Zeeman level of a spin-1/2."""
        if self.kind == "electron":
            return 1 if self.g_or_gamma >= 0 else 0
        return 0 if self.g_or_gamma >= 0 else 1


def electron(label: str = "e", g: float = C.FREE_ELECTRON_G) -> SpinSpecies:
    return SpinSpecies(label, "electron", 0.5, g)


def nucleus(isotope_name: str, label: str | None = None) -> SpinSpecies:
    iso = C.isotope(isotope_name)
    return SpinSpecies(label or isotope_name, "nuclear", iso.spin, iso.gamma_hz_per_t)


@dataclass(frozen=True)
class SpinSystem:
    species: tuple[SpinSpecies, ...]
    couplings: tuple[tuple[int, int, float], ...] = ()
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "couplings", tuple(tuple(c) for c in self.couplings))
        if not self.species:
            raise ValueError("spin system needs at least one species")
        if self.dim > self.max_dim:
            raise ValueError(f"Hilbert dimension {self.dim} exceeds cap {self.max_dim}")
        n = len(self.species)
        for ie, jn, _a in self.couplings:
            if not (0 <= ie < n and 0 <= jn < n):
                raise ValueError(f"coupling ({ie}, {jn}) references a missing species")
            if self.species[ie].kind != "electron" or self.species[jn].kind != "nuclear":
                raise ValueError(f"coupling ({ie}, {jn}) must join an electron to a nucleus")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.multiplicity for s in self.species)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def indices(self, kind: str) -> list[int]:
        return [i for i, s in enumerate(self.species) if s.kind == kind]

    def operator(self, index: int, component: str) -> np.ndarray:
        """Single-species operator embedded in the product space."""
        ops = spin_operators(self.species[index].quantum_number)
        local = getattr(ops, component)
        mats = [local if i == index else np.eye(d) for i, d in enumerate(self.dims)]
        return reduce(np.kron, mats)

    def basis_labels(self) -> list[tuple[float, ...]]:
        ladders = [[s.quantum_number - k for k in range(s.multiplicity)] for s in self.species]
        return list(itertools.product(*ladders))


def electron_nuclear_pair(
    g: float, isotope_name: str, a_hz: float, max_dim: int = DEFAULT_MAX_DIM
) -> SpinSystem:
    """S=1/2 electron isotropically coupled to one nucleus."""
    return SpinSystem((electron("e", g), nucleus(isotope_name)), ((0, 1, a_hz),), max_dim)


def is_hermitian(op: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = max(np.abs(op).max(), np.finfo(float).tiny)
    return np.abs(op - op.conj().T).max() <= rtol * scale


def zeeman_frequency(species: SpinSpecies, b0: float) -> float:
    """Angular Zeeman frequency multiplying the species' z operator (rad/s)."""
    if species.kind == "electron":
        return species.g_or_gamma * C.BOHR_MAGNETON * b0 / C.HBAR
    return -2.0 * np.pi * species.g_or_gamma * b0


def lab_hamiltonian(system: SpinSystem, b0: float) -> np.ndarray:
    """Zeeman plus isotropic hyperfine Hamiltonian in rad/s.

    H = sum_e g muB B0 Sz / hbar - sum_n 2pi gamma_n B0 Iz + sum 2pi a S.I
    """
    if b0 < 0:
        raise ValueError("B0 must be non-negative")
    h = np.zeros((system.dim, system.dim), dtype=complex)
    for i, sp in enumerate(system.species):
        h += zeeman_frequency(sp, b0) * system.operator(i, "z")
    for ie, jn, a in system.couplings:
        w = 2.0 * np.pi * a
        for comp in ("x", "y", "z"):
            h += w * system.operator(ie, comp) @ system.operator(jn, comp)
    return 0.5 * (h + h.conj().T)


@dataclass(frozen=True)
class DensityState:
    matrix: np.ndarray
    system: SpinSystem | None = field(default=None, compare=False)

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        if self.system is not None and self.system.dim != rho.shape[0]:
            raise ValueError("density matrix size does not match the spin system")
        if not is_hermitian(rho):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
        if np.linalg.eigvalsh(rho).min() < EIGEN_FLOOR:
            raise ValueError("density matrix has negative eigenvalues")
        object.__setattr__(self, "matrix", rho)

    @property
    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def expectation(self, op: np.ndarray) -> float:
        return float(np.trace(self.matrix @ op).real)

    def reduced(self, index: int) -> np.ndarray:
        """Partial trace onto one species."""
        if self.system is None:
            raise ValueError("reduced state needs the spin system")
        dims = self.system.dims
        n = len(dims)
        t = self.matrix.reshape(dims + dims)
        keep_in = "".join(chr(97 + i) for i in range(n))
        keep_out = "".join(chr(97 + n + i) if i == index else chr(97 + i) for i in range(n))
        spec = f"{keep_in}{keep_out}->{chr(97 + index)}{chr(97 + n + index)}"
        return np.einsum(spec, t)


def thermal_state(h: np.ndarray, temperature: float, system: SpinSystem | None = None) -> DensityState:
    """Boltzmann state exp(-hbar H / kT) / Z, by Hermitian eigendecomposition."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    evals, vecs = np.linalg.eigh(h)
    beta = C.HBAR / (C.BOLTZMANN_K * temperature)
    w = np.exp(-beta * (evals - evals.min()))
    w /= w.sum()
    rho = (vecs * w) @ vecs.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return DensityState(rho, system)


def polarization(state: DensityState, index: int = 0) -> float:
    """(p_lower - p_upper) / (p_lower + p_upper) of a spin-1/2 species.

    +1 means the species sits fully in its energetically lower Zeeman level.
    Use :func:`normalized_moment` for species with j > 1/2.
    """
    sp = state.system.species[index] if state.system is not None else None
    if sp is None:
        raise ValueError("polarization needs a state carrying its spin system")
    if sp.multiplicity != 2:
        raise ValueError(f"polarization is defined for spin-1/2 only; species {sp.label!r} has j={sp.quantum_number}")
    p = np.real(np.diag(state.reduced(index)))
    lo = sp.lower_level_index
    return float((p[lo] - p[1 - lo]) / (p[0] + p[1]))


def normalized_moment(state: DensityState, index: int = 0) -> float:
    """<Jz>/j oriented so that +1 means fully in the lower Zeeman level (any j)."""
    sp = state.system.species[index]
    jz = np.diag(spin_operators(sp.quantum_number).z).real
    p = np.real(np.diag(state.reduced(index)))
    moment = float(p @ jz) / sp.quantum_number
    lower_is_positive_m = (sp.kind == "nuclear") == (sp.g_or_gamma >= 0)
    return moment if lower_is_positive_m else -moment


def two_level_polarization(nu: float, temperature: float) -> float:
    """Closed form tanh(h nu / 2kT) for an isolated spin-1/2."""
    return float(np.tanh(C.PLANCK_H * nu / (2.0 * C.BOLTZMANN_K * temperature)))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def block_structure_ok(h: np.ndarray, labels: Sequence[tuple[float, ...]]) -> bool:
    """True if H only couples basis states with equal total magnetic quantum number."""
    totals = np.array([sum(lab) for lab in labels])
    mask = np.abs(totals[:, None] - totals[None, :]) > 1e-9
    return bool(np.all(np.abs(h[mask]) == 0.0))
