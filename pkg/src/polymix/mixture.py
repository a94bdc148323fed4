"""Species and pair parameters, Lebesgue brackets, exponent admissibility.

Species are indexed 0..P-1 in code and 1..P in emitted tables/reports.
All containers are immutable after construction and the functions here
are pure, so everything can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid physical or model parameters."""


@dataclass(frozen=True)
class SpeciesParams:
    """One mixture component: molecular mass and internal-energy exponent."""

    mass: float
    alpha: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ConfigError(f"species mass must be > 0, got {self.mass}")
        if not self.alpha > -1:
            raise ConfigError(f"internal-energy exponent must be > -1, got {self.alpha}")


@dataclass(frozen=True)
class PairParams:
    """Derived two-species interaction parameters."""

    i: int
    j: int
    m_i: float
    m_j: float
    mu: float          # reduced mass m_i m_j / (m_i + m_j)
    s_bar: float       # min(m_i, m_j) / (m_i + m_j), in (0, 1/2]
    gamma: float       # energy-rate exponent, in [0, 2]
    alpha_i: float
    alpha_j: float
    total_mass: float  # sum of all species masses in the mixture


@dataclass(frozen=True)
class MixtureParams:
    """Full mixture: species list plus the symmetric rate matrix gamma."""

    species: tuple[SpeciesParams, ...]
    gamma: np.ndarray
    total_mass: float = field(init=False)
    gamma_bar: float = field(init=False)
    gamma_barbar: float = field(init=False)

    def __post_init__(self):
        P = len(self.species)
        if P < 1:
            raise ConfigError("mixture needs at least one species")
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (P, P):
            raise ConfigError(f"gamma matrix must be {P}x{P}, got {g.shape}")
        if not np.array_equal(g, g.T):
            raise ConfigError("gamma matrix must be symmetric")
        if np.any(g < 0) or np.any(g > 2):
            raise ConfigError("gamma rates must lie in [0, 2]")
        row_max = g.max(axis=1)
        if np.any(row_max <= 0):
            bad = int(np.argmax(row_max <= 0))
            raise ConfigError(f"species {bad + 1} has max_j gamma == 0; every species "
                              "must interact through at least one positive rate")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "total_mass", float(sum(s.mass for s in self.species)))
        object.__setattr__(self, "gamma_bar", float(row_max.min()))
        object.__setattr__(self, "gamma_barbar", float(row_max.max()))

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def masses(self) -> np.ndarray:
        return np.array([s.mass for s in self.species])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.species])


def make_mixture(masses: Sequence[float], alphas: Sequence[float],
                 gamma: np.ndarray | Sequence[Sequence[float]]) -> MixtureParams:
    if len(masses) != len(alphas):
        raise ConfigError("masses and alphas must have equal length")
    species = tuple(SpeciesParams(m, a) for m, a in zip(masses, alphas))
    return MixtureParams(species=species, gamma=np.asarray(gamma, dtype=float))


def pair_params(mixture: MixtureParams, i: int, j: int) -> PairParams:
    """Reduced mass, mass-ratio parameter and rate for the (i, j) pair."""
    P = mixture.n_species
    if not (0 <= i < P and 0 <= j < P):
        raise IndexError(f"species indices ({i}, {j}) out of range for P={P}")
    mi = mixture.species[i].mass
    mj = mixture.species[j].mass
    return PairParams(
        i=i,
        j=j,
        m_i=mi,
        m_j=mj,
        mu=mi * mj / (mi + mj),
        s_bar=min(mi, mj) / (mi + mj),
        gamma=float(mixture.gamma[i, j]),
        alpha_i=mixture.species[i].alpha,
        alpha_j=mixture.species[j].alpha,
        total_mass=mixture.total_mass,
    )


def bracket_sq(mixture: MixtureParams, i: int, v, I):
    """Squared Lebesgue bracket 1 + m_i|v|^2/(2m) + I/m (vectorized)."""
    v = np.asarray(v, dtype=float)
    I = np.asarray(I, dtype=float)
    if np.any(I < 0):
        raise ValueError("internal energy must be nonnegative")
    vsq = np.square(v).sum(axis=-1)
    m = mixture.total_mass
    return 1.0 + mixture.species[i].mass * vsq / (2.0 * m) + I / m


def bracket(mixture: MixtureParams, i: int, v, I):
    """Lebesgue bracket <v, I>_i = sqrt(1 + m_i|v|^2/(2m) + I/m), always >= 1."""
    return np.sqrt(bracket_sq(mixture, i, v, I))


@dataclass(frozen=True)
class AdmissibilityReport:
    """Closed-form integrability range for the exponent p (constant upper
    exchange bound only)."""

    admissible: bool
    p: float
    p_max: float          # exclusive upper bound; inf when unconstrained
    binding: str          # "velocity-energy", "internal-energy" or "none"

    @property
    def unbounded(self) -> bool:
        return np.isinf(self.p_max)


def admissible_exponents(pair: PairParams, alpha_i: float, alpha_j: float,
                         p: float) -> AdmissibilityReport:
    """Check (gamma/2 - alpha_i) p < 1 + gamma/2 and p (1 + alpha_i + alpha_j) > -1.

    Valid for a constant upper exchange bound; for general bounds use the
    numeric rho() divergence test instead.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    g = pair.gamma
    p_max = np.inf
    binding = "none"
    if alpha_i < g / 2:
        p_max = (1 + g / 2) / (g / 2 - alpha_i)
        binding = "velocity-energy"
    if alpha_i + alpha_j < -1:
        cand = -1.0 / (1 + alpha_i + alpha_j)
        if cand < p_max:
            p_max = cand
            binding = "internal-energy"
    ok = (g / 2 - alpha_i) * p < 1 + g / 2 and p * (1 + alpha_i + alpha_j) > -1
    return AdmissibilityReport(admissible=bool(ok), p=p, p_max=float(p_max),
                               binding=binding)


@dataclass(frozen=True)
class InitialDataReport:
    admissible: bool
    failures: tuple[str, ...]
    moment_order: float
    notes: tuple[str, ...] = ()


def validate_initial_data(mixture: MixtureParams, distributions) -> InitialDataReport:
    """Membership test for admissible initial data.

    Checks nonnegativity, strictly positive finite per-species mass, and a
    finite moment of order (2 + gamma_barbar - gamma_bar)^+.  For particle
    ensembles the moment finiteness is certified heuristically through
    stability under sample doubling.
    """
    failures: list[str] = []
    notes: list[str] = []
    order = max(0.0, 2.0 + mixture.gamma_barbar - mixture.gamma_bar)
    if len(distributions) != mixture.n_species:
        raise ConfigError("need one distribution per species")
    for i, d in enumerate(distributions):
        label = f"species {i + 1}"
        if hasattr(d, "particles"):  # ParticleEnsemble
            ens = d
            if np.any(ens.internal < 0):
                failures.append(f"{label}: negative internal energies")
            mass = ens.weight * ens.n_particles
            if not mass > 0:
                failures.append(f"{label}: mass must be strictly positive")
                continue
            br = bracket(mixture, i, ens.velocities, ens.internal)
            full = float(np.mean(br ** order) * mass)
            half = float(np.mean(br[: max(1, ens.n_particles // 2)] ** order) * mass)
            if not np.isfinite(full):
                failures.append(f"{label}: moment of order {order:g} not finite")
            elif abs(full - half) > 0.2 * abs(full) + 1e-12:
                failures.append(f"{label}: moment of order {order:g} unstable "
                                "under sample doubling")
            notes.append(f"{label}: moment finiteness certified by sample-doubling "
                         "stability (heuristic)")
        else:
            if getattr(d, "min_value", 0.0) < 0:
                failures.append(f"{label}: density takes negative values")
            mass = d.mass()
            if not mass > 0:
                failures.append(f"{label}: mass must be strictly positive")
                continue
            if not np.isfinite(mass):
                failures.append(f"{label}: mass not finite")
            mom = d.weighted_l1_quad(order)
            if not np.isfinite(mom):
                failures.append(f"{label}: moment of order {order:g} not finite")
    return InitialDataReport(admissible=not failures, failures=tuple(failures),
                             moment_order=order, notes=tuple(notes))
