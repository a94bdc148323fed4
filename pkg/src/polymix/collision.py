"""Parametrized binary collision map, its inverse structure and Jacobians.

The map sends a 12-dimensional configuration
(v, v*, I, I*, sigma, r, R) to the post-collisional one
(v', v'*, I', I'*, sigma', r', R').  It is an involution; momentum and
total (kinetic + internal) energy are conserved exactly up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .mixture import PairParams

UNIT_TOL = 1e-12


class DegenerateCollisionError(ValueError):
    """Zero total energy: the collision map is undefined."""


class SingularJacobianError(ValueError):
    """R' in {0, 1} or R == 0: the transform Jacobian is 0 or infinite."""


@dataclass(frozen=True)
class ParticleState:
    v: np.ndarray  # 3-vector velocity
    I: float       # nonnegative internal energy

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (3,):
            raise ValueError("velocity must be a 3-vector")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        if self.I < 0:
            raise ValueError("internal energy must be nonnegative")


@dataclass(frozen=True)
class CollisionGeometry:
    V: np.ndarray  # center-of-mass velocity
    u: np.ndarray  # relative velocity v - v*
    E: float       # total pair energy mu|u|^2/2 + I + I*


@dataclass(frozen=True)
class CollisionConfiguration:
    state_i: ParticleState
    state_j: ParticleState
    sigma: np.ndarray
    r: float
    R: float

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=float)
        norm = float(np.sqrt((sig * sig).sum()))
        if norm == 0.0 or abs(norm - 1.0) > 0.1:
            raise ValueError(f"sigma must be a unit vector, |sigma| = {norm}")
        if abs(norm - 1.0) > UNIT_TOL:
            sig = sig / norm
        sig.setflags(write=False)
        object.__setattr__(self, "sigma", sig)
        if not 0.0 <= self.r <= 1.0 or not 0.0 <= self.R <= 1.0:
            raise ValueError("energy exchange variables r, R must lie in [0, 1]")


@dataclass(frozen=True)
class CollisionImage:
    state_i_prime: ParticleState
    state_j_prime: ParticleState
    sigma_prime: np.ndarray
    r_prime: float
    R_prime: float
    degenerate_sigma: bool = False  # |u| == 0: sigma' := sigma convention
    degenerate_r: bool = False      # I + I* == 0: r' := 1/2 convention

    def as_configuration(self) -> CollisionConfiguration:
        return CollisionConfiguration(self.state_i_prime, self.state_j_prime,
                                      self.sigma_prime, self.r_prime, self.R_prime)


def geometry(pair: PairParams, a: ParticleState, b: ParticleState) -> CollisionGeometry:
    """Center-of-mass velocity, relative velocity and total pair energy."""
    M = pair.m_i + pair.m_j
    V = (pair.m_i * a.v + pair.m_j * b.v) / M
    u = a.v - b.v
    E = 0.5 * pair.mu * float(u @ u) + a.I + b.I
    return CollisionGeometry(V=V, u=u, E=E)


def transform(pair: PairParams, c: CollisionConfiguration) -> CollisionImage:
    """Apply the collision map to one configuration.

    Raises DegenerateCollisionError when the total energy vanishes.  On the
    measure-zero sets |u| == 0 and I + I* == 0 the undefined primed
    parameters take the flagged conventions sigma' := sigma, r' := 1/2.
    """
    vi = c.state_i.v[None, :]
    vj = c.state_j.v[None, :]
    Ii = np.array([c.state_i.I])
    Ij = np.array([c.state_j.I])
    sig = c.sigma[None, :]
    r = np.array([c.r])
    R = np.array([c.R])
    v1p, v2p, I1p, I2p, sigp, rp, Rp, flags = _kernels.transform_batch(
        vi, vj, Ii, Ij, sig, r, R, pair.m_i, pair.m_j)
    if flags[0] == _kernels.FLAG_ZERO_ENERGY:
        raise DegenerateCollisionError("total pair energy is zero, sigma' undefined")
    return CollisionImage(
        state_i_prime=ParticleState(v1p[0], float(I1p[0])),
        state_j_prime=ParticleState(v2p[0], float(I2p[0])),
        sigma_prime=sigp[0],
        r_prime=float(rp[0]),
        R_prime=float(Rp[0]),
        degenerate_sigma=flags[0] == _kernels.FLAG_ZERO_U,
        degenerate_r=flags[0] == _kernels.FLAG_ZERO_INTERNAL,
    )


def transform_batch(pair: PairParams, vi, vj, Ii, Ij, sigma, r, R):
    """Vectorized collision map over stacked configurations.

    Returns (v_i', v_j', I_i', I_j', sigma', r', R', flags); flags mark the
    degenerate null sets (see polymix._kernels).
    """
    return _kernels.transform_batch(np.asarray(vi, float), np.asarray(vj, float),
                                    np.asarray(Ii, float), np.asarray(Ij, float),
                                    np.asarray(sigma, float), np.asarray(r, float),
                                    np.asarray(R, float), pair.m_i, pair.m_j)


def primed_states_batch(pair: PairParams, vi, vj, Ii, Ij, sigma, r, R):
    """Post-collisional states only (no primed parameters); also returns
    the pair energy E and |u|^2, which samplers reuse."""
    return _kernels.primed_states(np.asarray(vi, float), np.asarray(vj, float),
                                  np.asarray(Ii, float), np.asarray(Ij, float),
                                  np.asarray(sigma, float), np.asarray(r, float),
                                  np.asarray(R, float), pair.m_i, pair.m_j)


def jacobian_T(pair: PairParams, c: CollisionConfiguration) -> float:
    """Jacobian (1-R) sqrt(R) / ((1-R') sqrt(R')) of the full collision map."""
    img = transform(pair, c)
    Rp = img.R_prime
    if Rp <= 0.0 or Rp >= 1.0:
        raise SingularJacobianError(f"R' = {Rp} lies on the singular set")
    if c.R <= 0.0:
        raise SingularJacobianError("R = 0 gives a zero Jacobian")
    return (1.0 - c.R) * np.sqrt(c.R) / ((1.0 - Rp) * np.sqrt(Rp))


def jacobian_fixed_params(pair: PairParams, r: float, R: float,
                          which: str = "first-state") -> float:
    """Jacobian of (v, I) -> (v', I') (or of (v*, I*) -> (v', I')) at fixed
    remaining variables: (m/(m_i+m_j))^3 r (1-R)."""
    if not 0.0 <= r <= 1.0 or not 0.0 <= R <= 1.0:
        raise ValueError("r, R must lie in [0, 1]")
    if r == 0.0 or R == 1.0:
        raise SingularJacobianError("zero Jacobian at r = 0 or R = 1")
    if which == "first-state":
        mass_ratio = pair.m_i / (pair.m_i + pair.m_j)
    elif which == "second-state":
        mass_ratio = pair.m_j / (pair.m_i + pair.m_j)
    else:
        raise ValueError("which must be 'first-state' or 'second-state'")
    return mass_ratio ** 3 * r * (1.0 - R)


def random_configurations(pair: PairParams, n: int, rng: np.random.Generator,
                          vel_scale: float = 1.0, energy_scale: float = 1.0):
    """Stacked random configurations for sweeps: Gaussian velocities,
    exponential internal energies, uniform sphere and exchange variables."""
    vi = rng.normal(0.0, vel_scale, (n, 3))
    vj = rng.normal(0.0, vel_scale, (n, 3))
    Ii = rng.exponential(energy_scale, n)
    Ij = rng.exponential(energy_scale, n)
    sig = rng.normal(size=(n, 3))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    r = rng.uniform(0.0, 1.0, n)
    R = rng.uniform(0.0, 1.0, n)
    return vi, vj, Ii, Ij, sig, r, R
