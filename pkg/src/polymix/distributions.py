"""Analytic test densities on (v, I) with oracle norms, samplers and
histogram estimation for particle ensembles.

All densities are axisymmetric around an axis through the origin (bulk
velocities must be collinear with it), which reduces every norm,
moment and entropy integral to a smooth 3d tensor Gauss-Legendre
quadrature.  Samplers are deterministic under a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mixture import MixtureParams, bracket_sq
from .quadrature import MCEstimate


@lru_cache(maxsize=32)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _gl_on(a: float, b: float, n: int):
    x, w = _gl(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


class TestDistribution:
    """Base for analytic densities; subclasses implement the hooks below."""

    mixture: MixtureParams
    species: int

    # -- hooks -------------------------------------------------------------
    def evaluate(self, v, I):
        raise NotImplementedError

    def mass(self) -> float:
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def _radial_profile(self):
        """(s_max, I_max, center_speed) quadrature box parameters; the
        density must be negligible outside |v - c| <= s_max, I <= I_max."""
        raise NotImplementedError

    @property
    def min_value(self) -> float:
        return 0.0

    @property
    def axis_center(self) -> np.ndarray:
        return np.zeros(3)

    # -- quadrature oracles --------------------------------------------------
    def _grid(self, n_s=160, n_mu=64, n_i=160):
        """Spherical grid around axis_center: nodes (n, 3), I nodes, weights."""
        s_max, i_max, _ = self._radial_profile()
        c = self.axis_center
        cnorm = float(np.linalg.norm(c))
        e = c / cnorm if cnorm > 0 else np.array([0.0, 0.0, 1.0])
        s, ws = _gl_on(0.0, s_max, n_s)
        mu, wmu = _gl_on(-1.0, 1.0, n_mu)
        ii, wi = _gl_on(0.0, i_max, n_i)
        S, MU = np.meshgrid(s, mu, indexing="ij")
        WS, WMU = np.meshgrid(ws, wmu, indexing="ij")
        # v = c + s*omega, axisymmetric around e: |v|^2 = c^2 + 2 s mu c + s^2
        vsq = cnorm * cnorm + 2.0 * S * MU * cnorm + S * S
        w_angular = 2.0 * np.pi * S * S * WS * WMU
        return S, MU, vsq, w_angular, ii, wi, e, cnorm

    def _integrate(self, f_of_vsq_sI):
        """Integral of F(|v|^2, s, I) against dv dI over the quadrature box."""
        S, MU, vsq, w_ang, ii, wi, e, cnorm = self._grid()
        total = 0.0
        for Ival, wI in zip(ii, wi):
            total += wI * float(np.sum(w_ang * f_of_vsq_sI(vsq, S, MU, Ival)))
        return total

    def _density_on(self, S, MU, Ival):
        """Density evaluated on the spherical grid (hook for subclasses that
        are functions of the distance s to axis_center only)."""
        raise NotImplementedError

    def _bracket_coeffs(self, bracket_species: int | None):
        sp = self.species if bracket_species is None else bracket_species
        a = self.mixture.species[sp].mass / (2.0 * self.mixture.total_mass)
        b = 1.0 / self.mixture.total_mass
        return a, b

    def weighted_l1_quad(self, k: float, bracket_species: int | None = None) -> float:
        """Quadrature value of int f <v,I>^k dv dI; the bracket defaults to
        the distribution's own species."""
        a, b = self._bracket_coeffs(bracket_species)
        return self._integrate(
            lambda vsq, S, MU, I: self._density_on(S, MU, I)
            * (1.0 + a * vsq + b * I) ** (k / 2.0))

    def weighted_lp_quad(self, p: float, k: float,
                         bracket_species: int | None = None) -> float:
        """Quadrature value of ( int (f <v,I>^k)^p dv dI )^(1/p)."""
        a, b = self._bracket_coeffs(bracket_species)
        val = self._integrate(
            lambda vsq, S, MU, I: self._density_on(S, MU, I) ** p
            * (1.0 + a * vsq + b * I) ** (k * p / 2.0))
        return val ** (1.0 / p)

    def entropy_quad(self) -> float:
        """Quadrature value of H[f] = int f |log f|."""
        def integrand(vsq, S, MU, I):
            f = self._density_on(S, MU, I)
            out = np.zeros_like(f)
            pos = f > 0
            out[pos] = f[pos] * np.abs(np.log(f[pos]))
            return out
        return self._integrate(integrand)

    def signed_entropy_quad(self) -> float:
        """Quadrature value of int f log f (the physical entropy functional)."""
        def integrand(vsq, S, MU, I):
            f = self._density_on(S, MU, I)
            out = np.zeros_like(f)
            pos = f > 0
            out[pos] = f[pos] * np.log(f[pos])
            return out
        return self._integrate(integrand)


@dataclass
class Maxwellian(TestDistribution):
    """Equilibrium-shaped density
    n (m/(2 pi T))^{3/2} e^{-m|v-u0|^2/(2T)} I^alpha e^{-I/T} / (Gamma(alpha+1) T^(alpha+1)).

    The internal-energy normalization is the standard polytropic one.
    """

    mixture: MixtureParams
    species: int
    density: float = 1.0
    bulk: np.ndarray = field(default_factory=lambda: np.zeros(3))
    temperature: float = 1.0

    def __post_init__(self):
        self.bulk = np.asarray(self.bulk, dtype=float)
        if self.density < 0 or self.temperature <= 0:
            raise ValueError("need density >= 0 and temperature > 0")
        sp = self.mixture.species[self.species]
        self._m = sp.mass
        self._alpha = sp.alpha
        self._vel_norm = (self._m / (2.0 * np.pi * self.temperature)) ** 1.5
        self._int_norm = 1.0 / (math.gamma(self._alpha + 1.0)
                                * self.temperature ** (self._alpha + 1.0))

    @property
    def axis_center(self) -> np.ndarray:
        return self.bulk

    def _radial_profile(self):
        sig = math.sqrt(self.temperature / self._m)
        return 14.0 * sig, 45.0 * self.temperature * max(1.0, self._alpha + 1.0), 0.0

    def _internal_part(self, I):
        I = np.asarray(I, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            part = np.where(I > 0, I ** self._alpha, 1.0 if self._alpha == 0 else 0.0)
        return self._int_norm * part * np.exp(-I / self.temperature)

    def evaluate(self, v, I):
        v = np.asarray(v, float)
        I = np.asarray(I, float)
        if np.any(I < 0):
            raise ValueError("internal energy must be nonnegative")
        dv = v - self.bulk
        vsq = np.square(dv).sum(axis=-1)
        return (self.density * self._vel_norm
                * np.exp(-self._m * vsq / (2.0 * self.temperature))
                * self._internal_part(I))

    def _density_on(self, S, MU, Ival):
        return (self.density * self._vel_norm
                * np.exp(-self._m * S * S / (2.0 * self.temperature))
                * self._internal_part(Ival))

    def radial_density(self, t, I):
        """Density as a function of the distance t = |v - bulk| and I."""
        return (self.density * self._vel_norm
                * np.exp(-self._m * np.asarray(t, float) ** 2
                         / (2.0 * self.temperature))
                * self._internal_part(I))

    def mass(self) -> float:
        return self.density

    def sample(self, n: int, rng: np.random.Generator):
        v = self.bulk + rng.normal(0.0, math.sqrt(self.temperature / self._m), (n, 3))
        I = rng.gamma(self._alpha + 1.0, self.temperature, n)
        return v, I


@dataclass
class CompactBump(TestDistribution):
    """Constant height on {|v - center| <= radius} x [0, radius]."""

    mixture: MixtureParams
    species: int
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 1.0
    height: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def axis_center(self) -> np.ndarray:
        return self.center

    @property
    def min_value(self) -> float:
        return min(0.0, self.height)

    @property
    def support_measure(self) -> float:
        return 4.0 * np.pi / 3.0 * self.radius ** 4

    def _radial_profile(self):
        return self.radius, self.radius, 0.0

    def evaluate(self, v, I):
        v = np.asarray(v, float)
        I = np.asarray(I, float)
        if np.any(I < 0):
            raise ValueError("internal energy must be nonnegative")
        dv = v - self.center
        inside = (np.square(dv).sum(axis=-1) <= self.radius ** 2) & (I <= self.radius)
        return np.where(inside, self.height, 0.0)

    def _density_on(self, S, MU, Ival):
        inside = (S <= self.radius) & (Ival <= self.radius)
        return np.where(inside, self.height, 0.0)

    def radial_density(self, t, I):
        inside = (np.asarray(t, float) <= self.radius) & (np.asarray(I, float) <= self.radius)
        return np.where(inside, self.height, 0.0)

    def mass(self) -> float:
        return self.height * self.support_measure

    def sample(self, n: int, rng: np.random.Generator):
        if self.height <= 0:
            raise ValueError("cannot sample a nonpositive density")
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        s = self.radius * rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
        v = self.center + dirs * s[:, None]
        I = rng.uniform(0.0, self.radius, n)
        return v, I

    # exact closed forms used as independent cross-checks in tests
    def lp_norm_unweighted(self, p: float) -> float:
        return self.height * self.support_measure ** (1.0 / p)

    def entropy_exact(self) -> float:
        h = self.height
        return 0.0 if h <= 0 else self.support_measure * h * abs(math.log(h))


@dataclass
class MixtureOfTwo(TestDistribution):
    """Weighted sum of two Maxwellians of the same species.

    Bulk velocities must be collinear with a common axis through the
    origin so the quadrature oracles stay axisymmetric.
    """

    first: Maxwellian
    second: Maxwellian
    w_first: float = 0.5
    w_second: float = 0.5

    def __post_init__(self):
        if self.first.species != self.second.species:
            raise ValueError("components must describe the same species")
        if self.w_first < 0 or self.w_second < 0:
            raise ValueError("weights must be nonnegative")
        cross = np.cross(self.first.bulk, self.second.bulk)
        if np.linalg.norm(cross) > 1e-12:
            raise ValueError("component bulk velocities must be collinear")
        self.mixture = self.first.mixture
        self.species = self.first.species

    @property
    def axis_center(self) -> np.ndarray:
        return np.zeros(3)

    def _radial_profile(self):
        s1, i1, _ = self.first._radial_profile()
        s2, i2, _ = self.second._radial_profile()
        reach = max(s1 + np.linalg.norm(self.first.bulk),
                    s2 + np.linalg.norm(self.second.bulk))
        return reach, max(i1, i2), 0.0

    def evaluate(self, v, I):
        return (self.w_first * self.first.evaluate(v, I)
                + self.w_second * self.second.evaluate(v, I))

    def _axis_dir(self) -> np.ndarray:
        for comp in (self.first, self.second):
            n = float(np.linalg.norm(comp.bulk))
            if n > 0:
                return comp.bulk / n
        return np.array([0.0, 0.0, 1.0])

    def _density_on(self, S, MU, Ival):
        # grid is centered at the origin with polar axis along the common
        # bulk line; v = s*omega, so |v - bulk|^2 = s^2 - 2 s mu (bulk.e) + bulk^2
        e = self._axis_dir()
        out = 0.0
        for w, comp in ((self.w_first, self.first), (self.w_second, self.second)):
            proj = float(comp.bulk @ e)
            dist_sq = S * S - 2.0 * S * MU * proj + proj * proj
            out = out + (w * comp.density * comp._vel_norm
                         * np.exp(-comp._m * dist_sq / (2.0 * comp.temperature))
                         * comp._internal_part(Ival))
        return out

    def mass(self) -> float:
        return self.w_first * self.first.mass() + self.w_second * self.second.mass()

    def sample(self, n: int, rng: np.random.Generator):
        m1 = self.w_first * self.first.mass()
        m2 = self.w_second * self.second.mass()
        pick = rng.uniform(0.0, 1.0, n) < m1 / (m1 + m2)
        v1, I1 = self.first.sample(n, rng)
        v2, I2 = self.second.sample(n, rng)
        v = np.where(pick[:, None], v1, v2)
        I = np.where(pick, I1, I2)
        return v, I


# ---------------------------------------------------------------------------
# particle ensembles and histogram density estimation


@dataclass
class ParticleEnsemble:
    species: int
    velocities: np.ndarray  # (n, 3)
    internal: np.ndarray    # (n,)
    weight: float           # equal weight per particle

    def __post_init__(self):
        self.velocities = np.ascontiguousarray(self.velocities, dtype=float)
        self.internal = np.ascontiguousarray(self.internal, dtype=float)
        if self.weight <= 0:
            raise ValueError("particle weight must be positive")
        if np.any(self.internal < 0):
            raise ValueError("internal energies must be nonnegative")

    @property
    def n_particles(self) -> int:
        return self.internal.shape[0]

    @property
    def total_weight(self) -> float:
        return self.weight * self.n_particles


def sample(d: TestDistribution, n: int, seed: int) -> ParticleEnsemble:
    """Draw an ensemble of n equal-weight particles from d (deterministic
    under the seed); total ensemble weight equals the analytic mass."""
    if n <= 0:
        raise ValueError("need at least one particle")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    v, I = d.sample(n, rng)
    return ParticleEnsemble(species=d.species, velocities=v, internal=I,
                            weight=d.mass() / n)


@dataclass(frozen=True)
class HistogramGrid:
    v_extent: float      # velocity box [-v_extent, v_extent]^3
    i_max: float
    n_v: int = 24
    n_i: int = 24

    def __post_init__(self):
        if self.n_v < 1 or self.n_i < 1 or self.v_extent <= 0 or self.i_max <= 0:
            raise ValueError("histogram grid must be nonempty with positive extents")

    @property
    def bin_volume(self) -> float:
        return (2.0 * self.v_extent / self.n_v) ** 3 * (self.i_max / self.n_i)

    def edges(self):
        ev = np.linspace(-self.v_extent, self.v_extent, self.n_v + 1)
        ei = np.linspace(0.0, self.i_max, self.n_i + 1)
        return ev, ei

    def centers(self):
        ev, ei = self.edges()
        return 0.5 * (ev[:-1] + ev[1:]), 0.5 * (ei[:-1] + ei[1:])


def default_grid(temperature_max: float, mass_min: float,
                 n_v: int = 24, n_i: int = 24) -> HistogramGrid:
    return HistogramGrid(v_extent=6.0 * math.sqrt(temperature_max / mass_min),
                         i_max=30.0 * temperature_max, n_v=n_v, n_i=n_i)


@dataclass
class HistogramDensity:
    grid: HistogramGrid
    counts: np.ndarray      # (n_v, n_v, n_v, n_i) raw particle counts
    weight: float           # per-particle weight
    clipped_weight: float

    @property
    def total_weight(self) -> float:
        return float(self.counts.sum()) * self.weight

    def density(self) -> np.ndarray:
        return self.counts * (self.weight / self.grid.bin_volume)


def histogram(ens: ParticleEnsemble, grid: HistogramGrid,
              clip_tolerance: float = 1e-6) -> HistogramDensity:
    """Bin an ensemble onto the uniform grid.

    Raises if the clipped (outside-box) weight exceeds clip_tolerance of
    the total, so that norms computed from the histogram are trustworthy.
    """
    ev, ei = grid.edges()
    pts = np.column_stack([ens.velocities, ens.internal])
    counts, _ = np.histogramdd(pts, bins=(ev, ev, ev, ei))
    n_in = counts.sum()
    clipped = (ens.n_particles - n_in) * ens.weight
    if clipped > clip_tolerance * ens.total_weight:
        raise ValueError(f"clipped mass {clipped:.3e} exceeds "
                         f"{clip_tolerance:.1e} of total {ens.total_weight:.3e}; "
                         "enlarge the histogram box")
    return HistogramDensity(grid=grid, counts=counts, weight=ens.weight,
                            clipped_weight=clipped)


def _bracket_sq_centers(mixture: MixtureParams, species: int, grid: HistogramGrid):
    cv, ci = grid.centers()
    X, Y, Z = np.meshgrid(cv, cv, cv, indexing="ij")
    vsq = X * X + Y * Y + Z * Z
    a = mixture.species[species].mass / (2.0 * mixture.total_mass)
    b = 1.0 / mixture.total_mass
    return 1.0 + a * vsq[..., None] + b * ci[None, None, None, :]


def histogram_lp(hist: HistogramDensity, mixture: MixtureParams, species: int,
                 p: float, k: float) -> float:
    """Exact L^p_{i,k} norm of the piecewise-constant histogram density,
    brackets evaluated at bin centers."""
    if p < 1:
        raise ValueError("p must be >= 1")
    f = hist.density()
    wsq = _bracket_sq_centers(mixture, species, hist.grid)
    val = np.sum((f * wsq ** (k / 2.0)) ** p) * hist.grid.bin_volume
    return float(val ** (1.0 / p))


def histogram_entropy(hist: HistogramDensity) -> float:
    """Sum of f log f over occupied bins times the bin volume."""
    f = hist.density()
    pos = f > 0
    return float(np.sum(f[pos] * np.log(f[pos])) * hist.grid.bin_volume)


def histogram_Lp(ens: ParticleEnsemble, grid: HistogramGrid, mixture: MixtureParams,
                 p: float, k: float) -> float:
    """Convenience: bin the ensemble and take the step-function norm."""
    return histogram_lp(histogram(ens, grid), mixture, ens.species, p, k)


# ---------------------------------------------------------------------------
# spec'd operation wrappers


def evaluate(d: TestDistribution, v, I):
    return d.evaluate(v, I)


def weighted_L1(d: TestDistribution, k: float, n_samples: int = 200_000,
                seed: int = 0, stderr_limit: float | None = None) -> MCEstimate:
    """Monte Carlo  int f <v,I>_i^k  with importance sampling from f itself."""
    if k < 0:
        raise ValueError("moment order k must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    v, I = d.sample(n_samples, rng)
    w = bracket_sq(d.mixture, d.species, v, I) ** (k / 2.0)
    m = d.mass()
    est = MCEstimate(value=m * float(np.mean(w)),
                     stderr=m * float(np.std(w) / math.sqrt(n_samples)),
                     n_samples=n_samples, seed=seed)
    if stderr_limit is not None and est.stderr > stderr_limit:
        raise ArithmeticError(f"estimate did not converge: stderr {est.stderr:.3e} "
                              f"> {stderr_limit:.3e} after {n_samples} samples")
    return est


def weighted_Lp(d: TestDistribution, p: float, k: float) -> MCEstimate:
    """Weighted L^p norm by quadrature (zero statistical error)."""
    if p <= 1:
        raise ValueError("use weighted_L1 for p = 1")
    return MCEstimate(value=d.weighted_lp_quad(p, k), stderr=0.0, n_samples=0, seed=0)


def entropy_H(d: TestDistribution, n_samples: int = 200_000, seed: int = 0) -> MCEstimate:
    """Monte Carlo H[f] = int f |log f| sampled from f itself."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    v, I = d.sample(n_samples, rng)
    vals = d.evaluate(v, I)
    # samples land in the support, where f > 0
    g = np.abs(np.log(vals))
    m = d.mass()
    return MCEstimate(value=m * float(np.mean(g)),
                      stderr=m * float(np.std(g) / math.sqrt(n_samples)),
                      n_samples=n_samples, seed=seed)


def hat_c(mixture: MixtureParams, j: int) -> float:
    """Adopted closed form pi^2/2 * m^(5/2) / m_j^(3/2) for the L1 mass of
    the inverse sixth bracket power."""
    return (np.pi ** 2 / 2.0 * mixture.total_mass ** 2.5
            / mixture.species[j].mass ** 1.5)


def entropy_budget(distributions: list[TestDistribution]) -> float:
    """Entropy bound  H(F0) + 2 P^(1/4) max_i hat_c_i^(1/4) ||F0||_{L1_2}^(3/4)
    assembled from quadrature values of the signed entropy and the second
    moment."""
    P = len(distributions)
    if P == 0:
        raise ValueError("need at least one species")
    mixture = distributions[0].mixture
    signed = sum(d.signed_entropy_quad() for d in distributions)
    l12 = sum(d.weighted_l1_quad(2.0) for d in distributions)
    c = max(hat_c(mixture, d.species) for d in distributions)
    return signed + 2.0 * P ** 0.25 * c ** 0.25 * l12 ** 0.75
