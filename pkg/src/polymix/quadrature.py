"""Monte Carlo evaluation of the collision operator pieces.

Importance layout shared by all estimators:
  sigma   uniform on the sphere (weight 4*pi), angular part in the integrand
  (r, R)  Beta draws absorbing the exchange measure d_ij exactly; gain-side
          estimators absorb the primed internal-energy weight jointly with
          d_ij, which leaves a bounded integrand for every alpha > -1
  (v*,I*) from the partner distribution (loss side) or from an explicit
          proposal distribution (gain side)

Estimates are reproducible under a fixed seed and carry the sample
standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .collision import primed_states_batch
from .kernels import KernelSpec, DivergentIntegralError


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_samples: int
    seed: int
    n_discarded: int = 0

    def combined_stderr(self, other: "MCEstimate | float") -> float:
        o = other.stderr if isinstance(other, MCEstimate) else float(other)
        return math.hypot(self.stderr, o)

    def agrees_with(self, other: "MCEstimate | float", n_sigma: float = 3.0) -> bool:
        o_val = other.value if isinstance(other, MCEstimate) else float(other)
        err = self.combined_stderr(other if isinstance(other, MCEstimate) else 0.0)
        return abs(self.value - o_val) <= n_sigma * err


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 100_000
    seed: int = 0
    scheme: str = "from-distribution"  # or "uniform-box", "beta-exchange"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed))


def _sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.normal(size=(n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def draw_exchange(rng: np.random.Generator, n: int, alpha_i: float, alpha_j: float,
                  extra_r: float = 0.0, extra_R1: float = 0.0):
    """(r, R) draws from the Beta reference absorbing
    d_ij(r,R) r^{-extra_r} (1-R)^{-extra_R1}; returns (r, R, constant)."""
    a_r = alpha_i + 1.0 - extra_r
    b_r = alpha_j + 1.0
    a_R = 1.5
    b_R = alpha_i + alpha_j + 2.0 - extra_R1
    if a_r <= 0 or b_R <= 0:
        raise DivergentIntegralError("exchange reference measure diverges",
                                     "Beta parameters must be positive")
    r = rng.beta(a_r, b_r, n)
    R = rng.beta(a_R, b_R, n)
    const = float(special.beta(a_r, b_r) * special.beta(a_R, b_R))
    return r, R, const


def draw_exchange_gain(rng: np.random.Generator, n: int):
    """(r, R) draws for gain-side estimators: r uniform, R ~ Beta(3/2, 2).

    Together with the factor I^a_i I*^a_j E^{-(a_i+a_j)} kept in the
    integrand this absorbs d_ij * (I/I')^a_i (I*/I'*)^a_j exactly.
    """
    r = rng.uniform(0.0, 1.0, n)
    R = rng.beta(1.5, 2.0, n)
    return r, R, float(special.beta(1.5, 2.0))


def _angular_value(spec: KernelSpec, u, sigma, usq):
    with np.errstate(invalid="ignore"):
        safe = np.where(usq > 0, usq, 1.0)
        x = np.where(usq > 0.0, np.einsum("ij,ij->i", u, sigma) / np.sqrt(safe), 1.0)
    return spec.angular(x), x


def _mean_estimate(samples: np.ndarray, n: int, seed: int,
                   n_discarded: int = 0) -> MCEstimate:
    return MCEstimate(value=float(np.mean(samples)),
                      stderr=float(np.std(samples) / math.sqrt(len(samples))),
                      n_samples=n, seed=seed, n_discarded=n_discarded)


def _exchange_factor(spec: KernelSpec, which: str, r, R):
    if which == "model":
        return 1.0
    if which == "upper":
        return spec.upper(r, R)
    if which == "lower":
        return spec.lower(r, R)
    raise ValueError("which must be 'model', 'upper' or 'lower'")


# ---------------------------------------------------------------------------
# collision frequency (loss side)


def collision_frequency(spec: KernelSpec, g, v, I, cfg: SamplerConfig,
                        which: str = "model") -> MCEstimate:
    """nu[g](v, I): integral of g against the kernel over (v*, I*, sigma, r, R)."""
    rng = cfg.rng()
    n = cfg.n_samples
    vstar, Istar = g.sample(n, rng)
    sigma = _sphere(rng, n)
    r, R, c_rr = draw_exchange(rng, n, spec.alpha_i, spec.alpha_j)
    v0 = np.broadcast_to(np.asarray(v, float), (n, 3))
    u = v0 - vstar
    usq = np.einsum("ij,ij->i", u, u)
    E = 0.5 * spec.pair.mu * usq + float(I) + Istar
    bval, _ = _angular_value(spec, u, sigma, usq)
    w = (g.mass() * 4.0 * np.pi * c_rr * bval * spec.energy_factor(E)
         * _exchange_factor(spec, which, r, R))
    return _mean_estimate(w, n, cfg.seed)


def collision_frequency_quad(spec: KernelSpec, g, v, I, which: str = "model",
                             n_nodes: int = 64) -> float:
    """Deterministic oracle for nu[g](v, I).

    The sigma and (r, R) integrals factorize into closed-form masses; the
    remaining (v*, I*) integral runs on a tensor Gauss grid in spherical
    coordinates around the probe velocity.  Requires g to be radial around
    its own center (Maxwellian or bump).
    """
    from .kernels import exchange_integral
    from .distributions import _gl_on

    if which == "model":
        exch = spec.d_measure_mass()
    elif which == "upper":
        exch = spec.upper_measure_mass()
    elif which == "lower":
        exch = spec.lower_measure_mass()
    else:
        raise ValueError(which)
    ang = spec.angular.l1_norm()
    s_max, i_max, _ = g._radial_profile()
    d = float(np.linalg.norm(np.asarray(v, float) - g.axis_center))
    s, ws = _gl_on(0.0, s_max + d, n_nodes)
    mu_, wmu = _gl_on(-1.0, 1.0, n_nodes)
    ii, wi = _gl_on(0.0, i_max, n_nodes)
    S, MU = np.meshgrid(s, mu_, indexing="ij")
    WS, WMU = np.meshgrid(ws, wmu, indexing="ij")
    # distance from v* = v + s*omega to the center of g, axis towards it
    t = np.sqrt(np.maximum(S * S - 2.0 * S * MU * d + d * d, 0.0))
    w_ang = 2.0 * np.pi * S * S * WS * WMU
    total = 0.0
    for Ival, wI in zip(ii, wi):
        E = 0.5 * spec.pair.mu * S * S + float(I) + Ival
        total += wI * float(np.sum(w_ang * g.radial_density(t, Ival)
                                   * spec.energy_factor(E)))
    return ang * exch * total


# ---------------------------------------------------------------------------
# pointwise gain operator


def gain_pointwise(spec: KernelSpec, f, g, v, I, cfg: SamplerConfig,
                   proposal=None, which: str = "model") -> MCEstimate:
    """Q+(f, g)(v, I) by Monte Carlo over (v*, I*, sigma, r, R).

    (v*, I*) is drawn from `proposal` (default: g itself), with the density
    ratio in the integrand; degenerate zero-energy draws are discarded and
    counted.
    """
    rng = cfg.rng()
    n = cfg.n_samples
    prop = proposal if proposal is not None else g
    vstar, Istar = prop.sample(n, rng)
    sigma = _sphere(rng, n)
    r, R, c_rr = draw_exchange_gain(rng, n)
    v0 = np.broadcast_to(np.asarray(v, float), (n, 3)).copy()
    I0 = np.full(n, float(I))
    v1p, v2p, I1p, I2p, E, usq = primed_states_batch(
        spec.pair, v0, vstar, I0, Istar, sigma, r, R)
    alive = E > 0.0
    n_disc = int(n - alive.sum())
    ai, aj = spec.alpha_i, spec.alpha_j
    dens = prop.evaluate(vstar, Istar) / prop.mass()
    bval, _ = _angular_value(spec, v0 - vstar, sigma, usq)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(
            alive,
            float(I) ** ai * Istar ** aj * np.where(alive, E, 1.0) ** (-(ai + aj)),
            0.0)
    vals = np.where(
        alive & (dens > 0),
        f.evaluate(v1p, I1p) * g.evaluate(v2p, I2p) * weight
        * bval * spec.energy_factor(E) * _exchange_factor(spec, which, r, R)
        / np.where(dens > 0, dens, 1.0),
        0.0)
    vals = vals * (4.0 * np.pi * c_rr)
    return _mean_estimate(vals, n, cfg.seed, n_discarded=n_disc)


# ---------------------------------------------------------------------------
# weak forms


def weak_form(spec: KernelSpec, f, g, chi, part: str, cfg: SamplerConfig,
              chi_weight_k: float = 0.0, mixture=None) -> MCEstimate:
    """Weak form of the pair operator against the test function chi.

    part: "gain" integrates chi(v', I'), "loss" integrates chi(v, I), and
    "full" their difference.  With chi_weight_k > 0 the test function is
    multiplied by the species-i bracket to that power (requires mixture).
    """
    if part not in ("gain", "loss", "full"):
        raise ValueError("part must be 'gain', 'loss' or 'full'")
    rng = cfg.rng()
    n = cfg.n_samples
    v, I = f.sample(n, rng)
    vstar, Istar = g.sample(n, rng)
    sigma = _sphere(rng, n)
    r, R, c_rr = draw_exchange(rng, n, spec.alpha_i, spec.alpha_j)
    v1p, v2p, I1p, I2p, E, usq = primed_states_batch(
        spec.pair, v, vstar, I, Istar, sigma, r, R)
    bval, _ = _angular_value(spec, v - vstar, sigma, usq)

    def weighted_chi(vv, II):
        out = chi(vv, II)
        if chi_weight_k != 0.0:
            from .mixture import bracket_sq
            out = out * bracket_sq(mixture, spec.pair.i, vv, II) ** (chi_weight_k / 2.0)
        return out

    if part == "gain":
        cval = weighted_chi(v1p, I1p)
    elif part == "loss":
        cval = weighted_chi(v, I)
    else:
        cval = weighted_chi(v1p, I1p) - weighted_chi(v, I)
    w = (f.mass() * g.mass() * 4.0 * np.pi * c_rr
         * cval * bval * spec.energy_factor(E))
    return _mean_estimate(w, n, cfg.seed)


# ---------------------------------------------------------------------------
# averaging operators over (sigma, r, R)


def averaging_S(spec: KernelSpec, sign: str, chi, q: float, at,
                cfg: SamplerConfig) -> MCEstimate:
    """S^+/S^-(chi)(v, I, v*, I*): collision-variable average of chi at the
    post-collisional first state, with the r^{-gamma/2q} factor and the
    sign-restricted angular part."""
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    v, I, vstar, Istar = at
    rng = cfg.rng()
    n = cfg.n_samples
    sigma = _sphere(rng, n)
    extra_r = spec.gamma / (2.0 * q)
    r, R, c_rr = draw_exchange(rng, n, spec.alpha_i, spec.alpha_j, extra_r=extra_r)
    v0 = np.broadcast_to(np.asarray(v, float), (n, 3)).copy()
    vs = np.broadcast_to(np.asarray(vstar, float), (n, 3)).copy()
    I0 = np.full(n, float(I))
    Is = np.full(n, float(Istar))
    v1p, _, I1p, _, E, usq = primed_states_batch(spec.pair, v0, vs, I0, Is, sigma, r, R)
    bval, x = _angular_value(spec, v0 - vs, sigma, usq)
    mask = x >= 0.0 if sign == "plus" else x <= 0.0
    w = np.where(mask, chi(v1p, I1p) * bval * spec.upper(r, R), 0.0) \
        * (4.0 * np.pi * c_rr)
    return _mean_estimate(w, n, cfg.seed)


def averaging_S_grid(spec: KernelSpec, sign: str, chi, q: float,
                     v_nodes: np.ndarray, I_nodes: np.ndarray,
                     fixed_v: np.ndarray, fixed_I: float, vary: str,
                     n_samples: int, seed: int, n_blocks: int = 10,
                     chunk: int = 2048):
    """S^+/S^- evaluated on a grid of states with shared (sigma, r, R) draws.

    vary="first" varies (v, I) with (v*, I*) fixed; vary="second" the
    converse.  Returns block means of shape (n_nodes, n_blocks) for
    norm-plus-stderr post-processing.
    """
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sigma = _sphere(rng, n_samples)
    extra_r = spec.gamma / (2.0 * q)
    r, R, c_rr = draw_exchange(rng, n_samples, spec.alpha_i, spec.alpha_j,
                               extra_r=extra_r)
    btil = spec.upper(r, R)
    n_nodes = I_nodes.shape[0]
    out = np.empty((n_nodes, n_blocks))
    block_edges = np.linspace(0, n_samples, n_blocks + 1).astype(int)
    mi, mj = spec.pair.m_i, spec.pair.m_j
    M = mi + mj
    mu_pair = spec.pair.mu
    fv = np.asarray(fixed_v, float)
    for lo in range(0, n_nodes, chunk):
        hi = min(lo + chunk, n_nodes)
        if vary == "first":
            va = v_nodes[lo:hi]
            Ia = I_nodes[lo:hi]
            vb = fv[None, :]
            Ib = fixed_I
        elif vary == "second":
            va = fv[None, :]
            Ia = fixed_I
            vb = v_nodes[lo:hi]
            Ib = I_nodes[lo:hi]
        else:
            raise ValueError("vary must be 'first' or 'second'")
        u = np.broadcast_to(va - vb, (hi - lo, 3))
        usq = np.einsum("cj,cj->c", u, u)
        E = 0.5 * mu_pair * usq + Ia + Ib                      # (c,)
        V = np.broadcast_to((mi * va + mj * vb) / M, (hi - lo, 3))
        un = np.sqrt(np.where(usq > 0, usq, 1.0))
        x = np.einsum("cj,sj->cs", u, sigma) / un[:, None]     # (c, S)
        mask = x >= 0.0 if sign == "plus" else x <= 0.0
        bvals = spec.angular(x)
        coef = np.sqrt(2.0 * R[None, :] * E[:, None] / mu_pair)  # (c, S)
        I1p = r[None, :] * (1.0 - R[None, :]) * E[:, None]
        # chi at v' = V + (mj/M) coef sigma, built per sample block to bound memory
        for b in range(n_blocks):
            s0, s1 = block_edges[b], block_edges[b + 1]
            vp = V[:, None, :] + (mj / M) * coef[:, s0:s1, None] * sigma[None, s0:s1, :]
            cvals = chi(vp.reshape(-1, 3), I1p[:, s0:s1].reshape(-1))
            cvals = cvals.reshape(hi - lo, s1 - s0)
            vals = np.where(mask[:, s0:s1],
                            cvals * bvals[:, s0:s1] * btil[None, s0:s1], 0.0)
            out[lo:hi, b] = vals.mean(axis=1) * (4.0 * np.pi * c_rr)
    return out
