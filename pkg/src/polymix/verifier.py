"""Numeric verification of the operator estimates and their constants.

Each check produces a VerificationReport with the inequality's two sides,
the margin in the inequality's orientation and a pass flag
(margin + 3 * combined stderr >= 0).  Right-hand-side constants are
assembled from deterministic quadrature oracles so that a failure
indicates a genuine violation rather than sampling noise.

Several constants are double exponentials of entropy ratios and overflow
float64; those are carried as log10 values (the report then shows an
infinite rhs together with its log10).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import distributions as dist
from . import quadrature as mc
from .collision import primed_states_batch, transform_batch
from .kernels import (AngularKernel, DivergentIntegralError, KernelSpec, c_gain,
                      d_weight, forward_backward, rho, split_angular)
from .mixture import MixtureParams, PairParams, bracket_sq

LOG10_E = math.log10(math.e)


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _pair_bracket_sq(pair: PairParams, species: str, v, I):
    """Squared bracket for the pair's first ('i') or second ('j') species."""
    m = pair.m_i if species == "i" else pair.m_j
    v = np.asarray(v, float)
    vsq = np.square(v).sum(axis=-1)
    return 1.0 + m * vsq / (2.0 * pair.total_mass) + np.asarray(I, float) / pair.total_mass


@dataclass(frozen=True)
class GaussianChi:
    """Test function exp(-|v - c|^2 / 2 s_v^2 - I^2 / 2 s_i^2)."""

    s_v: float = 1.0
    s_i: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __call__(self, v, I):
        v = np.asarray(v, float)
        I = np.asarray(I, float)
        dv = v - np.asarray(self.center)
        vsq = np.square(dv).sum(axis=-1)
        return np.exp(-vsq / (2.0 * self.s_v ** 2) - I * I / (2.0 * self.s_i ** 2))

    def lq_norm(self, q: float) -> float:
        """Unweighted L^q norm (closed form)."""
        vel = (2.0 * np.pi * self.s_v ** 2 / q) ** 1.5
        en = 0.5 * math.sqrt(2.0 * np.pi * self.s_i ** 2 / q)
        return (vel * en) ** (1.0 / q)

    def weighted_lq_norm(self, pair: PairParams, species: str, q: float,
                         weight: float, n_nodes: int = 200) -> float:
        """L^q norm with the bracket weight <v,I>^weight, by Gauss quadrature."""
        from .distributions import _gl_on

        c = np.asarray(self.center, float)
        cnorm = float(np.linalg.norm(c))
        s, ws = _gl_on(0.0, cnorm + 14.0 * self.s_v / math.sqrt(q), n_nodes)
        mu_, wmu = _gl_on(-1.0, 1.0, 64)
        ii, wi = _gl_on(0.0, 14.0 * self.s_i / math.sqrt(q), n_nodes)
        S, MU = np.meshgrid(s, mu_, indexing="ij")
        WS, WMU = np.meshgrid(ws, wmu, indexing="ij")
        vsq = cnorm * cnorm + 2.0 * S * MU * cnorm + S * S
        m = pair.m_i if species == "i" else pair.m_j
        a = m / (2.0 * pair.total_mass)
        b = 1.0 / pair.total_mass
        w_ang = 2.0 * np.pi * S * S * WS * WMU
        chi_v_q = np.exp(-q * S * S / (2.0 * self.s_v ** 2))
        total = 0.0
        for Ival, wI in zip(ii, wi):
            wfac = (1.0 + a * vsq + b * Ival) ** (weight * q / 2.0)
            total += wI * float(np.sum(w_ang * chi_v_q * wfac)) \
                * math.exp(-q * Ival * Ival / (2.0 * self.s_i ** 2))
        return total ** (1.0 / q)


@dataclass(frozen=True)
class VerificationReport:
    name: str
    lhs: float
    rhs: float
    margin: float           # rhs - lhs in the inequality's orientation
    stderr: float           # combined standard error of the two sides
    passed: bool
    seed: int
    inputs_digest: str
    mutation: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = bool(self.passed)
        return d


def _finish(name, lhs, rhs, stderr, seed, digest, mutation, details,
            orientation="lhs<=rhs") -> VerificationReport:
    if orientation == "lhs<=rhs":
        margin = rhs - lhs
    else:
        margin = lhs - rhs
    passed = bool(margin + 3.0 * stderr >= 0.0)
    return VerificationReport(name=name, lhs=float(lhs), rhs=float(rhs),
                              margin=float(margin), stderr=float(stderr),
                              passed=passed, seed=seed, inputs_digest=digest,
                              mutation=mutation, details=details)


# ---------------------------------------------------------------------------
# pointwise kernel-distribution inequality


def verify_kernel_distribution(pair: PairParams, q: float, n_points: int,
                               seed: int, mutation: float | None = None,
                               vel_scale: float = 1.5,
                               energy_scale: float = 1.5) -> VerificationReport:
    """Pointwise bracket-splitting bound on the velocity-energy kernel part,
    exact arithmetic over random configurations (both scattering branches)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    p = q / (q - 1.0) if q > 1 else math.inf
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    g = pair.gamma
    vi = rng.normal(0, vel_scale, (n_points, 3))
    vj = rng.normal(0, vel_scale, (n_points, 3))
    Ii = rng.exponential(energy_scale, n_points)
    Ij = rng.exponential(energy_scale, n_points)
    sig = rng.normal(size=(n_points, 3))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    r = rng.uniform(0, 1, n_points)
    R = rng.uniform(0, 1, n_points)
    v1p, _, I1p, _, E, usq = primed_states_batch(pair, vi, vj, Ii, Ij, sig, r, R)
    lhs = (E / pair.total_mass) ** (g / 2.0)
    x = np.einsum("ij,ij->i", vi - vj, sig) / np.sqrt(np.maximum(usq, 1e-300))
    br_prime_i = _pair_bracket_sq(pair, "i", v1p, I1p) ** (g / (2.0 * q))
    br_i = _pair_bracket_sq(pair, "i", vi, Ii)
    br_j = _pair_bracket_sq(pair, "j", vj, Ij)
    pref = (math.sqrt(2.0) / pair.s_bar) ** (g / q) * r ** (-g / (2.0 * q))
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    branch_fwd = br_j ** (g / 2.0) * br_i ** (g * inv_p / 2.0)
    branch_bwd = br_i ** (g / 2.0) * br_j ** (g * inv_p / 2.0)
    rhs = pref * br_prime_i * np.where(x >= 0.0, branch_fwd, branch_bwd)
    if mutation is not None:
        rhs = rhs * mutation
    min_margin = float(np.min(rhs - lhs))
    digest = _digest(dict(check="kernel_distribution", q=q, n=n_points, seed=seed,
                          pair=(pair.i, pair.j, pair.m_i, pair.m_j, g)))
    return _finish("kernel_distribution", lhs=float(np.max(lhs - rhs)), rhs=0.0,
                   stderr=0.0, seed=seed, digest=digest, mutation=mutation,
                   details={"min_margin": min_margin, "n_points": n_points,
                            "branch_split": int(np.sum(x >= 0))},
                   orientation="lhs<=rhs")


# ---------------------------------------------------------------------------
# averaging-operator norm bounds


def _grid_nodes(extent_v: float, i_max: float, n_v: int, n_i: int):
    from .distributions import _gl_on

    xv, wv = _gl_on(-extent_v, extent_v, n_v)
    xi, wi = _gl_on(0.0, i_max, n_i)
    VX, VY, VZ, II = np.meshgrid(xv, xv, xv, xi, indexing="ij")
    W = (wv[:, None, None, None] * wv[None, :, None, None]
         * wv[None, None, :, None] * wi[None, None, None, :])
    nodes_v = np.column_stack([VX.ravel(), VY.ravel(), VZ.ravel()])
    return nodes_v, II.ravel(), W.ravel()


def _grid_lq_norm(block_means: np.ndarray, weights: np.ndarray, q: float):
    """L^q norm over the grid from per-node block means, with a second-moment
    debias at q = 2 and delete-one-block jackknife standard error."""
    B = block_means.shape[1]
    mean = block_means.mean(axis=1)
    var_mean = block_means.var(axis=1, ddof=1) / B

    def norm_from(m, v):
        if q == 2.0:
            integrand = np.maximum(m * m - v, 0.0)
        else:
            integrand = np.abs(m) ** q
        return float(np.sum(weights * integrand) ** (1.0 / q))

    full = norm_from(mean, var_mean)
    jack = np.empty(B)
    for b in range(B):
        keep = [c for c in range(B) if c != b]
        m_b = block_means[:, keep].mean(axis=1)
        v_b = block_means[:, keep].var(axis=1, ddof=1) / (B - 1)
        jack[b] = norm_from(m_b, v_b)
    stderr = math.sqrt(max((B - 1) / B * np.sum((jack - jack.mean()) ** 2), 0.0))
    return full, stderr


def verify_averaging_bound(spec: KernelSpec, sign: str, q: float, chi: GaussianChi,
                           probes: Sequence[tuple], variant: str, seed: int,
                           n_samples: int = 2048, n_v: int = 16, n_i: int = 10,
                           extent_v: float = 9.0, i_max: float = 36.0,
                           mutation: float | None = None) -> VerificationReport:
    """Norm bound on the collision-variable averaging operator.

    variant "l1": the integrable-angular bound (forward sign averaged over
    the first state, backward over the second); variant "linf": the bounded-
    angular bound, where the norm may be taken over either state (the check
    takes the larger of the two).
    """
    rho_q = rho(spec, q)
    b_plus, b_minus = forward_backward(spec.angular)
    part = b_plus if sign == "plus" else b_minus
    if variant == "l1":
        const = 2.0 ** (1.0 / (2.0 * q)) * spec.pair.s_bar ** (-3.0 / q) \
            * rho_q * part.l1_norm()
        vary_list = ["first"] if sign == "plus" else ["second"]
    elif variant == "linf":
        const = 4.0 * np.pi * spec.pair.s_bar ** (-3.0 / q) * rho_q * part.linf_norm()
        vary_list = ["first", "second"]
    else:
        raise ValueError("variant must be 'l1' or 'linf'")
    rhs = const * chi.lq_norm(q)
    if mutation is not None:
        rhs *= mutation
    nodes_v, nodes_I, weights = _grid_nodes(extent_v, i_max, n_v, n_i)
    lhs_best, err_best = -np.inf, 0.0
    per_probe = []
    for ip, (pv, pI) in enumerate(probes):
        for vary in vary_list:
            bm = mc.averaging_S_grid(spec, sign, chi, q, nodes_v, nodes_I,
                                     np.asarray(pv, float), float(pI), vary,
                                     n_samples, seed + 1000 * ip)
            val, err = _grid_lq_norm(bm, weights, q)
            per_probe.append({"probe": [list(map(float, pv)), float(pI)],
                              "vary": vary, "norm": val, "stderr": err})
            if val > lhs_best:
                lhs_best, err_best = val, err
    digest = _digest(dict(check="averaging", sign=sign, variant=variant, q=q,
                          seed=seed, pair=(spec.pair.i, spec.pair.j)))
    return _finish(f"averaging_{sign}_{variant}", lhs=lhs_best, rhs=rhs,
                   stderr=err_best, seed=seed, digest=digest, mutation=mutation,
                   details={"rho_q": rho_q, "constant": const,
                            "chi_norm": chi.lq_norm(q), "probes": per_probe})


# ---------------------------------------------------------------------------
# gain-operator weak-form bounds


def verify_gain_weak(spec: KernelSpec, f, g, chi: GaussianChi, p: float, k: float,
                     variant: str, cfg: mc.SamplerConfig,
                     mutation: float | None = None) -> VerificationReport:
    """Weak-form bound on the gain operator tested against chi <.>_i^k.

    variant "l1-angular" uses the integrable-angular estimate; the four
    "linf-..." variants use the bounded-angular estimates with the angular
    part restricted to the forward/backward half before integrating.
    """
    if p <= 1:
        raise ValueError("p must be > 1")
    q = p / (p - 1.0)
    gam = spec.gamma
    pair = spec.pair
    chi_norm = chi.weighted_lq_norm(pair, "i", q, (k + gam) / q)
    b_plus, b_minus = forward_backward(spec.angular)
    norms = {
        "f_lp_high": f.weighted_lp_quad(p, (k + gam) / p),
        "g_l1_low": g.weighted_l1_quad(k / p + gam),
        "f_l1_low": f.weighted_l1_quad(k / p + gam),
        "g_lp_high": g.weighted_lp_quad(p, (k + gam) / p),
        "g_lp_low": g.weighted_lp_quad(p, k / p + gam),
        "f_l1_high": f.weighted_l1_quad((k + gam) / p),
        "f_lp_low": f.weighted_lp_quad(p, k / p + gam),
        "g_l1_high": g.weighted_l1_quad((k + gam) / p),
    }
    cq = c_gain(spec, q)
    if variant == "l1-angular":
        lhs_spec = spec
        rhs = 2.0 ** (1.0 / (2.0 * q)) * cq * (
            b_plus.l1_norm() * norms["f_lp_high"] * norms["g_l1_low"]
            + b_minus.l1_norm() * norms["f_l1_low"] * norms["g_lp_high"]
        ) * chi_norm
    elif variant.startswith("linf"):
        part = b_plus if "plus" in variant else b_minus
        lhs_spec = KernelSpec(pair=pair, angular=part, upper=spec.upper,
                              lower=spec.lower)
        base = 4.0 * np.pi * part.linf_norm() * cq * chi_norm
        if variant == "linf-plus-1":
            rhs = base * norms["f_lp_high"] * norms["g_l1_low"]
        elif variant == "linf-plus-2":
            rhs = base * norms["g_lp_low"] * norms["f_l1_high"]
        elif variant == "linf-minus-1":
            rhs = base * norms["g_lp_high"] * norms["f_l1_low"]
        elif variant == "linf-minus-2":
            rhs = base * norms["f_lp_low"] * norms["g_l1_high"]
        else:
            raise ValueError(f"unknown variant {variant!r}")
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if mutation is not None:
        rhs *= mutation
    est = mc.weak_form(lhs_spec, f, g, chi, "gain", cfg, chi_weight_k=k,
                       mixture=f.mixture)
    digest = _digest(dict(check="gain_weak", variant=variant, p=p, k=k,
                          seed=cfg.seed, pair=(pair.i, pair.j)))
    return _finish(f"gain_weak_{variant}", lhs=est.value, rhs=rhs,
                   stderr=est.stderr, seed=cfg.seed, digest=digest,
                   mutation=mutation,
                   details={"c_q": cq, "chi_norm": chi_norm, **norms})


# ---------------------------------------------------------------------------
# loss-side lower bound


@dataclass(frozen=True)
class LowerBoundConstants:
    L1: float
    L2: float
    delta: float
    K_level: float
    c_lb_tilde: float
    c_lb: float
    mass: float
    entropy: float
    norm_gamma: float


def lower_bound_constants(spec: KernelSpec, g,
                          bracket_species: int | None = None) -> LowerBoundConstants:
    """Constants of the collision-frequency lower bound for the weighting
    distribution g; the ball radius delta and the level K are taken with
    equality (the sharpest admissible choice)."""
    pair = spec.pair
    gam = pair.gamma
    mass = g.weighted_l1_quad(0.0)
    if not mass > 0:
        raise ValueError("g must have strictly positive mass")
    H = g.entropy_quad()
    norm_gamma = g.weighted_l1_quad(gam, bracket_species=bracket_species)
    L1 = min(1.0, 2.0 ** (1.0 - gam)) * (pair.s_bar / 2.0) ** (gam / 2.0)
    K = math.exp(min(4.0 * H / mass, 700.0))
    delta5 = (15.0 / (64.0 * np.pi) * pair.mu / pair.total_mass ** 2
              * mass * math.exp(-4.0 * H / mass))
    delta = delta5 ** 0.2
    L2 = delta ** gam * mass / 2.0
    c_tilde = L2 / 2.0 * min(1.0, L1 * mass / (L2 + norm_gamma))
    c_lb = c_tilde * spec.lower_measure_mass()
    return LowerBoundConstants(L1=L1, L2=L2, delta=delta, K_level=K,
                               c_lb_tilde=c_tilde, c_lb=c_lb, mass=mass,
                               entropy=H, norm_gamma=norm_gamma)


def energy_moment_quad(spec: KernelSpec, g, v, I, n_nodes: int = 48) -> float:
    """Deterministic int g(v*, I*) (E/m)^(gamma/2) dv* dI* at a probe state."""
    from .distributions import _gl_on

    s_max, i_max, _ = g._radial_profile()
    d = float(np.linalg.norm(np.asarray(v, float) - g.axis_center))
    s, ws = _gl_on(0.0, s_max + d, n_nodes)
    mu_, wmu = _gl_on(-1.0, 1.0, n_nodes)
    ii, wi = _gl_on(0.0, i_max, n_nodes)
    S, MU = np.meshgrid(s, mu_, indexing="ij")
    WS, WMU = np.meshgrid(ws, wmu, indexing="ij")
    t = np.sqrt(np.maximum(S * S - 2.0 * S * MU * d + d * d, 0.0))
    w_ang = 2.0 * np.pi * S * S * WS * WMU
    total = 0.0
    for Ival, wI in zip(ii, wi):
        E = 0.5 * spec.pair.mu * S * S + float(I) + Ival
        total += wI * float(np.sum(w_ang * g.radial_density(t, Ival)
                                   * spec.energy_factor(E)))
    return total


def _probe_states(rng: np.random.Generator, n: int, vel_scale=2.0, en_scale=2.0):
    v = rng.normal(0.0, vel_scale, (n, 3))
    I = rng.exponential(en_scale, n)
    # a few deliberately far probes exercise the large-bracket regime
    v[: n // 8] *= 4.0
    I[: n // 8] *= 8.0
    return v, I


def verify_lower_bound(spec: KernelSpec, g, n_points: int, seed: int,
                       mode: str = "energy", mutation: float | None = None,
                       constants: LowerBoundConstants | None = None) -> VerificationReport:
    """Pointwise lower bound at sampled states.

    mode "energy": the velocity-energy moment against c_lb_tilde <v,I>^gamma;
    mode "frequency": the model-kernel collision frequency against
    ||b||_L1 c_lb <v,I>^gamma.
    """
    pair = spec.pair
    cst = constants if constants is not None else lower_bound_constants(spec, g)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    v, I = _probe_states(rng, n_points)
    moments = np.array([energy_moment_quad(spec, g, v[idx], I[idx], n_nodes=40)
                        for idx in range(n_points)])
    br = _pair_bracket_sq(pair, "i", v, I) ** (pair.gamma / 2.0)
    if mode == "energy":
        lower = cst.c_lb_tilde * br
        upper = moments
    elif mode == "frequency":
        ang = spec.angular.l1_norm()
        upper = moments * ang * spec.d_measure_mass()  # model kernel btilde == 1
        lower = ang * cst.c_lb * br
    else:
        raise ValueError("mode must be 'energy' or 'frequency'")
    if mutation is not None:
        lower = lower * mutation
    margins = upper - lower
    worst = int(np.argmin(margins))
    digest = _digest(dict(check="lower_bound", mode=mode, seed=seed,
                          pair=(pair.i, pair.j), n=n_points))
    return _finish(f"lower_bound_{mode}", lhs=float(lower[worst]),
                   rhs=float(upper[worst]), stderr=0.0, seed=seed,
                   digest=digest, mutation=mutation,
                   details={"min_margin": float(margins[worst]),
                            "constants": asdict(cst), "n_points": n_points},
                   orientation="lhs<=rhs")


# ---------------------------------------------------------------------------
# bilinear-form estimates


@dataclass(frozen=True)
class BilinearConstants:
    p: float
    q: float
    k: float
    gamma: float
    ell: float
    c_ij: float
    c_ji: float
    C1_ij: float
    C1_ji: float
    C2_ij: float
    C2_ji: float
    c_entropy_j: float      # entropy-moment constant of the second slot
    c_entropy_i: float
    hat_c_i: float
    hat_c_j: float
    c_lb_ij_g: float
    c_lb_ji_f: float
    c_lb_ij_f: float        # verbatim index pairing used inside K
    c_lb_ji_g: float
    eps: float
    eps_tilde: float
    log_K: float            # natural log of the truncation level K
    log_B: float            # natural log of the additive constant B
    b_l1: float
    b_linf: float
    norms: dict = field(default_factory=dict)


def _c_entropy(d, k: float, gam: float, ell: float) -> float:
    """Moment-entropy constant of one input distribution."""
    kg1 = k + gam + 1.0
    n_kg1 = d.weighted_l1_quad(kg1)
    H = d.entropy_quad()
    n_2 = d.weighted_l1_quad(2.0)
    return n_kg1 ** ((k + gam) / kg1) * (H + ell / 2.0 * n_2) ** (1.0 / kg1)


def hat_c_paper(total_mass: float, m_j: float) -> float:
    """Adopted closed form pi^2/2 m^(5/2) / m_j^(3/2) for the L1 mass of the
    inverse sixth bracket power."""
    return np.pi ** 2 / 2.0 * total_mass ** 2.5 / m_j ** 1.5


def bilinear_constants(spec_ij: KernelSpec, spec_ji: KernelSpec, f, g,
                       p: float, k: float) -> BilinearConstants:
    """All constants of the bilinear gain/total estimates.

    The truncation level K follows the displayed pairing with the
    first-slot distribution inside its lower-bound constants; this looks
    like an index swap in the source formula and is kept verbatim (the
    report carries both pairings).
    """
    if p <= 1:
        raise ValueError("p must be > 1")
    q = p / (p - 1.0)
    gam = spec_ij.gamma
    ell = k + gam + 6.0
    c_ij = c_gain(spec_ij, q)
    c_ji = c_gain(spec_ji, q)
    n_f_kg = f.weighted_l1_quad(k + gam)
    n_g_kg = g.weighted_l1_quad(k + gam)
    pref = 2.0 ** ((p - 1.0) / (2.0 * p))
    C1_ij = pref * (c_ij * n_g_kg + c_ij / q * n_f_kg + c_ji / p * n_g_kg)
    C1_ji = pref * (c_ji * n_f_kg + c_ji / q * n_g_kg + c_ij / p * n_f_kg)
    ce_j = _c_entropy(g, k, gam, ell)
    ce_i = _c_entropy(f, k, gam, ell)
    C2_ij = c_ij * ce_j + c_ij / q * ce_i + c_ji / p * ce_j
    C2_ji = c_ji * ce_i + c_ji / q * ce_j + c_ij / p * ce_i
    m = spec_ij.pair.total_mass
    hat_c_j = hat_c_paper(m, spec_ij.pair.m_j)
    hat_c_i = hat_c_paper(m, spec_ij.pair.m_i)
    clb_ij_g = lower_bound_constants(spec_ij, g).c_lb
    clb_ji_f = lower_bound_constants(spec_ji, f).c_lb
    clb_ij_f = lower_bound_constants(spec_ij, f,
                                     bracket_species=spec_ij.pair.j).c_lb
    clb_ji_g = lower_bound_constants(spec_ji, g,
                                     bracket_species=spec_ji.pair.j).c_lb
    b_l1 = spec_ij.angular.l1_norm()
    eps = 0.25 * b_l1 * min(clb_ij_g / C1_ij, clb_ji_f / C1_ji)
    split = split_angular(spec_ij.angular, eps)
    b_linf = split.binf.linf_norm()
    eps_tilde = (q / (64.0 * np.pi) * b_l1 / b_linf
                 * min(clb_ij_g / c_ij, clb_ji_f / c_ji))
    log_K = (k + gam + 1.0) * 32.0 * np.pi * b_linf / b_l1 \
        * max(C2_ij / clb_ij_f, C2_ji / clb_ji_g)
    nf_low = f.weighted_l1_quad(gam / p + k)
    ng_low = g.weighted_l1_quad(gam / p + k)
    log_B = (p * log_K - math.log(p) - (p - 1.0) * math.log(eps_tilde)
             + math.log(c_ij + c_ji)
             + math.log(hat_c_j * nf_low ** p + hat_c_i * ng_low ** p))
    norms = {"f_l1_k_gamma": n_f_kg, "g_l1_k_gamma": n_g_kg,
             "f_l1_low": nf_low, "g_l1_low": ng_low}
    return BilinearConstants(p=p, q=q, k=k, gamma=gam, ell=ell, c_ij=c_ij,
                             c_ji=c_ji, C1_ij=C1_ij, C1_ji=C1_ji, C2_ij=C2_ij,
                             C2_ji=C2_ji, c_entropy_j=ce_j, c_entropy_i=ce_i,
                             hat_c_i=hat_c_i, hat_c_j=hat_c_j,
                             c_lb_ij_g=clb_ij_g, c_lb_ji_f=clb_ji_f,
                             c_lb_ij_f=clb_ij_f, c_lb_ji_g=clb_ji_g,
                             eps=eps, eps_tilde=eps_tilde, log_K=log_K,
                             log_B=log_B, b_l1=b_l1, b_linf=b_linf, norms=norms)


def _power_chi(d, p: float, k: float, mixture, species: int):
    """Test function d(v,I)^(p-1) <v,I>^(k p) used by the bilinear forms."""
    def chi(v, I):
        return (d.evaluate(v, I) ** (p - 1.0)
                * bracket_sq(mixture, species, v, I) ** (k * p / 2.0))
    return chi


def bilinear_gain_mc(spec_ij: KernelSpec, spec_ji: KernelSpec, f, g, p: float,
                     k: float, cfg: mc.SamplerConfig) -> mc.MCEstimate:
    """MC value of the symmetrized gain bilinear form."""
    mixture = f.mixture
    chi_f = _power_chi(f, p, k, mixture, spec_ij.pair.i)
    chi_g = _power_chi(g, p, k, mixture, spec_ij.pair.j)
    w1 = mc.weak_form(spec_ij, f, g, chi_f, "gain", cfg)
    w2 = mc.weak_form(spec_ji, g, f, chi_g, "gain",
                      mc.SamplerConfig(cfg.n_samples, cfg.seed + 1, cfg.scheme))
    return mc.MCEstimate(value=w1.value + w2.value,
                         stderr=math.hypot(w1.stderr, w2.stderr),
                         n_samples=cfg.n_samples, seed=cfg.seed)


def bilinear_loss_mc(spec_ij: KernelSpec, spec_ji: KernelSpec, f, g, p: float,
                     k: float, cfg: mc.SamplerConfig) -> mc.MCEstimate:
    """MC value of the symmetrized loss bilinear form (nu-weighted powers)."""
    mixture = f.mixture
    chi_f = _power_chi(f, p, k, mixture, spec_ij.pair.i)
    chi_g = _power_chi(g, p, k, mixture, spec_ij.pair.j)
    w1 = mc.weak_form(spec_ij, f, g, chi_f, "loss", cfg)
    w2 = mc.weak_form(spec_ji, g, f, chi_g, "loss",
                      mc.SamplerConfig(cfg.n_samples, cfg.seed + 1, cfg.scheme))
    return mc.MCEstimate(value=w1.value + w2.value,
                         stderr=math.hypot(w1.stderr, w2.stderr),
                         n_samples=cfg.n_samples, seed=cfg.seed)


def verify_bilinear(spec_ij: KernelSpec, spec_ji: KernelSpec, f, g, p: float,
                    k: float, cfg: mc.SamplerConfig, which: str = "gain",
                    mutation: float | None = None,
                    constants: BilinearConstants | None = None) -> VerificationReport:
    """Bilinear-form bound, gain-only or total (gain minus loss).

    The additive constant exp(log_B) is a double exponential of entropy
    ratios and overflows float64; the rhs is then reported as inf with its
    log10 in the details.  A mutation factor here scales log10(rhs), the
    only meaningful corruption of a doubly-exponential constant.
    """
    cst = constants if constants is not None else bilinear_constants(
        spec_ij, spec_ji, f, g, p, k)
    gain = bilinear_gain_mc(spec_ij, spec_ji, f, g, p, k, cfg)
    nf_p = f.weighted_lp_quad(p, cst.gamma / p + k) ** p
    ng_p = g.weighted_lp_quad(p, cst.gamma / p + k) ** p
    logk_term = cst.log_K ** (-1.0 / (k + cst.gamma + 1.0))
    four_pi_binf = 4.0 * np.pi * cst.b_linf
    if which == "gain":
        lhs = gain
        coef_f = (cst.eps * cst.C1_ij
                  + four_pi_binf * (2.0 * cst.c_ij / cst.q * cst.eps_tilde
                                    + cst.C2_ij * logk_term))
        coef_g = (cst.eps * cst.C1_ji
                  + four_pi_binf * (2.0 * cst.c_ji / cst.q * cst.eps_tilde
                                    + cst.C2_ji * logk_term))
        finite_part = coef_f * nf_p + coef_g * ng_p
    elif which == "total":
        loss = bilinear_loss_mc(spec_ij, spec_ji, f, g, p, k,
                                mc.SamplerConfig(cfg.n_samples, cfg.seed + 7,
                                                 cfg.scheme))
        lhs = mc.MCEstimate(value=gain.value - loss.value,
                            stderr=math.hypot(gain.stderr, loss.stderr),
                            n_samples=cfg.n_samples, seed=cfg.seed)
        finite_part = -0.5 * cst.b_l1 * (cst.c_lb_ij_g * nf_p
                                         + cst.c_lb_ji_f * ng_p)
    else:
        raise ValueError("which must be 'gain' or 'total'")
    log10_B_term = (math.log(four_pi_binf) + cst.log_B) * LOG10_E
    if mutation is not None:
        log10_B_term = log10_B_term * mutation
    if log10_B_term > 300.0:
        rhs = math.inf
    else:
        rhs = finite_part + 10.0 ** log10_B_term
    digest = _digest(dict(check="bilinear", which=which, p=p, k=k, seed=cfg.seed,
                          pair=(spec_ij.pair.i, spec_ij.pair.j)))
    details = {"log10_rhs_B_term": log10_B_term, "finite_part": finite_part,
               "f_lp_p": nf_p, "g_lp_p": ng_p,
               "constants": {kk: vv for kk, vv in asdict(cst).items()
                             if kk != "norms"}}
    return _finish(f"bilinear_{which}", lhs=lhs.value, rhs=rhs, stderr=lhs.stderr,
                   seed=cfg.seed, digest=digest, mutation=mutation, details=details)


def verify_loss_lower(spec_ij: KernelSpec, spec_ji: KernelSpec, f, g, p: float,
                      k: float, cfg: mc.SamplerConfig,
                      mutation: float | None = None) -> VerificationReport:
    """Integrated loss-side sanity: the loss bilinear form dominates
    ||b|| (c_lb[g] ||f||^p + c_lb[f] ||g||^p)."""
    cst = bilinear_constants(spec_ij, spec_ji, f, g, p, k)
    loss = bilinear_loss_mc(spec_ij, spec_ji, f, g, p, k, cfg)
    nf_p = f.weighted_lp_quad(p, cst.gamma / p + k) ** p
    ng_p = g.weighted_lp_quad(p, cst.gamma / p + k) ** p
    rhs = cst.b_l1 * (cst.c_lb_ij_g * nf_p + cst.c_lb_ji_f * ng_p)
    if mutation is not None:
        rhs *= mutation
    digest = _digest(dict(check="loss_lower", p=p, k=k, seed=cfg.seed,
                          pair=(spec_ij.pair.i, spec_ij.pair.j)))
    return _finish("loss_lower", lhs=rhs, rhs=loss.value, stderr=loss.stderr,
                   seed=cfg.seed, digest=digest, mutation=mutation,
                   details={"c_lb_ij_g": cst.c_lb_ij_g,
                            "c_lb_ji_f": cst.c_lb_ji_f},
                   orientation="lhs<=rhs")


# ---------------------------------------------------------------------------
# measure invariance of the collision map


def verify_measure_invariance(spec: KernelSpec, n_samples: int, seed: int,
                              mutation: float | None = None) -> VerificationReport:
    """Push-forward identity for the weighted collision measure.

    Means of a smooth compactly supported observable before and after the
    collision map agree under the I^a_i I*^a_j d_ij reference measure;
    compared as a paired-sample difference.
    """
    pair = spec.pair
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = n_samples
    s_v = 3.0
    theta = 3.0
    rho_supp = 3.0
    vi = rng.normal(0.0, s_v, (n, 3))
    vj = rng.normal(0.0, s_v, (n, 3))
    Ii = rng.gamma(pair.alpha_i + 1.0, theta, n)
    Ij = rng.gamma(pair.alpha_j + 1.0, theta, n)
    sig = rng.normal(size=(n, 3))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    r, R, c_rr = mc.draw_exchange(rng, n, pair.alpha_i, pair.alpha_j)

    def phi(vv_i, vv_j, II_i, II_j, ss, rr, RR):
        t_sq = (np.square(vv_i).sum(1) + np.square(vv_j).sum(1)
                + II_i ** 2 + II_j ** 2) / rho_supp ** 2
        inside = t_sq < 1.0
        bump = np.where(inside,
                        np.exp(-1.0 / np.maximum(1.0 - t_sq, 1e-300)), 0.0)
        return bump * (1.0 + ss[:, 2]) * rr * (1.0 - rr) * RR * (1.0 - RR)

    # density ratio of the weighted reference measure to the proposal;
    # bounded because phi (and phi after the energy-conserving map)
    # vanishes outside a fixed energy shell
    log_w = ((np.square(vi).sum(1) + np.square(vj).sum(1)) / (2.0 * s_v ** 2)
             + (Ii + Ij) / theta)
    v1p, v2p, I1p, I2p, sigp, rp, Rp, flags = transform_batch(
        pair, vi, vj, Ii, Ij, sig, r, R)
    a_raw = phi(v1p, v2p, I1p, I2p, sigp, rp, Rp)
    b_raw = phi(vi, vj, Ii, Ij, sig, r, R)
    w = np.where((a_raw > 0) | (b_raw > 0), np.exp(np.minimum(log_w, 700.0)), 0.0)
    const = (c_rr * 4.0 * np.pi * (2.0 * np.pi * s_v ** 2) ** 3
             * math.gamma(pair.alpha_i + 1.0) * theta ** (pair.alpha_i + 1.0)
             * math.gamma(pair.alpha_j + 1.0) * theta ** (pair.alpha_j + 1.0))
    a = a_raw * w * const
    b = b_raw * w * const
    if mutation is not None:
        a = a * mutation
    diff = a - b
    mean = float(np.mean(diff))
    se = float(np.std(diff) / math.sqrt(n))
    digest = _digest(dict(check="measure_invariance", n=n, seed=seed,
                          pair=(pair.i, pair.j)))
    passed = abs(mean) <= 3.0 * se
    return VerificationReport(name="measure_invariance", lhs=float(np.mean(a)),
                              rhs=float(np.mean(b)), margin=-abs(mean),
                              stderr=se, passed=bool(passed), seed=seed,
                              inputs_digest=digest, mutation=mutation,
                              details={"paired_diff_mean": mean,
                                       "z_score": mean / se if se > 0 else 0.0,
                                       "degenerate_draws": int((flags != 0).sum())})
