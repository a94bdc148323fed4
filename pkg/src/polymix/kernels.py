"""Collision kernel family: angular parts, exchange-variable bounds and
the derived integral constants.

A transition rate is a product  b(u_hat . sigma) * btilde(r, R) * (E/m)^(gamma/2);
the exchange factor btilde is bracketed between a lower and an upper bound,
and the model kernel uses btilde == 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .mixture import PairParams


class DivergentIntegralError(ArithmeticError):
    """An exchange-variable integral diverges; carries the violated condition."""

    def __init__(self, message: str, condition: str = ""):
        super().__init__(message)
        self.condition = condition


# ---------------------------------------------------------------------------
# angular kernels b(x), x = u_hat . sigma in [-1, 1]


@dataclass(frozen=True)
class AngularKernel:
    """Tagged angular kernel; evaluable on [-1, 1].

    forms:
      constant:        b(x) = value
      table:           piecewise-linear through (x_nodes, y_nodes)
      truncated-power: b(x) = coeff * (1 - x)^(-exponent) on [lo, hi];
                       integrable for exponent < 1, unbounded when hi == 1
    """

    form: str
    value: float = 0.0
    x_nodes: np.ndarray | None = None
    y_nodes: np.ndarray | None = None
    coeff: float = 0.0
    exponent: float = 0.0
    support: tuple[float, float] = (-1.0, 1.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "constant":
            return np.full_like(x, self.value)
        if self.form == "table":
            return np.interp(x, self.x_nodes, self.y_nodes)
        if self.form == "truncated-power":
            lo, hi = self.support
            inside = (x >= lo) & (x <= hi)
            with np.errstate(divide="ignore", over="ignore"):
                vals = self.coeff * np.power(np.maximum(1.0 - x, 0.0), -self.exponent)
            return np.where(inside, vals, 0.0)
        raise ValueError(f"unknown angular form {self.form!r}")

    def l1_norm(self) -> float:
        """Sphere L1 norm 2*pi*int_{-1}^{1} b(x) dx."""
        if self.form == "constant":
            return 4.0 * np.pi * self.value
        if self.form == "table":
            return 2.0 * np.pi * float(np.trapezoid(self.y_nodes, self.x_nodes))
        if self.form == "truncated-power":
            lo, hi = self.support
            e = self.exponent
            if e >= 1.0 and hi == 1.0:
                raise DivergentIntegralError("angular kernel not integrable",
                                             "exponent >= 1 with support up to 1")
            if e == 1.0:
                val = np.log((1.0 - lo) / (1.0 - hi))
            else:
                val = ((1.0 - lo) ** (1.0 - e) - (1.0 - hi) ** (1.0 - e)) / (1.0 - e)
            return 2.0 * np.pi * self.coeff * val
        raise ValueError(self.form)

    def linf_norm(self) -> float:
        """sup of b on [-1, 1]; inf for an unbounded truncated power."""
        if self.form == "constant":
            return self.value
        if self.form == "table":
            return float(np.max(self.y_nodes))
        if self.form == "truncated-power":
            lo, hi = self.support
            if self.exponent <= 0:
                return self.coeff * (1.0 - lo) ** (-self.exponent)
            if hi == 1.0:
                return np.inf
            return self.coeff * (1.0 - hi) ** (-self.exponent)
        raise ValueError(self.form)

    @property
    def bounded(self) -> bool:
        return np.isfinite(self.linf_norm())

    def restricted(self, lo: float, hi: float) -> "AngularKernel":
        """Kernel multiplied by the indicator of [lo, hi]."""
        if self.form == "constant":
            xs = np.array([-1.0, lo - 1e-300, lo, hi, hi + 1e-300, 1.0])
            xs = np.clip(np.sort(xs), -1.0, 1.0)
            ys = np.where((xs >= lo) & (xs <= hi), self.value, 0.0)
            return AngularKernel(form="table", x_nodes=xs, y_nodes=ys)
        if self.form == "table":
            return AngularKernel(form="table", x_nodes=self.x_nodes,
                                 y_nodes=np.where((self.x_nodes >= lo)
                                                  & (self.x_nodes <= hi),
                                                  self.y_nodes, 0.0))
        if self.form == "truncated-power":
            slo, shi = self.support
            return AngularKernel(form="truncated-power", coeff=self.coeff,
                                 exponent=self.exponent,
                                 support=(max(lo, slo), min(hi, shi)))
        raise ValueError(self.form)


def constant_angular(value: float) -> AngularKernel:
    if value < 0:
        raise ValueError("angular kernel must be nonnegative")
    return AngularKernel(form="constant", value=float(value))


def table_angular(x_nodes, y_nodes) -> AngularKernel:
    x = np.asarray(x_nodes, float)
    y = np.asarray(y_nodes, float)
    if np.any(y < 0):
        raise ValueError("angular kernel must be nonnegative")
    if x[0] > -1.0 or x[-1] < 1.0 or np.any(np.diff(x) <= 0):
        raise ValueError("table nodes must increase and cover [-1, 1]")
    x.setflags(write=False)
    y.setflags(write=False)
    return AngularKernel(form="table", x_nodes=x, y_nodes=y)


def truncated_power_angular(coeff: float, exponent: float,
                            support=(-1.0, 1.0)) -> AngularKernel:
    return AngularKernel(form="truncated-power", coeff=float(coeff),
                         exponent=float(exponent), support=tuple(support))


def forward_backward(k: AngularKernel) -> tuple[AngularKernel, AngularKernel]:
    """Split into the forward (x >= 0) and backward (x <= 0) restrictions."""
    return k.restricted(0.0, 1.0), k.restricted(-1.0, 0.0)


@dataclass(frozen=True)
class AngularSplit:
    """L1/Linf decomposition b = b1 + binf with ||b1||_L1 <= eps."""

    b1: AngularKernel
    binf: AngularKernel
    eps: float
    level: float  # truncation level M; binf <= M pointwise


def split_angular(k: AngularKernel, eps: float) -> AngularSplit:
    """Level truncation: b1 = (b - M)_+ concentrated where b > M, binf = min(b, M).

    M is the smallest level (found by bisection on a fine table) with
    ||b1||_L1 <= eps.  Bounded kernels need no split: b1 == 0, binf == b.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if k.bounded:
        zero = AngularKernel(form="constant", value=0.0)
        return AngularSplit(b1=zero, binf=k, eps=eps, level=k.linf_norm())

    xs = 1.0 - np.geomspace(1e-14, 2.0, 4001)[::-1]  # refine towards x = 1
    xs = np.clip(xs, -1.0, 1.0)
    ys = k(xs)

    def tail_mass(level):
        excess = np.maximum(ys - level, 0.0)
        return 2.0 * np.pi * np.trapezoid(excess, xs)

    lo_m, hi_m = 0.0, float(np.max(ys[np.isfinite(ys)]))
    for _ in range(200):
        mid = 0.5 * (lo_m + hi_m)
        if tail_mass(mid) > eps:
            lo_m = mid
        else:
            hi_m = mid
    level = hi_m
    y1 = np.maximum(np.nan_to_num(ys, posinf=1e300) - level, 0.0)
    yinf = np.minimum(np.nan_to_num(ys, posinf=1e300), level)
    b1 = AngularKernel(form="table", x_nodes=xs, y_nodes=y1)
    binf = AngularKernel(form="table", x_nodes=xs, y_nodes=yinf)
    return AngularSplit(b1=b1, binf=binf, eps=eps, level=level)


# ---------------------------------------------------------------------------
# exchange-variable bounds btilde(r, R)


@dataclass(frozen=True)
class ExchangeBound:
    """Nonnegative factor in the exchange variables.

    forms:
      constant:      value
      product-power: value * r^e_r (1-r)^e_r1 R^e_R (1-R)^e_R1
    """

    form: str
    value: float = 1.0
    e_r: float = 0.0
    e_r1: float = 0.0
    e_R: float = 0.0
    e_R1: float = 0.0

    def __call__(self, r, R):
        r = np.asarray(r, float)
        R = np.asarray(R, float)
        if self.form == "constant":
            return np.full(np.broadcast(r, R).shape, self.value)
        if self.form == "product-power":
            with np.errstate(divide="ignore"):
                return (self.value * r ** self.e_r * (1.0 - r) ** self.e_r1
                        * R ** self.e_R * (1.0 - R) ** self.e_R1)
        raise ValueError(self.form)

    @property
    def is_constant(self) -> bool:
        return self.form == "constant"


def constant_bound(value: float = 1.0) -> ExchangeBound:
    if value < 0:
        raise ValueError("exchange bound must be nonnegative")
    return ExchangeBound(form="constant", value=float(value))


def product_power_bound(value=1.0, e_r=0.0, e_r1=0.0, e_R=0.0, e_R1=0.0) -> ExchangeBound:
    return ExchangeBound(form="product-power", value=float(value), e_r=float(e_r),
                         e_r1=float(e_r1), e_R=float(e_R), e_R1=float(e_R1))


# ---------------------------------------------------------------------------
# the d_ij measure density and integrals against it


def d_weight(alpha_i: float, alpha_j: float, r, R):
    """Exchange measure density r^a_i (1-r)^a_j (1-R)^(a_i+a_j+1) sqrt(R).

    Endpoint evaluation with a negative exponent returns inf; integrators
    must avoid the endpoints.
    """
    r = np.asarray(r, float)
    R = np.asarray(R, float)
    with np.errstate(divide="ignore"):
        return (r ** alpha_i * (1.0 - r) ** alpha_j
                * (1.0 - R) ** (alpha_i + alpha_j + 1.0) * np.sqrt(R))


def _beta_or_diverge(a: float, b: float, what: str) -> float:
    if a <= 0:
        raise DivergentIntegralError(f"{what}: exponent {a - 1:g} <= -1 at the "
                                     "left endpoint", f"{what} left exponent > -1")
    if b <= 0:
        raise DivergentIntegralError(f"{what}: exponent {b - 1:g} <= -1 at the "
                                     "right endpoint", f"{what} right exponent > -1")
    return float(special.beta(a, b))


def exchange_integral(alpha_i: float, alpha_j: float, bound: ExchangeBound,
                      extra_r: float = 0.0, extra_R1: float = 0.0) -> float:
    """Closed Beta form of  int btilde(r,R) r^extra_r (1-R)^extra_R1 d_ij(r,R) dr dR.

    Raises DivergentIntegralError with the violated exponent condition.
    """
    if bound.form == "constant":
        c, er, er1, eR, eR1 = bound.value, 0.0, 0.0, 0.0, 0.0
    else:
        c, er, er1, eR, eR1 = bound.value, bound.e_r, bound.e_r1, bound.e_R, bound.e_R1
    r_int = _beta_or_diverge(alpha_i + er + extra_r + 1.0, alpha_j + er1 + 1.0, "r-integral")
    R_int = _beta_or_diverge(1.5 + eR, alpha_i + alpha_j + 2.0 + eR1 + extra_R1, "R-integral")
    return c * r_int * R_int


def exchange_integral_quad(alpha_i: float, alpha_j: float, bound: ExchangeBound,
                           extra_r: float = 0.0, extra_R1: float = 0.0,
                           tol: float = 1e-10) -> float:
    """Adaptive-quadrature route for the same integral, with power-stretching
    substitutions that regularize the endpoint singularities."""
    if bound.form == "constant":
        c, er, er1, eR, eR1 = bound.value, 0.0, 0.0, 0.0, 0.0
    else:
        c, er, er1, eR, eR1 = bound.value, bound.e_r, bound.e_r1, bound.e_R, bound.e_R1
    # exponents of the monomial-like integrands
    a_r = alpha_i + er + extra_r          # r^a_r near r = 0
    b_r = alpha_j + er1                   # (1-r)^b_r near r = 1
    a_R = 0.5 + eR                        # R^a_R near R = 0
    b_R = alpha_i + alpha_j + 1.0 + eR1 + extra_R1  # (1-R)^b_R near R = 1
    for expo, what in ((a_r, "r-integral left"), (b_r, "r-integral right"),
                       (a_R, "R-integral left"), (b_R, "R-integral right")):
        if expo <= -1.0:
            raise DivergentIntegralError(f"{what}: exponent {expo:g} <= -1",
                                         f"{what} exponent > -1")

    def one_dim(a_exp, b_exp):
        # substitute t = x^(1/s) at whichever endpoint has the negative
        # exponent; s chosen so the transformed integrand is ~ constant
        def f(x):
            return x ** a_exp * (1.0 - x) ** b_exp

        s_lo = 1.0 / (1.0 + min(0.0, a_exp))
        s_hi = 1.0 / (1.0 + min(0.0, b_exp))

        def g(t):
            # x = t^{s_lo} on [0, 1/2]
            x = 0.5 * t ** s_lo
            return f(x) * 0.5 * s_lo * t ** (s_lo - 1.0)

        def h(t):
            x = 1.0 - 0.5 * t ** s_hi
            return f(x) * 0.5 * s_hi * t ** (s_hi - 1.0)

        v1, _ = integrate.quad(g, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)
        v2, _ = integrate.quad(h, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)
        return v1 + v2

    return c * one_dim(a_r, b_r) * one_dim(a_R, b_R)


# ---------------------------------------------------------------------------
# kernel specification and evaluation


@dataclass(frozen=True)
class KernelSpec:
    """Pair kernel: shared angular part plus exchange-variable envelope."""

    pair: PairParams
    angular: AngularKernel
    upper: ExchangeBound = field(default_factory=constant_bound)
    lower: ExchangeBound = field(default_factory=constant_bound)

    def __post_init__(self):
        rr = np.linspace(1e-3, 1 - 1e-3, 64)
        rg, Rg = np.meshgrid(rr, rr)
        if np.any(self.lower(rg, Rg) > self.upper(rg, Rg) * (1 + 1e-12)):
            raise ValueError("lower exchange bound exceeds the upper bound")

    @property
    def alpha_i(self) -> float:
        return self.pair.alpha_i

    @property
    def alpha_j(self) -> float:
        return self.pair.alpha_j

    @property
    def gamma(self) -> float:
        return self.pair.gamma

    def energy_factor(self, E):
        """(E/m)^(gamma/2) with m the total mixture mass."""
        return (np.asarray(E, float) / self.pair.total_mass) ** (self.gamma / 2.0)

    def d_measure_mass(self) -> float:
        """int d_ij dr dR (Beta closed form)."""
        return exchange_integral(self.alpha_i, self.alpha_j, constant_bound(1.0))

    def upper_measure_mass(self) -> float:
        """int btilde_ub d_ij dr dR."""
        return exchange_integral(self.alpha_i, self.alpha_j, self.upper)

    def lower_measure_mass(self) -> float:
        """int btilde_lb d_ij dr dR."""
        return exchange_integral(self.alpha_i, self.alpha_j, self.lower)


def kernel_eval(spec: KernelSpec, config, which: str = "model"):
    """Pointwise kernel value b(u_hat . sigma) * btilde(r, R) * (E/m)^(gamma/2).

    which selects btilde: "model" (== 1), "upper" or "lower".
    Accepts a CollisionConfiguration or a tuple of stacked arrays
    (vi, vj, Ii, Ij, sigma, r, R).
    """
    if hasattr(config, "state_i"):
        vi = config.state_i.v[None, :]
        vj = config.state_j.v[None, :]
        Ii = np.array([config.state_i.I])
        Ij = np.array([config.state_j.I])
        sig = config.sigma[None, :]
        r = np.array([config.r])
        R = np.array([config.R])
        scalar = True
    else:
        vi, vj, Ii, Ij, sig, r, R = config
        scalar = False
    u = np.asarray(vi, float) - np.asarray(vj, float)
    usq = np.einsum("...k,...k->...", u, u)
    E = 0.5 * spec.pair.mu * usq + np.asarray(Ii, float) + np.asarray(Ij, float)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(usq > 0, np.einsum("...k,...k->...", u, np.asarray(sig, float))
                     / np.sqrt(np.where(usq > 0, usq, 1.0)), 1.0)
    val = spec.angular(x) * spec.energy_factor(E)
    if which == "upper":
        val = val * spec.upper(r, R)
    elif which == "lower":
        val = val * spec.lower(r, R)
    elif which != "model":
        raise ValueError("which must be 'model', 'upper' or 'lower'")
    out = np.asarray(val, float)
    return float(out[0]) if scalar else out


def rho(spec: KernelSpec, q: float, cross_check: bool = False) -> float:
    """Integrability constant
    rho(q) = int r^{-(1+gamma/2)/q} (1-R)^{-1/q} d_ij btilde_ub dr dR.

    Computed by endpoint-regularized adaptive quadrature; for a constant
    upper bound the Beta closed form is cross-checked to 1e-8 relative.
    Raises DivergentIntegralError naming the violated exponent condition.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    extra_r = -(1.0 + spec.gamma / 2.0) / q
    extra_R1 = -1.0 / q
    val = exchange_integral_quad(spec.alpha_i, spec.alpha_j, spec.upper,
                                 extra_r=extra_r, extra_R1=extra_R1)
    closed = exchange_integral(spec.alpha_i, spec.alpha_j, spec.upper,
                               extra_r=extra_r, extra_R1=extra_R1)
    if cross_check and abs(val - closed) > 1e-8 * max(abs(closed), 1.0):
        raise ArithmeticError(f"quadrature {val} and Beta closed form {closed} disagree")
    return val


def c_gain(spec: KernelSpec, q: float) -> float:
    """Gain-estimate constant 2^(gamma/2q) s_bar^(-(3+gamma)/q) rho(q)."""
    rho_q = rho(spec, q)
    g = spec.gamma
    return 2.0 ** (g / (2.0 * q)) * spec.pair.s_bar ** (-(3.0 + g) / q) * rho_q


def micro_reversed_value(spec: KernelSpec, config) -> float:
    """Model-kernel value at the transformed configuration (for the
    invariance checks B(c) == B(T c))."""
    from .collision import transform

    img = transform(spec.pair, config)
    return kernel_eval(spec, img.as_configuration(), which="model")
