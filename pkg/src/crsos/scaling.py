"""Continuum limit and the compactly supported self-similar profile.

With heights rescaled to ``l = eps k`` and time to ``s = eps**2 t`` the
bulk mean-field dynamics becomes, to leading order,

    dP/ds = A d2/dl2 (P**5) = A (5 P**4 P'' + 20 P**3 P'**2),

and ``P(l, s) = s**-gamma f(l s**-gamma)`` with ``gamma = 1/6`` reduces it to
``gamma x f + A (f**5)' = C0``. For ``C0 = 0`` the solution is

    f(x) = (C1 - x**2 / (15 A))**(1/4)      (zero outside its support).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .mean_field import MONOMIALS, MeanFieldParams, mf_rhs

__all__ = [
    "ExponentFit",
    "SelfSimilarParams",
    "SupportError",
    "barenblatt_f",
    "continuum_coefficient_A",
    "continuum_drift",
    "epsilon_refinement",
    "exponent_report",
    "fit_exponent",
    "normalizing_C1",
    "pde_convergence",
    "pde_residual",
    "pk_t",
    "pk_t_printed",
    "profile_moments",
    "self_similar_P",
    "self_similar_P_printed",
    "similarity_ode_residual",
]

GAMMA = 1.0 / 6.0


class SupportError(ValueError):
    """Requested points touch or leave the support of the profile."""


# ---------------------------------------------------------------------------
# Continuum coefficient
# ---------------------------------------------------------------------------

def continuum_coefficient_A(params: MeanFieldParams) -> float:
    """Leading Taylor coefficient of the bulk closure: ``2 * sum(c_j - d_j)``.

    Every monomial in the bracket has total degree five, so at zeroth order
    in ``eps`` each reduces to ``P**5``; the bracket is ``sum(w_j) P**5`` and
    ``2 Lap`` contributes ``2 eps**2 d2/dl2``.
    """
    # pairwise differences first, so equal rates give exactly zero
    return 2.0 * sum(float(c) - float(d) for c, d in zip(params.c, params.d))


def continuum_drift(params: MeanFieldParams) -> float:
    """First-order Taylor coefficient ``E``: the bracket is ``S P**5 + eps E P**4 P' + O(eps**2)``.

    A monomial with powers ``(a, b, c)`` of ``P_{k-1}, P_k, P_{k+1}`` shifts by
    ``c - a``. ``E = (c2 - c3) - (d2 - d3)``; it adds the odd correction
    ``2 eps**3 (E/5) d3/dl3 (P**5)`` that vanishes in the continuum limit.
    """
    return sum(w * (MONOMIALS[k][2] - MONOMIALS[k][0]) for k, w in params.weights().items())


@dataclass(frozen=True)
class BumpProfile:
    """``p(l) = base + amp * exp(-(l - mu)**2 / (2 sigma**2))`` with analytic derivatives."""

    base: float = 0.2
    amp: float = 0.5
    mu: float = 1.5
    sigma: float = 0.3

    def derivatives(self, l):
        z = (np.asarray(l, dtype=float) - self.mu) / self.sigma
        g = self.amp * np.exp(-0.5 * z * z)
        s = self.sigma
        p = self.base + g
        d1 = -z / s * g
        d2 = (z * z - 1.0) / s ** 2 * g
        d3 = (-z ** 3 + 3.0 * z) / s ** 3 * g
        return p, d1, d2, d3

    def d2_p5(self, l):
        p, d1, d2, _ = self.derivatives(l)
        return 5 * p ** 4 * d2 + 20 * p ** 3 * d1 ** 2

    def d3_p5(self, l):
        p, d1, d2, d3 = self.derivatives(l)
        return 5 * p ** 4 * d3 + 60 * p ** 3 * d1 * d2 + 60 * p ** 2 * d1 ** 3


@dataclass
class RefinementResult:
    eps: np.ndarray
    errors: np.ndarray
    orders: np.ndarray
    center_ratio: np.ndarray
    A: float
    drift: float
    include_drift: bool
    where: str

    @property
    def min_order(self) -> float:
        return float(self.orders.min())

    def to_dict(self) -> dict:
        return {
            "eps": self.eps.tolist(),
            "errors": self.errors.tolist(),
            "orders": self.orders.tolist(),
            "center_ratio": self.center_ratio.tolist(),
            "A": self.A,
            "drift": self.drift,
            "include_drift": self.include_drift,
            "where": self.where,
        }


def epsilon_refinement(params: MeanFieldParams, eps_values=(0.02, 0.01, 0.005, 0.0025),
                       profile: BumpProfile | None = None, include_drift: bool = False,
                       where: str = "window", window=(0.75, 2.25)) -> RefinementResult:
    """Compare the discrete closure on ``P_k = p(eps k)`` with ``eps**2 A d2/dl2 p**5``.

    The error at each ``eps`` is ``max |rhs - prediction|`` over the heights
    in ``window`` (or only at the bump centre for ``where="center"``),
    divided by ``eps**2 max |A d2/dl2 p**5|``. ``include_drift`` adds the
    first-order odd term, which is what limits the window error to O(eps)
    when ``E != 0``. Observed orders are ``log2`` of successive error ratios
    for halved ``eps``.
    """
    profile = profile or BumpProfile()
    A = continuum_coefficient_A(params)
    E = continuum_drift(params)
    l_top = max(window[1], profile.mu) + 0.75
    errors, ratios = [], []
    for eps in eps_values:
        k_max = int(math.ceil(l_top / eps))
        k = np.arange(k_max + 1)
        l = eps * k
        p, *_ = profile.derivatives(l)
        mf = MeanFieldParams(params.c, params.d, k_max=k_max)
        rhs = mf_rhs(p, mf, boundary="none")
        lead = eps ** 2 * A * profile.d2_p5(l)
        pred = lead + (2.0 * eps ** 3 * E / 5.0 * profile.d3_p5(l) if include_drift else 0.0)
        if where == "center":
            sel = np.array([int(round(profile.mu / eps))])
            if not math.isclose(sel[0] * eps, profile.mu, rel_tol=1e-12):
                raise ValueError("the bump centre must fall on a grid point for where='center'")
        elif where == "window":
            sel = np.nonzero((l >= window[0]) & (l <= window[1]))[0]
        else:
            raise ValueError(f"unknown where={where!r}")
        scale = np.abs(lead[sel]).max() if A != 0 else eps ** 2
        errors.append(np.abs(rhs[sel] - pred[sel]).max() / scale)
        c = int(round(profile.mu / eps))
        ratios.append(rhs[c] / lead[c] if lead[c] != 0 else np.nan)
    eps_arr = np.asarray(eps_values, dtype=float)
    errors = np.asarray(errors)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(errors[:-1] / errors[1:]) / np.log(eps_arr[:-1] / eps_arr[1:])
    return RefinementResult(eps_arr, errors, orders, np.asarray(ratios), A, E, include_drift, where)


# ---------------------------------------------------------------------------
# Self-similar profile
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _profile_integral() -> float:
    """``int_{-1}^{1} (1 - u**2)**(1/4) du``, with the endpoint singularity as a quadrature weight."""
    value, _ = quad(lambda u: 1.0, -1.0, 1.0, weight="alg", wvar=(0.25, 0.25))
    return value


def normalizing_C1(A: float) -> float:
    """C1 for which ``f`` integrates to one.

    Substituting ``x = sqrt(15 A C1) u`` gives ``int f = C1**(3/4) sqrt(15 A) I``
    with ``I`` the quadrature above.
    """
    if A <= 0:
        raise ValueError("A must be positive")
    return (1.0 / (math.sqrt(15.0 * A) * _profile_integral())) ** (4.0 / 3.0)


@dataclass(frozen=True)
class SelfSimilarParams:
    A: float
    C1: float | None = None
    epsilon: float = 1e-3
    gamma: float = GAMMA
    C0: float = 0.0

    def __post_init__(self):
        if self.C1 is None and self.A > 0:
            object.__setattr__(self, "C1", normalizing_C1(self.A))

    @property
    def half_width(self) -> float:
        """Edge of the support of ``f``: ``sqrt(15 A C1)``."""
        return math.sqrt(15.0 * self.A * self.C1)

    def to_dict(self) -> dict:
        return {"A": self.A, "C1": self.C1, "epsilon": self.epsilon, "gamma": self.gamma, "C0": self.C0}


def _check_A(p: SelfSimilarParams):
    if p.A <= 0:
        raise ValueError(f"the profile needs A > 0, got {p.A}")
    if p.C1 is None or p.C1 <= 0:
        raise ValueError(f"the profile needs C1 > 0, got {p.C1}")


def _radicand(x, p: SelfSimilarParams):
    x = np.asarray(x, dtype=float)
    return p.C1 - x * x / (15.0 * p.A)


def barenblatt_f(x, p: SelfSimilarParams):
    _check_A(p)
    r = _radicand(x, p)
    out = np.where(r > 0, np.abs(r) ** 0.25, 0.0)
    return out if out.ndim else float(out)


def f5_derivative(x, p: SelfSimilarParams):
    """``d/dx f**5 = (5/4) r**(1/4) r'`` with ``r = C1 - x**2/(15A)``, i.e. ``-x f / (6A)``."""
    _check_A(p)
    x = np.asarray(x, dtype=float)
    r = _radicand(x, p)
    return np.where(r > 0, 1.25 * np.abs(r) ** 0.25 * (-2.0 * x / (15.0 * p.A)), 0.0)


def similarity_ode_residual(p: SelfSimilarParams, xs, method: str = "analytic", h: float = 1e-3) -> float:
    """``max |gamma x f + A (f**5)' - C0|`` over ``xs`` (strictly inside the support)."""
    _check_A(p)
    xs = np.asarray(xs, dtype=float)
    margin = h if method == "fd" else 0.0
    if np.any(np.abs(xs) + margin >= p.half_width):
        raise SupportError("sample points must lie strictly inside the support")
    f = barenblatt_f(xs, p)
    if method == "analytic":
        df5 = f5_derivative(xs, p)
    elif method == "fd":
        df5 = (barenblatt_f(xs + h, p) ** 5 - barenblatt_f(xs - h, p) ** 5) / (2.0 * h)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.max(np.abs(p.gamma * xs * f + p.A * df5 - p.C0)))


def self_similar_P(l, s, p: SelfSimilarParams):
    """``s**-gamma f(l s**-gamma)``."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be positive")
    scale = s ** (-p.gamma)
    return barenblatt_f(np.asarray(l, dtype=float) * scale, p) * scale


def pk_t(k, t, p: SelfSimilarParams):
    """Height law in lattice units: ``self_similar_P(eps k, eps**2 t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    return self_similar_P(p.epsilon * np.asarray(k, dtype=float), p.epsilon ** 2 * t, p)


def self_similar_P_printed(l, s, p: SelfSimilarParams):
    """The published closed form ``(C1 / s**(1/3) - l**2 / (15 A s**(2/3)))**(1/4)``.

    Algebraically this is ``s**(-1/12) f(l s**(-1/6))``, so its mass grows
    like ``s**(1/12)`` instead of staying fixed.
    """
    _check_A(p)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be positive")
    l = np.asarray(l, dtype=float)
    r = p.C1 / s ** (1 / 3) - l * l / (15.0 * p.A * s ** (2 / 3))
    out = np.where(r > 0, np.abs(r) ** 0.25, 0.0)
    return out if out.ndim else float(out)


def pk_t_printed(k, t, p: SelfSimilarParams):
    """The published lattice form ``(C1 eps**-1/2 t**-1/3 - eps k**2 t**-2/3 / (15 A))**(1/4)``."""
    _check_A(p)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    k = np.asarray(k, dtype=float)
    eps = p.epsilon
    r = p.C1 / math.sqrt(eps) / t ** (1 / 3) - eps / (15.0 * p.A) * k * k / t ** (2 / 3)
    out = np.where(r > 0, np.abs(r) ** 0.25, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# PDE residual
# ---------------------------------------------------------------------------

def pde_residual(p: SelfSimilarParams, ls, ss, h: float, profile: Callable | None = None,
                 check_support: bool = True) -> float:
    """``max |dP/ds - A (5 P**4 P'' + 20 P**3 P'**2)|`` with central differences of step ``h``.

    ``profile(l, s)`` defaults to :func:`self_similar_P`. Stencils touching the
    support edge are rejected since one-sided differences are not used.
    """
    L, S = np.meshgrid(np.asarray(ls, dtype=float), np.asarray(ss, dtype=float), indexing="ij")
    if np.any(S - h <= 0):
        raise ValueError("s - h must stay positive")
    if profile is None:
        _check_A(p)
        if check_support:
            edge = p.half_width * (S - h) ** p.gamma
            if np.any(np.abs(L) + h >= edge):
                raise SupportError("finite-difference stencil reaches the support edge")

        def profile(l, s):
            return self_similar_P(l, s, p)

    P = profile(L, S)
    dPds = (profile(L, S + h) - profile(L, S - h)) / (2.0 * h)
    Pp = profile(L + h, S)
    Pm = profile(L - h, S)
    dPdl = (Pp - Pm) / (2.0 * h)
    d2Pdl2 = (Pp - 2.0 * P + Pm) / (h * h)
    rhs = p.A * (5.0 * P ** 4 * d2Pdl2 + 20.0 * P ** 3 * dPdl ** 2)
    return float(np.max(np.abs(dPds - rhs)))


def pde_convergence(p: SelfSimilarParams, ls, ss, hs=(0.04, 0.02, 0.01, 0.005)) -> dict:
    residuals = np.array([pde_residual(p, ls, ss, h) for h in hs])
    hs = np.asarray(hs, dtype=float)
    orders = np.log(residuals[:-1] / residuals[1:]) / np.log(hs[:-1] / hs[1:])
    return {"h": hs.tolist(), "residuals": residuals.tolist(), "orders": orders.tolist(),
            "min_order": float(orders.min())}


# ---------------------------------------------------------------------------
# Exponents
# ---------------------------------------------------------------------------

@dataclass
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared}


def fit_exponent(series) -> ExponentFit:
    """Least-squares line through ``(log t, log value)``."""
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("series must be a sequence of (t, value) pairs")
    if len(data) < 5:
        raise ValueError("need at least five points")
    if np.any(data <= 0):
        raise ValueError("times and values must be positive")
    x, y = np.log(data[:, 0]), np.log(data[:, 1])
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(slope), float(intercept), r2)


def profile_moments(t: float, p: SelfSimilarParams, form: str = "printed", support: str = "nonnegative") -> dict:
    """Mass, mean and variance over integer heights of the lattice law at time ``t``.

    ``support="nonnegative"`` sums over ``k >= 0``; ``"symmetric"`` over all
    integers inside the support. Mean and variance use the renormalized law.
    """
    law = {"printed": pk_t_printed, "consistent": pk_t}[form]
    if form == "printed":
        edge = math.sqrt(15.0 * p.A * p.C1 / p.epsilon ** 1.5) * t ** (1 / 6)
    else:
        edge = p.half_width * (p.epsilon ** 2 * t) ** p.gamma / p.epsilon
    k_hi = int(math.floor(edge)) + 1
    k = np.arange(0 if support == "nonnegative" else -k_hi, k_hi + 1)
    if support not in ("nonnegative", "symmetric"):
        raise ValueError(f"unknown support {support!r}")
    w = law(k, t, p)
    mass = float(w.sum())
    mean = float(k @ w / mass)
    var = float(((k - mean) ** 2) @ w / mass)
    return {"mass": mass, "mean": mean, "variance": var}


CLAIMED = {"mean": 1 / 12, "width_sq": 1 / 4}
SIMILARITY = {"mean": 1 / 6, "variance": 1 / 3}


def exponent_report(p: SelfSimilarParams, times=None, form: str = "printed",
                    support: str = "nonnegative") -> dict:
    """Fitted growth exponents of the moments, next to the published and similarity values."""
    times = 2.0 ** np.arange(11) if times is None else np.asarray(times, dtype=float)
    rows = [profile_moments(float(t), p, form, support) for t in times]
    fits = {}
    for key in ("mass", "mean", "variance"):
        values = np.array([r[key] for r in rows])
        if np.all(values > 0):
            fits[key] = fit_exponent(np.column_stack([times, values])).to_dict()
    return {
        "params": p.to_dict(),
        "form": form,
        "support": support,
        "times": times.tolist(),
        "moments": rows,
        "fits": fits,
        "claimed": CLAIMED,
        "similarity_prediction": SIMILARITY,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
