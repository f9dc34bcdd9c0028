"""Mean-field closure for the one-site height distribution.

Factorizing the five-column window law into one-site marginals turns the
climb and descend hops into

    dP_k/dt = 2 Lap[F](k) + boundary terms,
    F(k) = sum_j c_j M_j(k) - sum_j d_j N_j(k),

where ``Lap`` is the discrete Laplacian and each monomial is a product of
``P_{k-1}, P_k, P_{k+1}`` with total degree five. Skip and slide hops leave
the one-site law unchanged under the closure and drop out.

For the geometric law ``P_k = (1 - lam) lam**k`` every monomial equals
``(1 - lam)**5 lam**(5k)`` times ``lam**e`` with ``e`` its offset exponent,
so ``F(k) = (1 - lam)**5 lam**(5k) G(lam)`` and the law is stationary in the
bulk iff ``G(lam) = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .distributions import HeightDistribution
from .exact_master import IntegrationError
from .lattice import RateTable

__all__ = [
    "MONOMIALS",
    "MeanFieldParams",
    "MeanFieldTrajectory",
    "IntegrationError",
    "NegativityError",
    "StationaryAnalysis",
    "bracket",
    "bulk_residual",
    "geometric_stats",
    "mf_evolve",
    "mf_rhs",
    "paper_conditions",
    "solve_lambda",
    "stationary_analysis",
    "stationary_quadratic",
]

# Power of P_{k-1}, P_k, P_{k+1} in each monomial of the bracket.
MONOMIALS: dict[str, tuple[int, int, int]] = {
    "c1": (0, 5, 0),
    "c2": (0, 4, 1),
    "c3": (1, 4, 0),
    "c4": (1, 3, 1),
    "d1": (1, 3, 1),
    "d2": (1, 2, 2),
    "d3": (2, 2, 1),
    "d4": (2, 1, 2),
}


class NegativityError(RuntimeError):
    """A probability dropped below the abort threshold during integration."""


@dataclass(frozen=True)
class MeanFieldParams:
    c: tuple[float, float, float, float]
    d: tuple[float, float, float, float]
    k_max: int = 200
    rtol: float = 1e-8
    atol: float = 1e-12

    def __post_init__(self):
        c = tuple(float(x) for x in self.c)
        d = tuple(float(x) for x in self.d)
        if len(c) != 4 or len(d) != 4:
            raise ValueError("need four climb and four descend rates")
        if any(x < 0 or not math.isfinite(x) for x in c + d):
            raise ValueError("rates must be finite and nonnegative")
        if self.k_max < 4:
            raise ValueError("k_max must be at least 4")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_rates(cls, rates: RateTable, **kw) -> "MeanFieldParams":
        return cls(rates.climb, rates.descend, **kw)

    def weights(self) -> dict[str, float]:
        """Signed weight of each monomial: +c_j, -d_j."""
        w = {f"c{i + 1}": self.c[i] for i in range(4)}
        w.update({f"d{i + 1}": -self.d[i] for i in range(4)})
        return w

    def to_dict(self) -> dict:
        return {"c": list(self.c), "d": list(self.d), "k_max": self.k_max}


def _shifted(p: np.ndarray):
    z = np.zeros(1)
    return np.concatenate([z, p[:-1]]), p, np.concatenate([p[1:], z])


def bracket(p, params: MeanFieldParams) -> np.ndarray:
    """F(k) for k = 0..len(p)-1, with P_{-1} = P_{k_max+1} = 0."""
    lo, mid, hi = _shifted(np.asarray(p, dtype=float))
    out = np.zeros_like(mid)
    for name, w in params.weights().items():
        if w:
            a, b, c = MONOMIALS[name]
            out += w * lo ** a * mid ** b * hi ** c
    return out


def _laplacian(f: np.ndarray) -> np.ndarray:
    lo, mid, hi = _shifted(f)
    return lo - 2.0 * mid + hi


def _boundary(p: np.ndarray, params: MeanFieldParams, kind: str) -> np.ndarray:
    c1, c2 = params.c[0], params.c[1]
    out = np.zeros_like(p)
    if kind == "paper":
        out[0] += 4.0 * (c1 * p[0] ** 5 + c2 * p[0] ** 4 * p[1])
        out[1] -= c1 * p[1] ** 5 + c2 * p[1] ** 4 * p[2]
    elif kind == "conservative":
        # a climb cannot start from an empty column: remove the k = 0
        # departures that the bulk Laplacian counts, on both columns
        m0 = c1 * p[0] ** 5 + c2 * p[0] ** 4 * p[1]
        out[0] += 4.0 * m0
        out[1] -= 2.0 * m0
    elif kind != "none":
        raise ValueError(f"unknown boundary {kind!r}")
    return out


def mf_rhs(P, params: MeanFieldParams, boundary: str = "paper") -> np.ndarray:
    """Time derivative of the one-site law under the closure.

    ``boundary="paper"`` adds ``+4(c1 P0^5 + c2 P0^4 P1)`` at k = 0 and
    ``-(c1 P1^5 + c2 P1^4 P2)`` at k = 1 as published. ``"conservative"``
    instead removes the impossible departures from height 0, which keeps
    both the total mass and the mean height fixed. ``"none"`` gives the
    bare bulk term.
    """
    p = np.asarray(getattr(P, "probabilities", P), dtype=float)
    if p.ndim != 1 or len(p) != params.k_max + 1:
        raise ValueError(f"expected {params.k_max + 1} entries, got shape {p.shape}")
    return 2.0 * _laplacian(bracket(p, params)) + _boundary(p, params, boundary)


@dataclass
class MeanFieldTrajectory:
    times: np.ndarray
    distributions: list[HeightDistribution]
    drift: np.ndarray
    min_entry: np.ndarray
    boundary: str

    def rows(self):
        for t, dist in zip(self.times, self.distributions):
            for k, v in enumerate(dist.probabilities):
                yield float(t), k, float(v)


def mf_evolve(P0, params: MeanFieldParams, t_end: float, sample_times=None, boundary: str = "paper",
              negativity: float = -1e-6, method: str = "DOP853") -> MeanFieldTrajectory:
    """Integrate the closure, reporting mass drift and the smallest entry at each sample.

    Aborts with :class:`NegativityError` if any ``P_k`` falls below
    ``negativity``; smaller negative noise is tolerated. Raises
    :class:`IntegrationError` if the solution blows up before ``t_end``
    (the published boundary terms do this from a surface of height 0).
    """
    p0 = np.asarray(getattr(P0, "probabilities", P0), dtype=float)
    if len(p0) != params.k_max + 1:
        raise ValueError(f"expected {params.k_max + 1} entries, got {len(p0)}")
    times = np.array([t_end] if sample_times is None else sample_times, dtype=float)
    if np.any(times < 0) or np.any(times > t_end) or np.any(np.diff(times) < 0):
        raise ValueError("sample times must be sorted and within [0, t_end]")
    if p0.min(initial=0.0) < negativity:
        raise NegativityError(f"initial law has an entry {p0.min():.3g} below {negativity}")
    mass0 = p0.sum()

    if t_end == 0:
        ys = np.repeat(p0[:, None], len(times), axis=1)
    else:
        def crossed(_t, y):
            return y.min() - negativity
        crossed.terminal = True
        crossed.direction = -1

        last = {"t": 0.0, "mass": mass0}

        def rhs(t, y):
            last["t"], last["mass"] = t, y.sum()
            return mf_rhs(y, params, boundary)

        sol = solve_ivp(rhs, (0.0, t_end), p0, method=method, t_eval=times, rtol=params.rtol,
                        atol=params.atol, events=crossed)
        if sol.status == 1:
            raise NegativityError(f"P_k fell below {negativity} at t = {sol.t_events[0][0]:.6g}")
        if sol.status != 0:
            raise IntegrationError(f"{sol.message} (near t = {last['t']:.6g}, mass {last['mass']:.6g})")
        ys = sol.y
    dists = [HeightDistribution(ys[:, i].copy(), float(t)) for i, t in enumerate(times)]
    drift = np.array([abs(d.total() - mass0) for d in dists])
    min_entry = np.array([d.probabilities.min() for d in dists])
    return MeanFieldTrajectory(times, dists, drift, min_entry, boundary)


# ---------------------------------------------------------------------------
# Stationary geometric law
# ---------------------------------------------------------------------------

def stationary_quadratic(params: MeanFieldParams):
    """(published triple, collected triple) as ``(q2, q1, q0)``.

    The published triple is ``(c2-d2, -(c1-d1+c4-d4), c3-d3)``. The collected
    triple comes from substituting the geometric law into the bracket: a
    monomial with powers ``(a, b, c)`` of ``P_{k-1}, P_k, P_{k+1}`` contributes
    its weight to the coefficient of ``lam**(c - a)``, and multiplying by
    ``lam`` shifts exponents -1, 0, 1 to q0, q1, q2.
    """
    c1, c2, c3, c4 = params.c
    d1, d2, d3, d4 = params.d
    published = (c2 - d2, -(c1 - d1 + c4 - d4), c3 - d3)
    # climb and descend parts are summed apart so equal rates cancel exactly
    gain, loss = [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]  # q0, q1, q2
    for name, w in params.weights().items():
        a, _, c = MONOMIALS[name]
        if w >= 0:
            gain[c - a + 1] += w
        else:
            loss[c - a + 1] -= w
    q0, q1, q2 = (g - l for g, l in zip(gain, loss))
    return published, (q2, q1, q0)


def paper_conditions(coeffs) -> dict[str, bool]:
    """The published sign conditions, written for a generic triple ``(q2, q1, q0)``.

    ``one_root``: ``q0 (q2 + q1 + q0) < 0``; ``two_roots``: ``q0 / q2 < 0`` and
    ``(q2 + q1 + q0) / q2 < 0``. Applied to the published triple these are
    exactly the printed rate inequalities.
    """
    q2, q1, q0 = (float(x) for x in coeffs)
    at_one = q2 + q1 + q0
    two = q2 != 0 and q0 / q2 < 0 and at_one / q2 < 0
    return {"one_root": q0 * at_one < 0, "two_roots": bool(two)}


def geometric_stats(lam: float) -> dict[str, float]:
    """Mean, published width and variance of ``(1 - lam) lam**k``."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    return {
        "mean_height": lam / (1.0 - lam),
        "width_paper": math.sqrt(lam) / (1.0 - lam),
        "width_variance": lam / (1.0 - lam) ** 2,
    }


@dataclass
class StationaryAnalysis:
    quad_coeffs: tuple[float, float, float]
    roots: list[float]
    roots_in_unit: list[float]
    phase: str
    conditions: dict[str, bool]
    degenerate: bool = False
    stats: list[dict[str, float]] = field(default_factory=list)

    @property
    def lambda_(self) -> float | None:
        """The root in (0, 1) when it is unique; ``None`` otherwise."""
        return self.roots_in_unit[0] if len(self.roots_in_unit) == 1 else None

    @property
    def mean_height(self):
        return self.stats[0]["mean_height"] if self.lambda_ is not None else None

    def to_dict(self) -> dict:
        return {
            "quad_coeffs": list(self.quad_coeffs),
            "roots": self.roots,
            "roots_in_unit": self.roots_in_unit,
            "phase": self.phase,
            "lambda": self.lambda_,
            "degenerate": self.degenerate,
            "conditions": self.conditions,
            "stats": self.stats,
        }


def _real_roots(q2: float, q1: float, q0: float) -> tuple[list[float], bool]:
    if q2 == 0.0:
        if q1 == 0.0:
            return [], q0 == 0.0
        return [-q0 / q1], False
    disc = q1 * q1 - 4.0 * q2 * q0
    if disc < 0:
        return [], False
    if disc == 0:
        r = -q1 / (2.0 * q2)
        return [r, r], False
    # pick the sign that avoids cancellation, recover the other root from the product
    q = -0.5 * (q1 + math.copysign(math.sqrt(disc), q1))
    r1 = q / q2
    r2 = q0 / q if q != 0 else -q1 / q2 - r1
    return sorted([r1, r2]), False


def solve_lambda(coeffs) -> StationaryAnalysis:
    """Real roots of ``q2 lam^2 + q1 lam + q0`` classified against the open interval (0, 1)."""
    q2, q1, q0 = (float(x) for x in coeffs)
    if not all(math.isfinite(x) for x in (q2, q1, q0)):
        raise ValueError("coefficients must be finite")
    roots, degenerate = _real_roots(q2, q1, q0)
    inside = sorted({r for r in roots if 0.0 < r < 1.0})
    phase = {0: "none", 1: "one-root", 2: "two-roots"}[len(inside)]
    return StationaryAnalysis((q2, q1, q0), roots, inside, phase, paper_conditions((q2, q1, q0)),
                              degenerate, [dict(geometric_stats(r), **{"lambda": r}) for r in inside])


def bulk_residual(lam: float, params: MeanFieldParams, k: int = 3) -> float:
    """``G(lam)``: the bracket at the geometric law divided by ``(1-lam)^5 lam^(5k)``.

    Evaluated numerically on the actual array, at an interior height ``k``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    p = HeightDistribution.geometric(lam, max(k + 2, 4)).probabilities
    return float(bracket(p, params)[k] / ((1.0 - lam) ** 5 * lam ** (5 * k)))


def stationary_analysis(params: MeanFieldParams) -> dict:
    """Both quadratics, the collected one solved and checked against the bracket."""
    published, collected = stationary_quadratic(params)
    analysis = solve_lambda(collected)
    published_analysis = solve_lambda(published)
    return {
        "rates": params.to_dict(),
        "published_triple": list(published),
        "collected_triple": list(collected),
        "analysis": analysis.to_dict(),
        "published_analysis": published_analysis.to_dict(),
        "bulk_residual_at_roots": [bulk_residual(r, params) for r in analysis.roots_in_unit],
        "bulk_residual_at_published_roots": [bulk_residual(r, params)
                                             for r in published_analysis.roots_in_unit],
        "published_value_at_roots": [published[0] * r * r + published[1] * r + published[2]
                                     for r in analysis.roots_in_unit],
        "triples_agree": bool(np.allclose(published, collected, rtol=0, atol=1e-14)),
    }


def analysis_json(params: MeanFieldParams) -> str:
    return json.dumps(stationary_analysis(params), indent=2, sort_keys=True)
