"""One-site height distributions shared by the exact, stochastic and mean-field engines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["HeightDistribution", "pad_to", "total_variation"]


def pad_to(p, length: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if len(p) >= length:
        return p
    return np.concatenate([p, np.zeros(length - len(p))])


def total_variation(p, q) -> float:
    """Half the L1 distance, after zero-padding to a common support."""
    m = max(len(p), len(q))
    return 0.5 * float(np.abs(pad_to(p, m) - pad_to(q, m)).sum())


@dataclass
class HeightDistribution:
    """Probability of a column having height ``k`` for ``k = 0..len-1``."""

    probabilities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)

    @classmethod
    def delta(cls, k: int, k_max: int, time: float = 0.0) -> "HeightDistribution":
        p = np.zeros(k_max + 1)
        p[k] = 1.0
        return cls(p, time)

    @classmethod
    def geometric(cls, lam: float, k_max: int) -> "HeightDistribution":
        k = np.arange(k_max + 1)
        return cls((1.0 - lam) * lam ** k)

    @property
    def k_max(self) -> int:
        return len(self.probabilities) - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(len(self.probabilities))

    def total(self) -> float:
        return float(self.probabilities.sum())

    def mean(self) -> float:
        return float(self.support @ self.probabilities / self.total())

    def variance(self) -> float:
        k = self.support
        m = self.mean()
        return float(((k - m) ** 2) @ self.probabilities / self.total())

    def tv(self, other: "HeightDistribution") -> float:
        return total_variation(self.probabilities, other.probabilities)
