"""Kinetic Monte Carlo sampling of the conserved RSOS dynamics.

Trajectories are drawn with the rejection-free direct method: the waiting
time is exponential with the total rate of the current move catalog and the
next move is chosen with probability proportional to its rate. Each
replica owns a Philox stream keyed by ``(base_seed, replica)``, and the
uniforms are consumed in a fixed order (waiting time, then selection), so a
trajectory is reproducible from its seed alone.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .distributions import HeightDistribution, pad_to
from .lattice import HeightConfig, MoveEvent, RateTable, is_restricted, list_moves

__all__ = [
    "AbsorbingState",
    "EnsembleStats",
    "ObservableSeries",
    "Simulation",
    "TrajectoryState",
    "ensemble",
    "kmc_step",
    "log_grid",
    "make_rng",
    "replica_seed",
    "simulate",
]


class AbsorbingState(RuntimeError):
    """No legal move exists; the clock would jump to infinity."""


class InvariantViolation(AssertionError):
    """Debug check found an unrestricted configuration or a stale rate cache."""


def replica_seed(base_seed: int, replica: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(replica)])


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def _seed_label(seed) -> str:
    if isinstance(seed, np.random.SeedSequence):
        return json.dumps(list(np.atleast_1d(seed.entropy).tolist()))
    return json.dumps(seed)


def log_grid(t_end: float, count: int = 20, t_min: float | None = None) -> np.ndarray:
    """``0`` followed by ``count - 1`` log-spaced times ending at ``t_end``."""
    if t_min is None:
        t_min = t_end * 1e-3
    return np.concatenate([[0.0], np.geomspace(t_min, t_end, count - 1)])


# ---------------------------------------------------------------------------
# Single steps (reference stepper built directly on the lattice move catalog)
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryState:
    config: HeightConfig
    clock: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: make_rng(0))
    last_move: MoveEvent | None = None

    def copy(self) -> "TrajectoryState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return TrajectoryState(self.config, self.clock, rng, self.last_move)


def kmc_step(state: TrajectoryState, rates: RateTable) -> TrajectoryState:
    """One direct-method event; returns a new state, the input is left untouched."""
    moves = list_moves(state.config, rates)
    if not moves:
        raise AbsorbingState(f"no legal moves from {state.config.label()}")
    new = state.copy()
    total = sum(m.rate for m in moves)
    wait = -np.log1p(-new.rng.random()) / total
    u = new.rng.random() * total
    chosen = moves[-1]
    for m in moves:
        if u < m.rate:
            chosen = m
            break
        u -= m.rate
    h = list(state.config)
    h[chosen.source] -= 1
    h[chosen.target] += 1
    new.config = HeightConfig(h)
    new.clock = state.clock + wait
    new.last_move = chosen
    return new


# ---------------------------------------------------------------------------
# Compiled engine
# ---------------------------------------------------------------------------

class Simulation:
    """Mutable trajectory driven by the compiled kernel.

    ``advance_to(t)`` runs until the next event would fall after ``t``;
    ``step()`` performs exactly one event.
    """

    def __init__(self, init, rates: RateTable, seed=0, check: bool = False, batch: int = 4096):
        heights = np.array(list(init), dtype=np.int64)
        if not is_restricted(heights):
            raise ValueError(f"initial configuration {tuple(heights)} is not restricted")
        self.n = len(heights)
        self.h = heights
        self.rates = rates
        self.r2, self.l2, self.r1, self.l1 = rates.arrays()
        self.size = 1 << max(0, (self.n - 1).bit_length())
        self.rate_cache = np.zeros((self.n, 4))
        self.tree = np.zeros(2 * self.size)
        K.init_rates(self.h, self.n, self.r2, self.l2, self.r1, self.l1, self.rate_cache, self.tree, self.size)
        self.times = np.zeros(3)
        self.rng = make_rng(seed)
        self.seed = seed
        self.batch = batch
        self.uniforms = np.empty(0)
        self.pos = 0
        self.check = check
        self.events = 0
        self.absorbed = False
        self.last_move = np.zeros(3, dtype=np.int64)

    @property
    def clock(self) -> float:
        return float(self.times[0])

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def _run(self, t_stop: float, max_events: int) -> int:
        while True:
            status, self.pos, done = K.advance(
                self.h, self.n, self.r2, self.l2, self.r1, self.l1, self.rate_cache, self.tree,
                self.size, self.times, t_stop, self.uniforms, self.pos, max_events, self.check,
                self.last_move)
            self.events += done
            max_events -= done
            if status == K.NEED_UNIFORMS:
                self.uniforms = self.rng.random(self.batch)
                self.pos = 0
                continue
            if status == K.BROKEN:
                raise InvariantViolation(f"invariant broken after event {self.events}: {tuple(self.h)}")
            if status == K.ABSORBED:
                self.absorbed = True
            return status

    def advance_to(self, t: float) -> None:
        if not self.absorbed:
            self._run(float(t), np.iinfo(np.int64).max)

    def step(self) -> None:
        status = self._run(np.inf, 1)
        if status == K.ABSORBED:
            raise AbsorbingState(f"no legal moves from {tuple(self.h)}")

    def config(self) -> HeightConfig:
        return HeightConfig(tuple(int(x) for x in self.h))


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

@dataclass
class ObservableSeries:
    """Surface observables of one trajectory at the sample times.

    ``one_site_hist[s, k]`` is the fraction of columns at height ``k``;
    ``site_height[s]`` is the height of the first column.
    """

    sample_times: np.ndarray
    mean_height: np.ndarray
    width_sq: np.ndarray
    one_site_hist: np.ndarray
    site_height: np.ndarray
    replica_seed: str
    n: int
    K: int
    events: int = 0
    absorbed: bool = False
    absorbed_at: float | None = None

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "mean_height", "width_sq", "site_1_height"])
        for row in zip(self.sample_times, self.mean_height, self.width_sq, self.site_height):
            writer.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
        return _finish(buf, path)

    def hist_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "k", "fraction"])
        for t, row in zip(self.sample_times, self.one_site_hist):
            for k, v in enumerate(row):
                writer.writerow([repr(float(t)), k, repr(float(v))])
        return _finish(buf, path)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "K": self.K,
            "replica_seed": self.replica_seed,
            "events": self.events,
            "absorbed": self.absorbed,
            "absorbed_at": self.absorbed_at,
            "sample_times": self.sample_times.tolist(),
            "mean_height": self.mean_height.tolist(),
            "width_sq": self.width_sq.tolist(),
            "site_height": self.site_height.tolist(),
            "one_site_hist": self.one_site_hist.tolist(),
        }


def _finish(buf: io.StringIO, path) -> str:
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _check_samples(samples, t_end):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or np.any(np.diff(samples) < 0):
        raise ValueError("sample times must be a sorted 1-D sequence")
    if len(samples) and (samples[0] < 0 or samples[-1] > t_end):
        raise ValueError("sample times must lie in [0, t_end]")
    return samples


def _raw_samples(init, rates, t_end, samples, seed, check, batch):
    """Per-sample integer observables: (site counts per height, sum of h^2, first column)."""
    sim = Simulation(init, rates, seed, check=check, batch=batch)
    counts, sumsq, first = [], [], []
    for t in samples:
        sim.advance_to(t)
        counts.append(np.bincount(sim.h))
        sumsq.append(int(sim.h @ sim.h))
        first.append(int(sim.h[0]))
    if not sim.absorbed:
        sim.advance_to(t_end)
    return sim, counts, sumsq, first


def simulate(init, rates: RateTable, t_end: float, samples=None, seed=0, check: bool = False,
             batch: int = 4096) -> ObservableSeries:
    """Sample observables along one trajectory (state just before each sample time)."""
    samples = log_grid(t_end) if samples is None else _check_samples(samples, t_end)
    sim, counts, sumsq, first = _raw_samples(init, rates, t_end, samples, seed, check, batch)
    n = sim.n
    total = int(sim.h.sum())
    width = max((len(c) for c in counts), default=1)
    hist = np.array([pad_to(c, width) for c in counts]).reshape(len(samples), width) / n
    mean = np.full(len(samples), total / n)
    width_sq = np.array(sumsq, dtype=float) / n - (total / n) ** 2
    return ObservableSeries(samples, mean, np.maximum(width_sq, 0.0), hist, np.array(first),
                            _seed_label(seed), n, total, sim.events, sim.absorbed,
                            sim.clock if sim.absorbed else None)


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

@dataclass
class EnsembleStats:
    """Mergeable moment sums over replicas.

    Everything accumulated is integer valued (column counts, sums of squared
    heights, first-column indicators), stored in float64, so merging is exact
    while the sums stay below 2**53.
    """

    sample_times: np.ndarray
    n: int
    K: int
    replicas: int = 0
    hist_sum: np.ndarray = None
    hist_sumsq: np.ndarray = None
    site_counts: np.ndarray = None
    h2_sum: np.ndarray = None
    h2_sumsq: np.ndarray = None
    absorbed: int = 0
    events: int = 0
    first_replica: int = 0

    def __post_init__(self):
        s = len(self.sample_times)
        if self.hist_sum is None:
            self.hist_sum = np.zeros((s, 1))
            self.hist_sumsq = np.zeros((s, 1))
            self.site_counts = np.zeros((s, 1))
            self.h2_sum = np.zeros(s)
            self.h2_sumsq = np.zeros(s)

    def _widen(self, width: int):
        for name in ("hist_sum", "hist_sumsq", "site_counts"):
            arr = getattr(self, name)
            if arr.shape[1] < width:
                setattr(self, name, np.pad(arr, ((0, 0), (0, width - arr.shape[1]))))

    def add(self, counts, sumsq, first, absorbed=False, events=0):
        width = max(max(len(c) for c in counts), max(first) + 1)
        self._widen(width)
        for s, c in enumerate(counts):
            c = c.astype(float)
            self.hist_sum[s, : len(c)] += c
            self.hist_sumsq[s, : len(c)] += c * c
            self.site_counts[s, first[s]] += 1
        h2 = np.array(sumsq, dtype=float)
        self.h2_sum += h2
        self.h2_sumsq += h2 * h2
        self.replicas += 1
        self.absorbed += int(absorbed)
        self.events += events

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if not np.array_equal(self.sample_times, other.sample_times) or (self.n, self.K) != (other.n, other.K):
            raise ValueError("can only merge ensembles of the same lattice and sample grid")
        width = max(self.hist_sum.shape[1], other.hist_sum.shape[1])
        a, b = _widened(self, width), _widened(other, width)
        return EnsembleStats(
            self.sample_times, self.n, self.K, a.replicas + b.replicas,
            a.hist_sum + b.hist_sum, a.hist_sumsq + b.hist_sumsq, a.site_counts + b.site_counts,
            a.h2_sum + b.h2_sum, a.h2_sumsq + b.h2_sumsq, a.absorbed + b.absorbed,
            a.events + b.events, min(a.first_replica, b.first_replica))

    # -- estimates --------------------------------------------------------
    def _mean_se(self, total, total_sq, scale):
        r = self.replicas
        mean = total / r
        if r < 2:
            return mean * scale, np.zeros_like(mean)
        var = np.maximum(total_sq / r - mean * mean, 0.0) * r / (r - 1)
        return mean * scale, np.sqrt(var / r) * scale

    @property
    def mean_height(self) -> np.ndarray:
        return np.full(len(self.sample_times), self.K / self.n)

    def width_sq(self) -> tuple[np.ndarray, np.ndarray]:
        mean, se = self._mean_se(self.h2_sum, self.h2_sumsq, 1.0 / self.n)
        return mean - (self.K / self.n) ** 2, se

    def spatial_hist(self) -> tuple[np.ndarray, np.ndarray]:
        """Fraction of columns at each height: mean and standard error over replicas."""
        return self._mean_se(self.hist_sum, self.hist_sumsq, 1.0 / self.n)

    def site_hist(self) -> tuple[np.ndarray, np.ndarray]:
        """Histogram of the first column's height with multinomial standard errors."""
        p = self.site_counts / self.replicas
        return p, np.sqrt(p * (1.0 - p) / self.replicas)

    def site_distribution(self, sample: int = -1) -> HeightDistribution:
        p, _ = self.site_hist()
        return HeightDistribution(p[sample], float(self.sample_times[sample]))

    def spatial_distribution(self, sample: int = -1) -> HeightDistribution:
        p, _ = self.spatial_hist()
        return HeightDistribution(p[sample], float(self.sample_times[sample]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "mean_height", "width_sq", "width_sq_se", "replicas"])
        w, w_se = self.width_sq()
        for t, m, a, b in zip(self.sample_times, self.mean_height, w, w_se):
            writer.writerow([repr(float(t)), repr(float(m)), repr(float(a)), repr(float(b)), self.replicas])
        return _finish(buf, path)

    def hist_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "k", "spatial_fraction", "spatial_se", "site_1_fraction", "site_1_se"])
        sp_mean, sp_se = self.spatial_hist()
        st_mean, st_se = self.site_hist()
        for s, t in enumerate(self.sample_times):
            for k in range(sp_mean.shape[1]):
                writer.writerow([repr(float(t)), k, repr(float(sp_mean[s, k])), repr(float(sp_se[s, k])),
                                 repr(float(st_mean[s, k])), repr(float(st_se[s, k]))])
        return _finish(buf, path)

    def to_dict(self) -> dict:
        w, w_se = self.width_sq()
        sp_mean, sp_se = self.spatial_hist()
        st_mean, st_se = self.site_hist()
        return {
            "n": self.n,
            "K": self.K,
            "replicas": self.replicas,
            "first_replica": self.first_replica,
            "absorbed": self.absorbed,
            "events": self.events,
            "sample_times": self.sample_times.tolist(),
            "mean_height": self.mean_height.tolist(),
            "width_sq": w.tolist(),
            "width_sq_se": w_se.tolist(),
            "spatial_hist": sp_mean.tolist(),
            "spatial_hist_se": sp_se.tolist(),
            "site_hist": st_mean.tolist(),
            "site_hist_se": st_se.tolist(),
        }


def _widened(stats: EnsembleStats, width: int) -> EnsembleStats:
    out = EnsembleStats(stats.sample_times, stats.n, stats.K, stats.replicas,
                        stats.hist_sum, stats.hist_sumsq, stats.site_counts,
                        stats.h2_sum, stats.h2_sumsq, stats.absorbed, stats.events, stats.first_replica)
    out._widen(width)
    return out


def ensemble(init, rates: RateTable, t_end: float, samples=None, replicas: int = 1, base_seed: int = 0,
             first_replica: int = 0, check: bool = False, batch: int = 256) -> EnsembleStats:
    """Accumulate replicas ``first_replica .. first_replica + replicas - 1``.

    Replica ``r`` is seeded with :func:`replica_seed` ``(base_seed, r)``, so
    disjoint replica ranges can run anywhere and be merged afterwards.
    """
    if replicas < 1:
        raise ValueError("need at least one replica")
    samples = log_grid(t_end) if samples is None else _check_samples(samples, t_end)
    init = tuple(init)
    stats = EnsembleStats(samples, len(init), sum(init), first_replica=first_replica)
    for r in range(first_replica, first_replica + replicas):
        sim, counts, sumsq, first = _raw_samples(init, rates, t_end, samples,
                                                 replica_seed(base_seed, r), check, batch)
        stats.add(counts, sumsq, first, sim.absorbed, sim.events)
    return stats
