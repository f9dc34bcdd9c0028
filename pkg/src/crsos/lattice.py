"""Configurations, move catalog and rate table of the conserved RSOS model.

A configuration is a vector of column heights on a periodic ring of ``n``
sites. Adjacent heights (including across the seam) differ by at most one,
and the dynamics moves the top particle of a column to a column one or two
sites away, so the particle number ``K`` is conserved.

Two-site hops are licensed by a departure profile around the leaving site
and an arrival profile around the landing site. Both profiles are read in
the direction of travel, so one 4x4 table serves rightward and leftward hops
when the dynamics is mirror symmetric::

    departure (behind, source, ahead)    arrival (before, target, beyond)
      1: (h,   h, h)                       1: (a,   a, a)
      2: (h-1, h, h)                       2: (a,   a, a+1)
      3: (h,   h, h-1)                     3: (a+1, a, a)
      4: (h-1, h, h-1)                     4: (a+1, a, a+1)

A one-site hop (slide) needs the step pattern ``(h, h-1)`` from the source
towards the target. Whatever the profiles say, a move is only legal if the
resulting configuration is still restricted.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "ALIASES",
    "SKIP_PAIRS",
    "HeightConfig",
    "InvalidMoveError",
    "MoveEvent",
    "RateTable",
    "StateSpace",
    "StateSpaceTooLarge",
    "apply_move",
    "arrival_class",
    "count_configs",
    "departure_class",
    "enumerate_configs",
    "flat_config",
    "is_restricted",
    "list_moves",
    "hop_rate",
    "move_kind",
    "state_cap",
]

STATE_CAP_ENV = "CRSOS_MAX_STATES"
DEFAULT_STATE_CAP = 500_000

# (departure class, arrival class) for the named climb/descend rates. A climb
# lands one level higher than it left, a descend one level lower.
ALIASES: dict[str, tuple[int, int]] = {
    "c1": (1, 1),
    "c2": (1, 2),
    "c3": (2, 1),
    "c4": (2, 2),
    "d1": (4, 4),
    "d2": (3, 4),
    "d3": (4, 3),
    "d4": (3, 3),
}

# Same-level two-site hops, in the order of the s1..s8 aliases.
SKIP_PAIRS: tuple[tuple[int, int], ...] = (
    (1, 3), (1, 4), (2, 3), (2, 4),
    (3, 1), (3, 2), (4, 1), (4, 2),
)
for _i, _pair in enumerate(SKIP_PAIRS, start=1):
    ALIASES[f"s{_i}"] = _pair
del _i, _pair

# Target offsets in catalog order.
OFFSETS = (-2, -1, 1, 2)


class InvalidMoveError(ValueError):
    """A move would break the restriction or empty a column below zero."""


class StateSpaceTooLarge(RuntimeError):
    """The predicted number of configurations exceeds the state cap."""


def state_cap() -> int:
    """Current cap on enumerated states (``CRSOS_MAX_STATES`` overrides)."""
    value = os.environ.get(STATE_CAP_ENV)
    if value is None:
        return DEFAULT_STATE_CAP
    return int(value)


@dataclass(frozen=True)
class HeightConfig:
    """Column heights on a periodic ring; ``heights[i]`` is site ``i``."""

    heights: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "heights", tuple(int(h) for h in self.heights))
        if len(self.heights) < 1:
            raise ValueError("a configuration needs at least one site")
        if min(self.heights) < 0:
            raise ValueError(f"heights must be nonnegative, got {self.heights}")

    @property
    def n(self) -> int:
        return len(self.heights)

    @property
    def total(self) -> int:
        return sum(self.heights)

    def __len__(self):
        return len(self.heights)

    def __iter__(self) -> Iterator[int]:
        return iter(self.heights)

    def __getitem__(self, i):
        return self.heights[i]

    def label(self) -> str:
        return "(" + ",".join(str(h) for h in self.heights) + ")"


def _heights(config) -> tuple[int, ...]:
    if isinstance(config, HeightConfig):
        return config.heights
    return tuple(int(h) for h in config)


def flat_config(n: int, K: int) -> HeightConfig:
    if n < 1 or K < 0 or K % n:
        raise ValueError(f"flat substrate needs K a nonnegative multiple of n (n={n}, K={K})")
    return HeightConfig((K // n,) * n)


def is_restricted(config) -> bool:
    """True iff all heights are nonnegative and periodic neighbours differ by <= 1."""
    h = _heights(config)
    n = len(h)
    if any(x < 0 for x in h):
        return False
    return all(abs(h[(i + 1) % n] - h[i]) <= 1 for i in range(n))


# ---------------------------------------------------------------------------
# Rate table
# ---------------------------------------------------------------------------

def _as_table(values) -> np.ndarray:
    table = np.array(values, dtype=float).reshape(4, 4)
    if not np.all(np.isfinite(table)) or np.any(table < 0):
        raise ValueError("rates must be finite and nonnegative")
    table.setflags(write=False)
    return table


def _as_rate(value) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValueError("rates must be finite and nonnegative")
    return value


@dataclass(frozen=True, eq=False)
class RateTable:
    """Hop rates keyed by the matched profile classes.

    ``span2[d-1, a-1]`` is the rate of a two-site hop whose departure window
    matches class ``d`` and arrival window class ``a``; ``span1`` is the slide
    rate. By default leftward hops reuse the rightward values (mirror
    symmetry); ``span2_left`` / ``span1_left`` break that symmetry.
    """

    span2: np.ndarray
    span1: float = 0.0
    span2_left: np.ndarray | None = None
    span1_left: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "span2", _as_table(self.span2))
        object.__setattr__(self, "span1", _as_rate(self.span1))
        if self.span2_left is not None:
            object.__setattr__(self, "span2_left", _as_table(self.span2_left))
        if self.span1_left is not None:
            object.__setattr__(self, "span1_left", _as_rate(self.span1_left))

    # -- construction -----------------------------------------------------
    @classmethod
    def uniform(cls, rate: float = 1.0) -> "RateTable":
        return cls(np.full((4, 4), rate), rate)

    @classmethod
    def zero(cls) -> "RateTable":
        return cls.uniform(0.0)

    @classmethod
    def from_aliases(cls, c=(0, 0, 0, 0), d=(0, 0, 0, 0), skip=0.0, slide=0.0) -> "RateTable":
        """Build a table from climb rates ``c``, descend rates ``d``, and scalar
        (or length-8) skip rates plus a slide rate."""
        table = np.zeros((4, 4))
        skip = np.broadcast_to(np.asarray(skip, dtype=float), (8,))
        for (dep, arr), rate in zip(SKIP_PAIRS, skip):
            table[dep - 1, arr - 1] = rate
        for i in range(4):
            dep, arr = ALIASES[f"c{i + 1}"]
            table[dep - 1, arr - 1] = c[i]
            dep, arr = ALIASES[f"d{i + 1}"]
            table[dep - 1, arr - 1] = d[i]
        return cls(table, slide)

    @classmethod
    def random(cls, rng: np.random.Generator, symmetric: bool = True, high: float = 1.0) -> "RateTable":
        if symmetric:
            return cls(rng.uniform(0, high, (4, 4)), rng.uniform(0, high))
        return cls(rng.uniform(0, high, (4, 4)), rng.uniform(0, high),
                   rng.uniform(0, high, (4, 4)), rng.uniform(0, high))

    # -- access -----------------------------------------------------------
    def left2(self) -> np.ndarray:
        return self.span2 if self.span2_left is None else self.span2_left

    def left1(self) -> float:
        return self.span1 if self.span1_left is None else self.span1_left

    def alias(self, name: str) -> float:
        if name == "slide":
            return self.span1
        dep, arr = ALIASES[name]
        return float(self.span2[dep - 1, arr - 1])

    @property
    def climb(self) -> tuple[float, float, float, float]:
        return tuple(self.alias(f"c{i}") for i in range(1, 5))

    @property
    def descend(self) -> tuple[float, float, float, float]:
        return tuple(self.alias(f"d{i}") for i in range(1, 5))

    @property
    def is_mirror_symmetric(self) -> bool:
        return bool(np.array_equal(self.span2, self.left2()) and self.span1 == self.left1())

    def with_entry(self, dep: int, arr: int, rate: float) -> "RateTable":
        table = np.array(self.span2)
        table[dep - 1, arr - 1] = rate
        left = None
        if self.span2_left is not None:
            left = np.array(self.span2_left)
            left[dep - 1, arr - 1] = rate
        return RateTable(table, self.span1, left, self.span1_left)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Contiguous copies (right table, left table, right slide, left slide)
        for the simulation kernels."""
        return (np.ascontiguousarray(self.span2, dtype=np.float64),
                np.ascontiguousarray(self.left2(), dtype=np.float64),
                float(self.span1), float(self.left1()))

    def __eq__(self, other):
        if not isinstance(other, RateTable):
            return NotImplemented
        return (np.array_equal(self.span2, other.span2) and self.span1 == other.span1
                and np.array_equal(self.left2(), other.left2()) and self.left1() == other.left1())

    __hash__ = None

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for d, a in itertools.product(range(1, 5), repeat=2):
            out[f"span2.d{d}.a{a}"] = float(self.span2[d - 1, a - 1])
        out["span1"] = self.span1
        if self.span2_left is not None:
            for d, a in itertools.product(range(1, 5), repeat=2):
                out[f"span2_left.d{d}.a{a}"] = float(self.span2_left[d - 1, a - 1])
        if self.span1_left is not None:
            out["span1_left"] = self.span1_left
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "RateTable":
        """Inverse of :meth:`to_dict`.

        Accepted keys: ``span2.d<i>.a<j>``, ``span1``, their ``span2_left`` /
        ``span1_left`` counterparts, alias names (``c1``..``c4``, ``d1``..``d4``,
        ``s1``..``s8``, ``slide``) and ``preset`` (``"uniform"`` or ``"zero"``,
        applied first, missing entries default to 0). Unknown keys raise.
        """
        doc = dict(doc)
        preset = doc.pop("preset", "zero")
        if preset == "uniform":
            base = 1.0
        elif preset == "zero":
            base = 0.0
        else:
            raise ValueError(f"unknown rate preset {preset!r}")
        right = np.full((4, 4), base)
        left = None
        span1, span1_left = base, None
        seen: dict[tuple, str] = {}

        def claim(slot, key):
            if slot in seen:
                raise ValueError(f"rate keys {seen[slot]!r} and {key!r} set the same entry")
            seen[slot] = key

        for key, value in doc.items():
            parts = key.split(".")
            if len(parts) == 3 and parts[0] in ("span2", "span2_left"):
                try:
                    d, a = int(parts[1].removeprefix("d")), int(parts[2].removeprefix("a"))
                except ValueError:
                    raise ValueError(f"unknown rate key {key!r}") from None
                if not (parts[1].startswith("d") and parts[2].startswith("a") and 1 <= d <= 4 and 1 <= a <= 4):
                    raise ValueError(f"unknown rate key {key!r}")
                claim((parts[0], d, a), key)
                if parts[0] == "span2":
                    right[d - 1, a - 1] = value
                else:
                    if left is None:
                        left = np.full((4, 4), np.nan)
                    left[d - 1, a - 1] = value
            elif key == "span1" or key == "slide":
                claim(("span1",), key)
                span1 = value
            elif key == "span1_left":
                span1_left = value
            elif key in ALIASES:
                d, a = ALIASES[key]
                claim(("span2", d, a), key)
                right[d - 1, a - 1] = value
            else:
                raise ValueError(f"unknown rate key {key!r}")
        if left is not None:
            # unset left entries mirror the right table
            left = np.where(np.isnan(left), right, left)
        return cls(right, span1, left, span1_left)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "RateTable":
        """Load from a JSON string or a path to a JSON file."""
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))


# ---------------------------------------------------------------------------
# Profiles and moves
# ---------------------------------------------------------------------------

def departure_class(behind: int, h: int, ahead: int) -> int:
    """Departure class 1..4 of the window around the leaving site, 0 if none."""
    if behind == h:
        if ahead == h:
            return 1
        if ahead == h - 1:
            return 3
    elif behind == h - 1:
        if ahead == h:
            return 2
        if ahead == h - 1:
            return 4
    return 0


def arrival_class(before: int, a: int, beyond: int) -> int:
    """Arrival class 1..4 of the window around the landing site, 0 if none."""
    if before == a:
        if beyond == a:
            return 1
        if beyond == a + 1:
            return 2
    elif before == a + 1:
        if beyond == a:
            return 3
        if beyond == a + 1:
            return 4
    return 0


def move_kind(dep: int, arr: int) -> str:
    """'climb', 'descend' or 'skip' for a two-site hop; 'slide' for dep == 0."""
    if dep == 0:
        return "slide"
    for name, pair in ALIASES.items():
        if pair == (dep, arr):
            return {"c": "climb", "d": "descend", "s": "skip"}[name[0]]
    raise ValueError(f"no move class for departure {dep}, arrival {arr}")


@dataclass(frozen=True)
class MoveEvent:
    """Top particle of ``source`` hops to ``target``.

    ``classes`` is ``(departure, arrival)`` for two-site hops and ``None`` for
    slides. ``step`` is the signed offset; it disambiguates moves on rings
    small enough that two offsets reach the same target.
    """

    source: int
    target: int
    rate: float
    classes: tuple[int, int] | None = field(default=None)
    step: int = 0

    @property
    def kind(self) -> str:
        return "slide" if self.classes is None else move_kind(*self.classes)


def _legal_after(h: Sequence[int], source: int, target: int) -> bool:
    n = len(h)
    if h[source] < 1:
        return False

    def get(k):
        k %= n
        return h[k] - (k == source) + (k == target)

    for site in (source, target):
        for nb in (site - 1, site + 1):
            if abs(get(nb) - get(site)) > 1:
                return False
    return True


def _match(h: Sequence[int], source: int, step: int) -> tuple[int, int] | None:
    """Matched (departure, arrival) classes for the hop source -> source+step,
    ``(0, 0)`` for a matched slide, or ``None``."""
    n = len(h)
    s = 1 if step > 0 else -1
    if abs(step) == 1:
        return (0, 0) if h[(source + s) % n] == h[source] - 1 else None
    dep = departure_class(h[(source - s) % n], h[source], h[(source + s) % n])
    if not dep:
        return None
    target = source + 2 * s
    arr = arrival_class(h[(target - s) % n], h[target % n], h[(target + s) % n])
    if not arr:
        return None
    return dep, arr


def hop_rate(config, source: int, step: int, rates: RateTable) -> float:
    """Rate of hopping the top particle of ``source`` by ``step`` sites; 0 if illegal.

    Keyed by step rather than target because offsets alias on rings with
    ``n <= 4`` (e.g. +2 and -2 land on the same site when n = 4).
    """
    h = _heights(config)
    n = len(h)
    if step not in OFFSETS:
        raise ValueError(f"step must be one of {OFFSETS}")
    source %= n
    target = (source + step) % n
    if target == source or h[source] < 1:
        return 0.0
    m = _match(h, source, step)
    if m is None or not _legal_after(h, source, target):
        return 0.0
    if m == (0, 0):
        return rates.span1 if step > 0 else rates.left1()
    table = rates.span2 if step > 0 else rates.left2()
    return float(table[m[0] - 1, m[1] - 1])


def list_moves(config, rates: RateTable) -> list[MoveEvent]:
    """All moves with positive rate, ordered by source then offset (-2, -1, 1, 2)."""
    h = _heights(config)
    n = len(h)
    moves = []
    for i in range(n):
        if h[i] < 1:
            continue
        for step in OFFSETS:
            m = _match(h, i, step)
            if m is None:
                continue
            if m == (0, 0):
                rate = rates.span1 if step > 0 else rates.left1()
                classes = None
            else:
                table = rates.span2 if step > 0 else rates.left2()
                rate = float(table[m[0] - 1, m[1] - 1])
                classes = m
            target = (i + step) % n
            if rate > 0 and target != i and _legal_after(h, i, target):
                moves.append(MoveEvent(i, target, rate, classes, step))
    return moves


def apply_move(config, move: MoveEvent) -> HeightConfig:
    h = list(_heights(config))
    n = len(h)
    if not (0 <= move.source < n and 0 <= move.target < n):
        raise InvalidMoveError(f"move {move.source}->{move.target} outside lattice of {n} sites")
    h[move.source] -= 1
    h[move.target] += 1
    if not is_restricted(h):
        raise InvalidMoveError(f"move {move.source}->{move.target} leaves {tuple(h)} unrestricted")
    return HeightConfig(tuple(h))


# ---------------------------------------------------------------------------
# State space
# ---------------------------------------------------------------------------

def count_configs(n: int, K: int) -> int:
    """Size of the restricted state space, by transfer over (height, partial sum).

    Used to check the state cap before enumerating.
    """
    if n < 1 or K < 0:
        raise ValueError("need n >= 1 and K >= 0")
    if n == 1:
        return 1
    total = 0
    for h0 in range(K + 1):
        # heights never exceed h0 + n//2 on a ring
        hmax = min(K, h0 + n // 2)
        dp = np.zeros((hmax + 2, K + 1), dtype=object)
        dp[h0, h0] = 1
        for _ in range(n - 1):
            new = np.zeros_like(dp)
            for h in range(hmax + 1):
                row = dp[h]
                if not row.any():
                    continue
                for nh in (h - 1, h, h + 1):
                    if 0 <= nh <= hmax:
                        new[nh, nh:] += row[: K + 1 - nh]
            dp = new
        for last in (h0 - 1, h0, h0 + 1):
            if 0 <= last <= hmax:
                total += int(dp[last, K])
    return total


def _compositions(n: int, K: int) -> Iterator[tuple[int, ...]]:
    """Restricted sequences summing to K, in lexicographic order."""
    h = [0] * n

    def rec(pos, remaining):
        if pos == n:
            if remaining == 0 and abs(h[-1] - h[0]) <= 1:
                yield tuple(h)
            return
        left = n - pos
        if pos == 0:
            candidates = range(0, remaining + 1)
        else:
            prev = h[pos - 1]
            candidates = (prev - 1, prev, prev + 1)
        for v in candidates:
            if v < 0 or v > remaining:
                continue
            if pos > 0 and abs(v - h[0]) > n - pos:
                continue
            # the tail steps by at most one per site
            rest = left - 1
            if rest * (v + 1) + rest * (rest - 1) // 2 < remaining - v and rest > 0:
                continue
            h[pos] = v
            yield from rec(pos + 1, remaining - v)

    yield from rec(0, K)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """All restricted configurations with ``n`` sites and ``K`` particles."""

    n: int
    K: int
    configs: tuple[tuple[int, ...], ...]
    index: dict = field(repr=False)

    def __len__(self):
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def __contains__(self, config):
        return _heights(config) in self.index

    def position(self, config) -> int:
        return self.index[_heights(config)]

    @property
    def heights(self) -> np.ndarray:
        """(states, n) integer array in state order."""
        return np.array(self.configs, dtype=np.int64).reshape(len(self.configs), self.n)


def enumerate_configs(n: int, K: int, cap: int | None = None) -> StateSpace:
    if n < 1 or K < 0:
        raise ValueError("need n >= 1 and K >= 0")
    cap = state_cap() if cap is None else cap
    predicted = count_configs(n, K)
    if predicted > cap:
        raise StateSpaceTooLarge(f"Omega(n={n}, K={K}) has {predicted} states, cap is {cap}")
    configs = tuple(_compositions(n, K))
    return StateSpace(n, K, configs, {c: i for i, c in enumerate(configs)})


def brute_force_configs(n: int, K: int) -> list[tuple[int, ...]]:
    """Filter every composition of K into n parts; slow reference only."""
    out = []
    for cut in itertools.combinations(range(K + n - 1), n - 1):
        parts = []
        prev = -1
        for c in cut + (K + n - 1,):
            parts.append(c - prev - 1)
            prev = c
        if is_restricted(parts):
            out.append(tuple(parts))
    return sorted(out)


def mirror(config) -> tuple[int, ...]:
    """Reflection ``i -> -i mod n`` (site 0 fixed)."""
    h = _heights(config)
    n = len(h)
    return tuple(h[(-i) % n] for i in range(n))


def shift(config, by: int) -> tuple[int, ...]:
    """Cyclic shift: ``out[(i + by) % n] = h[i]``."""
    h = _heights(config)
    n = len(h)
    return tuple(h[(i - by) % n] for i in range(n))

