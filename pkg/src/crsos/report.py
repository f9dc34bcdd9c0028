"""Cross-engine comparison of one-site height distributions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .distributions import pad_to, total_variation

__all__ = ["CompareReport", "compare_report", "multinomial_envelope", "write_svg"]

DEFAULT_TOLERANCES = {"kmc_exact": 0.01, "meanfield_exact": None}


def multinomial_envelope(p, replicas: int) -> float:
    """Standard-error scale of the TV distance of an N-draw empirical histogram from ``p``.

    ``0.5 * sum_k sqrt(p_k (1 - p_k) / N)``.
    """
    p = np.asarray(p, dtype=float)
    return 0.5 * float(np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / replicas).sum())


@dataclass
class CompareReport:
    distributions: dict[str, np.ndarray]
    distances: dict[str, float]
    differences: dict[str, np.ndarray]
    thresholds: dict[str, float | None]
    envelope: float | None = None
    time: float | None = None
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "distances": self.distances,
            "thresholds": self.thresholds,
            "envelope": self.envelope,
            "checks": self.checks,
            "passed": self.passed,
            "distributions": {k: v.tolist() for k, v in self.distributions.items()},
            "differences": {k: v.tolist() for k, v in self.differences.items()},
        }

    def to_csv(self, path=None) -> str:
        names = list(self.distributions)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k"] + names)
        width = len(next(iter(self.distributions.values())))
        for k in range(width):
            writer.writerow([k] + [repr(float(self.distributions[n][k])) for n in names])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _probs(d) -> np.ndarray:
    return np.asarray(getattr(d, "probabilities", d), dtype=float)


def compare_report(exact, kmc_hist, mf=None, tolerances: dict | None = None,
                   replicas: int | None = None) -> CompareReport:
    """TV distances and per-height differences between the engines.

    ``kmc_exact`` passes when its distance is at most
    ``max(tolerance, 3 * envelope)``, the envelope being
    :func:`multinomial_envelope` of the exact law when ``replicas`` is known.
    A tolerance of ``None`` makes that pair informational.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    dists = {"exact": _probs(exact), "kmc": _probs(kmc_hist)}
    if mf is not None:
        dists["meanfield"] = _probs(mf)
    width = max(len(v) for v in dists.values())
    dists = {k: pad_to(v, width) for k, v in dists.items()}

    envelope = multinomial_envelope(dists["exact"], replicas) if replicas else None
    distances, differences, thresholds, checks = {}, {}, {}, {}
    for name in dists:
        if name == "exact":
            continue
        key = f"{name}_exact"
        distances[key] = total_variation(dists[name], dists["exact"])
        differences[key] = dists[name] - dists["exact"]
        t = tol.get(key)
        if t is not None and key == "kmc_exact" and envelope is not None:
            t = max(t, 3.0 * envelope)
        thresholds[key] = t
        if t is not None:
            checks[key] = distances[key] <= t
    if "meanfield" in dists:
        distances["meanfield_kmc"] = total_variation(dists["meanfield"], dists["kmc"])
    time = getattr(exact, "time", None)
    return CompareReport(dists, distances, differences, thresholds, envelope, time, checks)


def write_svg(report: CompareReport, path, provenance: str = "") -> str:
    """Overlay of the distributions as a self-contained static SVG.

    Output is byte-stable for identical inputs (fixed hash salt, no date).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "crsos", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        names = list(report.distributions)
        k = np.arange(len(next(iter(report.distributions.values()))))
        width = 0.8 / len(names)
        for i, name in enumerate(names):
            ax.bar(k + (i - (len(names) - 1) / 2) * width, report.distributions[name], width, label=name)
        ax.set_xlabel("height k")
        ax.set_ylabel("probability")
        title = "one-site height distribution"
        if report.time is not None:
            title += f" at t = {report.time:g}"
        ax.set_title(title)
        ax.legend()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    text = buf.getvalue()
    comment = "<!-- " + (provenance or "crsos compare").replace("--", "- -") + " -->\n"
    head, sep, rest = text.partition("?>\n")
    text = head + sep + comment + rest if sep else comment + text
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text

