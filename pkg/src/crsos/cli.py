"""Command-line front end: ``crsos <engine> [--config FILE] [flags]``.

Configuration precedence, lowest to highest: built-in defaults, the JSON
document given by ``--config`` (a previous run's ``manifest.json`` also
works), then command-line flags. Every run writes its outputs and a
``manifest.json`` into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 state-space cap exceeded,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .distributions import HeightDistribution
from .exact_master import (IntegrationError, StateDistribution, build_generator, evolve_many,
                           marginal_rate_identity, one_site_marginal)
from .kmc import AbsorbingState, InvariantViolation, ensemble, log_grid
from .lattice import HeightConfig, RateTable, StateSpaceTooLarge, enumerate_configs, flat_config, is_restricted
from .mean_field import (MeanFieldParams, NegativityError, mf_evolve, solve_lambda,
                         stationary_analysis)
from .report import compare_report, write_svg
from .scaling import (SelfSimilarParams, barenblatt_f, continuum_coefficient_A, epsilon_refinement,
                      exponent_report, pde_convergence, similarity_ode_residual)

ENGINES = ("enumerate", "exact", "kmc", "meanfield", "stationary", "selfsim", "compare")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    engine: str = "enumerate"
    n: int = 6
    K: int = 6
    init: list | None = None
    rates: dict | str | None = None
    t_end: float = 1.0
    samples: list | None = None
    replicas: int = 1000
    seed: int = 0
    out: str = "crsos-out"
    tolerances: dict = field(default_factory=dict)
    site: int = 0
    k_max: int = 200
    boundary: str = "paper"
    c: list | None = None
    d: list | None = None
    coeffs: list | None = None
    sweep: dict | None = None
    A: float | None = None
    C1: float | None = None
    epsilon: float = 1e-3

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if "config" in doc and "code_version" in doc:
            doc = doc["config"]  # a run manifest
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        if self.n < 1 or self.K < 0:
            raise ConfigError("need n >= 1 and K >= 0")
        if self.replicas < 1:
            raise ConfigError("replicas must be positive")
        if self.t_end < 0:
            raise ConfigError("t_end must be nonnegative")
        if self.samples is not None:
            s = np.asarray(self.samples, dtype=float)
            if np.any(np.diff(s) < 0) or (len(s) and (s[0] < 0 or s[-1] > self.t_end)):
                raise ConfigError("samples must be sorted and lie in [0, t_end]")
        if isinstance(self.rates, str) and not Path(self.rates).exists():
            raise ConfigError(f"rate file {self.rates!r} does not exist")
        if self.init is not None:
            if len(self.init) != self.n or sum(self.init) != self.K or not is_restricted(self.init):
                raise ConfigError("init must be a restricted configuration with n sites and K particles")
        elif self.engine in ("exact", "kmc", "compare") and self.K % self.n:
            raise ConfigError("the flat start needs K divisible by n; give init explicitly")
        return self

    # -- derived inputs -------------------------------------------------------
    def rate_table(self) -> RateTable:
        try:
            if self.rates is None:
                return RateTable.uniform()
            if isinstance(self.rates, str):
                return RateTable.from_json(Path(self.rates))
            return RateTable.from_dict(self.rates)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"bad rate table: {exc}") from exc

    def initial(self) -> tuple[int, ...]:
        return tuple(self.init) if self.init is not None else flat_config(self.n, self.K).heights

    def sample_times(self, default: str = "end") -> np.ndarray:
        if self.samples is not None:
            return np.asarray(self.samples, dtype=float)
        if default == "log" and self.t_end > 0:
            return log_grid(self.t_end)
        return np.array([self.t_end])

    def mf_params(self) -> MeanFieldParams:
        if self.c is not None or self.d is not None:
            return MeanFieldParams(self.c or (0, 0, 0, 0), self.d or (0, 0, 0, 0), k_max=self.k_max)
        return MeanFieldParams.from_rates(self.rate_table(), k_max=self.k_max)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)}")


class Outputs:
    def __init__(self, directory: Path):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hashes: dict[str, str] = {}

    def write(self, name: str, text: str):
        path = self.dir / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        self.record(name)

    def record(self, name: str):
        self.hashes[name] = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------

def _run_enumerate(cfg: ExperimentConfig, out: Outputs) -> dict:
    space = enumerate_configs(cfg.n, cfg.K)
    rows = ([i, HeightConfig(c).label()] + list(c) for i, c in enumerate(space.configs))
    out.write("states.csv", _csv(rows, ["state", "label"] + [f"site_{i + 1}" for i in range(cfg.n)]))
    return {"count": len(space)}


def _exact_marginals(cfg: ExperimentConfig, times):
    space = enumerate_configs(cfg.n, cfg.K)
    rates = cfg.rate_table()
    gen = build_generator(space, rates)
    init = StateDistribution.delta(space, cfg.initial())
    dists = evolve_many(gen, init, times)
    return space, rates, gen, dists


def _run_exact(cfg: ExperimentConfig, out: Outputs) -> dict:
    times = cfg.sample_times()
    space, rates, gen, dists = _exact_marginals(cfg, times)
    rows = []
    for d in dists:
        for k, v in enumerate(one_site_marginal(space, d, cfg.site).probabilities):
            rows.append([d.time, k, float(v)])
    out.write("marginal.csv", _csv(rows, ["time", "k", "probability"]))
    out.write("distribution.csv", dists[-1].to_csv(space))
    out.write("generator.csv", gen.to_csv())
    residual = marginal_rate_identity(space, dists[-1], rates, cfg.site, gen)
    summary = {
        "states": len(space),
        "max_row_sum": float(np.abs(gen.row_sums()).max()),
        "normalization_error": [abs(float(d.probabilities.sum()) - 1.0) for d in dists],
        "min_probability": [float(d.probabilities.min()) for d in dists],
        "marginal_identity_residual": residual,
        "mirror_symmetric_rates": rates.is_mirror_symmetric,
    }
    out.write("exact.json", _json(summary))
    return summary


def _run_kmc(cfg: ExperimentConfig, out: Outputs) -> dict:
    samples = cfg.sample_times(default="log")
    stats = ensemble(cfg.initial(), cfg.rate_table(), cfg.t_end, samples, cfg.replicas, cfg.seed)
    out.write("observables.csv", stats.to_csv())
    out.write("histogram.csv", stats.hist_csv())
    out.write("kmc.json", _json(stats.to_dict()))
    w, w_se = stats.width_sq()
    return {"replicas": stats.replicas, "absorbed": stats.absorbed, "events": stats.events,
            "final_width_sq": float(w[-1]), "final_width_sq_se": float(w_se[-1])}


def _run_meanfield(cfg: ExperimentConfig, out: Outputs) -> dict:
    params = cfg.mf_params()
    if cfg.K % cfg.n:
        raise ConfigError("the mean-field start is a point mass at K/n; K must be divisible by n")
    p0 = HeightDistribution.delta(cfg.K // cfg.n, params.k_max)
    traj = mf_evolve(p0, params, cfg.t_end, cfg.sample_times(default="log"), boundary=cfg.boundary)
    out.write("meanfield.csv", _csv(traj.rows(), ["time", "k", "probability"]))
    rows = [[float(t), float(dr), float(mn), d.mean()]
            for t, dr, mn, d in zip(traj.times, traj.drift, traj.min_entry, traj.distributions)]
    out.write("drift.csv", _csv(rows, ["time", "mass_drift", "min_entry", "mean_height"]))
    summary = {"boundary": cfg.boundary, "max_drift": float(traj.drift.max()),
               "min_entry": float(traj.min_entry.min())}
    out.write("meanfield.json", _json(summary))
    return summary


def _run_stationary(cfg: ExperimentConfig, out: Outputs) -> dict:
    if cfg.coeffs is not None:
        doc = {"coeffs": list(cfg.coeffs), "analysis": solve_lambda(cfg.coeffs).to_dict()}
    else:
        doc = stationary_analysis(cfg.mf_params())
    out.write("stationary.json", _json(doc))
    if cfg.sweep:
        name, values = cfg.sweep["param"], cfg.sweep["values"]
        base = cfg.mf_params()
        rows = []
        for v in values:
            c, d = list(base.c), list(base.d)
            (c if name[0] == "c" else d)[int(name[1]) - 1] = v
            res = stationary_analysis(MeanFieldParams(c, d, k_max=base.k_max))
            roots = res["analysis"]["roots_in_unit"]
            rows.append([float(v), res["analysis"]["phase"], ";".join(repr(r) for r in roots)])
        out.write("sweep.csv", _csv(rows, [name, "phase", "roots_in_unit"]))
    analysis = doc["analysis"]
    return {"phase": analysis["phase"], "lambda": analysis["lambda"],
            "mean_height": analysis["stats"][0]["mean_height"] if analysis["lambda"] is not None else None}


def _run_selfsim(cfg: ExperimentConfig, out: Outputs) -> dict:
    mf = cfg.mf_params()
    A = cfg.A if cfg.A is not None else continuum_coefficient_A(mf)
    if A <= 0:
        raise ConfigError(f"the self-similar profile needs A > 0, got {A}")
    p = SelfSimilarParams(A, cfg.C1, cfg.epsilon)
    xs = np.linspace(-p.half_width, p.half_width, 201)
    out.write("profile.csv", _csv(zip(xs, barenblatt_f(xs, p)), ["x", "f"]))
    inner = xs[1:-1] * 0.99
    conv = pde_convergence(p, np.linspace(-0.5, 0.5, 11) * p.half_width, np.linspace(1.0, 3.0, 5))
    out.write("residuals.csv", _csv(zip(conv["h"], conv["residuals"]), ["h", "pde_residual"]))
    report = {
        "ode_residual_analytic": similarity_ode_residual(p, inner),
        "ode_residual_fd": similarity_ode_residual(p, inner * 0.99, method="fd", h=1e-4),
        "pde_convergence": conv,
        "exponents_printed": exponent_report(p, form="printed"),
        "exponents_consistent": exponent_report(p, form="consistent"),
    }
    if cfg.A is None:
        report["refinement"] = epsilon_refinement(mf).to_dict()
    out.write("selfsim.json", _json(report))
    return {"A": A, "C1": p.C1, "ode_residual": report["ode_residual_analytic"],
            "pde_min_order": conv["min_order"]}


def _run_compare(cfg: ExperimentConfig, out: Outputs) -> dict:
    space, rates, gen, dists = _exact_marginals(cfg, [cfg.t_end])
    exact = one_site_marginal(space, dists[-1], cfg.site)
    stats = ensemble(cfg.initial(), rates, cfg.t_end, [cfg.t_end], cfg.replicas, cfg.seed)
    kmc = stats.site_distribution()
    mf = None
    if cfg.K % cfg.n == 0:
        params = MeanFieldParams.from_rates(rates, k_max=max(cfg.K, 4))
        traj = mf_evolve(HeightDistribution.delta(cfg.K // cfg.n, params.k_max), params, cfg.t_end,
                         boundary=cfg.boundary)
        mf = traj.distributions[-1]
    report = compare_report(exact, kmc, mf, cfg.tolerances, replicas=cfg.replicas)
    doc = report.to_dict()
    doc["kmc_spatial_tv"] = float(exact.tv(stats.spatial_distribution()))
    out.write("compare.json", _json(doc))
    out.write("compare.csv", report.to_csv())
    write_svg(report, out.dir / "compare.svg",
              provenance=f"crsos {__version__} compare n={cfg.n} K={cfg.K} t={cfg.t_end} "
                         f"replicas={cfg.replicas} seed={cfg.seed}")
    out.record("compare.svg")
    return {"distances": report.distances, "passed": report.passed, "envelope": report.envelope}


RUNNERS = {
    "enumerate": _run_enumerate,
    "exact": _run_exact,
    "kmc": _run_kmc,
    "meanfield": _run_meanfield,
    "stationary": _run_stationary,
    "selfsim": _run_selfsim,
    "compare": _run_compare,
}


def run(cfg: ExperimentConfig) -> dict:
    """Dispatch to the engine, write outputs and the manifest; returns the manifest."""
    cfg.validate()
    out = Outputs(Path(cfg.out))
    started = time.perf_counter()
    summary = RUNNERS[cfg.engine](cfg, out)
    manifest = {
        "config": cfg.to_dict(),
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_clock_seconds": time.perf_counter() - started,
        "summary": summary,
        "outputs": dict(sorted(out.hashes.items())),
    }
    (out.dir / "manifest.json").write_text(_json(manifest), encoding="utf-8")
    return manifest


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crsos", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"crsos {__version__}")
    sub = parser.add_subparsers(dest="engine", required=True)
    for name in ENGINES:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config (or a previous manifest.json)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--replicas", type=int)
        p.add_argument("--t-end", type=float, dest="t_end")
        p.add_argument("--rates", help="rate-table JSON file")
        p.add_argument("-n", type=int, dest="n")
        p.add_argument("-K", type=int, dest="K")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc = load_config(args.config) if args.config else {}
        if "config" in doc and "code_version" in doc:
            doc = doc["config"]
        doc = dict(doc)
        doc["engine"] = args.engine
        for key in ("seed", "out", "replicas", "t_end", "rates", "n", "K"):
            value = getattr(args, key)
            if value is not None:
                doc[key] = value
        cfg = ExperimentConfig.from_dict(doc)
        manifest = run(cfg)
    except (ConfigError, TypeError) as exc:
        print(f"crsos: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StateSpaceTooLarge as exc:
        print(f"crsos: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (IntegrationError, NegativityError, AbsorbingState, InvariantViolation,
            FloatingPointError) as exc:
        print(f"crsos: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(manifest["summary"], default=_jsonable, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
