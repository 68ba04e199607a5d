"""
Experiment harness: configs, preset tables, result rows and their
serialization, the RQMC convergence sweep and reference verification.

A config is a flat ``key = value`` text file::

    dist = weibull(alpha=0.5,eta=1)
    n = 8
    l = 4
    samples = 500000
    seed = 42
    estimators = weibull-is, universal-is, cmc-gg
    thresholds = 1, 0.5, 0.1

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .distributions import OrderStatSumProblem, parse_dist
from .errors import ConfigError, DomainError
from .estimators import ESTIMATORS, EstimationResult, check_compatible, relative_error
from .rqmc import RqmcPlan, replicate_means, rqmc_estimate
from .samplers import RngStream

__all__ = [
    "ESTIMATOR_NAMES",
    "PRESETS",
    "ExperimentConfig",
    "ResultRow",
    "SweepResult",
    "emit_results",
    "load_config",
    "parse_results",
    "read_reference",
    "run_convergence_sweep",
    "run_experiment",
    "verify_rows",
]

ESTIMATOR_NAMES = ("naive", "universal-is", "pareto-is", "weibull-is", "cmc-gg", "cmc-lognormal", "rqmc-cmc")
FORMATS = ("csv", "jsonl")
SEED_ENV = "OSTAIL_SEED"
DEFAULT_SEED = 42
VERIFY_RE_MULTIPLE = 5.0


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(SEED_ENV, f"not an integer: {raw!r}") from None
    if seed < 0:
        raise ConfigError(SEED_ENV, "must be nonnegative")
    return seed


@dataclass(frozen=True)
class ExperimentConfig:
    dist: str
    n: int
    l: int
    estimators: tuple[str, ...]
    thresholds: tuple[float, ...]
    samples: int = 100_000
    seed: int = DEFAULT_SEED
    replicates: int | None = None
    m_grid: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    bisect_tol: float = 1e-10
    workers: int = 1
    name: str = "custom"

    def validate(self) -> "ExperimentConfig":
        """Check every field and estimator/distribution compatibility; no sampling."""
        try:
            dist = parse_dist(self.dist)
        except DomainError as exc:
            raise ConfigError("dist", str(exc)) from None
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n", f"must be a positive integer, got {self.n!r}")
        if int(self.l) != self.l or not 1 <= self.l <= self.n:
            raise ConfigError("l", f"must satisfy 1 <= l <= n, got l={self.l!r}, n={self.n!r}")
        if int(self.samples) != self.samples or self.samples < 1:
            raise ConfigError("samples", f"must be a positive integer, got {self.samples!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed", f"must be a nonnegative integer, got {self.seed!r}")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if not self.thresholds:
            raise ConfigError("thresholds", "at least one threshold is required")
        if any(not (math.isfinite(g) and g > 0) for g in self.thresholds):
            raise ConfigError("thresholds", "thresholds must be finite and > 0")
        if not self.estimators:
            raise ConfigError("estimators", "at least one estimator is required")
        for name in self.estimators:
            if name not in ESTIMATOR_NAMES:
                raise ConfigError("estimators", f"unknown estimator {name!r}; choose from {', '.join(ESTIMATOR_NAMES)}")
        if self.replicates is not None and self.replicates < 2:
            raise ConfigError("replicates", "must be >= 2")
        if self.weights is not None:
            if len(self.weights) != self.l:
                raise ConfigError("weights", f"expected {self.l} weights, got {len(self.weights)}")
            if any(not w > 0 for w in self.weights) or abs(math.fsum(self.weights) - 1) > 1e-12:
                raise ConfigError("weights", "weights must be positive and sum to 1")
        for name in self.estimators:
            for g in self.thresholds:
                try:
                    check_compatible(name, OrderStatSumProblem(self.n, self.l, g, dist))
                except DomainError as exc:
                    raise ConfigError("estimators", f"{name} incompatible with {self.dist} at gamma_th={g}: {exc}") from None
            if name == "rqmc-cmc":
                try:
                    RqmcPlan(self.samples, self.replicates or 30)
                except DomainError as exc:
                    raise ConfigError("samples", f"rqmc-cmc: {exc}") from None
        if self.m_grid is not None:
            try:
                for m in self.m_grid:
                    RqmcPlan(m, self.replicates or 30)
            except DomainError as exc:
                raise ConfigError("m_grid", str(exc)) from None
        return self

    def problem(self, threshold: float) -> OrderStatSumProblem:
        return OrderStatSumProblem(self.n, self.l, threshold, parse_dist(self.dist))


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _int(field_name: str, value) -> int:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(field_name, f"not a number: {value!r}") from None
    if not f.is_integer():
        raise ConfigError(field_name, f"not an integer: {value!r}")
    return int(f)


def _floats(field_name: str, value: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in _split(value))
    except ValueError:
        raise ConfigError(field_name, f"not a list of numbers: {value!r}") from None


_KEYS = {
    "dist", "n", "l", "estimators", "thresholds", "samples", "seed", "replicates",
    "m_grid", "weights", "bisect_tol", "workers", "name",
}


def config_from_mapping(values: dict, name: str = "custom") -> ExperimentConfig:
    """Build a config from string or native values (file entries, presets, CLI flags)."""
    unknown = set(values) - _KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"unknown key; expected one of {sorted(_KEYS)}")
    for req in ("dist", "n", "l", "estimators", "thresholds"):
        if values.get(req) in (None, ""):
            raise ConfigError(req, "missing required key")

    def listish(key, conv):
        v = values.get(key)
        if v is None:
            return None
        if isinstance(v, str):
            return conv(key, v)
        return tuple(v)

    kwargs = dict(
        dist=str(values["dist"]).strip(),
        n=_int("n", values["n"]),
        l=_int("l", values["l"]),
        estimators=tuple(values["estimators"]) if not isinstance(values["estimators"], str)
        else tuple(_split(values["estimators"])),
        thresholds=listish("thresholds", _floats),
        name=str(values.get("name", name)),
    )
    if values.get("samples") is not None:
        kwargs["samples"] = _int("samples", values["samples"])
    kwargs["seed"] = _int("seed", values["seed"]) if values.get("seed") is not None else default_seed()
    if values.get("replicates") is not None:
        kwargs["replicates"] = _int("replicates", values["replicates"])
    if values.get("m_grid") is not None:
        grid = values["m_grid"]
        kwargs["m_grid"] = tuple(_int("m_grid", v) for v in (_split(grid) if isinstance(grid, str) else grid))
    if values.get("weights") is not None:
        kwargs["weights"] = listish("weights", _floats)
    if values.get("bisect_tol") is not None:
        try:
            kwargs["bisect_tol"] = float(values["bisect_tol"])
        except ValueError:
            raise ConfigError("bisect_tol", f"not a number: {values['bisect_tol']!r}") from None
    if values.get("workers") is not None:
        kwargs["workers"] = _int("workers", values["workers"])
    return ExperimentConfig(**kwargs)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
        if key in out:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        out[key] = value.strip()
    return out


# Reference experiments: N, L, branch law, M and threshold grid for each preset.
PRESETS: dict[str, dict] = {
    "table1": dict(dist="pareto(alpha=1)", n=8, l=4, samples=500_000,
                   estimators=("pareto-is", "universal-is"), thresholds=(1.5, 1, 0.5, 0.1)),
    "table2": dict(dist="weibull(alpha=0.5,eta=1)", n=8, l=4, samples=500_000,
                   estimators=("weibull-is", "universal-is", "cmc-gg"), thresholds=(1, 0.5, 0.1, 0.05, 0.01, 0.005)),
    "table3": dict(dist="weibull(alpha=0.8,eta=1)", n=8, l=4, samples=500_000,
                   estimators=("weibull-is", "universal-is", "cmc-gg"), thresholds=(1.03, 0.38, 0.09, 0.058)),
    "table4": dict(dist="weibull(alpha=0.5,eta=1)", n=8, l=2, samples=500_000,
                   estimators=("weibull-is", "universal-is", "cmc-gg"), thresholds=(0.355, 0.07, 0.0069, 0.0035)),
    "table5": dict(dist="weibull(alpha=0.5,eta=1)", n=8, l=6, samples=500_000,
                   estimators=("weibull-is", "universal-is", "cmc-gg"), thresholds=(0.55, 0.11, 0.011, 0.0055)),
    "table6": dict(dist="lognormal(mu=0,sigma=2)", n=8, l=4, samples=1_000_000,
                   estimators=("universal-is", "cmc-lognormal"), thresholds=(1, 0.5, 0.3, 0.15)),
    "table7": dict(dist="lognormal(mu=0,sigma=2)", n=8, l=2, samples=1_000_000,
                   estimators=("universal-is", "cmc-lognormal"), thresholds=(0.65, 0.315, 0.185, 0.0908)),
    "table8": dict(dist="lognormal(mu=0,sigma=2)", n=8, l=8, samples=1_000_000,
                   estimators=("universal-is", "cmc-lognormal"), thresholds=(0.635, 0.386, 0.195)),
    "fig1": dict(dist="weibull(alpha=0.5,eta=1)", n=8, l=4, samples=1024, replicates=30,
                 estimators=("rqmc-cmc",), thresholds=(0.5,), m_grid=tuple(2**k for k in range(7, 14))),
}


def load_config(source: str, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a preset name or a config file path, then apply overrides (which win)."""
    if source in PRESETS:
        values = dict(PRESETS[source], name=source)
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError("config", f"{source!r} is neither a preset ({', '.join(PRESETS)}) nor a readable file")
        try:
            values = parse_config_text(path.read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        values.setdefault("name", path.stem)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return config_from_mapping(values).validate()


# -- result rows ---------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    gamma_th: float
    estimator: str
    estimate: float
    variance: float
    relative_error_percent: float
    samples: int
    seed: int
    wall_ms: float | None = None
    aux: dict = field(default_factory=dict, compare=True)

    @classmethod
    def from_result(cls, gamma_th: float, result: EstimationResult, timing: bool = False) -> "ResultRow":
        aux = {k: v for k, v in result.aux.items() if k != "replicate_means"}
        return cls(
            gamma_th=float(gamma_th),
            estimator=result.estimator,
            estimate=float(result.estimate),
            variance=float(result.variance),
            relative_error_percent=100.0 * result.relative_error,
            samples=int(result.samples),
            seed=int(result.seed),
            wall_ms=float(result.wall_ms) if timing else None,
            aux=aux,
        )

    def check_consistency(self, rel_tol: float = 1e-9) -> None:
        expected = 100.0 * relative_error(self.estimate, self.variance, self.samples)
        both_nan = math.isnan(expected) and math.isnan(self.relative_error_percent)
        if not both_nan and not math.isclose(expected, self.relative_error_percent, rel_tol=rel_tol, abs_tol=0.0):
            raise DomainError(
                f"row ({self.gamma_th}, {self.estimator}): relative_error_percent "
                f"{self.relative_error_percent!r} does not match estimate/variance/samples ({expected!r})"
            )


def run_experiment(config: ExperimentConfig, timing: bool = False) -> list[ResultRow]:
    """One row per (threshold, estimator), thresholds outer, in config order.

    Cell ``i`` in that order draws from stream ``(seed, i)``.
    """
    config.validate()
    rows = []
    cell = 0
    for g in config.thresholds:
        problem = config.problem(g)
        for name in config.estimators:
            rng = RngStream(config.seed, cell)
            if name == "rqmc-cmc":
                plan = RqmcPlan(config.samples, config.replicates or 30, scramble_seed=_cell_seed(config.seed, cell))
                result = rqmc_estimate(problem, plan)
                result.seed = config.seed
            elif name in ("pareto-is", "weibull-is"):
                result = ESTIMATORS[name](problem, config.samples, rng, config.weights, workers=config.workers)
            elif name == "cmc-lognormal":
                result = ESTIMATORS[name](problem, config.samples, rng, config.bisect_tol, workers=config.workers)
            else:
                result = ESTIMATORS[name](problem, config.samples, rng, workers=config.workers)
            rows.append(ResultRow.from_result(g, result, timing))
            cell += 1
    return rows


def _cell_seed(seed: int, cell: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(cell,)).generate_state(1, np.uint64)[0])


# -- serialization ---------------------------------------------------------

_COLUMNS = ("gamma_th", "estimator", "estimate", "variance", "relative_error_percent", "samples", "seed", "wall_ms", "aux")


def _fmt_real(x: float | None) -> str:
    if x is None:
        return ""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.16e}"


def _columns(rows: Sequence[ResultRow]) -> tuple[str, ...]:
    if any(r.wall_ms is not None for r in rows):
        return _COLUMNS
    return tuple(c for c in _COLUMNS if c != "wall_ms")


def emit_results(rows: Sequence[ResultRow], fmt: str = "csv", path: str | os.PathLike | None = None) -> str:
    """Serialize rows as CSV or JSON lines; write to ``path`` when given.

    Reals are written in scientific notation with 17 significant digits so
    that :func:`parse_results` recovers them exactly. ``wall_ms`` is only
    emitted when the rows carry timings, keeping default output byte-stable.
    """
    if not rows:
        raise DomainError("no rows to emit")
    if fmt not in FORMATS:
        raise DomainError(f"unknown format {fmt!r}; choose from {FORMATS}")
    cols = _columns(rows)
    buf = io.StringIO(newline="")
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(cols)
        for r in rows:
            rec = {
                "gamma_th": _fmt_real(r.gamma_th),
                "estimator": r.estimator,
                "estimate": _fmt_real(r.estimate),
                "variance": _fmt_real(r.variance),
                "relative_error_percent": _fmt_real(r.relative_error_percent),
                "samples": str(r.samples),
                "seed": str(r.seed),
                "wall_ms": _fmt_real(r.wall_ms),
                "aux": json.dumps(r.aux, sort_keys=True, separators=(",", ":")),
            }
            writer.writerow([rec[c] for c in cols])
    else:
        for r in rows:
            rec = {c: getattr(r, c) for c in cols}
            buf.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    text = buf.getvalue()
    if path is not None:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc}") from exc
    return text


def _real(s: str):
    return None if s == "" else float(s)


def parse_results(text: str, fmt: str = "csv", check: bool = True) -> list[ResultRow]:
    """Inverse of :func:`emit_results`; verifies each row's RE against its own fields."""
    rows = []
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        for rec in reader:
            rows.append(ResultRow(
                gamma_th=float(rec["gamma_th"]),
                estimator=rec["estimator"],
                estimate=float(rec["estimate"]),
                variance=float(rec["variance"]),
                relative_error_percent=float(rec["relative_error_percent"]),
                samples=int(rec["samples"]),
                seed=int(rec["seed"]),
                wall_ms=_real(rec.get("wall_ms", "") or ""),
                aux=json.loads(rec["aux"]) if rec.get("aux") else {},
            ))
    elif fmt == "jsonl":
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                rec.setdefault("wall_ms", None)
                rows.append(ResultRow(**rec))
    else:
        raise DomainError(f"unknown format {fmt!r}; choose from {FORMATS}")
    if check:
        for r in rows:
            r.check_consistency()
    return rows


# -- convergence sweep ---------------------------------------------------------


@dataclass
class SweepResult:
    points: tuple[int, ...]
    rqmc_se: tuple[float, ...]
    mc_se: tuple[float, ...]
    rqmc_slope: float
    mc_slope: float
    replicates: int
    estimate: float

    def reference_line(self) -> tuple[float, ...]:
        """``c M^-1/2`` anchored at the first RQMC point."""
        c = self.rqmc_se[0] * math.sqrt(self.points[0])
        return tuple(c / math.sqrt(m) for m in self.points)

    def rows(self) -> list[dict]:
        ref = self.reference_line()
        return [
            {"points_per_replicate": m, "replicates": self.replicates, "rqmc_se": a, "mc_se": b, "mc_reference": c}
            for m, a, b, c in zip(self.points, self.rqmc_se, self.mc_se, ref)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\r\n")
        cols = ("points_per_replicate", "replicates", "rqmc_se", "mc_se", "mc_reference")
        writer.writerow(cols)
        for row in self.rows():
            writer.writerow([row[c] if isinstance(row[c], int) else _fmt_real(row[c]) for c in cols])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.rows()]
        lines.append(json.dumps({"fit": {"rqmc_slope": self.rqmc_slope, "mc_slope": self.mc_slope}}, sort_keys=True))
        return "\n".join(lines) + "\n"


def loglog_slope(points: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(points)``."""
    x = np.log(np.asarray(points, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def run_convergence_sweep(config: ExperimentConfig, with_control: bool = True) -> SweepResult:
    """Replicate standard error of the RQMC estimator over the ``m_grid``.

    The control column repeats the same computation with i.i.d. uniform
    points, which should follow the ``M^-1/2`` Monte Carlo law.
    """
    config.validate()
    if tuple(config.estimators) != ("rqmc-cmc",):
        raise ConfigError("estimators", "the sweep runs the rqmc-cmc estimator only")
    if len(config.thresholds) != 1:
        raise ConfigError("thresholds", "the sweep takes exactly one threshold")
    grid = config.m_grid
    if grid is None or len(grid) < 3:
        raise ConfigError("m_grid", "need at least 3 grid points to fit a slope")
    if len(set(grid)) != len(grid):
        raise ConfigError("m_grid", "grid points must be distinct")
    problem = config.problem(config.thresholds[0])
    reps = config.replicates or 30
    rq, mc, means = [], [], []
    for i, m in enumerate(grid):
        plan = RqmcPlan(m, reps, scramble_seed=_cell_seed(config.seed, i))
        r = replicate_means(problem, plan)
        rq.append(float(r.std(ddof=1)))
        means.append(float(r.mean()))
        if with_control:
            mc.append(float(replicate_means(problem, replace(plan, scramble_seed=_cell_seed(config.seed, 10_000 + i)),
                                            randomized=False).std(ddof=1)))
    return SweepResult(
        points=tuple(grid),
        rqmc_se=tuple(rq),
        mc_se=tuple(mc),
        rqmc_slope=loglog_slope(grid, rq),
        mc_slope=loglog_slope(grid, mc) if with_control else float("nan"),
        replicates=reps,
        estimate=means[-1],
    )


# -- verification against reference values ---------------------------------------


@dataclass(frozen=True)
class ReferenceRow:
    gamma_th: float
    estimator: str
    estimate: float
    relative_error_percent: float
    printed: str

    @property
    def rounding(self) -> float:
        """Half a unit in the last printed digit of the reference estimate."""
        try:
            exp = Decimal(self.printed).as_tuple().exponent
        except InvalidOperation:
            return 0.0
        return 0.5 * 10.0 ** int(exp)

    @property
    def tolerance(self) -> float:
        return VERIFY_RE_MULTIPLE * self.relative_error_percent / 100.0 * self.estimate + self.rounding


def read_reference(path_or_preset: str) -> list[ReferenceRow]:
    """Read a reference CSV (``gamma_th,estimator,estimate,relative_error_percent``).

    A preset name resolves to the reference values shipped with the package.
    """
    if path_or_preset in PRESETS:
        text = resources.files("ostail").joinpath("presets", f"{path_or_preset}.csv").read_text()
    else:
        try:
            text = Path(path_or_preset).read_text()
        except OSError as exc:
            raise ConfigError("reference", f"cannot read {path_or_preset}: {exc}") from None
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        try:
            rows.append(ReferenceRow(
                gamma_th=float(rec["gamma_th"]),
                estimator=rec["estimator"].strip(),
                estimate=float(rec["estimate"]),
                relative_error_percent=float(rec["relative_error_percent"]),
                printed=rec["estimate"].strip(),
            ))
        except (KeyError, ValueError) as exc:
            raise ConfigError("reference", f"malformed reference row {rec!r}: {exc}") from None
    if not rows:
        raise ConfigError("reference", "reference file has no rows")
    return rows


@dataclass(frozen=True)
class Verdict:
    gamma_th: float
    estimator: str
    estimate: float
    reference: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} gamma_th={self.gamma_th:g} {self.estimator}: estimate={self.estimate:.4e} "
                f"reference={self.reference:.4e} |diff|={abs(self.estimate - self.reference):.3e} tol={self.tolerance:.3e}")


def verify_rows(rows: Iterable[ResultRow], reference: Iterable[ReferenceRow]) -> list[Verdict]:
    """Compare each reference cell with the matching row.

    A cell passes when ``|estimate - reference| <= 5 * RE_ref * reference``
    plus half a unit in the reference's last printed digit. A reference
    cell with no matching row fails.
    """
    by_key = {(r.gamma_th, r.estimator): r for r in rows}
    out = []
    for ref in reference:
        row = by_key.get((ref.gamma_th, ref.estimator))
        if row is None:
            out.append(Verdict(ref.gamma_th, ref.estimator, float("nan"), ref.estimate, ref.tolerance, False))
            continue
        ok = abs(row.estimate - ref.estimate) <= ref.tolerance
        out.append(Verdict(ref.gamma_th, ref.estimator, row.estimate, ref.estimate, ref.tolerance, ok))
    return out
