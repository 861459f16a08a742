"""Configuration-driven trial runner with mergeable sufficient statistics.

A run is deterministic in (master seed, t index, trial index): every trial
owns a child generator seeded from exactly that triple.  Trials are grouped
into fixed blocks of 64; each block folds its vectors into (count, sums,
cross-sums) and blocks are reduced in index order, so the result is
bit-identical for any worker partitioning.

The connectivity radius comes from a rule delta(t) = coeff * t^(-beta),
whose exponent determines the regime relative to 1/d; the declared regime
must agree with the exponent, which keeps misconfigured runs from silently
comparing against the wrong limit.
"""

from __future__ import annotations

import configparser
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .covariance import AdmissibleSequence, Regime, validate_sequence
from .errors import ConfigError, InsufficientDataError, ParameterError
from .functionals import FunctionalSpec, evaluate_vector
from .geometry import (DEFAULT_SIMPLEX_BUDGET, Window, build_neighbor_graph,
                       enumerate_simplices, sample_poisson)

TRIAL_BLOCK = 64


@dataclass(frozen=True)
class DeltaRule:
    coeff: float
    beta: float

    def __post_init__(self):
        if not (self.coeff > 0 and self.beta > 0):
            raise ConfigError("delta rule needs coeff > 0 and beta > 0")

    def delta(self, t: float) -> float:
        return self.coeff * t ** (-self.beta)

    def classify(self, d: int) -> str:
        edge = 1.0 / d
        if math.isclose(self.beta, edge, rel_tol=1e-12):
            return "critical"
        return "subcritical" if self.beta > edge else "supercritical"


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int
    sequence: tuple
    regime_kind: str  # subcritical | critical | supercritical
    rule: DeltaRule
    t_grid: tuple
    trials: int
    master_seed: int
    moment_samples: int = 200_000
    moment_seed: int = 0
    periodic: bool = False
    keep_raw: bool = False
    dimension_cap: int | None = None
    simplex_budget: int = DEFAULT_SIMPLEX_BUDGET
    branch: str | None = None
    output: str = "out"
    hvector_max_k: int | None = None

    def __post_init__(self):
        problems = validate_sequence(self.sequence, self.dimension)
        if problems:
            raise ConfigError("inadmissible sequence: " + "; ".join(problems))
        object.__setattr__(self, "sequence",
                           tuple(FunctionalSpec(int(k), float(a)) for k, a in self.sequence))
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if len(self.t_grid) < 1 or any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise ConfigError("t grid must be nonempty and strictly increasing")
        declared = self.regime_kind
        actual = self.rule.classify(self.dimension)
        if declared != actual:
            raise ConfigError(
                f"declared regime {declared!r} conflicts with delta exponent "
                f"beta={self.rule.beta} (classifies as {actual!r} at d={self.dimension})"
            )

    @property
    def cap(self) -> int:
        if self.dimension_cap is not None:
            return self.dimension_cap
        return max(k for k, _ in self.sequence)

    @property
    def admissible(self) -> AdmissibleSequence:
        return AdmissibleSequence(self.sequence, self.dimension)

    @property
    def critical_c(self) -> float:
        return self.rule.coeff**self.dimension

    def regime(self) -> Regime:
        if self.regime_kind == "subcritical":
            return Regime.subcritical()
        if self.regime_kind == "supercritical":
            return Regime.supercritical()
        return Regime.critical(self.critical_c, self.branch)


# ---------------------------------------------------------------------------
# configuration file handling (strict INI)

_SCHEMA = {
    "experiment": {"dimension", "sequence", "master_seed", "output"},
    "regime": {"kind", "delta_coeff", "delta_beta", "branch"},
    "simulation": {"t_grid", "trials", "periodic", "keep_raw", "dimension_cap",
                   "simplex_budget"},
    "moments": {"samples", "seed"},
    "hvector": {"max_k"},
}
_REQUIRED = {
    "experiment": {"dimension", "sequence", "master_seed"},
    "regime": {"kind", "delta_coeff", "delta_beta"},
    "simulation": {"t_grid", "trials"},
}


def _parse_sequence(text: str) -> tuple:
    pairs = []
    body = text.replace(" ", "")
    if not body:
        raise ConfigError("sequence must not be empty")
    for chunk in body.replace("),(", ");(").split(";"):
        chunk = chunk.strip("()")
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ConfigError(f"cannot parse sequence pair {chunk!r}")
        pairs.append((int(parts[0]), float(parts[1])))
    return tuple(pairs)


def _parse_bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {text!r}")


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    for section, keys in _REQUIRED.items():
        if section not in parser:
            raise ConfigError(f"missing required section [{section}]")
        for key in keys:
            if key not in parser[section]:
                raise ConfigError(f"missing required key {key!r} in section [{section}]")

    exp = parser["experiment"]
    reg = parser["regime"]
    sim = parser["simulation"]
    mom = parser["moments"] if "moments" in parser else {}
    hv = parser["hvector"] if "hvector" in parser else {}
    try:
        cap = sim.get("dimension_cap", "").strip()
        return ExperimentConfig(
            dimension=int(exp["dimension"]),
            sequence=_parse_sequence(exp["sequence"]),
            regime_kind=reg["kind"].strip(),
            rule=DeltaRule(float(reg["delta_coeff"]), float(reg["delta_beta"])),
            t_grid=tuple(float(x) for x in sim["t_grid"].split(",")),
            trials=int(sim["trials"]),
            master_seed=int(exp["master_seed"]),
            moment_samples=int(mom.get("samples", "200000")),
            moment_seed=int(mom.get("seed", "0")),
            periodic=_parse_bool(sim.get("periodic", "false"), "periodic"),
            keep_raw=_parse_bool(sim.get("keep_raw", "false"), "keep_raw"),
            dimension_cap=int(cap) if cap else None,
            simplex_budget=int(sim.get("simplex_budget", str(DEFAULT_SIMPLEX_BUDGET))),
            branch=reg.get("branch", "").strip() or None,
            output=exp.get("output", "out").strip(),
            hvector_max_k=int(hv["max_k"]) if "max_k" in hv else None,
        )
    except (ValueError, ParameterError) as exc:
        raise ConfigError(str(exc)) from exc


def serialize_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser["experiment"] = {
        "dimension": str(cfg.dimension),
        "sequence": ", ".join(f"({k}, {format(a, '.17g')})" for k, a in cfg.sequence),
        "master_seed": str(cfg.master_seed),
        "output": cfg.output,
    }
    parser["regime"] = {
        "kind": cfg.regime_kind,
        "delta_coeff": format(cfg.rule.coeff, ".17g"),
        "delta_beta": format(cfg.rule.beta, ".17g"),
    }
    if cfg.branch:
        parser["regime"]["branch"] = cfg.branch
    parser["simulation"] = {
        "t_grid": ", ".join(format(t, ".17g") for t in cfg.t_grid),
        "trials": str(cfg.trials),
        "periodic": "true" if cfg.periodic else "false",
        "keep_raw": "true" if cfg.keep_raw else "false",
        "simplex_budget": str(cfg.simplex_budget),
    }
    if cfg.dimension_cap is not None:
        parser["simulation"]["dimension_cap"] = str(cfg.dimension_cap)
    parser["moments"] = {"samples": str(cfg.moment_samples), "seed": str(cfg.moment_seed)}
    if cfg.hvector_max_k is not None:
        parser["hvector"] = {"max_k": str(cfg.hvector_max_k)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# accumulators


@dataclass
class EmpiricalCovariance:
    """Mergeable (count, sums, cross-sums) statistics, kept per trial block.

    Blocks are folded in index order at read time, which is what makes a
    merge of per-worker accumulators bit-identical to a sequential run.
    """

    n: int
    blocks: dict = field(default_factory=dict)

    def add_block(self, index: int, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[1] != self.n:
            raise ParameterError(f"expected vectors of width {self.n}")
        if index in self.blocks:
            raise ParameterError(f"duplicate block index {index}")
        self.blocks[index] = (vectors.shape[0], vectors.sum(axis=0),
                              vectors.T @ vectors)

    def merge(self, other: "EmpiricalCovariance") -> "EmpiricalCovariance":
        if other.n != self.n:
            raise ParameterError("accumulator widths differ")
        overlap = self.blocks.keys() & other.blocks.keys()
        if overlap:
            raise ParameterError(f"blocks {sorted(overlap)} present on both sides")
        merged = EmpiricalCovariance(self.n, dict(self.blocks))
        merged.blocks.update(other.blocks)
        return merged

    def _folded(self):
        count = 0
        sums = np.zeros(self.n)
        cross = np.zeros((self.n, self.n))
        for index in sorted(self.blocks):
            c, s, x = self.blocks[index]
            count += c
            sums = sums + s
            cross = cross + x
        return count, sums, cross

    @property
    def count(self) -> int:
        return sum(c for c, _, _ in self.blocks.values())

    def mean(self) -> np.ndarray:
        count, sums, _ = self._folded()
        if count == 0:
            raise InsufficientDataError("no trials accumulated")
        return sums / count

    def covariance(self) -> np.ndarray:
        count, sums, cross = self._folded()
        if count < 2:
            raise InsufficientDataError(
                f"covariance needs at least 2 trials, have {count}"
            )
        centered = cross - np.outer(sums, sums) / count
        cov = centered / (count - 1)
        return 0.5 * (cov + cov.T)

    def entry_stderr(self) -> np.ndarray:
        """Gaussian-approximation standard errors of the covariance entries."""
        cov = self.covariance()
        count = self.count
        diag = np.diag(cov)
        return np.sqrt((np.outer(diag, diag) + cov**2) / (count - 1))


@dataclass(frozen=True)
class TrialBatch:
    t: float
    delta: float
    accumulator: EmpiricalCovariance
    raw: np.ndarray | None = None


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    batches: tuple

    def batch_for(self, t: float) -> TrialBatch:
        for batch in self.batches:
            if batch.t == t:
                return batch
        raise KeyError(f"no batch at t={t}")


def run_single_trial(cfg: ExperimentConfig, t_index: int, trial_index: int) -> np.ndarray:
    """One trial's normalized functional vector, deterministic in the index triple."""
    t = cfg.t_grid[t_index]
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.master_seed, t_index, trial_index]))
    cloud = sample_poisson(Window(cfg.dimension), t, rng,
                           provenance=(cfg.master_seed, t_index, trial_index))
    delta = cfg.rule.delta(t)
    graph = build_neighbor_graph(cloud, delta, cfg.periodic)
    complex_ = enumerate_simplices(graph, cfg.cap, cfg.simplex_budget)
    return evaluate_vector(complex_, cloud, cfg.sequence, t, delta).normalized


def _trial_block(args) -> tuple:
    cfg, t_index, block_index = args
    start = block_index * TRIAL_BLOCK
    stop = min(start + TRIAL_BLOCK, cfg.trials)
    vectors = np.stack([run_single_trial(cfg, t_index, i) for i in range(start, stop)])
    return block_index, vectors


def run_trials(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    n = len(cfg.sequence)
    batches = []
    n_blocks = (cfg.trials + TRIAL_BLOCK - 1) // TRIAL_BLOCK
    for t_index, t in enumerate(cfg.t_grid):
        tasks = [(cfg, t_index, b) for b in range(n_blocks)]
        if workers <= 1:
            results = [_trial_block(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_trial_block, tasks))
        acc = EmpiricalCovariance(n)
        raw_parts = {}
        for block_index, vectors in results:
            acc.add_block(block_index, vectors)
            if cfg.keep_raw:
                raw_parts[block_index] = vectors
        raw = (np.concatenate([raw_parts[b] for b in sorted(raw_parts)])
               if cfg.keep_raw else None)
        batches.append(TrialBatch(t, cfg.rule.delta(t), acc, raw))
    return ExperimentResult(cfg, tuple(batches))


# ---------------------------------------------------------------------------
# empirical vs asymptotic comparison


@dataclass(frozen=True)
class ComparisonEntry:
    row: int
    col: int
    empirical: float
    asymptotic: float
    stderr: float
    z_score: float
    rel_dev: float
    ok: bool


@dataclass(frozen=True)
class ComparisonReport:
    entries: tuple
    ok: bool

    def worst_z(self) -> float:
        return max(abs(e.z_score) for e in self.entries)


def compare_covariance(acc: EmpiricalCovariance, model, z_tol: float = 3.0,
                       rel_tol: float = 0.25) -> ComparisonReport:
    """Entrywise z-scores and relative deviations of empirical vs asymptotic.

    An entry passes when it sits within z_tol combined standard errors or
    within rel_tol relatively; the report is a pass only if every entry is.
    """
    emp = acc.covariance()
    emp_se = acc.entry_stderr()
    asym = model.matrix
    if emp.shape != asym.shape:
        raise ParameterError("dimension mismatch between run and model")
    model_se = model.entry_stderr
    entries = []
    scale = max(float(np.abs(asym).max()), 1e-300)
    for i in range(emp.shape[0]):
        for j in range(i, emp.shape[1]):
            se = math.sqrt(emp_se[i, j] ** 2 + model_se[i, j] ** 2)
            diff = emp[i, j] - asym[i, j]
            z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
            rel = abs(diff) / max(abs(asym[i, j]), 1e-12 * scale)
            ok = abs(z) <= z_tol or rel <= rel_tol
            entries.append(ComparisonEntry(i, j, float(emp[i, j]), float(asym[i, j]),
                                           se, float(z), float(rel), bool(ok)))
    return ComparisonReport(tuple(entries), all(e.ok for e in entries))


def rank_one_alignment(acc: EmpiricalCovariance, model) -> float:
    """Relative mass of the empirical covariance outside the model's top eigenvector.

    Shrinks with t in the dense regime; reported, never asserted.
    """
    from . import kernels

    emp = acc.covariance()
    w, v = kernels.jacobi_eigen(model.matrix)
    top = v[:, -1:]
    proj = top @ (top.T @ emp @ top) @ top.T
    return float(np.linalg.norm(emp - proj) / np.linalg.norm(emp))
