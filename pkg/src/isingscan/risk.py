"""Monte-Carlo and exact worst-case risk, boundary sweeps and the regime map.

Replicate r of role ``role`` for alternative set j in cell ``cell`` is drawn
from ``SeedSequence(base_seed, spawn_key=(cell, role, j, r))``.  Each draw
depends only on its own key, so results do not depend on thread count or
scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from isingscan.detect import TestKind, TestSpec
from isingscan.graphs import Family, GraphSpec, build_graph, coupling_from_graph
from isingscan.model import ModelParams, exact_distribution, null_params, sample_replicates
from isingscan.signals import (
    AlternativeSpec,
    SignalClass,
    alternative_field,
    make_lattice_cube_class,
    make_mean_field_class,
)

ROLE_NULL, ROLE_ALT, ROLE_CALIBRATE = 0, 1, 2
CSV_HEADER = ("graph", "n", "beta", "s", "A", "tanhA", "test", "type1", "type1_se",
              "type2", "type2_se", "risk", "replicates", "seed")

Decider = Union[TestSpec, Callable[[np.ndarray], np.ndarray]]


def replicate_seeds(base_seed: int, cell: int, role: int, j: int, count: int, start: int = 0):
    return [np.random.SeedSequence(base_seed, spawn_key=(cell, role, j, r)) for r in range(start, start + count)]


def _decide(test: Decider, X: np.ndarray) -> np.ndarray:
    if isinstance(test, TestSpec):
        return test.decide(X)
    return np.asarray(test(X), dtype=bool).reshape(X.shape[0])


def mc_se(p: float, replicates: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / replicates) if replicates > 0 else 0.0


@dataclass
class RiskEstimate:
    type1: float
    type1_se: float
    type2: float
    type2_se: float
    replicates: int
    seed: int
    worst_set: Optional[int] = None
    method: str = "auto"
    exact: bool = False

    @property
    def risk(self) -> float:
        return self.type1 + self.type2

    @property
    def risk_se(self) -> float:
        return math.hypot(self.type1_se, self.type2_se)


def _alt_sets(alt: AlternativeSpec, sets: str) -> Sequence[int]:
    if sets == "first":
        return [0]
    if sets == "all":
        return range(alt.cls.count)
    raise ValueError("sets must be 'first' or 'all'")


def _rejections(test: Decider, params: ModelParams, seeds, method: str, burn_in, condition, threads: int) -> int:
    """Number of rejections over one draw per seed, sampled in thread-parallel blocks."""
    threads = max(1, int(threads))
    if threads == 1 or len(seeds) < 2 * threads:
        X = sample_replicates(params, seeds, method, burn_in=burn_in, condition=condition)
        return int(_decide(test, X).sum())
    blocks = np.array_split(np.arange(len(seeds)), threads)

    def work(idx):
        X = sample_replicates(params, [seeds[k] for k in idx], method, burn_in=burn_in, condition=condition)
        return int(_decide(test, X).sum())

    with ThreadPoolExecutor(threads) as pool:
        return sum(pool.map(work, blocks))


def estimate_risk(test: Decider, params_null: ModelParams, alt: AlternativeSpec, replicates: int,
                  seed: int = 0, cell: int = 0, method: str = "auto", sets: str = "first",
                  burn_in: Optional[int] = None, condition: Optional[str] = None,
                  threads: int = 1) -> RiskEstimate:
    """Empirical type I plus worst empirical type II over extremal alternatives mu_S(A).

    ``sets="first"`` evaluates one representative set (enough on vertex
    transitive graphs); ``sets="all"`` maximizes over the whole class.
    """
    if alt.cls.n != params_null.n:
        raise ValueError("signal class and model disagree on n")
    if replicates < 1:
        raise ValueError("need at least one replicate")
    seeds = replicate_seeds(seed, cell, ROLE_NULL, 0, replicates)
    t1 = _rejections(test, params_null, seeds, method, burn_in, condition, threads) / replicates
    t2, worst = -1.0, None
    for j in _alt_sets(alt, sets):
        params = params_null.with_field(alternative_field(alt, j))
        seeds = replicate_seeds(seed, cell, ROLE_ALT, j, replicates)
        p_accept = 1.0 - _rejections(test, params, seeds, method, burn_in, condition, threads) / replicates
        if p_accept > t2:
            t2, worst = p_accept, j
    return RiskEstimate(t1, mc_se(t1, replicates), t2, mc_se(t2, replicates), replicates, seed, worst, method)


def exact_rejection_probability(test: Decider, params: ModelParams, condition: Optional[str] = None) -> float:
    dist = exact_distribution(params, condition)
    return float(np.sum(dist.probs[_decide(test, dist.spins)]))


def exact_risk(test: Decider, params_null: ModelParams, alt: AlternativeSpec, sets: str = "first",
               condition: Optional[str] = None) -> RiskEstimate:
    """Risk by summing decision indicators against the enumerated law (n <= 20)."""
    t1 = exact_rejection_probability(test, params_null, condition)
    t2, worst = -1.0, None
    for j in _alt_sets(alt, sets):
        p = 1.0 - exact_rejection_probability(test, params_null.with_field(alternative_field(alt, j)), condition)
        if p > t2:
            t2, worst = p, j
    return RiskEstimate(t1, 0.0, t2, 0.0, 0, 0, worst, "exact", True)


def magnetization_null_statistics(params_null: ModelParams, replicates: int, seed: int = 0, cell: int = 0,
                                  method: str = "auto", burn_in: Optional[int] = None,
                                  role: int = ROLE_CALIBRATE) -> np.ndarray:
    seeds = replicate_seeds(seed, cell, role, 0, replicates)
    X = sample_replicates(params_null, seeds, method, burn_in=burn_in)
    return params_null.n**0.25 * X.mean(axis=1, dtype=np.float64)


def calibrate_magnetization_cutoff(params_null: ModelParams, replicates: int = 2000, level: float = 0.95,
                                   seed: int = 0, cell: int = 0, method: str = "auto",
                                   burn_in: Optional[int] = None) -> float:
    """Empirical ``level`` quantile of n^{1/4} mean(X) under the null."""
    stats = magnetization_null_statistics(params_null, replicates, seed, cell, method, burn_in)
    return float(np.quantile(stats, level))


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepGrid:
    graph: GraphSpec
    betas: Sequence[float]
    s_values: Sequence[int]
    A_values: Optional[Sequence[float]] = None
    tanhA_values: Optional[Sequence[float]] = None
    tests: Sequence[str] = ("conditional_scan",)
    replicates: int = 100
    seed: int = 0
    class_count: int = 10
    delta: float = 0.1
    eta: float = 0.5
    level: float = 0.95
    method: str = "auto"
    burn_in: Optional[int] = None

    def __post_init__(self):
        if (self.A_values is None) == (self.tanhA_values is None):
            raise ValueError("give exactly one of A_values or tanhA_values")
        if not self.betas or not self.s_values or not self.tests or not self.strengths():
            raise ValueError("every grid axis must be nonempty")
        if self.replicates < 100:
            raise ValueError("replicates per cell must be >= 100")
        if any(not 0 < t < 1 for t in (self.tanhA_values or ())):
            raise ValueError("tanh(A) values must lie in (0, 1)")
        self.tests = tuple(TestKind(t).value for t in self.tests)

    def strengths(self) -> list:
        if self.A_values is not None:
            return [float(a) for a in self.A_values]
        return [float(np.arctanh(t)) for t in self.tanhA_values]

    def cells(self) -> list:
        return [(b, s, a, t) for b in self.betas for s in self.s_values for a in self.strengths() for t in self.tests]


@dataclass
class RiskRecord:
    graph: str
    n: int
    beta: float
    s: int
    A: float
    tanhA: float
    test: str
    type1: float
    type1_se: float
    type2: float
    type2_se: float
    risk: float
    replicates: int
    seed: int
    cell: int = field(default=0, compare=False)

    def row(self) -> list:
        return [_fmt(getattr(self, k)) for k in CSV_HEADER]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


class SweepIOError(OSError):
    pass


def _build_class(spec: GraphSpec, n: int, s: int, count: int) -> SignalClass:
    if spec.family is Family.LATTICE:
        return make_lattice_cube_class(spec.dim, spec.side, s)
    return make_mean_field_class(n, s, min(count, n // s), disjoint=True)


def _cell_test(kind: str, grid: SweepGrid, params_null: ModelParams, cls: SignalClass, s: int, A: float,
               cell: int) -> TestSpec:
    if kind == TestKind.CONDITIONAL_SCAN.value:
        return TestSpec(TestKind.CONDITIONAL_SCAN, cls, grid.delta, beta=params_null.beta,
                        coupling=params_null.coupling)
    if kind == TestKind.NAIVE_SCAN.value:
        return TestSpec(TestKind.NAIVE_SCAN, cls, grid.delta, eta=grid.eta)
    cutoff = calibrate_magnetization_cutoff(params_null, grid.replicates, grid.level, grid.seed, cell,
                                            grid.method, grid.burn_in)
    return TestSpec(TestKind.MAGNETIZATION, cutoff=cutoff, s=s, A=A)


def run_cell(grid: SweepGrid, cell: int, coupling=None, threads: int = 1) -> RiskRecord:
    beta, s, A, kind = grid.cells()[cell]
    if coupling is None:
        coupling = _grid_coupling(grid.graph)
    params_null = null_params(beta, coupling)
    cls = _build_class(grid.graph, coupling.n, s, grid.class_count)
    test = _cell_test(kind, grid, params_null, cls, s, A, cell)
    est = estimate_risk(test, params_null, AlternativeSpec(cls, A), grid.replicates, grid.seed, cell,
                        grid.method, burn_in=grid.burn_in, threads=threads)
    return RiskRecord(grid.graph.label(), coupling.n, float(beta), int(s), float(A), float(np.tanh(A)), kind,
                      est.type1, est.type1_se, est.type2, est.type2_se, est.risk, grid.replicates, grid.seed, cell)


def _grid_coupling(spec: GraphSpec):
    scaling = "lattice" if spec.family is Family.LATTICE else "mean_field"
    return coupling_from_graph(build_graph(spec), scaling)


def format_records_csv(records: Sequence[RiskRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def _existing_rows(path: Path) -> int:
    if not path.exists():
        return 0
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return 0
    if tuple(rows[0]) != CSV_HEADER:
        raise SweepIOError(f"{path}: header does not match the risk schema")
    return len(rows) - 1


def _read_records(path: Path) -> list:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for k, r in enumerate(rows):
        out.append(RiskRecord(r["graph"], int(r["n"]), float(r["beta"]), int(r["s"]), float(r["A"]),
                              float(r["tanhA"]), r["test"], float(r["type1"]), float(r["type1_se"]),
                              float(r["type2"]), float(r["type2_se"]), float(r["risk"]),
                              int(r["replicates"]), int(r["seed"]), k))
    return out


def _append(path: Path, text: str, cell: int) -> None:
    try:
        with path.open("a", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise SweepIOError(f"cell {cell}: could not write {path}: {exc}") from exc


def boundary_sweep(grid: SweepGrid, csv_path=None, json_path=None, threads: int = 1,
                   resume: bool = True) -> list:
    """One RiskRecord per grid cell, in cell order.

    With ``csv_path`` each record is appended (and fsynced) as soon as its cell
    finishes; a rerun with ``resume`` skips the cells already on disk.  The
    optional ``json_path`` receives a JSON-lines mirror.
    """
    cells = grid.cells()
    done: list = []
    csv_path = Path(csv_path) if csv_path is not None else None
    json_path = Path(json_path) if json_path is not None else None
    if csv_path is not None:
        k = _existing_rows(csv_path) if resume else 0
        if k > len(cells):
            raise SweepIOError(f"{csv_path}: more rows than grid cells")
        if k > 0:
            done = _read_records(csv_path)
        else:
            _write_fresh(csv_path, ",".join(CSV_HEADER) + "\n")
            if json_path is not None:
                _write_fresh(json_path, "")
    elif json_path is not None:
        _write_fresh(json_path, "")
    coupling = _grid_coupling(grid.graph)
    records = list(done)
    for cell in range(len(done), len(cells)):
        rec = run_cell(grid, cell, coupling, threads)
        records.append(rec)
        if csv_path is not None:
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\n").writerow(rec.row())
            _append(csv_path, buf.getvalue(), cell)
        if json_path is not None:
            _append(json_path, rec.to_json() + "\n", cell)
    return records


def _write_fresh(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise SweepIOError(f"could not write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# regime map


class Regime(str, Enum):
    IMPOSSIBLE = "impossible"
    RATE_SQRT_LOGN_OVER_S = "rate_sqrt_logn_over_s"
    RATE_N_QUARTER_OVER_S = "rate_n_quarter_over_s"


@dataclass(frozen=True)
class BoundaryPrediction:
    regime: Regime
    rate: Optional[float]
    conditions: tuple
    gap: bool = False

    def to_dict(self) -> dict:
        return {"regime": self.regime.value, "rate": self.rate, "conditions": list(self.conditions), "gap": self.gap}


def predicted_boundary(beta: float, n: int, s: int, family: str = "mean_field", c: float = 0.5, C: float = 4.0,
                       beta_c: Optional[float] = None) -> BoundaryPrediction:
    """Regime and rate for tanh(A) at (n, s), with artifact constants c < C.

    Mean-field families have critical point beta = 1.  Lattices need the
    (unknown in closed form) ``beta_c`` and are only classified below it.
    Sizes strictly between c log n and C log n fall outside every proven
    regime; they get the sqrt(log n / s) rate with ``gap=True``.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if n < 2 or s < 1:
        raise ValueError("need n >= 2 and s >= 1")
    if not 0 < c <= C:
        raise ValueError("need 0 < c <= C")
    log_n = math.log(n)
    conds = []
    if s <= c * log_n:
        conds.append(f"s <= c log n ({s} <= {c * log_n:.6g})")
        return BoundaryPrediction(Regime.IMPOSSIBLE, None, tuple(conds))
    sqrt_rate = math.sqrt(log_n / s)
    gap = s < C * log_n
    conds.append(f"s {'<' if gap else '>='} C log n ({s} vs {C * log_n:.6g})")
    if family == "lattice":
        if beta_c is None or beta >= beta_c:
            raise ValueError("lattice classification needs beta < beta_c with beta_c supplied")
        conds.append(f"beta < beta_c ({beta} < {beta_c})")
        return BoundaryPrediction(Regime.RATE_SQRT_LOGN_OVER_S, sqrt_rate, tuple(conds), gap)
    if beta != 1.0:
        conds.append(f"beta != 1 ({beta})")
        return BoundaryPrediction(Regime.RATE_SQRT_LOGN_OVER_S, sqrt_rate, tuple(conds), gap)
    crit = math.sqrt(n) / log_n
    conds.append("beta = 1")
    if s >= crit:
        conds.append(f"s >= sqrt(n)/log n ({s} >= {crit:.6g})")
        return BoundaryPrediction(Regime.RATE_N_QUARTER_OVER_S, n**0.25 / s, tuple(conds), gap)
    conds.append(f"s < sqrt(n)/log n ({s} < {crit:.6g})")
    return BoundaryPrediction(Regime.RATE_SQRT_LOGN_OVER_S, sqrt_rate, tuple(conds), gap)
