"""Exact small-n quantities by brute-force enumeration.

Everything here sums over all 2^n states in log space, so it is exact up to
floating point and capped at ``EXACT_MAX_N`` sites (``n <= 8`` for the random
inequality batches, ``n <= 16`` for chain correlations).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from isingscan.graphs import CouplingMatrix, build_lattice, coupling_from_graph
from isingscan.model import (
    EXACT_MAX_N,
    NONNEG,
    ModelParams,
    SizeCapError,
    all_spins,
    enumerate_log_weights,
    exact_distribution,
)
from isingscan.signals import SignalClass

FIXED_POINT_TOL = 1e-12
INEQUALITY_TOL = 1e-10


def _check_cap(n: int, cap: int = EXACT_MAX_N) -> None:
    if n > cap:
        raise SizeCapError(f"exact computation capped at n = {cap}, got {n}")


@dataclass(frozen=True)
class PartitionValue:
    log_Z: float
    n: int
    condition: Optional[str] = None

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)


def partition_function(params: ModelParams, condition: Optional[str] = None) -> PartitionValue:
    _check_cap(params.n)
    return PartitionValue(exact_distribution(params, condition).log_Z, params.n, condition)


def _log_z(beta: float, q_dense: np.ndarray, mu: np.ndarray) -> float:
    return float(logsumexp(enumerate_log_weights(beta, q_dense, mu)))


@dataclass
class MomentTable:
    means: np.ndarray
    second: np.ndarray
    condition: Optional[str] = None

    @property
    def covariances(self) -> np.ndarray:
        return self.second - np.outer(self.means, self.means)


def _moments_from_probs(spins: np.ndarray, probs: np.ndarray):
    means = np.zeros(spins.shape[1])
    second = np.zeros((spins.shape[1],) * 2)
    step = 1 << 16
    for lo in range(0, spins.shape[0], step):
        s = spins[lo : lo + step].astype(np.float64)
        p = probs[lo : lo + step]
        means += p @ s
        second += (s * p[:, None]).T @ s
    second = 0.5 * (second + second.T)
    return means, second


def moments(params: ModelParams, condition: Optional[str] = None) -> MomentTable:
    """Exact means and second moments E[X_i X_j] (covariances derived)."""
    _check_cap(params.n)
    table = exact_distribution(params, condition)
    means, second = _moments_from_probs(table.spins, table.probs)
    return MomentTable(means, second, condition)


# ---------------------------------------------------------------------------
# mean-field fixed point


@dataclass(frozen=True)
class FixedPoint:
    t: float
    regime: str
    derivative: float
    beta: float
    B: float


def fixed_point(beta: float, B: float = 0.0) -> FixedPoint:
    """Nonnegative root of t = tanh(beta t + B) by bisection on [0, 1]."""
    if B < 0:
        raise ValueError("B must be >= 0")
    phi = lambda x: x - math.tanh(beta * x + B)  # noqa: E731
    regime = "high" if beta < 1 else ("critical" if beta == 1 else "low")
    if B == 0 and beta <= 1:
        t = 0.0
    else:
        lo = 0.0 if B > 0 else 1e-300
        hi = 1.0
        if phi(lo) >= 0:
            t = lo
        else:
            for _ in range(2000):
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                if phi(mid) < 0:
                    lo = mid
                else:
                    hi = mid
            t = lo if abs(phi(lo)) <= abs(phi(hi)) else hi
    if abs(phi(t)) > FIXED_POINT_TOL:
        raise ArithmeticError(f"fixed point residual {phi(t)} exceeds tolerance")
    deriv = 1.0 - beta / math.cosh(beta * t + B) ** 2
    return FixedPoint(t, regime, deriv, beta, B)


# ---------------------------------------------------------------------------
# likelihood-ratio second moments


@dataclass
class SecondMomentReport:
    """E_0[L_pi^2] for the uniform prior over a list of alternatives.

    ``terms[a, b]`` is E_0[L_a L_b]; the diagonal holds the per-set terms and
    the off-diagonal the cross terms.  The variance rates used by the lower
    bound arguments are proof devices and are only carried as a note.
    """

    value: float
    terms: np.ndarray
    A: Optional[float]
    mode: str
    note: str = "rates r_n, r_n' are asymptotic proof devices; not computed"

    @property
    def diagonal_terms(self) -> np.ndarray:
        return np.diag(self.terms).copy()

    @property
    def cross_terms(self) -> np.ndarray:
        k = self.terms.shape[0]
        return self.terms[~np.eye(k, dtype=bool)]


def second_moment_fields(params_null: ModelParams, fields: Sequence[np.ndarray]) -> SecondMomentReport:
    """E_0[L^2] for arbitrary nonnegative fields: mean of Z0 Z(mu_a+mu_b) / (Z(mu_a) Z(mu_b))."""
    _check_cap(params_null.n)
    q = params_null.coupling.to_dense()
    beta = params_null.beta
    mus = [np.asarray(f, dtype=np.float64) for f in fields]
    k = len(mus)
    log_z0 = _log_z(beta, q, params_null.field)
    log_single = [_log_z(beta, q, params_null.field + mu) for mu in mus]
    terms = np.empty((k, k))
    for a in range(k):
        for b in range(a, k):
            lz = _log_z(beta, q, params_null.field + mus[a] + mus[b])
            terms[a, b] = terms[b, a] = math.exp(log_z0 + lz - log_single[a] - log_single[b])
    return SecondMomentReport(float(terms.mean()), terms, None, "fields")


def _check_disjoint(cls: SignalClass) -> None:
    seen: set = set()
    for S in cls.sets:
        if seen.intersection(S):
            raise ValueError("second moment computation needs pairwise disjoint sets")
        seen.update(S)


def second_moment_mixture(params_null: ModelParams, cls: SignalClass, A: Optional[float] = None,
                          mode: str = "finite_A") -> SecondMomentReport:
    """Second moment of the mixture likelihood ratio over fields A * 1_S, S in ``cls``.

    ``mode="limit_A_infinity"`` returns the A -> infinity limit, built from
    the null probabilities P_0(X_S = 1).
    """
    _check_cap(params_null.n)
    _check_disjoint(cls)
    n = params_null.n
    if mode == "finite_A":
        if A is None:
            raise ValueError("finite_A mode needs A")
        fields = []
        for S in cls.sets:
            mu = np.zeros(n)
            mu[list(S)] = A
            fields.append(mu)
        rep = second_moment_fields(params_null, fields)
        rep.A, rep.mode = A, mode
        return rep
    if mode != "limit_A_infinity":
        raise ValueError(f"unknown mode {mode!r}")
    table = exact_distribution(params_null)
    spins = table.spins
    k = cls.count
    all_plus = [np.all(spins[:, list(S)] > 0, axis=1) for S in cls.sets]
    p_single = np.array([table.probs[m].sum() for m in all_plus])
    terms = np.empty((k, k))
    for a in range(k):
        terms[a, a] = 1.0 / p_single[a]
        for b in range(a + 1, k):
            joint = table.probs[all_plus[a] & all_plus[b]].sum()
            terms[a, b] = terms[b, a] = joint / (p_single[a] * p_single[b])
    return SecondMomentReport(float(terms.mean()), terms, math.inf, mode)


def second_moment_direct(params_null: ModelParams, fields: Sequence[np.ndarray]) -> float:
    """Same quantity summed state by state: sum_x P_0(x) L(x)^2."""
    table = exact_distribution(params_null)
    s = table.spins.astype(np.float64)
    lr = np.zeros(s.shape[0])
    for mu in fields:
        alt = exact_distribution(params_null.with_field(params_null.field + mu))
        lr += np.exp(alt.log_weights - alt.log_Z - (table.log_weights - table.log_Z))
    lr /= len(fields)
    return float(np.sum(table.probs * lr**2))


# ---------------------------------------------------------------------------
# 1-d chain


def chain_correlation(n: int, beta: float, check: bool = True, tol: float = 1e-12) -> np.ndarray:
    """Exact E[X_i X_j] on the free-boundary path with unit couplings, mu = 0."""
    _check_cap(n, 16)
    adj = build_lattice(1, n, 1)
    params = ModelParams(beta, coupling_from_graph(adj, "lattice"), np.zeros(n))
    corr = moments(params).second
    if check:
        gap = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        err = np.max(np.abs(corr - math.tanh(beta) ** gap))
        if err > tol:
            raise ArithmeticError(f"chain correlation deviates from tanh(beta)^|i-j| by {err}")
    return corr


# ---------------------------------------------------------------------------
# correlation inequalities


@dataclass
class Instance:
    seed: int
    beta: float
    q: np.ndarray
    mu: np.ndarray


def random_instance(seed: int, n_range=(3, 8), edge_prob: float = 0.5) -> Instance:
    """Random ferromagnetic instance: n uniform in n_range, Q_ij ~ U[0,1] on a G(n, 1/2) pattern."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    w = rng.random((n, n))
    mask = rng.random((n, n)) < edge_prob
    upper = np.triu(w * mask, k=1)
    q = upper + upper.T
    beta = float(rng.uniform(0.0, 2.0))
    mu = rng.random(n)
    return Instance(seed, beta, q, mu)


def _exact_moments_dense(beta: float, q: np.ndarray, mu: np.ndarray):
    lw = enumerate_log_weights(beta, q, mu)
    probs = np.exp(lw - logsumexp(lw))
    means, second = _moments_from_probs(all_spins(q.shape[0]), probs)
    return means, second - np.outer(means, means)


@dataclass
class CheckTally:
    checked: int = 0
    violations: int = 0
    max_violation: float = 0.0
    violating_seeds: list = field(default_factory=list)

    def record(self, seed: int, slack: np.ndarray, tol: float) -> None:
        # slack < 0 means the inequality fails by that much
        worst = float(-np.min(slack)) if np.size(slack) else 0.0
        self.checked += int(np.size(slack))
        self.max_violation = max(self.max_violation, worst)
        if worst > tol:
            self.violations += 1
            self.violating_seeds.append(int(seed))


@dataclass
class InequalityReport:
    instances: int
    base_seed: int
    tol: float
    checks: dict

    @property
    def total_violations(self) -> int:
        return sum(c.violations for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "instances": self.instances,
            "base_seed": self.base_seed,
            "tol": self.tol,
            "total_violations": self.total_violations,
            "checks": {
                name: {
                    "checked": c.checked,
                    "violations": c.violations,
                    "max_violation": c.max_violation,
                    "violating_seeds": c.violating_seeds,
                }
                for name, c in self.checks.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def check_instance(inst: Instance, checks: dict, tol: float = INEQUALITY_TOL) -> None:
    rng = np.random.default_rng([inst.seed, 1])
    beta, q, mu = inst.beta, inst.q, inst.mu
    means, cov = _exact_moments_dense(beta, q, mu)
    # GKS: nonnegative covariances and magnetizations
    checks["gks"].record(inst.seed, np.concatenate([cov.ravel(), means]) + 0.0, tol)
    # GHS: larger field => smaller covariances
    mu_big = mu + rng.random(mu.size)
    _, cov_big = _exact_moments_dense(beta, q, mu_big)
    checks["ghs_ordering"].record(inst.seed, (cov - cov_big).ravel(), tol)
    # Griffiths II at zero field: larger couplings => larger covariances
    extra = np.triu(rng.random(q.shape) * (rng.random(q.shape) < 0.5), k=1)
    q_big = q + extra + extra.T
    _, cov0 = _exact_moments_dense(beta, q, np.zeros_like(mu))
    _, cov0_big = _exact_moments_dense(beta, q_big, np.zeros_like(mu))
    checks["griffiths_ii"].record(inst.seed, (cov0_big - cov0).ravel(), tol)
    # field lower bound E X_i >= (1 - tanh(beta ||Q||_inf)) tanh(mu_i)
    rho = 1.0 - math.tanh(beta * np.abs(q).sum(axis=1).max())
    checks["field_lower_bound"].record(inst.seed, means - rho * np.tanh(mu), tol)


def verify_inequalities(instances: int = 500, seed: int = 0, tol: float = INEQUALITY_TOL) -> InequalityReport:
    """Check GKS, GHS ordering, Griffiths II and the field lower bound on random instances."""
    names = ("gks", "ghs_ordering", "griffiths_ii", "field_lower_bound")
    checks = {name: CheckTally() for name in names}
    seeds = np.random.SeedSequence(seed).generate_state(instances, dtype=np.uint32)
    for s in seeds.tolist():
        check_instance(random_instance(s), checks, tol)
    return InequalityReport(instances, seed, tol, checks)


# ---------------------------------------------------------------------------
# marginals of small sets


@dataclass
class MarginalDeviation:
    value: float
    argmax_set: tuple
    argmax_pattern: tuple
    reference: str
    mc_error: Optional[float] = None


def _reference_law(s: int, tilt: float) -> np.ndarray:
    """g(a) proportional to exp(tilt * sum(a)), indexed by pattern code (bit k <=> a_k = +1)."""
    codes = np.arange(1 << s)
    plus = np.array([bin(c).count("1") for c in codes])
    w = np.exp(tilt * (2 * plus - s))
    return w / w.sum()


def small_marginal_deviation(params: ModelParams, s: int, sets: Optional[Sequence[Sequence[int]]] = None,
                             samples: Optional[np.ndarray] = None, low_temp: Optional[bool] = None
                             ) -> MarginalDeviation:
    """sup over sets S (|S| = s) and patterns a of |P(X_S = a) / g(a) - 1|.

    Above beta = 1 the measure is conditioned on mean >= 0 and g is the tilted
    product law with the mean-field fixed point; otherwise g = 2^{-s}.  With
    ``samples`` the probabilities are Monte-Carlo frequencies and a standard
    error at the maximizing cell is reported.
    """
    n = params.n
    if low_temp is None:
        low_temp = params.beta > 1
    condition = NONNEG if low_temp else None
    if low_temp:
        g_by_code = _reference_law(s, params.beta * fixed_point(params.beta).t)
        ref = "tilted"
    else:
        g_by_code = _reference_law(s, 0.0)
        ref = "uniform"
    if samples is None:
        _check_cap(n)
        table = exact_distribution(params, condition)
        spins, weights = table.spins, table.probs
        reps = None
    else:
        spins = np.asarray(samples)
        if low_temp:
            spins = spins[spins.sum(axis=1, dtype=np.int64) >= 0]
        weights = np.full(spins.shape[0], 1.0 / spins.shape[0])
        reps = spins.shape[0]
    if sets is None:
        sets = list(itertools.combinations(range(n), s))
    bits = (spins > 0).astype(np.int64)
    weightsb = 1 << np.arange(s)
    best = (-1.0, None, None, None)
    for S in sets:
        codes = bits[:, list(S)] @ weightsb
        marg = np.bincount(codes, weights=weights, minlength=1 << s)
        dev = np.abs(marg / g_by_code - 1.0)
        j = int(np.argmax(dev))
        if dev[j] > best[0]:
            best = (float(dev[j]), tuple(int(v) for v in S), j, marg[j])
    value, S_best, code, p_hat = best
    pattern = tuple(1 if (code >> k) & 1 else -1 for k in range(s))
    mc = None
    if reps is not None:
        mc = math.sqrt(p_hat * (1 - p_hat) / reps) / g_by_code[code]
    return MarginalDeviation(value, S_best, pattern, ref, mc)
