"""Ising measure ``P(x) ∝ exp(beta/2 x'Qx + mu'x)`` on {-1,+1}^n and its samplers.

Three samplers are provided:

* exact enumeration (inverse CDF over all 2^n states, n <= 20),
* an exact lumped sampler for complete-graph couplings, where the law of the
  per-group plus counts is tabulated for groups of sites sharing a field value,
* systematic-scan Glauber (heat-bath) dynamics for any coupling.

Configurations are ``int8`` arrays of ±1; batches are 2-D with one row per
configuration.  Bit ``i`` of a packed state is set iff spin ``i`` is +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp

from isingscan.graphs import CouplingMatrix

EXACT_MAX_N = 20
LUMPED_MAX_CELLS = 20_000_000
_CHUNK_UPDATES = 1 << 21
NONNEG = "nonneg"


class SizeCapError(ValueError):
    """Raised when an exact computation is requested beyond its size cap."""


@dataclass(frozen=True)
class ModelParams:
    beta: float
    coupling: CouplingMatrix
    field: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.field, dtype=np.float64).copy()
        if f.ndim != 1 or f.shape[0] != self.coupling.n:
            raise ValueError(f"field length {f.shape} does not match coupling dimension {self.coupling.n}")
        if not np.all(np.isfinite(f)) or not math.isfinite(self.beta):
            raise ValueError("beta and field must be finite")
        f.setflags(write=False)
        object.__setattr__(self, "field", f)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n(self) -> int:
        return self.coupling.n

    @property
    def ferromagnetic(self) -> bool:
        return self.beta >= 0

    def with_field(self, field) -> "ModelParams":
        return ModelParams(self.beta, self.coupling, field)

    def with_beta(self, beta: float) -> "ModelParams":
        return ModelParams(beta, self.coupling, self.field)


def null_params(beta: float, coupling: CouplingMatrix) -> ModelParams:
    return ModelParams(beta, coupling, np.zeros(coupling.n))


# ---------------------------------------------------------------------------
# configurations


def pack_spins(x) -> np.ndarray:
    """Bit-pack ±1 configurations (last axis) little-endian into uint8."""
    x = np.asarray(x)
    return np.packbits(x > 0, axis=-1, bitorder="little")


def unpack_spins(packed, n: int) -> np.ndarray:
    bits = np.unpackbits(np.asarray(packed, dtype=np.uint8), axis=-1, count=n, bitorder="little")
    return (bits.astype(np.int8) * 2 - 1).astype(np.int8)


@dataclass(frozen=True)
class SpinConfig:
    n: int
    bits: bytes

    @classmethod
    def from_spins(cls, x) -> "SpinConfig":
        x = np.asarray(x)
        if not np.all(np.abs(x) == 1):
            raise ValueError("spins must be ±1")
        return cls(int(x.shape[0]), pack_spins(x).tobytes())

    @classmethod
    def from_hex(cls, n: int, text: str) -> "SpinConfig":
        return cls(n, bytes.fromhex(text.strip()))

    def spins(self) -> np.ndarray:
        return unpack_spins(np.frombuffer(self.bits, dtype=np.uint8), self.n)

    @property
    def mean(self) -> float:
        return float(self.spins().mean())

    def hex(self) -> str:
        return self.bits.hex()


def local_fields(coupling: CouplingMatrix, x) -> np.ndarray:
    """m_i = sum_j Q_ij x_j (rows of a batch handled independently)."""
    x = np.asarray(x)
    if x.shape[-1] != coupling.n:
        raise ValueError("configuration length does not match coupling")
    return coupling.matvec(x)


def conditional_prob_plus(beta, m_i, mu_i):
    """P(X_i = +1 | rest) = (1 + tanh(beta m_i + mu_i)) / 2."""
    return 0.5 * (1.0 + np.tanh(beta * np.asarray(m_i, dtype=np.float64) + mu_i))


def log_weight(params: ModelParams, x) -> np.ndarray | float:
    """Unnormalized log-mass beta/2 x'Qx + mu'x via a sparse mat-vec."""
    x = np.asarray(x)
    xf = x.astype(np.float64)
    quad = np.sum(xf * params.coupling.matvec(x), axis=-1)
    out = 0.5 * params.beta * quad + xf @ params.field
    return float(out) if np.ndim(out) == 0 else out


def field_vector(n: int, support: Sequence[int], eta: float) -> np.ndarray:
    """mu with mu_i = eta on ``support`` and 0 elsewhere."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    idx = np.asarray(list(support), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError("support index out of range")
    mu = np.zeros(n)
    mu[idx] = eta
    return mu


# ---------------------------------------------------------------------------
# Glauber dynamics


def glauber_step(params: ModelParams, x: np.ndarray, m: np.ndarray, i: int, u: float):
    """Heat-bath update of site ``i`` with uniform ``u``; updates ``x`` and ``m`` in place."""
    p = 0.5 * (1.0 + math.tanh(params.beta * m[i] + params.field[i]))
    new = 1 if u < p else -1
    old = int(x[i])
    if new != old:
        delta = float(new - old)
        x[i] = new
        c = params.coupling
        if c.complete_weight is not None:
            m += c.complete_weight * delta
            m[i] -= c.complete_weight * delta
        else:
            lo, hi = c.indptr[i], c.indptr[i + 1]
            m[c.indices[lo:hi]] += c.data[lo:hi] * delta
    return x, m


@njit(cache=True, nogil=True)
def _sweeps_csr(indptr, indices, data, beta, field, x, m, u, n_sweeps, thin, out, row):
    n = x.shape[0]
    k = 0
    for s in range(n_sweeps):
        for i in range(n):
            p = 0.5 * (1.0 + math.tanh(beta * m[i] + field[i]))
            new = 1 if u[k] < p else -1
            k += 1
            if new != x[i]:
                delta = 2.0 * new
                x[i] = new
                for ptr in range(indptr[i], indptr[i + 1]):
                    m[indices[ptr]] += data[ptr] * delta
        if thin > 0 and (s + 1) % thin == 0:
            out[row, :] = x
            row += 1
    return row


@njit(cache=True, nogil=True)
def _sweeps_complete(w, beta, field, x, total, u, n_sweeps, thin, out, row):
    n = x.shape[0]
    k = 0
    for s in range(n_sweeps):
        for i in range(n):
            p = 0.5 * (1.0 + math.tanh(beta * w * (total - x[i]) + field[i]))
            new = 1 if u[k] < p else -1
            k += 1
            if new != x[i]:
                total += 2 * new
                x[i] = new
        if thin > 0 and (s + 1) % thin == 0:
            out[row, :] = x
            row += 1
    return row, total


def default_burn_in(n: int, beta: float) -> int:
    """200*ceil(log n) sweeps below beta = 1, 2000*ceil(log n) at or above."""
    factor = 200 if beta < 1 else 2000
    return factor * max(1, math.ceil(math.log(max(n, 2))))


@dataclass
class SamplerConfig:
    num_samples: int = 1
    burn_in: Optional[int] = None
    thinning: int = 1
    seed: int = 0
    init: str = "plus"
    condition: Optional[str] = None

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1 (sweeps per retained sample)")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.init not in ("plus", "minus", "random"):
            raise ValueError(f"unknown init rule {self.init!r}")
        if self.condition not in (None, NONNEG):
            raise ValueError(f"unknown condition {self.condition!r}")

    def resolved_burn_in(self, n: int, beta: float) -> int:
        return default_burn_in(n, beta) if self.burn_in is None else self.burn_in


def _initial_state(n: int, rule: str, rng: np.random.Generator) -> np.ndarray:
    if rule == "plus":
        return np.ones(n, dtype=np.int8)
    if rule == "minus":
        return -np.ones(n, dtype=np.int8)
    return (rng.integers(0, 2, size=n, dtype=np.int8) * 2 - 1).astype(np.int8)


class _Chain:
    """Single-threaded Glauber chain owning its RNG and scratch state."""

    def __init__(self, params: ModelParams, rng: np.random.Generator, init: str):
        self.params = params
        self.rng = rng
        c = params.coupling
        self.x = _initial_state(params.n, init, rng)
        self.complete = c.complete_weight is not None
        if self.complete:
            self.total = int(self.x.sum())
        else:
            self.m = c.matvec(self.x)
        self._dummy = np.empty((1, params.n), dtype=np.int8)

    def run(self, n_sweeps: int, thin: int = 0, out: Optional[np.ndarray] = None, row: int = 0) -> int:
        p = self.params
        n = p.n
        field = np.ascontiguousarray(p.field)
        target = self._dummy if out is None else out
        per_chunk = max(1, _CHUNK_UPDATES // max(n, 1))
        if thin > 0:
            per_chunk = max(thin, per_chunk // thin * thin)
        done = 0
        while done < n_sweeps:
            k = min(per_chunk, n_sweeps - done)
            u = self.rng.random(k * n)
            if self.complete:
                row, self.total = _sweeps_complete(
                    p.coupling.complete_weight, p.beta, field, self.x, self.total, u, k, thin, target, row
                )
            else:
                c = p.coupling
                row = _sweeps_csr(c.indptr, c.indices, c.data, p.beta, field, self.x, self.m, u, k, thin, target, row)
            done += k
        return row


def glauber_sample(params: ModelParams, config: SamplerConfig) -> np.ndarray:
    """Retained states of one systematic-scan chain, shape (num_samples, n).

    With ``condition="nonneg"`` states with negative mean are discarded
    (rejection conditioning on the event mean >= 0).
    """
    rng = np.random.default_rng(config.seed)
    chain = _Chain(params, rng, config.init)
    chain.run(config.resolved_burn_in(params.n, params.beta))
    n, thin = params.n, config.thinning
    if config.condition is None:
        out = np.empty((config.num_samples, n), dtype=np.int8)
        chain.run(config.num_samples * thin, thin, out)
        return out
    kept = []
    have = 0
    budget = 1000 * config.num_samples
    block = max(16, config.num_samples)
    while have < config.num_samples:
        if budget <= 0:
            raise RuntimeError("rejection conditioning accepted too few states")
        buf = np.empty((block, n), dtype=np.int8)
        chain.run(block * thin, thin, buf)
        budget -= block
        ok = buf[buf.sum(axis=1, dtype=np.int64) >= 0]
        kept.append(ok)
        have += ok.shape[0]
    return np.concatenate(kept)[: config.num_samples]


def glauber_endpoint(params: ModelParams, rng: np.random.Generator, burn_in: int, init: str = "plus",
                     condition: Optional[str] = None) -> np.ndarray:
    """Final state of an independent chain after ``burn_in`` sweeps.

    Under conditioning, the chain keeps sweeping until it sits in the event.
    """
    chain = _Chain(params, rng, init)
    chain.run(burn_in)
    if condition == NONNEG:
        for _ in range(100_000):
            if chain.x.sum(dtype=np.int64) >= 0:
                break
            chain.run(1)
        else:
            raise RuntimeError("chain never entered the conditioning event")
    return chain.x.copy()


# ---------------------------------------------------------------------------
# exact enumeration


@lru_cache(maxsize=4)
def all_spins(n: int) -> np.ndarray:
    """All 2^n states as int8 rows; row c has spin i = +1 iff bit i of c is set."""
    if n > EXACT_MAX_N:
        raise SizeCapError(f"exact enumeration capped at n = {EXACT_MAX_N}, got {n}")
    codes = np.arange(1 << n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n, dtype=np.int64)) & 1
    out = (bits * 2 - 1).astype(np.int8)
    out.setflags(write=False)
    return out


def enumerate_log_weights(beta: float, q_dense: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Unnormalized log-weights of all 2^n states (chunked dense products)."""
    n = q_dense.shape[0]
    spins = all_spins(n)
    out = np.empty(spins.shape[0])
    step = 1 << 16
    for lo in range(0, spins.shape[0], step):
        s = spins[lo : lo + step].astype(np.float64)
        out[lo : lo + step] = 0.5 * beta * np.einsum("ij,ij->i", s @ q_dense, s) + s @ field
    return out


@dataclass
class ExactDistribution:
    n: int
    log_weights: np.ndarray
    log_Z: float
    condition: Optional[str] = None
    probs: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        self.probs = np.exp(self.log_weights - self.log_Z)

    @property
    def spins(self) -> np.ndarray:
        return all_spins(self.n)

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c


def _condition_mask(spins: np.ndarray, condition: Optional[str]) -> Optional[np.ndarray]:
    if condition is None:
        return None
    if condition == NONNEG:
        return spins.sum(axis=1, dtype=np.int64) >= 0
    raise ValueError(f"unknown condition {condition!r}")


def exact_distribution(params: ModelParams, condition: Optional[str] = None) -> ExactDistribution:
    """Normalized table over all 2^n states (optionally restricted to mean >= 0)."""
    n = params.n
    if n > EXACT_MAX_N:
        raise SizeCapError(f"exact enumeration capped at n = {EXACT_MAX_N}, got {n}")
    lw = enumerate_log_weights(params.beta, params.coupling.to_dense(), params.field)
    mask = _condition_mask(all_spins(n), condition)
    if mask is not None:
        lw = np.where(mask, lw, -np.inf)
    return ExactDistribution(n, lw, float(logsumexp(lw)), condition)


def exact_sample(params: ModelParams, count: int, seed, condition: Optional[str] = None) -> np.ndarray:
    """i.i.d. draws by inverse CDF over the exact table."""
    table = exact_distribution(params, condition)
    rng = np.random.default_rng(seed)
    idx = np.searchsorted(table.cdf(), rng.random(count), side="right")
    return np.array(table.spins[idx], dtype=np.int8)


# ---------------------------------------------------------------------------
# lumped exact sampler for complete graphs


@dataclass
class LumpedTable:
    """Law of per-group plus counts for a complete-graph coupling."""

    groups: list
    counts: np.ndarray
    log_weights: np.ndarray
    log_Z: float
    probs: np.ndarray

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c


def lumped_table_size(params: ModelParams) -> int:
    _, sizes = np.unique(params.field, return_counts=True)
    return int(np.prod(sizes.astype(np.float64) + 1))


def lumped_table(params: ModelParams, condition: Optional[str] = None) -> LumpedTable:
    c = params.coupling
    if c.complete_weight is None:
        raise ValueError("lumped sampler needs a complete-graph coupling")
    if lumped_table_size(params) > LUMPED_MAX_CELLS:
        raise SizeCapError("too many distinct field groups for the lumped table")
    values, inverse = np.unique(params.field, return_inverse=True)
    groups = [np.flatnonzero(inverse == g) for g in range(values.size)]
    sizes = np.array([g.size for g in groups], dtype=np.int64)
    grids = np.meshgrid(*[np.arange(s + 1) for s in sizes], indexing="ij")
    counts = np.stack([g.ravel() for g in grids], axis=1)
    mags = 2 * counts - sizes
    total = mags.sum(axis=1).astype(np.float64)
    log_mult = (gammaln(sizes + 1) - gammaln(counts + 1) - gammaln(sizes - counts + 1)).sum(axis=1)
    lw = log_mult + 0.5 * params.beta * c.complete_weight * (total**2 - params.n) + mags @ values
    if condition == NONNEG:
        lw = np.where(total >= 0, lw, -np.inf)
    elif condition is not None:
        raise ValueError(f"unknown condition {condition!r}")
    log_z = float(logsumexp(lw))
    return LumpedTable(groups, counts, lw, log_z, np.exp(lw - log_z))


def lumped_draw(table: LumpedTable, n: int, rng: np.random.Generator) -> np.ndarray:
    cell = int(np.searchsorted(table.cdf(), rng.random(), side="right"))
    x = -np.ones(n, dtype=np.int8)
    for g, k in zip(table.groups, table.counts[cell]):
        if k:
            x[rng.choice(g, size=int(k), replace=False)] = 1
    return x


def complete_graph_sample(params: ModelParams, count: int, seed, condition: Optional[str] = None) -> np.ndarray:
    table = lumped_table(params, condition)
    rng = np.random.default_rng(seed)
    return np.stack([lumped_draw(table, params.n, rng) for _ in range(count)])


# ---------------------------------------------------------------------------
# replicate sampling


def choose_sampler(params: ModelParams) -> str:
    if params.n <= EXACT_MAX_N:
        return "exact"
    if params.coupling.complete_weight is not None and lumped_table_size(params) <= LUMPED_MAX_CELLS:
        return "lumped"
    return "glauber"


def sample_replicates(params: ModelParams, seeds: Sequence[np.random.SeedSequence], method: str = "auto",
                      burn_in: Optional[int] = None, init: str = "plus",
                      condition: Optional[str] = None) -> np.ndarray:
    """One independent draw per seed; row r depends only on ``seeds[r]``."""
    if method == "auto":
        method = choose_sampler(params)
    n = params.n
    out = np.empty((len(seeds), n), dtype=np.int8)
    if method == "exact":
        table = exact_distribution(params, condition)
        cdf = table.cdf()
        for r, ss in enumerate(seeds):
            u = np.random.default_rng(ss).random()
            out[r] = table.spins[np.searchsorted(cdf, u, side="right")]
    elif method == "lumped":
        table = lumped_table(params, condition)
        for r, ss in enumerate(seeds):
            out[r] = lumped_draw(table, n, np.random.default_rng(ss))
    elif method == "glauber":
        sweeps = default_burn_in(n, params.beta) if burn_in is None else burn_in
        for r, ss in enumerate(seeds):
            out[r] = glauber_endpoint(params, np.random.default_rng(ss), sweeps, init, condition)
    else:
        raise ValueError(f"unknown sampler {method!r}")
    return out


def sample(params: ModelParams, count: int, seed: int, method: str = "auto", **kwargs) -> np.ndarray:
    seeds = np.random.SeedSequence(seed).spawn(count)
    return sample_replicates(params, seeds, method, **kwargs)


# ---------------------------------------------------------------------------
# sample dumps


def format_sample_dump(samples: np.ndarray, seed: int) -> str:
    samples = np.asarray(samples)
    lines = [f"{samples.shape[1]} {samples.shape[0]} {seed}"]
    lines.extend(row.tobytes().hex() for row in pack_spins(samples))
    return "\n".join(lines) + "\n"


def write_sample_dump(samples: np.ndarray, seed: int, path) -> None:
    Path(path).write_text(format_sample_dump(samples, seed))


def parse_sample_dump(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    n, count, seed = (int(v) for v in lines[0].split())
    body = lines[1:]
    if len(body) != count:
        raise ValueError(f"header declares {count} samples, found {len(body)}")
    packed = np.array([np.frombuffer(bytes.fromhex(ln.strip()), dtype=np.uint8) for ln in body])
    return unpack_spins(packed, n), seed


def read_sample_dump(path):
    return parse_sample_dump(Path(path).read_text())
