"""Graph families, their coupling matrices, and spectral/degree statistics.

Adjacency and coupling matrices are stored sparse (CSR).  Mean-field couplings
divide the adjacency matrix by the average degree ``(1/n) * sum_i d_i`` so that
regular graphs have unit row sums; lattice couplings keep the raw indicator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

DENSE_EIGEN_LIMIT = 2048
MAX_LATTICE_VERTICES = 1 << 24
MAX_REGULAR_RESTARTS = 1000


class GraphError(ValueError):
    """Raised for infeasible or malformed graph requests."""


class Family(str, Enum):
    COMPLETE = "complete"
    REGULAR_CIRCULANT = "regular_circulant"
    RANDOM_REGULAR = "random_regular"
    ERDOS_RENYI = "erdos_renyi"
    LATTICE = "lattice"


@dataclass(frozen=True)
class GraphSpec:
    """Declarative description of one graph instance."""

    family: Family
    n: int
    d: Optional[int] = None
    p: Optional[float] = None
    dim: Optional[int] = None
    side: Optional[int] = None
    L: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.n < 1:
            raise GraphError("n must be >= 1")
        if self.family in (Family.REGULAR_CIRCULANT, Family.RANDOM_REGULAR):
            if self.d is None:
                raise GraphError(f"{self.family.value} requires d")
            if (self.n * self.d) % 2:
                raise GraphError(f"infeasible: n*d = {self.n * self.d} is odd")
        if self.family is Family.ERDOS_RENYI:
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise GraphError("erdos_renyi requires p in [0, 1]")
        if self.family is Family.LATTICE:
            if self.dim is None or self.side is None:
                raise GraphError("lattice requires dim and side")
            if self.side**self.dim != self.n:
                raise GraphError(f"side**dim = {self.side ** self.dim} != n = {self.n}")
            if self.L < 1:
                raise GraphError("L must be >= 1")

    def label(self) -> str:
        f = self.family
        if f is Family.COMPLETE:
            return f"complete(n={self.n})"
        if f is Family.REGULAR_CIRCULANT:
            return f"regular_circulant(n={self.n},d={self.d})"
        if f is Family.RANDOM_REGULAR:
            return f"random_regular(n={self.n},d={self.d},seed={self.seed})"
        if f is Family.ERDOS_RENYI:
            return f"erdos_renyi(n={self.n},p={self.p},seed={self.seed})"
        return f"lattice(dim={self.dim},side={self.side},L={self.L})"


class AdjacencyMatrix:
    """Simple undirected graph on vertices ``0..n-1``.

    ``edges`` holds each edge once as a row ``(i, j)`` with ``i < j``, sorted
    lexicographically; ``csr`` is the symmetric 0/1 matrix built from it.
    """

    def __init__(self, n: int, edges, family: str = "custom", params: Optional[dict] = None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise GraphError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphError("self-loop in edge list")
            edges = np.sort(edges, axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            if np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise GraphError("duplicate edge in edge list")
        self.n = int(n)
        self.edges = edges
        self.family = family
        self.params = dict(params or {})
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        ones = np.ones(rows.size, dtype=np.float64)
        self.csr = sp.csr_matrix((ones, (rows, cols)), shape=(self.n, self.n))
        self.csr.sort_indices()

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.csr.indices[self.csr.indptr[i] : self.csr.indptr[i + 1]]

    def edge_set(self) -> set:
        return {(int(i), int(j)) for i, j in self.edges}

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def is_complete(self) -> bool:
        return self.num_edges == self.n * (self.n - 1) // 2

    def __repr__(self) -> str:
        return f"AdjacencyMatrix(n={self.n}, m={self.num_edges}, family={self.family!r})"


@dataclass
class CouplingMatrix:
    """Symmetric nonnegative interaction matrix with zero diagonal.

    ``complete_weight`` is set when every off-diagonal entry equals the same
    value; samplers and local-field code use it for O(1) updates.
    """

    matrix: sp.csr_matrix
    scaling: str
    avg_degree: float
    source: str = "custom"
    complete_weight: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        m.sort_indices()
        m.eliminate_zeros()
        if m.shape[0] != m.shape[1]:
            raise GraphError("coupling matrix must be square")
        if m.nnz and (m.diagonal() != 0).any():
            raise GraphError("coupling matrix must have zero diagonal")
        if m.nnz and m.data.min() < 0:
            raise GraphError("coupling entries must be nonnegative")
        if abs(m - m.T).sum() > 1e-12 * max(1.0, abs(m).sum()):
            raise GraphError("coupling matrix must be symmetric")
        self.matrix = m

    @classmethod
    def from_dense(cls, q, scaling: str = "custom", source: str = "dense") -> "CouplingMatrix":
        q = np.asarray(q, dtype=np.float64)
        deg = (q != 0).sum(axis=1)
        return cls(sp.csr_matrix(q), scaling=scaling, avg_degree=float(deg.mean()), source=source)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    @property
    def inf_norm(self) -> float:
        return float(self.row_sums().max()) if self.n else 0.0

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def matvec(self, x) -> np.ndarray:
        """Local fields ``Q @ x`` for one configuration or a batch (rows)."""
        x = np.asarray(x)
        if self.complete_weight is not None:
            w = self.complete_weight
            total = x.sum(axis=-1, dtype=np.float64)
            return w * (np.expand_dims(total, -1) - x)
        if x.ndim == 1:
            return self.matrix @ x.astype(np.float64)
        return np.asarray((self.matrix @ x.T.astype(np.float64)).T)


def build_complete(n: int) -> AdjacencyMatrix:
    if n < 1:
        raise GraphError("n must be >= 1")
    i, j = np.triu_indices(n, k=1)
    return AdjacencyMatrix(n, np.column_stack([i, j]), family=Family.COMPLETE.value, params={"n": n})


def build_regular_circulant(n: int, d: int) -> AdjacencyMatrix:
    """Circulant d-regular graph: offsets 1..d//2 on each side, plus the antipode when d is odd."""
    if not 0 <= d <= n - 1:
        raise GraphError(f"need 0 <= d <= n-1, got d={d}, n={n}")
    if (n * d) % 2:
        raise GraphError(f"infeasible: n*d = {n * d} is odd")
    verts = np.arange(n)
    chunks = []
    for k in range(1, d // 2 + 1):
        chunks.append(np.column_stack([verts, (verts + k) % n]))
    if d % 2:
        half = verts[: n // 2]
        chunks.append(np.column_stack([half, half + n // 2]))
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    return AdjacencyMatrix(n, edges, family=Family.REGULAR_CIRCULANT.value, params={"n": n, "d": d})


def _try_pairing(n: int, d: int, rng: np.random.Generator) -> Optional[set]:
    # Pair stubs; colliding stubs are reshuffled among themselves, and the
    # attempt is abandoned when no admissible pair remains.
    edges: set = set()
    stubs = np.repeat(np.arange(n), d)
    for _ in range(10 * n * max(d, 1) + 100):
        if stubs.size == 0:
            return edges
        rng.shuffle(stubs)
        leftover = []
        for u, v in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
            if u > v:
                u, v = v, u
            if u != v and (u, v) not in edges:
                edges.add((u, v))
            else:
                leftover.extend((u, v))
        if leftover:
            pending = sorted(set(leftover))
            if not any(
                (a, b) not in edges for a, b in itertools.combinations(pending, 2)
            ):
                return None
        stubs = np.asarray(leftover, dtype=np.int64)
    return None


def build_random_regular(n: int, d: int, seed: int) -> AdjacencyMatrix:
    """Random simple d-regular graph by stub pairing, restarting on dead ends."""
    if not 0 <= d <= n - 1:
        raise GraphError(f"need 0 <= d <= n-1, got d={d}, n={n}")
    if (n * d) % 2:
        raise GraphError(f"infeasible: n*d = {n * d} is odd")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_REGULAR_RESTARTS):
        edges = _try_pairing(n, d, rng)
        if edges is not None:
            return AdjacencyMatrix(
                n,
                sorted(edges) if edges else np.empty((0, 2)),
                family=Family.RANDOM_REGULAR.value,
                params={"n": n, "d": d, "seed": seed},
            )
    raise GraphError(f"random regular pairing did not converge after {MAX_REGULAR_RESTARTS} restarts")


def build_erdos_renyi(n: int, p: float, seed: int) -> AdjacencyMatrix:
    if not 0.0 <= p <= 1.0:
        raise GraphError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    chunks = []
    for i in range(n - 1):
        hits = np.flatnonzero(rng.random(n - i - 1) < p) + i + 1
        if hits.size:
            chunks.append(np.column_stack([np.full(hits.size, i), hits]))
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return AdjacencyMatrix(n, edges, family=Family.ERDOS_RENYI.value, params={"n": n, "p": p, "seed": seed})


def lattice_offsets(dim: int, L: int) -> np.ndarray:
    """Offsets v with 1 <= |v|_1 <= L whose first nonzero coordinate is positive."""
    rng_ = range(-L, L + 1)
    out = []
    for v in itertools.product(rng_, repeat=dim):
        norm = sum(abs(c) for c in v)
        if 1 <= norm <= L:
            first = next(c for c in v if c != 0)
            if first > 0:
                out.append(v)
    return np.asarray(out, dtype=np.int64).reshape(-1, dim)


def lattice_coordinates(dim: int, side: int) -> np.ndarray:
    """Row-major coordinates of the box {0..side-1}^dim, one row per vertex."""
    return np.indices((side,) * dim).reshape(dim, -1).T


def build_lattice(dim: int, side: int, L: int = 1, max_vertices: int = MAX_LATTICE_VERTICES) -> AdjacencyMatrix:
    """Free-boundary box of side ``side`` with edges between points at l1 distance in [1, L]."""
    if dim < 1 or side < 2 or L < 1:
        raise GraphError("need dim >= 1, side >= 2, L >= 1")
    if side**dim > max_vertices:
        raise GraphError(f"lattice too large: {side}^{dim} exceeds {max_vertices} vertices")
    n = side**dim
    coords = lattice_coordinates(dim, side)
    strides = side ** np.arange(dim - 1, -1, -1)
    chunks = []
    for v in lattice_offsets(dim, L):
        target = coords + v
        ok = np.all((target >= 0) & (target < side), axis=1)
        src = np.flatnonzero(ok)
        dst = target[ok] @ strides
        chunks.append(np.column_stack([src, dst]))
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return AdjacencyMatrix(
        n, edges, family=Family.LATTICE.value, params={"dim": dim, "side": side, "L": L}
    )


def build_graph(spec: GraphSpec) -> AdjacencyMatrix:
    f = spec.family
    if f is Family.COMPLETE:
        return build_complete(spec.n)
    if f is Family.REGULAR_CIRCULANT:
        return build_regular_circulant(spec.n, spec.d)
    if f is Family.RANDOM_REGULAR:
        return build_random_regular(spec.n, spec.d, spec.seed)
    if f is Family.ERDOS_RENYI:
        return build_erdos_renyi(spec.n, spec.p, spec.seed)
    return build_lattice(spec.dim, spec.side, spec.L)


def coupling_from_graph(adj: AdjacencyMatrix, scaling: str = "mean_field") -> CouplingMatrix:
    """Scale an adjacency matrix into a coupling matrix.

    ``mean_field`` divides by the average degree; ``lattice`` keeps 0/1 entries.
    """
    avg_degree = 2.0 * adj.num_edges / adj.n
    if scaling == "mean_field":
        if avg_degree == 0:
            raise GraphError("mean-field scaling of an empty graph (average degree 0)")
        weight = 1.0 / avg_degree
    elif scaling == "lattice":
        weight = 1.0
    else:
        raise GraphError(f"unknown scaling {scaling!r}")
    complete = weight if adj.is_complete() and adj.n > 1 else None
    return CouplingMatrix(
        adj.csr * weight,
        scaling=scaling,
        avg_degree=avg_degree,
        source=adj.family,
        complete_weight=complete,
        meta=dict(adj.params),
    )


@dataclass(frozen=True)
class GraphStats:
    n: int
    avg_degree: float
    max_degree: int
    min_degree: int
    degree_irregularity: float
    inf_norm: float
    lambda1: float
    lambda2: float
    lambda_min: float
    eigen_method: str
    lattice_formula_norm: Optional[float] = None

    @property
    def alpha_n(self) -> float:
        """sqrt(log n / average degree)."""
        if self.avg_degree <= 0 or self.n < 2:
            return math.inf
        return math.sqrt(math.log(self.n) / self.avg_degree)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["alpha_n"] = self.alpha_n
        return out


def _top_eigs(q: sp.csr_matrix, method: str):
    n = q.shape[0]
    if n == 1:
        return 0.0, math.nan, 0.0
    if method == "dense":
        w = np.linalg.eigvalsh(q.toarray())
        return float(w[-1]), float(w[-2]), float(w[0])
    if n < 4:
        raise GraphError("iterative eigensolver needs n >= 4")
    # a generic start vector; a symmetric one stays inside the symmetric subspace
    v0 = np.random.default_rng(0).standard_normal(n)
    top = eigsh(q, k=2, which="LA", tol=1e-10, v0=v0, return_eigenvectors=False)
    bottom = eigsh(q, k=1, which="SA", tol=1e-10, v0=v0, return_eigenvectors=False)
    top = np.sort(top)
    return float(top[-1]), float(top[-2]), float(bottom[0])


def graph_stats(coupling: CouplingMatrix, method: Optional[str] = None) -> GraphStats:
    """Degree, norm and spectral summaries of a coupling matrix.

    ``method`` forces ``"dense"`` or ``"iterative"`` eigenvalues; by default
    the dense solver is used up to ``DENSE_EIGEN_LIMIT`` vertices.
    """
    n = coupling.n
    deg = np.diff(coupling.indptr)
    avg = float(deg.mean())
    irregular = float(np.max(np.abs(deg / avg - 1.0))) if avg > 0 else math.inf
    if method is None:
        method = "dense" if n <= DENSE_EIGEN_LIMIT else "iterative"
    l1, l2, lmin = _top_eigs(coupling.matrix, method)
    formula = None
    if coupling.source == Family.LATTICE.value and "dim" in coupling.meta:
        formula = float(2 * coupling.meta["dim"] * coupling.meta["L"])
    return GraphStats(
        n=n,
        avg_degree=avg,
        max_degree=int(deg.max()) if n else 0,
        min_degree=int(deg.min()) if n else 0,
        degree_irregularity=irregular,
        inf_norm=coupling.inf_norm,
        lambda1=l1,
        lambda2=l2,
        lambda_min=lmin,
        eigen_method=method,
        lattice_formula_norm=formula,
    )


def write_edge_list(adj: AdjacencyMatrix, path) -> None:
    Path(path).write_text(format_edge_list(adj))


def format_edge_list(adj: AdjacencyMatrix) -> str:
    lines = [f"{adj.n} {adj.num_edges}"]
    lines.extend(f"{i} {j}" for i, j in adj.edges.tolist())
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> AdjacencyMatrix:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise GraphError("edge list header must be 'n m'")
    n, m = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != m:
        raise GraphError(f"header declares {m} edges, found {len(body)}")
    for k, r in enumerate(body, start=2):
        if len(r) != 2:
            raise GraphError(f"line {k}: expected 'i j'")
    edges = np.array([[int(a), int(b)] for a, b in body], dtype=np.int64).reshape(-1, 2)
    return AdjacencyMatrix(n, edges, family="file")


def read_edge_list(path) -> AdjacencyMatrix:
    return parse_edge_list(Path(path).read_text())
