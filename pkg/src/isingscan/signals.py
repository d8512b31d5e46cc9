"""Candidate signal sets and the extremal alternatives built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class SignalClass:
    """A list of index sets of common cardinality.

    ``s`` is the nominal signal size; ``set_size`` is the realized cardinality,
    which differs only for lattice cubes (the cube volume).  ``geometry`` keeps
    the cube corners for lattice classes.
    """

    n: int
    s: int
    sets: tuple
    disjoint: bool = False
    geometry: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(v) for v in S)) for S in self.sets)
        object.__setattr__(self, "sets", sets)
        if not sets:
            return
        size = len(sets[0])
        for S in sets:
            if len(S) != size or len(set(S)) != size:
                raise SignalError("all sets must have the same number of distinct indices")
            if S[0] < 0 or S[-1] >= self.n:
                raise SignalError("set index out of range")
        if self.disjoint and not _pairwise_disjoint(sets):
            raise SignalError("class flagged disjoint but sets overlap")

    @property
    def count(self) -> int:
        return len(self.sets)

    @property
    def set_size(self) -> int:
        return len(self.sets[0]) if self.sets else self.s

    def index_array(self) -> np.ndarray:
        return np.asarray(self.sets, dtype=np.int64).reshape(self.count, self.set_size)

    def subset(self, which) -> "SignalClass":
        geom = None
        if self.geometry is not None:
            geom = dict(self.geometry)
            geom["corners"] = [self.geometry["corners"][k] for k in which]
        sets = [self.sets[k] for k in which]
        return SignalClass(self.n, self.s, tuple(sets), _pairwise_disjoint(sets), geom)


def _pairwise_disjoint(sets) -> bool:
    seen: set = set()
    for S in sets:
        if seen.intersection(S):
            return False
        seen.update(S)
    return True


def make_mean_field_class(n: int, s: int, count: int, disjoint: bool = True, seed: int = 0) -> SignalClass:
    """Consecutive blocks when ``disjoint``; otherwise ``count`` distinct random s-sets."""
    if s < 1 or count < 1:
        raise SignalError("need s >= 1 and count >= 1")
    if disjoint:
        if count * s > n:
            raise SignalError(f"infeasible: {count} disjoint sets of size {s} need {count * s} > {n} vertices")
        sets = tuple(tuple(range(k * s, (k + 1) * s)) for k in range(count))
        return SignalClass(n, s, sets, True)
    if s > n or count > math.comb(n, s):
        raise SignalError("not enough distinct sets of that size")
    rng = np.random.default_rng(seed)
    chosen: dict = {}
    while len(chosen) < count:
        S = tuple(sorted(rng.choice(n, size=s, replace=False).tolist()))
        chosen.setdefault(S, None)
    sets = tuple(chosen)
    return SignalClass(n, s, sets, _pairwise_disjoint(sets))


def cube_edge(s: int, dim: int) -> int:
    """Smallest integer e with e**dim >= s, i.e. ceil(s**(1/dim)) without rounding error."""
    e = max(1, int(round(s ** (1.0 / dim))))
    while e**dim < s:
        e += 1
    while e > 1 and (e - 1) ** dim >= s:
        e -= 1
    return e


def make_lattice_cube_class(dim: int, side: int, s: int) -> SignalClass:
    """All axis-aligned sub-cubes with ceil(s^(1/dim)) points per side lying inside the box."""
    edge = cube_edge(s, dim)
    if edge > side:
        raise SignalError(f"cube edge {edge} does not fit in side {side}")
    strides = side ** np.arange(dim - 1, -1, -1)
    offsets = np.indices((edge,) * dim).reshape(dim, -1).T @ strides
    corners = np.indices((side - edge + 1,) * dim).reshape(dim, -1).T
    sets = tuple(tuple(sorted((int(c @ strides) + offsets).tolist())) for c in corners)
    geometry = {"dim": dim, "side": side, "edge": edge, "corners": [tuple(int(v) for v in c) for c in corners]}
    return SignalClass(side**dim, s, sets, len(sets) == 1, geometry)


def _box_distance(c1, c2, edge: int) -> int:
    return int(sum(max(0, b - a - edge + 1, a - b - edge + 1) for a, b in zip(c1, c2)))


def _set_distance(cls: SignalClass, a: int, b: int) -> int:
    g = cls.geometry
    if g is not None:
        return _box_distance(g["corners"][a], g["corners"][b], g["edge"])
    raise SignalError("l1 separation needs lattice geometry")


def disjoint_subcollection(cls: SignalClass, min_separation: int = 0) -> SignalClass:
    """Greedy (class order) choice of pairwise disjoint, l1-separated sets.

    Separation is the minimum l1 distance between points of two sets and only
    applies to lattice classes.
    """
    if cls.count == 0:
        raise SignalError("empty class")
    if cls.disjoint and (min_separation <= 0 or cls.geometry is None):
        return cls
    chosen: list = []
    used: set = set()
    for k, S in enumerate(cls.sets):
        if used.intersection(S):
            continue
        if min_separation > 0 and cls.geometry is not None:
            if any(_set_distance(cls, k, j) < min_separation for j in chosen):
                continue
        chosen.append(k)
        used.update(S)
    if min_separation > 0 and cls.geometry is not None and len(chosen) < 2 <= cls.count:
        raise SignalError(f"separation {min_separation} leaves fewer than two sets")
    return cls.subset(chosen)


def min_separation(cls: SignalClass) -> Optional[int]:
    """Smallest pairwise l1 distance between sets of a lattice class (None otherwise)."""
    if cls.geometry is None or cls.count < 2:
        return None
    return min(_set_distance(cls, a, b) for a in range(cls.count) for b in range(a + 1, cls.count))


@dataclass(frozen=True)
class ClassValidation:
    log_ratio_upper: float
    log_ratio_lower: Optional[float]
    min_separation: Optional[int]
    flags: tuple = ()


def validate_class(cls: SignalClass, subcollection: Optional[SignalClass] = None) -> ClassValidation:
    """log|C|/log n, log|C'|/log n and lattice separation diagnostics."""
    if cls.count < 1:
        raise SignalError("class must contain at least one set")
    log_n = math.log(cls.n) if cls.n > 1 else math.nan
    upper = math.log(cls.count) / log_n
    lower = math.log(subcollection.count) / log_n if subcollection is not None else None
    flags = []
    if cls.count == 1:
        flags.append("single set: class size does not grow")
    if subcollection is not None and not subcollection.disjoint and subcollection.count > 1:
        flags.append("subcollection not pairwise disjoint")
    sep = min_separation(subcollection if subcollection is not None else cls)
    return ClassValidation(upper, lower, sep, tuple(flags))


@dataclass(frozen=True)
class AlternativeSpec:
    cls: SignalClass
    A: float

    def __post_init__(self):
        if not self.A > 0:
            raise SignalError("signal strength A must be > 0")


def alternative_field(alt: AlternativeSpec, which: int) -> np.ndarray:
    """mu = A on set ``which`` of the class, 0 elsewhere."""
    if not 0 <= which < alt.cls.count:
        raise IndexError(f"set index {which} outside class of size {alt.cls.count}")
    mu = np.zeros(alt.cls.n)
    mu[list(alt.cls.sets[which])] = alt.A
    return mu


def format_class(cls: SignalClass) -> str:
    lines = [f"{cls.n} {cls.set_size} {cls.count}"]
    lines.extend(" ".join(map(str, S)) for S in cls.sets)
    return "\n".join(lines) + "\n"


def parse_class(text: str) -> SignalClass:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    n, s, count = (int(v) for v in lines[0])
    sets = [tuple(int(v) for v in ln) for ln in lines[1:]]
    if len(sets) != count:
        raise SignalError(f"header declares {count} sets, found {len(sets)}")
    if any(len(S) != s for S in sets):
        raise SignalError(f"every set must have {s} indices")
    return SignalClass(n, s, tuple(sets), _pairwise_disjoint(sets))


def write_class(cls: SignalClass, path) -> None:
    Path(path).write_text(format_class(cls))


def read_class(path) -> SignalClass:
    return parse_class(Path(path).read_text())
