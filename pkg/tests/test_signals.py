import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isingscan.signals import (
    AlternativeSpec,
    SignalClass,
    SignalError,
    alternative_field,
    cube_edge,
    disjoint_subcollection,
    format_class,
    make_lattice_cube_class,
    make_mean_field_class,
    min_separation,
    parse_class,
    validate_class,
)


def test_mean_field_disjoint_blocks():
    cls = make_mean_field_class(10, 2, 3)
    assert cls.sets == ((0, 1), (2, 3), (4, 5))
    assert cls.disjoint


def test_mean_field_infeasible():
    with pytest.raises(SignalError):
        make_mean_field_class(4, 3, 2)


def test_mean_field_random_sets():
    a = make_mean_field_class(100, 5, 100, disjoint=False, seed=7)
    b = make_mean_field_class(100, 5, 100, disjoint=False, seed=7)
    assert a.sets == b.sets
    assert len(set(a.sets)) == 100
    assert all(len(S) == 5 for S in a.sets)


def test_lattice_intervals():
    cls = make_lattice_cube_class(1, 10, 3)
    assert cls.count == 8
    assert cls.sets[0] == (0, 1, 2) and cls.sets[-1] == (7, 8, 9)


def test_lattice_squares():
    cls = make_lattice_cube_class(2, 4, 4)
    assert cls.count == 9
    assert cls.sets[0] == (0, 1, 4, 5)


def test_lattice_cube_too_big():
    with pytest.raises(SignalError):
        make_lattice_cube_class(2, 3, 16)


@pytest.mark.parametrize("s,dim,edge", [(1, 2, 1), (4, 2, 2), (5, 2, 3), (27, 3, 3), (28, 3, 4), (1000, 3, 10)])
def test_cube_edge(s, dim, edge):
    assert cube_edge(s, dim) == edge


@given(dim=st.integers(1, 3), side=st.integers(2, 9), s=st.integers(1, 30))
@settings(max_examples=60, deadline=None)
def test_lattice_class_invariants(dim, side, s):
    edge = cube_edge(s, dim)
    if edge > side:
        with pytest.raises(SignalError):
            make_lattice_cube_class(dim, side, s)
        return
    cls = make_lattice_cube_class(dim, side, s)
    assert cls.count == (side - edge + 1) ** dim
    assert cls.set_size == edge**dim >= s
    coords = np.array(np.unravel_index(cls.index_array(), (side,) * dim))
    # every cube spans exactly `edge` consecutive values on each axis
    spans = coords.max(axis=2) - coords.min(axis=2)
    assert np.all(spans == edge - 1)


def test_disjoint_subcollection_interval_example():
    cls = make_lattice_cube_class(1, 30, 3)
    sub = disjoint_subcollection(cls, 12)
    starts = [S[0] for S in sub.sets]
    # separation is the minimum l1 distance between points of different sets
    assert starts == [0, 14]
    assert min_separation(sub) == 12
    assert sub.disjoint


def test_disjoint_subcollection_mean_field_unchanged():
    cls = make_mean_field_class(20, 3, 5)
    assert disjoint_subcollection(cls) is cls


def test_disjoint_subcollection_too_separated():
    with pytest.raises(SignalError):
        disjoint_subcollection(make_lattice_cube_class(1, 10, 2), 11)


def test_disjoint_subcollection_overlapping_random_sets():
    cls = make_mean_field_class(30, 4, 40, disjoint=False, seed=2)
    sub = disjoint_subcollection(cls)
    flat = [v for S in sub.sets for v in S]
    assert len(flat) == len(set(flat))


@given(side=st.integers(6, 10), s=st.integers(1, 9), sep=st.integers(0, 5))
@settings(max_examples=40, deadline=None)
def test_subcollection_separation_2d(side, s, sep):
    if cube_edge(s, 2) > side:
        return
    cls = make_lattice_cube_class(2, side, s)
    try:
        sub = disjoint_subcollection(cls, sep)
    except SignalError:
        return
    flat = [v for S in sub.sets for v in S]
    assert len(flat) == len(set(flat))
    coords = [np.array(np.unravel_index(list(S), (side, side))).T for S in sub.sets]
    dists = [np.abs(coords[a][:, None, :] - coords[b][None, :, :]).sum(axis=2).min()
             for a in range(len(coords)) for b in range(a + 1, len(coords))]
    if dists:
        assert min(dists) >= max(sep, 1)
        assert min_separation(sub) == min(dists)


def test_validate_ratio():
    cls = SignalClass(1024, 1, tuple((i,) for i in range(1024)))
    assert validate_class(cls).log_ratio_upper == pytest.approx(1.0)
    one = validate_class(SignalClass(1024, 1, ((3,),)))
    assert one.log_ratio_upper == 0.0
    assert one.flags


def test_validate_lattice_separation():
    cls = make_lattice_cube_class(1, 30, 3)
    sub = disjoint_subcollection(cls, 12)
    v = validate_class(cls, sub)
    assert v.min_separation == 12
    assert v.log_ratio_lower == pytest.approx(math.log(2) / math.log(30))


def test_alternative_field():
    alt = AlternativeSpec(SignalClass(5, 2, ((0, 1),)), 0.3)
    np.testing.assert_allclose(alternative_field(alt, 0), [0.3, 0.3, 0, 0, 0])
    with pytest.raises(SignalError):
        AlternativeSpec(SignalClass(5, 2, ((0, 1),)), 0.0)


@given(n=st.integers(10, 60), s=st.integers(1, 5), count=st.integers(1, 10), A=st.floats(0.01, 5))
@settings(max_examples=40, deadline=None)
def test_alternative_support(n, s, count, A):
    cls = make_mean_field_class(n, s, count, disjoint=False, seed=1) if count <= math.comb(n, s) else None
    if cls is None:
        return
    alt = AlternativeSpec(cls, A)
    for j in range(cls.count):
        mu = alternative_field(alt, j)
        assert tuple(np.flatnonzero(mu)) == cls.sets[j]
        assert mu[mu > 0].min() == A


def test_set_validation():
    with pytest.raises(SignalError):
        SignalClass(5, 2, ((0, 1), (2, 3, 4)))
    with pytest.raises(SignalError):
        SignalClass(5, 2, ((0, 5),))
    with pytest.raises(SignalError):
        SignalClass(5, 2, ((0, 1), (1, 2)), disjoint=True)


def test_class_file_roundtrip():
    cls = make_mean_field_class(12, 3, 4)
    text = format_class(cls)
    assert text.splitlines()[0] == "12 3 4"
    assert parse_class(text).sets == cls.sets
    with pytest.raises(SignalError):
        parse_class("12 3 2\n0 1 2\n")
