import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbslab.lattice import (LatticeRegion, are_neighbors, box, l1, neighbors, outer_boundary,
                              parity_classes, shell, shell_bound, shell_by_iteration)


def sites(*xs):
    return LatticeRegion((x,) for x in xs)


class TestNeighbors:
    def test_one_dimension(self):
        assert neighbors((0,)) == sites(-1, 1)

    def test_two_dimensions(self):
        nb = neighbors((0, 0))
        assert len(nb) == 4 and all(l1(s) == 1 for s in nb)

    @given(st.integers(1, 4).flatmap(lambda d: st.tuples(*[st.integers(-50, 50)] * d)))
    def test_count_is_2d(self, i):
        nb = neighbors(i)
        assert len(nb) == 2 * len(i)
        assert all(are_neighbors(i, j) for j in nb)


class TestOuterBoundary:
    def test_origin(self):
        assert outer_boundary(sites(0)) == sites(-1, 1)

    def test_origin_reenters(self):
        assert outer_boundary(sites(-1, 1)) == sites(-2, 0, 2)

    def test_plane(self):
        assert len(outer_boundary(LatticeRegion([(0, 0)]))) == 4

    def test_disjoint_from_region(self):
        region = box(2, 2)
        ob = outer_boundary(region)
        assert not (ob & region).sites
        assert len(ob) == 4 * 5


class TestShell:
    def test_examples(self):
        assert shell(2, box(1, 4)).region == sites(-2, 0, 2)
        s3 = shell(3, box(1, 4))
        assert s3.region == sites(-3, -1, 1, 3) and len(s3) == 4 <= 2 ** 3
        assert shell(0, box(2, 3)).region == LatticeRegion([(0, 0)])

    def test_negative_index(self):
        with pytest.raises(ValueError):
            shell(-1, box(1, 2))

    @pytest.mark.parametrize("d,k", [(d, k) for d in (1, 2, 3) for k in range(9)])
    def test_closed_form_matches_iteration(self, d, k):
        it = shell_by_iteration(k, d)
        assert len(it) == shell_bound(d, k) <= (2 * d) ** k
        big = box(d, k)
        assert shell(k, big).region == it

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_no_adjacent_members(self, d):
        for k in range(5):
            members = shell(k, box(d, 3)).region.sites
            assert not any(are_neighbors(a, b) for a, b in itertools.combinations(members, 2))

    @pytest.mark.parametrize("d,radius", [(1, 3), (2, 2)])
    def test_alternates_beyond_radius(self, d, radius):
        region = box(d, radius)
        even, odd = parity_classes(region)
        for k in range(d * radius, d * radius + 4):
            assert shell(k, region).region == (even if k % 2 == 0 else odd)


class TestParity:
    def test_one_dimension(self):
        even, odd = parity_classes(box(1, 2))
        assert even == sites(-2, 0, 2) and odd == sites(-1, 1)

    def test_cross(self):
        plus = LatticeRegion([(0, 0)]) | neighbors((0, 0))
        even, odd = parity_classes(plus)
        assert even == LatticeRegion([(0, 0)]) and odd == neighbors((0, 0))

    @given(st.integers(1, 3), st.integers(0, 3))
    @settings(max_examples=20)
    def test_partition(self, d, r):
        region = box(d, r)
        even, odd = parity_classes(region)
        assert not (even & odd).sites
        assert (even | odd) == region

    def test_needs_origin(self):
        with pytest.raises(ValueError):
            parity_classes(sites(1, 2))


class TestRegion:
    def test_dedup_and_order(self):
        r = LatticeRegion([(2, 0), (0, 1), (2, 0), (-1, 5)])
        assert r.sites == ((-1, 5), (0, 1), (2, 0))

    def test_record_roundtrip(self):
        r = box(2, 1)
        assert LatticeRegion.from_record(r.to_record()) == r

    def test_mixed_dimensions(self):
        with pytest.raises(ValueError):
            LatticeRegion([(0,), (0, 0)])
