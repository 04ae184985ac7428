import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conflicts_bruteforce, random_full_adjacency
from rancl import datagen, kernels
from rancl.errors import StructuralError
from rancl.graph import EntityDims, FullAdjacency
from rancl.identify import (
    Conflict,
    ConflictKind,
    ConflictSet,
    ground_truth_conflicts,
    identify_conflicts,
    read_conflicts,
    write_conflicts,
)

D, I, M = ConflictKind.DIRECT, ConflictKind.INDIRECT, ConflictKind.IMPLICIT
sizes = st.tuples(st.integers(2, 4), st.integers(1, 5), st.integers(1, 4)).filter(lambda t: sum(t) <= 12)


def _as_tuples(cs):
    return {(str(c.kind), c.agents, c.witness) for c in cs}


def _identify(m, na, np_, nk, max_len=2):
    return identify_conflicts(FullAdjacency(m, EntityDims(na, np_, nk)), max_len)


def _spec(control, subscribe, w, cp=None, ck=None):
    control, subscribe, w = np.array(control), np.array(subscribe), np.array(w, dtype=float)
    na, np_ = control.shape
    nk = subscribe.shape[1]
    return datagen.ConflictModelSpec(
        EntityDims(na, np_, nk), control, subscribe, w,
        np.zeros((np_, np_)) if cp is None else cp, np.zeros((nk, nk)) if ck is None else ck,
    )


class TestDefaultTopology:
    def test_direct_shared_parameter(self, default_spec):
        # a0, a1 both control p0 (global node 4)
        assert Conflict(D, (0, 1), (4,)) in ground_truth_conflicts(default_spec)

    def test_indirect_common_kpi(self, default_spec):
        # a1 controls p1, a2 controls p2, both influence k0 (globals 5, 6, 11)
        assert Conflict(I, (1, 2), (5, 11, 6)) in ground_truth_conflicts(default_spec)

    def test_implicit_chain(self, default_spec):
        # a3 controls p4, p4-p3 coupled, p3 drives k1 watched by a0
        c = Conflict(M, (0, 3), (8, 7, 12))
        assert c in ground_truth_conflicts(default_spec)
        assert c.format(default_spec.dims) == ["implicit", "a0", "a3", "p4;p3;k1"]

    def test_matches_bruteforce(self, default_spec):
        from rancl.identify import ground_truth_adjacency

        m = ground_truth_adjacency(default_spec).matrix
        assert _as_tuples(ground_truth_conflicts(default_spec)) == conflicts_bruteforce(m, 4, 7, 4)


class TestSmallSpecs:
    def test_no_pattern_no_conflict(self):
        # one parameter per KPI, one subscriber per KPI, nothing shared
        spec = _spec(np.eye(3), np.eye(3), np.eye(3))
        assert len(ground_truth_conflicts(spec)) == 0

    def test_adding_a_shared_parameter_adds_one_direct(self):
        base = _spec(np.eye(3), np.eye(3), np.eye(3))
        control = np.eye(3)
        control[1, 0] = 1  # a1 now also controls p0
        grown = _spec(control, np.eye(3), np.eye(3))
        new = set(ground_truth_conflicts(grown)) - set(ground_truth_conflicts(base))
        assert {c for c in new if c.kind == D} == {Conflict(D, (0, 1), (3,))}

    def test_local_exclusion(self):
        # a0 controls p0 (-> k0, and coupled to p1 -> k0); a1 controls p1 and watches k0.
        # p0->p1->k0 is covered by the indirect conflict over k0, so no implicit.
        spec = _spec([[1, 0], [0, 1]], [[1], [1]], [[1.0], [1.0]], cp=np.array([[0, 1], [1, 0]]))
        cs = ground_truth_conflicts(spec)
        assert cs.counts() == {"direct": 0, "indirect": 1, "implicit": 0}


class TestAgainstOracle:
    @settings(max_examples=150, deadline=None)
    @given(sizes, st.integers(0, 2**31))
    def test_bruteforce_equivalence(self, dims, seed):
        m = random_full_adjacency(np.random.default_rng(seed), *dims)
        assert _as_tuples(_identify(m, *dims)) == conflicts_bruteforce(m, *dims)

    @settings(max_examples=40, deadline=None)
    @given(st.tuples(st.integers(2, 3), st.integers(1, 4), st.integers(1, 3)), st.integers(0, 2**31))
    def test_longer_chains(self, dims, seed):
        m = random_full_adjacency(np.random.default_rng(seed), *dims)
        assert _as_tuples(_identify(m, *dims, max_len=3)) == conflicts_bruteforce(m, *dims, max_len=3)

    @settings(max_examples=60, deadline=None)
    @given(sizes, st.integers(0, 2**31))
    def test_backends_agree(self, dims, seed):
        m = random_full_adjacency(np.random.default_rng(seed), *dims)
        results = [set(b.scan_conflicts(m, *dims)) for b in kernels.BACKENDS.values()]
        assert all(r == results[0] for r in results)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(sizes, st.integers(0, 2**31), st.data())
    def test_added_edge_only_supersedes(self, dims, seed, data):
        # An added learned edge can turn an implicit chain into an indirect
        # conflict between the same agents; any conflict that disappears must
        # be an implicit one whose agents and endpoints are now covered by a
        # direct or indirect conflict.
        na, np_, nk = dims
        m = random_full_adjacency(np.random.default_rng(seed), *dims)
        n = np_ + nk
        i = data.draw(st.integers(0, n - 1))
        j = data.draw(st.integers(0, n - 1).filter(lambda x: x != i))
        before = _identify(m, *dims)
        grown = m.copy()
        grown[na + i, na + j] = grown[na + j, na + i] = 1
        after = _identify(grown, *dims)
        for c in set(before) - set(after):
            assert c.kind == M
            p1, k2 = c.witness[0], c.witness[-1]
            covered = any(
                o.agents == c.agents and o.kind != M and (o.witness == (p1,) or (p1 in o.witness and k2 in o.witness))
                for o in after
            )
            assert covered, c

    def test_added_edge_can_suppress_an_implicit(self):
        # the counterexample to plain monotonicity: a0:p0, a1:p1 watching k0,
        # p0-p1 coupled, p1->k0; adding p0->k0 makes the pair indirect instead
        dims = EntityDims(2, 2, 1)
        m = np.zeros((5, 5), dtype=np.int8)
        m[:2, :2] = np.eye(2)
        for a, x in [(0, 2), (1, 3), (1, 4)]:
            m[a, x] = m[x, a] = 1
        for x, y in [(2, 3), (3, 4)]:
            m[x, y] = m[y, x] = 1
        before = identify_conflicts(FullAdjacency(m, dims))
        m[2, 4] = m[4, 2] = 1
        after = identify_conflicts(FullAdjacency(m, dims))
        assert before.counts()["implicit"] == 1 and after.counts()["implicit"] == 0
        assert Conflict(I, (0, 1), (2, 4, 3)) in after

    @settings(max_examples=60, deadline=None)
    @given(sizes, st.integers(0, 2**31), st.randoms())
    def test_agent_permutation_equivariance(self, dims, seed, rnd):
        na = dims[0]
        m = random_full_adjacency(np.random.default_rng(seed), *dims)
        perm = list(range(na))
        rnd.shuffle(perm)
        order = perm + list(range(na, m.shape[0]))  # new node i is old node order[i]
        relabeled = m[np.ix_(order, order)]
        inverse = {old: new for new, old in enumerate(perm)}
        expected = set()
        for c in _identify(m, *dims):
            a, b = sorted(inverse[x] for x in c.agents)
            expected.add(Conflict(c.kind, (a, b), c.witness))
        assert set(_identify(relabeled, *dims)) == expected

    def test_deterministic_order(self, default_spec, tmp_path):
        cs = ground_truth_conflicts(default_spec)
        write_conflicts(tmp_path / "a.csv", cs, default_spec.dims)
        write_conflicts(tmp_path / "b.csv", ground_truth_conflicts(datagen.default_topology()), default_spec.dims)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert read_conflicts(tmp_path / "a.csv", default_spec.dims) == cs


class TestContainers:
    def test_invalid_adjacency(self):
        dims = EntityDims(1, 1, 1)
        m = np.eye(3, dtype=np.int8)  # self-loops in the learned block
        with pytest.raises(StructuralError):
            identify_conflicts(FullAdjacency(m, dims))

    def test_conflict_needs_ordered_agents(self):
        with pytest.raises(ValueError):
            Conflict(D, (2, 1), (5,))

    def test_set_deduplicates_and_sorts(self):
        a = Conflict(M, (0, 1), (4, 5, 6))
        b = Conflict(D, (0, 2), (4,))
        cs = ConflictSet([a, b, a])
        assert list(cs) == [b, a] and len(cs) == 2
        assert cs.agent_pairs() == {(D, (0, 2)), (M, (0, 1))}

    def test_path_length_validation(self, default_spec):
        from rancl.identify import ground_truth_adjacency

        with pytest.raises(ValueError):
            identify_conflicts(ground_truth_adjacency(default_spec), max_path_len=1)
