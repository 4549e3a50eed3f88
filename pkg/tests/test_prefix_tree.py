import math

import pytest

from SUBIM.influence import InfluenceStore
from SUBIM.prefix_tree import PathPayload, PrefixTree
from SUBIM.sieve import Estimation
from SUBIM.utils import ContractViolation


def related_to(table):
    return lambda user: frozenset(table.get(user, ()))


def solid(tree, users, f, queries, *estimations):
    """Place a payload holding ``estimations`` at the path ``users``."""
    node = tree.find_path(tree.root, users)
    node.payload = PathPayload(node, tuple(users), f, frozenset(queries))
    for est in estimations:
        tree.link(est, node.payload)
    return node.payload


class TestFindPath:
    def test_existing_path(self):
        tree = PrefixTree([0], k=3)
        node = tree.find_path(tree.root, [1, 3])
        assert tree.find_path(tree.root, [1, 3]) is node

    def test_suffix_insertion(self):
        tree = PrefixTree([0], k=3)
        node = tree.find_path(tree.root, [1, 3])
        leaf = tree.find_path(tree.root, [1, 3, 5])
        assert leaf.parent is node and leaf.path() == (1, 3, 5)

    def test_full_branch(self):
        tree = PrefixTree([0], k=3)
        leaf = tree.find_path(tree.root, [2, 7])
        assert leaf.path() == (2, 7)
        assert list(tree.occurrences(2)) == [leaf.parent]
        assert list(tree.occurrences(7)) == [leaf]

    def test_descending_path(self):
        tree = PrefixTree([0], k=3)
        with pytest.raises(ContractViolation):
            tree.find_path(tree.root, [3, 1])

    def test_user_index_chains(self):
        tree = PrefixTree([0], k=3)
        a = tree.find_path(tree.root, [1, 4])
        b = tree.find_path(tree.root, [2, 4])
        c = tree.find_path(tree.root, [4])
        assert {id(n) for n in tree.occurrences(4)} == {id(a), id(b), id(c)}


class TestDfsMarginals:
    def test_root_only(self):
        tree = PrefixTree([0], k=2)
        tree.attach(Estimation(0, 0, 1.0))
        store = InfluenceStore()
        store.update_edge(3, 9, 0.7)
        visited = tree.dfs_marginals(3, frozenset({0}), store, related_to({3: [0]}), seq=1)
        assert visited == [(tree.root.payload, pytest.approx(0.7))]
        assert tree.root.payload.marg_seq == 1
        assert tree.marginal_evaluations == 1

    def test_pruning_on_acting_user(self):
        tree = PrefixTree([0], k=3)
        store = InfluenceStore()
        store.update_edge(1, 9, 1.0)
        solid(tree, [1], 1.0, [0], Estimation(0, 0, 1.5))
        tree.refresh_e_min()
        visited = tree.dfs_marginals(1, frozenset({0}), store, related_to({1: [0]}), seq=1)
        assert visited == []
        assert tree.prunes[1] == 1

    def test_pruning_on_unrelated_paths(self):
        tree = PrefixTree([0, 1], k=3)
        store = InfluenceStore()
        store.update_edge(1, 9, 1.0)
        store.update_edge(2, 8, 1.0)
        tree.attach(Estimation(1, 0, 1.5))
        solid(tree, [1], 1.0, [0], Estimation(0, 0, 1.5))
        related = related_to({1: [0], 2: [1]})
        visited = tree.dfs_marginals(2, frozenset({1}), store, related, seq=1)
        assert [p.users for p, _ in visited] == [()]
        assert tree.prunes[2] == 1

    def test_paths_without_relevant_estimation_are_skipped(self):
        tree = PrefixTree([0, 1], k=3)
        store = InfluenceStore()
        store.update_edge(2, 8, 1.0)
        tree.attach(Estimation(0, 0, 1.5))
        visited = tree.dfs_marginals(2, frozenset({1}), store, related_to({2: [1]}), seq=1)
        assert visited == []

    def test_shared_path_computed_once(self):
        tree = PrefixTree([0, 1, 2], k=3)
        store = InfluenceStore()
        store.update_edge(1, 9, 1.0)
        store.update_edge(2, 8, 0.5)
        solid(tree, [1], 1.0, [0, 1, 2], Estimation(0, 0, 1.5), Estimation(1, 0, 1.5), Estimation(2, 1, 1.65))
        related = related_to({1: [0, 1, 2], 2: [0, 1, 2]})
        visited = tree.dfs_marginals(2, frozenset({0, 1, 2}), store, related, seq=4)
        assert [p.users for p, _ in visited] == [(1,)]
        assert tree.marginal_evaluations == 1


class TestModify:
    def test_from_root(self):
        tree = PrefixTree([0, 1, 2], k=2)
        store = InfluenceStore()
        store.update_edge(3, 9, 0.6)
        est = Estimation(0, 0, 1.0)
        tree.attach(est)
        q_ur = frozenset({0, 2})
        tree.dfs_marginals(3, q_ur, store, related_to({3: [0, 2]}), seq=1)
        tree.modify(3, tree.root.payload, est, q_ur, {}, seq=1)
        assert est.payload.users == (3,)
        assert est.payload.f == pytest.approx(0.6)
        assert est.payload.queries == q_ur
        assert not tree.root.payload.estimations

    def test_extend_path(self):
        tree = PrefixTree([1, 2, 3], k=3)
        est = Estimation(2, 0, 1.0)
        source = solid(tree, [1], 0.6, [1, 2], est)
        source.marg, source.marg_seq = 0.2, 5
        tree.modify(3, source, est, frozenset({2, 3}), {}, seq=5)
        target = est.payload
        assert target.users == (1, 3)
        assert target.f == pytest.approx(0.8)
        assert target.queries == frozenset({2})
        assert target.node.parent is source.node

    def test_insertion_before_source_users(self):
        tree = PrefixTree([0], k=3)
        est = Estimation(0, 0, 1.0)
        source = solid(tree, [2, 5], 1.0, [0], est)
        source.marg, source.marg_seq = 0.3, 1
        tree.modify(3, source, est, frozenset({0}), {}, seq=1)
        assert est.payload.users == (2, 3, 5)
        assert est.payload.node.path() == (2, 3, 5)

    def test_memo_shares_target(self):
        tree = PrefixTree([0, 1], k=3)
        first, second = Estimation(0, 0, 1.0), Estimation(1, 0, 1.0)
        source = solid(tree, [1], 0.6, [0, 1], first, second)
        source.marg, source.marg_seq = 0.2, 2
        memo = {}
        tree.modify(4, source, first, frozenset({0, 1}), memo, seq=2)
        source.marg = 99.0
        tree.modify(4, source, second, frozenset({0, 1}), memo, seq=2)
        assert first.payload is second.payload
        assert first.payload.f == pytest.approx(0.8)
        assert len(memo) == 1

    def test_full_source(self):
        tree = PrefixTree([0], k=1)
        est = Estimation(0, 0, 1.0)
        source = solid(tree, [1], 0.6, [0], est)
        source.marg_seq = 1
        with pytest.raises(ContractViolation):
            tree.modify(2, source, est, frozenset({0}), {}, seq=1)

    def test_stale_marginal(self):
        tree = PrefixTree([0], k=3)
        est = Estimation(0, 0, 1.0)
        source = solid(tree, [1], 0.6, [0], est)
        source.marg_seq = 1
        with pytest.raises(ContractViolation):
            tree.modify(2, source, est, frozenset({0}), {}, seq=2)


class TestClear:
    def test_erase_leaf_keep_parent(self):
        tree = PrefixTree([0], k=3)
        parent = solid(tree, [1], 1.0, [0], Estimation(0, 0, 1.0))
        leaf = solid(tree, [1, 3], 1.5, [0])
        tree.clear([leaf])
        assert 3 not in parent.node.children
        assert parent.node.payload is parent
        assert list(tree.occurrences(3)) == []

    def test_internal_path_is_kept(self):
        tree = PrefixTree([0], k=3)
        inner = solid(tree, [1], 1.0, [0])
        solid(tree, [1, 3], 1.5, [0], Estimation(0, 0, 1.0))
        tree.clear([inner])
        assert tree.root.children[1] is inner.node
        assert inner.node.alive and inner.node.payload is None

    def test_hollow_chain_is_erased(self):
        tree = PrefixTree([0], k=4)
        keep = solid(tree, [1], 1.0, [0], Estimation(0, 0, 1.0))
        leaf = solid(tree, [1, 2, 3], 1.5, [0])
        tree.clear([leaf])
        assert keep.node.children == {}
        assert list(tree.occurrences(2)) == [] and list(tree.occurrences(3)) == []

    def test_stops_at_branching_node(self):
        tree = PrefixTree([0], k=4)
        solid(tree, [1, 2, 4], 1.0, [0], Estimation(0, 0, 1.0))
        leaf = solid(tree, [1, 2, 3], 1.5, [0])
        tree.clear([leaf])
        assert list(tree.root.children[1].children[2].children) == [4]

    def test_root_is_never_erased(self):
        tree = PrefixTree([0], k=3)
        tree.clear([tree.root.payload])
        assert tree.root.payload is not None and tree.root.alive


class TestEmin:
    def test_leaf(self):
        tree = PrefixTree([0], k=3)
        payload = solid(tree, [1], 1.0, [0], Estimation(0, 0, 3.0), Estimation(0, 1, 4.5))
        assert tree.e_min_recompute(payload.node) == 3.0

    def test_hollow_internal_node(self):
        tree = PrefixTree([0], k=3)
        solid(tree, [1, 2], 1.0, [0], Estimation(0, 0, 2.0))
        solid(tree, [1, 3], 1.0, [0], Estimation(0, 1, 5.0))
        tree.refresh_e_min()
        assert tree.root.children[1].e_min == 2.0
        assert tree.root.e_min == 2.0

    def test_empty_subtree(self):
        tree = PrefixTree([0], k=3)
        assert tree.e_min_recompute(tree.root) == math.inf

    def test_repair_after_removal(self):
        tree = PrefixTree([0], k=3)
        low = Estimation(0, 0, 2.0)
        solid(tree, [1, 2], 1.0, [0], low)
        solid(tree, [1, 3], 1.0, [0], Estimation(0, 1, 5.0))
        tree.refresh_e_min()
        tree.release(low)
        tree.refresh_e_min()
        assert tree.root.e_min == 5.0
        assert 2 not in tree.root.children[1].children


class TestInspection:
    def test_dump_format(self):
        tree = PrefixTree([0, 1, 2], k=3)
        tree.attach(Estimation(2, 0, 1.0))
        solid(tree, [1, 3], 0.8, [0, 1], Estimation(0, 3, 2.25), Estimation(1, 1, 1.5))
        solid(tree, [1], 0.5, [0, 1, 2], Estimation(2, 1, 1.1))
        assert tree.dump() == [
            "S= f=0 Q=0,1,2 E=1",
            "S=1 f=0.5 Q=0,1,2 E=1.1",
            "S=1,3 f=0.8 Q=0,1 E=1.5,2.25",
        ]
        assert tree.dump({0: [10], 1: [11, 13], 2: [12]})[2] == "S=1,3 f=0.8 Q=10,11,13 E=1.5,2.25"

    def test_assignments(self):
        tree = PrefixTree([0], k=3)
        solid(tree, [2, 4], 1.0, [0], Estimation(0, 7, 1.0))
        assert tree.assignments() == {(0, 7): (2, 4)}


if __name__ == "__main__":
    pytest.main(["-v", __file__])
