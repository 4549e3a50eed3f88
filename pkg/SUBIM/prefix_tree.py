"""Prefix tree holding every distinct candidate set once.

Paths run through ascending user ids, so a candidate set shared by estimations
of several subscriptions is one path, and its marginal gain is computed once
per action. A node carries a payload exactly when some estimation is linked to
its path; the root is the empty set and always keeps its payload.
"""
import math
from collections import defaultdict
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from SUBIM.influence import EdgeUpdate, InfluenceStore
from SUBIM.sieve import Estimation
from SUBIM.utils import ContractViolation, format_ids, format_value


class PathPayload:
    __slots__ = ("node", "users", "f", "marg", "marg_seq", "queries", "estimations")

    def __init__(self, node: "TreeNode", users: Tuple[int, ...], f: float, queries: FrozenSet[int]):
        self.node = node
        self.users = users
        self.f = f
        # marginal of the in-flight user, valid only for the action numbered marg_seq
        self.marg = 0.0
        self.marg_seq = -1
        self.queries = queries
        self.estimations: Dict[Tuple[int, int], Estimation] = {}

    def __repr__(self):
        return f"PathPayload(S={self.users}, f={self.f:.6g}, |E|={len(self.estimations)})"


class TreeNode:
    __slots__ = ("user", "parent", "children", "depth", "payload", "next_occurrence", "prev_occurrence", "e_min", "alive")

    def __init__(self, user: Optional[int], parent: Optional["TreeNode"], depth: int):
        self.user = user
        self.parent = parent
        self.children: Dict[int, TreeNode] = {}
        self.depth = depth
        self.payload: Optional[PathPayload] = None
        self.next_occurrence: Optional[TreeNode] = None
        self.prev_occurrence: Optional[TreeNode] = None
        self.e_min = math.inf
        self.alive = True

    def path(self) -> Tuple[int, ...]:
        users = []
        node = self
        while node.parent is not None:
            users.append(node.user)
            node = node.parent
        return tuple(reversed(users))

    def __repr__(self):
        return f"TreeNode(path={self.path()})"


class PrefixTree:
    """Candidate sets of all estimations, keyed by their ascending user sequence.

    Args:
        queries: internal ids of every subscription; they form the root's related set.
        k: seed-set size, bounds the path length.
        pruning1: skip subtrees rooted at the acting user.
        pruning2: stop descending once no related subscription is left on the path.
        pruning3: skip subtrees whose minimum estimation the acting user cannot reach.
    """

    def __init__(
        self,
        queries: Iterable[int],
        k: int,
        pruning1: bool = True,
        pruning2: bool = True,
        pruning3: bool = False,
    ):
        self.k = k
        self.pruning1 = pruning1
        self.pruning2 = pruning2
        self.pruning3 = pruning3
        self.root = TreeNode(None, None, 0)
        self.root.payload = PathPayload(self.root, (), 0.0, frozenset(queries))
        self.user_index: Dict[int, TreeNode] = {}
        self.marginal_evaluations = 0
        self.nodes_visited = 0
        self.prunes = {1: 0, 2: 0, 3: 0}
        self._dirty = set()

    # Traversal
    def nodes(self) -> Iterator[TreeNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children[u] for u in sorted(node.children, reverse=True))

    def payloads(self) -> Iterator[PathPayload]:
        for node in self.nodes():
            if node.payload is not None:
                yield node.payload

    def occurrences(self, user: int) -> Iterator[TreeNode]:
        node = self.user_index.get(user)
        while node is not None:
            yield node
            node = node.next_occurrence

    def subtree_payloads(self, node: TreeNode) -> Iterator[PathPayload]:
        stack = [node]
        while stack:
            node = stack.pop()
            if node.payload is not None:
                yield node.payload
            stack.extend(node.children.values())

    # User index
    def _splice(self, node: TreeNode):
        head = self.user_index.get(node.user)
        node.next_occurrence = head
        if head is not None:
            head.prev_occurrence = node
        self.user_index[node.user] = node

    def _unsplice(self, node: TreeNode):
        prev, nxt = node.prev_occurrence, node.next_occurrence
        if nxt is not None:
            nxt.prev_occurrence = prev
        if prev is not None:
            prev.next_occurrence = nxt
        elif nxt is not None:
            self.user_index[node.user] = nxt
        else:
            del self.user_index[node.user]
        node.prev_occurrence = node.next_occurrence = None

    # Links
    def link(self, est: Estimation, payload: PathPayload):
        payload.estimations[est.key] = est
        est.payload = payload
        self._dirty.add(payload.node)

    def unlink(self, est: Estimation) -> PathPayload:
        payload = est.payload
        del payload.estimations[est.key]
        est.payload = None
        self._dirty.add(payload.node)
        return payload

    def attach(self, est: Estimation):
        """Start ``est`` from the empty candidate set."""
        self.link(est, self.root.payload)

    def release(self, est: Estimation):
        """Detach an expired estimation and drop its path if nothing else holds it."""
        payload = self.unlink(est)
        if not payload.estimations:
            self._drop(payload.node)

    def find_path(self, start: TreeNode, users: Sequence[int]) -> TreeNode:
        if not users:
            raise ContractViolation("find_path needs a nonempty user sequence")
        if any(a >= b for a, b in zip(users, users[1:])) or (start.user is not None and users[0] <= start.user):
            raise ContractViolation(f"Path {tuple(users)} is not ascending below {start!r}")
        node = start
        for u in users:
            child = node.children.get(u)
            if child is None:
                child = TreeNode(u, node, node.depth + 1)
                node.children[u] = child
                self._splice(child)
            node = child
            self._dirty.add(node)
        return node

    def modify(
        self,
        u_r: int,
        source: PathPayload,
        est: Estimation,
        q_ur: FrozenSet[int],
        memo: Dict[PathPayload, PathPayload],
        seq: int,
    ):
        """Move ``est`` from ``source`` to the path ``source + {u_r}``."""
        if len(source.users) >= self.k:
            raise ContractViolation(f"Cannot extend the full set {source.users}")
        if u_r in source.users:
            raise ContractViolation(f"User {u_r} already in {source.users}")
        if source.marg_seq != seq:
            raise ContractViolation(f"Stale marginal on {source.users}")
        target = memo.get(source)
        if target is None:
            users = tuple(sorted(source.users + (u_r,)))
            start = source.node
            while start.parent is not None and start.user > u_r:
                start = start.parent
            node = self.find_path(start, users[start.depth:])
            if node.payload is None:
                node.payload = PathPayload(node, users, source.f + source.marg, source.queries & q_ur)
            target = node.payload
            memo[source] = target
        self.unlink(est)
        self.link(est, target)

    def _drop(self, node: TreeNode):
        if node.parent is None or not node.alive:
            return
        if node.payload is not None and node.payload.estimations:
            return
        node.payload = None
        self._dirty.add(node)
        while node.parent is not None and node.payload is None and not node.children:
            parent = node.parent
            del parent.children[node.user]
            self._unsplice(node)
            node.alive = False
            self._dirty.discard(node)
            self._dirty.add(parent)
            node = parent

    def clear(self, visited: Iterable[PathPayload]):
        for payload in visited:
            node = payload.node
            if not payload.estimations and node.alive and node.payload is payload:
                self._drop(node)

    # Subtree minimum estimation
    def e_min_recompute(self, node: TreeNode) -> float:
        own = math.inf
        if node.payload is not None and node.payload.estimations:
            own = min(e.value for e in node.payload.estimations.values())
        node.e_min = min([own] + [c.e_min for c in node.children.values()])
        return node.e_min

    def refresh_e_min(self):
        levels = defaultdict(set)
        for node in self._dirty:
            if node.alive:
                levels[node.depth].add(node)
        self._dirty = set()
        while levels:
            depth = max(levels)
            for node in levels.pop(depth):
                old = node.e_min
                if self.e_min_recompute(node) != old and node.parent is not None:
                    levels[depth - 1].add(node.parent)

    def recompute_all(self):
        for node in sorted(self.nodes(), key=lambda n: n.depth, reverse=True):
            self.e_min_recompute(node)
        self._dirty = set()

    # Per-action work
    def raise_path_influence(self, u_r: int, u_e: int, update: EdgeUpdate, store: InfluenceStore):
        """Refresh f_S of every path containing ``u_r`` after its edge to ``u_e`` grew."""
        for node in self.occurrences(u_r):
            for payload in self.subtree_payloads(node):
                others = store.cover((u for u in payload.users if u != u_r), u_e)
                gain = max(others, update.weight) - max(others, update.previous)
                if gain > 0:
                    payload.f += gain

    def dfs_marginals(
        self,
        u_r: int,
        q_ur: FrozenSet[int],
        store: InfluenceStore,
        related: Callable[[int], FrozenSet[int]],
        seq: int,
    ) -> List[Tuple[PathPayload, float]]:
        """Marginal gain of ``u_r`` over every path some estimation of ``q_ur`` could extend.

        Paths are visited top-down in ascending user order; each gain is stored in
        the path's marginal cache tagged with ``seq``.
        """
        visited = []
        f_ur = store.influence(u_r)
        # node, subscriptions of q_ur still related along the path, path contains u_r
        stack = [(self.root, q_ur, False)]
        while stack:
            node, live, has_ur = stack.pop()
            self.nodes_visited += 1
            payload = node.payload
            if payload is not None and node.depth < self.k:
                if self.pruning3 and f_ur < (node.e_min / 2.0 - payload.f) / (self.k - node.depth):
                    self.prunes[3] += 1
                    continue
                if not has_ur and any(e.owner in live for e in payload.estimations.values()):
                    gain = store.marginal_gain(u_r, payload.users)
                    self.marginal_evaluations += 1
                    payload.marg = gain
                    payload.marg_seq = seq
                    visited.append((payload, gain))
            if node.depth >= self.k:
                continue
            for user in sorted(node.children, reverse=True):
                if self.pruning1 and user == u_r:
                    self.prunes[1] += 1
                    continue
                narrowed = live & related(user)
                if self.pruning2 and not narrowed:
                    self.prunes[2] += 1
                    continue
                stack.append((node.children[user], narrowed, has_ur or user == u_r))
        return visited

    # Inspection
    def assignments(self) -> Dict[Tuple[int, int], Tuple[int, ...]]:
        return {key: payload.users for payload in self.payloads() for key in payload.estimations}

    def dump(self, labels: Optional[Mapping[int, Sequence]] = None) -> List[str]:
        lines = []
        for payload in sorted(self.payloads(), key=lambda p: p.users):
            if not payload.estimations:
                continue
            if labels is None:
                queries = sorted(payload.queries)
            else:
                queries = sorted(x for q in payload.queries for x in labels[q])
            values = sorted(e.value for e in payload.estimations.values())
            lines.append(
                f"S={format_ids(payload.users)} f={format_value(payload.f)} "
                f"Q={format_ids(queries)} E={format_ids(format_value(v) for v in values)}"
            )
        return lines

    def audit(self, store: InfluenceStore, related: Callable[[int], FrozenSet[int]], rtol: float = 1e-9):
        """Check every structural invariant of the tree against ``store``."""
        everything = self.root.payload.queries
        seen = defaultdict(set)
        for node in self.nodes():
            assert node.alive, f"Dead node {node!r} still reachable"
            if node.parent is not None:
                seen[node.user].add(id(node))
                assert node.parent.children[node.user] is node
                assert node.depth == node.parent.depth + 1
                assert node.depth <= self.k, f"{node!r} is deeper than k"
                if not node.children:
                    assert node.payload is not None, f"Leaf {node!r} has no payload"
            for user in node.children:
                assert node.user is None or user > node.user, f"Descending child {user} under {node!r}"
            payload = node.payload
            own = math.inf
            if payload is not None:
                users = node.path()
                assert payload.node is node and payload.users == users
                if node.parent is not None:
                    assert payload.estimations, f"Payload {payload!r} has no estimation"
                    expected = everything
                    for u in users:
                        expected = expected & related(u)
                    assert payload.queries == expected, f"Related subscriptions of {users} drifted"
                    exact = store.set_influence(users)
                    assert math.isclose(payload.f, exact, rel_tol=rtol, abs_tol=1e-300), (
                        f"f{users}={payload.f} but coverage gives {exact}"
                    )
                for key, est in payload.estimations.items():
                    assert est.payload is payload and est.key == key
                    assert est.owner in payload.queries
                if payload.estimations:
                    own = min(e.value for e in payload.estimations.values())
            expected_min = min([own] + [c.e_min for c in node.children.values()])
            assert node.e_min == expected_min, f"e_min of {node!r} is {node.e_min}, expected {expected_min}"
        for user, head in self.user_index.items():
            chain = set()
            for node in self.occurrences(user):
                assert node.user == user and node.alive
                chain.add(id(node))
            assert chain == seen.pop(user, set()), f"User index chain of {user} is out of sync"
        assert not seen, f"Users {sorted(seen)} missing from the user index"
