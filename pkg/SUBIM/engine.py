"""Keyword-subscription engine driving the per-action pipeline over the prefix tree."""
import logging
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Tuple

from SUBIM.influence import Action, DecayParams, InfluenceStore, current_decay_factor, raw_weight
from SUBIM.prefix_tree import PathPayload, PrefixTree
from SUBIM.sieve import EstimationLadder, ShiftState, refresh_ladder, sieve_accept, time_decay
from SUBIM.utils import ContractViolation, RebaseRequired, Selection, prefer


@dataclass
class UserProfile:
    user: int
    keywords: FrozenSet[str] = frozenset()


@dataclass
class Subscription:
    id: int
    keywords: FrozenSet[str]
    result_set: Tuple[int, ...] = ()
    result_value: float = 0.0

    def __post_init__(self):
        if not self.keywords:
            raise ContractViolation(f"Subscription {self.id} has no keywords")


@dataclass(frozen=True)
class Query:
    """Internal query: one distinct keyword set and the subscriptions asking for it."""

    qid: int
    keywords: FrozenSet[str]
    subscribers: Tuple[int, ...]


class ResultRecord(NamedTuple):
    subscription_id: int
    timestamp: int
    k: int
    users: Tuple[int, ...]
    value: float


@dataclass
class EngineStats:
    actions: int = 0
    edge_increases: int = 0
    short_circuits: int = 0
    marginal_evaluations: int = 0
    nodes_visited: int = 0
    prunes_1: int = 0
    prunes_2: int = 0
    prunes_3: int = 0
    rebases: int = 0
    overflow_rebases: int = 0
    emissions: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EmissionSchedule:
    """When results are pushed: every ``every`` actions, on clock advances, at end of stream."""

    every: int = 1000
    on_timestamp_change: bool = False
    pending: int = 0

    def before(self, old_clock: Optional[int], new_clock: int) -> bool:
        return self.on_timestamp_change and self.pending > 0 and old_clock is not None and new_clock > old_clock

    def after(self) -> bool:
        self.pending += 1
        return self.every > 0 and self.pending >= self.every

    def emitted(self):
        self.pending = 0


def build_queries(subscriptions: Mapping[int, Subscription]) -> List[Query]:
    """Merge subscriptions with identical keyword sets, numbered by first appearance."""
    grouped: Dict[FrozenSet[str], List[int]] = {}
    for sid in sorted(subscriptions):
        grouped.setdefault(subscriptions[sid].keywords, []).append(sid)
    return [Query(qid, keywords, tuple(ids)) for qid, (keywords, ids) in enumerate(grouped.items())]


class SubscriptionEngine:
    """Maintains a size-k influential user set for every subscription over one action stream.

    Args:
        params: decay and sieve constants; ``params.t0`` is anchored to the first action's clock.
        profiles: user id -> keyword profile.
        subscriptions: subscription id -> subscription.
        base: initial estimation base ``b``.
        schedule: result emission cadence.
        pruning1, pruning2, pruning3: prefix-tree pruning switches.
    """

    def __init__(
        self,
        params: DecayParams,
        profiles: Mapping[int, UserProfile],
        subscriptions: Mapping[int, Subscription],
        base: float = 1.0,
        schedule: Optional[EmissionSchedule] = None,
        pruning1: bool = True,
        pruning2: bool = True,
        pruning3: bool = False,
    ):
        params.validate()
        if not base > 0:
            raise ContractViolation(f"base must be positive, got {base}")
        if pruning3:
            warnings.warn(
                "Minimum-estimation pruning can skip paths that would accept the acting user; "
                "results may differ from the unpruned engine",
                UserWarning,
            )
        self.params = params
        self.shift = ShiftState(params, base)
        self.store = InfluenceStore()
        self.profiles = dict(profiles)
        self.subscriptions = dict(subscriptions)
        self.queries = build_queries(self.subscriptions)
        self.labels = {q.qid: q.subscribers for q in self.queries}
        self._keyword_index: Dict[str, List[int]] = defaultdict(list)
        for q in self.queries:
            for word in q.keywords:
                self._keyword_index[word].append(q.qid)
        self._related: Dict[int, FrozenSet[int]] = {}
        self.ladders = {q.qid: EstimationLadder(q.qid) for q in self.queries}
        self.tree = PrefixTree(self.labels, params.k, pruning1, pruning2, pruning3)
        self.schedule = schedule if schedule is not None else EmissionSchedule()
        self.clock: Optional[int] = None
        self.stats = EngineStats()
        self._seq = 0

    def related_subscriptions(self, user: int) -> FrozenSet[int]:
        """Internal queries whose keywords all appear in the user's profile."""
        related = self._related.get(user)
        if related is None:
            profile = self.profiles.get(user)
            words = profile.keywords if profile is not None else frozenset()
            candidates = {qid for word in words for qid in self._keyword_index.get(word, ())}
            related = frozenset(qid for qid in candidates if self.queries[qid].keywords <= words)
            self._related[user] = related
        return related

    def process_action(self, action: Action) -> List[ResultRecord]:
        """Run one action through the pipeline; returns the records it caused to be emitted."""
        records = []
        new_clock = action.clock if self.clock is None else max(self.clock, action.clock)
        if self.schedule.before(self.clock, new_clock):
            records.extend(self.emit())
        if self.clock is None:
            self.params.t0 = new_clock
        self.clock = new_clock
        self._seq += 1
        self.stats.actions += 1
        self._update(action)
        if self.schedule.after():
            records.extend(self.emit())
        return records

    def _update(self, action: Action):
        u_r, u_e = action.influencer, action.influencee
        try:
            w = raw_weight(action, self.params)
        except RebaseRequired:
            logging.info(f"Raw weight out of range at clock {self.clock}, rebasing")
            self.time_decay(self.clock)
            self.stats.overflow_rebases += 1
            w = raw_weight(action, self.params)
        update = self.store.update_edge(u_r, u_e, w)
        if not update.increased:
            self.stats.short_circuits += 1
            return
        self.stats.edge_increases += 1
        self.tree.raise_path_influence(u_r, u_e, update, self.store)
        q_ur = self.related_subscriptions(u_r)
        if not q_ur:
            return
        f_ur = self.store.influence(u_r)
        for qid in sorted(q_ur):
            ladder = self.ladders[qid]
            if f_ur > ladder.m:
                created, expired = refresh_ladder(ladder, f_ur, self.shift)
                for est in expired:
                    self.tree.release(est)
                for est in created:
                    self.tree.attach(est)
        tree = self.tree
        if tree.pruning3:
            tree.refresh_e_min()
        visited = tree.dfs_marginals(u_r, q_ur, self.store, self.related_subscriptions, self._seq)
        accepted = []
        for payload, gain in visited:
            if len(payload.users) >= self.params.k:
                continue
            for key in sorted(payload.estimations):
                est = payload.estimations[key]
                if est.owner in q_ur and sieve_accept(gain, est.value, payload.f, len(payload.users), self.params.k):
                    accepted.append((payload, est))
        memo: Dict[PathPayload, PathPayload] = {}
        for payload, est in accepted:
            tree.modify(u_r, payload, est, q_ur, memo, self._seq)
        tree.clear(payload for payload, _ in visited)
        tree.refresh_e_min()
        self._sync_counters()

    def _sync_counters(self):
        self.stats.marginal_evaluations = self.tree.marginal_evaluations
        self.stats.nodes_visited = self.tree.nodes_visited
        self.stats.prunes_1 = self.tree.prunes[1]
        self.stats.prunes_2 = self.tree.prunes[2]
        self.stats.prunes_3 = self.tree.prunes[3]

    def time_decay(self, t_cur: int):
        outcome = time_decay(t_cur, self.shift, self.store, self.ladders.values(), self.tree.payloads())
        # payload maps are keyed by (owner, index) and the indices just moved
        for payload in self.tree.payloads():
            payload.estimations = {est.key: est for est in payload.estimations.values()}
        for est in outcome.expired:
            self.tree.release(est)
        self.tree.recompute_all()
        self.stats.rebases += 1

    def maybe_time_decay(self, t_cur: Optional[int] = None) -> bool:
        t_cur = self.clock if t_cur is None else t_cur
        if t_cur is None or self.store.max_total < self.params.tau_f:
            return False
        self.time_decay(t_cur)
        return True

    def push_results(self, t_cur: Optional[int] = None) -> List[ResultRecord]:
        t_cur = self.clock if t_cur is None else t_cur
        if t_cur is None:
            t_cur = self.params.t0
        factor = current_decay_factor(t_cur, self.params)
        best: Dict[int, Selection] = {}
        for payload in self.tree.payloads():
            if not payload.users:
                continue
            candidate = Selection(payload.users, payload.f)
            for qid in payload.queries:
                if prefer(candidate, best.get(qid)):
                    best[qid] = candidate
        records = []
        for q in self.queries:
            chosen = best.get(q.qid, Selection((), 0.0))
            for sid in q.subscribers:
                subscription = self.subscriptions[sid]
                subscription.result_set = chosen.users
                subscription.result_value = chosen.value * factor
                records.append(ResultRecord(sid, t_cur, self.params.k, chosen.users, subscription.result_value))
        records.sort(key=lambda r: r.subscription_id)
        return records

    def emit(self, t_cur: Optional[int] = None) -> List[ResultRecord]:
        self.maybe_time_decay(t_cur)
        records = self.push_results(t_cur)
        self.stats.emissions += 1
        self.schedule.emitted()
        return records

    def flush(self) -> List[ResultRecord]:
        """End of stream: emit unless the last action was already covered."""
        if self.clock is None or self.schedule.pending == 0:
            return []
        return self.emit()

    # Inspection
    def assignments(self) -> Dict[Tuple[int, int], Tuple[int, ...]]:
        return self.tree.assignments()

    def dump(self) -> List[str]:
        return self.tree.dump(self.labels)

    def audit(self):
        self.tree.audit(self.store, self.related_subscriptions)
        for qid, ladder in self.ladders.items():
            related_max = max(
                (self.store.influence(u) for u in self.store.users() if qid in self.related_subscriptions(u)),
                default=0.0,
            )
            assert ladder.m == related_max or abs(ladder.m - related_max) <= 1e-9 * related_max, (
                f"Ladder {qid} tracks m={ladder.m}, related users reach {related_max}"
            )
            for i, est in ladder.estimations.items():
                assert est.index == i and est.payload is not None


def run_stream(engine, actions: Iterable[Action]) -> List[ResultRecord]:
    """Feed ``actions`` through any engine and collect every emitted record."""
    records = []
    for action in actions:
        records.extend(engine.process_action(action))
    records.extend(engine.flush())
    return records
