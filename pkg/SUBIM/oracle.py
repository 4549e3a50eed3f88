"""Reference implementations used to check the prefix-tree engine.

Nothing here touches the prefix tree or the ladder code: the naive engine keeps
one independent sieve per subscription and recomputes every influence from the
edge store. Only the raw weight formula is shared.
"""
import itertools
import math
import sys
from collections import defaultdict
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from SUBIM.engine import (
    EmissionSchedule,
    EngineStats,
    ResultRecord,
    Subscription,
    UserProfile,
    build_queries,
    run_stream,
)
from SUBIM.influence import INCREASE_RTOL, Action, DecayParams, raw_weight
from SUBIM.utils import ContractViolation, RebaseRequired, Selection, prefer

MAX_EXHAUSTIVE_USERS = 20

Edges = Mapping[int, Mapping[int, float]]


def decayed_edges(actions: Iterable[Action], lam: float, t_cur: int) -> Dict[int, Dict[int, float]]:
    """True edge weights at ``t_cur``: the max over each edge's actions."""
    params = DecayParams(lam=lam, t0=t_cur)
    edges: Dict[int, Dict[int, float]] = defaultdict(dict)
    for action in actions:
        w = raw_weight(action, params)
        slots = edges[action.influencer]
        slots[action.influencee] = max(slots.get(action.influencee, 0.0), w)
    return dict(edges)


def coverage(users: Iterable[int], edges: Edges) -> float:
    covered: Dict[int, float] = {}
    for u in users:
        for v, w in edges.get(u, {}).items():
            covered[v] = max(covered.get(v, 0.0), w)
    return sum(covered.values())


def exhaustive_opt(users: Sequence[int], k: int, edges: Edges) -> Selection:
    """Best set of at most ``k`` users by full enumeration.

    Ties go to the smaller set, then the lexicographically smaller one.
    """
    users = sorted(set(users))
    if len(users) > MAX_EXHAUSTIVE_USERS:
        raise ValueError(f"Exhaustive search over {len(users)} users exceeds {MAX_EXHAUSTIVE_USERS}")
    if not users or k < 1:
        return Selection((), 0.0)
    targets = sorted({v for u in users for v in edges.get(u, {})})
    column = {v: i for i, v in enumerate(targets)}
    weights = np.zeros((len(users), len(targets)))
    for row, u in enumerate(users):
        for v, w in edges.get(u, {}).items():
            weights[row, column[v]] = w
    best = None
    for size in range(1, min(k, len(users)) + 1):
        for rows in itertools.combinations(range(len(users)), size):
            value = float(weights[list(rows)].max(axis=0).sum()) if targets else 0.0
            candidate = Selection(tuple(users[r] for r in rows), value)
            if prefer(candidate, best):
                best = candidate
    return best


def greedy(users: Sequence[int], k: int, edges: Edges) -> Selection:
    """Classic greedy: add the user with the largest marginal gain, smallest id on ties."""
    chosen: List[int] = []
    value = 0.0
    pool = sorted(set(users))
    for _ in range(min(k, len(pool))):
        best_user, best_gain = None, 0.0
        for u in pool:
            if u in chosen:
                continue
            gain = coverage(chosen + [u], edges) - value
            if gain > best_gain:
                best_user, best_gain = u, gain
        if best_user is None:
            break
        chosen.append(best_user)
        value = coverage(chosen, edges)
    return Selection(tuple(sorted(chosen)), value)


def _nearest_power(log_b: float, eps: float) -> int:
    # closest integer to -log_b / log(1 + eps), halves toward zero
    x = -log_b / math.log1p(eps)
    low = math.floor(x)
    if x - low > 0.5 or (x - low == 0.5 and abs(low + 1) < abs(low)):
        return low + 1
    return low


class _Sieve:
    def __init__(self):
        self.m = 0.0
        self.sets: Dict[int, Tuple[int, ...]] = {}


class NaiveMultiSieve:
    """One independent sieve per subscription, every influence recomputed from scratch.

    With ``eager=True`` the engine rebases whenever the stream clock advances, which
    makes it the eager-decay reference; otherwise it rebases on the same triggers as
    the prefix engine and its lattice indices match the prefix engine's exactly.
    """

    def __init__(
        self,
        params: DecayParams,
        profiles: Mapping[int, UserProfile],
        subscriptions: Mapping[int, Subscription],
        base: float = 1.0,
        schedule: Optional[EmissionSchedule] = None,
        eager: bool = False,
    ):
        params.validate()
        self.params = params
        self.b = base
        self.eager = eager
        self.profiles = dict(profiles)
        self.subscriptions = dict(subscriptions)
        self.queries = build_queries(self.subscriptions)
        self.sieves = {q.qid: _Sieve() for q in self.queries}
        self.edges: Dict[int, Dict[int, float]] = defaultdict(dict)
        self.schedule = schedule if schedule is not None else EmissionSchedule()
        self.clock: Optional[int] = None
        self.stats = EngineStats()

    def related(self, user: int) -> FrozenSet[int]:
        profile = self.profiles.get(user)
        words = profile.keywords if profile is not None else frozenset()
        return frozenset(q.qid for q in self.queries if q.keywords <= words)

    def influence(self, users: Iterable[int]) -> float:
        return coverage(users, self.edges)

    def gain(self, u: int, users: Tuple[int, ...]) -> float:
        # positive parts only: a difference of two coverage sums can round below zero
        self.stats.marginal_evaluations += 1
        if u in users:
            return 0.0
        gain = 0.0
        for v, w in self.edges.get(u, {}).items():
            covered = max((self.edges[s].get(v, 0.0) for s in users if s in self.edges), default=0.0)
            if w > covered:
                gain += w - covered
        return gain

    def threshold(self, i: int) -> float:
        return self.b * (1.0 + self.params.epsilon) ** i

    def process_action(self, action: Action) -> List[ResultRecord]:
        records = []
        new_clock = action.clock if self.clock is None else max(self.clock, action.clock)
        if self.schedule.before(self.clock, new_clock):
            records.extend(self.emit())
        if self.clock is None:
            self.params.t0 = new_clock
        self.clock = new_clock
        if self.eager and self.clock > self.params.t0:
            self.time_decay(self.clock)
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
            self.time_decay(self.clock)
            self.stats.overflow_rebases += 1
            w = raw_weight(action, self.params)
        old = self.edges[u_r].get(u_e, 0.0)
        if not w > old * (1.0 + INCREASE_RTOL):
            self.stats.short_circuits += 1
            return
        self.edges[u_r][u_e] = w
        self.stats.edge_increases += 1
        k, eps = self.params.k, self.params.epsilon
        f_ur = sum(self.edges[u_r].values())
        for qid in sorted(self.related(u_r)):
            sieve = self.sieves[qid]
            if f_ur > sieve.m:
                self._retile(sieve, f_ur)
            decisions = {}
            for i in sorted(sieve.sets):
                current = sieve.sets[i]
                if len(current) >= k or u_r in current:
                    continue
                delta = self.gain(u_r, current)
                if delta >= (self.threshold(i) / 2.0 - self.influence(current)) / (k - len(current)):
                    decisions[i] = tuple(sorted(current + (u_r,)))
            sieve.sets.update(decisions)

    def _retile(self, sieve: _Sieve, m: float):
        b, eps, k = self.b, self.params.epsilon, self.params.k
        top = 2 * k * m
        lo = math.floor(math.log(m / b) / math.log1p(eps))
        while b * (1.0 + eps) ** lo > m:
            lo -= 1
        while b * (1.0 + eps) ** lo <= m:
            lo += 1
        hi = math.floor(math.log(top / b) / math.log1p(eps))
        while b * (1.0 + eps) ** hi > top:
            hi -= 1
        while b * (1.0 + eps) ** (hi + 1) <= top:
            hi += 1
        sieve.sets = {i: s for i, s in sieve.sets.items() if i >= lo}
        for i in range(lo, hi + 1):
            sieve.sets.setdefault(i, ())
        sieve.m = m

    def time_decay(self, t_cur: int):
        if t_cur < self.params.t0:
            raise ContractViolation(f"t_cur={t_cur} precedes t0={self.params.t0}")
        lam, eps = self.params.lam, self.params.epsilon
        d = math.exp(-2.0 * lam * (t_cur - self.params.t0))
        b = self.b * d
        if b >= sys.float_info.min:
            j = _nearest_power(math.log(b), eps)
            self.b = b * (1.0 + eps) ** j
        else:
            log_b = math.log(self.b) - 2.0 * lam * (t_cur - self.params.t0)
            j = _nearest_power(log_b, eps)
            self.b = math.exp(log_b + j * math.log1p(eps))
        if d != 1.0:
            for slots in self.edges.values():
                for v in slots:
                    slots[v] *= d
        for sieve in self.sieves.values():
            sieve.m *= d
            if sieve.m <= 0.0:
                sieve.m, sieve.sets = 0.0, {}
            else:
                sieve.sets = {i - j: s for i, s in sieve.sets.items()}
        self.params.t0 = t_cur
        self.stats.rebases += 1

    def maybe_time_decay(self, t_cur: Optional[int] = None) -> bool:
        t_cur = self.clock if t_cur is None else t_cur
        if t_cur is None:
            return False
        top = max((sum(slots.values()) for slots in self.edges.values()), default=0.0)
        if top < self.params.tau_f:
            return False
        self.time_decay(t_cur)
        return True

    def push_results(self, t_cur: Optional[int] = None) -> List[ResultRecord]:
        t_cur = self.clock if t_cur is None else t_cur
        if t_cur is None:
            t_cur = self.params.t0
        factor = math.exp(-2.0 * self.params.lam * (t_cur - self.params.t0))
        held = sorted({s for sieve in self.sieves.values() for s in sieve.sets.values() if s})
        records = []
        for q in self.queries:
            best = None
            for users in held:
                if all(q.qid in self.related(u) for u in users):
                    candidate = Selection(users, self.influence(users))
                    if prefer(candidate, best):
                        best = candidate
            best = best or Selection((), 0.0)
            for sid in q.subscribers:
                subscription = self.subscriptions[sid]
                subscription.result_set = best.users
                subscription.result_value = best.value * factor
                records.append(ResultRecord(sid, t_cur, self.params.k, best.users, subscription.result_value))
        records.sort(key=lambda r: r.subscription_id)
        return records

    def emit(self, t_cur: Optional[int] = None) -> List[ResultRecord]:
        self.maybe_time_decay(t_cur)
        records = self.push_results(t_cur)
        self.stats.emissions += 1
        self.schedule.emitted()
        return records

    def flush(self) -> List[ResultRecord]:
        if self.clock is None or self.schedule.pending == 0:
            return []
        return self.emit()

    def assignments(self) -> Dict[Tuple[int, int], Tuple[int, ...]]:
        return {(qid, i): s for qid, sieve in self.sieves.items() for i, s in sieve.sets.items()}


def naive_multi_sieve(
    actions: Iterable[Action],
    profiles: Mapping[int, UserProfile],
    subscriptions: Mapping[int, Subscription],
    params: DecayParams,
    **kwargs,
) -> List[ResultRecord]:
    return run_stream(NaiveMultiSieve(params, profiles, subscriptions, **kwargs), actions)


def eager_decay_engine(
    actions: Iterable[Action],
    profiles: Mapping[int, UserProfile],
    subscriptions: Mapping[int, Subscription],
    params: DecayParams,
    **kwargs,
) -> List[ResultRecord]:
    return run_stream(NaiveMultiSieve(params, profiles, subscriptions, eager=True, **kwargs), actions)
