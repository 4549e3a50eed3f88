import itertools
import math

import numpy as np
import pytest

from SUBIM.data_gen import random_actions, random_instance
from SUBIM.engine import EmissionSchedule, run_stream
from SUBIM.influence import Action, DecayParams
from SUBIM.oracle import (
    MAX_EXHAUSTIVE_USERS,
    NaiveMultiSieve,
    coverage,
    decayed_edges,
    eager_decay_engine,
    exhaustive_opt,
    greedy,
    naive_multi_sieve,
)
from tests.common import clone, naive_engine


@pytest.fixture
def edges():
    return {1: {10: 0.5, 11: 0.3}, 2: {10: 0.7}, 3: {12: 0.6}}


class TestExhaustive:
    def test_pair(self, edges):
        assert exhaustive_opt([1, 2, 3], 2, edges) == ((1, 3), pytest.approx(1.4))

    def test_single(self, edges):
        assert exhaustive_opt([1, 2, 3], 1, edges).users == (1,)

    def test_k_above_population(self, edges):
        best = exhaustive_opt([1, 2, 3], 5, edges)
        assert best.users == (1, 2, 3) and best.value == pytest.approx(1.6)

    def test_dominated_user_is_left_out(self):
        best = exhaustive_opt([1, 2], 2, {1: {10: 0.5}, 2: {10: 0.4}})
        assert best.users == (1,)

    def test_empty(self, edges):
        assert exhaustive_opt([], 3, edges) == ((), 0.0)

    def test_too_many_users(self):
        with pytest.raises(ValueError):
            exhaustive_opt(range(MAX_EXHAUSTIVE_USERS + 1), 2, {})


class TestGreedy:
    def test_example(self, edges):
        assert greedy([1, 2, 3], 2, edges) == ((1, 3), pytest.approx(1.4))

    def test_stops_without_gain(self):
        assert greedy([1, 2], 2, {1: {10: 0.5}, 2: {10: 0.4}}).users == (1,)

    @pytest.mark.parametrize("seed", range(10))
    def test_classic_bound(self, seed):
        rng = np.random.default_rng(seed)
        edges = {u: {int(v): float(rng.random()) for v in rng.choice(12, size=4, replace=False)} for u in range(8)}
        best = exhaustive_opt(range(8), 3, edges)
        assert greedy(range(8), 3, edges).value >= (1 - 1 / math.e) * best.value - 1e-12


class TestDecayedEdges:
    def test_max_of_decayed_actions(self):
        actions = [Action(1, 2, t_r=3, t_e=4), Action(1, 2, t_r=5, t_e=5), Action(2, 1, t_r=10, t_e=10)]
        edges = decayed_edges(actions, 0.1, 10)
        assert edges[1][2] == pytest.approx(math.exp(-1.0))
        assert edges[2][1] == 1.0
        assert coverage([1, 2], edges) == pytest.approx(1.0 + math.exp(-1.0))


class TestNaiveMultiSieve:
    def test_no_subscriptions(self):
        instance = random_instance(0, n_actions=30)
        params = DecayParams(k=2, epsilon=0.1)
        assert naive_multi_sieve(instance.actions, instance.profiles, {}, params) == []

    def test_held_sets_stay_related(self):
        instance = random_instance(1, n_actions=20)
        engine = naive_engine(instance, k=3, emit_every=0)
        run_stream(engine, instance.actions)
        for (qid, _), users in engine.assignments().items():
            assert all(qid in engine.related(u) for u in users)
            assert len(users) <= 3

    def test_eager_matches_lazy_on_constant_clock(self):
        rng = np.random.default_rng(5)
        instance = random_instance(5, n_actions=0)
        actions = [Action(a.influencer, a.influencee, t_r=40, t_e=40) for a in random_actions(rng, 12, 60)]
        lazy = run_stream(naive_engine(instance, k=3, emit_every=7), actions)
        eager = run_stream(naive_engine(instance, k=3, emit_every=7, eager=True), actions)
        assert lazy == eager

    def test_eager_rebase_count(self):
        instance = random_instance(2, n_actions=60)
        engine = naive_engine(instance, k=2, eager=True)
        run_stream(engine, instance.actions)
        clocks = list(itertools.accumulate((a.clock for a in instance.actions), max))
        assert engine.stats.rebases == len(set(clocks)) - 1

    def test_eager_wrapper(self):
        instance = random_instance(3, n_actions=40)
        params = DecayParams(k=2, epsilon=0.2)
        schedule = EmissionSchedule(every=10)
        records = eager_decay_engine(instance.actions, instance.profiles, clone(instance.subscriptions), params, schedule=schedule)
        assert len(records) == 4 * len(instance.subscriptions)
        assert params.t0 == max(a.clock for a in instance.actions)

    def test_results_are_related(self):
        instance = random_instance(4, n_subscriptions=4, n_actions=80)
        engine = NaiveMultiSieve(DecayParams(k=2, epsilon=0.2), instance.profiles, clone(instance.subscriptions))
        records = run_stream(engine, instance.actions)
        for record in records:
            keywords = instance.subscriptions[record.subscription_id].keywords
            assert all(keywords <= instance.profiles[u].keywords for u in record.users)


if __name__ == "__main__":
    pytest.main(["-v", __file__])
