import string
from typing import Dict, Iterator, List, NamedTuple, Tuple

import numpy as np

from SUBIM.engine import Subscription, UserProfile
from SUBIM.influence import Action


class Instance(NamedTuple):
    profiles: Dict[int, UserProfile]
    subscriptions: Dict[int, Subscription]
    actions: List[Action]


def vocabulary(n_keywords: int) -> List[str]:
    letters = string.ascii_lowercase
    return [letters[i % 26] + (str(i // 26) if i >= 26 else "") for i in range(n_keywords)]


def random_profiles(
    rng: np.random.Generator, n_users: int, n_keywords: int, per_user: Tuple[int, int] = (1, 4)
) -> Dict[int, UserProfile]:
    words = vocabulary(n_keywords)
    profiles = {}
    for user in range(n_users):
        size = int(rng.integers(per_user[0], min(per_user[1], n_keywords) + 1))
        picked = rng.choice(n_keywords, size=size, replace=False)
        profiles[user] = UserProfile(user, frozenset(words[i] for i in picked))
    return profiles


def random_subscriptions(
    rng: np.random.Generator,
    profiles: Dict[int, UserProfile],
    n_subscriptions: int,
    per_query: Tuple[int, int] = (1, 2),
) -> Dict[int, Subscription]:
    """Subscriptions sampled from the keywords of random profiles, so each has a related user."""
    users = sorted(u for u, p in profiles.items() if p.keywords)
    assert users, "no profile has keywords"
    subscriptions = {}
    for sid in range(n_subscriptions):
        words = sorted(profiles[users[int(rng.integers(len(users)))]].keywords)
        size = int(rng.integers(per_query[0], min(per_query[1], len(words)) + 1))
        picked = rng.choice(len(words), size=size, replace=False)
        subscriptions[sid] = Subscription(sid, frozenset(words[i] for i in picked))
    return subscriptions


def random_actions(
    rng: np.random.Generator,
    n_influencers: int,
    n_actions: int,
    n_influencees: int = None,
    start: int = 0,
    max_step: int = 3,
    max_lag: int = 5,
) -> List[Action]:
    """Actions with a jittered non-decreasing clock; the response lags the post by up to ``max_lag``.

    Influencees are drawn from ``range(n_influencees)``, which overlaps the influencers.
    """
    n_influencees = n_influencees if n_influencees is not None else 2 * n_influencers
    actions = []
    clock = start
    for _ in range(n_actions):
        clock += int(rng.integers(0, max_step + 1))
        u_r = int(rng.integers(n_influencers))
        u_e = int(rng.integers(n_influencees - 1))
        if u_e >= u_r:
            u_e += 1
        lag = int(rng.integers(0, max_lag + 1))
        actions.append(Action(u_r, u_e, t_r=clock, t_e=max(clock - lag, 0)))
    return actions


def unix_stream(
    rng: np.random.Generator, n_users: int, n_actions: int, start: int = 1_600_000_000, rate: float = 2.0
) -> Iterator[Action]:
    """Endless-style stream with Unix-second timestamps and Poisson arrivals at ``rate`` per second."""
    clock = float(start)
    for _ in range(n_actions):
        clock += rng.exponential(1.0 / rate)
        u_r = int(rng.integers(n_users))
        u_e = int(rng.integers(n_users - 1))
        if u_e >= u_r:
            u_e += 1
        t_r = int(clock)
        yield Action(u_r, u_e, t_r=t_r, t_e=max(t_r - int(rng.integers(0, 60)), 0))


def random_instance(
    seed: int,
    n_users: int = 12,
    n_keywords: int = 4,
    n_subscriptions: int = 3,
    n_actions: int = 100,
    **kwargs,
) -> Instance:
    rng = np.random.default_rng(seed)
    profiles = random_profiles(rng, n_users, n_keywords)
    subscriptions = random_subscriptions(rng, profiles, n_subscriptions)
    actions = random_actions(rng, n_users, n_actions, **kwargs)
    return Instance(profiles, subscriptions, actions)
