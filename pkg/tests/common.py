import math
from pathlib import Path

from SUBIM.engine import EmissionSchedule, Subscription, SubscriptionEngine
from SUBIM.influence import DecayParams
from SUBIM.oracle import NaiveMultiSieve

FIXTURE = Path(__file__).resolve().parents[1] / "SUBIM" / "examples" / "fixture"


def clone(subscriptions):
    return {sid: Subscription(s.id, s.keywords) for sid, s in subscriptions.items()}


def prefix_engine(instance, k=2, epsilon=0.1, lam=0.1, tau_f=1e18, emit_every=10, base=1.0, **flags):
    params = DecayParams(lam=lam, tau_f=tau_f, epsilon=epsilon, k=k)
    schedule = EmissionSchedule(every=emit_every)
    return SubscriptionEngine(params, instance.profiles, clone(instance.subscriptions), base=base, schedule=schedule, **flags)


def naive_engine(instance, k=2, epsilon=0.1, lam=0.1, tau_f=1e18, emit_every=10, base=1.0, eager=False):
    params = DecayParams(lam=lam, tau_f=tau_f, epsilon=epsilon, k=k)
    schedule = EmissionSchedule(every=emit_every)
    return NaiveMultiSieve(params, instance.profiles, clone(instance.subscriptions), base=base, schedule=schedule, eager=eager)


def assert_records_match(left, right, rtol=1e-9, floor=1e-200):
    """Same emissions; values agree within ``rtol``; sets agree wherever the value is above ``floor``."""
    assert len(left) == len(right)
    for a, b in zip(left, right):
        assert (a.subscription_id, a.timestamp, a.k) == (b.subscription_id, b.timestamp, b.k)
        assert math.isclose(a.value, b.value, rel_tol=rtol, abs_tol=floor), (a, b)
        if max(a.value, b.value) > floor:
            assert a.users == b.users, (a, b)
