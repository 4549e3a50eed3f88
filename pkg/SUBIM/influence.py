"""Time-decaying pairwise influence kept in a lazy base-time representation.

An action ``a = (u_r -> u_e, t_r, t_e)`` contributes the true weight
``exp(-lam * ((t - t_e) + (t - t_r)))`` at time ``t``. The store keeps the raw
value ``exp(lam * (t_e + t_r - 2 * t0))`` instead, so that nothing has to be
touched while time passes: multiplying by ``current_decay_factor(t)`` recovers
the true weight.
"""
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, NamedTuple

from SUBIM.utils import ContractViolation, RebaseRequired

# exp(600) is ~1e260: raw weights above it would overflow once summed or scaled
MAX_EXPONENT = 600.0
# relative margin a new weight has to clear to count as an increase
INCREASE_RTOL = 1e-12


@dataclass(frozen=True)
class Action:
    influencer: int
    influencee: int
    t_r: int
    t_e: int

    def __post_init__(self):
        if self.influencer == self.influencee:
            raise ContractViolation(f"Self-action on user {self.influencer}")
        if self.t_r < 0 or self.t_e < 0:
            raise ContractViolation(f"Negative timestamp in {self}")

    @property
    def clock(self) -> int:
        return max(self.t_r, self.t_e)


@dataclass
class DecayParams:
    """Decay and sieve constants shared by every engine.

    Args:
        lam: decay constant per time unit, strictly positive.
        t0: base timestamp of the raw representation, moved by every rebase.
        tau_f: a rebase is due once some user's raw influence reaches it.
        tau_d: detection floor, decayed values below it are indistinguishable from zero.
        epsilon: sieve approximation parameter in (0, 0.5).
        k: seed-set size.
    """

    lam: float = 0.1
    t0: int = 0
    tau_f: float = 1e18
    tau_d: float = 1e-9
    epsilon: float = 0.1
    k: int = 50

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.lam > 0:
            raise ContractViolation(f"lam must be positive, got {self.lam}")
        if not 0 < self.epsilon < 0.5:
            raise ContractViolation(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if not 0 < self.tau_d < 1:
            raise ContractViolation(f"tau_d must lie in (0, 1), got {self.tau_d}")
        if not self.tau_f > 1:
            raise ContractViolation(f"tau_f must exceed 1, got {self.tau_f}")
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ContractViolation(f"k must be a positive integer, got {self.k}")


def raw_weight(action: Action, params: DecayParams) -> float:
    exponent = params.lam * (action.t_e + action.t_r - 2 * params.t0)
    if exponent > MAX_EXPONENT:
        raise RebaseRequired(f"Raw weight exponent {exponent:.1f} relative to t0={params.t0}")
    try:
        return math.exp(exponent)
    except OverflowError as e:
        raise RebaseRequired(str(e)) from e


def current_decay_factor(t_cur: int, params: DecayParams) -> float:
    if t_cur < params.t0:
        raise ContractViolation(f"t_cur={t_cur} precedes t0={params.t0}")
    return math.exp(-2.0 * params.lam * (t_cur - params.t0))


class EdgeUpdate(NamedTuple):
    weight: float
    previous: float
    increased: bool


class InfluenceStore:
    """Max-merged edge weights and per-influencer totals, all in raw units.

    ``edges[u]`` is the coverage map of influencer ``u``: influencee -> weight.
    Influencees never seen as influencers still occupy coverage slots.
    """

    def __init__(self):
        self.edges: Dict[int, Dict[int, float]] = {}
        self.totals: Dict[int, float] = {}
        self.max_total = 0.0

    def __len__(self):
        return len(self.edges)

    def users(self) -> Iterator[int]:
        return iter(self.edges)

    def weight(self, u: int, v: int) -> float:
        return self.edges.get(u, {}).get(v, 0.0)

    def influence(self, u: int) -> float:
        return self.totals.get(u, 0.0)

    def update_edge(self, u_r: int, u_e: int, w: float) -> EdgeUpdate:
        if u_r == u_e:
            raise ContractViolation(f"Self-edge on user {u_r}")
        if not w > 0:
            raise ContractViolation(f"Edge weight must be positive, got {w}")
        slots = self.edges.setdefault(u_r, {})
        old = slots.get(u_e, 0.0)
        if not w > old * (1.0 + INCREASE_RTOL):
            return EdgeUpdate(old, old, False)
        slots[u_e] = w
        total = self.totals.get(u_r, 0.0) + (w - old)
        self.totals[u_r] = total
        self.max_total = max(self.max_total, total)
        return EdgeUpdate(w, old, True)

    def cover(self, users: Iterable[int], v: int) -> float:
        """Influence of the set ``users`` over the single user ``v``."""
        return max((self.edges.get(u, {}).get(v, 0.0) for u in users), default=0.0)

    def set_influence(self, users: Iterable[int]) -> float:
        coverage: Dict[int, float] = {}
        for u in users:
            for v, w in self.edges.get(u, {}).items():
                if w > coverage.get(v, 0.0):
                    coverage[v] = w
        return sum(coverage.values())

    def marginal_gain(self, u: int, users: Iterable[int]) -> float:
        users = tuple(users)
        if u in users:
            return 0.0
        gain = 0.0
        for v, w in self.edges.get(u, {}).items():
            covered = self.cover(users, v)
            if w > covered:
                gain += w - covered
        return gain

    def rebase_all(self, d: float):
        """Scale every stored weight by ``d``.

        ``d == 0`` is accepted: a long enough clock gap underflows the decay factor
        and then every stored weight is zeroed.
        """
        if not 0 <= d <= 1:
            raise ContractViolation(f"Rebase factor must lie in [0, 1], got {d}")
        if d == 1.0:
            return
        for slots in self.edges.values():
            for v in slots:
                slots[v] *= d
        for u in self.totals:
            self.totals[u] *= d
        self.max_total *= d
