"""Per-subscription estimation ladders and the estimation-shift rebase.

Every estimation is a lattice point ``b * (1 + epsilon) ** index``. The base
``b`` is global, so a rebase multiplies all ladders by the same factor ``d``
simply by folding ``d`` into ``b`` and renormalizing ``b`` back near 1 with an
integer index shift.
"""
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Tuple

from SUBIM.influence import DecayParams, InfluenceStore, current_decay_factor
from SUBIM.utils import ContractViolation


class Estimation:
    """One threshold guess of the optimum, linked to the path holding its candidate set."""

    __slots__ = ("owner", "index", "value", "payload")

    def __init__(self, owner: int, index: int, value: float):
        self.owner = owner
        self.index = index
        self.value = value
        self.payload = None

    @property
    def key(self) -> Tuple[int, int]:
        return self.owner, self.index

    def __repr__(self):
        return f"Estimation(owner={self.owner}, index={self.index}, value={self.value:.6g})"


@dataclass
class ShiftState:
    params: DecayParams
    b: float = 1.0

    def value(self, index: int) -> float:
        return self.b * (1.0 + self.params.epsilon) ** index


@dataclass
class EstimationLadder:
    owner: int
    m: float = 0.0
    estimations: Dict[int, Estimation] = field(default_factory=dict)

    def __iter__(self):
        return (self.estimations[i] for i in sorted(self.estimations))

    def __len__(self):
        return len(self.estimations)

    def values(self) -> List[float]:
        return [e.value for e in self]


def ladder_indices(b: float, m: float, k: int, eps: float) -> range:
    """Lattice indices ``i`` with ``m < b * (1 + eps) ** i <= 2 * k * m``."""
    if not (b > 0 and m > 0 and k >= 1):
        raise ContractViolation(f"Ladder needs b > 0, m > 0, k >= 1 (got b={b}, m={m}, k={k})")
    step = math.log1p(eps)
    top = 2 * k * m
    lo = math.floor(math.log(m / b) / step)
    while b * (1.0 + eps) ** lo > m:
        lo -= 1
    while b * (1.0 + eps) ** lo <= m:
        lo += 1
    hi = math.floor(math.log(top / b) / step)
    while b * (1.0 + eps) ** hi > top:
        hi -= 1
    while b * (1.0 + eps) ** (hi + 1) <= top:
        hi += 1
    return range(lo, hi + 1)


def ladder_range(b: float, m: float, k: int, eps: float) -> List[float]:
    return [b * (1.0 + eps) ** i for i in ladder_indices(b, m, k, eps)]


def sieve_accept(delta: float, e: float, f_s: float, size_s: int, k: int) -> bool:
    if size_s >= k:
        raise ContractViolation(f"Sieve asked about a full set (|S|={size_s}, k={k})")
    return delta >= (e / 2.0 - f_s) / (k - size_s)


def refresh_ladder(
    ladder: EstimationLadder, new_m: float, shift: ShiftState
) -> Tuple[List[Estimation], List[Estimation]]:
    """Re-tile ``ladder`` over ``(new_m, 2k new_m]``.

    Returns the created and the expired estimations. The caller links the created
    ones to the empty path and releases the paths of the expired ones.
    """
    if new_m < ladder.m:
        raise ContractViolation(f"Ladder maximum cannot shrink ({ladder.m} -> {new_m})")
    if new_m == ladder.m:
        return [], []
    params = shift.params
    span = ladder_indices(shift.b, new_m, params.k, params.epsilon)
    expired = [ladder.estimations.pop(i) for i in sorted(ladder.estimations) if i < span.start]
    created = []
    for i in span:
        if i not in ladder.estimations:
            est = Estimation(ladder.owner, i, shift.value(i))
            ladder.estimations[i] = est
            created.append(est)
    ladder.m = new_m
    return created, expired


def nearest_exponent(log_b: float, eps: float) -> int:
    """Integer ``j`` minimizing ``|log_b + j * log(1 + eps)|``, ties toward smaller ``|j|``."""
    x = -log_b / math.log1p(eps)
    j = math.floor(x)
    frac = x - j
    if frac > 0.5:
        return j + 1
    if frac < 0.5:
        return j
    return j if abs(j) <= abs(j + 1) else j + 1


def choose_shift_exponent(b: float, eps: float) -> int:
    if not b > 0:
        raise ContractViolation(f"Shift base must be positive, got {b}")
    return nearest_exponent(math.log(b), eps)


def horizon_bound(m: float, k: int, lam: float, tau_d: float) -> float:
    if not (m > 0 and k > 0 and lam > 0 and tau_d > 0):
        raise ContractViolation("horizon_bound needs positive arguments")
    return math.log(2 * k * m / tau_d) / (2.0 * lam)


class DecayOutcome(NamedTuple):
    d: float
    j: int
    expired: List[Estimation]


def time_decay(
    t_cur: int,
    shift: ShiftState,
    store: InfluenceStore,
    ladders: Iterable[EstimationLadder],
    payloads: Iterable,
) -> DecayOutcome:
    """Move the base time to ``t_cur``, scaling every raw quantity by ``d``.

    ``payloads`` are objects with ``f`` and ``marg`` attributes (prefix-tree paths).
    Ladders keep their estimations and links; only the lattice indices shift, so
    any map keyed by estimation index must be rebuilt by the caller.
    When ``d`` underflows a ladder's maximum to zero, its estimations are expired.
    """
    params = shift.params
    d = current_decay_factor(t_cur, params)
    eps = params.epsilon
    b = shift.b * d
    if b >= sys.float_info.min:
        j = choose_shift_exponent(b, eps)
        shift.b = b * (1.0 + eps) ** j
    else:
        # b*d left the normal float range, renormalize in log space
        log_b = math.log(shift.b) - 2.0 * params.lam * (t_cur - params.t0)
        j = nearest_exponent(log_b, eps)
        shift.b = math.exp(log_b + j * math.log1p(eps))
    store.rebase_all(d)
    expired = []
    for ladder in ladders:
        ladder.m *= d
        if ladder.m <= 0.0:
            expired.extend(ladder.estimations[i] for i in sorted(ladder.estimations))
            ladder.estimations = {}
            ladder.m = 0.0
            continue
        shifted = {}
        for i, est in ladder.estimations.items():
            est.index = i - j
            est.value = shift.value(est.index)
            shifted[est.index] = est
        ladder.estimations = shifted
    for payload in payloads:
        payload.f *= d
        payload.marg *= d
    params.t0 = t_cur
    logging.debug(f"Rebased to t0={t_cur}: d={d:.6g}, j={j}, b={shift.b:.6g}")
    return DecayOutcome(d, j, expired)
