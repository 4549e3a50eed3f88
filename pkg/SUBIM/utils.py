import math
from typing import Iterable, NamedTuple, Optional, Tuple

# Relative gap under which two influence values count as tied
TIE_RTOL = 1e-12


class ContractViolation(ValueError):
    """A caller broke the precondition of an operation."""


class RebaseRequired(ArithmeticError):
    """The base-time representation would leave the float range; rebase first."""


class Selection(NamedTuple):
    users: Tuple[int, ...]
    value: float


def prefer(candidate: Selection, incumbent: Optional[Selection]) -> bool:
    """Whether `candidate` beats `incumbent` as a subscription result.

    Larger influence wins; values within ``TIE_RTOL`` of each other are tied and
    the smaller set wins, then the lexicographically smaller one.
    """
    if incumbent is None:
        return True
    scale = max(abs(candidate.value), abs(incumbent.value))
    if candidate.value - incumbent.value > TIE_RTOL * scale:
        return True
    if incumbent.value - candidate.value > TIE_RTOL * scale:
        return False
    return (len(candidate.users), candidate.users) < (len(incumbent.users), incumbent.users)


def format_value(x: float) -> str:
    # 9 significant digits, '.' separator whatever the locale
    return f"{x:.9g}"


def format_ids(ids: Iterable) -> str:
    return ",".join(str(i) for i in ids)


def rel_close(a: float, b: float, rtol: float = 1e-9) -> bool:
    return math.isclose(a, b, rel_tol=rtol)
