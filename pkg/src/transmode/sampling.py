"""Deterministic integer allocation helpers."""
from __future__ import annotations

import math
from typing import Sequence


def largest_remainder(total: int, weights: Sequence[float], caps: Sequence[int] | None = None) -> list[int]:
    """Split ``total`` into integers proportional to ``weights``.

    Each share is floored, then the leftover units go to the largest
    fractional parts; ties resolve to the lower index. With ``caps`` the
    result never exceeds a cap and any excess is re-allocated among the
    remaining uncapped entries.
    """
    n = len(weights)
    if total < 0:
        raise ValueError("total must be non-negative")
    if caps is not None and sum(caps) < total:
        raise ValueError("caps cannot accommodate total")
    alloc = [0] * n
    active = [i for i in range(n) if weights[i] > 0 and (caps is None or caps[i] > 0)]
    remaining = total
    while remaining > 0 and active:
        wsum = sum(weights[i] for i in active)
        quotas = {i: remaining * weights[i] / wsum for i in active}
        share = {i: math.floor(quotas[i] + 1e-12) for i in active}
        left = remaining - sum(share.values())
        order = sorted(active, key=lambda i: (-(quotas[i] - share[i]), i))
        for i in order[:left]:
            share[i] += 1
        overflow = 0
        for i in active:
            give = share[i]
            if caps is not None:
                give = min(give, caps[i] - alloc[i])
                overflow += share[i] - give
            alloc[i] += give
        remaining = overflow
        if caps is not None:
            active = [i for i in active if alloc[i] < caps[i]]
    if remaining > 0:
        raise ValueError("weights leave no room for the remaining units")
    return alloc
