"""Greedy scheduling baseline.

Builds the schedule slot by slot.  Contents are ranked by a per-slot score
(self demand plus demand deflectable from related contents, per unit of
size) and admitted in rank order: download fresh if both residual
capacities allow, otherwise keep last slot's copy one slot older if the
cache still has room and the age limit is not exceeded.  Non-cached
contents get the best recommendation columns available from the final
cache state of the slot.
"""

from __future__ import annotations

import numpy as np

from . import model
from .model import CachePlan, Instance, Solution


def greedy_score(inst: Instance, t: int, i: int) -> float:
    """Deflectable fresh-copy demand per unit size.

    Sums h[t, j] * p(j accepts i at age 0) over all contents j, where a
    content fully serves its own requests (the j = i term has weight 1).
    """
    total = float(inst.requests[t, i])
    for j in inst.reverse_relations[i]:
        total += float(inst.relations[j][i][0]) * float(inst.requests[t, j])
    return total / float(inst.size[i])


def greedy_schedule(inst: Instance) -> Solution:
    """Run the greedy heuristic over the whole horizon.

    Deterministic: score ties are broken toward the lower content id.
    """
    T, I = inst.num_slots, inst.num_contents
    aoi = np.full((T, I), -1, dtype=int)
    for t in range(T):
        cache_left = inst.cache_capacity
        backhaul_left = inst.backhaul_capacity
        scores = [greedy_score(inst, t, i) for i in range(I)]
        order = sorted(range(I), key=lambda i: (-scores[i], i))
        for i in order:
            if cache_left <= 0:
                break
            s = float(inst.size[i])
            if s <= backhaul_left and s <= cache_left:
                aoi[t, i] = 0
                cache_left -= s
                backhaul_left -= s
            elif t > 0 and aoi[t - 1, i] >= 0 and s <= cache_left:
                age = int(aoi[t - 1, i]) + 1
                if age <= int(inst.aoi_limit[i]):
                    aoi[t, i] = age
                    cache_left -= s
    return model.fill_recommendations(inst, CachePlan(aoi))
