"""Independent reference solvers used only by the tests."""

import itertools

import numpy as np
from scipy.optimize import linprog

GRID = 1e-3


def knapsack_lp(costs, values, budget):
    """Exact LP ``max v.g  s.t.  c.g <= budget, 0 <= g <= 1`` via HiGHS."""
    res = linprog(-np.asarray(values), A_ub=[costs], b_ub=[budget], bounds=[(0, 1)] * len(costs), method="highs")
    assert res.status == 0
    return -res.fun, res.x


def knapsack_grid(costs, values, budget, step=GRID):
    """Brute force over gamma vectors with every full section in {0, 1} and one
    fractional section on a ``step`` grid.

    Every optimal LP vertex has this shape, so the best value found is a lower
    bound within ``max(values) * step`` of the optimum.
    """
    costs = np.asarray(costs, float)
    values = np.asarray(values, float)
    n = len(costs)
    masks = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    used = masks @ costs
    base = masks @ values
    best = float(base[used <= budget + 1e-12].max())
    for j in range(n):
        free = (masks[:, j] == 0) & (used <= budget + 1e-12)
        room = np.clip(budget - used[free], 0.0, None)
        g = np.floor(np.minimum(room / costs[j], 1.0) / step + 1e-9) * step
        best = max(best, float((base[free] + g * values[j]).max()))
    return best


def grid_allocation(utilities, e_av, step):
    """Best total utility when every bus gets a multiple of ``step`` kWh
    (capped at its capacity) and the total stays within ``e_av``.

    Exhaustive over the grid, organised as a dynamic program over buses.
    """
    m = int(np.floor(e_av / step + 1e-9))
    units = np.arange(m + 1)
    best = np.zeros(m + 1)  # best[j]: max value using at most j units so far
    for u in utilities:
        gain = u(np.minimum(units * step, u.capacity))
        # new[j] = max_t best[j - t] + gain[t]
        table = np.full((m + 1, m + 1), -np.inf)
        for t in range(m + 1):
            table[t:, t] = best[: m + 1 - t] + gain[t]
        best = table.max(axis=1)
    return float(best[m])
