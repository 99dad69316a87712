"""Exact transportation LP solver (simplex on the transportation polytope).

Intended for the tiny balanced problems that appear as linear subproblems of
the flow solver: supports have a handful of atoms, so a dense tableau with a
spanning-tree basis is both simple and exact. Forbidden cells (infinite
cost) are handled by a big-M substitution with a feasibility post-check.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InfeasibleError

_REDUCED_TOL = 1e-12
_BLAND_AFTER = 1000
_MAX_PIVOTS = 10_000


def _northwest_corner(supply: np.ndarray, demand: np.ndarray):
    m, n = len(supply), len(demand)
    s = supply.copy()
    d = demand.copy()
    alloc = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        q = min(s[i], d[j])
        alloc[i, j] = q
        basis.append((i, j))
        s[i] -= q
        d[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1:
            i += 1
        elif i == m - 1:
            j += 1
        elif s[i] <= 0:
            i += 1
        else:
            j += 1
    return alloc, basis


def _potentials(m: int, n: int, basis, cost: np.ndarray):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append((m + j, cost[i, j]))
        adj[m + j].append((i, cost[i, j]))
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    stack = [0]
    while stack:
        x = stack.pop()
        for y, c in adj[x]:
            if math.isnan(pot[y]):
                # u_i + v_j = c on basic cells
                pot[y] = c - pot[x]
                stack.append(y)
    if np.isnan(pot).any():
        raise RuntimeError("transportation basis is not a spanning tree")
    return pot[:m], pot[m:]


def _tree_path(m: int, basis, start_row: int, end_col: int):
    adj: dict[int, list] = {}
    for i, j in basis:
        adj.setdefault(i, []).append(m + j)
        adj.setdefault(m + j, []).append(i)
    target = m + end_col
    parent = {start_row: None}
    frontier = [start_row]
    while frontier and target not in parent:
        nxt = []
        for x in frontier:
            for y in adj.get(x, ()):
                if y not in parent:
                    parent[y] = x
                    nxt.append(y)
        frontier = nxt
    if target not in parent:
        raise RuntimeError("entering cell closes no cycle; basis is corrupt")
    nodes = [target]
    while parent[nodes[-1]] is not None:
        nodes.append(parent[nodes[-1]])
    nodes.reverse()
    cells = []
    for a, b in zip(nodes, nodes[1:]):
        if a < m:
            cells.append((a, b - m))
        else:
            cells.append((b, a - m))
    return cells


def solve_transportation(supply, demand, cost):
    """Minimize sum c[i,j] x[i,j] over the transportation polytope.

    ``supply`` and ``demand`` must be positive and (near-)balanced; ``cost``
    may contain +inf for forbidden pairings. Raises InfeasibleError when no
    plan avoids the forbidden cells. Returns the allocation matrix.
    """
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = len(supply), len(demand)
    if cost.shape != (m, n):
        raise ValueError("cost shape does not match supply/demand")
    if np.any(supply <= 0) or np.any(demand <= 0):
        raise ValueError("supports must carry positive mass")
    if abs(supply.sum() - demand.sum()) > 1e-9 * max(1.0, supply.sum()):
        raise ValueError("supply and demand are not balanced")
    forbidden = ~np.isfinite(cost)
    if forbidden.any():
        finite_max = cost[~forbidden].max() if (~forbidden).any() else 1.0
        big = 1e9 * (1.0 + abs(finite_max))
        cost = np.where(forbidden, big, cost)

    alloc, basis = _northwest_corner(supply, demand)
    basis_set = set(basis)
    for pivot in range(_MAX_PIVOTS):
        u, v = _potentials(m, n, basis, cost)
        reduced = cost - u[:, None] - v[None, :]
        entering = None
        if pivot < _BLAND_AFTER:
            best = -_REDUCED_TOL
            for i in range(m):
                for j in range(n):
                    if (i, j) not in basis_set and reduced[i, j] < best:
                        best = reduced[i, j]
                        entering = (i, j)
        else:
            for i in range(m):
                for j in range(n):
                    if (i, j) not in basis_set and reduced[i, j] < -_REDUCED_TOL:
                        entering = (i, j)
                        break
                if entering:
                    break
        if entering is None:
            break
        path = _tree_path(m, basis, entering[0], entering[1])
        minus = path[0::2]
        plus = path[1::2]
        theta = min(alloc[c] for c in minus)
        leaving = next(c for c in minus if alloc[c] == theta)
        alloc[entering] += theta
        for c in plus:
            alloc[c] += theta
        for c in minus:
            alloc[c] -= theta
        alloc[leaving] = 0.0
        basis[basis.index(leaving)] = entering
        basis_set.remove(leaving)
        basis_set.add(entering)
    else:
        raise RuntimeError("transportation simplex exceeded its pivot budget")

    if forbidden.any() and np.any(alloc[forbidden] > 1e-9):
        raise InfeasibleError("demand cannot be met: some required pair is disconnected")
    return alloc
