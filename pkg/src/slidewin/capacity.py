"""Zero-error feedback capacity via the reduced min-plus recursion.

Work happens in the log_q domain: ``w(k, s) = log_q W(k, s)`` with per-edge
log-gain ``g(s, s')``. For NSE an erasure edge has gain 0 and an error-free
edge gain 1 (kept exact: integer sums, ``Fraction`` ratios); for NSS an error edge has gain
``1 - log_q(q-1)`` (a float unless q = 2).
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction
from typing import Optional, Sequence

from .channel import NSE, NSS, ChannelSpec, StateGraph, enumerate_states, is_strongly_connected

EXACT = "exact"
UPPER_BOUND = "upper_bound"
FLOAT_TOL = 1e-9


def log_q(x: float, q: int) -> float:
    return math.log(x) / math.log(q)


def error_gain(spec: ChannelSpec):
    """Log-gain of an edge carrying an error/erasure."""
    if spec.kind == NSE:
        return Fraction(0)
    if spec.q == 2:
        return Fraction(1)
    return 1.0 - log_q(spec.q - 1, spec.q)


@dataclass(frozen=True)
class GainGraph:
    graph: StateGraph
    out: tuple  # out[s] = ((successor, gain), ...) in label order

    @property
    def spec(self) -> ChannelSpec:
        return self.graph.spec

    @property
    def exact(self) -> bool:
        return all(isinstance(g, (int, Fraction)) for edges in self.out for _, g in edges)

    @cached_property
    def by_successor(self) -> tuple:
        """Edges sorted by successor index, so ties resolve to the lowest index."""
        return tuple(tuple(sorted(edges)) for edges in self.out)

    @property
    def max_gain(self):
        return max(g for edges in self.out for _, g in edges)

    def __len__(self):
        return len(self.out)


def gain_graph(graph: StateGraph) -> GainGraph:
    spec = graph.spec
    g_err = error_gain(spec)
    g_ok = 1 if isinstance(g_err, Fraction) else 1.0
    if isinstance(g_err, Fraction) and g_err.denominator == 1:
        g_err = int(g_err)  # plain ints keep exact DP fast
    out = tuple(tuple((t, g_err if e else g_ok) for e, t in edges) for edges in graph.succ)
    return GainGraph(graph, out)


def reduced_dp_step(g: GainGraph, w_prev: Sequence, with_argmin: bool = False):
    """One min-plus step ``w(s) = min_{s'} g(s, s') + w_prev(s')``.

    Ties go to the lowest successor index.
    """
    if len(w_prev) != len(g):
        raise ValueError(f"expected {len(g)} values, got {len(w_prev)}")
    w, choice = [], []
    for edges in g.by_successor:
        best, arg = None, None
        for t, gain in edges:
            v = gain + w_prev[t]
            if best is None or v < best:
                best, arg = v, t
        w.append(best)
        choice.append(arg)
    return (w, choice) if with_argmin else w


@dataclass
class DPTrajectory:
    k_max: int
    w: list  # w[k][s], k = 0..k_max
    argmin_state: list  # per k, lowest-index minimiser of w[k]

    @property
    def rate_estimates(self) -> list:
        """``(1/k) min_s w(k, s)`` for k = 1..k_max."""
        return [_ratio(min(self.w[k]), k) for k in range(1, self.k_max + 1)]

    @property
    def estimate(self):
        return _ratio(min(self.w[self.k_max]), self.k_max)


def _ratio(a, b):
    return Fraction(a, b) if isinstance(a, (int, Fraction)) else a / b


def dp_capacity(g: GainGraph, k_max: int) -> DPTrajectory:
    if k_max < len(g):
        raise ValueError(f"k_max={k_max} must be at least |S|={len(g)}")
    zero = 0 if g.exact else 0.0
    w = [[zero] * len(g)]
    for _ in range(k_max):
        w.append(reduced_dp_step(g, w[-1]))
    argmin = [min(range(len(g)), key=lambda s, row=row: (row[s], s)) for row in w]
    return DPTrajectory(k_max, w, argmin)


@dataclass
class MeanCycle:
    value: object  # Fraction when gains are exact
    cycle: list  # state indices, smallest first, not repeated at the end
    gains: list


def _close(a, b, exact):
    return a == b if exact else abs(a - b) <= FLOAT_TOL


def min_mean_cycle(g: GainGraph) -> MeanCycle:
    """Exact minimum cycle mean (Karp) and a shortest cycle attaining it."""
    if not is_strongly_connected(g.graph):
        raise ValueError("minimum mean cycle requires a strongly connected state graph")
    k = len(g)
    exact = g.exact
    inf = None
    preds = [[] for _ in range(k)]
    for u, edges in enumerate(g.out):
        for v, gain in edges:
            preds[v].append((u, gain))

    # D[j][v]: least weight of a length-j walk ending at v (from any start).
    zero = 0 if exact else 0.0
    D = [[zero] * k]
    for _ in range(k):
        prev = D[-1]
        row = []
        for v in range(k):
            best = inf
            for u, gain in preds[v]:
                if prev[u] is not inf:
                    c = prev[u] + gain
                    if best is inf or c < best:
                        best = c
            row.append(best)
        D.append(row)

    lam = None
    for v in range(k):
        if D[k][v] is inf:
            continue
        worst = None
        for j in range(k):
            if D[j][v] is inf:
                continue
            r = _ratio(D[k][v] - D[j][v], k - j)
            if worst is None or r > worst:
                worst = r
        if worst is not None and (lam is None or worst < lam):
            lam = worst

    # Potentials for reduced costs; every minimum-mean cycle is tight under them.
    pot = [zero] * k
    for _ in range(k):
        changed = False
        for u, edges in enumerate(g.out):
            for v, gain in edges:
                c = pot[u] + gain - lam
                if c < pot[v] and not _close(c, pot[v], exact):
                    pot[v] = c
                    changed = True
        if not changed:
            break
    tight = [
        sorted(v for v, gain in edges if _close(pot[u] + gain - lam, pot[v], exact))
        for u, edges in enumerate(g.out)
    ]

    cycle = None
    for s in range(k):
        parent = {s: None}
        todo = deque([s])
        found = None
        while todo and found is None:
            u = todo.popleft()
            for v in tight[u]:
                if v == s:
                    found = u
                    break
                if v not in parent:
                    parent[v] = u
                    todo.append(v)
        if found is None:
            continue
        path = [found]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        path.reverse()
        if cycle is None or len(path) < len(cycle):
            cycle = path
    if cycle is None:  # pragma: no cover - guarded by strong connectivity
        raise RuntimeError("no tight cycle found")

    gains = []
    for i, u in enumerate(cycle):
        v = cycle[(i + 1) % len(cycle)]
        gains.append(min(gain for t, gain in g.out[u] if t == v))
    return MeanCycle(lam, cycle, gains)


def closed_form_c0f(spec: ChannelSpec):
    """Closed-form C0f and whether it is exact or only an upper bound."""
    if spec.kind == NSE:
        return Fraction(spec.n - spec.d, spec.n), EXACT
    if 2 * spec.d >= spec.n:
        return Fraction(0), EXACT
    if spec.q == 2:
        return Fraction(1), UPPER_BOUND
    return 1.0 - spec.d / spec.n * log_q(spec.q - 1, spec.q), UPPER_BOUND


def verify_sm_recurrence(g: GainGraph, traj: DPTrajectory, burn_in: Optional[int] = None) -> bool:
    """Check the periodic structure of the NSE value iteration.

    (i) ``w(k, s) = (n - d) + w(k - n, s)`` for states at full budget and
    ``k >= burn_in`` (default ``n``); (ii) the all-clear state attains
    ``min_s w(k, s)`` at every k; (iii) ``w(k, clear) = 0`` for ``k <= d``.
    """
    spec = g.spec
    if spec.kind != NSE:
        raise ValueError("recurrence check applies to NSE channels")
    n, d = spec.n, spec.d
    if traj.k_max < 2 * n + d:
        raise ValueError("trajectory too short: need k_max >= 2n + d")
    graph = g.graph
    full = [s for s, win in enumerate(graph.states) if d > 0 and sum(win) == d]
    start = n if burn_in is None else burn_in
    for k in range(max(start, n), traj.k_max + 1):
        for s in full:
            if traj.w[k][s] != (n - d) + traj.w[k - n][s]:
                return False
    c = graph.clear
    for k in range(traj.k_max + 1):
        if traj.w[k][c] != min(traj.w[k]):
            return False
    return all(traj.w[k][c] == 0 for k in range(1, d + 1))


def _simplex(q: int, resolution: int):
    for cut in itertools.combinations(range(resolution + q - 1), q - 1):
        parts, last = [], -1
        for c in cut:
            parts.append(c - last - 1)
            last = c
        parts.append(resolution + q - 2 - last)
        yield [Fraction(p, resolution) for p in parts]


def dp_step_bruteforce(graph: StateGraph, w_prev: Sequence, resolution: int = 12) -> list:
    """Unreduced step: ``max_P min_{s'} W(s') / max_y P(G(y, s'|s))`` on a simplex grid.

    ``w_prev`` and the result are in log_q. Erasure edges confuse every input
    (G = X); NSS error edges confuse every input but the output (G = X minus y);
    error-free edges pin the input (G = {y}).
    """
    spec = graph.spec
    q = spec.q
    out = []
    for edges in graph.succ:
        best = None
        for P in _simplex(q, resolution):
            val = None
            for e, t in edges:
                if not e:
                    mass = max(P)
                elif spec.kind == NSE:
                    mass = Fraction(1)
                else:
                    mass = 1 - min(P)
                v = math.inf if mass == 0 else q ** float(w_prev[t]) / float(mass)
                val = v if val is None else min(val, v)
            best = val if best is None else max(best, val)
        out.append(log_q(best, q))
    return out


@dataclass
class CapacityReport:
    spec: ChannelSpec
    c0f_dp: Optional[float] = None
    c0f_mmc: object = None
    c0f_closed: object = None
    flag: str = EXACT
    witness_cycle: list = field(default_factory=list)
    convergence_gap: Optional[float] = None
    iterations: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "c0f_dp": self.c0f_dp,
            "c0f_mmc": number_json(self.c0f_mmc),
            "c0f_closed": number_json(self.c0f_closed),
            "flag": self.flag,
            "witness_cycle": self.witness_cycle,
            "convergence_gap": self.convergence_gap,
            "iterations": self.iterations,
        }


def number_json(v):
    """Exact rationals as ``{num, den}``; floats carry their tolerance."""
    if v is None:
        return None
    if isinstance(v, Fraction):
        return {"num": v.numerator, "den": v.denominator}
    return {"value": float(v), "tol": FLOAT_TOL}


def capacity_report(spec: ChannelSpec, methods=("dp", "mmc", "closed"), k_max: Optional[int] = None) -> CapacityReport:
    graph = enumerate_states(spec)
    g = gain_graph(graph)
    rep = CapacityReport(spec)
    rep.c0f_closed, rep.flag = closed_form_c0f(spec)
    if "mmc" in methods or "dp" in methods:
        mc = min_mean_cycle(g)
        rep.c0f_mmc = mc.value
        rep.witness_cycle = mc.cycle
    if "dp" in methods:
        k = k_max or 10 * len(g)
        traj = dp_capacity(g, k)
        rep.iterations = k
        rep.c0f_dp = float(traj.estimate)
        rep.convergence_gap = abs(float(traj.estimate) - float(rep.c0f_mmc))
    return rep
