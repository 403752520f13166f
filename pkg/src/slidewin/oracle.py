"""Finite-length zero-error codes: confusability graphs, exact maximum
independent sets, exhaustive verification and maximin information.

Words are tuples of base-q digits, most significant first; a word's vertex
index is its base-q value.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .channel import (
    NSE,
    NSS,
    ChannelSpec,
    ResourceCapError,
    admissible_patterns,
    channel_output,
    enumerate_states,
    shift,
)

MAX_VERTICES = 2**20
VERIFY_CAP = 10**7


def word_index(w: Sequence[int], q: int) -> int:
    v = 0
    for c in w:
        v = v * q + c
    return v


def index_word(i: int, q: int, t: int) -> tuple:
    digits = []
    for _ in range(t):
        i, r = divmod(i, q)
        digits.append(r)
    return tuple(reversed(digits))


def word_str(w: Sequence[int]) -> str:
    return "".join(np.base_repr(c, 36).lower() for c in w)


def parse_word_str(s: str) -> tuple:
    return tuple(int(c, 36) for c in s)


def support_admissible(spec: ChannelSpec, support: Sequence[int], initial=None) -> bool:
    """Whether errors exactly on ``support`` are admissible from ``initial``."""
    win = spec.clear_state if initial is None else tuple(initial)
    for b in support:
        win = shift(win, 1 if b else 0)
        if not spec.admissible(win):
            return False
    return True


def window_counts_ok(spec: ChannelSpec, support: Sequence[int], limit: int) -> bool:
    """Every length-n window (the whole block if shorter) holds at most ``limit`` ones."""
    t = len(support)
    width = min(spec.n, t)
    run = sum(support[:width])
    if run > limit:
        return False
    for i in range(width, t):
        run += support[i] - support[i - width]
        if run > limit:
            return False
    return True


def splittable(spec: ChannelSpec, support: Sequence[int]) -> bool:
    """Can the support be split between two patterns, each admissible from the clear state?"""
    support = tuple(1 if b else 0 for b in support)

    @lru_cache(maxsize=None)
    def go(i, wa, wb):
        if i == len(support):
            return True
        if not support[i]:
            return go(i + 1, shift(wa, 0), shift(wb, 0))
        na = shift(wa, 1)
        if spec.admissible(na) and go(i + 1, na, shift(wb, 0)):
            return True
        nb = shift(wb, 1)
        return spec.admissible(nb) and go(i + 1, shift(wa, 0), nb)

    return go(0, spec.clear_state, spec.clear_state)


def support_confusable(spec: ChannelSpec, support: Sequence[int]) -> bool:
    if not any(support):
        return False
    if spec.kind == NSE:
        return support_admissible(spec, support)
    if not window_counts_ok(spec, support, 2 * spec.d):
        return False
    return splittable(spec, support)


def adjacent(spec: ChannelSpec, x: Sequence[int], y: Sequence[int]) -> bool:
    """Confusability of two distinct input blocks from the all-clear state.

    NSE: the positions where they differ form an admissible erasure pattern.
    NSS: those positions split into two admissible error patterns, one per
    input (a position never needs errors on both sides).
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} != {len(y)}")
    return support_confusable(spec, [int(a != b) for a, b in zip(x, y)])


@dataclass
class ConfusabilityGraph:
    spec: ChannelSpec
    t: int
    nbrs: list  # nbrs[v]: neighbour bitset of vertex v

    @property
    def n_vertices(self) -> int:
        return len(self.nbrs)

    @property
    def n_edges(self) -> int:
        return sum(bin(b).count("1") for b in self.nbrs) // 2

    def word(self, v: int) -> tuple:
        return index_word(v, self.spec.q, self.t)

    def is_adjacent(self, u: int, v: int) -> bool:
        return bool(self.nbrs[u] >> v & 1)


def build_confusability(spec: ChannelSpec, t: int, max_vertices: int = MAX_VERTICES) -> ConfusabilityGraph:
    q = spec.q
    if q**t > max_vertices:
        raise ResourceCapError(f"q^t = {q ** t} exceeds vertex cap {max_vertices}")
    V = q**t
    masks = [m for m in itertools.product((0, 1), repeat=t) if support_confusable(spec, m)]
    digits = np.array([index_word(i, q, t) for i in range(V)], dtype=np.int64).reshape(V, t)
    powers = q ** np.arange(t - 1, -1, -1, dtype=np.int64)
    nbrs = [0] * V
    for m in masks:
        pos = [i for i, b in enumerate(m) if b]
        for offs in itertools.product(range(1, q), repeat=len(pos)):
            delta = np.zeros(t, dtype=np.int64)
            delta[pos] = offs
            ys = ((digits + delta) % q) @ powers
            for v, y in enumerate(ys.tolist()):
                nbrs[v] |= 1 << y
    return ConfusabilityGraph(spec, t, nbrs)


# -- maximum independent set ----------------------------------------------------


class _Timeout(Exception):
    pass


def _bits(b: int) -> Iterable[int]:
    while b:
        low = b & -b
        yield low.bit_length() - 1
        b ^= low


def _popcount(b: int) -> int:
    return bin(b).count("1")


def _clique_cover(P: int, nbrs: list) -> int:
    """Greedy clique cover size of the subgraph induced by P (bounds its independence number)."""
    cliques: list = []
    for v in _bits(P):
        for i, c in enumerate(cliques):
            if c & nbrs[v] == c:
                cliques[i] = c | (1 << v)
                break
        else:
            cliques.append(1 << v)
    return len(cliques)


def _greedy_mis(P: int, nbrs: list) -> list:
    chosen = []
    while P:
        v = min(_bits(P), key=lambda u: (_popcount(nbrs[u] & P), u))
        chosen.append(v)
        P &= ~(nbrs[v] | (1 << v))
    return chosen


def max_independent_set(nbrs: list, anchor: Optional[int] = None, time_limit: Optional[float] = None):
    """Exact maximum independent set by branch and bound.

    Returns ``(vertices, exact)``; ``exact`` is False only when ``time_limit``
    (seconds) ran out, in which case the best set found is returned.
    ``anchor`` forces a vertex into the solution, which is only safe when some
    maximum set contains it (e.g. vertex-transitive graphs).
    """
    V = len(nbrs)
    full = (1 << V) - 1
    deadline = None if time_limit is None else time.monotonic() + time_limit
    start, P0 = [], full
    if anchor is not None:
        start = [anchor]
        P0 &= ~(nbrs[anchor] | (1 << anchor))
    best = start + _greedy_mis(P0, nbrs)
    ticks = 0

    def expand(P, cur):
        nonlocal best, ticks
        ticks += 1
        if deadline is not None and ticks % 256 == 0 and time.monotonic() > deadline:
            raise _Timeout
        # vertices of degree <= 1 belong to some maximum set of the subgraph
        while P:
            forced = None
            for v in _bits(P):
                if _popcount(nbrs[v] & P) <= 1:
                    forced = v
                    break
            if forced is None:
                break
            cur = cur + [forced]
            P &= ~(nbrs[forced] | (1 << forced))
        if not P:
            if len(cur) > len(best):
                best = cur
            return
        if len(cur) + _popcount(P) <= len(best):
            return
        if len(cur) + _clique_cover(P, nbrs) <= len(best):
            return
        v = max(_bits(P), key=lambda u: (_popcount(nbrs[u] & P), -u))
        expand(P & ~(nbrs[v] | (1 << v)), cur + [v])
        expand(P & ~(1 << v), cur)

    try:
        expand(P0, start)
        exact = True
    except _Timeout:
        exact = False
    return sorted(best), exact


# -- codebooks ------------------------------------------------------------------


@dataclass
class Codebook:
    spec: ChannelSpec
    t: int
    codewords: list
    exact: bool = True
    verified: bool = False

    @property
    def size(self) -> int:
        return len(self.codewords)

    @property
    def rate(self) -> float:
        return math.log(self.size) / math.log(self.spec.q) / self.t

    def index_of(self, w: Sequence[int]) -> int:
        return self.codewords.index(tuple(w))

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "t": self.t,
            "codewords": [word_str(w) for w in self.codewords],
            "rate": self.rate,
            "exact": self.exact,
            "verified": self.verified,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Codebook":
        spec = ChannelSpec(**data["spec"])
        words = [parse_word_str(s) for s in data["codewords"]]
        t = int(data["t"])
        if any(len(w) != t or any(c >= spec.q for c in w) for w in words):
            raise ValueError("codeword length or alphabet does not match the codebook header")
        return cls(spec, t, words, bool(data.get("exact", False)), bool(data.get("verified", False)))


def max_codebook(graph: ConfusabilityGraph, time_limit: Optional[float] = None) -> Codebook:
    """Largest set of pairwise non-confusable blocks.

    Adjacency depends only on the difference of two words, so translations
    are automorphisms and the all-zero word can be fixed in the solution.
    """
    verts, exact = max_independent_set(graph.nbrs, anchor=0, time_limit=time_limit)
    return Codebook(graph.spec, graph.t, [graph.word(v) for v in verts], exact=exact)


def repetition_code(spec: ChannelSpec, length: Optional[int] = None) -> Codebook:
    t = spec.n if length is None else length
    return Codebook(spec, t, [(a,) * t for a in range(spec.q)])


def concatenate(code: Codebook, k: int) -> Codebook:
    words = [sum(parts, ()) for parts in itertools.product(code.codewords, repeat=k)]
    return Codebook(code.spec, code.t * k, words, exact=False)


def all_state_patterns(spec: ChannelSpec, t: int) -> set:
    """Error patterns of length t admissible from at least one initial state."""
    pats: set = set()
    for win in enumerate_states(spec).states:
        pats.update(admissible_patterns(spec, t, win))
    return pats


def find_collision(code: Codebook, cap: int = VERIFY_CAP):
    """First pair of codewords sharing an output, over every initial state
    and admissible pattern, as ``(i, j, output)``; None if zero-error."""
    spec = code.spec
    if len(code.codewords) <= 1:
        return None
    if spec.q**code.t > cap:
        raise ResourceCapError(f"q^t = {spec.q ** code.t} exceeds verification cap {cap}")
    pats = sorted(all_state_patterns(spec, code.t))
    if len(code.codewords) * len(pats) > cap:
        raise ResourceCapError("codebook verification exceeds cap")
    owner: dict = {}
    for i, x in enumerate(code.codewords):
        for e in pats:
            y = channel_output(spec, x, e)
            j = owner.setdefault(y, i)
            if j != i:
                return j, i, y
    return None


def verify_zero_error(code: Codebook, cap: int = VERIFY_CAP) -> bool:
    ok = find_collision(code, cap) is None
    code.verified = ok
    return ok


def max_errors_in_horizon(spec: ChannelSpec, N: int, initial=None) -> int:
    """Largest number of errors an admissible length-N pattern can carry."""
    if N < 0:
        raise ValueError("horizon must be non-negative")
    frontier = {spec.clear_state if initial is None else tuple(initial): 0}
    for _ in range(N):
        nxt: dict = {}
        for win, c in frontier.items():
            for e in (0, 1):
                w2 = shift(win, e)
                if spec.admissible(w2) and nxt.get(w2, -1) < c + e:
                    nxt[w2] = c + e
        frontier = nxt
    return max(frontier.values())


# -- maximin information ------------------------------------------------------------


@dataclass
class TaxicabPartition:
    components: list  # lists of (x, y) points
    x_partition: list  # x-values of each component
    i_star: float


def taxicab_partition(jr: Iterable, q: int = 2) -> TaxicabPartition:
    """Finest taxicab-isolated partition of a finite joint range.

    Points are connected when they share an x or a y coordinate.
    """
    points = list(dict.fromkeys(jr))
    if not points:
        raise ValueError("joint range is empty")
    parent: dict = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for x, y in points:
        kx, ky = ("x", x), ("y", y)
        parent.setdefault(kx, kx)
        parent.setdefault(ky, ky)
        rx, ry = find(kx), find(ky)
        if rx != ry:
            parent[ry] = rx
    groups: dict = {}
    for p in points:
        groups.setdefault(find(("x", p[0])), []).append(p)
    comps = list(groups.values())
    xparts = [list(dict.fromkeys(x for x, _ in c)) for c in comps]
    return TaxicabPartition(comps, xparts, math.log(len(comps)) / math.log(q))


@dataclass
class MaximinRow:
    t: int
    block: int
    components: int
    i_star: float
    rate: float
    codebook_size: int
    codebook_rate: float
    exhaustive: bool
    agree: bool
    inputs: list = field(default_factory=list, repr=False)


def _max_components(overlap: list) -> tuple:
    """Exhaustive max over input subsets of the number of overlap components."""
    m = len(overlap)
    best, best_set = 0, 0
    for S in range(1, 1 << m):
        if _popcount(S) <= best:
            continue
        rem, comps = S, 0
        while rem:
            low = rem & -rem
            comp, frontier = low, low
            while frontier:
                u = (frontier & -frontier).bit_length() - 1
                frontier &= frontier - 1
                new = overlap[u] & rem & ~comp
                comp |= new
                frontier |= new
            rem &= ~comp
            comps += 1
        if comps > best:
            best, best_set = comps, S
    return best, best_set


def c0_via_maximin(spec: ChannelSpec, t_max: int, exhaustive_cap: int = 16, time_limit: Optional[float] = None) -> list:
    """Block rates ``I*[X(0:t); Y(0:t)] / (t+1)`` for t = 0..t_max.

    The sup over input ranges is searched exhaustively when there are at most
    ``exhaustive_cap`` input blocks; otherwise the maximum codebook is used as
    the input range. Either way the result is compared with the independent
    set route.
    """
    rows = []
    q = spec.q
    for t in range(t_max + 1):
        L = t + 1
        pats = admissible_patterns(spec, L)
        words = list(itertools.product(range(q), repeat=L))
        outs = [{channel_output(spec, x, e) for e in pats} for x in words]
        code = max_codebook(build_confusability(spec, L), time_limit=time_limit)
        exhaustive = len(words) <= exhaustive_cap
        if exhaustive:
            overlap = [
                sum(1 << j for j in range(len(words)) if outs[i] & outs[j]) for i in range(len(words))
            ]
            _, chosen = _max_components(overlap)
            inputs = [words[i] for i in _bits(chosen)]
        else:
            inputs = list(code.codewords)
        jr = [(x, y) for x in inputs for y in sorted(outs[word_index(x, q)], key=repr)]
        part = taxicab_partition(jr, q)
        n_comp = len(part.components)
        rows.append(
            MaximinRow(
                t=t,
                block=L,
                components=n_comp,
                i_star=part.i_star,
                rate=part.i_star / L,
                codebook_size=code.size,
                codebook_rate=code.rate,
                exhaustive=exhaustive,
                agree=n_comp == code.size,
                inputs=inputs,
            )
        )
    return rows


def best_codebook(spec: ChannelSpec, t_max: int = 6, max_vertices: int = 4096, time_limit: Optional[float] = None) -> Codebook:
    """Highest-rate verified maximum codebook over block lengths 1..t_max (ties: shortest)."""
    best = None
    for t in range(1, t_max + 1):
        if spec.q**t > max_vertices:
            break
        code = max_codebook(build_confusability(spec, t), time_limit=time_limit)
        if best is None or code.rate > best.rate + 1e-12:
            best = code
    if best is None:
        raise ResourceCapError("no block length fits the vertex cap")
    if not verify_zero_error(best):
        raise RuntimeError(f"maximum codebook for {spec} failed zero-error verification")
    return best
