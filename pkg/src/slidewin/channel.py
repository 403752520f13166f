"""Sliding-window erasure (NSE) and symmetric (NSS) channels as finite-state machines.

A channel state is the window of the last ``n`` error events, oldest first.
For NSE an entry is 0 (clear) or 1 (erased); for NSS it is the additive
error value in Z_q, 0 meaning no error.
"""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Callable, Optional, Sequence

import numpy as np

NSE = "nse"
NSS = "nss"
KINDS = (NSE, NSS)

#: Output symbol for an erased NSE transmission.
ERASURE = "*"

Window = tuple  # tuple[int, ...], oldest slot first


class ResourceCapError(RuntimeError):
    """An exhaustive computation would exceed its configured size cap."""


def volume(n: int, r: int, q: int) -> int:
    """Hamming-ball volume ``sum_{i<=r} C(n,i) (q-1)^i``."""
    return sum(comb(n, i) * (q - 1) ** i for i in range(r + 1))


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    n: int
    d: int
    q: int = 2

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.n < 1:
            raise ValueError("window length n must be positive")
        if self.d < 0:
            raise ValueError("budget d must be non-negative")
        if self.d > self.n:
            raise ValueError(f"budget exceeds window (d={self.d} > n={self.n})")
        if self.q < 2:
            raise ValueError("alphabet size q must be at least 2")

    @property
    def labels(self) -> tuple:
        """Error labels of one channel use; 0 is always the error-free label."""
        return (0, 1) if self.kind == NSE else tuple(range(self.q))

    @property
    def n_states(self) -> int:
        return volume(self.n, self.d, 2 if self.kind == NSE else self.q)

    @property
    def clear_state(self) -> Window:
        return (0,) * self.n

    def admissible(self, window: Sequence[int]) -> bool:
        return sum(1 for e in window if e) <= self.d

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "d": self.d, "q": self.q}

    def __str__(self):
        return f"{self.kind}:{self.n},{self.d},{self.q}"

    @classmethod
    def parse(cls, text: str) -> "ChannelSpec":
        """Parse ``kind:n,d,q`` (``q`` optional, default 2)."""
        kind, _, rest = text.partition(":")
        parts = [int(p) for p in rest.split(",") if p.strip()]
        if len(parts) not in (2, 3):
            raise ValueError(f"cannot parse channel {text!r}; expected kind:n,d[,q]")
        return cls(kind, *parts)


def shift(window: Window, e: int) -> Window:
    return window[1:] + (e,)


def word(window: Sequence[int], kind: str = NSE) -> str:
    """Text form of a window: ``o`` for no error, ``*`` (NSE) or the error value (NSS)."""
    if kind == NSE:
        return "".join("*" if e else "o" for e in window)
    return "".join("o" if e == 0 else np.base_repr(e, 36).lower() for e in window)


def parse_word(text: str, kind: str = NSE) -> Window:
    if kind == NSE:
        return tuple(1 if c == "*" else 0 for c in text)
    return tuple(0 if c == "o" else int(c, 36) for c in text)


@dataclass(frozen=True)
class StateGraph:
    """Enumerated channel states with labeled transitions.

    ``succ[s]`` lists ``(label, successor)`` pairs sorted by label; edges are
    the flattened ``(from, to, label)`` triples.
    """

    spec: ChannelSpec
    states: tuple
    succ: tuple
    index: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.states)

    @property
    def edges(self) -> list:
        return [(s, t, e) for s, out in enumerate(self.succ) for e, t in out]

    @property
    def words(self) -> list:
        return [word(w, self.spec.kind) for w in self.states]

    @property
    def clear(self) -> int:
        return self.index[self.spec.clear_state]

    @cached_property
    def adjacency(self) -> np.ndarray:
        k = len(self.states)
        a = np.zeros((k, k), dtype=np.int64)
        for s, out in enumerate(self.succ):
            for _, t in out:
                a[s, t] = 1
        return a

    def out_degrees(self) -> list:
        return [len(out) for out in self.succ]


def enumerate_states(spec: ChannelSpec) -> StateGraph:
    """All admissible windows in lexicographic order, with their transitions."""
    states = tuple(w for w in itertools.product(spec.labels, repeat=spec.n) if spec.admissible(w))
    index = {w: i for i, w in enumerate(states)}
    succ = []
    for w in states:
        out = []
        for e in spec.labels:
            nxt = shift(w, e)
            if spec.admissible(nxt):
                out.append((e, index[nxt]))
        succ.append(tuple(out))
    return StateGraph(spec, states, tuple(succ), index)


def transitions_from(graph: StateGraph, s: int):
    """Successors of state ``s`` and its class: ``"I"`` if a further error is
    admissible, ``"II"`` if only the error-free move remains."""
    out = list(graph.succ[s])
    return out, ("I" if len(out) > 1 else "II")


def _reach(adj: Sequence[Sequence[int]], start: int) -> set:
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def is_strongly_connected(graph: StateGraph) -> bool:
    k = len(graph)
    fwd = [[t for _, t in out] for out in graph.succ]
    rev = [[] for _ in range(k)]
    for s, ts in enumerate(fwd):
        for t in ts:
            rev[t].append(s)
    return len(_reach(fwd, 0)) == k and len(_reach(rev, 0)) == k


def to_json(graph: StateGraph) -> dict:
    return {
        **graph.spec.to_dict(),
        "states": graph.words,
        "edges": [{"from": s, "to": t, "label": e} for s, t, e in graph.edges],
    }


def to_dot(graph: StateGraph) -> str:
    spec = graph.spec
    lines = [f'digraph "{spec}" {{']
    for i, w in enumerate(graph.words):
        lines.append(f'  s{i} [label="{w}"];')
    for s, t, e in graph.edges:
        lab = ("*" if e else "o") if spec.kind == NSE else str(e)
        color = ", color=red" if e else ""
        lines.append(f'  s{s} -> s{t} [label="{lab}"{color}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- adversaries ------------------------------------------------------------


class Adversary:
    """Chooses the error label for the next channel use.

    The runtime enforces the window budget, so a policy may ask for anything.
    """

    description = "no errors"

    def choose(self, rt: "ChannelRuntime", x: int) -> int:
        return 0

    def reset(self):
        pass


class GreedyAdversary(Adversary):
    """Inject an error whenever the budget allows it."""

    def __init__(self, value: int = 1):
        self.value = value
        self.description = "greedy"

    def choose(self, rt, x):
        return self.value if rt.can_err() else 0


class RandomAdversary(Adversary):
    def __init__(self, seed: int = 0, p: float = 0.5):
        self.seed = seed
        self.p = p
        self.description = f"random(seed={seed}, p={p})"
        self.reset()

    def reset(self):
        self._rng = random.Random(self.seed)

    def choose(self, rt, x):
        if not rt.can_err() or self._rng.random() >= self.p:
            return 0
        return self._rng.choice(rt.spec.labels[1:])


class ScriptedAdversary(Adversary):
    """Replays a fixed error sequence, then stays silent."""

    def __init__(self, sequence: Sequence[int]):
        self.sequence = list(sequence)
        self.description = f"scripted({len(self.sequence)})"
        self.reset()

    def reset(self):
        self._pos = 0

    def choose(self, rt, x):
        e = self.sequence[self._pos] if self._pos < len(self.sequence) else 0
        self._pos += 1
        return e


class OmniscientAdversary(Adversary):
    def __init__(self, hook: Callable[["ChannelRuntime", int], int], description: str = "omniscient"):
        self.hook = hook
        self.description = description

    def choose(self, rt, x):
        return self.hook(rt, x)


class BlockTargetedAdversary(Adversary):
    """Spend the budget on the leading symbols of every length-``block`` frame."""

    def __init__(self, block: int):
        self.block = block
        self.description = f"block-targeted({block})"
        self.reset()

    def reset(self):
        self._t = 0

    def choose(self, rt, x):
        pos = self._t % self.block
        self._t += 1
        return 1 if rt.can_err() and pos < rt.spec.d else 0


def make_adversary(name: str, spec: Optional[ChannelSpec] = None, seed: int = 0, block: int = 1) -> Adversary:
    if name == "greedy":
        return GreedyAdversary()
    if name == "random":
        return RandomAdversary(seed)
    if name == "none":
        return Adversary()
    if name == "block":
        return BlockTargetedAdversary(block)
    raise ValueError(f"unknown adversary {name!r}")


@dataclass
class Step:
    x: int
    requested: int
    error: int
    y: object
    overridden: bool


class ChannelRuntime:
    """Mutable single-owner channel that applies adversary errors under the budget."""

    def __init__(self, spec: ChannelSpec, initial: Optional[Window] = None, record: bool = True):
        self.spec = spec
        self.current: Window = tuple(initial) if initial is not None else spec.clear_state
        if len(self.current) != spec.n or not spec.admissible(self.current):
            raise ValueError(f"inadmissible initial window {self.current}")
        if any(e not in spec.labels for e in self.current):
            raise ValueError(f"initial window {self.current} uses invalid labels")
        self.record = record
        self.history: list = []
        self.overrides = 0

    def can_err(self) -> bool:
        return self.spec.admissible(shift(self.current, 1))

    def step(self, x: int, adv: Adversary) -> object:
        spec = self.spec
        if not 0 <= x < spec.q:
            raise ValueError(f"input symbol {x} outside alphabet of size {spec.q}")
        req = adv.choose(self, x)
        e = req % spec.q if spec.kind == NSS else (1 if req else 0)
        overridden = False
        if e and not spec.admissible(shift(self.current, e)):
            e, overridden = 0, True
            self.overrides += 1
        self.current = shift(self.current, e)
        if spec.kind == NSE:
            y = ERASURE if e else x
        else:
            y = (x + e) % spec.q
        if self.record:
            self.history.append(Step(x, req, e, y, overridden))
        return y

    def send(self, xs: Sequence[int], adv: Adversary) -> list:
        return [self.step(x, adv) for x in xs]


# -- finite memory ------------------------------------------------------------


def admissible_patterns(spec: ChannelSpec, length: int, initial: Optional[Window] = None) -> list:
    """All error-label sequences of ``length`` admissible from ``initial``."""
    start = spec.clear_state if initial is None else tuple(initial)
    out = []

    def grow(win, acc):
        if len(acc) == length:
            out.append(tuple(acc))
            return
        for e in spec.labels:
            nxt = shift(win, e)
            if spec.admissible(nxt):
                acc.append(e)
                grow(nxt, acc)
                acc.pop()

    grow(start, [])
    return out


def channel_output(spec: ChannelSpec, xs: Sequence[int], es: Sequence[int]) -> tuple:
    if spec.kind == NSE:
        return tuple(ERASURE if e else x for x, e in zip(xs, es))
    return tuple((x + e) % spec.q for x, e in zip(xs, es))


FINITE_MEMORY_GUARD = 10**7


def verify_finite_memory(spec: ChannelSpec, t_max: int, initial: Optional[Window] = None) -> bool:
    """Exhaustively check that conditioning on the last ``n`` inputs/outputs
    gives the same output range as conditioning on the full past, for every
    ``n <= t <= t_max``."""
    if spec.q ** (t_max + 1) * spec.n_states > FINITE_MEMORY_GUARD:
        raise ResourceCapError(
            f"finite-memory check too large: q^(t_max+1)*|S| = {spec.q ** (t_max + 1) * spec.n_states}"
        )
    m = spec.n
    for t in range(m, t_max + 1):
        full: dict = {}
        short: dict = {}
        for es in admissible_patterns(spec, t + 1, initial):
            for xs in itertools.product(range(spec.q), repeat=t + 1):
                ys = channel_output(spec, xs, es)
                full.setdefault((xs, ys[:t]), set()).add(ys[t])
                short.setdefault((xs[t - m :], ys[t - m : t]), set()).add(ys[t])
        for (xs, past), rng in full.items():
            if short[(xs[t - m :], past[t - m :])] != rng:
                return False
    return True
