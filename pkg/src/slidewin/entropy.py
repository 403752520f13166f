"""Perron-Frobenius eigenvalue, output-sequence counts and entropy-based C0 bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import NSE, ChannelSpec, StateGraph, is_strongly_connected


@dataclass
class SpectralResult:
    lambda_pf: float
    h_ch: float
    residual: float
    d_min: int
    d_ave: float
    d_max: int
    q: int
    iterations: int
    vector: np.ndarray

    def to_json(self) -> dict:
        return {
            "lambda_pf": self.lambda_pf,
            "h_ch": self.h_ch,
            "residual": self.residual,
            "d_min": self.d_min,
            "d_ave": self.d_ave,
            "d_max": self.d_max,
            "q": self.q,
            "iterations": self.iterations,
        }


def perron_frobenius(graph: StateGraph, tol: float = 1e-13, max_iter: int = 200_000) -> SpectralResult:
    """Power iteration on the 0/1 transition matrix.

    Each step averages the iterate with its image, i.e. iterates ``A + I``,
    so periodic graphs still converge. Stops when successive Rayleigh
    quotients differ by less than ``tol``.
    """
    if not is_strongly_connected(graph):
        raise ValueError("Perron-Frobenius iteration needs an irreducible transition matrix")
    A = graph.adjacency.astype(float)
    k = A.shape[0]
    x = np.full(k, 1.0 / math.sqrt(k))
    lam_prev = math.inf
    for it in range(1, max_iter + 1):
        y = A @ x
        lam = float(x @ y / (x @ x))
        z = x + y
        x = z / np.linalg.norm(z)
        if abs(lam - lam_prev) < tol:
            break
        lam_prev = lam
    else:
        raise RuntimeError(f"power iteration did not converge in {max_iter} steps")
    v = x / np.max(np.abs(x))
    lam = float(v @ (A @ v) / (v @ v))
    if np.min(v) <= 0:
        raise RuntimeError("Perron vector has non-positive entries")
    residual = float(np.max(np.abs(A @ v - lam * v)))
    deg = graph.out_degrees()
    q = graph.spec.q
    return SpectralResult(
        lambda_pf=lam,
        h_ch=math.log(lam) / math.log(q),
        residual=residual,
        d_min=min(deg),
        d_ave=sum(deg) / len(deg),
        d_max=max(deg),
        q=q,
        iterations=it,
        vector=v,
    )


def count_outputs(graph: StateGraph, s0: int, N: int) -> int:
    """Exact ``z0 A^N 1``: the number of output sequences of length N from s0."""
    return count_all(graph, N)[s0]


def count_all(graph: StateGraph, N: int) -> list:
    if N < 0:
        raise ValueError("horizon must be non-negative")
    v = [1] * len(graph)
    for _ in range(N):
        v = [sum(v[t] for _, t in out) for out in graph.succ]
    return v


@dataclass
class OutputCountResult:
    N: int
    counts_by_state: list
    beta_bound: float
    beta_lower: float


def output_counts(graph: StateGraph, N: int, spectral: SpectralResult, horizon: Optional[Sequence[int]] = None) -> OutputCountResult:
    """Counts from every initial state at N, and the empirical constants
    bounding ``count(s, M) / lambda^M`` over ``horizon`` (default 1..N)."""
    horizon = list(horizon) if horizon is not None else list(range(1, N + 1))
    lam = spectral.lambda_pf
    ratios = []
    v = [1] * len(graph)
    top = max(horizon + [N])
    counts = None
    for m in range(1, top + 1):
        v = [sum(v[t] for _, t in out) for out in graph.succ]
        if m in horizon:
            scale = lam**m
            ratios.extend(c / scale for c in v)
        if m == N:
            counts = list(v)
    if N == 0:
        counts = [1] * len(graph)
    return OutputCountResult(N, counts, max(ratios), min(ratios))


@dataclass
class LowerBound:
    value: float
    appendix_variant: Optional[float] = None

    def display(self) -> float:
        return max(0.0, self.value)


def c0_lower_bound(spec: ChannelSpec, spectral: SpectralResult) -> LowerBound:
    """Entropy lower bound on C0; raw (possibly negative) values are kept.

    NSS carries two values: ``1 - 2 h`` and the variant with the extra
    ``- d/n`` term.
    """
    h = math.log(spectral.lambda_pf) / math.log(spec.q)
    if spec.kind == NSE:
        return LowerBound(1 - spec.d / spec.n - h)
    return LowerBound(1 - 2 * h, 1 - spec.d / spec.n - 2 * h)


def degree_bound_estimate(graph: StateGraph) -> float:
    """Loose bound ``1 - d/n - log_q d_max`` for an NSE graph."""
    spec = graph.spec
    if spec.kind != NSE:
        raise ValueError("degree bound is stated for NSE channels")
    d_max = max(graph.out_degrees())
    if 1 <= spec.d:
        assert d_max == 2, f"NSE graph with d >= 1 must have d_max = 2, got {d_max}"
    return 1 - spec.d / spec.n - math.log(d_max) / math.log(spec.q)
