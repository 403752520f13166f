"""Bounded-error state estimation of diagonal LTI plants over NSE/NSS channels.

The coder-estimator is set-valued: encoder and decoder share an interval per
mode that provably contains the state. Every block of ``t`` channel uses the
encoder sends the index of the cell (of a uniform split of the interval)
holding its measurement; the zero-error codebook lets the decoder recover it
exactly, after which both sides shrink and propagate the interval.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .channel import NSE, Adversary, BlockTargetedAdversary, ChannelRuntime, ChannelSpec, GreedyAdversary, RandomAdversary
from .entropy import SpectralResult
from .oracle import Codebook, all_state_patterns, best_codebook, channel_output

ACHIEVABLE = "AchievableBySufficientCondition"
INFEASIBLE = "InfeasibleByNecessaryCondition"
INDETERMINATE = "Indeterminate"
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class PlantSpec:
    eigenvalues: tuple
    l: float = 1.0
    v_max: float = 0.0
    w_max: float = 0.0
    q: int = 2

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", tuple(float(a) for a in self.eigenvalues))
        if not self.eigenvalues:
            raise ValueError("plant needs at least one eigenvalue")
        if self.l <= 0 or self.v_max < 0 or self.w_max < 0:
            raise ValueError("radius must be positive and noise bounds non-negative")

    @property
    def h_lin(self) -> float:
        return sum(math.log(abs(a)) / math.log(self.q) for a in self.eigenvalues if abs(a) >= 1)

    @property
    def unstable(self) -> bool:
        return any(abs(a) > 1 for a in self.eigenvalues)

    @property
    def scalar(self) -> float:
        if len(self.eigenvalues) != 1:
            raise ValueError("operation needs a scalar plant")
        return self.eigenvalues[0]

    def to_dict(self) -> dict:
        return {"eigenvalues": list(self.eigenvalues), "l": self.l, "v_max": self.v_max, "w_max": self.w_max, "q": self.q}

    @classmethod
    def parse(cls, text: str, q: int = 2) -> "PlantSpec":
        """``a=1.2,l=1,vmax=0.01[,wmax=0]``; diagonal plants list modes as ``a=1.2:0.5``."""
        kw = {}
        for part in text.split(","):
            if not part.strip():
                continue
            key, _, val = part.partition("=")
            key = key.strip().lower()
            if key in ("a", "eig", "eigenvalues"):
                kw["eigenvalues"] = tuple(float(v) for v in val.split(":"))
            elif key == "l":
                kw["l"] = float(val)
            elif key in ("vmax", "v_max"):
                kw["v_max"] = float(val)
            elif key in ("wmax", "w_max"):
                kw["w_max"] = float(val)
            else:
                raise ValueError(f"unknown plant field {key!r}")
        if "eigenvalues" not in kw:
            raise ValueError("plant needs a=...")
        return cls(q=q, **kw)


# -- feasibility -----------------------------------------------------------------


@dataclass
class FeasibilityVerdict:
    verdict: str
    h_lin: float
    h_ch: float
    lower: float  # h_lin below this is sufficient
    upper: float  # h_lin above this is fatal
    tight: bool = False

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "h_lin": self.h_lin,
            "h_ch": self.h_ch,
            "sufficient_threshold": self.lower,
            "necessary_threshold": self.upper,
            "tight": self.tight,
        }


def classify_feasibility(plant: PlantSpec, spec: ChannelSpec, spectral: SpectralResult) -> FeasibilityVerdict:
    """Compare h_lin with the entropy lower bound and the feedback-capacity upper bound."""
    if plant.q != spec.q:
        raise ValueError("plant and channel must use the same logarithm base")
    h_ch = math.log(spectral.lambda_pf) / math.log(spec.q)
    if spec.kind == NSE:
        lower = 1 - spec.d / spec.n - h_ch
        upper = 1 - spec.d / spec.n
    else:
        lower = 1 - 2 * h_ch
        upper = 1 - spec.d / spec.n * math.log(spec.q - 1) / math.log(spec.q)
    h = plant.h_lin
    if h < lower:
        verdict = ACHIEVABLE
    elif h > upper:
        verdict = INFEASIBLE
    else:
        verdict = INDETERMINATE
    return FeasibilityVerdict(verdict, h, h_ch, lower, upper)


# -- disturbances -------------------------------------------------------------------


class ZeroNoise:
    description = "zero"

    def process(self, t, x, lo, hi, bound):
        return 0.0

    def measurement(self, t, x, lo, hi, bound):
        return 0.0


class UniformNoise(ZeroNoise):
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.description = f"uniform(seed={seed})"
        self._rng = random.Random(seed)

    def process(self, t, x, lo, hi, bound):
        return self._rng.uniform(-bound, bound)

    def measurement(self, t, x, lo, hi, bound):
        return self._rng.uniform(-bound, bound)


class ExtremalNoise(ZeroNoise):
    """Push the state away from the interval centre; bias measurements back toward it."""

    description = "extremal"

    def process(self, t, x, lo, hi, bound):
        return bound if x >= 0.5 * (lo + hi) else -bound

    def measurement(self, t, x, lo, hi, bound):
        return -bound if x >= 0.5 * (lo + hi) else bound


def make_noise(name: str, seed: int = 0):
    if name == "zero":
        return ZeroNoise()
    if name == "uniform":
        return UniformNoise(seed)
    if name == "extremal":
        return ExtremalNoise()
    raise ValueError(f"unknown noise model {name!r}")


# -- coder-estimator ------------------------------------------------------------------


def allocate_cells(eigenvalues: Sequence[float], tau: int, M: int) -> list:
    """Cells per mode with product at most M, greedily feeding the worst-contracting mode."""
    cells = [1] * len(eigenvalues)
    while True:
        order = sorted(
            (i for i, a in enumerate(eigenvalues) if abs(a) > 1),
            key=lambda i: (-(abs(eigenvalues[i]) ** tau) / cells[i], i),
        )
        for i in order:
            if math.prod(cells) // cells[i] * (cells[i] + 1) <= M:
                cells[i] += 1
                break
        else:
            return cells


def _propagate(a: float, lo: float, hi: float, v_max: float):
    if a >= 0:
        return a * lo - v_max, a * hi + v_max
    return a * hi - v_max, a * lo + v_max


def _cell_bounds(lo: float, hi: float, cells: int, j: int):
    width = (hi - lo) / cells
    c_lo = lo + j * width
    c_hi = hi if j == cells - 1 else lo + (j + 1) * width
    return c_lo, c_hi


def _quantize(y: float, lo: float, hi: float, cells: int) -> int:
    yc = min(max(y, lo), hi)
    for j in range(cells):
        c_lo, c_hi = _cell_bounds(lo, hi, cells, j)
        if c_lo <= yc <= c_hi:
            return j
    return cells - 1


class ZeroErrorDecoder:
    """Table decoder: every output reachable from any initial state maps to one codeword."""

    def __init__(self, code: Codebook):
        self.table = {}
        for i, x in enumerate(code.codewords):
            for e in all_state_patterns(code.spec, code.t):
                y = channel_output(code.spec, x, e)
                if self.table.setdefault(y, i) != i:
                    raise ValueError("codebook is not zero-error")

    def decode(self, ys: Sequence) -> int:
        try:
            return self.table[tuple(ys)]
        except KeyError:
            raise RuntimeError(f"channel output {tuple(ys)} matches no codeword") from None


@dataclass
class StepRecord:
    t: int
    x: tuple
    xhat: tuple
    err: tuple
    lo: tuple
    hi: tuple
    event: str

    @property
    def abs_err(self) -> float:
        return max(abs(e) for e in self.err)

    @property
    def diameter(self) -> float:
        return max(h - l for l, h in zip(self.lo, self.hi))


@dataclass
class EstimationTrace:
    plant: PlantSpec
    spec: ChannelSpec
    tau: int
    cells: list
    rho: float
    records: list = field(default_factory=list)
    sound: bool = True
    overrides: int = 0
    adversary: str = ""
    noise: str = ""

    @property
    def sup_error(self) -> float:
        return max((r.abs_err for r in self.records), default=0.0)

    def block_starts(self) -> list:
        return [r for r in self.records if r.t % self.tau == 0]

    def write_csv(self, target) -> None:
        """Write the trace to a path or an open text stream."""

        def fmt(v):
            return ";".join(repr(float(c)) for c in v)

        def dump(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "xhat", "err", "interval_lo", "interval_hi", "channel_event"])
            for r in self.records:
                w.writerow([r.t, fmt(r.x), fmt(r.xhat), fmt(r.err), fmt(r.lo), fmt(r.hi), r.event])

        if hasattr(target, "write"):
            dump(target)
        else:
            with open(target, "w", newline="") as fh:
                dump(fh)


def _event(step) -> str:
    if step is None:
        return ""
    if step.error:
        ev = "erased" if isinstance(step.y, str) else f"error:{step.error}"
    else:
        ev = "ok"
    return ev + ("+override" if step.overridden else "")


def _outward(lo: float, hi: float):
    # Rounding is monotone, so shared shifts and scalings keep x inside its
    # interval; only the noise-widened cell edge needs a guard ulp.
    return math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)


def run_estimation(
    plant: PlantSpec,
    spec: ChannelSpec,
    code: Codebook,
    adv: Adversary,
    horizon: int,
    noise=None,
    x0: Optional[Sequence[float]] = None,
) -> EstimationTrace:
    """Simulate the coder-estimator for ``horizon`` steps (records t = 0..horizon)."""
    if not code.verified:
        raise ValueError("codebook must be verified zero-error before simulation")
    if (code.spec.kind, code.spec.n, code.spec.d, code.spec.q) != (spec.kind, spec.n, spec.d, spec.q):
        raise ValueError(f"codebook was built for {code.spec}, not {spec}")
    eig = plant.eigenvalues
    if any(abs(abs(a) - 1) <= UNIT_TOL for a in eig):
        raise ValueError("modes with |eigenvalue| = 1 are not supported in simulation")
    noise = noise or ZeroNoise()
    tau, M = code.t, code.size
    cells = allocate_cells(eig, tau, M)
    rho = max(abs(a) ** tau / c for a, c in zip(eig, cells))
    l = plant.l
    x = [l / 3 for _ in eig] if x0 is None else [float(v) for v in x0]
    if len(x) != len(eig) or any(abs(v) > l for v in x):
        raise ValueError("initial state must lie in the ball of radius l")

    decoder = ZeroErrorDecoder(code)
    rt = ChannelRuntime(spec)
    adv.reset()
    trace = EstimationTrace(plant, spec, tau, cells, rho, adversary=adv.description, noise=getattr(noise, "description", ""))

    # States and intervals are kept relative to an anchor that both ends can
    # compute (it follows the noiseless dynamics and is re-centred on the
    # interval midpoint each block). Errors stay small numbers even when the
    # state itself diverges, so no precision is lost to cancellation.
    anchor = [0.0] * len(eig)
    z = list(x)
    block_lo = [-l] * len(eig)  # interval of the state at the current block start
    block_hi = [l] * len(eig)
    cur_lo, cur_hi = list(block_lo), list(block_hi)
    sent = None
    outputs: list = []
    for t in range(horizon + 1):
        pos = t % tau
        if pos == 0 and t < horizon:
            # encoder: measure, quantize each mode, send the mixed-radix cell index
            idx = 0
            for i in range(len(eig)):
                y = z[i] + noise.measurement(t, z[i], cur_lo[i], cur_hi[i], plant.w_max)
                idx = idx * cells[i] + _quantize(y, block_lo[i], block_hi[i], cells[i])
            sent = code.codewords[idx]
            outputs = []
        step = None
        if t < horizon:
            outputs.append(rt.step(sent[pos], adv))
            step = rt.history[-1]
            rt.history.clear()
        mid = [0.5 * (lo + hi) for lo, hi in zip(cur_lo, cur_hi)]
        if any(not (lo <= zi <= hi) for zi, lo, hi in zip(z, cur_lo, cur_hi)):
            trace.sound = False
        trace.records.append(
            StepRecord(
                t,
                tuple(c + zi for c, zi in zip(anchor, z)),
                tuple(c + m for c, m in zip(anchor, mid)),
                tuple(zi - m for zi, m in zip(z, mid)),
                tuple(c + lo for c, lo in zip(anchor, cur_lo)),
                tuple(c + hi for c, hi in zip(anchor, cur_hi)),
                _event(step),
            )
        )
        if t == horizon:
            break
        for i, a in enumerate(eig):
            v = noise.process(t, z[i], cur_lo[i], cur_hi[i], plant.v_max)
            z[i] = a * z[i] + v
            anchor[i] = a * anchor[i]
            cur_lo[i], cur_hi[i] = _propagate(a, cur_lo[i], cur_hi[i], plant.v_max)
        if pos == tau - 1:
            j = decoder.decode(outputs)
            digits = []
            for c in reversed(cells):
                j, r = divmod(j, c)
                digits.append(r)
            digits.reverse()
            for i, a in enumerate(eig):
                c_lo, c_hi = _cell_bounds(block_lo[i], block_hi[i], cells[i], digits[i])
                lo, hi = c_lo - plant.w_max, c_hi + plant.w_max
                if plant.w_max:
                    lo, hi = _outward(lo, hi)
                lo, hi = max(lo, block_lo[i]), min(hi, block_hi[i])
                for _ in range(tau):
                    lo, hi = _propagate(a, lo, hi, plant.v_max)
                m = 0.5 * (lo + hi)
                anchor[i] += m
                z[i] -= m
                block_lo[i], block_hi[i] = lo - m, hi - m
            cur_lo, cur_hi = list(block_lo), list(block_hi)
    trace.overrides = rt.overrides
    return trace


def estimation_error_bound(plant: PlantSpec, code: Codebook) -> float:
    """Worst-case bound on sup |e| for the block protocol; infinite unless every mode contracts."""
    tau = code.t
    cells = allocate_cells(plant.eigenvalues, tau, code.size)
    worst = 0.0
    for a, c in zip(plant.eigenvalues, cells):
        a = abs(a)
        rho = a**tau / c
        if rho >= 1:
            return math.inf
        drift = 2 * plant.v_max * sum(a**j for j in range(tau))
        steady = (a**tau * 2 * plant.w_max + drift) / (1 - rho)
        width = max(2 * plant.l, steady)
        worst = max(worst, 0.5 * (max(a, 1.0) ** tau * width + drift))
    return worst * (1 + 1e-9)


# -- necessity and growth ---------------------------------------------------------------


@dataclass
class NecessityCertificate:
    a: float
    rate: float
    l: float
    q: int
    exponent: float  # log_q|a| - R
    diverges: bool

    def bound(self, t: int) -> float:
        """Lower bound on the worst-case |e(t)| of any coder-estimator at rate R."""
        return self.l * abs(self.a) ** t * float(self.q) ** (-self.rate * t)


def necessity_certificate(plant: PlantSpec, rate: float, t: Optional[int] = None, l: Optional[float] = None):
    """Counting bound: q^(Rt) messages leave an initial cell of width 2l q^(-Rt),
    which the dynamics stretch by |a|^t."""
    a = plant.scalar
    if rate < 0:
        raise ValueError("rate must be non-negative")
    q = plant.q
    exponent = math.log(abs(a)) / math.log(q) - rate
    cert = NecessityCertificate(a, rate, plant.l if l is None else l, q, exponent, exponent > 0)
    return cert if t is None else (cert, cert.bound(t))


@dataclass
class GrowthEnvelope:
    tau: int
    envelope: list  # per step, max |e| over the adversary suite
    runs: list
    rho: float

    def block_values(self) -> list:
        return self.envelope[:: self.tau]

    def block_growth(self) -> list:
        vals = self.block_values()
        return [b / a for a, b in zip(vals, vals[1:])]


def adversarial_error_growth(
    plant: PlantSpec,
    spec: ChannelSpec,
    horizon: int,
    code: Optional[Codebook] = None,
    seeds: Sequence[int] = (0, 1, 2),
) -> GrowthEnvelope:
    """Max-over-adversaries error envelope under extremal disturbances.

    The suite pairs greedy, random and block-targeted channel adversaries with
    initial states at both edges of the ball and at an interior point.
    """
    a = plant.scalar
    if code is None:
        code = best_codebook(spec)
    adversaries = [GreedyAdversary()] + [RandomAdversary(s) for s in seeds] + [BlockTargetedAdversary(code.t)]
    starts = [-plant.l, plant.l, plant.l / 3]
    env = [0.0] * (horizon + 1)
    runs = []
    rho = abs(a) ** code.t / code.size
    for adv in adversaries:
        for x0 in starts:
            tr = run_estimation(plant, spec, code, adv, horizon, ExtremalNoise(), x0=[x0])
            runs.append((adv.description, x0, tr.sup_error, tr.sound))
            for r in tr.records:
                env[r.t] = max(env[r.t], r.abs_err)
    return GrowthEnvelope(code.t, env, runs, rho)
