"""Command-line front end: ``slidewin <subcommand> [flags]``.

Precedence of settings: built-in defaults < environment caps < flags < the
JSON file given with ``--config``. Exit codes: 0 success, 2 config error,
3 analysis error, 4 resource cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__
from .capacity import FLOAT_TOL, capacity_report, closed_form_c0f, dp_capacity, gain_graph
from .channel import (
    KINDS,
    NSE,
    ChannelSpec,
    ResourceCapError,
    enumerate_states,
    is_strongly_connected,
    make_adversary,
    to_dot,
    to_json,
)
from .entropy import c0_lower_bound, degree_bound_estimate, output_counts, perron_frobenius
from .estimation import (
    PlantSpec,
    classify_feasibility,
    estimation_error_bound,
    make_noise,
    run_estimation,
)
from .oracle import VERIFY_CAP, Codebook, build_confusability, max_codebook, verify_zero_error

ANALYSES = ("states", "entropy", "capacity", "count", "bounds", "oracle", "classify", "simulate")
FORMATS = ("json", "csv", "dot")
METHODS = ("dp", "mmc", "closed")
ADVERSARIES = ("greedy", "random", "none", "block")
NOISES = ("zero", "uniform", "extremal")
ENV_MAX_VERTICES = "SLIDEWIN_MAX_VERTICES"
ENV_VERIFY_CAP = "SLIDEWIN_VERIFY_CAP"

EXIT_OK, EXIT_CONFIG, EXIT_ANALYSIS, EXIT_CAP = 0, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class AnalysisError(RuntimeError):
    def __init__(self, analysis: str, message: str, cap: bool = False):
        self.analysis = analysis
        self.cap = cap
        super().__init__(f"[{analysis}] {message}")


@dataclass
class ExperimentConfig:
    channel: ChannelSpec
    analyses: tuple = ("states",)
    k_max: Optional[int] = None
    methods: tuple = METHODS
    tol: float = 1e-13
    horizon: int = 12
    block: Optional[int] = None
    t_max: int = 4
    oracle_mode: str = "rate"
    time_limit: Optional[float] = None
    plant: Optional[str] = None
    code: Optional[str] = None
    adversary: str = "greedy"
    noise: str = "extremal"
    steps: int = 1000
    seed: int = 0
    trace: Optional[str] = None
    output: Optional[str] = None
    format: str = "json"
    max_vertices: int = 4096
    verify_cap: int = VERIFY_CAP
    timings: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel"] = str(self.channel)
        d["analyses"] = list(self.analyses)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _validate(dict(data))

    @property
    def plant_spec(self) -> Optional[PlantSpec]:
        return None if self.plant is None else PlantSpec.parse(self.plant, q=self.channel.q)


_FIELDS = {f.name for f in fields(ExperimentConfig)}
_POSITIVE = ("k_max", "block", "t_max", "max_vertices", "verify_cap")
_NON_NEGATIVE = ("horizon", "steps", "seed")


def _path_writable(path: str) -> bool:
    parent = os.path.dirname(os.path.abspath(path))
    return os.path.isdir(parent) and os.access(parent, os.W_OK)


def _validate(data: dict) -> ExperimentConfig:
    """Build a config, collecting every violation before failing."""
    errors = []
    unknown = sorted(set(data) - _FIELDS - {"kind", "n", "d", "q"})
    errors += [f"unknown setting {k!r}" for k in unknown]

    channel = data.pop("channel", None)
    parts = {k: data.pop(k) for k in ("kind", "n", "d", "q") if k in data}
    spec = None
    try:
        if isinstance(channel, ChannelSpec):
            spec = channel
        elif isinstance(channel, str):
            spec = ChannelSpec.parse(channel)
        elif isinstance(channel, dict):
            spec = ChannelSpec(**channel)
        elif "n" in parts or "d" in parts:
            if "n" not in parts:
                raise ValueError("missing window length n")
            spec = ChannelSpec(parts.get("kind", NSE), int(parts["n"]), int(parts.get("d", 0)), int(parts.get("q", 2)))
        else:
            raise ValueError("missing channel (use --channel kind:n,d,q or --kind/--n/--d/--q)")
    except (TypeError, ValueError) as exc:
        errors.append(f"invalid channel: {exc}")

    out = {k: v for k, v in data.items() if k in _FIELDS}
    for key in ("analyses", "methods"):
        if key in out:
            val = out[key]
            out[key] = tuple(val.split(",")) if isinstance(val, str) else tuple(val)
    if "analyses" in out:
        bad = [a for a in out["analyses"] if a not in ANALYSES]
        if bad or not out["analyses"]:
            errors.append(f"analyses must be a non-empty subset of {ANALYSES}, got {list(out['analyses'])}")
        else:
            out["analyses"] = tuple(a for a in ANALYSES if a in out["analyses"])
    if "methods" in out and (not out["methods"] or any(m not in METHODS for m in out["methods"])):
        errors.append(f"methods must be a non-empty subset of {METHODS}")
    for key in _POSITIVE:
        v = out.get(key)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
            errors.append(f"{key} must be a positive integer, got {v!r}")
    for key in _NON_NEGATIVE:
        v = out.get(key)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 0):
            errors.append(f"{key} must be a non-negative integer, got {v!r}")
    for key in ("tol", "time_limit"):
        v = out.get(key)
        if v is not None and (not isinstance(v, (int, float)) or v <= 0):
            errors.append(f"{key} must be positive, got {v!r}")
    choices = {"format": FORMATS, "oracle_mode": ("rate", "codebook"), "adversary": ADVERSARIES, "noise": NOISES}
    for key, allowed in choices.items():
        if key in out and out[key] not in allowed:
            errors.append(f"{key} must be one of {allowed}, got {out[key]!r}")
    for key in ("output", "trace"):
        if out.get(key) and not _path_writable(out[key]):
            errors.append(f"{key} path {out[key]!r} is not writable")

    analyses = out.get("analyses", ExperimentConfig.analyses)
    if out.get("plant") is not None:
        try:
            PlantSpec.parse(out["plant"], q=spec.q if spec else 2)
        except (TypeError, ValueError) as exc:
            errors.append(f"invalid plant: {exc}")
    elif any(a in analyses for a in ("classify", "simulate")):
        errors.append("classify/simulate need --plant")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(channel=spec, **out)


# -- argument parsing -----------------------------------------------------------


def _add(p, *names, **kw):
    p.add_argument(*names, default=argparse.SUPPRESS, **kw)


def _channel_flags(p):
    _add(p, "--config", help="JSON file whose settings override flags")
    _add(p, "--channel", help="kind:n,d[,q], e.g. nse:3,1,2")
    _add(p, "--kind", choices=KINDS)
    _add(p, "--n", type=int)
    _add(p, "--d", type=int)
    _add(p, "--q", type=int)
    _add(p, "--format", help="json | csv | dot")
    _add(p, "--output", "-o", help="write to file instead of stdout")
    _add(p, "--max-vertices", dest="max_vertices", type=int)
    _add(p, "--verify-cap", dest="verify_cap", type=int)
    _add(p, "--seed", type=int)


def _flags_for(p, command):
    if command in ("capacity", "report"):
        _add(p, "--k-max", dest="k_max", type=int)
        _add(p, "--methods", help="comma list of dp,mmc,closed")
    if command in ("entropy", "count", "bounds", "classify", "report"):
        _add(p, "--tol", type=float)
    if command in ("count", "report"):
        _add(p, "--horizon", "-N", type=int)
    if command in ("oracle", "simulate", "report"):
        _add(p, "--block", "-t", type=int, help="block length (default: best over 1..t-max)")
        _add(p, "--t-max", dest="t_max", type=int)
        _add(p, "--time-limit", dest="time_limit", type=float)
    if command in ("oracle", "report"):
        _add(p, "--mode", dest="oracle_mode", choices=("rate", "codebook"))
    if command in ("classify", "simulate", "report"):
        _add(p, "--plant", help="a=1.2,l=1,vmax=0.01[,wmax=0]; diagonal: a=1.2:0.5")
    if command in ("simulate", "report"):
        _add(p, "--code", help="codebook JSON written by 'oracle --mode codebook'")
        _add(p, "--adversary", choices=ADVERSARIES)
        _add(p, "--noise", choices=NOISES)
        _add(p, "--steps", type=int)
        _add(p, "--trace", help="per-step trace CSV")
    if command == "report":
        _add(p, "--analyses", help=f"comma list from {','.join(ANALYSES)}")
        p.add_argument("--no-timings", dest="timings", action="store_false", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slidewin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"slidewin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ANALYSES + ("report",):
        p = sub.add_parser(command)
        _channel_flags(p)
        _flags_for(p, command)
    return parser


def _env_caps() -> tuple:
    out, errors = {}, []
    for env, key in ((ENV_MAX_VERTICES, "max_vertices"), (ENV_VERIFY_CAP, "verify_cap")):
        raw = os.environ.get(env)
        if raw is None:
            continue
        try:
            out[key] = int(raw)
        except ValueError:
            errors.append(f"{env} must be an integer, got {raw!r}")
    return out, errors


def parse_config(argv) -> tuple:
    """Parse ``argv`` into ``(command, ExperimentConfig)``; raises ConfigError listing every problem."""
    parser = build_parser()
    ns, extra = parser.parse_known_args(argv)
    errors = [f"unknown flag {a!r}" for a in extra if a.startswith("-")]
    errors += [f"unexpected argument {a!r}" for a in extra if not a.startswith("-")]
    data, env_errors = _env_caps()
    errors += env_errors
    flags = vars(ns)
    command = flags.pop("command")
    path = flags.pop("config", None)
    data.update(flags)
    if command != "report":
        data["analyses"] = (command,)
    if path is not None:
        try:
            with open(path) as fh:
                file_data = json.load(fh)
            if not isinstance(file_data, dict):
                raise ValueError("top level must be an object")
        except (OSError, ValueError) as exc:
            errors.append(f"cannot read config {path!r}: {exc}")
        else:
            if command != "report":
                file_data.pop("analyses", None)
            if "channel" in file_data:
                for k in ("kind", "n", "d", "q"):
                    data.pop(k, None)
            data.update(file_data)
    try:
        cfg = _validate(data)
    except ConfigError as exc:
        raise ConfigError(errors + exc.errors) from None
    if errors:
        raise ConfigError(errors)
    fmt_ok = {"dot": ("states",), "csv": ANALYSES}
    if cfg.format in fmt_ok and command not in fmt_ok[cfg.format]:
        raise ConfigError([f"format {cfg.format!r} is not available for {command!r}"])
    return command, cfg


# -- analyses ---------------------------------------------------------------------


def num(v, tol: float = FLOAT_TOL):
    """JSON number: exact rationals as {num, den}, floats with tolerance metadata."""
    if v is None or isinstance(v, (bool, int)):
        return v
    if isinstance(v, Fraction):
        return {"num": v.numerator, "den": v.denominator}
    v = float(v)
    if not math.isfinite(v):
        return {"value": None, "infinite": True}
    return {"value": v, "tol": tol}


class Runner:
    """Runs analyses in dependency order, caching shared intermediates."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._graph = None
        self._spectral = None
        self.code: Optional[Codebook] = None
        self.tables: dict = {}

    @property
    def graph(self):
        if self._graph is None:
            self._graph = enumerate_states(self.cfg.channel)
        return self._graph

    @property
    def spectral(self):
        if self._spectral is None:
            self._spectral = perron_frobenius(self.graph, tol=self.cfg.tol)
        return self._spectral

    def states(self) -> dict:
        g = self.graph
        out = to_json(g)
        out["n_states"] = len(g)
        out["strongly_connected"] = is_strongly_connected(g)
        self.tables["states"] = [
            {"from": s, "to": t, "label": e, "from_word": g.words[s], "to_word": g.words[t]} for s, t, e in g.edges
        ]
        return out

    def entropy(self) -> dict:
        sp = self.spectral
        out = {
            "lambda_pf": num(sp.lambda_pf),
            "h_ch": num(sp.h_ch),
            "residual": num(sp.residual),
            "d_min": sp.d_min,
            "d_ave": num(sp.d_ave),
            "d_max": sp.d_max,
            "iterations": sp.iterations,
        }
        self.tables["entropy"] = [{"quantity": k, "value": sp.to_json()[k]} for k in ("lambda_pf", "h_ch", "residual", "d_min", "d_ave", "d_max")]
        return out

    def capacity(self) -> dict:
        cfg = self.cfg
        rep = capacity_report(cfg.channel, methods=cfg.methods, k_max=cfg.k_max)
        out = rep.to_json()
        out["c0f_dp"] = num(rep.c0f_dp)
        out["convergence_gap"] = num(rep.convergence_gap)
        if "dp" in cfg.methods:
            traj = dp_capacity(gain_graph(self.graph), rep.iterations)
            self.tables["capacity"] = [{"k": k, "estimate": float(r)} for k, r in enumerate(traj.rate_estimates, 1)]
        else:
            self.tables["capacity"] = [{"k": None, "estimate": None}]
        return out

    def count(self) -> dict:
        cfg = self.cfg
        g = self.graph
        res = output_counts(g, cfg.horizon, self.spectral)
        rows, v = [], [1] * len(g)
        for N in range(cfg.horizon + 1):
            rows += [{"N": N, "state": g.words[s], "count": c} for s, c in enumerate(v)]
            v = [sum(v[t] for _, t in out) for out in g.succ]
        self.tables["count"] = rows
        return {
            "N": res.N,
            "counts_by_state": dict(zip(g.words, res.counts_by_state)),
            "beta_upper": num(res.beta_bound),
            "beta_lower": num(res.beta_lower),
        }

    def bounds(self) -> dict:
        spec = self.cfg.channel
        lb = c0_lower_bound(spec, self.spectral)
        closed, flag = closed_form_c0f(spec)
        out = {
            "c0_lower": num(lb.value),
            "c0_lower_clamped": num(lb.display()),
            "c0f_closed": num(closed),
            "c0f_flag": flag,
        }
        if lb.appendix_variant is not None:
            out["c0_lower_variant"] = num(lb.appendix_variant)
        if spec.kind == NSE:
            out["degree_bound"] = num(degree_bound_estimate(self.graph))
        self.tables["bounds"] = [
            {"quantity": "c0_lower", "value": lb.value},
            {"quantity": "c0f_closed", "value": float(closed)},
        ]
        return out

    def oracle(self) -> dict:
        cfg = self.cfg
        blocks = [cfg.block] if cfg.block else range(1, cfg.t_max + 1)
        rows, best = [], None
        for t in blocks:
            if cfg.block is None and cfg.channel.q**t > cfg.max_vertices:
                break
            code = max_codebook(build_confusability(cfg.channel, t, cfg.max_vertices), time_limit=cfg.time_limit)
            verify_zero_error(code, cap=cfg.verify_cap)
            rows.append({"t": t, "size": code.size, "rate": code.rate, "exact": code.exact, "verified": code.verified})
            if best is None or code.rate > best.rate + 1e-12:
                best = code
        if best is None:
            raise ResourceCapError(f"no block length fits max_vertices={cfg.max_vertices}")
        self.code = best
        self.tables["oracle"] = rows
        out = {
            "rows": [{**r, "rate": num(r["rate"])} for r in rows],
            "best": {"t": best.t, "size": best.size, "rate": num(best.rate)},
        }
        if cfg.oracle_mode == "codebook":
            out["codebook"] = {**best.to_json(), "rate": num(best.rate)}
        return out

    def classify(self) -> dict:
        v = classify_feasibility(self.cfg.plant_spec, self.cfg.channel, self.spectral)
        out = {k: (num(x) if isinstance(x, float) else x) for k, x in v.to_json().items()}
        self.tables["classify"] = [{"quantity": k, "value": x} for k, x in v.to_json().items()]
        return out

    def _load_code(self) -> Codebook:
        cfg = self.cfg
        if cfg.code is None:
            if self.code is None:
                self.oracle()
            return self.code
        try:
            with open(cfg.code) as fh:
                data = json.load(fh)
            code = Codebook.from_json(data.get("codebook", data))
        except OSError as exc:
            raise AnalysisError("simulate", f"cannot read codebook {cfg.code!r}: {exc.strerror}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise AnalysisError("simulate", f"malformed codebook {cfg.code!r}: {exc}") from None
        spec = cfg.channel
        if (code.spec.kind, code.spec.n, code.spec.d, code.spec.q) != (spec.kind, spec.n, spec.d, spec.q):
            raise AnalysisError("simulate", f"codebook is for {code.spec}, channel is {spec}")
        # never trust the flag stored in the file
        code.verified = False
        if not verify_zero_error(code, cap=cfg.verify_cap):
            raise AnalysisError("simulate", "codebook fails zero-error verification")
        return code

    def simulate(self) -> dict:
        cfg = self.cfg
        code = self._load_code()
        plant = cfg.plant_spec
        adv = make_adversary(cfg.adversary, cfg.channel, seed=cfg.seed, block=code.t)
        trace = run_estimation(plant, cfg.channel, code, adv, cfg.steps, make_noise(cfg.noise, cfg.seed))
        if cfg.trace:
            trace.write_csv(cfg.trace)
        self.tables["simulate"] = trace
        return {
            "steps": cfg.steps,
            "tau": code.t,
            "M": code.size,
            "rate": num(code.rate),
            "cells": trace.cells,
            "rho": num(trace.rho),
            "sup_error": num(trace.sup_error),
            "error_bound": num(estimation_error_bound(plant, code)),
            "sound": trace.sound,
            "overrides": trace.overrides,
            "adversary": trace.adversary,
            "noise": trace.noise,
        }


@dataclass
class Report:
    config: dict
    results: dict
    versions: dict
    timings: dict

    def to_json(self, timings: bool = True) -> dict:
        out = {"config": self.config, "results": self.results, "versions": self.versions}
        if timings:
            out["timings"] = self.timings
        return out


def versions() -> dict:
    return {"slidewin": __version__, "python": platform.python_version(), "numpy": np.__version__}


def run(cfg: ExperimentConfig, runner: Optional[Runner] = None) -> Report:
    runner = runner or Runner(cfg)
    results, timings = {}, {}
    for name in ANALYSES:
        if name not in cfg.analyses:
            continue
        t0 = time.perf_counter()
        try:
            results[name] = getattr(runner, name)()
        except AnalysisError:
            raise
        except ResourceCapError as exc:
            raise AnalysisError(name, str(exc), cap=True) from exc
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            raise AnalysisError(name, str(exc)) from exc
        timings[name] = time.perf_counter() - t0
    return Report(cfg.to_dict(), results, versions(), timings)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def render(command: str, cfg: ExperimentConfig, report: Report, runner: Runner) -> str:
    if command == "report":
        return dumps(report.to_json(timings=cfg.timings))
    if cfg.format == "dot":
        return to_dot(runner.graph)
    if cfg.format == "csv":
        table = runner.tables[command]
        if command == "simulate":
            buf = io.StringIO()
            table.write_csv(buf)
            return buf.getvalue()
        return _csv(table)
    return dumps(report.results[command])


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, cfg = parse_config(argv)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse --help / usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    runner = Runner(cfg)
    try:
        report = run(cfg, runner)
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_CAP if exc.cap else EXIT_ANALYSIS
    text = render(command, cfg, report, runner)
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
