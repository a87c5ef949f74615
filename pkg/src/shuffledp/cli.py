"""Batch front-end: ``shuffledp {run,mc,audit,info}``.

Configuration comes from an optional JSON file and command-line flags;
flags win over the file, and the file wins over defaults. Reports are JSON
with sorted keys, floats at 12 significant digits and rationals as "n/d",
so identical (config, seed, version) inputs give byte-identical output.
Wall-clock time is recorded only with ``--record-timing``.

Exit codes: 0 success, 2 configuration error, 3 enumeration budget
refusal, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from . import __version__
from .audit.empirical import clopper_pearson
from .audit.privacy import DEFAULT_BUDGET, AuditReport, BudgetExceeded, dp_audit
from .histograms import InjectedHistogram, LdpHistogram
from .model import jsonable, run_protocol
from .primitives import DEFAULT_SIGMA, ikos_sum_spec
from .protocols import (
    HeavyHitterSub,
    NestedInput,
    TwoRoundSub,
    classify_failure,
    classify_nested_failure,
    common_prelude_spec,
    common_two_round_spec,
    failure_bounds,
    identity_spec,
    input_ignoring_spec,
    nested_one_round_spec,
    nested_trials,
    nested_two_round,
    prelude_trials,
    shuffled_rr_spec,
    two_round_vectorized,
)
from .protocols.nested import nested_failure_bounds
from .protocols.outcome import Status
from .randomness import RandomStream, derive_key

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_INTERNAL = 0, 2, 3, 4
WORKERS_ENV = "SHUFFLEDP_WORKERS"
COMMANDS = ("run", "mc", "audit", "info")
SEED_LIMIT = 2**64


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str = "run"
    protocol: str = "common-prelude"
    n: int = 20
    x_size: int = 8
    y_size: int = 2
    alpha: float = 0.5
    epsilon: float = 1.0
    delta: float = 1e-6
    epsilons: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    k: int = 8
    sigma: int = DEFAULT_SIGMA
    q: int | None = None
    trials: int = 1000
    coalition_cap: int = 2
    seed: int = 0
    histogram: str = "injected"
    mode: str = "ideal"
    engine: str = "auto"
    subprotocol: str = "heavy-hitter"
    range_cap: int = 10**6
    budget: int = DEFAULT_BUDGET
    inputs: list | None = None
    output: str | None = None
    csv: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"command: must be one of {', '.join(COMMANDS)}")
        if self.command != "info" and self.protocol not in REGISTRY:
            raise ConfigError(f"protocol: unknown protocol {self.protocol!r}; registry has {', '.join(sorted(REGISTRY))}")
        for name in ("n", "x_size", "y_size", "k", "sigma", "trials", "range_cap", "budget"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer")
        if self.q is not None and (isinstance(self.q, bool) or not isinstance(self.q, int) or self.q < 2):
            raise ConfigError("q: must be an integer at least 2")
        if isinstance(self.coalition_cap, bool) or not isinstance(self.coalition_cap, int) or self.coalition_cap < 0:
            raise ConfigError("coalition_cap: must be a non-negative integer")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha: must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon: must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta: must lie in (0, 1)")
        if not self.epsilons or any(not isinstance(e, (int, float)) or e < 0 for e in self.epsilons):
            raise ConfigError("epsilons: must be a non-empty list of non-negative numbers")
        if list(self.epsilons) != sorted(self.epsilons):
            raise ConfigError("epsilons: grid must be sorted ascending")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError("seed: must be a decimal integer in [0, 2^64)")
        for name, allowed in (("histogram", ("real", "injected")), ("mode", ("ideal", "shares")),
                              ("engine", ("auto", "model", "vectorized")),
                              ("subprotocol", ("heavy-hitter", "two-round"))):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name}: must be one of {', '.join(allowed)}")
        if self.inputs is not None and (not isinstance(self.inputs, list) or len(self.inputs) != self.n):
            raise ConfigError(f"inputs: must be a list of n = {self.n} values")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown configuration field")
        data = dict(data)
        if "epsilons" in data:
            data["epsilons"] = [float(e) if isinstance(e, (int, float)) and not isinstance(e, bool) else e
                                for e in data["epsilons"]]
        for name in ("alpha", "epsilon", "delta"):
            if isinstance(data.get(name), int) and not isinstance(data.get(name), bool):
                data[name] = float(data[name])
        return cls(**data).validate()

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: not valid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# Report rendering


def normalize(obj: Any) -> Any:
    """JSON-ready value with fixed float precision."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return str(v)
        return float(format(v, ".12g"))
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    conv = jsonable(obj)
    return str(conv) if conv is obj else normalize(conv)


def render(report: dict) -> str:
    return json.dumps(normalize(report), sort_keys=True, indent=2) + "\n"


def trial_seed(seed: int, t: int) -> int:
    return int.from_bytes(derive_key(seed, "trial", t)[:8], "big")


def workers_from_env() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}: must be a positive integer") from None
    if v < 1:
        raise ConfigError(f"{WORKERS_ENV}: must be a positive integer")
    return v


def map_trials(fn: Callable[[int], Any], trials: int, workers: int) -> list:
    """Evaluate ``fn`` on every trial index, results in trial order."""
    if workers <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, range(trials)))


def tally(outcomes: list, expected: Any) -> dict:
    counts = {"found": 0, "bottom": 0, "fail": 0, "correct": 0}
    for o in outcomes:
        counts[o.status.value] += 1
        if expected is not None and o.status is Status.FOUND and o.element == expected:
            counts["correct"] += 1
    return counts


def mc_summary(counts: dict, trials: int, expected: Any) -> dict:
    if sum(counts[k] for k in ("found", "bottom", "fail")) != trials:
        raise AssertionError("outcome counts do not add up to the trial count")
    out = {"trials": trials, "counts": counts}
    if expected is not None:
        ci = clopper_pearson(counts["correct"], trials)
        out.update(success_rate=ci.estimate, ci95=[ci.low, ci.high], expected=expected)
    return out


# ---------------------------------------------------------------------------
# Registry


class Entry:
    description = ""
    commands: tuple[str, ...] = ("run",)

    def inputs(self, cfg: ExperimentConfig) -> tuple:
        return tuple(cfg.inputs) if cfg.inputs is not None else (0,) * cfg.n

    def spec(self, cfg: ExperimentConfig):
        raise NotImplementedError

    def run(self, cfg: ExperimentConfig) -> dict:
        t = run_protocol(self.spec(cfg), self.inputs(cfg), cfg.seed)
        return {"outcome": t.outcome, "transcript": t.to_dict()}

    def mc(self, cfg: ExperimentConfig, workers: int) -> dict:
        raise ConfigError(f"protocol: {cfg.protocol} does not support mc")

    def audit(self, cfg: ExperimentConfig, workers: int) -> dict:
        raise ConfigError(f"protocol: {cfg.protocol} does not support audit")

    def _audit(self, cfg: ExperimentConfig, spec, domains, workers: int) -> AuditReport:
        return dp_audit(spec, domains, cfg.epsilons, coalition_cap=cfg.coalition_cap, budget=cfg.budget,
                        workers=workers)


class CommonPreludeEntry(Entry):
    description = "one-round common-element protocol over an additive summation channel"
    commands = ("run", "mc", "audit")

    def spec(self, cfg, audit=False):
        return common_prelude_spec(cfg.n, cfg.x_size, cfg.q, cfg.mode, cfg.sigma, audit=audit)

    def mc(self, cfg, workers):
        xs = self.inputs(cfg)
        expected = xs[0] if all(x == xs[0] for x in xs) else None
        spec = self.spec(cfg)
        q = spec.params["q"]
        engine = cfg.engine
        if engine == "auto":
            engine = "vectorized" if cfg.mode == "ideal" else "model"
        if engine == "vectorized":
            if cfg.mode != "ideal":
                raise ConfigError("engine: the vectorized engine simulates ideal-sum mode only")
            res = prelude_trials(xs, cfg.x_size, q, cfg.trials, cfg.seed)
            counts, causes = res["counts"], res["causes"]
        else:
            def one(t):
                tr = run_protocol(spec, xs, trial_seed(cfg.seed, t))
                cause = classify_failure(tr, cfg.x_size, expected) if expected is not None else None
                return tr.outcome, cause
            results = map_trials(one, cfg.trials, workers)
            counts = tally([o for o, _ in results], expected)
            causes = {}
            for _, c in results:
                if c is not None:
                    causes[c] = causes.get(c, 0) + 1
        out = mc_summary(counts, cfg.trials, expected)
        out.update(engine=engine, failure_causes=causes, failure_bounds=failure_bounds(cfg.n, cfg.x_size, q), q=q)
        return out

    def audit(self, cfg, workers):
        spec = self.spec(cfg, audit=True)
        report = self._audit(cfg, spec, list(range(cfg.x_size)), workers)
        if cfg.mode == "ideal":
            report.compose(2.0 ** -cfg.sigma, "nominal 2^-sigma for the split-and-mix summation")
        return report.to_dict()


class CommonTwoRoundEntry(Entry):
    description = "two-round common-element protocol with a histogram round and a shuffled reveal round"
    commands = ("run", "mc")

    def histogram(self, cfg):
        return LdpHistogram(cfg.epsilon) if cfg.histogram == "real" else InjectedHistogram()

    def spec(self, cfg):
        return common_two_round_spec(cfg.n, cfg.x_size, cfg.epsilon, cfg.delta, self.histogram(cfg), cfg.range_cap)

    def mc(self, cfg, workers):
        xs = self.inputs(cfg)
        expected = xs[0] if all(x == xs[0] for x in xs) else None
        engine = cfg.engine
        if engine == "auto":
            engine = "vectorized"
        hist = self.histogram(cfg)
        if engine == "vectorized":
            arr = np.asarray(xs, dtype=np.int64)

            def one(t):
                return two_round_vectorized(arr, cfg.x_size, cfg.epsilon, cfg.delta, trial_seed(cfg.seed, t),
                                            hist, cfg.range_cap)[0]
        else:
            spec = common_two_round_spec(cfg.n, cfg.x_size, cfg.epsilon, cfg.delta, hist, cfg.range_cap)

            def one(t):
                return run_protocol(spec, xs, trial_seed(cfg.seed, t)).outcome
        outcomes = map_trials(one, cfg.trials, workers)
        out = mc_summary(tally(outcomes, expected), cfg.trials, expected)
        out.update(engine=engine, histogram=hist.name)
        return out


class NestedOneRoundEntry(Entry):
    description = "one-round nested common-element protocol over a summation channel"
    commands = ("run", "mc", "audit")

    def instance(self, cfg) -> NestedInput:
        rng = RandomStream.from_seed(cfg.seed, "nested-instance").numpy()
        return NestedInput.valid(cfg.n, cfg.alpha, cfg.x_size, cfg.y_size, rng)

    def inputs(self, cfg):
        if cfg.inputs is not None:
            return tuple(tuple(v) if isinstance(v, list) else v for v in cfg.inputs)
        return self.instance(cfg).party_inputs()

    def spec(self, cfg, audit=False):
        return nested_one_round_spec(cfg.n, cfg.alpha, cfg.x_size, cfg.y_size, cfg.q, cfg.mode, cfg.sigma,
                                     audit=audit)

    def mc(self, cfg, workers):
        inp = self.instance(cfg)
        spec = self.spec(cfg)
        q = spec.params["q"]
        expected = inp.target()
        engine = "vectorized" if cfg.engine == "auto" and cfg.mode == "ideal" else cfg.engine
        if engine == "auto":
            engine = "model"
        if engine == "vectorized":
            if cfg.mode != "ideal":
                raise ConfigError("engine: the vectorized engine simulates ideal-sum mode only")
            res = nested_trials(inp, q, cfg.trials, cfg.seed)
            counts, causes = res["counts"], res["causes"]
        else:
            xs = inp.party_inputs()

            def one(t):
                tr = run_protocol(spec, xs, trial_seed(cfg.seed, t))
                return tr.outcome, classify_nested_failure(tr, inp)
            results = map_trials(one, cfg.trials, workers)
            counts = tally([o for o, _ in results], expected)
            causes = {}
            for _, c in results:
                if c is not None:
                    causes[c] = causes.get(c, 0) + 1
        out = mc_summary(counts, cfg.trials, expected)
        out.update(engine=engine, failure_causes=causes, failure_bounds=nested_failure_bounds(inp, q), q=q,
                   instance={"xs": inp.xs, "ys": inp.ys})
        return out

    def audit(self, cfg, workers):
        spec = self.spec(cfg, audit=True)
        split = spec.params["split"]
        ys = list(itertools.product(range(cfg.y_size), repeat=cfg.x_size))
        domains = [list(range(cfg.x_size))] * split + [ys] * (cfg.n - split)
        report = self._audit(cfg, spec, domains, workers)
        if cfg.mode == "ideal":
            report.compose(2.0 ** -cfg.sigma, "nominal 2^-sigma for the split-and-mix summation")
        return report.to_dict()


class NestedTwoRoundEntry(Entry):
    description = "nested common element solved by two sequential one-round sub-protocols"
    commands = ("run", "mc")

    def sub(self, cfg):
        hist = LdpHistogram(cfg.epsilon) if cfg.histogram == "real" else InjectedHistogram()
        if cfg.subprotocol == "two-round":
            return TwoRoundSub(hist, cfg.epsilon, cfg.delta, cfg.range_cap)
        return HeavyHitterSub(hist)

    def instance(self, cfg, seed):
        rng = RandomStream.from_seed(seed, "nested-instance").numpy()
        return NestedInput.valid(cfg.n, cfg.alpha, cfg.x_size, cfg.y_size, rng)

    def run(self, cfg):
        inp = self.instance(cfg, cfg.seed)
        res = nested_two_round(inp, cfg.seed, self.sub(cfg))
        return {"instance": {"xs": inp.xs, "ys": inp.ys}, "expected": inp.target(), **res.to_dict()}

    def mc(self, cfg, workers):
        sub = self.sub(cfg)

        def one(t):
            s = trial_seed(cfg.seed, t)
            inp = self.instance(cfg, s)
            return nested_two_round(inp, s, sub).outcome.judged(inp.target())
        outcomes = map_trials(one, cfg.trials, workers)
        counts = {"found": 0, "bottom": 0, "fail": 0, "correct": 0}
        for o in outcomes:
            counts[o.status.value] += 1
        counts["correct"] = counts["found"]
        ci = clopper_pearson(counts["correct"], cfg.trials)
        return {"trials": cfg.trials, "counts": counts, "success_rate": ci.estimate, "ci95": [ci.low, ci.high],
                "subprotocol": sub.name, "instances": "fresh valid instance per trial"}


class ToyEntry(Entry):
    commands = ("run", "audit")

    def __init__(self, description: str, build: Callable[[ExperimentConfig], Any], domain: Callable):
        self.description = description
        self.build = build
        self.domain = domain

    def spec(self, cfg):
        return self.build(cfg)

    def audit(self, cfg, workers):
        return self._audit(cfg, self.spec(cfg), self.domain(cfg), workers).to_dict()


class IkosSumEntry(Entry):
    description = "split-and-mix summation of scalar inputs through one shuffle"
    commands = ("run", "mc")

    def q(self, cfg):
        return cfg.q or 2**16

    def inputs(self, cfg):
        raw = cfg.inputs if cfg.inputs is not None else list(range(cfg.n))
        return tuple((int(v) % self.q(cfg),) for v in raw)

    def spec(self, cfg):
        return ikos_sum_spec(cfg.n, self.q(cfg), 1, cfg.sigma, mode="shares")

    def mc(self, cfg, workers):
        spec, xs, q = self.spec(cfg), self.inputs(cfg), self.q(cfg)
        want = (sum(x[0] for x in xs) % q,)
        ok = map_trials(lambda t: run_protocol(spec, xs, trial_seed(cfg.seed, t)).outcome == want, cfg.trials,
                        workers)
        return {"trials": cfg.trials, "exact": sum(ok), "expected_sum": want[0]}


REGISTRY: dict[str, Entry] = {
    "common-prelude": CommonPreludeEntry(),
    "common-two-round": CommonTwoRoundEntry(),
    "nested-one-round": NestedOneRoundEntry(),
    "nested-two-round": NestedTwoRoundEntry(),
    "ikos-sum": IkosSumEntry(),
    "shuffled-rr": ToyEntry("binary randomized response through one shuffle",
                            lambda c: shuffled_rr_spec(c.n, c.epsilon), lambda c: [0, 1]),
    "input-ignoring": ToyEntry("every party sends a fair coin", lambda c: input_ignoring_spec(c.n),
                               lambda c: [0, 1]),
    "identity": ToyEntry("every party sends its input in the clear", lambda c: identity_spec(c.n),
                         lambda c: list(range(c.x_size))),
}


# ---------------------------------------------------------------------------
# Commands


def execute(cfg: ExperimentConfig, workers: int = 1, record_timing: bool = False) -> dict:
    """Run one configured command and return the report dictionary."""
    cfg.validate()
    start = time.perf_counter()
    report: dict[str, Any] = {
        "tool": "shuffledp",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
    }
    if cfg.command == "info":
        report["protocols"] = {name: {"description": e.description, "commands": list(e.commands)}
                               for name, e in sorted(REGISTRY.items())}
        report["config_defaults"] = ExperimentConfig().to_dict()
        report["environment"] = {"workers_variable": WORKERS_ENV}
    else:
        entry = REGISTRY[cfg.protocol]
        if cfg.command not in entry.commands:
            raise ConfigError(f"command: {cfg.protocol} supports {', '.join(entry.commands)}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if cfg.command == "run":
                report["result"] = entry.run(cfg)
            elif cfg.command == "mc":
                report["result"] = entry.mc(cfg, workers)
            else:
                report["result"] = entry.audit(cfg, workers)
        report["warnings"] = sorted({str(w.message) for w in caught})
    if record_timing:
        report["wall_clock_seconds"] = time.perf_counter() - start
    return report


def csv_table(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    res = normalize(report.get("result", {}))
    if report["command"] == "audit":
        writer.writerow(["coalition_size", "epsilon", "max_delta"])
        for t, row in sorted(res["max_by_coalition_size"].items(), key=lambda kv: int(kv[0])):
            for e, d in zip(res["epsilons"], row):
                writer.writerow([t, e, d])
    elif report["command"] == "mc":
        counts = res.get("counts", {})
        cols = ["trials", *sorted(counts), "success_rate", "ci_low", "ci_high"]
        writer.writerow(cols)
        ci = res.get("ci95", ["", ""])
        writer.writerow([res.get("trials"), *(counts[k] for k in sorted(counts)), res.get("success_rate", ""),
                         ci[0], ci[1]])
    else:
        raise ConfigError("csv: tables are produced for mc and audit reports")
    return buf.getvalue()


def _seed(text: str) -> int:
    if not text.isdigit():
        raise argparse.ArgumentTypeError("seed must be a decimal integer")
    v = int(text)
    if v >= SEED_LIMIT:
        raise argparse.ArgumentTypeError("seed must be below 2^64")
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def _json_list(text: str) -> list:
    try:
        v = json.loads(text)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError("expected a JSON list") from None
    if not isinstance(v, list):
        raise argparse.ArgumentTypeError("expected a JSON list")
    return v


FLAGS: dict[str, dict] = {
    "protocol": {"type": str},
    "n": {"type": int},
    "x_size": {"type": int},
    "y_size": {"type": int},
    "alpha": {"type": float},
    "epsilon": {"type": float},
    "delta": {"type": float},
    "epsilons": {"type": _float_list, "help": "comma-separated audit grid, ascending"},
    "k": {"type": int},
    "sigma": {"type": int},
    "q": {"type": int},
    "trials": {"type": int},
    "coalition_cap": {"type": int},
    "seed": {"type": _seed, "help": "decimal 64-bit seed"},
    "histogram": {"choices": ["real", "injected"]},
    "mode": {"choices": ["ideal", "shares"]},
    "engine": {"choices": ["auto", "model", "vectorized"]},
    "subprotocol": {"choices": ["heavy-hitter", "two-round"]},
    "range_cap": {"type": int},
    "budget": {"type": int},
    "inputs": {"type": _json_list, "help": "JSON list of party inputs"},
    "output": {"type": str, "help": "report path (default stdout)"},
    "csv": {"type": str, "help": "optional CSV table path"},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shuffledp", description="Shuffle-model protocol simulation and auditing.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--record-timing", action="store_true", help="add wall-clock seconds to the report")
    for name, kw in FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"config: cannot read {args.config} ({e.strerror})") from None
        data = ExperimentConfig.parse(text).to_dict()
    for name in FLAGS:
        v = getattr(args, name)
        if v is not None:
            data[name] = v
    data["command"] = args.command
    return ExperimentConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        cfg = config_from_args(args)
        report = execute(cfg, workers_from_env(), args.record_timing)
        text = render(report)
        if cfg.output:
            with open(cfg.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if cfg.csv:
            with open(cfg.csv, "w", encoding="utf-8") as fh:
                fh.write(csv_table(report))
    except ConfigError as e:
        print(f"shuffledp: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as e:
        print(f"shuffledp: budget refusal: {e} (branch count {e.count})", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, TypeError) as e:
        print(f"shuffledp: invalid parameter: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - last-resort exit code
        print(f"shuffledp: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
