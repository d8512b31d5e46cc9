"""Command-line entry point: ``isingscan <subcommand> [flags]``.

Runs are driven by a JSON config (``--config``) whose fields can be
overridden by flags.  The fully resolved config is echoed to stderr.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from isingscan.detect import TestKind, TestSpec
from isingscan.graphs import (
    Family,
    GraphSpec,
    build_graph,
    coupling_from_graph,
    format_edge_list,
    graph_stats,
)
from isingscan.model import (
    ModelParams,
    SamplerConfig,
    format_sample_dump,
    glauber_sample,
    read_sample_dump,
    sample,
)
from isingscan.oracle import chain_correlation, fixed_point, second_moment_mixture, verify_inequalities
from isingscan.risk import SweepGrid, boundary_sweep, calibrate_magnetization_cutoff, predicted_boundary
from isingscan.signals import SignalClass, make_lattice_cube_class, make_mean_field_class, read_class

DEFAULTS = {
    "seed": None,
    "threads": None,
    "graph": {"family": "complete", "n": 10, "d": None, "p": None, "dim": None, "side": None, "L": 1, "seed": 0},
    "model": {"beta": 0.5, "scaling": None, "support": [], "A": 0.0},
    "signal": {"s": 2, "count": 2, "disjoint": True, "class_file": None},
    "test": {"kind": "conditional_scan", "delta": 0.1, "eta": 0.5, "cutoff": None, "delta0": None, "A": None,
             "level": 0.95, "calibration_replicates": 2000},
    "sampler": {"method": "auto", "num_samples": 1, "burn_in": None, "thinning": 1, "init": "plus",
                "condition": None},
    "sweep": {"betas": [0.5], "s_values": [2], "A_values": None, "tanhA_values": [0.5],
              "tests": ["conditional_scan"], "replicates": 100, "class_count": 10, "delta": 0.1, "eta": 0.5,
              "level": 0.95, "method": "auto", "burn_in": None},
    "oracle": {"instances": 500, "tol": 1e-10, "A": None, "mode": "finite_A", "B": 0.0, "chain_n": 14},
    "output": {"out": None, "json": None},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: Optional[int]
    threads: Optional[int]
    graph: dict
    model: dict
    signal: dict
    test: dict
    sampler: dict
    sweep: dict
    oracle: dict
    output: dict

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in DEFAULTS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key '{where}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"field '{where}' must be an object")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _validate(cfg: RunConfig) -> None:
    if cfg.seed is not None and (not isinstance(cfg.seed, int) or cfg.seed < 0):
        raise ConfigError("field 'seed' must be a nonnegative integer")
    try:
        spec = graph_spec(cfg)
    except ValueError as exc:
        raise ConfigError(f"field 'graph': {exc}") from exc
    n = spec.n
    support = cfg.model["support"]
    if any(not 0 <= int(i) < n for i in support):
        raise ConfigError(f"field 'model.support': index outside 0..{n - 1}")
    sig = cfg.signal
    if sig["class_file"] is None and spec.family is not Family.LATTICE and sig["disjoint"]:
        if sig["s"] * sig["count"] > n:
            raise ConfigError(f"field 'signal': {sig['count']} disjoint sets of size {sig['s']} exceed n = {n}")
    if cfg.threads is not None and int(cfg.threads) < 1:
        raise ConfigError("field 'threads' must be >= 1")


def parse_config(text: str, require_seed: bool = True) -> RunConfig:
    """Parse a JSON config, fill defaults and validate.

    Unknown keys, a missing seed and dimension mismatches are errors naming
    the offending field; JSON syntax errors report line and column.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if require_seed and raw.get("seed") is None:
        raise ConfigError("missing required field 'seed' (runs are always explicitly seeded)")
    cfg = RunConfig(**_merge(DEFAULTS, raw, ""))
    _validate(cfg)
    return cfg


def default_config() -> RunConfig:
    return RunConfig(**copy.deepcopy(DEFAULTS))


def graph_spec(cfg: RunConfig) -> GraphSpec:
    g = dict(cfg.graph)
    if g["family"] == "lattice" and g["side"] is not None and g["dim"] is not None:
        g["n"] = int(g["side"]) ** int(g["dim"])
    return GraphSpec(**g)


def build_coupling(cfg: RunConfig):
    spec = graph_spec(cfg)
    scaling = cfg.model["scaling"] or ("lattice" if spec.family is Family.LATTICE else "mean_field")
    return spec, coupling_from_graph(build_graph(spec), scaling)


def model_params(cfg: RunConfig, coupling) -> ModelParams:
    mu = np.zeros(coupling.n)
    mu[[int(i) for i in cfg.model["support"]]] = float(cfg.model["A"])
    return ModelParams(float(cfg.model["beta"]), coupling, mu)


def signal_class(cfg: RunConfig, spec: GraphSpec) -> SignalClass:
    sig = cfg.signal
    if sig["class_file"] is not None:
        return read_class(sig["class_file"])
    if spec.family is Family.LATTICE:
        return make_lattice_cube_class(spec.dim, spec.side, int(sig["s"]))
    return make_mean_field_class(spec.n, int(sig["s"]), int(sig["count"]), bool(sig["disjoint"]), cfg.seed or 0)


def resolve_threads(flag: Optional[int], cfg: RunConfig) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get("ISING_SCAN_THREADS")
    if env:
        return int(env)
    if cfg.threads is not None:
        return int(cfg.threads)
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# subcommands


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _need_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise ConfigError("this subcommand needs a seed (--seed or 'seed' in the config)")
    return int(cfg.seed)


def cmd_graph(args, cfg: RunConfig) -> int:
    spec, coupling = build_coupling(cfg)
    adj = build_graph(spec)
    stats = json.dumps(graph_stats(coupling).to_dict(), sort_keys=True)
    if cfg.output["out"] is None:
        sys.stdout.write(format_edge_list(adj))
        print(stats, file=sys.stderr)
    else:
        Path(cfg.output["out"]).write_text(format_edge_list(adj))
        print(stats)
    return 0


def cmd_sample(args, cfg: RunConfig) -> int:
    seed = _need_seed(cfg)
    _, coupling = build_coupling(cfg)
    params = model_params(cfg, coupling)
    sc = cfg.sampler
    if sc["method"] == "glauber":
        conf = SamplerConfig(int(sc["num_samples"]), sc["burn_in"], int(sc["thinning"]), seed, sc["init"],
                             sc["condition"])
        X = glauber_sample(params, conf)
    else:
        X = sample(params, int(sc["num_samples"]), seed, sc["method"], burn_in=sc["burn_in"],
                   condition=sc["condition"])
    _emit(format_sample_dump(X, seed), cfg.output["out"])
    return 0


def _test_spec(cfg: RunConfig, params: ModelParams, cls: SignalClass) -> TestSpec:
    t = cfg.test
    kind = TestKind(t["kind"])
    if kind is TestKind.CONDITIONAL_SCAN:
        return TestSpec(kind, cls, t["delta"], beta=params.beta, coupling=params.coupling)
    if kind is TestKind.NAIVE_SCAN:
        return TestSpec(kind, cls, t["delta"], eta=t["eta"])
    cutoff = t["cutoff"]
    if cutoff is None and t["delta0"] is None:
        null = params.with_field(np.zeros(params.n))
        cutoff = calibrate_magnetization_cutoff(null, int(t["calibration_replicates"]), float(t["level"]),
                                                _need_seed(cfg))
    return TestSpec(kind, cutoff=cutoff, delta0=t["delta0"], s=cls.set_size, A=t["A"])


def cmd_test(args, cfg: RunConfig) -> int:
    spec, coupling = build_coupling(cfg)
    params = model_params(cfg, coupling)
    cls = signal_class(cfg, spec)
    test = _test_spec(cfg, params, cls)
    if args.samples is not None:
        X, _ = read_sample_dump(args.samples)
        if X.shape[1] != coupling.n:
            raise ConfigError(f"sample dump has n = {X.shape[1]}, graph has n = {coupling.n}")
    else:
        X = sample(params, 1, _need_seed(cfg), cfg.sampler["method"], burn_in=cfg.sampler["burn_in"])
    lines = [json.dumps(test.apply(x).to_record(), sort_keys=True) for x in X]
    _emit("\n".join(lines) + "\n", cfg.output["out"])
    return 0


def cmd_oracle(args, cfg: RunConfig) -> int:
    o = cfg.oracle
    if args.action == "verify":
        report = verify_inequalities(int(o["instances"]), _need_seed(cfg), float(o["tol"]))
        _emit(report.to_json() + "\n", cfg.output["out"])
        return 0 if report.total_violations == 0 else 1
    if args.action == "fixed-point":
        fp = fixed_point(float(cfg.model["beta"]), float(o["B"]))
        _emit(json.dumps(fp.__dict__, sort_keys=True) + "\n", cfg.output["out"])
        return 0
    if args.action == "chain":
        corr = chain_correlation(int(o["chain_n"]), float(cfg.model["beta"]))
        _emit(json.dumps({"n": int(o["chain_n"]), "beta": float(cfg.model["beta"]),
                          "correlations": corr.tolist()}) + "\n", cfg.output["out"])
        return 0
    spec, coupling = build_coupling(cfg)
    params = ModelParams(float(cfg.model["beta"]), coupling, np.zeros(coupling.n))
    cls = signal_class(cfg, spec)
    A = None if o["A"] is None else float(o["A"])
    rep = second_moment_mixture(params, cls, A, o["mode"])
    out = {"value": rep.value, "A": None if rep.A is None or math.isinf(rep.A) else rep.A, "mode": rep.mode,
           "diagonal_terms": rep.diagonal_terms.tolist(), "cross_terms": rep.cross_terms.tolist(),
           "note": rep.note}
    _emit(json.dumps(out, sort_keys=True) + "\n", cfg.output["out"])
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    sw = dict(cfg.sweep)
    grid = SweepGrid(graph_spec(cfg), sw.pop("betas"), sw.pop("s_values"), seed=_need_seed(cfg), **sw)
    out = cfg.output["out"]
    records = boundary_sweep(grid, out, cfg.output["json"], threads=args.threads_resolved)
    if out is None:
        from isingscan.risk import format_records_csv

        sys.stdout.write(format_records_csv(records))
    return 0


def cmd_predict(args, cfg: RunConfig) -> int:
    pred = predicted_boundary(args.beta, args.n, args.s, args.family, args.c, args.C, args.beta_c)
    d = pred.to_dict()
    rate = "none" if pred.rate is None else f"{pred.rate:.6g}"
    text = f"regime {pred.regime.value}\nrate {rate}\n" + json.dumps(d, sort_keys=True) + "\n"
    _emit(text, cfg.output["out"])
    return 0


COMMANDS = {
    "graph": cmd_graph,
    "sample": cmd_sample,
    "test": cmd_test,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker cap; falls back to ISING_SCAN_THREADS")
    common.add_argument("--out", help="output path (stdout when omitted)")

    p = argparse.ArgumentParser(prog="isingscan", description="Sparse-signal detection in Ising models.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", parents=[common], help="emit edge list and spectral stats")
    g.add_argument("--family", choices=[f.value for f in Family])
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--dim", type=int)
    g.add_argument("--side", type=int)
    g.add_argument("--L", type=int)

    s = sub.add_parser("sample", parents=[common], help="emit a sample dump")
    s.add_argument("--beta", type=float)
    s.add_argument("--num-samples", type=int)
    s.add_argument("--method", choices=["auto", "exact", "lumped", "glauber"])

    t = sub.add_parser("test", parents=[common], help="apply a test to sampled or dumped configurations")
    t.add_argument("--samples", help="sample dump to test (one record per configuration)")
    t.add_argument("--kind", choices=[k.value for k in TestKind])
    t.add_argument("--beta", type=float)

    o = sub.add_parser("oracle", parents=[common], help="exact small-n oracles")
    o.add_argument("action", choices=["verify", "second-moment", "fixed-point", "chain"])
    o.add_argument("--instances", type=int)
    o.add_argument("--beta", type=float)
    o.add_argument("--B", type=float)
    o.add_argument("--A", type=float)
    o.add_argument("--mode", choices=["finite_A", "limit_A_infinity"])
    o.add_argument("--n", type=int, help="chain length")

    w = sub.add_parser("sweep", parents=[common], help="risk sweep to CSV")
    w.add_argument("--json", help="JSON-lines mirror of the records")

    r = sub.add_parser("predict", parents=[common], help="predicted detection regime")
    r.add_argument("--beta", type=float, required=True)
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--s", type=int, required=True)
    r.add_argument("--family", default="mean_field", choices=["mean_field", "lattice"])
    r.add_argument("--c", type=float, default=0.5)
    r.add_argument("--C", type=float, default=4.0)
    r.add_argument("--beta-c", type=float, default=None)
    return p


def _apply_flags(cfg: RunConfig, args) -> None:
    """Flags override config fields."""
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.output["out"] = args.out
    if args.command == "graph":
        for key in ("family", "n", "d", "p", "dim", "side", "L"):
            if getattr(args, key) is not None:
                cfg.graph[key] = getattr(args, key)
    if args.command in ("sample", "test", "oracle") and args.beta is not None:
        cfg.model["beta"] = args.beta
    if args.command == "sample":
        if args.num_samples is not None:
            cfg.sampler["num_samples"] = args.num_samples
        if args.method is not None:
            cfg.sampler["method"] = args.method
    if args.command == "test" and args.kind is not None:
        cfg.test["kind"] = args.kind
    if args.command == "oracle":
        for flag, key in (("instances", "instances"), ("B", "B"), ("A", "A"), ("mode", "mode"), ("n", "chain_n")):
            if getattr(args, flag) is not None:
                cfg.oracle[key] = getattr(args, flag)
    if args.command == "sweep" and args.json is not None:
        cfg.output["json"] = args.json


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config is not None:
            cfg = parse_config(Path(args.config).read_text())
        else:
            cfg = default_config()
        _apply_flags(cfg, args)
        _validate(cfg)
        args.threads_resolved = resolve_threads(args.threads, cfg)
        print(cfg.to_json(), file=sys.stderr)
        return COMMANDS[args.command](args, cfg)
    except (ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"isingscan {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
