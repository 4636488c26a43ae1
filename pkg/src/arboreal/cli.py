"""Command-line interface.

Every command builds a :class:`RunConfig`, runs it and writes either plain
text, CSV, NDJSON, or a JSON envelope ``{"version", "config", "result"}``.
Cylinder events use edge-path notation: ``--edge o:i/j`` names the edge whose
upper endpoint is reached from the root by child indices ``i, j``; each
``--edge`` is followed by ``--open`` or ``--closed``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, rng
from .errors import ArborealError, OracleScaleError, ParameterError
from .params import Params, Regime, parse_beta

COMMANDS = (
    "params",
    "enumerate",
    "dp",
    "iterate-f",
    "cylinder",
    "sample",
    "couple",
    "conditional",
    "converge",
    "clusters",
    "independence",
    "verify",
)
FORMATS = ("text", "csv", "json", "ndjson")
OUTPUT_DIR_ENV = "ARBOREAL_OUTPUT_DIR"

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_INVALID = 2
EXIT_ORACLE_SCALE = 3


@dataclass
class RunConfig:
    """Everything needed to reproduce a run bit for bit."""

    command: str
    k: int = 3
    beta: float | str | None = None
    R: int | None = None
    n: int | None = None
    seed: int | None = None
    spec: list[tuple[str, bool]] = field(default_factory=list)
    output: str | None = None
    format: str = "text"
    threads: int = 1
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command {self.command!r}")
        if self.format not in FORMATS:
            raise ParameterError(f"unknown format {self.format!r}")
        if isinstance(self.beta, float) and math.isinf(self.beta):
            self.beta = "inf"
        self.spec = [(str(e), bool(s)) for e, s in self.spec]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec"] = [[e, s] for e, s in self.spec]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d["spec"] = [tuple(x) for x in d.get("spec", [])]
        return cls(**d)

    @property
    def params(self) -> Params:
        if self.beta is None:
            raise ParameterError(f"{self.command} needs --beta")
        return Params(self.k, self.beta)

    def need(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise ParameterError(f"{self.command} needs --{name}")
        return value


def envelope(config: RunConfig, result: Any) -> dict:
    return {"version": __version__, "config": config.to_dict(), "result": result}


def parse_envelope(text: str) -> tuple[RunConfig, Any]:
    data = json.loads(text)
    return RunConfig.from_dict(data["config"]), data["result"]


def _nice(x: float) -> str:
    """Render floats that are small fractions exactly (``2/3``), otherwise as ``repr``."""
    if isinstance(x, float) and math.isfinite(x):
        f = Fraction(x).limit_denominator(1000)
        if f.denominator > 1 and abs(float(f) - x) <= 1e-15 * max(1.0, abs(x)):
            return f"{f.numerator}/{f.denominator}"
        if f.denominator == 1 and float(f) == x:
            return str(f.numerator)
    return repr(x) if isinstance(x, float) else str(x)


# --------------------------------------------------------------------------
# command implementations; each returns (result, renderers)


def _rows_csv(rows: list[dict]) -> str:
    from .analysis import rows_to_csv

    return rows_to_csv(rows)


def _spec_states(config: RunConfig):
    from .tree import Edge

    if not config.spec:
        raise ParameterError("give at least one --edge with --open or --closed")
    states = {}
    for text, is_open in config.spec:
        e = Edge.parse(text).validate(config.k)
        if e in states:
            raise ParameterError(f"edge {text} given twice")
        states[e] = is_open
    return states


def cmd_params(config: RunConfig):
    p = config.params
    d = p.as_dict()
    text = "\n".join(f"{key}={_nice(val) if isinstance(val, float) else val}" for key, val in d.items())
    return d, {"text": text}


def cmd_enumerate(config: RunConfig):
    from .exact import DEFAULT_EDGE_CAP, enumerate_forests
    from .tree import Graph, WiredBall

    graph = config.options.get("graph", "triangle")
    if graph == "triangle":
        universe = Graph.triangle()
    elif graph.startswith("cycle:"):
        universe = Graph.cycle(int(graph.split(":", 1)[1]))
    elif graph == "wired":
        universe = WiredBall(config.k, config.need("R"))
    else:
        raise ParameterError(f"unknown graph {graph!r}; use triangle, cycle:N or wired")
    beta = parse_beta(config.need("beta"))
    en = enumerate_forests(universe, beta, cap=int(config.options.get("cap") or DEFAULT_EDGE_CAP))
    counts = en.count_by_size
    result = {
        "graph": graph,
        "n_edges": en.n_edges,
        "n_forests": int(en.masks.size),
        "Z": en.z,
        "forests_by_size": [int(c) for c in counts],
    }
    text = f"Z={_nice(en.z)}\nforests={result['n_forests']}\nedges={en.n_edges}"
    return result, {"text": text}


def cmd_dp(config: RunConfig):
    from .exact import dp_partition
    from .tree import WiredBall

    beta = parse_beta(config.need("beta"))
    table = dp_partition(WiredBall(config.k, config.need("R")), beta)
    result = {"log_Z": table.log_z, "Z": table.z, "root_edge_q": table.root_edge_q()}
    text = "\n".join(f"{key}={val!r}" for key, val in result.items())
    return result, {"text": text}


def cmd_iterate_f(config: RunConfig):
    from .exact import iterate_F

    p = config.params
    steps = int(config.options.get("steps") or 60)
    q0 = config.options.get("q0")
    q0 = 1.0 - p.p_beta if q0 is None else float(q0)
    qs = iterate_F(config.k, p.beta, q0, steps)
    rows = [{"step": i, "q": q, "gap": abs(q - p.lam)} for i, q in enumerate(qs)]
    text = "\n".join(f"{r['step']}\t{r['q']!r}\t{r['gap']:.3e}" for r in rows)
    return {"lambda": p.lam, "rows": rows}, {"text": text, "csv": _rows_csv(rows)}


def cmd_cylinder(config: RunConfig):
    from .exact import exact_cylinder_prob
    from .limit import limit_marginal_prob
    from .tree import WiredBall

    p = config.params
    states = _spec_states(config)
    result = {"limit": limit_marginal_prob(p, states)}
    if config.R is not None:
        result["exact"] = exact_cylinder_prob(WiredBall(config.k, config.R), p.beta, states)
        result["R"] = config.R
    text = f"{result['limit']:.15g}"
    if "exact" in result:
        text = f"limit={text}\nexact={result['exact']:.15g}"
    return result, {"text": text}


def _reaches_boundary(ball, cfg: np.ndarray) -> np.ndarray:
    """Whether the root is joined to depth ``R`` inside each sampled ball."""
    n = cfg.shape[0]
    reached = np.zeros((n, ball.n_vertices), dtype=bool)
    reached[:, 0] = True
    verts = np.arange(ball.n_vertices)
    for d in range(1, ball.radius + 1):
        lvl = verts[ball.depth == d]
        reached[:, lvl] = reached[:, ball.parent[lvl]] & cfg[:, lvl - 1]
    return reached[:, ball.depth == ball.radius].any(axis=1)


def _sample_records(config: RunConfig, arrays: dict[str, np.ndarray], ball, extra: Callable[[int], dict]):
    from .tree import EdgeConfig

    n1 = config.k
    reach = {name: _reaches_boundary(ball, a) for name, a in arrays.items()}

    for j in range(next(iter(arrays.values())).shape[0]):
        rec = {"seed": config.seed, "index": j, "R": config.R}
        for name, a in arrays.items():
            prefix = "" if name == "" else f"{name}_"
            rec[prefix + "hex"] = EdgeConfig(ball, a[j]).to_hex()
            rec[prefix + "ball1_open"] = int(a[j, :n1].sum())
            rec[prefix + "reaches_boundary"] = bool(reach[name][j])
        rec.update(extra(j))
        yield rec


def _ndjson(records) -> str:
    return "".join(json.dumps(r) + "\n" for r in records)


def cmd_sample(config: RunConfig):
    from .sampler import limit_batch
    from .tree import TreeBall

    p = config.params
    R, n = config.need("R"), config.need("n")
    arr = limit_batch(p, R, n, config.seed, threads=config.threads)
    ball = TreeBall(config.k, R)
    records = list(_sample_records(config, {"": arr}, ball, lambda j: {"regime": p.regime.value}))
    return records, {"ndjson": _ndjson(records), "text": _ndjson(records)}


def cmd_couple(config: RunConfig):
    from .sampler import coupled_batch
    from .tree import TreeBall

    betas = config.options.get("betas")
    if not betas:
        raise ParameterError("couple needs --betas, e.g. 0.5,2,inf")
    R, n = config.need("R"), config.need("n")
    arr = coupled_batch(config.k, betas, R, n, config.seed)
    ball = TreeBall(config.k, R)
    names = [f"beta{i}" for i in range(len(betas))]
    nested = np.ones(n, dtype=bool)
    for i in range(len(betas) - 1):
        nested &= ~(arr[i] & ~arr[i + 1]).any(axis=1)
    records = list(
        _sample_records(
            config,
            dict(zip(names, arr)),
            ball,
            lambda j: {"betas": [str(b) for b in betas], "nested": bool(nested[j])},
        )
    )
    return records, {"ndjson": _ndjson(records), "text": _ndjson(records)}


def cmd_conditional(config: RunConfig):
    from .sampler import conditional_batch
    from .tree import Edge, TreeBall

    p = config.params
    R, n = config.need("R"), config.need("n")
    edge = Edge.parse(config.options.get("edge") or "o:0")
    w_open, w_closed = conditional_batch(p, R, edge, n, config.seed)
    ball = TreeBall(config.k, R)
    nested = ~(w_open & ~w_closed).any(axis=1)
    records = list(
        _sample_records(
            config,
            {"open": w_open, "closed": w_closed},
            ball,
            lambda j: {"edge": str(edge), "regime": p.regime.value, "nested": bool(nested[j])},
        )
    )
    return records, {"ndjson": _ndjson(records), "text": _ndjson(records)}


def cmd_converge(config: RunConfig):
    from .analysis import convergence_report
    from .limit import CylinderSpec

    p = config.params
    spec = CylinderSpec.from_states(config.k, _spec_states(config))
    Rs = config.options.get("Rs") or [spec.max_depth + 1 + i for i in range(0, 20, 2)]
    rows = [r.as_dict() for r in convergence_report(config.k, p.beta, spec, Rs)]
    text = "\n".join(f"{r['R']}\t{r['exact']!r}\t{r['limit']!r}\t{r['gap']:.3e}" for r in rows)
    return rows, {"csv": _rows_csv(rows), "text": text}


def cmd_clusters(config: RunConfig):
    from .analysis import ClusterStats, critical_cluster_law, truncated_tv
    from .sampler import explore_batch

    p = config.params
    R, n = config.need("R"), config.need("n")
    max_size = int(config.options.get("max_size") or 10)
    batch = explore_batch(p, R, n, config.seed, threads=config.threads, backend=config.options.get("backend"))
    stats = ClusterStats.from_batch(batch)
    emp = stats.conditional_law(max_size)
    law = critical_cluster_law(config.k, max_size)
    ref = law.as_array()
    rows = [
        {"size": m, "count": stats.size_histogram.get(m, 0), "empirical": float(emp[m - 1]), "reference": float(ref[m - 1])}
        for m in range(1, max_size + 1)
    ]
    result = {
        "rows": rows,
        "n": n,
        "survival": stats.survival(config.seed).as_dict(),
        "tv_truncated": truncated_tv(emp, ref) if emp.sum() > 0 else None,
        "reference_tail": law.tail,
    }
    text = _rows_csv(rows) + f"# survival={stats.survival().value!r} tv={result['tv_truncated']!r}\n"
    return result, {"csv": _rows_csv(rows), "text": text}


def cmd_independence(config: RunConfig):
    from .analysis import independence_test

    p = config.params
    E2 = config.options.get("E2") or [config.k - 1]
    rep = independence_test(
        config.k,
        p.beta,
        E2,
        config.need("R"),
        config.need("n"),
        config.seed,
        threads=config.threads,
        backend=config.options.get("backend"),
    )
    d = rep.as_dict()
    d["discrepancy_z"] = rep.discrepancy_z
    keys = ("conditioning_target", "conditioning_truncated", "joint", "marg1", "marg2", "discrepancy", "discrepancy_stderr", "t2_tv")
    text = f"conditioning={rep.conditioning.value!r} +- {rep.conditioning.stderr:.2e}\n" + "\n".join(
        f"{key}={d[key]!r}" for key in keys
    )
    return d, {"text": text}


def cmd_verify(config: RunConfig):
    from .acceptance import format_table, run_all

    scale = float(config.options.get("scale") or 1.0)
    only = config.options.get("only")
    results = run_all(scale=scale, only=set(only) if only else None)
    rows = [{"criterion": r.number, "title": r.title, "passed": r.passed, "summary": r.summary, "seconds": r.seconds} for r in results]
    return {"rows": rows, "all_passed": all(r.passed for r in results)}, {"text": format_table(results), "csv": _rows_csv(rows)}


HANDLERS: dict[str, Callable[[RunConfig], tuple[Any, dict]]] = {
    "params": cmd_params,
    "enumerate": cmd_enumerate,
    "dp": cmd_dp,
    "iterate-f": cmd_iterate_f,
    "cylinder": cmd_cylinder,
    "sample": cmd_sample,
    "couple": cmd_couple,
    "conditional": cmd_conditional,
    "converge": cmd_converge,
    "clusters": cmd_clusters,
    "independence": cmd_independence,
    "verify": cmd_verify,
}
SEEDED = {"sample", "couple", "conditional", "clusters", "independence"}
DEFAULT_FORMAT = {"sample": "ndjson", "couple": "ndjson", "conditional": "ndjson", "converge": "csv", "clusters": "csv"}


def render(config: RunConfig, result: Any, renderers: dict[str, str]) -> str:
    fmt = config.format
    if fmt == "json":
        return json.dumps(envelope(config, result), indent=2, default=_json_default) + "\n"
    if fmt == "ndjson":
        if "ndjson" in renderers:
            return renderers["ndjson"]
        return json.dumps(envelope(config, result), default=_json_default) + "\n"
    if fmt not in renderers:
        raise ParameterError(f"{config.command} does not support --format {fmt}")
    out = renderers[fmt]
    return out if out.endswith("\n") else out + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Regime):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def run(config: RunConfig) -> tuple[int, str]:
    """Execute ``config``; returns ``(exit status, rendered output)``."""
    if config.command in SEEDED and config.seed is None:
        raise ParameterError("seed must be set before run(); main() draws one when omitted")
    if config.seed is not None:
        config.seed = rng.check_seed(config.seed)
    result, renderers = HANDLERS[config.command](config)
    status = EXIT_OK
    if config.command == "verify" and not result["all_passed"]:
        status = EXIT_FAILED_CHECKS
    return status, render(config, result, renderers)


# --------------------------------------------------------------------------
# argument parsing


class _EdgeAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        spec = getattr(namespace, "spec", None) or []
        spec.append([values, None])
        namespace.spec = spec


class _StateAction(argparse.Action):
    def __init__(self, option_strings, dest, state: bool, **kwargs):
        self.state = state
        super().__init__(option_strings, dest, nargs=0, **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        spec = getattr(namespace, "spec", None) or []
        if not spec or spec[-1][1] is not None:
            parser.error(f"{option_string} must follow an --edge")
        spec[-1][1] = self.state


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, default=3, help="tree degree (default 3)")
    common.add_argument("--beta", help="edge weight, a positive number or 'inf'")
    common.add_argument("--R", "-R", type=int, help="ball radius / truncation depth")
    common.add_argument("--n", "-n", type=int, help="number of samples")
    common.add_argument("--seed", type=int, help="master seed (drawn at random and reported if omitted)")
    common.add_argument("--format", choices=FORMATS, help="output format")
    common.add_argument("--output", "-o", help=f"output file (relative paths resolve against ${OUTPUT_DIR_ENV})")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling")

    edges = argparse.ArgumentParser(add_help=False)
    edges.add_argument("--edge", action=_EdgeAction, metavar="o:i/j", help="edge by path to its upper endpoint")
    edges.add_argument("--open", action=_StateAction, state=True, help="previous --edge is open")
    edges.add_argument("--closed", action=_StateAction, state=False, help="previous --edge is closed")

    parser = argparse.ArgumentParser(prog="arboreal", description="Arboreal gas on regular trees with wired boundary.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    sub.add_parser("params", parents=[common], help="derived constants and regime")
    p = sub.add_parser("enumerate", parents=[common], help="brute-force forest enumeration")
    p.add_argument("--graph", default="triangle", help="triangle, cycle:N or wired (uses --k, --R)")
    p.add_argument("--cap", type=int, help="maximum number of edges")
    sub.add_parser("dp", parents=[common], help="wired-ball partition function")
    p = sub.add_parser("iterate-f", parents=[common], help="iterate the root-edge recursion")
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--q0", type=float, help="starting value (default 1 - p_beta)")
    sub.add_parser("cylinder", parents=[common, edges], help="limit (and, with --R, exact) cylinder probability")
    sub.add_parser("sample", parents=[common], help="NDJSON samples of the wired limit")
    p = sub.add_parser("couple", parents=[common], help="monotonically coupled samples")
    p.add_argument("--betas", type=_str_list, help="ascending, comma separated")
    p = sub.add_parser("conditional", parents=[common], help="coupled samples given a root edge open/closed")
    p.add_argument("--edge", default="o:0")
    p = sub.add_parser("converge", parents=[common, edges], help="exact vs limit cylinder probability over R")
    p.add_argument("--Rs", type=_int_list, help="comma separated radii")
    for name in ("clusters", "independence"):
        p = sub.add_parser(name, parents=[common], help="root-cluster statistics" if name == "clusters" else "split independence check")
        p.add_argument("--backend", choices=("python", "compiled"))
        if name == "clusters":
            p.add_argument("--max-size", type=int, default=10)
        else:
            p.add_argument("--E2", type=_int_list, help="root edges forming E2 (default: the last one)")
    p = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    p.add_argument("--scale", type=float, default=1.0, help="sample-size multiplier (below 1 for smoke runs)")
    p.add_argument("--only", type=_int_list, help="criterion numbers to run")
    return parser


_OPTION_KEYS = ("graph", "cap", "steps", "q0", "betas", "Rs", "backend", "max_size", "E2", "scale", "only")


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    spec = getattr(ns, "spec", None) or []
    if ns.command in ("cylinder", "converge"):
        for text, state in spec:
            if state is None:
                raise ParameterError(f"--edge {text} needs --open or --closed")
    options = {key: getattr(ns, key) for key in _OPTION_KEYS if getattr(ns, key, None) is not None}
    if ns.command == "conditional":
        options["edge"] = ns.edge
    return RunConfig(
        command=ns.command,
        k=ns.k,
        beta=ns.beta,
        R=ns.R,
        n=ns.n,
        seed=ns.seed,
        spec=[(t, s) for t, s in spec] if ns.command in ("cylinder", "converge") else [],
        output=ns.output,
        format=ns.format or DEFAULT_FORMAT.get(ns.command, "text"),
        threads=ns.threads,
        options=options,
    )


def _output_path(name: str) -> Path:
    path = Path(name)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        config = config_from_args(ns)
        if config.command in SEEDED and config.seed is None:
            config.seed = secrets.randbits(63)
            print(f"seed={config.seed}", file=sys.stderr)
        status, out = run(config)
    except OracleScaleError as exc:
        print(f"arboreal: {exc}", file=sys.stderr)
        return EXIT_ORACLE_SCALE
    except (ArborealError, ValueError) as exc:
        print(f"arboreal: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if config.output:
        _output_path(config.output).write_text(out)
    else:
        sys.stdout.write(out)
    return status


if __name__ == "__main__":
    sys.exit(main())
