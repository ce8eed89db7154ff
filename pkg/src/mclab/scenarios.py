"""Scenario runner: declarative parameter sweeps with reproducible output.

A scenario is a JSON document naming a kernel-family generator, a
parameter grid, one analysis, and optional threshold checks on the grouped
medians. Randomness is drawn from counter-based substreams keyed by
``(seed, grid index)``, so results are identical however the grid points
are scheduled; rows are canonicalized by grid index. Scenarios marked
``report_only`` never fail, matching the open problems they probe.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import product as iter_product

import jsonschema
import numpy as np

from . import __version__
from .chain_core import KernelSequence, ProbMeasure, sequence_from_json
from .merging import first_passage
from .rng import fold_path, substream
from .singular import singular_value_bounds
from .spectral import comparison_check
from .zoo import WeightedGraph, constant_rate_bd, general_bd, graph_kernel, lazy_stick, \
    perturbed_stick_pair, random_weights

MAX_INLINE_STATES = 64

SCENARIO_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "seed", "generator", "analysis", "grid"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "report_only": {"type": "boolean"},
        "replicas": {"type": "integer", "minimum": 1},
        "generator": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"type": "string", "minLength": 1},
                "params": {"type": "object"},
            },
        },
        "analysis": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["merging_time", "singular_domination", "spectral_comparison"]},
                "metric": {"enum": ["tv", "relsup"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "n_max": {"type": "integer", "minimum": 1},
                "block": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 0},
                "b": {"type": "number", "minimum": 1},
            },
        },
        "grid": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {"type": "array", "minItems": 1},
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind", "column", "by"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["doubling_ratio", "doubling_ratio_min"]},
                    "column": {"type": "string"},
                    "by": {"type": "string"},
                    "lo": {"type": "number"},
                    "hi": {"type": "number"},
                },
            },
        },
    },
}


@dataclass
class ResultSet:
    """Rows, grouped summary, and itemized invariant violations of one run."""

    name: str
    scenario_hash: str
    tool_version: str
    columns: list[str]
    rows: list[dict]
    summary: dict
    violations: list[str]
    series: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    report_only: bool = False

    @property
    def passed(self) -> bool:
        return self.report_only or not self.violations

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "scenario_hash": self.scenario_hash,
            "tool_version": self.tool_version,
            "columns": self.columns,
            "rows": self.rows,
            "summary": self.summary,
            "violations": self.violations,
            "report_only": self.report_only,
        }


# ---------------------------------------------------------------------------
# generators: family name -> (sequence, metadata) for one grid point


def _seed_from(rng) -> int:
    return int(rng.integers(0, 2 ** 62))


def _gen_bd_ratio_set(params: dict, point: dict, rng) -> tuple[KernelSequence, dict]:
    n = int(point["N"])
    lo = float(params.get("ratio_min", 1.2))
    hi = float(params.get("ratio_max", 2.0))
    hold_max = float(params.get("hold_max", 0.3))
    size = int(params.get("set_size", 32))
    kernels = []
    for _ in range(size):
        ratio = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        r = rng.uniform(0.0, hold_max)
        q = (1.0 - r) / (1.0 + ratio)
        kernels.append(constant_rate_bd(n, ratio * q, q, r))
    return KernelSequence.iid(kernels, seed=_seed_from(rng)), {}


def _gen_mirrored_bd_pair(params: dict, point: dict, rng) -> tuple[KernelSequence, dict]:
    n = int(point["N"])
    p, q, r = float(params["p"]), float(params["q"]), float(params["r"])
    return KernelSequence.cyclic([constant_rate_bd(n, p, q, r),
                                  constant_rate_bd(n, q, p, r)]), {}


def _sample_banded_chain(n: int, rng):
    # rejection-sample until both class flags hold
    for _ in range(10000):
        up = np.zeros(n + 1)
        down = np.zeros(n + 1)
        up[0] = rng.uniform(0.25, 0.75)
        down[n] = rng.uniform(0.25, 0.75)
        for x in range(1, n):
            while True:
                u, d = rng.uniform(0.25, 0.5, size=2)
                if u + d <= 0.75:
                    up[x], down[x] = u, d
                    break
        spec = general_bd(n, up, down)
        if spec.within_rate_band and spec.within_measure_band:
            return spec
    raise RuntimeError("could not sample a chain in the target class")


def _gen_uniform_bd_set(params: dict, point: dict, rng) -> tuple[KernelSequence, dict]:
    n = int(point["N"])
    size = int(params.get("set_size", 8))
    kernels = [_sample_banded_chain(n, rng).kernel for _ in range(size)]
    return KernelSequence.iid(kernels, seed=_seed_from(rng)), {}


def _gen_stick_pair(params: dict, point: dict, rng) -> tuple[KernelSequence, dict]:
    n = int(point["N"])
    q1, q2 = perturbed_stick_pair(n, float(params["p"]), float(params["q"]),
                                  float(params.get("r", 0.0)),
                                  float(params.get("eta1", 0.0)),
                                  float(params.get("eta2", 0.0)))
    return KernelSequence.cyclic([q1, q2]), {}


def _gen_lazy_stick_weights(params: dict, point: dict, rng) -> tuple[KernelSequence, dict]:
    n = int(point["N"])
    b = float(params.get("b", 2.0))
    size = int(params.get("set_size", 8))
    graph = lazy_stick(n)
    weight_draws = [random_weights(graph, b, _seed_from(rng)) for _ in range(size)]
    kernels = [graph_kernel(graph.with_weights(w))[0] for w in weight_draws]
    meta = {"graph": graph, "weights": weight_draws[0], "b": b}
    return KernelSequence.iid(kernels, seed=_seed_from(rng)), meta


def _gen_sequence_file(params: dict, point: dict, rng) -> tuple[KernelSequence, dict]:
    with open(params["path"], "r", encoding="utf-8") as fh:
        return sequence_from_json(json.load(fh)), {}


def _gen_inline_sequence(params: dict, point: dict, rng) -> tuple[KernelSequence, dict]:
    seq = sequence_from_json(params["sequence"])
    if seq.space.size > MAX_INLINE_STATES:
        raise ValueError(
            f"inline kernels are limited to {MAX_INLINE_STATES} states; "
            "use the sequence_file family for larger systems")
    return seq, {}


GENERATORS = {
    "bd_ratio_set": _gen_bd_ratio_set,
    "mirrored_bd_pair": _gen_mirrored_bd_pair,
    "uniform_bd_set": _gen_uniform_bd_set,
    "stick_pair": _gen_stick_pair,
    "lazy_stick_weights": _gen_lazy_stick_weights,
    "sequence_file": _gen_sequence_file,
    "inline_sequence": _gen_inline_sequence,
}


# ---------------------------------------------------------------------------
# analyses


def _run_merging(seq: KernelSequence, meta: dict, options: dict, rng) -> tuple[dict, list[str]]:
    metric = options.get("metric", "tv")
    t, tv, relsup = first_passage(seq, float(options.get("epsilon", 0.25)), metric,
                                  int(options.get("n_max", 1000)))
    row = {
        "t_merge": t if t is not None else -1,
        "tv_final": float(tv),
        "relsup_final": float(relsup),
    }
    return row, []


def _run_singular_domination(seq: KernelSequence, meta: dict, options: dict, rng) -> tuple[dict, list[str]]:
    mu0 = ProbMeasure.uniform(seq.space)
    report = singular_value_bounds(seq, mu0, int(options.get("n", 100)))
    worst = report.max_violation()
    violations = []
    if worst > 1e-12:
        violations.append(f"singular-value bound violated by {worst:.3e}")
    row = {"max_violation": worst, "sigma_product_final": float(report.sigma_product[-1])}
    return row, violations


def _run_spectral(seq: KernelSequence, meta: dict, options: dict, rng) -> tuple[dict, list[str]]:
    graph: WeightedGraph | None = meta.get("graph")
    if graph is None:
        raise ValueError("spectral_comparison needs a graph-backed generator family")
    report = comparison_check(graph, meta.get("weights"), options.get("b", meta.get("b")),
                              int(options.get("n_max", 0)))
    violations = []
    if not report.gap_holds:
        violations.append(f"gap comparison violated by {-report.gap_margin:.3e}")
    if not report.dominates():
        violations.append("convergence bound fell below the exact deviation")
    row = {"sigma_w": report.sigma_w, "sigma_unit": report.sigma_unit,
           "gap_margin": report.gap_margin}
    return row, violations


ANALYSES = {
    "merging_time": _run_merging,
    "singular_domination": _run_singular_domination,
    "spectral_comparison": _run_spectral,
}


# ---------------------------------------------------------------------------
# runner


def builtin_scenario_names() -> list[str]:
    root = importlib.resources.files("mclab") / "scenario_configs"
    return sorted(p.name.removesuffix(".json") for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(source) -> tuple[dict, bytes]:
    """Load a scenario from a path or a built-in name; returns (config, bytes)."""
    text: bytes | None = None
    candidate = importlib.resources.files("mclab") / "scenario_configs" / f"{source}.json"
    try:
        if candidate.is_file():
            text = candidate.read_bytes()
    except (TypeError, OSError):
        text = None
    if text is None:
        with open(source, "rb") as fh:
            text = fh.read()
    config = json.loads(text.decode("utf-8"))
    jsonschema.validate(config, SCENARIO_SCHEMA)
    if config["generator"]["family"] not in GENERATORS:
        raise ValueError(f"unknown generator family {config['generator']['family']!r}; "
                         f"known: {sorted(GENERATORS)}")
    return config, text


def _grid_points(config: dict) -> list[dict]:
    grid = config["grid"]
    keys = list(grid.keys())
    replicas = int(config.get("replicas", 1))
    points = []
    for combo in iter_product(*(grid[k] for k in keys)):
        for rep in range(replicas):
            point = dict(zip(keys, combo))
            point["replica"] = rep
            points.append(point)
    return points


def _median_by(rows: list[dict], column: str, by: str) -> dict:
    groups: dict = {}
    for row in rows:
        groups.setdefault(row[by], []).append(row[column])
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}


def _apply_checks(config: dict, rows: list[dict]) -> tuple[dict, list[str]]:
    summary: dict = {"medians": {}, "checks": []}
    violations: list[str] = []
    for check in config.get("checks", []):
        med = _median_by(rows, check["column"], check["by"])
        summary["medians"][f"{check['column']}|{check['by']}"] = med
        keys = sorted(med)
        ratios = []
        for small, large in zip(keys, keys[1:]):
            if med[small] <= 0:
                violations.append(f"median {check['column']} at {check['by']}={small} "
                                  "is non-positive; ratio undefined")
                continue
            ratios.append(med[large] / med[small])
        entry = {"check": check, "ratios": ratios, "pass": True}
        for ratio in ratios:
            lo = check.get("lo", -math.inf)
            hi = check.get("hi", math.inf) if check["kind"] == "doubling_ratio" else math.inf
            if not lo <= ratio <= hi:
                entry["pass"] = False
                violations.append(
                    f"{check['column']} doubling ratio {ratio:.4g} outside "
                    f"[{lo:.4g}, {'inf' if math.isinf(hi) else format(hi, '.4g')}]")
        summary["checks"].append(entry)
    return summary, violations


def run_scenario(source, seed: int | None = None, threads: int = 1) -> ResultSet:
    """Execute a scenario (path or built-in name) and return its results.

    ``seed`` overrides the config seed. Grid points may run concurrently;
    output is independent of the schedule.
    """
    config, raw = load_scenario(source)
    if seed is not None:
        config = dict(config, seed=int(seed))
    base_seed = int(config["seed"])
    digest = hashlib.sha256(raw).hexdigest()
    generate = GENERATORS[config["generator"]["family"]]
    params = config["generator"].get("params", {})
    analyze = ANALYSES[config["analysis"]["kind"]]
    options = config["analysis"]
    points = _grid_points(config)

    def run_point(index_point):
        index, point = index_point
        rng = substream(base_seed, fold_path(index))
        seq, meta = generate(params, point, rng)
        row, violations = analyze(seq, meta, options, rng)
        return index, {**point, **row}, violations

    violations: list[str] = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_point, enumerate(points)))
    else:
        outcomes = [run_point(ip) for ip in enumerate(points)]
    outcomes.sort(key=lambda item: item[0])
    rows = []
    for index, row, point_violations in outcomes:
        rows.append(row)
        violations.extend(f"grid[{index}]: {v}" for v in point_violations)

    summary, check_violations = _apply_checks(config, rows)
    violations.extend(check_violations)
    columns = list(rows[0].keys()) if rows else []
    series: dict[str, list[tuple[float, float]]] = {}
    for label, med in summary["medians"].items():
        try:
            series[f"median {label}"] = [(float(k), float(v)) for k, v in med.items()]
        except (TypeError, ValueError):
            pass
    return ResultSet(
        name=config["name"],
        scenario_hash=digest,
        tool_version=__version__,
        columns=columns,
        rows=rows,
        summary=summary,
        violations=violations,
        series=series,
        report_only=bool(config.get("report_only", False)),
    )


# ---------------------------------------------------------------------------
# emit


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def emit(fmt: str, result: ResultSet, path) -> None:
    """Write a result set as ``csv``, ``json`` or ``plotdata``.

    CSV starts with comment lines (scenario, hash, tool version, and a
    timestamp, the single non-deterministic line) followed by a stable
    header and one row per grid point. Plotdata is two-column ``x y``
    blocks separated by blank lines, one block per labeled series.
    """
    if fmt == "csv":
        lines = [
            f"# scenario: {result.name}",
            f"# hash: {result.scenario_hash}",
            f"# tool_version: {result.tool_version}",
            f"# timestamp: {datetime.now(timezone.utc).isoformat()}",
            ",".join(result.columns),
        ]
        for row in result.rows:
            lines.append(",".join(_format_cell(row.get(c)) for c in result.columns))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(result.to_json_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "plotdata":
        blocks = []
        for label, pairs in result.series.items():
            rows = "\n".join(f"{_format_cell(float(x))} {_format_cell(float(y))}" for x, y in pairs)
            blocks.append(f"# series: {label}\n{rows}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n\n".join(blocks) + "\n")
    else:
        raise ValueError(f"unknown emit format {fmt!r}")
