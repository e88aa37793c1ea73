"""Instance generation, serialization, and experiment sweeps.

Instance files are JSON documents with version tag "copra-instance/1";
request popularity follows a power law over content rank, integerized per
slot with the largest-remainder method so generation is reproducible
bit-for-bit under a fixed seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import greedy, lda, model, oracle
from .model import Instance, RecommendationColumn, Solution

INSTANCE_VERSION = "copra-instance/1"
SOLUTION_VERSION = "copra-solution/1"

ALGORITHMS = ("oracle", "greedy", "lda", "lda-norec")


class InstanceIOError(Exception):
    pass


class InstanceJsonError(InstanceIOError):
    """The file is not valid JSON."""


class InstanceSchemaError(InstanceIOError):
    """The document is valid JSON but not a valid instance."""


class InstanceVersionError(InstanceIOError):
    """The document declares an unsupported format version."""


@dataclass(frozen=True)
class GenConfig:
    num_contents: int = 20
    num_slots: int = 6
    rec_limit: int = 2
    zipf_gamma: float = 0.56
    size_range: Tuple[int, int] = (1, 10)
    cache_fraction: float = 0.5
    rho: float = 0.3
    prob_range: Tuple[float, float] = (0.6, 1.0)
    max_aoi: int = 2
    relation_density: float = 0.3
    total_requests_per_slot: int = 100
    cost_server: float = 2.0
    cost_cache: float = 1.0
    size_similar_relations: bool = False
    size_similarity_tol: int = 2
    seed: int = 0


def validate_config(cfg: GenConfig) -> List[str]:
    bad = []
    if cfg.num_contents <= 0 or cfg.num_slots <= 0:
        bad.append("num_contents and num_slots must be positive")
    if cfg.zipf_gamma < 0:
        bad.append("zipf_gamma must be nonnegative")
    if not (0 < cfg.rho <= 1):
        bad.append("rho must lie in (0, 1]")
    if not (0 < cfg.cache_fraction <= 1):
        bad.append("cache_fraction must lie in (0, 1]")
    if not (1 <= cfg.size_range[0] <= cfg.size_range[1]):
        bad.append("size_range must be well ordered and positive")
    lo, hi = cfg.prob_range
    if not (0 < lo <= hi <= 1):
        bad.append("prob_range must be well ordered inside (0, 1]")
    if not (0 <= cfg.relation_density <= 1):
        bad.append("relation_density must lie in [0, 1]")
    if cfg.max_aoi < 0 or cfg.rec_limit < 0:
        bad.append("max_aoi and rec_limit must be nonnegative")
    if cfg.total_requests_per_slot < 0:
        bad.append("total_requests_per_slot must be nonnegative")
    if not cfg.cost_server > cfg.cost_cache > 0:
        bad.append("cost_server > cost_cache > 0 required")
    return bad


def zipf_weights(n: int, gamma: float) -> np.ndarray:
    """Popularity of rank i proportional to (i + 1) ** -gamma, normalized."""
    ranks = np.arange(1, n + 1, dtype=float)
    w = ranks ** (-gamma)
    return w / w.sum()


def largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Deterministic integerization of `total * weights`.

    Floors every share and hands the leftover units to the largest
    fractional remainders, ties toward the lower index (the more popular
    content).
    """
    shares = weights * total
    counts = np.floor(shares).astype(int)
    leftover = int(round(total - counts.sum()))
    if leftover > 0:
        remainders = shares - counts
        order = np.lexsort((np.arange(len(weights)), -remainders))
        for idx in order[:leftover]:
            counts[idx] += 1
    return counts


def generate_instance(cfg: GenConfig) -> Instance:
    """Build a random instance; identical seeds give identical instances."""
    bad = validate_config(cfg)
    if bad:
        raise ValueError("; ".join(bad))
    rng = np.random.default_rng(cfg.seed)
    I, T = cfg.num_contents, cfg.num_slots

    size = rng.integers(cfg.size_range[0], cfg.size_range[1] + 1, size=I).astype(float)
    weights = zipf_weights(I, cfg.zipf_gamma)
    per_slot = largest_remainder(weights, cfg.total_requests_per_slot)
    requests = np.tile(per_slot, (T, 1)).astype(float)
    aoi_limit = np.full(I, cfg.max_aoi, dtype=int)

    fams = np.empty((T, I), dtype=object)
    alphas = np.zeros((T, I))
    recip_cap = 0.95 / cfg.max_aoi if cfg.max_aoi > 0 else 1.0
    for t in range(T):
        for i in range(I):
            fam = model.AOI_COST_FAMILIES[int(rng.integers(0, 3))]
            if fam == model.RECIPROCAL:
                alpha = float(rng.uniform(0.0, recip_cap))
            else:
                alpha = float(rng.uniform(0.0, 1.0))
            fams[t, i] = fam
            alphas[t, i] = alpha

    lo, hi = cfg.prob_range
    relations: List[Dict[int, np.ndarray]] = [dict() for _ in range(I)]
    for i in range(I):
        for j in range(I):
            if i == j:
                continue
            if cfg.size_similar_relations and abs(size[i] - size[j]) > cfg.size_similarity_tol:
                continue
            if rng.uniform() < cfg.relation_density:
                relations[i][j] = rng.uniform(lo, hi, size=cfg.max_aoi + 1)

    total_size = float(size.sum())
    inst = Instance(
        num_contents=I,
        num_slots=T,
        size=size,
        requests=requests,
        aoi_limit=aoi_limit,
        cost_family=fams,
        cost_alpha=alphas,
        relations=tuple(relations),
        cache_capacity=cfg.cache_fraction * total_size,
        backhaul_capacity=cfg.rho * total_size,
        cost_server=cfg.cost_server,
        cost_cache=cfg.cost_cache,
        rec_limit=cfg.rec_limit,
    )
    report = model.validate_instance(inst)
    if report:
        raise ValueError("generated an invalid instance: " + "; ".join(report))
    return inst


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def instance_to_dict(inst: Instance) -> dict:
    return {
        "version": INSTANCE_VERSION,
        "num_contents": inst.num_contents,
        "num_slots": inst.num_slots,
        "size": inst.size.tolist(),
        "requests": inst.requests.tolist(),
        "aoi_limit": inst.aoi_limit.tolist(),
        "aoi_cost": [
            [
                {"family": str(inst.cost_family[t, i]),
                 "alpha": float(inst.cost_alpha[t, i])}
                for i in range(inst.num_contents)
            ]
            for t in range(inst.num_slots)
        ],
        "relations": [
            [
                {"content": j, "probs": np.asarray(probs).tolist()}
                for j, probs in sorted(inst.relations[i].items())
            ]
            for i in range(inst.num_contents)
        ],
        "cache_capacity": float(inst.cache_capacity),
        "backhaul_capacity": float(inst.backhaul_capacity),
        "cost_server": float(inst.cost_server),
        "cost_cache": float(inst.cost_cache),
        "rec_limit": inst.rec_limit,
    }


_REQUIRED_FIELDS = (
    "version", "num_contents", "num_slots", "size", "requests", "aoi_limit",
    "aoi_cost", "relations", "cache_capacity", "backhaul_capacity",
    "cost_server", "cost_cache", "rec_limit",
)


def instance_from_dict(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceSchemaError("instance document must be a JSON object")
    for key in _REQUIRED_FIELDS:
        if key not in doc:
            raise InstanceSchemaError(f"missing field {key!r}")
    if doc["version"] != INSTANCE_VERSION:
        raise InstanceVersionError(
            f"unsupported version {doc['version']!r}, expected {INSTANCE_VERSION!r}"
        )
    try:
        I, T = int(doc["num_contents"]), int(doc["num_slots"])
        fams = np.empty((T, I), dtype=object)
        alphas = np.zeros((T, I))
        for t in range(T):
            for i in range(I):
                cell = doc["aoi_cost"][t][i]
                fams[t, i] = cell["family"]
                alphas[t, i] = float(cell["alpha"])
        relations = []
        for i in range(I):
            rel = {}
            for entry in doc["relations"][i]:
                rel[int(entry["content"])] = np.asarray(entry["probs"], dtype=float)
            relations.append(rel)
        inst = Instance(
            num_contents=I,
            num_slots=T,
            size=np.asarray(doc["size"], dtype=float),
            requests=np.asarray(doc["requests"], dtype=float).reshape(T, I),
            aoi_limit=np.asarray(doc["aoi_limit"], dtype=int),
            cost_family=fams,
            cost_alpha=alphas,
            relations=tuple(relations),
            cache_capacity=float(doc["cache_capacity"]),
            backhaul_capacity=float(doc["backhaul_capacity"]),
            cost_server=float(doc["cost_server"]),
            cost_cache=float(doc["cost_cache"]),
            rec_limit=int(doc["rec_limit"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise InstanceSchemaError(f"malformed instance data: {exc}") from exc
    report = model.validate_instance(inst)
    if report:
        raise InstanceSchemaError("instance violates invariants: " + "; ".join(report))
    return inst


def dumps_canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_instance(inst: Instance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(instance_to_dict(inst)))


def read_instance(path: str) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceJsonError(f"not valid JSON: {exc}") from exc
    return instance_from_dict(doc)


def solution_to_dict(inst: Instance, sol: Solution, cost: Optional[float] = None) -> dict:
    recs = []
    for (t, i), col in sorted(sol.recs.items()):
        recs.append({
            "slot": t,
            "content": i,
            "items": sorted([j, a] for (j, a) in col.items),
        })
    if cost is None:
        cost = model.total_cost(inst, sol)
    return {
        "version": SOLUTION_VERSION,
        "aoi": sol.plan.aoi.tolist(),
        "recommendations": recs,
        "cost": float(cost),
    }


def solution_from_dict(inst: Instance, doc: dict) -> Solution:
    if not isinstance(doc, dict) or "aoi" not in doc or "recommendations" not in doc:
        raise InstanceSchemaError("solution document needs 'aoi' and 'recommendations'")
    if doc.get("version") != SOLUTION_VERSION:
        raise InstanceVersionError(
            f"unsupported version {doc.get('version')!r}, expected {SOLUTION_VERSION!r}"
        )
    plan = model.CachePlan(np.asarray(doc["aoi"], dtype=int))
    recs = {}
    for entry in doc["recommendations"]:
        t, i = int(entry["slot"]), int(entry["content"])
        items = [(int(j), int(a)) for j, a in entry["items"]]
        recs[(t, i)] = RecommendationColumn.build(inst, t, i, items)
    return Solution(plan, recs)


def read_solution(inst: Instance, path: str) -> Solution:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceJsonError(f"not valid JSON: {exc}") from exc
    return solution_from_dict(inst, doc)


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


@dataclass
class SweepSpec:
    parameter: str              # GenConfig field being swept
    values: Sequence
    seeds: Sequence[int]
    algorithms: Sequence[str] = ("greedy", "lda")
    base: GenConfig = field(default_factory=GenConfig)
    lda_params: lda.LdaParams = field(default_factory=lda.LdaParams)
    oracle_limits: oracle.OracleLimits = field(default_factory=oracle.OracleLimits)


@dataclass
class ResultRow:
    parameter: str
    value: object
    seed: object                # int, or "mean" for aggregate rows
    algorithm: str
    cost: Optional[float]
    lbd: Optional[float]
    gap: Optional[float]
    wall_time: Optional[float]
    status: str = "ok"


def _run_cell(spec: SweepSpec, value, seed: int, algorithm: str) -> ResultRow:
    cfg = replace(spec.base, **{spec.parameter: value}, seed=seed)
    inst = generate_instance(cfg)
    t0 = time.perf_counter()
    cost = lbd = None
    status = "ok"
    try:
        if algorithm == "greedy":
            cost = model.total_cost(inst, greedy.greedy_schedule(inst))
        elif algorithm == "oracle":
            cost = oracle.solve_exact(inst, spec.oracle_limits).cost
        elif algorithm in ("lda", "lda-norec"):
            solved = inst if algorithm == "lda" else dataclasses.replace(inst, rec_limit=0)
            res = lda.run_lda(solved, spec.lda_params)
            cost, lbd = res.incumbent_cost, res.lbd
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    except oracle.SearchSpaceTooLarge as exc:
        status = f"skipped: {exc}"
    except Exception as exc:  # record and continue the sweep
        status = f"error: {type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0
    return ResultRow(spec.parameter, value, seed, algorithm, cost, lbd, None,
                     wall, status)


def run_experiment(spec: SweepSpec, jobs: int = 1) -> List[ResultRow]:
    """Run every (value, seed, algorithm) cell and append per-point averages.

    Per-cell failures are recorded in the status column and do not stop
    the sweep.  The gap column relates each cost to the best reference of
    its (value, seed) cell: the exact optimum when available, otherwise
    the LDA lower bound.
    """
    for algorithm in spec.algorithms:
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    cells = [
        (value, seed, algorithm)
        for value in spec.values
        for seed in spec.seeds
        for algorithm in spec.algorithms
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_star, [(spec,) + c for c in cells]))
    else:
        rows = [_run_cell(spec, *c) for c in cells]

    # Reference value per (value, seed): oracle cost, else LDA lower bound.
    ref: Dict[Tuple, float] = {}
    for row in rows:
        if row.algorithm == "oracle" and row.cost is not None:
            ref[(row.value, row.seed)] = row.cost
    for row in rows:
        key = (row.value, row.seed)
        if key not in ref and row.algorithm == "lda" and row.lbd is not None:
            ref[key] = row.lbd
    for row in rows:
        r = ref.get((row.value, row.seed))
        if r is not None and row.cost is not None and r > 0:
            row.gap = (row.cost - r) / r

    means: List[ResultRow] = []
    for value in spec.values:
        for algorithm in spec.algorithms:
            group = [
                r for r in rows
                if r.value == value and r.algorithm == algorithm and r.cost is not None
            ]
            if not group:
                means.append(ResultRow(spec.parameter, value, "mean", algorithm,
                                       None, None, None, None, "empty"))
                continue
            def avg(vals):
                vals = [v for v in vals if v is not None]
                return sum(vals) / len(vals) if vals else None
            means.append(ResultRow(
                spec.parameter, value, "mean", algorithm,
                avg([r.cost for r in group]),
                avg([r.lbd for r in group]),
                avg([r.gap for r in group]),
                avg([r.wall_time for r in group]),
                "ok",
            ))
    return rows + means


def _run_cell_star(args):
    spec, value, seed, algorithm = args
    return _run_cell(spec, value, seed, algorithm)


RESULT_COLUMNS = ("parameter", "value", "seed", "algorithm", "cost", "lbd",
                  "gap", "status")


def _fmt(val) -> str:
    if val is None:
        return ""
    if isinstance(val, float):
        return repr(val)
    return str(val)


def write_results_csv(rows: Sequence[ResultRow], path: str) -> None:
    """Primary results table; deterministic under a fixed seed."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([
                row.parameter, _fmt(row.value), _fmt(row.seed), row.algorithm,
                _fmt(row.cost), _fmt(row.lbd), _fmt(row.gap), row.status,
            ])


def write_timings_csv(rows: Sequence[ResultRow], path: str) -> None:
    """Wall-clock sidecar; inherently run-dependent, kept out of results."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("parameter", "value", "seed", "algorithm", "wall_time"))
        for row in rows:
            writer.writerow([
                row.parameter, _fmt(row.value), _fmt(row.seed), row.algorithm,
                _fmt(row.wall_time),
            ])


def sweep_spec_from_dict(doc: dict) -> SweepSpec:
    if not isinstance(doc, dict):
        raise InstanceSchemaError("sweep spec must be a mapping")
    for key in ("parameter", "values", "seeds"):
        if key not in doc:
            raise InstanceSchemaError(f"sweep spec missing field {key!r}")
    base = GenConfig(**doc.get("base", {}))
    lda_params = lda.LdaParams(**doc.get("lda", {}))
    return SweepSpec(
        parameter=doc["parameter"],
        values=list(doc["values"]),
        seeds=[int(s) for s in doc["seeds"]],
        algorithms=tuple(doc.get("algorithms", ("greedy", "lda"))),
        base=base,
        lda_params=lda_params,
    )
