"""Incremental warm-start sampling and experiment orchestration.

The sampler fixes a prefix-connected vertex ordering, draws the first spin
exactly from its single-site law, and then for each later vertex concatenates
an independent single-site draw and runs k* = ceil(n^{C*}) heat-bath updates
on the model induced by the current prefix (later vertices are absent, not
pinned).  Stage 1 is exact; every other stage is a chain from a warm start.
Disconnected graphs are handled per component and the outputs concatenated.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import expit

import jsonschema

from .errors import CapacityError, InputError, ValidationFailure
from .graphs import connected_components, connected_ordering, random_regular_graph
from .model import (
    PM,
    FieldDistribution,
    IsingModel,
    SpinConfiguration,
    induced_model,
    model_from_json_dict,
    model_to_json_dict,
    sample_field,
)
from .dynamics import run_chains_batch
from .oracle import gibbs_table
from .percolation import gap_certificate
from .rng import SAMPLER, substream


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of one incremental-sampling run."""

    c_star: float
    seed: int
    ordering_seed: int = 0
    validate: bool = False
    k_star_mode: str = "full"  # "full": k* from the whole graph; "prefix": from the prefix

    def __post_init__(self):
        if self.c_star <= 0:
            raise InputError("c_star must be positive")
        if self.k_star_mode not in ("full", "prefix"):
            raise InputError("k_star_mode must be 'full' or 'prefix'")

    def k_star(self, n: int) -> int:
        return int(math.ceil(n**self.c_star))


@dataclass(frozen=True)
class RunReport:
    """Accounting of one (possibly replicated) sampling run."""

    stage_steps: tuple[int, ...]
    total_updates: int
    wall_time: float
    ordering: tuple[int, ...]
    tv_vs_oracle: float | None = None
    replicas: int = 1


def _single_site_one_prob(model: IsingModel, v: int) -> float:
    h = model.field[v]
    return float(expit(2.0 * h)) if model.convention == PM else float(expit(h))


def incremental_sample(model: IsingModel, config: SamplerConfig):
    """One configuration from the staged warm-start sampler, plus its report."""
    values, report = _incremental_batch(model, config, replicas=1)
    return SpinConfiguration(values[0].astype(np.int8), model.convention), report


def incremental_sample_batch(model: IsingModel, config: SamplerConfig, replicas: int):
    """Many independent runs advanced in lockstep; rows are final configurations."""
    return _incremental_batch(model, config, replicas=replicas)


def _incremental_batch(model: IsingModel, config: SamplerConfig, replicas: int):
    if model.pinning:
        raise InputError("the incremental sampler expects an unpinned model")
    start = time.perf_counter()
    n = model.n
    one, zero = (1.0, -1.0) if model.convention == PM else (1.0, 0.0)
    out = np.zeros((replicas, n))
    stage_steps: list[int] = []
    full_order: list[int] = []
    comps = connected_components(model.graph)
    for ci, comp in enumerate(comps):
        sub = induced_model(model, comp)  # comp sorted ascending by construction
        order_local = connected_ordering(sub.graph, config.ordering_seed + ci)
        full_order.extend(comp[i] for i in order_local)
        state = np.zeros((replicas, 0))
        for stage in range(1, len(order_local) + 1):
            prefix_local = list(order_local[:stage])
            v_new = prefix_local[-1]
            rng = substream(config.seed, SAMPLER, ci, stage)
            p_one = _single_site_one_prob(sub, v_new)
            draws = np.where(rng.random(replicas) <= p_one, one, zero)
            state = np.concatenate([state, draws[:, None]], axis=1)
            if stage == 1:
                stage_steps.append(0)  # the first spin is an exact sample
                continue
            prefix_model = induced_model(sub, prefix_local)
            # induced_model sorts vertices; map the growing state accordingly
            sorted_prefix = sorted(prefix_local)
            perm = [prefix_local.index(v) for v in sorted_prefix]
            k = config.k_star(n if config.k_star_mode == "full" else stage)
            final, _ = run_chains_batch(
                prefix_model, state[:, perm], k, config.seed,
                stream_path=(SAMPLER, ci, stage))
            inv = [sorted_prefix.index(v) for v in prefix_local]
            state = final[:, inv]
            stage_steps.append(k)
        for pos, v_local in enumerate(order_local):
            out[:, comp[v_local]] = state[:, pos]
    report = RunReport(
        stage_steps=tuple(stage_steps),
        total_updates=int(sum(stage_steps)),
        wall_time=time.perf_counter() - start,
        ordering=tuple(full_order),
        replicas=replicas,
    )
    return out, report


def empirical_tv_to_oracle(model: IsingModel, values: np.ndarray) -> float:
    """TV between an empirical sample matrix (replicas, n) and the exact table."""
    table = gibbs_table(model)
    f = table.num_free
    if f > 20:
        raise CapacityError("model too large for exact validation")
    bits = (values[:, list(table.free)] == 1).astype(np.int64)
    idx = bits @ (1 << np.arange(f))
    emp = np.bincount(idx, minlength=1 << f) / len(values)
    return 0.5 * float(np.abs(emp - table.probs).sum())


def validated_incremental_sample(model: IsingModel, config: SamplerConfig, replicas: int,
                                 eps: float):
    """Batch run plus an exact TV validation against the enumerated table.

    Raises ValidationFailure when the empirical TV exceeds eps.
    """
    values, report = incremental_sample_batch(model, config, replicas)
    tv = empirical_tv_to_oracle(model, values)
    report = RunReport(
        stage_steps=report.stage_steps, total_updates=report.total_updates,
        wall_time=report.wall_time, ordering=report.ordering,
        tv_vs_oracle=tv, replicas=replicas)
    if tv > eps:
        raise ValidationFailure(f"empirical TV {tv:.4f} exceeds eps {eps}")
    return values, report


def warm_start_density_bound(beta: float, c_alpha: float) -> float:
    """Density bound exp(4 beta e^{C_alpha}) of the staged warm start."""
    return math.exp(4.0 * beta * math.exp(c_alpha))


def warm_start_tv_bound(m_warm: float, a: float, p: float, k: int) -> float:
    """Weak-conductance convergence bound M (A^{2p} log k / k)^{1/(2p-1)}.

    Preconditions p >= 1, A^p >= 2/4^{p-1} and k >= 2 are flagged with a
    warning when violated; the value is still returned.
    """
    import warnings

    if p < 1:
        warnings.warn("exponent p below 1; the bound is outside its stated domain")
    if a**p < 2.0 / 4.0 ** (p - 1.0):
        warnings.warn("A^p below 2/4^(p-1); the bound is outside its stated domain")
    if k < 2:
        warnings.warn("k below 2; the bound is outside its stated domain")
    if p == 0.5:
        raise InputError("p = 1/2 makes the exponent 1/(2p-1) undefined")
    return m_warm * (a ** (2.0 * p) * math.log(k) / k) ** (1.0 / (2.0 * p - 1.0))


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["pipeline"],
    "properties": {
        "seed": {"type": "integer"},
        "pipeline": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {"kind": {"type": "string"}},
            },
        },
    },
}

STEP_SCHEMAS = {
    "gap_vs_exact": {
        "type": "object",
        "required": ["kind", "count", "n", "beta", "degree", "p0", "k", "field"],
        "properties": {
            "kind": {"const": "gap_vs_exact"},
            "count": {"type": "integer", "minimum": 1},
            "n": {"type": "integer", "minimum": 2},
            "beta": {"type": "number", "exclusiveMinimum": 0},
            "degree": {"type": "integer", "minimum": 3},
            "p0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "k": {"type": "number", "exclusiveMinimum": 0},
            "field": {"type": "object"},
        },
    },
    "sample": {
        "type": "object",
        "required": ["kind", "model", "c_star", "replicas"],
        "properties": {
            "kind": {"const": "sample"},
            "model": {"type": "object"},
            "c_star": {"type": "number", "exclusiveMinimum": 0},
            "replicas": {"type": "integer", "minimum": 1},
            "validate": {"type": "boolean"},
            "eps": {"type": "number", "exclusiveMinimum": 0},
        },
    },
}


def _validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
        for i, step in enumerate(config["pipeline"]):
            kind = step.get("kind")
            if kind not in STEP_SCHEMAS:
                raise InputError(f"pipeline[{i}].kind: unknown step kind {kind!r}")
            jsonschema.validate(step, STEP_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise InputError(f"config schema violation at '{path}': {exc.message}") from exc


def run_experiment(config: dict, output_dir=None) -> dict:
    """Run a declared pipeline and return (and optionally write) its reports.

    The manifest records seeds, versions and per-step outputs; report payloads
    are deterministic given the config, the manifest timestamp aside.
    """
    from pathlib import Path

    import rfim

    _validate_config(config)
    seed = int(config.get("seed", 0))
    manifest = {
        "seed": seed,
        "version": rfim.__version__,
        "numpy": np.__version__,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "steps": [],
    }
    reports = []
    for i, step in enumerate(config["pipeline"]):
        kind = step["kind"]
        if kind == "gap_vs_exact":
            report = _gap_vs_exact_step(step, seed + i)
        elif kind == "sample":
            report = _sample_step(step, seed + i)
        manifest["steps"].append({"index": i, "kind": kind})
        reports.append(report)
    bundle = {"manifest": manifest, "reports": reports}
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
        (out / "reports.json").write_text(json.dumps(reports, indent=2))
        csv_rows = [r for rep in reports for r in rep.get("csv_rows", [])]
        if csv_rows:
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=sorted(csv_rows[0]))
            writer.writeheader()
            writer.writerows(csv_rows)
            (out / "report.csv").write_text(buf.getvalue())
        for rep in reports:
            if "final_state" in rep:
                (out / "final_state.json").write_text(json.dumps(rep["final_state"]))
    return bundle


def _gap_vs_exact_step(step: dict, seed: int) -> dict:
    from .model import assumption_params
    from .oracle import glauber_gap

    dist = FieldDistribution.from_json_dict(step["field"])
    params = assumption_params(step["p0"], step["k"], step["beta"], step["degree"])
    rows = []
    for i in range(step["count"]):
        g = random_regular_graph(step["n"], step["degree"], seed * 1009 + i)
        field = sample_field(dist, step["n"], seed * 2003 + i)
        model = IsingModel.uniform(g, step["beta"], field.values, convention=PM)
        exact = glauber_gap(model).gap
        cert = gap_certificate(step["n"], step["beta"], step["degree"], params.alpha_star)
        rows.append({
            "model_index": i,
            "exact_gap": exact,
            "certificate_log_gap_lower": cert.log_gap_lower,
            "certificate_holds": bool(math.log(exact) >= cert.log_gap_lower),
        })
    return {
        "kind": "gap_vs_exact",
        "assumption_valid": params.valid,
        "alpha_star": params.alpha_star,
        "csv_rows": rows,
        "holds_fraction": float(np.mean([r["certificate_holds"] for r in rows])),
    }


def _sample_step(step: dict, seed: int) -> dict:
    model = model_from_json_dict(step["model"])
    config = SamplerConfig(c_star=step["c_star"], seed=seed,
                           ordering_seed=seed + 7, validate=step.get("validate", False))
    replicas = step["replicas"]
    if config.validate:
        values, report = validated_incremental_sample(
            model, config, replicas, step.get("eps", 0.05))
    else:
        values, report = incremental_sample_batch(model, config, replicas)
    return {
        "kind": "sample",
        "stage_steps": list(report.stage_steps),
        "total_updates": report.total_updates,
        "tv_vs_oracle": report.tv_vs_oracle,
        "final_state": {
            "model": model_to_json_dict(model),
            "first_replica": values[0].astype(int).tolist(),
        },
        "csv_rows": [{"stage": i + 1, "steps": s} for i, s in enumerate(report.stage_steps)],
    }
