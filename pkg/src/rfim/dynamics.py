"""Single-site Glauber dynamics, monotone and grand couplings, mixing diagnostics.

The update rule is heat-bath: pick a free vertex uniformly, then resample its
spin from the conditional law given the rest.  All couplings share one
quantile rule - the new spin is the 'one' value iff the shared uniform falls
at or below its conditional probability - which preserves pointwise order
between chains on ferromagnetic models and lets many conditioned chains ride
the same uniforms.  Replicas use disjoint RNG substreams; a coupled trace
advances all of its chains in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import CapacityError, InputError
from .model import PM, IsingModel, SpinConfiguration
from .oracle import GibbsTable, bit_column, gibbs_table
from .rng import CHAIN, COUPLING, substream


@dataclass
class ChainState:
    """A chain's configuration, step counter and (opaque) RNG stream.

    The generator advances in place as steps are taken; clone states only by
    restarting from an explicit substream.
    """

    config: SpinConfiguration
    step: int
    rng: np.random.Generator


@dataclass(frozen=True)
class CouplingTrace:
    """Outcome of a coupled run: final states, where they differ, and logs."""

    states: tuple[ChainState, ...]
    disagreement_set: frozenset[int]
    coalescence_step: int | None = None
    shared_uniform_log: tuple | None = None


def _prep(model: IsingModel):
    """Free-vertex list, per-vertex free-neighbor CSR and pinned-folded fields."""
    free = model.free_vertices
    if not free:
        raise InputError("model has no free vertices")
    h_eff = model.field.copy()
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(model.n)]
    for (u, v), c in zip(model.graph.edges, model.couplings):
        for a, b in ((u, v), (v, u)):
            if a in model.pinning:
                continue
            if b in model.pinning:
                h_eff[a] += c * model.pinning[b]
            else:
                nbrs[a].append((b, c))
    return free, nbrs, h_eff


def _one_prob(model: IsingModel, s: float) -> float:
    """P(spin = 'one' | local field sum s): logistic(2s) in pm, logistic(s) in 01."""
    return float(expit(2.0 * s)) if model.convention == PM else float(expit(s))


def conditional_one_probability(model: IsingModel, values: np.ndarray, v: int) -> float:
    """Heat-bath probability that vertex v takes its 'one' value given the rest."""
    s = model.field[v]
    for (a, b), c in zip(model.graph.edges, model.couplings):
        if a == v:
            s += c * values[b]
        elif b == v:
            s += c * values[a]
    return _one_prob(model, s)


def glauber_step(model: IsingModel, state: ChainState) -> ChainState:
    """One heat-bath update; draws (vertex, uniform) from the state's stream."""
    free = model.free_vertices
    if not free:
        raise InputError("model has no free vertices")
    values = state.config.values().astype(np.float64)
    v = free[int(state.rng.integers(len(free)))]
    p_one = conditional_one_probability(model, values, v)
    u = float(state.rng.random())
    one, zero = (1, -1) if model.convention == PM else (1, 0)
    values[v] = one if u <= p_one else zero
    return ChainState(
        config=SpinConfiguration(values.astype(np.int8), model.convention),
        step=state.step + 1,
        rng=state.rng,
    )


def run_chain(model: IsingModel, init: SpinConfiguration, steps: int, seed: int,
              record_every: int | None = None, chain_index: int = 0):
    """Run one chain for ``steps`` updates; deterministic given the seed.

    Returns the final ChainState, plus a time series of (step, magnetization,
    energy) rows when ``record_every`` is set.
    """
    if init.convention != model.convention or init.n != model.n:
        raise InputError("initial configuration does not match the model")
    values = init.values().astype(np.float64)
    for v, s in model.pinning.items():
        if values[v] != s:
            raise InputError(f"initial configuration conflicts with pinning at {v}")
    free, nbrs, h_eff = _prep(model)
    rng = substream(seed, CHAIN, chain_index)
    choices = rng.integers(len(free), size=steps)
    uniforms = rng.random(size=steps)
    one, zero = (1.0, -1.0) if model.convention == PM else (1.0, 0.0)
    pm = model.convention == PM
    trajectory = []

    def observables(step):
        return (step, float(values.sum()), _energy(model, values))

    if record_every:
        trajectory.append(observables(0))
    for k in range(steps):
        v = free[choices[k]]
        s = h_eff[v]
        for w, c in nbrs[v]:
            s += c * values[w]
        p_one = expit(2.0 * s) if pm else expit(s)
        values[v] = one if uniforms[k] <= p_one else zero
        if record_every and (k + 1) % record_every == 0:
            trajectory.append(observables(k + 1))
    final = ChainState(
        config=SpinConfiguration(values.astype(np.int8), model.convention),
        step=steps,
        rng=rng,
    )
    return (final, trajectory) if record_every else (final, None)


def _energy(model: IsingModel, values: np.ndarray) -> float:
    e = float(model.field @ values)
    for (u, v), c in zip(model.graph.edges, model.couplings):
        e += c * values[u] * values[v]
    return e


def _dense_coupling(model: IsingModel) -> np.ndarray:
    j = np.zeros((model.n, model.n))
    for (u, v), c in zip(model.graph.edges, model.couplings):
        j[u, v] += c
        j[v, u] += c
    return j


def run_chains_batch(model: IsingModel, init_values: np.ndarray, steps: int, seed: int,
                     snapshot_steps=(), stream_path=(0,)) -> tuple[np.ndarray, dict]:
    """Advance many replicas in lockstep (vectorized across replicas).

    ``init_values`` has shape (replicas, n).  One substream feeds the whole
    batch; replica r reads column r of each per-step draw, so the run is
    deterministic given (seed, stream_path).  Snapshots are copies of the
    state matrix taken after the requested step counts.
    """
    values = np.array(init_values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != model.n:
        raise InputError("init_values must have shape (replicas, n)")
    free = np.array(model.free_vertices, dtype=np.int64)
    if len(free) == 0:
        raise InputError("model has no free vertices")
    for v, s in model.pinning.items():
        values[:, v] = s
    j = _dense_coupling(model)
    replicas = values.shape[0]
    rng = substream(seed, COUPLING, *stream_path)
    one, zero = (1.0, -1.0) if model.convention == PM else (1.0, 0.0)
    pm = model.convention == PM
    snapshots = {}
    want = sorted(set(int(s) for s in snapshot_steps))
    if 0 in want:
        snapshots[0] = values.copy()
    rows = np.arange(replicas)
    for k in range(steps):
        v = free[rng.integers(len(free), size=replicas)]
        s = np.einsum("rm,mr->r", values, j[:, v]) + model.field[v]
        p_one = expit(2.0 * s) if pm else expit(s)
        u = rng.random(replicas)
        values[rows, v] = np.where(u <= p_one, one, zero)
        if (k + 1) in want:
            snapshots[k + 1] = values.copy()
    return values, snapshots


# ---------------------------------------------------------------------------
# Couplings
# ---------------------------------------------------------------------------

def monotone_coupled_run(model: IsingModel, low: SpinConfiguration, high: SpinConfiguration,
                         steps: int, seed: int, log_uniforms: bool = False) -> CouplingTrace:
    """Two chains sharing vertex choices and uniforms under the quantile rule.

    Requires a ferromagnetic model and low <= high pointwise; the pointwise
    order is asserted after every step (a violation raises, it is never
    tolerated statistically).
    """
    if not model.ferromagnetic:
        raise InputError("monotone coupling requires a ferromagnetic model")
    lo = low.values().astype(np.float64)
    hi = high.values().astype(np.float64)
    if (lo > hi).any():
        raise InputError("initial states must satisfy low <= high pointwise")
    free, nbrs, h_eff = _prep(model)
    rng = substream(seed, COUPLING)
    one, zero = (1.0, -1.0) if model.convention == PM else (1.0, 0.0)
    pm = model.convention == PM
    log = [] if log_uniforms else None
    coalescence = 0 if np.array_equal(lo, hi) else None
    for k in range(steps):
        v = free[int(rng.integers(len(free)))]
        u = float(rng.random())
        for values in (lo, hi):
            s = h_eff[v]
            for w, c in nbrs[v]:
                s += c * values[w]
            p_one = expit(2.0 * s) if pm else expit(s)
            values[v] = one if u <= p_one else zero
        if lo[v] > hi[v]:
            raise AssertionError(f"monotone coupling violated order at vertex {v}, step {k + 1}")
        if log is not None:
            log.append((k + 1, v, u))
        if coalescence is None and np.array_equal(lo, hi):
            coalescence = k + 1
    disagree = frozenset(int(i) for i in np.nonzero(lo != hi)[0])
    mk = lambda vals: ChainState(
        config=SpinConfiguration(vals.astype(np.int8), model.convention), step=steps, rng=rng)
    return CouplingTrace(
        states=(mk(lo), mk(hi)),
        disagreement_set=disagree,
        coalescence_step=coalescence,
        shared_uniform_log=tuple(log) if log is not None else None,
    )


def monotone_coupled_batch(model: IsingModel, steps: int, runs: int, seed: int) -> dict:
    """Vectorized all-minus vs all-plus coupling over many independent runs.

    Returns order-violation and coalescence counts; any violation raises.
    """
    if not model.ferromagnetic:
        raise InputError("monotone coupling requires a ferromagnetic model")
    n = model.n
    one, zero = (1.0, -1.0) if model.convention == PM else (1.0, 0.0)
    lo = np.full((runs, n), zero)
    hi = np.full((runs, n), one)
    for v, s in model.pinning.items():
        lo[:, v] = s
        hi[:, v] = s
    free = np.array(model.free_vertices, dtype=np.int64)
    j = _dense_coupling(model)
    pm = model.convention == PM
    rng = substream(seed, COUPLING)
    rows = np.arange(runs)
    coalesced_at = np.full(runs, -1, dtype=np.int64)
    for k in range(steps):
        v = free[rng.integers(len(free), size=runs)]
        u = rng.random(runs)
        for values in (lo, hi):
            s = np.einsum("rm,mr->r", values, j[:, v]) + model.field[v]
            p_one = expit(2.0 * s) if pm else expit(s)
            values[rows, v] = np.where(u <= p_one, one, zero)
        if (lo[rows, v] > hi[rows, v]).any():
            raise AssertionError(f"monotone coupling violated order at step {k + 1}")
        fresh = (coalesced_at < 0) & (lo == hi).all(axis=1)
        coalesced_at[fresh] = k + 1
    return {
        "runs": runs,
        "steps": steps,
        "order_violations": 0,
        "coalesced": int((coalesced_at >= 0).sum()),
        "coalesced_at": coalesced_at,
        "final_disagreements": int((lo != hi).any(axis=1).sum()),
    }


def grand_coupled_update(models, states, seed: int | None = None, order=None,
                         uniforms: np.ndarray | None = None,
                         tables: list[GibbsTable] | None = None):
    """Reveal every vertex once across many conditioned chains, sharing uniforms.

    Each model may differ in couplings, fields and pinnings but all share the
    vertex index space and convention.  ``states`` are partial assignments
    (vertex -> value) that are kept as conditioning; the remaining vertices
    are revealed in ``order`` (default: ascending index).  At each position
    one uniform drives every chain's conditional quantile; ``uniforms`` may
    be supplied, indexed by vertex, to share randomness with an external
    process.  Conditional laws are computed exactly from Gibbs tables, so
    oracle capacity applies.

    Returns (configurations, disagreement set, per-vertex revelation log).
    """
    if not models:
        raise InputError("need at least one model")
    n = models[0].n
    conv = models[0].convention
    for m in models:
        if m.n != n or m.convention != conv:
            raise InputError("models must share vertex index space and convention")
    if len(states) != len(models):
        raise InputError("need one partial state per model")
    if tables is None:
        tables = [gibbs_table(m) for m in models]
    if order is None:
        order = list(range(n))
    if uniforms is None:
        if seed is None:
            raise InputError("need a seed when uniforms are not supplied")
        uniforms = substream(seed, COUPLING).random(n)
    uniforms = np.asarray(uniforms, dtype=np.float64)
    if uniforms.shape != (n,):
        raise InputError("uniforms must hold one value per vertex")
    one, zero = (1, -1) if conv == PM else (1, 0)

    # per-chain row masks over that chain's free-config table
    masks = []
    values = []
    for m, tab, st in zip(models, tables, states):
        size = 1 << tab.num_free
        mask = np.ones(size, dtype=bool)
        vals = {}
        pos = {v: j for j, v in enumerate(tab.free)}
        for v, s in m.pinning.items():
            vals[v] = s
        for v, s in st.items():
            v, s = int(v), int(s)
            if v in m.pinning:
                if m.pinning[v] != s:
                    raise InputError(f"state conflicts with pinning at vertex {v}")
                continue
            bitcol = bit_column(size, pos[v]).astype(bool)
            mask &= bitcol if s == one else ~bitcol
            vals[v] = s
        masks.append(mask)
        values.append(vals)

    log = []
    for v in order:
        v = int(v)
        u = float(uniforms[v])
        outcome = []
        for ci, (m, tab) in enumerate(zip(models, tables)):
            if v in values[ci]:
                outcome.append(values[ci][v])
                continue
            size = 1 << tab.num_free
            pos = {w: j for j, w in enumerate(tab.free)}
            bitcol = bit_column(size, pos[v]).astype(bool)
            w_mask = masks[ci]
            total = float(tab.probs[w_mask].sum())
            p_one = float(tab.probs[w_mask & bitcol].sum()) / total
            s = one if u <= p_one else zero
            values[ci][v] = s
            masks[ci] = w_mask & (bitcol if s == one else ~bitcol)
            outcome.append(s)
        log.append((v, u, tuple(outcome)))

    configs = [
        SpinConfiguration(np.array([vals[v] for v in range(n)], dtype=np.int8), conv)
        for vals in values
    ]
    disagree = frozenset(
        v for v in range(n)
        if len({vals[v] for vals in values}) > 1
    )
    return configs, disagree, tuple(log)


# ---------------------------------------------------------------------------
# Empirical mixing diagnostics
# ---------------------------------------------------------------------------

def empirical_tv_curve(model: IsingModel, init: SpinConfiguration, step_grid,
                       replicas: int, seed: int) -> list[dict]:
    """Empirical TV to the exact table at each grid step, with a noise floor.

    The noise floor is the expected TV of a perfect multinomial sample of the
    same size, 0.5 * sum sqrt(2 p (1-p) / (pi R)).
    """
    table = gibbs_table(model)
    f = table.num_free
    if f > 20:
        raise CapacityError("empirical TV needs a model small enough to bin exactly")
    init_vals = np.tile(init.values().astype(np.float64), (replicas, 1))
    grid = sorted(set(int(s) for s in step_grid))
    _, snapshots = run_chains_batch(model, init_vals, max(grid), seed, snapshot_steps=grid)
    weights = 2 ** np.arange(f)
    free_list = list(table.free)
    noise = 0.5 * float(np.sqrt(2 * table.probs * (1 - table.probs) / (np.pi * replicas)).sum())
    rows = []
    for step in grid:
        vals = snapshots[step][:, free_list]
        bits = (vals == 1).astype(np.int64)
        idx = bits @ weights
        counts = np.bincount(idx, minlength=1 << f)
        emp = counts / replicas
        tv = 0.5 * float(np.abs(emp - table.probs).sum())
        rows.append({"step": step, "tv": tv, "noise_floor": noise})
    return rows


def mixing_time_bound(gap: float, eta: float, eps: float, c: float = 1.0) -> float:
    """The standard gap-based mixing bound C * gap^-1 (log(1/eta) + log(1/eps))."""
    if not (0 < gap <= 1) or not (0 < eta <= 1) or not (0 < eps < 1):
        raise InputError("need gap, eta in (0,1] and eps in (0,1)")
    return c / gap * (np.log(1 / eta) + np.log(1 / eps))
