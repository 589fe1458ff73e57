"""Brute-force ground truth for small models.

Gibbs tables are full probability vectors over the free-vertex configurations
of a model, indexed so that bit j of a config index carries the spin of the
j-th free vertex in ascending vertex order (bit 0 is the least significant).
Everything here is deterministic and exact up to float arithmetic; sizes are
guarded by hard caps.  Tables are immutable once built and safe to share.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import CapacityError, InputError, ValidationFailure
from .model import PM, ZERO_ONE, IsingModel
from .rng import PROBE, substream

GIBBS_CAP = 24
SPECTRAL_CAP = 12
MLSI_CAP = 10
PINNING_SWEEP_CAP = 10

_MAGIC = b"RFIMTBL1"


@dataclass(frozen=True)
class GibbsTable:
    """Exact enumerated Gibbs distribution over a model's free vertices."""

    model: IsingModel
    probs: np.ndarray
    log_partition: float
    free: tuple[int, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def num_free(self) -> int:
        return len(self.free)

    def spin_values(self, bits: np.ndarray) -> np.ndarray:
        if self.model.convention == PM:
            return 2.0 * bits - 1.0
        return bits.astype(np.float64)

    def assignment(self, index: int) -> dict[int, int]:
        """Full vertex -> spin map for configuration ``index`` (pinning included)."""
        out = dict(self.model.pinning)
        for j, v in enumerate(self.free):
            bit = (index >> j) & 1
            out[v] = (2 * bit - 1) if self.model.convention == PM else bit
        return out

    def as_full_dict(self) -> dict[tuple[int, ...], float]:
        """Map full spin tuples (over all vertices) to probabilities."""
        out = {}
        for i, p in enumerate(self.probs):
            a = self.assignment(i)
            out[tuple(a[v] for v in range(self.model.n))] = float(p)
        return out

    def index_of(self, values) -> int:
        """Config index of a full spin vector (must respect the pinning)."""
        vals = np.asarray(values)
        idx = 0
        for j, v in enumerate(self.free):
            if vals[v] == 1:  # +1 in pm, 1 in 01
                idx |= 1 << j
        for v, s in self.model.pinning.items():
            if vals[v] != s:
                raise InputError(f"value at vertex {v} conflicts with pinning")
        return idx


def bit_column(num_configs: int, j: int) -> np.ndarray:
    """Bit j of every config index in 0..num_configs-1, as float 0/1."""
    return ((np.arange(num_configs) >> j) & 1).astype(np.float64)


def _free_energies(model: IsingModel) -> tuple[np.ndarray, tuple[int, ...]]:
    """Hamiltonian of every free-vertex configuration, pinned spins folded in.

    Terms involving only pinned spins (their fields, fully pinned edges) are
    additive constants and are dropped: probabilities are unchanged and
    analytically equal conditional measures stay bit-identical.
    """
    free = model.free_vertices
    f = len(free)
    if f > GIBBS_CAP:
        raise CapacityError(f"{f} free vertices exceeds the enumeration cap {GIBBS_CAP}")
    size = 1 << f
    pos = {v: j for j, v in enumerate(free)}

    def column(v: int) -> np.ndarray | float:
        if v in pos:
            bits = bit_column(size, pos[v])
            return 2.0 * bits - 1.0 if model.convention == PM else bits
        return float(model.pinning[v])

    energy = np.zeros(size)
    for (u, v), c in zip(model.graph.edges, model.couplings):
        if u in pos or v in pos:
            energy += c * np.asarray(column(u)) * np.asarray(column(v))
    for v in free:
        h = model.field[v]
        if h != 0.0:
            energy += h * np.asarray(column(v))
    return energy, free


def gibbs_table(model: IsingModel) -> GibbsTable:
    """Normalized probabilities proportional to exp(H), via log-sum-exp."""
    energy, free = _free_energies(model)
    log_z = float(logsumexp(energy))
    return GibbsTable(model=model, probs=np.exp(energy - log_z), log_partition=log_z, free=free)


def conditional_table(model: IsingModel, extra_pinning: dict) -> GibbsTable:
    """Table of the conditional measure given additional pinned spins."""
    return gibbs_table(model.with_pinning(extra_pinning))


def marginals(table: GibbsTable) -> np.ndarray:
    """P(spin of free vertex j is the 'one' value), per free vertex."""
    f = table.num_free
    size = 1 << f
    return np.array([float(table.probs @ bit_column(size, j)) for j in range(f)])


def mean_and_covariance(table: GibbsTable) -> tuple[np.ndarray, np.ndarray]:
    """Exact first and second central moments over the free vertices."""
    f = table.num_free
    size = 1 << f
    cols = [table.spin_values(bit_column(size, j)) for j in range(f)]
    mean = np.array([float(table.probs @ c) for c in cols])
    cov = np.empty((f, f))
    for i in range(f):
        wi = table.probs * cols[i]
        for j in range(i, f):
            second = float(wi @ cols[j])
            cov[i, j] = cov[j, i] = second - mean[i] * mean[j]
    return mean, cov


def tv_distance(t1: GibbsTable, t2: GibbsTable) -> float:
    """Total variation 0.5 * sum |p - q| between tables on the same index space."""
    if t1.free != t2.free or t1.model.convention != t2.model.convention:
        raise InputError("tables index different spaces")
    return 0.5 * float(np.abs(t1.probs - t2.probs).sum())


def _edge_event_columns(table: GibbsTable) -> np.ndarray:
    """Indicator of {sigma_u = sigma_v = 1} per edge, over free configs; shape (configs, E)."""
    model = table.model
    if model.convention != ZERO_ONE:
        raise InputError("edge events need the 01 convention")
    size = 1 << table.num_free
    pos = {v: j for j, v in enumerate(table.free)}
    cols = np.empty((size, model.graph.num_edges))
    for e, (u, v) in enumerate(model.graph.edges):
        cu = bit_column(size, pos[u]) if u in pos else float(model.pinning[u])
        cv = bit_column(size, pos[v]) if v in pos else float(model.pinning[v])
        cols[:, e] = np.asarray(cu) * np.asarray(cv)
    return cols


def cor2_matrix(table: GibbsTable) -> np.ndarray:
    """Second-order correlation matrix over edge events.

    Entry (uv, wz) is mu(wz | uv) - mu(wz) where uv is the event that both
    endpoints of the edge take value 1; rows of zero-probability events are
    identically zero.
    """
    z = _edge_event_columns(table)
    p = table.probs @ z
    joint = z.T @ (table.probs[:, None] * z)
    num_edges = z.shape[1]
    cor = np.zeros((num_edges, num_edges))
    pos_rows = p > 0.0
    if pos_rows.any():
        cor[pos_rows] = joint[pos_rows] / p[pos_rows, None] - p[None, :]
    return cor


# ---------------------------------------------------------------------------
# Glauber spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralReport:
    """Spectral quantities of the single-site heat-bath chain for one model."""

    gap: float
    at_variance_constant: float | None = None
    mlsi_lower_estimate: float | None = None
    notes: str = ""


def transition_matrix(model: IsingModel) -> tuple[np.ndarray, np.ndarray]:
    """Dense heat-bath transition matrix and stationary probabilities.

    A step picks one of the f free vertices uniformly and resamples it from
    its conditional law given the rest; rows sum to one.
    """
    energy, free = _free_energies(model)
    f = len(free)
    if f > SPECTRAL_CAP:
        raise CapacityError(f"{f} free vertices exceeds the spectral cap {SPECTRAL_CAP}")
    if f == 0:
        raise InputError("model has no free vertices")
    size = 1 << f
    probs = np.exp(energy - logsumexp(energy))
    p_mat = np.zeros((size, size))
    idx = np.arange(size)
    for j in range(f):
        partner = idx ^ (1 << j)
        # move prob = mu(partner)/(mu(here)+mu(partner)), stable logistic form
        with np.errstate(over="ignore"):
            move = 1.0 / (1.0 + np.exp(energy - energy[partner]))
        p_mat[idx, partner] += move / f
    p_mat[idx, idx] = 1.0 - p_mat.sum(axis=1)
    return p_mat, probs


def _dirichlet_matrix(model: IsingModel) -> tuple[np.ndarray, np.ndarray]:
    """PSD matrix A with phi^T A phi equal to the Glauber Dirichlet form.

    The form is (1/(2f)) * sum over ordered single-flip pairs of
    mu(x)mu(y)/(mu(x)+mu(y)) (phi(x)-phi(y))^2, built directly from the
    weights rather than from the transition matrix.
    """
    energy, free = _free_energies(model)
    f = len(free)
    if f == 0:
        raise InputError("model has no free vertices")
    size = 1 << f
    log_z = logsumexp(energy)
    probs = np.exp(energy - log_z)
    a = np.zeros((size, size))
    idx = np.arange(size)
    for j in range(f):
        partner = idx ^ (1 << j)
        log_w = energy + energy[partner] - np.logaddexp(energy, energy[partner]) - log_z
        w = np.exp(log_w) / f
        a[idx, partner] -= w
        a[idx, idx] += w
    return a, probs


def glauber_gap(model: IsingModel, cross_validate: bool = True) -> SpectralReport:
    """Spectral gap computed two independent ways and cross-checked.

    (a) 1 minus the second-largest eigenvalue of the transition matrix
    (symmetrized by the reversibility similarity transform), and (b) the
    second-smallest eigenvalue of the generalized problem A v = lambda D v,
    i.e. the Rayleigh quotient of the Dirichlet form against the variance.
    Raises ValidationFailure if they disagree beyond 1e-9; pass
    ``cross_validate=False`` to skip route (b) in bulk certificate scans.
    """
    p_mat, probs = transition_matrix(model)
    sqrt_p = np.sqrt(probs)
    sym = p_mat * (sqrt_p[:, None] / sqrt_p[None, :])
    sym = 0.5 * (sym + sym.T)
    eigs = np.linalg.eigvalsh(sym)
    gap_eigen = float(1.0 - eigs[-2]) if len(eigs) > 1 else 1.0

    if not cross_validate:
        return SpectralReport(gap=gap_eigen, notes=f"eigenvalue={gap_eigen:.15g}")

    a, probs2 = _dirichlet_matrix(model)
    gen = linalg.eigh(a, np.diag(probs2), eigvals_only=True)
    gap_rayleigh = float(gen[1]) if len(gen) > 1 else 1.0

    if abs(gap_eigen - gap_rayleigh) > 1e-9:
        raise ValidationFailure(
            f"gap routes disagree: eigenvalue {gap_eigen!r} vs Rayleigh {gap_rayleigh!r}"
        )
    return SpectralReport(
        gap=gap_eigen,
        notes=f"eigenvalue={gap_eigen:.15g} rayleigh={gap_rayleigh:.15g}",
    )


def at_variance_constant(model: IsingModel) -> float:
    """sup over phi of Var(phi) / sum_i E[Var(phi | X_{-i})].

    Solved as a generalized symmetric eigenproblem: each conditional-variance
    term is the quadratic form of D(I - E_i) with E_i the single-coordinate
    conditional-expectation projection, assembled independently of the
    transition-matrix code path.
    """
    energy, free = _free_energies(model)
    f = len(free)
    if f > SPECTRAL_CAP:
        raise CapacityError(f"{f} free vertices exceeds the spectral cap {SPECTRAL_CAP}")
    if f == 0:
        raise InputError("model has no free vertices")
    size = 1 << f
    probs = np.exp(energy - logsumexp(energy))
    idx = np.arange(size)
    q = np.zeros((size, size))
    for j in range(f):
        partner = idx ^ (1 << j)
        with np.errstate(over="ignore"):
            keep = 1.0 / (1.0 + np.exp(energy[partner] - energy))
        # D * E_j is symmetric: off-diagonal mu_x mu_y / (mu_x + mu_y)
        q[idx, idx] += probs * (1.0 - keep)
        q[idx, partner] -= probs * (1.0 - keep)
    sqrt_p = np.sqrt(probs)
    t = q / sqrt_p[:, None] / sqrt_p[None, :]
    basis = linalg.null_space(sqrt_p[None, :])
    m = basis.T @ t @ basis
    m = 0.5 * (m + m.T)
    smallest = float(np.linalg.eigvalsh(m)[0])
    if smallest <= 0:
        raise ValidationFailure("conditional-variance form is numerically singular")
    return 1.0 / smallest


def _entropy(values: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Ent_mu[f] = E[f log f] - E[f] log E[f] columnwise, with 0 log 0 = 0."""
    vals = np.where(values > 0, values, 1.0)
    ef = probs @ values
    ef_safe = np.where(ef > 0, ef, 1.0)
    return probs @ (values * np.log(vals)) - ef * np.log(ef_safe)


def mlsi_lower_estimate(model: IsingModel, restarts: int, seed: int,
                        iterations: int = 80, step: float = 0.3) -> float:
    """Heuristic upper-bound estimate of the MLSI constant 1 - sup Ent[Pf]/Ent[f].

    Multi-restart projected gradient ascent on the entropy ratio over
    positive test functions; the returned value is the best (largest) ratio's
    complement and only ever overestimates the true constant.  A probe, not a
    certificate.
    """
    energy, free = _free_energies(model)
    f = len(free)
    if f > MLSI_CAP:
        raise CapacityError(f"{f} free vertices exceeds the MLSI probe cap {MLSI_CAP}")
    p_mat, probs = transition_matrix(model)
    rng = substream(seed, PROBE)
    size = 1 << f
    g = rng.normal(0.0, 1.0, size=(size, restarts))
    fvals = np.exp(g)
    fvals /= probs @ fvals  # normalize E_mu f = 1
    best = 0.0
    eta = step
    for it in range(iterations):
        pf = p_mat @ fvals
        ent_f = _entropy(fvals, probs)
        ent_pf = _entropy(pf, probs)
        ok = ent_f > 1e-13
        ratio = np.where(ok, ent_pf / np.where(ok, ent_f, 1.0), 0.0)
        best = max(best, float(ratio.max(initial=0.0)))
        # gradient of Ent[Pf]/Ent[f] in f, then multiplicative (log-space) step
        mean_f = probs @ fvals
        grad_ent_f = probs[:, None] * (np.log(np.where(fvals > 0, fvals, 1.0)) - np.log(mean_f)[None, :])
        pf_safe = np.where(pf > 0, pf, 1.0)
        grad_ent_pf = p_mat.T @ (probs[:, None] * (np.log(pf_safe) - np.log(mean_f)[None, :]))
        denom = np.where(ok, ent_f, 1.0)
        grad = (grad_ent_pf - ratio[None, :] * grad_ent_f) / denom[None, :]
        grad *= fvals  # d/d(log f)
        norm = np.linalg.norm(grad, axis=0, keepdims=True)
        norm = np.where(norm > 0, norm, 1.0)
        fvals = fvals * np.exp(eta * grad / norm)
        fvals /= probs @ fvals
        if (it + 1) % 20 == 0:
            eta *= 0.5
    pf = p_mat @ fvals
    ent_f = _entropy(fvals, probs)
    ent_pf = _entropy(pf, probs)
    ok = ent_f > 1e-13
    ratio = np.where(ok, ent_pf / np.where(ok, ent_f, 1.0), 0.0)
    best = max(best, float(ratio.max(initial=0.0)))
    return 1.0 - best


# ---------------------------------------------------------------------------
# Exhaustive pinning / tilt sweep of the edge-event correlation matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cor2SweepReport:
    """Worst-case row/column/operator norms of Cor2 over pinnings and tilts."""

    max_row_sum: float
    max_col_sum: float
    max_opnorm: float
    per_edge_row_max: np.ndarray
    per_edge_col_max: np.ndarray
    argmax_row: tuple[float, dict]
    argmax_col: tuple[float, dict]
    argmax_opnorm: tuple[float, dict]
    interpolation_ok: bool
    matrices_checked: int
    mode: str


def _pinning_from_code(code: int, n: int) -> dict[int, int]:
    """Ternary decode: digit 0 = free, 1 = pinned to 0, 2 = pinned to 1."""
    pin = {}
    for v in range(n):
        digit = (code // 3**v) % 3
        if digit == 1:
            pin[v] = 0
        elif digit == 2:
            pin[v] = 1
    return pin


def sup_cor2_over_pinnings(model01: IsingModel, theta_grid, pinning_codes=None,
                           chunk: int = 2048) -> Cor2SweepReport:
    """Maximize Cor2 row sums, column sums and operator norm over all pinnings.

    Pinnings are enumerated as ternary codes over the vertices (free /
    pinned-0 / pinned-1) in lexicographic order, exhaustively by default;
    pass explicit ``pinning_codes`` for a sampled sweep.  Ties in the argmax
    go to the earliest (theta, code) cell visited.  Also verifies the
    operator-norm interpolation bound for every enumerated matrix.
    """
    if model01.convention != ZERO_ONE:
        raise InputError("the sweep expects a 01-convention model")
    if model01.pinning:
        raise InputError("the sweep expects a fully free model")
    n = model01.n
    mode = "exact"
    if pinning_codes is None:
        if n > PINNING_SWEEP_CAP:
            raise CapacityError(f"{n} vertices exceeds the 3^n sweep cap {PINNING_SWEEP_CAP}")
        pinning_codes = np.arange(3**n, dtype=np.int64)
    else:
        pinning_codes = np.asarray(pinning_codes, dtype=np.int64)
        mode = "sampled"
    energy, _ = _free_energies(model01)
    size = 1 << n
    table = gibbs_table(model01)
    z = _edge_event_columns(table)  # (configs, E)
    m_counts = z.sum(axis=1)
    num_edges = z.shape[1]

    # per-vertex bits for pinning-consistency masks
    bits = np.stack([bit_column(size, j) for j in range(n)], axis=1)  # (configs, n)

    best = {
        "row": (-np.inf, None),
        "col": (-np.inf, None),
        "op": (-np.inf, None),
    }
    per_edge_row = np.zeros(num_edges)
    per_edge_col = np.zeros(num_edges)
    interpolation_ok = True
    checked = 0

    for theta in theta_grid:
        if not 0.0 <= theta < 1.0:
            raise InputError("theta grid values must lie in [0, 1)")
        log_w = energy + m_counts * np.log1p(-theta)
        w_all = np.exp(log_w - log_w.max())
        for start in range(0, len(pinning_codes), chunk):
            codes = pinning_codes[start:start + chunk]
            digits = (codes[:, None] // 3 ** np.arange(n)[None, :]) % 3  # (B, n)
            mask = np.ones((len(codes), size), dtype=bool)
            for v in range(n):
                d = digits[:, v]
                col = bits[:, v].astype(bool)
                mask &= (d[:, None] == 0) | ((d[:, None] == 1) & ~col[None, :]) \
                    | ((d[:, None] == 2) & col[None, :])
            w = mask * w_all[None, :]
            totals = w.sum(axis=1, keepdims=True)
            w = w / totals
            p = w @ z  # (B, E)
            joint = np.einsum("bc,ce,cf->bef", w, z, z)
            cor = np.zeros_like(joint)
            pos = p > 0
            safe_p = np.where(pos, p, 1.0)
            cor = joint / safe_p[:, :, None] - p[:, None, :]
            cor[~pos] = 0.0
            abs_cor = np.abs(cor)
            row_sums = abs_cor.sum(axis=2)  # (B, E)
            col_sums = abs_cor.sum(axis=1)  # (B, E)
            opnorms = np.linalg.svd(cor, compute_uv=False)[:, 0] if num_edges else np.zeros(len(codes))
            per_edge_row = np.maximum(per_edge_row, row_sums.max(axis=0))
            per_edge_col = np.maximum(per_edge_col, col_sums.max(axis=0))
            row_bound = row_sums.max(axis=1)
            col_bound = col_sums.max(axis=1)
            if not (opnorms <= np.sqrt(row_bound * col_bound) * (1 + 1e-9) + 1e-12).all():
                interpolation_ok = False
            checked += len(codes)

            for key, stat in (("row", row_bound), ("col", col_bound), ("op", opnorms)):
                i = int(stat.argmax())
                if stat[i] > best[key][0]:
                    best[key] = (float(stat[i]),
                                 {"theta": float(theta),
                                  "pinning": _pinning_from_code(int(codes[i]), n)})

    return Cor2SweepReport(
        max_row_sum=best["row"][0],
        max_col_sum=best["col"][0],
        max_opnorm=best["op"][0],
        per_edge_row_max=per_edge_row,
        per_edge_col_max=per_edge_col,
        argmax_row=best["row"],
        argmax_col=best["col"],
        argmax_opnorm=best["op"],
        interpolation_ok=interpolation_ok,
        matrices_checked=checked,
        mode=mode,
    )


# ---------------------------------------------------------------------------
# Table export
# ---------------------------------------------------------------------------

def table_to_json_dict(table: GibbsTable) -> dict:
    return {
        "free_vertices": list(table.free),
        "convention": table.model.convention,
        "log_partition": table.log_partition,
        "probs": table.probs.tolist(),
    }


def table_to_binary(table: GibbsTable) -> bytes:
    """Little-endian binary: magic, free count, free vertex order, probs, log Z."""
    parts = [_MAGIC, struct.pack("<Q", table.num_free)]
    parts.append(np.asarray(table.free, dtype="<u8").tobytes())
    parts.append(table.probs.astype("<f8").tobytes())
    parts.append(struct.pack("<d", table.log_partition))
    return b"".join(parts)


def table_from_binary(data: bytes) -> dict:
    """Decode the binary table format back into arrays (header + probs)."""
    if data[:8] != _MAGIC:
        raise InputError("bad table magic")
    (f,) = struct.unpack_from("<Q", data, 8)
    off = 16
    free = np.frombuffer(data, dtype="<u8", count=f, offset=off)
    off += 8 * f
    probs = np.frombuffer(data, dtype="<f8", count=1 << f, offset=off)
    off += 8 * (1 << f)
    (log_z,) = struct.unpack_from("<d", data, off)
    return {"free_vertices": free.astype(int).tolist(), "probs": probs.copy(),
            "log_partition": log_z}
