"""Convergence diagnostics: objective, gradients, angles, rates, monitors.

Everything here observes a solve; nothing steers it.  The normalized
objective is f(v) = (<Av,v>/2 - <b,v>) / <b,b>, so targets of different
scale produce comparable traces.  Rate classification follows the
tangent-ratio taxonomy: superlinear (ratio -> 0), linear (ratio settles
in (0,1)), sublinear (ratio -> 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .formats import ParamSystem, TensorFormat, evaluate, materialize_W
from .tensors import DenseTensor, SpdOperator, inner

COS_CUTOFF = 1e-14


def objective(A: SpdOperator, b: DenseTensor, v: DenseTensor) -> float:
    """Normalized quadratic objective (<Av,v>/2 - <b,v>) / <b,b>."""
    b2 = inner(b, b)
    if b2 == 0.0:
        raise ValueError("objective undefined for zero target")
    Av = A.apply(v)
    return (0.5 * inner(Av, v) - inner(b, v)) / b2


def gradient_block(
    A: SpdOperator, b: DenseTensor, fmt: TensorFormat, p: ParamSystem, mu: int
) -> np.ndarray:
    """Partial gradient of f(U(p)) with respect to block mu: -W^T(b - Av)/<b,b>."""
    b2 = inner(b, b)
    if b2 == 0.0:
        raise ValueError("objective undefined for zero target")
    W = materialize_W(fmt, p, mu)
    v = evaluate(fmt, p)
    resid = b.values - A.apply(v).values
    return -(W.T @ resid) / b2


def full_gradient(
    A: SpdOperator, b: DenseTensor, fmt: TensorFormat, p: ParamSystem
) -> np.ndarray:
    """All block gradients concatenated in block order."""
    return np.concatenate(
        [gradient_block(A, b, fmt, p, mu) for mu in range(fmt.num_blocks)]
    )


def tangent_angle(reference: DenseTensor, v: DenseTensor) -> float:
    """tan of the angle between v and the reference, from the cosine.

    Returns ``inf`` when |cos| <= 1e-14 (v numerically orthogonal to the
    reference).  For angles very close to 0 the cosine route saturates
    around sqrt(machine eps); :func:`stable_tangent` resolves further.
    """
    nref = reference.norm()
    nv = v.norm()
    if nref == 0.0 or nv == 0.0:
        raise ValueError("tangent angle undefined for a zero vector")
    cos = inner(reference, v) / (nref * nv)
    if abs(cos) <= COS_CUTOFF:
        return float("inf")
    cos = min(1.0, max(-1.0, cos))
    return float(np.sqrt((1.0 - cos * cos) / (cos * cos)))


def stable_tangent(reference, vec) -> float:
    """tan angle via the orthogonal split v = c*ref_hat + s, stable near 0.

    Operates on flat arrays; use it for factor vectors or ``.values`` of
    dense tensors.  Same orthogonality cutoff as :func:`tangent_angle`.
    """
    ref = np.asarray(reference, dtype=float).ravel()
    v = np.asarray(vec, dtype=float).ravel()
    nref = float(np.linalg.norm(ref))
    nv = float(np.linalg.norm(v))
    if nref == 0.0 or nv == 0.0:
        raise ValueError("tangent angle undefined for a zero vector")
    ref_hat = ref / nref
    c = float(ref_hat @ v)
    if abs(c) <= COS_CUTOFF * nv:
        return float("inf")
    s = float(np.linalg.norm(v - c * ref_hat))
    return s / abs(c)


@dataclass
class MicroStepRecord:
    """One row of a solve trace.

    ``f``, ``decrement`` and ``grad_norm`` are in normalized-objective
    units; ``grad_norm`` is measured before the update, ``resid_orth`` is
    the unnormalized Galerkin residual norm after it.  ``W_rank`` is 0
    exactly for degenerate steps (parameters left unchanged).
    """

    sweep: int
    mu: int
    f: float
    decrement: float
    grad_norm: float
    W_rank: int
    resid_orth: float
    param_norm_max: float
    tan_angle: float | None = None
    degenerate: bool = False


@dataclass
class RunTrace:
    """Complete record of a solve: per-micro-step rows plus per-sweep series."""

    records: list[MicroStepRecord]
    termination: str
    sweeps: int
    label: str
    angle_mode: str
    operator_verified: bool
    initial_f: float
    initial_param_norm_max: float
    sweep_f: list[float]
    sweep_tangent: list[float | None]
    dist_a: list[float]
    final_params: ParamSystem
    final_v: DenseTensor
    param_snapshots: list[ParamSystem] | None = None

    def tangent_series(self) -> list[float]:
        return [t for t in self.sweep_tangent if t is not None]

    def tangent_ratios(self) -> list[float | None]:
        """Per-sweep ratio tan_k / tan_{k-1}; None where undefined."""
        out: list[float | None] = [None]
        for prev, cur in zip(self.sweep_tangent, self.sweep_tangent[1:]):
            ok = (
                prev is not None
                and cur is not None
                and np.isfinite(prev)
                and np.isfinite(cur)
                and prev > 0.0
            )
            out.append(cur / prev if ok else None)
        return out


@dataclass(frozen=True)
class RateEstimate:
    """Terminal convergence-rate estimate from a tangent series."""

    q_hat: float
    classification: str
    ratios: tuple[float, ...]
    window: int
    converged_exactly: bool = False


def effective_window(n_tangents: int, window: int = 10) -> int:
    """Largest usable window for a series of n_tangents entries (>= 1)."""
    return max(1, min(window, n_tangents - 1))


def rate_estimate(tangents, window: int = 10) -> RateEstimate:
    """Classify terminal convergence from a positive tangent series.

    The estimate q_hat is the median of the last ``window`` successive
    ratios.  Classification: "superlinear" when q_hat < 0.01 and the
    window ratios are strictly decreasing; "sublinear" when q_hat > 0.99;
    "linear" when q_hat is in [0.01, 0.99] with window spread < 0.05;
    otherwise "inconclusive".  An exact zero truncates the series and
    marks finite-step convergence, which counts as superlinear when the
    remaining prefix is too short to classify on its own.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    ts = [float(t) for t in tangents]
    if any(not np.isfinite(t) or t < 0.0 for t in ts):
        raise ValueError("tangent series must be finite and nonnegative")
    converged = False
    for i, t in enumerate(ts):
        if t == 0.0:
            ts = ts[:i]
            converged = True
            break
    ratios = tuple(ts[i + 1] / ts[i] for i in range(len(ts) - 1))
    if len(ratios) < window:
        if converged:
            return RateEstimate(0.0, "superlinear", ratios, window, True)
        raise ValueError(
            f"tangent series too short: need {window + 1} positive entries, got {len(ts)}"
        )
    w = ratios[-window:]
    q_hat = float(np.median(w))
    decreasing = all(b < a for a, b in zip(w, w[1:]))
    spread = max(w) - min(w)
    if q_hat < 0.01 and decreasing:
        label = "superlinear"
    elif q_hat > 0.99:
        label = "sublinear"
    elif spread < 0.05:
        label = "linear"
    else:
        label = "inconclusive"
    return RateEstimate(q_hat, label, ratios, window, converged)


@dataclass(frozen=True)
class MonitorReport:
    """Boundedness (A1) and rank-stability (A2) monitors over a trace."""

    growth_ratio: float
    growth_threshold: float
    unbounded_suspect: bool
    param_norm_initial: float
    param_norm_peak: float
    rank_sequences: dict[int, tuple[int, ...]]
    last_rank_change_sweep: int | None
    dist_a: tuple[float, ...]
    dist_a_monotone: bool
    flags: tuple[str, ...]


def assumption_monitors(trace: RunTrace, growth_threshold: float = 1e6) -> MonitorReport:
    """Evaluate the boundedness and rank-stability assumptions on a trace."""
    init = trace.initial_param_norm_max
    peak = max([init] + [rec.param_norm_max for rec in trace.records])
    if init > 0.0:
        growth = peak / init
    else:
        growth = float("inf") if peak > 0.0 else 1.0
    suspect = growth > growth_threshold

    ranks: dict[int, tuple[int, ...]] = {}
    for mu in sorted({rec.mu for rec in trace.records}):
        ranks[mu] = tuple(rec.W_rank for rec in trace.records if rec.mu == mu)
    last_change = None
    for mu, seq in ranks.items():
        for k in range(1, len(seq)):
            if seq[k] != seq[k - 1]:
                last_change = max(last_change or 0, k + 1)  # 1-based sweep index

    dist = tuple(trace.dist_a)
    monotone = all(b <= a * (1.0 + 1e-12) + 1e-300 for a, b in zip(dist, dist[1:]))
    flags = []
    if suspect:
        flags.append("unbounded-suspect")
    if last_change is not None:
        flags.append("rank-drift")
    return MonitorReport(
        growth_ratio=growth,
        growth_threshold=growth_threshold,
        unbounded_suspect=suspect,
        param_norm_initial=init,
        param_norm_peak=peak,
        rank_sequences=ranks,
        last_rank_change_sweep=last_change,
        dist_a=dist,
        dist_a_monotone=monotone,
        flags=tuple(flags),
    )


def orthonormal_complement(direction) -> np.ndarray:
    """Orthonormal basis R (N x N-1) of the complement of a nonzero vector.

    Deterministic: Gram-Schmidt over the standard basis with
    re-orthogonalization, skipping near-dependent candidates.
    """
    v = np.asarray(direction, dtype=float).ravel()
    n = v.size
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ValueError("complement undefined for the zero vector")
    basis = [v / nv]
    for j in range(n):
        if len(basis) == n:
            break
        w = np.zeros(n)
        w[j] = 1.0
        for _ in range(2):  # twice is enough
            for u in basis:
                w -= (u @ w) * u
        nw = np.linalg.norm(w)
        if nw < 1e-8:
            continue
        basis.append(w / nw)
    if len(basis) != n:
        raise ValueError("failed to complete an orthonormal basis")
    return np.column_stack(basis[1:])


def materialize_M(
    fmt: TensorFormat, b: DenseTensor, p: ParamSystem, mu: int, nu: int
) -> np.ndarray:
    """Coupling matrix between blocks mu and nu against the target b.

    Entry (i, j) is <U(p with block mu := e_i, block nu := e_j), b>; the
    matrix is multilinear in the remaining blocks and satisfies
    M(mu, nu) = M(nu, mu)^T.  Built by probing, one column per basis
    vector of block nu.
    """
    if mu == nu:
        raise ValueError("coupling needs two distinct blocks")
    dim_nu = fmt.block_dim(nu)
    cols = []
    probe = np.zeros(dim_nu)
    for j in range(dim_nu):
        probe[j] = 1.0
        W_mu = materialize_W(fmt, p.replace(nu, probe), mu)
        cols.append(W_mu.T @ b.values)
        probe[j] = 0.0
    return np.column_stack(cols)


@dataclass(frozen=True)
class RecursionContext:
    """Parameters entering micro-step (sweep, mu-1), for replaying a step pair."""

    sweep: int
    mu: int
    params: ParamSystem

    def __post_init__(self):
        if self.sweep < 2:
            raise ValueError("recursion context needs sweep >= 2")
        if self.mu < 1:
            raise ValueError("recursion context needs a predecessor block (mu >= 1)")


@dataclass(frozen=True)
class RecursionReport:
    """Replay of one micro-step pair against its transfer-matrix form."""

    sweep: int
    mu: int
    defect: float
    transfer: np.ndarray
    v_mid: DenseTensor
    v_next: DenseTensor


RECURSION_SIZE_CAP = 256


def recursion_check(
    A: SpdOperator,
    b: DenseTensor,
    fmt: TensorFormat,
    ctx: RecursionContext,
    eps_rank: float = 1e-12,
) -> RecursionReport:
    """Verify one micro-step against its one-step transfer matrix.

    Starting from the parameters entering micro-step (sweep, mu-1), the
    updates of blocks mu-1 and mu are replayed, and the second iterate is
    compared with N v_mid where

        N = W_mu G^+ M H^+ W_{mu-1}^T,

    G^+ the energy pseudo-inverse at block mu, M the probed coupling
    matrix of blocks (mu, mu-1), and H^+ the Gram pseudo-inverse at block
    mu-1.  The relative defect should sit at rounding level.
    """
    from . import engine  # local import: engine depends on this module

    n = fmt.shape.size
    if n > RECURSION_SIZE_CAP:
        raise ValueError(
            f"transfer matrix check capped at N = {RECURSION_SIZE_CAP}, got {n}"
        )
    mu = ctx.mu
    p1, v_mid, rec1 = engine.micro_step(A, b, fmt, ctx.params, mu - 1, eps_rank)
    if rec1.degenerate:
        raise ValueError("degenerate micro-step in recursion context")
    p2, v_next, rec2 = engine.micro_step(A, b, fmt, p1, mu, eps_rank)
    if rec2.degenerate:
        raise ValueError("degenerate micro-step in recursion context")

    W_prev = materialize_W(fmt, ctx.params, mu - 1)
    prev_basis = engine.lowdin_basis(W_prev, eps_rank)
    H_pinv = prev_basis.transform @ prev_basis.transform.T

    W_cur = materialize_W(fmt, p1, mu)
    cur_basis = engine.lowdin_basis(W_cur, eps_rank)
    V = cur_basis.V
    AV = A.apply_matrix(V)
    G = V.T @ AV
    G = 0.5 * (G + G.T)
    G_pinv = cur_basis.transform @ np.linalg.solve(G, cur_basis.transform.T)

    M = materialize_M(fmt, b, p1, mu, mu - 1)
    N = W_cur @ G_pinv @ M @ H_pinv @ W_prev.T

    denom = v_next.norm()
    if denom == 0.0:
        raise ValueError("recursion check needs a nonzero post-step iterate")
    defect = float(np.linalg.norm(v_next.values - N @ v_mid.values)) / denom
    return RecursionReport(ctx.sweep, mu, defect, N, v_mid, v_next)


def recursion_contexts(trace: RunTrace):
    """Yield every replayable step-pair context from a keep-params trace."""
    if trace.param_snapshots is None:
        raise ValueError("trace was recorded without parameter snapshots")
    recs = trace.records
    for i in range(len(recs) - 1):
        a, nxt = recs[i], recs[i + 1]
        if a.sweep >= 2 and nxt.sweep == a.sweep and nxt.mu == a.mu + 1:
            yield RecursionContext(a.sweep, nxt.mu, trace.param_snapshots[i])


@dataclass(frozen=True)
class TangentRecursion:
    """Angle propagation of one transfer-matrix application."""

    tan_in: float
    tan_out: float
    tan_predicted: float
    q_s: float
    q_c: float


def tangent_recursion(transfer: np.ndarray, reference, v_mid) -> TangentRecursion:
    """Propagate the tangent through a transfer matrix and factor the rate.

    With v split into c (along the reference) and s (complement
    coordinates), the image tangent factors as (q_s / q_c) * tan_in where
    q_s and q_c are the complement and axis amplification factors.
    """
    ref = np.asarray(reference, dtype=float).ravel()
    v = np.asarray(v_mid, dtype=float).ravel()
    ref_hat = ref / np.linalg.norm(ref)
    R = orthonormal_complement(ref_hat)
    c = float(ref_hat @ v)
    s_vec = R.T @ v
    s = float(np.linalg.norm(s_vec))
    if c == 0.0 or s == 0.0:
        raise ValueError("tangent recursion needs nonzero axis and complement parts")
    tan_in = s / abs(c)
    w = transfer @ v
    c_out = float(ref_hat @ w)
    s_out = float(np.linalg.norm(R.T @ w))
    if c_out == 0.0:
        raise ValueError("transfer image orthogonal to the reference")
    tan_out = s_out / abs(c_out)
    q_s = s_out / s
    q_c = abs(c_out) / abs(c)
    return TangentRecursion(
        tan_in=tan_in,
        tan_out=tan_out,
        tan_predicted=(q_s / q_c) * tan_in,
        q_s=q_s,
        q_c=q_c,
    )
