"""Block-coordinate solver: exact one-block updates through a Löwdin basis.

Each micro-step freezes all parameter blocks but one, materializes the
resulting linear map W, orthonormalizes its range from the eigenvalue
decomposition of the Gram matrix W^T W, solves the projected SPD system,
and writes back the minimum-norm block update.  A sweep visits the
blocks in order; the driver repeats sweeps until a stop rule fires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .diagnostics import (
    MicroStepRecord,
    RunTrace,
    objective,
    stable_tangent,
)
from .formats import CpFormat, ParamSystem, TensorFormat, evaluate, materialize_W
from .tensors import DenseTensor, SpdOperator, a_norm, inner

EPS_RANK_DEFAULT = 1e-12


@dataclass(frozen=True)
class LowdinBasis:
    """Orthonormal basis V of range(W) with its back-transform.

    ``transform`` maps projected coordinates back to block parameters:
    V = W @ transform, and transform @ transform.T is the pseudo-inverse
    of the Gram matrix W^T W.  ``delta`` holds the retained Gram
    eigenvalues in descending order; ``orth_defect`` records the measured
    departure of V^T V from the identity (stored, not enforced).
    """

    V: np.ndarray
    transform: np.ndarray
    delta: np.ndarray
    rank: int
    degenerate: bool
    orth_defect: float


def lowdin_basis(W: np.ndarray, eps_rank: float = EPS_RANK_DEFAULT) -> LowdinBasis:
    """Orthonormalize the columns of W by the symmetric eigendecomposition.

    Gram eigenvalues delta_i <= eps_rank * delta_1 are discarded; if no
    positive eigenvalue remains (W numerically zero) the basis is flagged
    degenerate and empty.
    """
    W = np.asarray(W, dtype=float)
    if eps_rank < 0:
        raise ValueError("eps_rank must be nonnegative")
    n = W.shape[1]
    H = W.T @ W
    H = 0.5 * (H + H.T)
    vals, vecs = np.linalg.eigh(H)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    if n == 0 or vals[0] <= 0.0:
        empty = np.zeros((W.shape[0], 0))
        return LowdinBasis(empty, np.zeros((n, 0)), np.zeros(0), 0, True, 0.0)
    keep = vals > eps_rank * vals[0]
    vals = np.ascontiguousarray(vals[keep])
    vecs = vecs[:, keep]
    transform = vecs / np.sqrt(vals)
    V = W @ transform
    defect = float(np.max(np.abs(V.T @ V - np.eye(vals.size))))
    return LowdinBasis(V, transform, vals, int(vals.size), False, defect)


def micro_step(
    A: SpdOperator,
    b: DenseTensor,
    fmt: TensorFormat,
    p: ParamSystem,
    mu: int,
    eps_rank: float = EPS_RANK_DEFAULT,
    *,
    sweep: int = 0,
    v_old: DenseTensor | None = None,
    f_old: float | None = None,
) -> tuple[ParamSystem, DenseTensor, MicroStepRecord]:
    """Exact update of block mu; returns (new params, new iterate, record).

    The projected system V^T A V y = V^T b is SPD of size W_rank and is
    solved by Cholesky factorization.  The block written back is the
    minimum-norm representative transform @ y, orthogonal to the kernel
    of W.  A degenerate step (W = 0) leaves the parameters unchanged.
    """
    b2 = inner(b, b)
    if b2 == 0.0:
        raise ValueError("objective undefined for zero target")
    if v_old is None:
        v_old = evaluate(fmt, p)
    if f_old is None:
        f_old = objective(A, b, v_old)

    W = materialize_W(fmt, p, mu)
    resid_old = b.values - A.apply(v_old).values
    grad_norm = float(np.linalg.norm(W.T @ resid_old)) / b2

    basis = lowdin_basis(W, eps_rank)
    if basis.degenerate:
        record = MicroStepRecord(
            sweep=sweep,
            mu=mu,
            f=f_old,
            decrement=0.0,
            grad_norm=grad_norm,
            W_rank=0,
            resid_orth=float(np.linalg.norm(W.T @ resid_old)),
            param_norm_max=p.max_norm(),
            degenerate=True,
        )
        return p, v_old, record

    V = basis.V
    AV = A.apply_matrix(V)
    G = V.T @ AV
    G = 0.5 * (G + G.T)
    try:
        factor = cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD A precludes this
        raise ValueError("projected operator not positive definite") from exc
    y = cho_solve(factor, V.T @ b.values)

    p_new = p.replace(mu, basis.transform @ y)
    v_new = DenseTensor(b.shape, V @ y)
    Av_new = A.apply(v_new)
    f_new = (0.5 * inner(Av_new, v_new) - inner(b, v_new)) / b2
    resid_orth = float(np.linalg.norm(W.T @ (b.values - Av_new.values)))
    record = MicroStepRecord(
        sweep=sweep,
        mu=mu,
        f=f_new,
        decrement=f_new - f_old,
        grad_norm=grad_norm,
        W_rank=basis.rank,
        resid_orth=resid_orth,
        param_norm_max=p_new.max_norm(),
    )
    return p_new, v_new, record


def sweep(
    A: SpdOperator,
    b: DenseTensor,
    fmt: TensorFormat,
    p: ParamSystem,
    eps_rank: float = EPS_RANK_DEFAULT,
    *,
    sweep_index: int = 0,
    v: DenseTensor | None = None,
    f: float | None = None,
    snapshots: list | None = None,
) -> tuple[ParamSystem, DenseTensor, list[MicroStepRecord]]:
    """One pass over all blocks in order; returns (params, iterate, records)."""
    if v is None:
        v = evaluate(fmt, p)
    if f is None:
        f = objective(A, b, v)
    records = []
    for mu in range(fmt.num_blocks):
        if snapshots is not None:
            snapshots.append(p)
        p, v, rec = micro_step(
            A, b, fmt, p, mu, eps_rank, sweep=sweep_index, v_old=v, f_old=f
        )
        f = rec.f
        records.append(rec)
    return p, v, records


@dataclass(frozen=True)
class StopRule:
    """Termination policy checked at the end of each sweep.

    ``f_tol`` and ``grad_tol`` are inclusive (<=) with default 0, i.e.
    they fire only on exact stalls unless widened.  ``angle_tol`` is a
    strict < test on the per-sweep tangent; None or a nonpositive value
    disables it.  Reason priority: degenerate, angle_small, grad_small,
    f_stalled, max_sweeps.
    """

    max_sweeps: int
    f_tol: float = 0.0
    grad_tol: float = 0.0
    angle_tol: float | None = None

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.f_tol < 0 or self.grad_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.angle_tol is not None and self.angle_tol <= 0:
            object.__setattr__(self, "angle_tol", None)


def _resolve_angle_mode(
    angle_mode: str,
    fmt: TensorFormat,
    reference: DenseTensor | None,
    reference_factor,
) -> str:
    if angle_mode == "auto":
        if reference_factor is not None:
            angle_mode = "factor"
        elif reference is not None:
            angle_mode = "full"
        else:
            return "none"
    if angle_mode == "factor":
        if reference_factor is None:
            raise ValueError("angle mode 'factor' needs a reference factor")
        if not (isinstance(fmt, CpFormat) and fmt.rank == 1):
            raise ValueError("factor angles need a rank-one cp format")
        return "factor"
    if angle_mode == "full":
        if reference is None:
            raise ValueError("angle mode 'full' needs a reference tensor")
        return "full"
    if angle_mode == "none":
        return "none"
    raise ValueError(f"unknown angle mode {angle_mode!r}")


def run(
    A: SpdOperator,
    b: DenseTensor,
    fmt: TensorFormat,
    init: ParamSystem,
    stop: StopRule,
    eps_rank: float = EPS_RANK_DEFAULT,
    *,
    reference: DenseTensor | None = None,
    reference_factor=None,
    angle_mode: str = "auto",
    keep_params: bool = False,
    label: str = "",
) -> RunTrace:
    """Sweep until a stop rule fires; returns the full trace.

    Per sweep the trace records the objective, the tangent of the angle
    to the reference (factor or full-tensor, per ``angle_mode``), and the
    energy-norm distance between consecutive sweep iterates.
    """
    fmt.check_params(init)
    mode = _resolve_angle_mode(angle_mode, fmt, reference, reference_factor)
    if reference_factor is not None:
        reference_factor = np.asarray(reference_factor, dtype=float).ravel()
        if mode == "factor" and reference_factor.size != fmt.shape.dims[0]:
            raise ValueError("reference factor length must match mode-1 size")

    p = init
    v = evaluate(fmt, p)
    f = objective(A, b, v)
    initial_f = f
    initial_pmax = p.max_norm()

    records: list[MicroStepRecord] = []
    snapshots: list[ParamSystem] | None = [] if keep_params else None
    sweep_f: list[float] = []
    sweep_tangent: list[float | None] = []
    dist_a: list[float] = []
    termination = "max_sweeps"

    def current_tangent() -> float | None:
        if mode == "factor":
            p1 = p[0]
            if not np.any(p1):
                return None
            return stable_tangent(reference_factor, p1)
        if mode == "full":
            if not np.any(v.values):
                return None
            return stable_tangent(reference.values, v.values)
        return None

    for k in range(1, stop.max_sweeps + 1):
        v_prev = v
        f_prev = f
        p, v, recs = sweep(
            A, b, fmt, p, eps_rank, sweep_index=k, v=v, f=f, snapshots=snapshots
        )
        f = recs[-1].f
        records.extend(recs)

        tan = current_tangent()
        recs[-1].tan_angle = tan
        sweep_f.append(f)
        sweep_tangent.append(tan)
        dist_a.append(a_norm(A, v - v_prev))

        if any(r.degenerate for r in recs):
            termination = "degenerate"
            break
        if (
            stop.angle_tol is not None
            and tan is not None
            and np.isfinite(tan)
            and tan < stop.angle_tol
        ):
            termination = "angle_small"
            break
        if max(r.grad_norm for r in recs) <= stop.grad_tol:
            termination = "grad_small"
            break
        if abs(f - f_prev) <= stop.f_tol:
            termination = "f_stalled"
            break

    return RunTrace(
        records=records,
        termination=termination,
        sweeps=records[-1].sweep if records else 0,
        label=label,
        angle_mode=mode,
        operator_verified=A.verified,
        initial_f=initial_f,
        initial_param_norm_max=initial_pmax,
        sweep_f=sweep_f,
        sweep_tangent=sweep_tangent,
        dist_a=dist_a,
        final_params=p,
        final_v=v,
        param_snapshots=snapshots,
    )
