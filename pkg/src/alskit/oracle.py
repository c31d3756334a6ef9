"""Independent cross-checks: brute-force solves, FD gradients, closed-form rates.

Nothing here shares code with the solver: the least-squares oracle works
directly on a materialized matrix through a dense eigendecomposition, and
the finite-difference gradient evaluates the objective from first
principles.  Tests freeze values produced by these routines and compare
the production paths against them.
"""

from __future__ import annotations

import math

import numpy as np

from .formats import ParamSystem, TensorFormat, evaluate
from .tensors import DenseTensor, SpdOperator, inner


def brute_least_squares(
    A: SpdOperator, b: DenseTensor, W, eps_rank: float = 1e-12
) -> np.ndarray:
    """Minimum-norm solution of (W^T A W) q = W^T b by eigendecomposition.

    Eigenvalues of the projected operator below eps_rank times the largest
    are treated as kernel; the returned coefficient vector is orthogonal
    to that kernel.  A numerically zero W yields the zero vector.
    """
    W = np.asarray(W, dtype=float)
    G = W.T @ A.apply_matrix(W)
    G = 0.5 * (G + G.T)
    vals, vecs = np.linalg.eigh(G)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    if vals.size == 0 or vals[0] <= 0.0:
        return np.zeros(W.shape[1])
    keep = vals > eps_rank * vals[0]
    vecs = vecs[:, keep]
    rhs = vecs.T @ (W.T @ b.values)
    return vecs @ (rhs / vals[keep])


def _objective_raw(A: SpdOperator, b: DenseTensor, v: DenseTensor) -> float:
    # independent of the diagnostics implementation on purpose
    Av = A.apply(v)
    return (0.5 * inner(Av, v) - inner(b, v)) / inner(b, b)


def finite_diff_grad(
    A: SpdOperator,
    b: DenseTensor,
    fmt: TensorFormat,
    p: ParamSystem,
    mu: int,
    h: float = 1e-5,
) -> np.ndarray:
    """Central finite-difference gradient of f(U(p)) in block mu."""
    base = p[mu]
    grad = np.empty(base.size)
    for j in range(base.size):
        plus = base.copy()
        plus[j] += h
        minus = base.copy()
        minus[j] -= h
        f_plus = _objective_raw(A, b, evaluate(fmt, p.replace(mu, plus)))
        f_minus = _objective_raw(A, b, evaluate(fmt, p.replace(mu, minus)))
        grad[j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def q_lambda_formula(lam: float) -> float:
    """Closed-form micro-step contraction rate of the three-term family.

    Defined for lam in [0, 1/2]; equals 0 at 0 and exactly 1 at 1/2
    (the sublinear boundary).
    """
    lam = float(lam)
    if not 0.0 <= lam <= 0.5:
        raise ValueError("rate formula defined for lam in [0, 1/2]")
    s = 3.0 * lam + lam * lam
    return 0.5 * lam * (s + math.sqrt(s * s + 4.0 * lam))
