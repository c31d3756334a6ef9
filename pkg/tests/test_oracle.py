"""Brute-force oracles: independent solves, FD gradients, the closed-form rate."""

import numpy as np
import pytest

from alskit.diagnostics import gradient_block
from alskit.formats import CpFormat, ParamSystem
from alskit.oracle import brute_least_squares, finite_diff_grad, q_lambda_formula
from alskit.tensors import DenseOperator, DenseTensor, IdentityOperator, Shape

# frozen closed-form rate values (15+ digits of the analytic expression)
Q_FROZEN = {
    0.0: 0.0,
    0.1: 0.05071718330588067,
    0.25: 0.26262131350068985,
    0.46: 0.8470480210237428,
    0.5: 1.0,
}


# ---------------------------------------------------------------------------
# brute_least_squares


def test_brute_solve_full_rank_oneblock():
    # identity W: the solve is the plain normal equation A q = b
    shape = Shape((2,))
    A = DenseOperator(shape, [[2.0, 0.0], [0.0, 4.0]])
    b = DenseTensor(shape, [2.0, 8.0])
    q = brute_least_squares(A, b, np.eye(2))
    assert np.allclose(q, [1.0, 2.0], atol=1e-12)


def test_brute_solve_duplicated_columns_splits_evenly():
    # W = [e1 | e1]: minimum-norm coefficients share the weight equally
    shape = Shape((2,))
    W = np.array([[1.0, 1.0], [0.0, 0.0]])
    b = DenseTensor(shape, [1.0, 0.0])
    q = brute_least_squares(IdentityOperator(shape), b, W)
    assert np.allclose(q, [0.5, 0.5], atol=1e-12)


def test_brute_solve_zero_matrix_gives_zero():
    shape = Shape((2,))
    b = DenseTensor(shape, [1.0, 1.0])
    q = brute_least_squares(IdentityOperator(shape), b, np.zeros((2, 3)))
    assert np.array_equal(q, np.zeros(3))


def test_brute_solve_minimizes_the_quadratic():
    rng = np.random.default_rng(21)
    shape = Shape((2, 3))
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    A = DenseOperator(shape, (Q * rng.uniform(0.5, 2.0, size=6)) @ Q.T)
    b = DenseTensor(shape, rng.standard_normal(6))
    W = rng.standard_normal((6, 4))
    q = brute_least_squares(A, b, W)
    # optimality: W^T (b - A W q) = 0
    resid = b.values - A.matrix @ (W @ q)
    assert np.max(np.abs(W.T @ resid)) < 1e-10


# ---------------------------------------------------------------------------
# finite-difference gradient


def test_fd_gradient_matches_analytic_on_seeded_cp():
    rng = np.random.default_rng(22)
    shape = Shape((2, 3))
    fmt = CpFormat(shape, 2)
    p = ParamSystem([rng.standard_normal(fmt.block_dim(mu)) for mu in range(2)])
    b = DenseTensor(shape, rng.standard_normal(6))
    A = IdentityOperator(shape)
    for mu in range(2):
        got = finite_diff_grad(A, b, fmt, p, mu)
        want = gradient_block(A, b, fmt, p, mu)
        assert np.linalg.norm(got - want) / max(1.0, np.linalg.norm(want)) < 1e-6


def test_fd_gradient_vanishes_at_exact_fit():
    # p represents b exactly, so the least-squares gradient is ~0
    shape = Shape((2, 2))
    fmt = CpFormat(shape, 1)
    p = ParamSystem([[1.0, 2.0], [3.0, 4.0]])
    b = DenseTensor(shape, np.outer([1.0, 2.0], [3.0, 4.0]).ravel())
    grad = finite_diff_grad(IdentityOperator(shape), b, fmt, p, 0)
    assert np.max(np.abs(grad)) < 1e-9


# ---------------------------------------------------------------------------
# closed-form rate


def test_rate_formula_frozen_values():
    for lam, want in Q_FROZEN.items():
        assert q_lambda_formula(lam) == pytest.approx(want, abs=1e-15)


def test_rate_formula_boundary_values_are_exact():
    assert q_lambda_formula(0.0) == 0.0
    assert q_lambda_formula(0.5) == 1.0


def test_rate_formula_strictly_increasing():
    grid = np.linspace(0.0, 0.5, 501)
    vals = [q_lambda_formula(lam) for lam in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_rate_formula_domain():
    with pytest.raises(ValueError, match=r"\[0, 1/2\]"):
        q_lambda_formula(-0.01)
    with pytest.raises(ValueError, match=r"\[0, 1/2\]"):
        q_lambda_formula(0.51)
