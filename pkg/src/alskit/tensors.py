"""Dense tensor values and SPD operators at desk scale.

The ambient space is V = R^{m_1} x ... x R^{m_d} (tensor product), stored
flat in lexicographic order with the first index varying slowest.  All
scalars are 64-bit IEEE floats.  Operators are symmetric positive definite
and come in three flavours: identity, explicit dense matrix, and mode-wise
Kronecker product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ENTRY_CAP = 10**6
SPD_VERIFY_CAP = 512
SYMMETRY_RTOL = 1e-12
PSD_CLAMP = 1e-14


@dataclass(frozen=True)
class Shape:
    """Mode sizes (m_1, ..., m_d) of a tensor space with entry count N = prod(dims)."""

    dims: tuple[int, ...]
    entry_cap: int = DEFAULT_ENTRY_CAP

    def __post_init__(self):
        dims = tuple(int(m) for m in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 1:
            raise ValueError("shape needs at least one mode")
        if any(m < 1 for m in dims):
            raise ValueError("every mode size must be >= 1")
        if self.size > self.entry_cap:
            raise ValueError(
                f"entry cap exceeded: {self.size} > {self.entry_cap} entries"
            )

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))


class DenseTensor:
    """Immutable dense element of the tensor space.

    Values are a flat float64 vector of length shape.size, lexicographic with
    the first index slowest (C order of the d-dimensional array).
    """

    __slots__ = ("shape", "values")

    def __init__(self, shape: Shape, values):
        vals = np.asarray(values, dtype=float).ravel()
        if vals.size != shape.size:
            raise ValueError(
                f"incompatible shapes: {vals.size} values for shape with N={shape.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("tensor entries must be finite")
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("DenseTensor is immutable")

    @classmethod
    def zeros(cls, shape: Shape) -> "DenseTensor":
        return cls(shape, np.zeros(shape.size))

    @classmethod
    def from_array(cls, arr) -> "DenseTensor":
        a = np.asarray(arr, dtype=float)
        return cls(Shape(a.shape), a.ravel())

    def as_array(self) -> np.ndarray:
        """View of the values as a d-dimensional array."""
        return self.values.reshape(self.shape.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        _check_same_shape(self, other)
        return DenseTensor(self.shape, self.values + other.values)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        _check_same_shape(self, other)
        return DenseTensor(self.shape, self.values - other.values)

    def __neg__(self) -> "DenseTensor":
        return DenseTensor(self.shape, -self.values)

    def __mul__(self, alpha) -> "DenseTensor":
        return DenseTensor(self.shape, self.values * float(alpha))

    __rmul__ = __mul__

    def __repr__(self):
        return f"DenseTensor(dims={self.shape.dims}, norm={self.norm():.6g})"


def _check_same_shape(u: DenseTensor, v: DenseTensor):
    if u.shape.dims != v.shape.dims:
        raise ValueError(
            f"incompatible shapes: {u.shape.dims} vs {v.shape.dims}"
        )


class SpdOperator:
    """Base for symmetric positive definite operators on a tensor space."""

    variant = "abstract"
    shape: Shape
    verified: bool
    eig_bounds: tuple[float, float] | None

    def apply(self, v: DenseTensor) -> DenseTensor:
        raise NotImplementedError

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        """Apply to every column of an (N, k) matrix."""
        M = np.asarray(M, dtype=float)
        out = np.empty_like(M)
        for j in range(M.shape[1]):
            out[:, j] = self.apply(DenseTensor(self.shape, M[:, j])).values
        return out

    def _check_operand(self, v: DenseTensor):
        if v.shape.dims != self.shape.dims:
            raise ValueError(
                f"incompatible shapes: operator on {self.shape.dims}, operand {v.shape.dims}"
            )

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.shape.dims}, verified={self.verified})"


class IdentityOperator(SpdOperator):
    variant = "identity"

    def __init__(self, shape: Shape):
        self.shape = shape
        self.verified = True
        self.eig_bounds = (1.0, 1.0)

    def apply(self, v: DenseTensor) -> DenseTensor:
        self._check_operand(v)
        return v

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        return np.asarray(M, dtype=float)


def _check_spd_matrix(mat: np.ndarray, what: str) -> tuple[float, float]:
    """Validate symmetry and positive definiteness; return (lambda_min, lambda_max)."""
    scale = np.max(np.abs(mat))
    if np.max(np.abs(mat - mat.T)) > SYMMETRY_RTOL * max(scale, 1e-300):
        raise ValueError(f"{what} is not symmetric")
    vals = np.linalg.eigvalsh(mat)
    if vals[0] <= 0:
        raise ValueError(f"{what} is not positive definite (lambda_min = {vals[0]:.3e})")
    return float(vals[0]), float(vals[-1])


class DenseOperator(SpdOperator):
    """Explicit N x N symmetric positive definite matrix.

    Positive definiteness is verified at construction only for N <= SPD_VERIFY_CAP
    (full eigendecomposition); larger operators are trusted and flagged unverified.
    """

    variant = "dense"

    def __init__(self, shape: Shape, matrix):
        mat = np.asarray(matrix, dtype=float)
        n = shape.size
        if mat.shape != (n, n):
            raise ValueError(
                f"incompatible shapes: operator matrix {mat.shape} for N={n}"
            )
        scale = np.max(np.abs(mat))
        if np.max(np.abs(mat - mat.T)) > SYMMETRY_RTOL * max(scale, 1e-300):
            raise ValueError("operator matrix is not symmetric")
        self.shape = shape
        self.matrix = np.ascontiguousarray(mat)
        if n <= SPD_VERIFY_CAP:
            vals = np.linalg.eigvalsh(self.matrix)
            if vals[0] <= 0:
                raise ValueError(
                    f"operator matrix is not positive definite (lambda_min = {vals[0]:.3e})"
                )
            self.verified = True
            self.eig_bounds = (float(vals[0]), float(vals[-1]))
        else:
            self.verified = False
            self.eig_bounds = None

    def apply(self, v: DenseTensor) -> DenseTensor:
        self._check_operand(v)
        return DenseTensor(v.shape, self.matrix @ v.values)

    def apply_matrix(self, M: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(M, dtype=float)


class ModeWiseOperator(SpdOperator):
    """Kronecker product A_1 (x) ... (x) A_d with per-mode SPD factors."""

    variant = "modewise"

    def __init__(self, factors):
        mats = [np.ascontiguousarray(np.asarray(f, dtype=float)) for f in factors]
        if not mats:
            raise ValueError("mode-wise operator needs at least one factor")
        lo, hi = 1.0, 1.0
        for nu, mat in enumerate(mats):
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"factor {nu} is not square")
            fl, fh = _check_spd_matrix(mat, f"mode-{nu} factor")
            lo *= fl
            hi *= fh
        self.factors = mats
        self.shape = Shape(tuple(m.shape[0] for m in mats))
        self.verified = True
        self.eig_bounds = (lo, hi)

    def apply(self, v: DenseTensor) -> DenseTensor:
        self._check_operand(v)
        t = v.as_array()
        d = self.shape.ndim
        for nu, mat in enumerate(self.factors):
            # contract factor with mode nu, then restore the axis order
            t = np.moveaxis(np.tensordot(mat, t, axes=(1, nu)), 0, nu)
        return DenseTensor(v.shape, t.ravel())


def inner(u: DenseTensor, v: DenseTensor) -> float:
    """Euclidean inner product on the tensor space."""
    _check_same_shape(u, v)
    return float(np.dot(u.values, v.values))


def apply_operator(A: SpdOperator, v: DenseTensor) -> DenseTensor:
    """Return A v."""
    return A.apply(v)


def a_inner(A: SpdOperator, u: DenseTensor, v: DenseTensor) -> float:
    """Energy inner product <Au, v>."""
    return inner(apply_operator(A, u), v)


def a_norm(A: SpdOperator, v: DenseTensor) -> float:
    """Energy norm sqrt(<Av, v>); small negative radicands clamp to 0."""
    rad = a_inner(A, v, v)
    if rad < 0:
        if rad < -PSD_CLAMP * inner(v, v):
            raise ValueError(
                f"operator not PSD on this vector: <Av,v> = {rad:.3e}"
            )
        rad = 0.0
    return math.sqrt(rad)


def rank_one_sum(shape: Shape, terms) -> DenseTensor:
    """Dense tensor sum_j c_j * v_{j,1} (x) ... (x) v_{j,d}.

    ``terms`` is a list of (coefficient, [d mode vectors]); an empty list
    yields the zero tensor.
    """
    out = np.zeros(shape.dims)
    for coeff, vectors in terms:
        if len(vectors) != shape.ndim:
            raise ValueError(
                f"term supplies {len(vectors)} vectors for {shape.ndim} modes"
            )
        t = None
        for nu, vec in enumerate(vectors):
            arr = np.asarray(vec, dtype=float).ravel()
            if arr.size != shape.dims[nu]:
                raise ValueError(
                    f"mode {nu} vector has length {arr.size}, expected {shape.dims[nu]}"
                )
            t = arr if t is None else np.multiply.outer(t, arr)
        out += float(coeff) * t
    return DenseTensor(shape, out.ravel())


def index_value_rows(v: DenseTensor):
    """Yield (index tuple, value) rows in storage order, for CSV dumps."""
    for flat, val in enumerate(v.values):
        yield np.unravel_index(flat, v.shape.dims), float(val)
