"""Multilinear parameter formats: CP, tensor train, and custom maps.

A format is a map U(p_1, ..., p_L) from L flat parameter blocks into the
dense tensor space, linear in each block separately.  That multilinearity
is what the solver exploits: freezing all blocks but one leaves a linear
map, materialized column-by-column by probing the standard basis.
"""

from __future__ import annotations

import json

import numpy as np

from .tensors import DenseTensor, Shape


class ParamSystem:
    """Tuple of flat parameter blocks (immutable float64 copies)."""

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        frozen = []
        for vec in blocks:
            arr = np.array(vec, dtype=float).ravel()
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameter entries must be finite")
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "blocks", tuple(frozen))

    def __setattr__(self, name, value):
        raise AttributeError("ParamSystem is immutable")

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, mu: int) -> np.ndarray:
        return self.blocks[mu]

    def replace(self, mu: int, vec) -> "ParamSystem":
        """New system with block mu replaced."""
        blocks = list(self.blocks)
        blocks[mu] = vec
        return ParamSystem(blocks)

    def norms(self) -> list[float]:
        return [float(np.linalg.norm(b)) for b in self.blocks]

    def max_norm(self) -> float:
        return max(self.norms())

    def __repr__(self):
        sizes = tuple(b.size for b in self.blocks)
        return f"ParamSystem(block_sizes={sizes})"


class TensorFormat:
    """Base class: a multilinear parameterization of dense tensors."""

    name = "abstract"
    shape: Shape
    num_blocks: int

    def block_dim(self, mu: int) -> int:
        """Length of flat parameter block mu (0-based)."""
        raise NotImplementedError

    def _evaluate_blocks(self, blocks) -> np.ndarray:
        raise NotImplementedError

    def check_params(self, p: ParamSystem):
        if len(p) != self.num_blocks:
            raise ValueError(
                f"parameter system has {len(p)} blocks, format needs {self.num_blocks}"
            )
        for mu in range(self.num_blocks):
            want = self.block_dim(mu)
            if p[mu].size != want:
                raise ValueError(
                    f"block {mu} has length {p[mu].size}, expected {want}"
                )

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.shape.dims})"


class CpFormat(TensorFormat):
    """Sum of r rank-one terms; block mu is an m_mu x r factor matrix.

    Flat block layout is column-major: entries of term j are contiguous,
    so ``vec.reshape((m_mu, r), order="F")`` recovers the factor matrix.
    """

    name = "cp"

    def __init__(self, shape: Shape, rank: int):
        rank = int(rank)
        if rank < 1:
            raise ValueError("cp rank must be >= 1")
        self.shape = shape
        self.rank = rank
        self.num_blocks = shape.ndim

    def block_dim(self, mu: int) -> int:
        return self.shape.dims[mu] * self.rank

    def factor_matrix(self, p: ParamSystem, mu: int) -> np.ndarray:
        """Block mu reshaped to (m_mu, rank)."""
        return p[mu].reshape((self.shape.dims[mu], self.rank), order="F")

    def _evaluate_blocks(self, blocks) -> np.ndarray:
        mats = [
            b.reshape((m, self.rank), order="F")
            for b, m in zip(blocks, self.shape.dims)
        ]
        out = np.zeros(self.shape.dims)
        for j in range(self.rank):
            t = mats[0][:, j]
            for mat in mats[1:]:
                t = np.multiply.outer(t, mat[:, j])
            out += t
        return out.ravel()


class TtFormat(TensorFormat):
    """Tensor train: block mu is a core of shape (r_{mu-1}, m_mu, r_mu).

    Boundary ranks are fixed to r_0 = r_d = 1; cores are stored flat in
    C order of their three axes.
    """

    name = "tt"

    def __init__(self, shape: Shape, ranks):
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != shape.ndim - 1:
            raise ValueError(
                f"tt needs {shape.ndim - 1} internal ranks, got {len(ranks)}"
            )
        if any(r < 1 for r in ranks):
            raise ValueError("tt ranks must be >= 1")
        self.shape = shape
        self.ranks = (1,) + ranks + (1,)
        self.num_blocks = shape.ndim

    def block_dim(self, mu: int) -> int:
        return self.ranks[mu] * self.shape.dims[mu] * self.ranks[mu + 1]

    def core(self, p: ParamSystem, mu: int) -> np.ndarray:
        """Block mu reshaped to (r_{mu-1}, m_mu, r_mu)."""
        return p[mu].reshape(
            (self.ranks[mu], self.shape.dims[mu], self.ranks[mu + 1])
        )

    def _evaluate_blocks(self, blocks) -> np.ndarray:
        cores = [
            b.reshape((self.ranks[mu], self.shape.dims[mu], self.ranks[mu + 1]))
            for mu, b in enumerate(blocks)
        ]
        t = cores[0]  # shape (1, m_1, r_1)
        for core in cores[1:]:
            t = np.tensordot(t, core, axes=(t.ndim - 1, 0))
        return t.reshape(self.shape.dims).ravel()


class MultilinearFormat(TensorFormat):
    """Custom format from user-supplied block dims and evaluation callable.

    ``func(blocks)`` gets the flat blocks and must return the flat dense
    values; it must be linear in each block (the solver relies on it, and
    the verify command probes it).
    """

    name = "custom"

    def __init__(self, shape: Shape, block_dims, func, name: str = "custom"):
        dims = tuple(int(n) for n in block_dims)
        if len(dims) < 1 or any(n < 1 for n in dims):
            raise ValueError("block dims must be positive")
        self.shape = shape
        self._block_dims = dims
        self._func = func
        self.num_blocks = len(dims)
        self.name = name

    def block_dim(self, mu: int) -> int:
        return self._block_dims[mu]

    def _evaluate_blocks(self, blocks) -> np.ndarray:
        out = np.asarray(self._func(list(blocks)), dtype=float).ravel()
        if out.size != self.shape.size:
            raise ValueError(
                f"custom map returned {out.size} values, expected {self.shape.size}"
            )
        return out


def evaluate(fmt: TensorFormat, p: ParamSystem) -> DenseTensor:
    """Dense tensor U(p)."""
    fmt.check_params(p)
    return DenseTensor(fmt.shape, fmt._evaluate_blocks([p[mu] for mu in range(len(p))]))


def param_dim(fmt: TensorFormat, mu: int) -> int:
    """Dimension of block mu; raises if mu is out of range."""
    if not 0 <= mu < fmt.num_blocks:
        raise ValueError(f"block index {mu} out of range [0, {fmt.num_blocks})")
    return fmt.block_dim(mu)


def total_param_dim(fmt: TensorFormat) -> int:
    return sum(fmt.block_dim(mu) for mu in range(fmt.num_blocks))


def materialize_W(fmt: TensorFormat, p: ParamSystem, mu: int) -> np.ndarray:
    """Matrix of the linear map q -> U(..., p_{mu-1}, q, p_{mu+1}, ...).

    Columns are obtained by probing the standard basis of block mu, so the
    routine works for any multilinear format.  Shape is (N, block_dim(mu)).
    """
    fmt.check_params(p)
    if not 0 <= mu < fmt.num_blocks:
        raise ValueError(f"block index {mu} out of range [0, {fmt.num_blocks})")
    dim = fmt.block_dim(mu)
    blocks = [p[nu] for nu in range(len(p))]
    W = np.empty((fmt.shape.size, dim))
    probe = np.zeros(dim)
    for j in range(dim):
        probe[j] = 1.0
        blocks[mu] = probe
        W[:, j] = fmt._evaluate_blocks(blocks)
        probe[j] = 0.0
    return W


def params_to_json(fmt: TensorFormat, p: ParamSystem) -> str:
    """Serialize a CP or TT parameter system to a JSON document."""
    fmt.check_params(p)
    if isinstance(fmt, CpFormat):
        doc = {
            "format": "cp",
            "dims": list(fmt.shape.dims),
            "ranks": [fmt.rank],
        }
    elif isinstance(fmt, TtFormat):
        doc = {
            "format": "tt",
            "dims": list(fmt.shape.dims),
            "ranks": list(fmt.ranks[1:-1]),
        }
    else:
        raise ValueError(f"format {fmt.name!r} has no JSON form")
    doc["blocks"] = [p[mu].tolist() for mu in range(len(p))]
    return json.dumps(doc)


def params_from_json(text: str) -> tuple[TensorFormat, ParamSystem]:
    """Inverse of :func:`params_to_json`."""
    doc = json.loads(text)
    try:
        kind = doc["format"]
        dims = tuple(int(m) for m in doc["dims"])
        ranks = [int(r) for r in doc["ranks"]]
        blocks = doc["blocks"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed parameter document: {exc}") from exc
    shape = Shape(dims)
    if kind == "cp":
        if len(ranks) != 1:
            raise ValueError("cp document needs exactly one rank")
        fmt: TensorFormat = CpFormat(shape, ranks[0])
    elif kind == "tt":
        fmt = TtFormat(shape, ranks)
    else:
        raise ValueError(f"unknown format {kind!r}")
    p = ParamSystem(blocks)
    fmt.check_params(p)
    return fmt, p
