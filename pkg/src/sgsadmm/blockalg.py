"""Dense block-structured linear algebra.

Vectors are flat float64 arrays carved into an ordered list of blocks;
operators are dense matrices carrying a (row, column) pair of block
structures.  Splits, eigenvalues, square roots and SPD solves are all
computed densely, which keeps every check in this package cheap and
exact at the problem sizes it targets.

All values are immutable after construction (the backing arrays are
marked read-only), so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "BlockStructure",
    "BlockVector",
    "BlockOperator",
    "OperatorSplit",
    "DimensionMismatchError",
    "NotSelfAdjointError",
    "NotPositiveDefiniteError",
    "split",
    "weighted_inner",
    "weighted_norm",
    "operator_sqrt",
    "operator_inv_sqrt",
    "min_eig",
    "spectral_norm",
    "spd_solve",
    "spd_factor",
]

# Claimed-self-adjoint inputs must be symmetric to this relative
# Frobenius tolerance; they are then symmetrized exactly.
SYMMETRY_RTOL = 1e-12
# Eigenvalues of a nominally PSD operator may undershoot zero by this
# fraction of the spectral norm before the operator is rejected.
PSD_CLAMP_RTOL = 1e-10
# Positive definiteness requires the smallest eigenvalue to clear this
# fraction of the spectral norm.
PD_MARGIN_RTOL = 1e-12


class DimensionMismatchError(ValueError):
    """Operand sizes or block structures do not line up."""


class NotSelfAdjointError(ValueError):
    """An operator claimed self-adjoint fails the symmetry check."""


class NotPositiveDefiniteError(ValueError):
    """An operator required to be positive (semi)definite is not."""


@dataclass(frozen=True)
class BlockStructure:
    """Ordered partition of a coordinate range into blocks."""

    block_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        if len(dims) == 0:
            raise ValueError("a block structure needs at least one block")
        if any(d < 1 for d in dims):
            raise ValueError(f"all block dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "block_dims", dims)
        offsets = (0,) + tuple(np.cumsum(dims).tolist())
        object.__setattr__(self, "_offsets", offsets)

    @property
    def nblocks(self) -> int:
        return len(self.block_dims)

    @property
    def total_dim(self) -> int:
        return self._offsets[-1]

    def offset(self, i: int) -> int:
        return self._offsets[i]

    def block_slice(self, i: int) -> slice:
        if not 0 <= i < self.nblocks:
            raise IndexError(f"block index {i} out of range for {self.nblocks} blocks")
        return slice(self._offsets[i], self._offsets[i + 1])

    @classmethod
    def single(cls, dim: int) -> "BlockStructure":
        """Structure with one block (used for the constraint space)."""
        return cls((dim,))


def _as_flat_array(data) -> np.ndarray:
    arr = np.array(data, dtype=float).reshape(-1)
    return arr


class BlockVector:
    """A flat real vector together with its block structure."""

    __slots__ = ("structure", "data")

    def __init__(self, structure: BlockStructure, data):
        arr = _as_flat_array(data)
        if arr.size != structure.total_dim:
            raise DimensionMismatchError(
                f"data length {arr.size} != structure total dim {structure.total_dim}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BlockVector is immutable")

    @classmethod
    def zeros(cls, structure: BlockStructure) -> "BlockVector":
        return cls(structure, np.zeros(structure.total_dim))

    def block(self, i: int) -> np.ndarray:
        """Read-only view of block i (0-based)."""
        return self.data[self.structure.block_slice(i)]

    def with_block(self, i: int, values) -> "BlockVector":
        out = self.data.copy()
        out[self.structure.block_slice(i)] = _as_flat_array(values)
        return BlockVector(self.structure, out)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def dot(self, other) -> float:
        return float(self.data @ _vector_data(other, self.structure))

    def __add__(self, other):
        return BlockVector(self.structure, self.data + _vector_data(other, self.structure))

    def __sub__(self, other):
        return BlockVector(self.structure, self.data - _vector_data(other, self.structure))

    def __mul__(self, scalar):
        return BlockVector(self.structure, self.data * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return BlockVector(self.structure, -self.data)

    def __len__(self):
        return self.data.size

    def __repr__(self):
        return f"BlockVector(dims={self.structure.block_dims}, data={self.data})"


def _vector_data(v, structure: BlockStructure | None = None) -> np.ndarray:
    """Coerce a BlockVector or array-like to a flat float array."""
    if isinstance(v, BlockVector):
        if structure is not None and v.structure.total_dim != structure.total_dim:
            raise DimensionMismatchError(
                f"vector length {v.structure.total_dim} != expected {structure.total_dim}"
            )
        return v.data
    arr = _as_flat_array(v)
    if structure is not None and arr.size != structure.total_dim:
        raise DimensionMismatchError(f"vector length {arr.size} != expected {structure.total_dim}")
    return arr


class BlockOperator:
    """A dense linear map with block-structured rows and columns.

    Operators constructed with ``self_adjoint=True`` must have equal row
    and column structures and pass the relative-Frobenius symmetry
    check; they are then symmetrized exactly so downstream eigensolvers
    see a symmetric matrix.
    """

    __slots__ = ("row_structure", "col_structure", "matrix", "self_adjoint")

    def __init__(
        self,
        row_structure: BlockStructure,
        col_structure: BlockStructure,
        matrix,
        self_adjoint: bool = False,
    ):
        mat = np.array(matrix, dtype=float)
        if mat.ndim != 2:
            raise DimensionMismatchError(f"operator matrix must be 2-D, got ndim={mat.ndim}")
        expected = (row_structure.total_dim, col_structure.total_dim)
        if mat.shape != expected:
            raise DimensionMismatchError(f"matrix shape {mat.shape} != structures {expected}")
        if self_adjoint:
            if row_structure != col_structure:
                raise NotSelfAdjointError(
                    "self-adjoint operator needs identical row and column structures"
                )
            gap = np.linalg.norm(mat - mat.T, "fro")
            if gap > SYMMETRY_RTOL * (1.0 + np.linalg.norm(mat, "fro")):
                raise NotSelfAdjointError(
                    f"claimed self-adjoint but ||H - H^T||_F = {gap:.3e} exceeds tolerance"
                )
            mat = (mat + mat.T) / 2.0
        mat.flags.writeable = False
        object.__setattr__(self, "row_structure", row_structure)
        object.__setattr__(self, "col_structure", col_structure)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "self_adjoint", bool(self_adjoint))

    def __setattr__(self, name, value):
        raise AttributeError("BlockOperator is immutable")

    @classmethod
    def identity(cls, structure: BlockStructure) -> "BlockOperator":
        return cls(structure, structure, np.eye(structure.total_dim), self_adjoint=True)

    @classmethod
    def zeros(cls, row_structure: BlockStructure, col_structure: BlockStructure | None = None,
              self_adjoint: bool | None = None) -> "BlockOperator":
        if col_structure is None:
            col_structure = row_structure
        sa = (row_structure == col_structure) if self_adjoint is None else self_adjoint
        shape = (row_structure.total_dim, col_structure.total_dim)
        return cls(row_structure, col_structure, np.zeros(shape), self_adjoint=sa)

    def block(self, i: int, j: int) -> np.ndarray:
        return self.matrix[self.row_structure.block_slice(i), self.col_structure.block_slice(j)]

    def apply(self, v):
        """Apply to a vector; returns the same kind that was passed in."""
        data = self.matrix @ _vector_data(v, self.col_structure)
        if isinstance(v, BlockVector):
            return BlockVector(self.row_structure, data)
        return data

    def adjoint_apply(self, v):
        data = self.matrix.T @ _vector_data(v, self.row_structure)
        if isinstance(v, BlockVector):
            return BlockVector(self.col_structure, data)
        return data

    @property
    def T(self) -> "BlockOperator":
        return BlockOperator(self.col_structure, self.row_structure, self.matrix.T,
                             self_adjoint=self.self_adjoint)

    def _check_same_shape(self, other: "BlockOperator"):
        if (self.row_structure != other.row_structure
                or self.col_structure != other.col_structure):
            raise DimensionMismatchError("operator block structures differ")

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        self._check_same_shape(other)
        return BlockOperator(self.row_structure, self.col_structure,
                             self.matrix + other.matrix,
                             self_adjoint=self.self_adjoint and other.self_adjoint)

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        self._check_same_shape(other)
        return BlockOperator(self.row_structure, self.col_structure,
                             self.matrix - other.matrix,
                             self_adjoint=self.self_adjoint and other.self_adjoint)

    def __mul__(self, scalar) -> "BlockOperator":
        return BlockOperator(self.row_structure, self.col_structure,
                             self.matrix * float(scalar), self_adjoint=self.self_adjoint)

    __rmul__ = __mul__

    def __neg__(self) -> "BlockOperator":
        return self * (-1.0)

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        if self.col_structure.total_dim != other.row_structure.total_dim:
            raise DimensionMismatchError("inner dimensions differ in operator product")
        return BlockOperator(self.row_structure, other.col_structure,
                             self.matrix @ other.matrix, self_adjoint=False)

    def __repr__(self):
        return (f"BlockOperator(rows={self.row_structure.block_dims}, "
                f"cols={self.col_structure.block_dims}, self_adjoint={self.self_adjoint})")


@dataclass(frozen=True)
class OperatorSplit:
    """Block-diagonal plus strictly-upper partition of a self-adjoint operator.

    The partition is a copy of entries, not arithmetic, so
    ``diag + upper + upper.T`` reconstructs the source exactly.
    """

    diag: BlockOperator
    upper: BlockOperator

    def reconstruct(self) -> BlockOperator:
        return BlockOperator(
            self.diag.row_structure, self.diag.col_structure,
            self.diag.matrix + self.upper.matrix + self.upper.matrix.T,
            self_adjoint=True,
        )


def _require_self_adjoint(H: BlockOperator, what: str = "operator") -> np.ndarray:
    if not isinstance(H, BlockOperator):
        raise TypeError(f"{what} must be a BlockOperator")
    if not H.self_adjoint:
        raise NotSelfAdjointError(f"{what} must be constructed as self-adjoint")
    return H.matrix


def split(H: BlockOperator) -> OperatorSplit:
    """Partition a self-adjoint operator into block-diagonal and strictly upper parts."""
    mat = _require_self_adjoint(H)
    s = H.row_structure
    diag = np.zeros_like(mat)
    upper = np.zeros_like(mat)
    for i in range(s.nblocks):
        sl_i = s.block_slice(i)
        diag[sl_i, sl_i] = mat[sl_i, sl_i]
        for j in range(i + 1, s.nblocks):
            sl_j = s.block_slice(j)
            upper[sl_i, sl_j] = mat[sl_i, sl_j]
    return OperatorSplit(
        diag=BlockOperator(s, s, diag, self_adjoint=True),
        upper=BlockOperator(s, s, upper),
    )


def weighted_inner(u, v, H: BlockOperator) -> float:
    """Inner product of u and v weighted by a self-adjoint operator H."""
    mat = _require_self_adjoint(H, "weight")
    ud = _vector_data(u, H.row_structure)
    vd = _vector_data(v, H.col_structure)
    return float(ud @ (mat @ vd))


def weighted_norm(u, H: BlockOperator) -> float:
    """Seminorm induced by a PSD weight; tiny negative round-off is clamped."""
    return float(np.sqrt(max(weighted_inner(u, u, H), 0.0)))


def min_eig(H: BlockOperator) -> float:
    """Smallest eigenvalue of a self-adjoint operator."""
    mat = _require_self_adjoint(H)
    return float(np.linalg.eigvalsh(mat)[0])


def spectral_norm(H) -> float:
    """Largest singular value; accepts rectangular operators and raw matrices."""
    mat = H.matrix if isinstance(H, BlockOperator) else np.asarray(H, dtype=float)
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


def _psd_eigh(H: BlockOperator):
    mat = _require_self_adjoint(H)
    vals, vecs = np.linalg.eigh(mat)
    scale = max(abs(vals[0]), abs(vals[-1]))
    if vals[0] < -PSD_CLAMP_RTOL * scale:
        raise NotPositiveDefiniteError(
            f"operator has eigenvalue {vals[0]:.3e} below the PSD tolerance "
            f"{-PSD_CLAMP_RTOL * scale:.3e}"
        )
    return np.clip(vals, 0.0, None), vecs


def operator_sqrt(H: BlockOperator) -> BlockOperator:
    """Self-adjoint PSD square root via eigendecomposition."""
    vals, vecs = _psd_eigh(H)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return BlockOperator(H.row_structure, H.col_structure, (root + root.T) / 2.0,
                         self_adjoint=True)


def operator_inv_sqrt(H: BlockOperator) -> BlockOperator:
    """Inverse square root of a positive definite operator."""
    mat = _require_self_adjoint(H)
    vals, vecs = np.linalg.eigh(mat)
    if vals[0] <= PD_MARGIN_RTOL * max(abs(vals[-1]), 1e-300):
        raise NotPositiveDefiniteError(
            f"operator is not positive definite: min eigenvalue {vals[0]:.3e}"
        )
    inv_root = (vecs / np.sqrt(vals)) @ vecs.T
    return BlockOperator(H.row_structure, H.col_structure, (inv_root + inv_root.T) / 2.0,
                         self_adjoint=True)


def spd_factor(matrix: np.ndarray, what: str = "operator"):
    """Cholesky factor of an SPD matrix, raising a descriptive error if it fails."""
    try:
        return scipy.linalg.cho_factor(np.asarray(matrix, dtype=float), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{what} is not positive definite: {exc}") from exc


def spd_solve(H: BlockOperator, b):
    """Solve H u = b for positive definite H."""
    mat = _require_self_adjoint(H)
    vals = np.linalg.eigvalsh(mat)
    if vals[0] <= PD_MARGIN_RTOL * max(abs(vals[-1]), 1e-300):
        raise NotPositiveDefiniteError(
            f"spd_solve needs a positive definite operator, min eigenvalue {vals[0]:.3e}"
        )
    data = scipy.linalg.cho_solve(spd_factor(mat), _vector_data(b, H.row_structure))
    if isinstance(b, BlockVector):
        return BlockVector(H.col_structure, data)
    return data
