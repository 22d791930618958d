"""Truncated Fock-space operators and tensor embedding.

Composite spaces use slot 0 as the most significant index, so a basis state
|n_0, n_1, ..., n_{k-1}> sits at flat index ``sum_i n_i * prod_{j>i} d_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class OperatorError(ValueError):
    pass


class ModeKind(str, Enum):
    MECHANICAL = "mechanical"
    AUXILIARY = "auxiliary"
    AUXILIARY_PAIR_MEMBER = "auxiliary_pair_member"


@dataclass(frozen=True)
class ModeSpec:
    """One bosonic mode: its frequency and damping in rad/s, and how many
    Fock levels are kept."""

    label: str
    kind: ModeKind
    frequency: float
    damping_rate: float = 0.0
    truncation_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        if not self.label:
            raise OperatorError("mode label must be non-empty")
        if not self.frequency > 0:
            raise OperatorError(f"mode {self.label!r}: frequency must be > 0")
        if self.damping_rate < 0:
            raise OperatorError(f"mode {self.label!r}: damping_rate must be >= 0")
        if int(self.truncation_dim) != self.truncation_dim or self.truncation_dim < 2:
            raise OperatorError(f"mode {self.label!r}: truncation_dim must be an integer >= 2")


@dataclass(frozen=True)
class CompositeSpace:
    modes: tuple[ModeSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise OperatorError(f"duplicate mode labels in {labels}")
        if not self.modes:
            raise OperatorError("a composite space needs at least one mode")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.truncation_dim for m in self.modes)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    def slot(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise OperatorError(f"unknown mode label {label!r}") from None

    def mode(self, label: str) -> ModeSpec:
        return self.modes[self.slot(label)]

    def basis_index(self, occupations: dict[str, int]) -> int:
        """Flat index of a Fock product state; unspecified modes are in vacuum."""
        unknown = set(occupations) - set(self.labels)
        if unknown:
            raise OperatorError(f"unknown mode labels {sorted(unknown)}")
        idx = 0
        for m in self.modes:
            n = int(occupations.get(m.label, 0))
            if not 0 <= n < m.truncation_dim:
                raise OperatorError(f"occupation {n} outside truncation of {m.label!r}")
            idx = idx * m.truncation_dim + n
        return idx

    def subspace(self, labels: Sequence[str]) -> "CompositeSpace":
        return CompositeSpace(tuple(self.mode(lbl) for lbl in labels))


def _canonical(mat) -> sp.csr_matrix:
    m = sp.csr_matrix(mat, dtype=complex, copy=True)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    m.data.setflags(write=False)
    m.indices.setflags(write=False)
    m.indptr.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Immutable complex square sparse matrix.

    Storage is canonical CSR (sorted, no duplicates, no explicit zeros), which
    makes entrywise equality well defined.
    """

    matrix: sp.csr_matrix
    hermitian_hint: bool | None = None
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise OperatorError(f"operator must be square, got {m.shape}")
        object.__setattr__(self, "matrix", _canonical(m))
        if self.hermitian_hint and not self.is_hermitian():
            raise OperatorError("hermitian_hint set on a non-Hermitian matrix")

    @classmethod
    def from_entries(cls, dim: int, entries: Iterable[tuple[int, int, complex]],
                     hermitian_hint: bool | None = None) -> "SparseOperator":
        entries = list(entries)
        seen = set()
        for r, c, _ in entries:
            if not (0 <= r < dim and 0 <= c < dim):
                raise OperatorError(f"entry ({r}, {c}) outside dimension {dim}")
            if (r, c) in seen:
                raise OperatorError(f"duplicate entry ({r}, {c})")
            seen.add((r, c))
        if entries:
            rows, cols, vals = zip(*entries)
        else:
            rows, cols, vals = (), (), ()
        m = sp.coo_matrix((np.asarray(vals, complex), (rows, cols)), shape=(dim, dim))
        return cls(m, hermitian_hint)

    @classmethod
    def from_dense(cls, arr) -> "SparseOperator":
        return cls(sp.csr_matrix(np.asarray(arr, dtype=complex)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def entries(self) -> list[tuple[int, int, complex]]:
        coo = self.matrix.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def to_dense(self) -> np.ndarray:
        if self._dense is None:
            d = self.matrix.toarray()
            d.setflags(write=False)
            object.__setattr__(self, "_dense", d)
        return self._dense

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix.data))) if self.matrix.nnz else 0.0

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.matrix.conj().T)

    dag = adjoint

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        scale = self.max_abs()
        if scale == 0.0:
            return True
        diff = self.matrix - self.matrix.conj().T
        err = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
        return err <= rtol * scale

    def _check(self, other: "SparseOperator"):
        if not isinstance(other, SparseOperator):
            return NotImplemented
        if other.dim != self.dim:
            raise OperatorError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SparseOperator(self.matrix + other.matrix)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SparseOperator(self.matrix - other.matrix)

    def __neg__(self):
        return SparseOperator(-self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, SparseOperator):
            return NotImplemented
        return SparseOperator(self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SparseOperator(self.matrix @ other.matrix)

    def __eq__(self, other):
        if not isinstance(other, SparseOperator) or other.dim != self.dim:
            return False
        return self.entries == other.entries

    def __hash__(self):
        return hash((self.dim, tuple(self.entries)))

    def allclose(self, other: "SparseOperator", atol: float = 1e-12) -> bool:
        self._check(other)
        diff = self.matrix - other.matrix
        return (float(np.max(np.abs(diff.data))) if diff.nnz else 0.0) <= atol

    def norm(self) -> float:
        """Spectral norm (dense; intended for the small spaces used here)."""
        if self.matrix.nnz == 0:
            return 0.0
        return float(np.linalg.norm(self.to_dense(), 2))


def _check_dim(dim: int) -> None:
    if int(dim) != dim or dim < 2:
        raise OperatorError(f"invalid dimension {dim!r}: need an integer >= 2")


def annihilation(dim: int) -> SparseOperator:
    _check_dim(dim)
    n = np.arange(1, dim)
    return SparseOperator(sp.csr_matrix((np.sqrt(n).astype(complex), (n - 1, n)), shape=(dim, dim)))


def creation(dim: int) -> SparseOperator:
    return annihilation(dim).adjoint()


def number(dim: int) -> SparseOperator:
    _check_dim(dim)
    return SparseOperator(sp.diags(np.arange(dim, dtype=complex)), hermitian_hint=True)


def identity(dim: int) -> SparseOperator:
    if int(dim) != dim or dim < 1:
        raise OperatorError(f"invalid dimension {dim!r}")
    return SparseOperator(sp.identity(dim, dtype=complex, format="csr"), hermitian_hint=True)


def zero(dim: int) -> SparseOperator:
    return SparseOperator(sp.csr_matrix((dim, dim), dtype=complex))


def embed(op: SparseOperator, space: CompositeSpace, slot: int | str) -> SparseOperator:
    """Return I ⊗ ... ⊗ op ⊗ ... ⊗ I with ``op`` acting on ``slot``."""
    if isinstance(slot, str):
        slot = space.slot(slot)
    if not 0 <= slot < len(space.modes):
        raise OperatorError(f"slot {slot} out of range for {len(space.modes)} modes")
    dims = space.dims
    if op.dim != dims[slot]:
        raise OperatorError(
            f"operator dimension {op.dim} does not match mode {space.modes[slot].label!r} "
            f"(truncation {dims[slot]})")
    left = int(np.prod(dims[:slot]))
    right = int(np.prod(dims[slot + 1:]))
    m = op.matrix
    if left > 1:
        m = sp.kron(sp.identity(left, format="csr"), m, format="csr")
    if right > 1:
        m = sp.kron(m, sp.identity(right, format="csr"), format="csr")
    return SparseOperator(m)


def mode_operators(space: CompositeSpace) -> dict[str, SparseOperator]:
    """Annihilation operator of every mode, embedded in ``space``."""
    return {m.label: embed(annihilation(m.truncation_dim), space, i)
            for i, m in enumerate(space.modes)}


def commutator(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a @ b - b @ a


def matmul(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a @ b


def add(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a + b


def adjoint(a: SparseOperator) -> SparseOperator:
    return a.adjoint()


def op_sum(ops: Iterable[SparseOperator], dim: int) -> SparseOperator:
    return reduce(lambda x, y: x + y, ops, zero(dim))
