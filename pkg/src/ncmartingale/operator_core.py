"""Dense Hermitian matrix algebra.

Every functional-calculus operation (exponentials, spectral projections,
arbitrary ``f(x)``) goes through a single eigendecomposition, so there is
one tolerance story for the whole package.

Operators built in *diagonal mode* keep only their diagonal as a 1-D real
array.  This is what lets the commutative embedding reach dimensions in
the hundreds of thousands without allocating D x D matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

HERMITIAN_RTOL = 1e-12
PROJECTION_TOL = 1e-9
PSD_TOL = 1e-9


class NonHermitianInput(ValueError):
    pass


class NonFiniteResult(ArithmeticError):
    pass


class DimensionMismatch(ValueError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class HermitianOperator:
    """Immutable d x d complex Hermitian matrix.

    ``entries`` may be a square matrix or, for diagonal operators, a 1-D
    array of real diagonal values.  Square input is checked for symmetry
    and stored symmetrized.
    """

    __slots__ = ("_diag", "_mat", "__dict__")

    def __init__(self, entries, *, check: bool = True):
        arr = np.asarray(entries)
        if arr.ndim == 1:
            if np.iscomplexobj(arr):
                if check and np.max(np.abs(arr.imag), initial=0.0) > HERMITIAN_RTOL * max(
                    1.0, float(np.max(np.abs(arr), initial=0.0))
                ):
                    raise NonHermitianInput("diagonal entries must be real")
                arr = arr.real
            if arr.size == 0:
                raise ValueError("dimension must be >= 1")
            self._diag = _frozen(np.array(arr, dtype=float))
            self._mat = None
            return
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValueError(f"expected a non-empty square matrix, got shape {arr.shape}")
        mat = np.array(arr, dtype=complex)
        if check:
            scale = max(1.0, float(np.max(np.abs(mat))))
            asym = float(np.max(np.abs(mat - mat.conj().T)))
            if asym > HERMITIAN_RTOL * scale:
                raise NonHermitianInput(f"matrix is not Hermitian (asymmetry {asym:.3e})")
        mat = 0.5 * (mat + mat.conj().T)
        self._diag = None
        self._mat = _frozen(mat)

    @classmethod
    def diagonal(cls, values) -> "HermitianOperator":
        return cls(np.asarray(values, dtype=float).ravel())

    @classmethod
    def identity(cls, dim: int, *, diagonal: bool = False) -> "HermitianOperator":
        if diagonal:
            return cls(np.ones(dim))
        return cls(np.eye(dim), check=False)

    @classmethod
    def zeros(cls, dim: int, *, diagonal: bool = False) -> "HermitianOperator":
        if diagonal:
            return cls(np.zeros(dim))
        return cls(np.zeros((dim, dim)), check=False)

    @property
    def dim(self) -> int:
        return self._diag.size if self._mat is None else self._mat.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self._mat is None

    @property
    def diag(self) -> np.ndarray:
        """Real diagonal; only defined for diagonal-mode operators."""
        if self._mat is not None:
            raise TypeError("dense operator has no compact diagonal")
        return self._diag

    @property
    def matrix(self) -> np.ndarray:
        if self._mat is None:
            return np.diag(self._diag.astype(complex))
        return self._mat

    @cached_property
    def spectral(self) -> "SpectralDecomposition":
        return eigendecompose(self)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        if self._mat is None:
            return _frozen(np.sort(self._diag, kind="stable"))
        return self.spectral.eigenvalues

    def op_norm(self) -> float:
        ev = self.eigenvalues
        return float(max(abs(ev[0]), abs(ev[-1])))

    def _coerce(self, other) -> "HermitianOperator":
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        if other.dim != self.dim:
            raise DimensionMismatch(f"{self.dim} vs {other.dim}")
        return other

    def __add__(self, other):
        if np.isscalar(other):
            if self.is_diagonal:
                return HermitianOperator(self._diag + float(other))
            return HermitianOperator(self._mat + float(other) * np.eye(self.dim), check=False)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_diagonal and other.is_diagonal:
            return HermitianOperator(self._diag + other._diag)
        return HermitianOperator(self.matrix + other.matrix, check=False)

    __radd__ = __add__

    def __neg__(self):
        if self.is_diagonal:
            return HermitianOperator(-self._diag)
        return HermitianOperator(-self._mat, check=False)

    def __sub__(self, other):
        if np.isscalar(other):
            return self + (-float(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if not np.isscalar(scalar) or np.iscomplexobj(scalar):
            return NotImplemented
        if self.is_diagonal:
            return HermitianOperator(self._diag * float(scalar))
        return HermitianOperator(self._mat * float(scalar), check=False)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        kind = "diagonal" if self.is_diagonal else "dense"
        return f"HermitianOperator(dim={self.dim}, {kind})"


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    # first non-negligible component of each column made real positive
    mags = np.abs(vecs)
    first = np.argmax(mags > 1e-10, axis=0)
    lead = vecs[first, np.arange(vecs.shape[1])]
    return vecs * (np.abs(lead) / lead)


def eigendecompose(x: HermitianOperator) -> SpectralDecomposition:
    if not isinstance(x, HermitianOperator):
        x = HermitianOperator(x)
    if x.is_diagonal:
        order = np.argsort(x.diag, kind="stable")
        vecs = np.eye(x.dim, dtype=complex)[:, order]
        return SpectralDecomposition(_frozen(x.diag[order].copy()), _frozen(vecs))
    vals, vecs = np.linalg.eigh(x.matrix)
    return SpectralDecomposition(_frozen(vals), _frozen(_fix_phases(vecs)))


def _apply(f: Callable, values: np.ndarray) -> np.ndarray:
    try:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(f(values), dtype=float)
        if out.shape != values.shape:
            raise TypeError
    except TypeError:
        out = np.array([f(float(v)) for v in values], dtype=float)
    return out


def func_calculus(x: HermitianOperator, f: Callable) -> HermitianOperator:
    """Return f(x) = U diag(f(lambda)) U*."""
    if x.is_diagonal:
        vals = _apply(f, x.diag)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteResult("f is not finite on the spectrum")
        return HermitianOperator(vals)
    spec = x.spectral
    vals = _apply(f, spec.eigenvalues)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteResult("f is not finite on the spectrum")
    u = spec.eigenvectors
    return HermitianOperator((u * vals) @ u.conj().T, check=False)


def expm(x: HermitianOperator) -> HermitianOperator:
    return func_calculus(x, np.exp)


def _in_window(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    eps = PROJECTION_TOL * (1.0 + np.abs(values))
    return (values >= lo - eps) & (values <= hi + eps)


@dataclass(frozen=True)
class Projection:
    """Orthogonal projection, with an orthonormal range basis when dense."""

    operator: HermitianOperator
    basis: np.ndarray | None = None

    def __post_init__(self):
        op = self.operator
        if op.is_diagonal:
            d = op.diag
            if np.any(np.minimum(np.abs(d), np.abs(d - 1.0)) > PROJECTION_TOL):
                raise ValueError("diagonal projection entries must be 0 or 1")
            return
        m = op.matrix
        if np.linalg.norm(m @ m - m, 2) > PROJECTION_TOL:
            raise ValueError("operator is not idempotent")

    @classmethod
    def from_basis(cls, basis: np.ndarray, dim: int) -> "Projection":
        basis = np.asarray(basis, dtype=complex).reshape(dim, -1)
        mat = basis @ basis.conj().T
        return cls(HermitianOperator(mat, check=False), _frozen(basis))

    @classmethod
    def zero(cls, dim: int, *, diagonal: bool = False) -> "Projection":
        if diagonal:
            return cls(HermitianOperator(np.zeros(dim)))
        return cls.from_basis(np.zeros((dim, 0)), dim)

    @classmethod
    def identity(cls, dim: int, *, diagonal: bool = False) -> "Projection":
        if diagonal:
            return cls(HermitianOperator(np.ones(dim)))
        return cls.from_basis(np.eye(dim), dim)

    @property
    def dim(self) -> int:
        return self.operator.dim

    @property
    def is_diagonal(self) -> bool:
        return self.operator.is_diagonal

    @cached_property
    def range_basis(self) -> np.ndarray:
        if self.basis is not None:
            return self.basis
        if self.is_diagonal:
            idx = np.flatnonzero(self.operator.diag > 0.5)
            return _frozen(np.eye(self.dim, dtype=complex)[:, idx])
        spec = self.operator.spectral
        return _frozen(spec.eigenvectors[:, spec.eigenvalues > 0.5])

    @property
    def rank(self) -> int:
        if self.is_diagonal:
            return int(np.count_nonzero(self.operator.diag > 0.5))
        return int(self.range_basis.shape[1])

    @property
    def trace(self) -> float:
        return self.rank / self.dim

    def complement(self) -> "Projection":
        return Projection(1.0 - self.operator)


def spectral_projection(x: HermitianOperator, lo: float = -np.inf, hi: float = np.inf) -> Projection:
    """Projection onto eigenvectors of x with eigenvalue in the closed window [lo, hi]."""
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if x.is_diagonal:
        return Projection(HermitianOperator(_in_window(x.diag, lo, hi).astype(float)))
    spec = x.spectral
    keep = _in_window(spec.eigenvalues, lo, hi)
    return Projection.from_basis(spec.eigenvectors[:, keep], x.dim)


def trace_state(x) -> float:
    """Normalized trace Tr(x)/d."""
    if isinstance(x, Projection):
        return x.trace
    if isinstance(x, HermitianOperator):
        if x.is_diagonal:
            return float(np.mean(x.diag))
        return float(np.trace(x.matrix).real) / x.dim
    m = np.asarray(x)
    return complex(np.trace(m)).real / m.shape[0]


def trace_product(x: HermitianOperator, y: HermitianOperator) -> float:
    """tau(xy) without forming the product."""
    if x.dim != y.dim:
        raise DimensionMismatch(f"{x.dim} vs {y.dim}")
    if x.is_diagonal and y.is_diagonal:
        return float(np.dot(x.diag, y.diag)) / x.dim
    return float(np.sum(x.matrix * y.matrix.T).real) / x.dim


def gt_gap(y1: HermitianOperator, y2: HermitianOperator) -> float:
    """tau(e^{y1} e^{y2}) - tau(e^{y1+y2}); nonnegative by Golden-Thompson."""
    if y1.dim != y2.dim:
        raise DimensionMismatch(f"{y1.dim} vs {y2.dim}")
    return trace_product(expm(y1), expm(y2)) - trace_state(expm(y1 + y2))


def is_psd(x: HermitianOperator, tol: float = PSD_TOL) -> bool:
    ev = x.eigenvalues
    return bool(ev[0] >= -tol * (1.0 + x.op_norm()))


def min_eigenvalue(x: HermitianOperator) -> float:
    return float(x.eigenvalues[0])


def op_norm(m) -> float:
    """Spectral norm of a Hermitian operator or an arbitrary matrix."""
    if isinstance(m, HermitianOperator):
        return m.op_norm()
    m = np.asarray(m)
    if m.ndim == 1:
        return float(np.max(np.abs(m), initial=0.0))
    return float(np.linalg.norm(m, 2))


def commutator_norm(x: HermitianOperator, y: HermitianOperator) -> float:
    if x.is_diagonal and y.is_diagonal:
        return 0.0
    a, b = x.matrix, y.matrix
    return float(np.linalg.norm(a @ b - b @ a, 2))


def random_hermitian(dim: int, rng: np.random.Generator, *, scale: float = 1.0) -> HermitianOperator:
    """Symmetrized i.i.d. standard complex Gaussian matrix."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return HermitianOperator(scale * 0.5 * (g + g.conj().T), check=False)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary via QR with the usual phase correction."""
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
