"""Dense linear-operator algebra: applications, adjoints, subspaces,
projectors, pseudoinverses and the spectral constants used by the recovery
guarantees.

Everything is a plain double-precision matrix.  All rank decisions go through
a single SVD cutoff (``RANK_RTOL``) so that the constants entering the
stability bounds are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "RANK_RTOL",
    "LinearOperator",
    "Subspace",
    "identity",
    "zero_operator",
    "projector",
    "restricted_operator",
    "pseudoinverse",
    "pseudoinverse_apply",
    "kernel_basis",
    "image_basis",
    "restricted_injectivity_constant",
    "smallest_nonzero_singular_value",
    "operator_norm",
    "power_iteration_norm",
    "read_operator_csv",
    "write_operator_csv",
]

# Singular values at or below RANK_RTOL * sigma_max count as zero.
RANK_RTOL = 1e-10


def _vector(x, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise ValueError(f"{what}: expected a vector of length {n}, got {x.shape[0]}")
    return x


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Dense linear map from R^cols to R^rows with an exact adjoint."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"operator entries must be a matrix, got ndim={a.ndim}")
        object.__setattr__(self, "entries", a)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def T(self) -> "LinearOperator":
        """The adjoint as an operator in its own right."""
        return LinearOperator(self.entries.T)

    def apply(self, x) -> np.ndarray:
        x = _vector(x, self.cols, "apply")
        return self.entries @ x

    def adjoint_apply(self, y) -> np.ndarray:
        y = _vector(y, self.rows, "adjoint_apply")
        return self.entries.T @ y


def identity(n: int) -> LinearOperator:
    return LinearOperator(np.eye(n))


def zero_operator(rows: int, cols: int) -> LinearOperator:
    return LinearOperator(np.zeros((rows, cols)))


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace of R^ambient_dim carried by an orthonormal basis.

    ``basis`` is an (ambient_dim, dim) matrix with orthonormal columns; zero
    columns denote the trivial subspace {0}.
    """

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != self.ambient_dim:
            raise ValueError(
                f"basis must be ({self.ambient_dim}, k), got shape {b.shape}"
            )
        gram = b.T @ b
        if gram.size and not np.allclose(gram, np.eye(b.shape[1]), atol=1e-12):
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def project(self, x) -> np.ndarray:
        x = _vector(x, self.ambient_dim, "project")
        return self.basis @ (self.basis.T @ x)

    def projector_matrix(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = _vector(x, self.ambient_dim, "contains")
        return float(np.linalg.norm(x - self.project(x))) <= tol * (
            1.0 + float(np.linalg.norm(x))
        )

    def complement(self) -> "Subspace":
        """Orthogonal complement within the ambient space."""
        n, k = self.ambient_dim, self.dim
        if k == 0:
            return Subspace(n, np.eye(n))
        if k == n:
            return Subspace(n, np.zeros((n, 0)))
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(n, u[:, k:])

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(n, np.zeros((n, 0)))

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(n, np.eye(n))

    @classmethod
    def from_span(cls, columns, tol: float = RANK_RTOL) -> "Subspace":
        """Orthonormalize a spanning set, dropping numerically null directions."""
        a = np.asarray(columns, dtype=float)
        if a.ndim != 2:
            raise ValueError("spanning set must be a matrix of columns")
        if a.shape[1] == 0:
            return cls.zero(a.shape[0])
        u, s, _ = np.linalg.svd(a, full_matrices=False)
        smax = s[0] if s.size else 0.0
        rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
        return cls(a.shape[0], u[:, :rank])

    @classmethod
    def from_coordinates(cls, n: int, indices) -> "Subspace":
        idx = sorted(set(int(i) for i in indices))
        if idx and (idx[0] < 0 or idx[-1] >= n):
            raise ValueError(f"coordinate indices out of range for dimension {n}")
        b = np.zeros((n, len(idx)))
        for j, i in enumerate(idx):
            b[i, j] = 1.0
        return cls(n, b)


def projector(sub: Subspace) -> LinearOperator:
    """Orthogonal projector onto the subspace: P = B B^T, P^2 = P = P^T."""
    return LinearOperator(sub.projector_matrix())


def restricted_operator(op: LinearOperator, sub: Subspace) -> LinearOperator:
    """Compose with the projector on the domain side: op . P_sub.

    The adjoint of the result is P_sub . op^T, which restricts the adjoint on
    its range side.
    """
    if sub.ambient_dim != op.cols:
        raise ValueError(
            f"subspace lives in R^{sub.ambient_dim}, operator domain is R^{op.cols}"
        )
    return LinearOperator(op.entries @ sub.projector_matrix())


def pseudoinverse(op: LinearOperator, tol: float = RANK_RTOL) -> LinearOperator:
    """Moore-Penrose pseudoinverse through the SVD with relative cutoff."""
    return LinearOperator(np.linalg.pinv(op.entries, rcond=tol))


def pseudoinverse_apply(op: LinearOperator, y, tol: float = RANK_RTOL) -> np.ndarray:
    return pseudoinverse(op, tol=tol).apply(y)


def kernel_basis(op: LinearOperator, tol: float = RANK_RTOL) -> Subspace:
    """Orthonormal basis of the null space.

    Right singular vectors whose singular value is at or below
    ``tol * sigma_max`` span the kernel; the zero operator has a full kernel.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = op.cols
    if n == 0:
        return Subspace.zero(0)
    _, s, vt = np.linalg.svd(op.entries, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return Subspace(n, vt[rank:, :].T)


def image_basis(op: LinearOperator, tol: float = RANK_RTOL) -> Subspace:
    """Orthonormal basis of the range."""
    m = op.rows
    if op.cols == 0 or m == 0:
        return Subspace.zero(m)
    u, s, _ = np.linalg.svd(op.entries, full_matrices=False)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return Subspace(m, u[:, :rank])


def restricted_injectivity_constant(phi: LinearOperator, sub: Subspace) -> float:
    """Smallest singular value of phi restricted to the subspace.

    A positive value certifies that phi is injective on the subspace; zero
    signals the restricted injectivity condition fails.  The trivial subspace
    returns +inf: injectivity is vacuous there and downstream constants stay
    finite through explicit guards.
    """
    if sub.ambient_dim != phi.cols:
        raise ValueError(
            f"subspace lives in R^{sub.ambient_dim}, operator domain is R^{phi.cols}"
        )
    k = sub.dim
    if k == 0:
        return float("inf")
    a = phi.entries @ sub.basis
    if k > a.shape[0]:
        return 0.0
    s = np.linalg.svd(a, compute_uv=False)
    return float(s[-1])


def smallest_nonzero_singular_value(op: LinearOperator, tol: float = RANK_RTOL) -> float:
    """Smallest singular value above the rank cutoff.

    This is the injectivity constant of the operator on the orthogonal
    complement of its kernel.  Undefined (raises) for the zero operator.
    """
    s = np.linalg.svd(op.entries, compute_uv=False)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        raise ValueError("zero operator: no nonzero singular values")
    kept = s[s > tol * smax]
    return float(kept[-1])


def operator_norm(op: LinearOperator) -> float:
    """Largest singular value (spectral norm)."""
    if op.entries.size == 0:
        return 0.0
    s = np.linalg.svd(op.entries, compute_uv=False)
    return float(s[0]) if s.size else 0.0


def power_iteration_norm(a: np.ndarray, rtol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of a matrix by power iteration on a^T a.

    Deterministic start; stops when the relative change of the estimate drops
    below ``rtol``.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    n = a.shape[1]
    # fixed, generic start vector
    v = 1.0 + 0.01 * np.sin(np.arange(1, n + 1, dtype=float))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        new_est = float(np.sqrt(nw))
        if abs(new_est - est) <= rtol * max(new_est, 1e-300):
            return new_est
        est = new_est
    return est


def write_operator_csv(op: LinearOperator, path) -> None:
    """Serialize: header line ``rows,cols`` then one matrix row per line."""
    lines = [f"{op.rows},{op.cols}"]
    for row in op.entries:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_operator_csv(path) -> LinearOperator:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ValueError(f"{path}: empty operator file")
    head = text[0].split(",")
    if len(head) != 2:
        raise ValueError(f"{path}: header must be 'rows,cols'")
    rows, cols = int(head[0]), int(head[1])
    if len(text) - 1 != rows:
        raise ValueError(f"{path}: expected {rows} matrix rows, got {len(text) - 1}")
    entries = np.zeros((rows, cols))
    for i, line in enumerate(text[1:]):
        vals = [float(v) for v in line.split(",")]
        if len(vals) != cols:
            raise ValueError(f"{path}: row {i} has {len(vals)} entries, expected {cols}")
        entries[i] = vals
    return LinearOperator(entries)
