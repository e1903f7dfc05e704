"""Dense complex matrix helpers shared by the channel, selection and precoder code.

Matrices are plain ``numpy`` arrays of ``complex128``. Every public function
validates shape and finiteness of its inputs and never mutates them.

SVD backend: LAPACK through ``numpy.linalg.svd`` (Golub-Kahan bidiagonalisation,
divide and conquer). It is deterministic for identical input on one build. On top
of it the column phases of the singular vectors are pinned (largest-magnitude
entry of every right singular vector made real-positive) so labels derived from
them do not depend on the LAPACK vendor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hblab_app.core.errors import ContractError, NumericFailureError

HERMITIAN_TOL = 1e-9
PSD_CLAMP = -1e-9


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray  # m x m, orthonormal columns
    s: np.ndarray  # min(m, n) non-negative, descending
    v: np.ndarray  # n x n, orthonormal columns (V, not V^H)

    def reconstruct(self) -> np.ndarray:
        k = self.s.size
        return (self.u[:, :k] * self.s) @ self.v[:, :k].conj().T


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {arr.shape}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} has non-finite entries")
    return arr


def hermitian(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def matmul(a, b) -> np.ndarray:
    a = as_cmatrix(a, "left operand")
    b = as_cmatrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def frobenius_norm(a) -> float:
    arr = np.asarray(a)
    if arr.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(arr) ** 2)))


def fix_column_phases(v: np.ndarray) -> np.ndarray:
    """Per-column unit phases that make each column's largest-magnitude entry real-positive."""
    if v.size == 0:
        return np.ones(v.shape[1], dtype=np.complex128)
    pivots = np.argmax(np.abs(v), axis=0)
    lead = v[pivots, np.arange(v.shape[1])]
    phases = np.ones(v.shape[1], dtype=np.complex128)
    nonzero = np.abs(lead) > 0
    phases[nonzero] = np.conj(lead[nonzero]) / np.abs(lead[nonzero])
    return phases


def svd(a) -> SvdResult:
    a = as_cmatrix(a)
    if a.size == 0:
        raise ContractError("svd of an empty matrix")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        # LAPACK does not report its sweep count
        raise NumericFailureError(f"svd did not converge for a {a.shape} matrix: {exc}") from exc
    v = hermitian(vh)
    k = s.size

    # same phase on u_i and v_i keeps u_i s_i v_i^H unchanged
    v_phase = fix_column_phases(v)
    v = v * v_phase
    u = u.copy()
    u[:, :k] = u[:, :k] * v_phase[:k]
    if u.shape[1] > k:
        u[:, k:] = u[:, k:] * fix_column_phases(u[:, k:])
    return SvdResult(u=u, s=s, v=v)


def _check_hermitian(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - hermitian(a)), initial=0.0) > HERMITIAN_TOL * scale:
        raise ContractError("matrix is not Hermitian")


def logdet_hermitian_psd(a) -> float:
    """log2 det(a) for Hermitian PSD ``a`` via its eigenvalues."""
    a = as_cmatrix(a)
    _check_hermitian(a)
    w = np.linalg.eigvalsh(0.5 * (a + hermitian(a)))
    if w.size and w[0] < PSD_CLAMP * max(1.0, float(w[-1])):
        raise ContractError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log2(w)))


def principal_eigvec_hermitian(a, tol: float = 1e-10, max_iter: int = 5000) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a Hermitian PSD matrix by power iteration.

    Stops once ``||A v - lambda v|| <= tol * ||A||_F``. The returned vector has unit
    norm and its largest-magnitude entry is real-positive.
    """
    a = as_cmatrix(a)
    _check_hermitian(a)
    n = a.shape[0]
    scale = frobenius_norm(a)
    if scale == 0.0:
        e0 = np.zeros(n, dtype=np.complex128)
        e0[0] = 1.0
        return 0.0, e0

    # start from the strongest column: it lies in the range of A and is not
    # orthogonal to the dominant eigenvector unless A is degenerate
    v = a[:, int(np.argmax(np.linalg.norm(a, axis=0)))].copy()
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = a @ v
        lam = float(np.real(np.vdot(v, w)))
        if np.linalg.norm(w - lam * v) <= tol * scale:
            return lam, v * fix_column_phases(v[:, None])[0]
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0, v * fix_column_phases(v[:, None])[0]
        v = w / norm_w
    raise NumericFailureError("power iteration did not converge", iterations=max_iter)
