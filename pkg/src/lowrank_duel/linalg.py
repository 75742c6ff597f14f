"""Dense symmetric linear-algebra kernel.

Everything downstream (instances, solvers, certificates, completion) goes
through the types and helpers here: symmetric matrices with a stable,
deterministically ordered eigendecomposition, PSD tests, and the
vec/mat_s conversions between n^2 vectors and symmetric matrices.

Tolerance defaults are explicit module constants because none of the
quantities they guard come with a natural scale-free threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidInput

# Reconstruction quality guaranteed by sym_eig (relative to max(1, ||M||_F)).
RECONSTRUCTION_TOL = 1e-10
# Default slack for PSD membership tests.
PSD_TOL = 1e-9
# Largest asymmetry the matrix-file loader repairs silently.
FILE_ASYMMETRY_TOL = 1e-8

ORDER_MODES = ("descending_absolute", "descending_signed")


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class SymMat:
    """Dense real symmetric matrix, symmetrized and frozen on construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = _as_square(self.entries)
        if a.shape[0] < 1:
            raise InvalidInput("dimension must be >= 1")
        if not np.isfinite(a).all():
            raise InvalidInput("matrix has non-finite entries")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries))

    def frob(self) -> float:
        return float(np.linalg.norm(self.entries, "fro"))

    def __sub__(self, other: "SymMat") -> "SymMat":
        return SymMat(self.entries - other.entries)

    def __add__(self, other: "SymMat") -> "SymMat":
        return SymMat(self.entries + other.entries)


def _entries(m) -> np.ndarray:
    """Accept SymMat or array-like; return the symmetric ndarray."""
    if isinstance(m, SymMat):
        return m.entries
    return SymMat(np.asarray(m, dtype=float)).entries


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenpairs of a symmetric matrix in a deterministic order.

    ``descending_absolute`` sorts by |lambda| descending; ties are broken by
    signed value descending, then by the position in LAPACK's ascending
    output, so repeated calls agree bit for bit.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    order_mode: str

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def sym_eig(m, mode: str = "descending_absolute") -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix with deterministic ordering."""
    if mode not in ORDER_MODES:
        raise InvalidInput(f"unknown order mode {mode!r}")
    a = _entries(m)
    w, q = np.linalg.eigh(a)
    if mode == "descending_absolute":
        # lexsort: last key is primary.
        order = np.lexsort((np.arange(len(w)), -w, -np.abs(w)))
    else:
        order = np.lexsort((np.arange(len(w)), -w))
    w = w[order]
    q = q[:, order]
    w.setflags(write=False)
    q.setflags(write=False)
    return EigenDecomp(eigenvalues=w, eigenvectors=q, order_mode=mode)


def psd_check(m, tol: float = PSD_TOL) -> bool:
    """True iff the smallest eigenvalue is >= -tol."""
    if tol < 0:
        raise InvalidInput("tol must be nonnegative")
    a = _entries(m)
    return bool(np.linalg.eigvalsh(a)[0] >= -tol)


def psd_check_chol(m, tol: float = PSD_TOL) -> bool:
    """PSD test via pivoted Cholesky (LAPACK pstrf), independent of sym_eig.

    Used as the second route of the dual PSD check on certificates: the
    factorization of M + tol*I must succeed with no negative pivot.
    """
    a = _entries(m)
    n = a.shape[0]
    shifted = a + tol * np.eye(n)
    c, piv, rank, info = lapack.dpstrf(shifted, lower=1)
    if info < 0:
        raise InvalidInput("pstrf failed on input")
    # info > 0 means the trailing block was not positive; accept only if the
    # remainder is negligible at the working tolerance.
    if rank == n:
        return True
    l = np.tril(c)[:, :rank]
    p = np.argsort(piv - 1)
    resid = shifted - (l @ l.T)[np.ix_(p, p)]
    return bool(np.max(np.abs(resid)) <= 10 * tol * max(1.0, np.max(np.abs(a))))


def vec(m) -> np.ndarray:
    """Stack the columns of a matrix into a length-n^2 vector."""
    a = _as_square(np.asarray(m.entries if isinstance(m, SymMat) else m, dtype=float))
    return a.ravel(order="F").copy()


def mat_s(x) -> SymMat:
    """Fold a length-n^2 vector back into a symmetric matrix (X + X^T)/2."""
    x = np.asarray(x, dtype=float).ravel()
    n = math.isqrt(x.size)
    if n * n != x.size:
        raise InvalidInput(f"vector length {x.size} is not a perfect square")
    return SymMat(0.5 * (x.reshape((n, n), order="F") + x.reshape((n, n), order="C")))


def save_matrix(path, m: SymMat) -> None:
    payload = {"n": m.n, "entries": [[float(v) for v in row] for row in m.entries]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def load_matrix(path) -> SymMat:
    """Load a {"n", "entries"} JSON matrix; reject real asymmetry."""
    with open(path) as f:
        payload = json.load(f)
    a = np.asarray(payload["entries"], dtype=float)
    if a.shape != (payload["n"], payload["n"]):
        raise InvalidInput("entries shape disagrees with declared n")
    if np.max(np.abs(a - a.T), initial=0.0) > FILE_ASYMMETRY_TOL:
        raise InvalidInput("matrix file is asymmetric beyond tolerance")
    return SymMat(a)
