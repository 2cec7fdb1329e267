"""Nullspace projection operators built on the singular value decomposition.

Everything downstream (forward dynamics, constraint-force recovery, the
controller family) is phrased in terms of the orthogonal projector onto
the nullspace of a constraint Jacobian A.  This module computes that
projector together with the Moore-Penrose pseudoinverse, exposes the
parallel/perpendicular split of a vector, and provides the weighted
(non-Euclidean metric) variant of the same construction.

Rank decisions are made once, inside :func:`pseudo_inverse`, by cutting
the singular value spectrum at a tolerance.  The default tolerance scales
with the largest singular value and the matrix size; passing an absolute
tolerance instead widens the band of configurations treated as singular,
which is how a simulation opts into graceful behaviour near kinematic
singularities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidMetricError

EPS = float(np.finfo(float).eps)


def _as_matrix(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


def _as_vector(x, n: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise InvalidInputError(f"{name} must have shape ({n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return x


@dataclass(frozen=True)
class ProjectionData:
    """Pseudoinverse and nullspace projector of one constraint Jacobian.

    Attributes
    ----------
    pinv : (n, m) ndarray
        Moore-Penrose pseudoinverse of the decomposed matrix.
    projector : (n, n) ndarray
        Orthogonal projector onto the nullspace, symmetrised so that
        ``projector == projector.T`` holds exactly.
    rank : int
        Number of singular values strictly above ``tol``.
    singular_values : ndarray
        Full spectrum in descending order, length ``min(m, n)``.
    tol : float
        The cutoff actually used for the rank decision.
    """

    pinv: np.ndarray
    projector: np.ndarray
    rank: int
    singular_values: np.ndarray
    tol: float

    @property
    def nullspace_dim(self) -> int:
        return self.projector.shape[0] - self.rank


def pseudo_inverse(A, tol: float | None = None) -> ProjectionData:
    """Decompose A and return its pseudoinverse and nullspace projector.

    Parameters
    ----------
    A : (m, n) array_like
        Constraint Jacobian.  A zero matrix is legal and yields a zero
        pseudoinverse with the identity projector.
    tol : float, optional
        Absolute singular-value cutoff.  When omitted the cutoff is
        ``max(m, n) * sigma_1 * machine_eps``, the usual relative rank
        tolerance.  Passing a larger absolute value deliberately treats
        nearly-singular Jacobians as rank deficient, which keeps the
        projector bounded through kinematic singularities.

    Returns
    -------
    ProjectionData

    Notes
    -----
    With the thin SVD ``A = U diag(s) Vt``, the pseudoinverse retains
    only singular values above the cutoff and the projector is
    ``I - pinv(A) @ A``, which equals ``V2 @ V2.T`` for the discarded
    right singular directions.  The projector is explicitly symmetrised
    to remove roundoff skew.
    """
    A = _as_matrix(A)
    m, n = A.shape
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if tol is None:
        tol = max(m, n) * (s[0] if s.size else 0.0) * EPS
    tol = float(tol)
    if tol < 0.0:
        raise InvalidInputError("tol must be nonnegative")
    rank = int(np.sum(s > tol))
    if rank == 0:
        pinv = np.zeros((n, m))
    else:
        pinv = (Vt[:rank].T / s[:rank]) @ U[:, :rank].T
    P = np.eye(n) - pinv @ A
    P = 0.5 * (P + P.T)
    return ProjectionData(pinv=pinv, projector=P, rank=rank,
                          singular_values=s, tol=tol)


def decompose(x, P) -> tuple[np.ndarray, np.ndarray]:
    """Split x into its nullspace component P x and the remainder.

    Returns ``(x_par, x_perp)`` with ``x_par + x_perp == x``.  For an
    orthogonal projector the two parts are mutually orthogonal and
    satisfy the Pythagorean identity.
    """
    P = _as_matrix(P, "P")
    if P.shape[0] != P.shape[1]:
        raise InvalidInputError(f"P must be square, got {P.shape}")
    x = _as_vector(x, P.shape[0])
    x_par = P @ x
    return x_par, x - x_par


def curvature_product(data: ProjectionData, A_dot, qdot) -> np.ndarray:
    """Velocity-space curvature term of the constrained dynamics.

    Computes ``-pinv(A) @ (A_dot @ qdot)``, the product of the implicit
    curvature operator with the generalized velocity.  The operator
    itself is never assembled; only this product ever enters the
    equations of motion.
    """
    n, m = data.pinv.shape
    A_dot = _as_matrix(A_dot, "A_dot")
    if A_dot.shape != (m, n):
        raise InvalidInputError(
            f"A_dot must have shape ({m}, {n}), got {A_dot.shape}")
    qdot = _as_vector(qdot, n, "qdot")
    return -data.pinv @ (A_dot @ qdot)


def reflection(P) -> np.ndarray:
    """Orthogonal reflection I - 2P across the nullspace decomposition."""
    P = _as_matrix(P, "P")
    if P.shape[0] != P.shape[1]:
        raise InvalidInputError(f"P must be square, got {P.shape}")
    return np.eye(P.shape[0]) - 2.0 * P


@dataclass(frozen=True)
class MetricTensor:
    """Symmetric positive definite weight with cached square roots.

    The weighted projection and the weighted controller need W^(1/2)
    and W^(-1/2) repeatedly; both are computed once from the eigen
    decomposition and stored.
    """

    weight: np.ndarray
    sqrt: np.ndarray
    inv_sqrt: np.ndarray

    @classmethod
    def from_matrix(cls, W) -> "MetricTensor":
        W = _as_matrix(W, "W")
        if W.shape[0] != W.shape[1]:
            raise InvalidMetricError(f"weight must be square, got {W.shape}")
        if not np.allclose(W, W.T, rtol=1e-12, atol=1e-12):
            raise InvalidMetricError("weight matrix is not symmetric")
        w, Q = np.linalg.eigh(0.5 * (W + W.T))
        if np.min(w) <= 0.0:
            raise InvalidMetricError(
                f"weight matrix is not positive definite (min eigenvalue {np.min(w):.3e})")
        sqrt = (Q * np.sqrt(w)) @ Q.T
        inv_sqrt = (Q / np.sqrt(w)) @ Q.T
        return cls(weight=W, sqrt=sqrt, inv_sqrt=inv_sqrt)

    @classmethod
    def identity(cls, n: int) -> "MetricTensor":
        eye = np.eye(n)
        return cls(weight=eye, sqrt=eye.copy(), inv_sqrt=eye.copy())

    @classmethod
    def diagonal(cls, diag) -> "MetricTensor":
        d = np.asarray(diag, dtype=float)
        if d.ndim != 1 or np.min(d) <= 0.0 or not np.all(np.isfinite(d)):
            raise InvalidMetricError("diagonal weights must be finite and positive")
        return cls(weight=np.diag(d), sqrt=np.diag(np.sqrt(d)),
                   inv_sqrt=np.diag(1.0 / np.sqrt(d)))

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


def weighted_projection(A, metric: MetricTensor, tol: float | None = None) -> ProjectionData:
    """Nullspace projector of A in the geometry induced by a weight matrix.

    The Jacobian is transformed to ``A_W = A @ W^(-1/2)`` and decomposed
    with the ordinary Euclidean machinery; the returned projector acts on
    W-space vectors ``x_W = W^(1/2) x``.  With the identity weight this
    reduces exactly to :func:`pseudo_inverse`.
    """
    A = _as_matrix(A)
    if A.shape[1] != metric.dim:
        raise InvalidInputError(
            f"metric dimension {metric.dim} does not match A columns {A.shape[1]}")
    return pseudo_inverse(A @ metric.inv_sqrt, tol=tol)
