"""Forward dynamics of constrained systems in projected form.

Instead of solving a saddle-point system for Lagrange multipliers, the
equations of motion are closed with a nullspace projector: the applied
and bias forces are projected onto the constraint manifold's tangent
space and an invertible constraint inertia replaces the mass matrix.
Three interchangeable constraint-inertia constructions are provided;
they produce identical accelerations and differ only in the algebraic
properties of the assembled matrix.

The constraint force and minimum-norm multipliers are recovered
afterwards from the same projected quantities.  A conventional
multiplier-based solver is included as a reference; unlike the
projected form it fails outright when the constraint Jacobian loses
rank.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (InvalidInputError, InvalidParameterError,
                     RankDeficientError, SingularInertiaError)
from .projection import ProjectionData, curvature_product, pseudo_inverse
from .systems import GeneralizedState, MechanicalSystem

# states whose constraint residual exceeds this are flagged as off-manifold
ON_MANIFOLD_WARN = 1e-6

VARIANTS = ("skew", "symmetric", "parameterized")


class ConstraintDriftWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ModelTerms:
    """All model evaluations needed at one state, computed once."""

    M: np.ndarray
    h: np.ndarray
    phi: np.ndarray
    A: np.ndarray
    A_dot: np.ndarray
    projection: ProjectionData
    curvature: np.ndarray  # the product C qdot

    @property
    def P(self) -> np.ndarray:
        return self.projection.projector


@dataclass(frozen=True)
class DynamicsSolution:
    """Acceleration plus recovered constraint-force data at one state."""

    qddot: np.ndarray
    constraint_force: np.ndarray
    multipliers: np.ndarray
    multipliers_unique: bool
    mu: np.ndarray
    projection: ProjectionData


def model_terms(system: MechanicalSystem, state: GeneralizedState,
                rank_tol: float | None = None,
                warn_drift: bool = True) -> ModelTerms:
    """Evaluate mass, bias, constraint data, and the projector at a state.

    Warns (does not fail) when the state has drifted off the constraint
    manifold by more than ``ON_MANIFOLD_WARN``.  Callers that evaluate
    intentionally off-manifold states, integrator stages for instance,
    pass ``warn_drift=False``.
    """
    q, qdot = state.q, state.qdot
    M = np.asarray(system.mass_matrix(q), dtype=float)
    h = np.asarray(system.bias(q, qdot), dtype=float)
    phi = np.atleast_1d(np.asarray(system.constraint(q), dtype=float))
    A = np.atleast_2d(np.asarray(system.jacobian(q), dtype=float))
    A_dot = np.atleast_2d(np.asarray(system.jacobian_rate(q, qdot), dtype=float))
    drift = float(np.linalg.norm(phi))
    if warn_drift and drift > ON_MANIFOLD_WARN:
        warnings.warn(f"state is off the constraint manifold, |phi| = {drift:.3e}",
                      ConstraintDriftWarning, stacklevel=2)
    data = pseudo_inverse(A, tol=rank_tol)
    cq = curvature_product(data, A_dot, qdot)
    return ModelTerms(M=M, h=h, phi=phi, A=A, A_dot=A_dot,
                      projection=data, curvature=cq)


def constraint_inertia_skew(M, P) -> np.ndarray:
    """Constraint inertia M + PM - (PM)^T.

    Positive definite but not symmetric in general.  Its quadratic form
    coincides with that of M because the added part is skew.  The
    matching curvature right-hand side is ``M @ (C qdot)``.
    """
    M = np.asarray(M, dtype=float)
    P = np.asarray(P, dtype=float)
    PM = P @ M
    return M + PM - PM.T


def constraint_inertia_symmetric(M, P) -> np.ndarray:
    """Constraint inertia P M P + (I - P) M (I - P), symmetric positive definite.

    The matching curvature right-hand side is ``(I - 2P) @ M @ (C qdot)``.
    """
    M = np.asarray(M, dtype=float)
    P = np.asarray(P, dtype=float)
    Q = np.eye(P.shape[0]) - P
    return P @ M @ P + Q @ M @ Q


def constraint_inertia_parameterized(M, P, gamma: float | None = None) -> np.ndarray:
    """Constraint inertia P M + gamma (I - P) for any gamma > 0.

    Invertible but neither symmetric nor positive definite in general.
    ``gamma`` defaults to the spectral norm of M so both blocks carry
    comparable scale.  The matching curvature right-hand side is
    ``gamma * (C qdot)``.
    """
    M = np.asarray(M, dtype=float)
    P = np.asarray(P, dtype=float)
    if gamma is None:
        gamma = float(np.linalg.norm(M, 2))
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    return P @ M + gamma * (np.eye(P.shape[0]) - P)


def coupling_map(M, P) -> np.ndarray:
    """Perpendicular-to-parallel coupling mu = (I - P) M inv(Mc).

    Built on the skew-form constraint inertia, which is the one the
    force-recovery equation is phrased in.  ``mu @ P == 0`` exactly when
    the perpendicular dynamics decouple from the parallel ones.
    """
    M = np.asarray(M, dtype=float)
    P = np.asarray(P, dtype=float)
    Mc = constraint_inertia_skew(M, P)
    Q = np.eye(P.shape[0]) - P
    try:
        # mu Mc = (I - P) M, solved from the right
        return np.linalg.solve(Mc.T, (Q @ M).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError("constraint inertia is singular") from exc


def is_decoupled(M, P, tol: float = 1e-10) -> bool:
    """Whether the mass matrix maps the nullspace into itself.

    True when ``|(I - P) M P| <= tol * |M|`` in the spectral norm, which
    is equivalent to the coupling map annihilating the parallel channel.
    """
    M = np.asarray(M, dtype=float)
    P = np.asarray(P, dtype=float)
    Q = np.eye(P.shape[0]) - P
    return float(np.linalg.norm(Q @ M @ P, 2)) <= tol * float(np.linalg.norm(M, 2))


def _recover_force(terms: ModelTerms, f: np.ndarray):
    """Constraint force, multipliers, and coupling map from solved terms."""
    P = terms.P
    Q = np.eye(P.shape[0]) - P
    mu = coupling_map(terms.M, P)
    f_par, f_perp = P @ f, Q @ f
    h_par, h_perp = P @ terms.h, Q @ terms.h
    force = (f_perp - h_perp) - mu @ (f_par - h_par) - mu @ (terms.M @ terms.curvature)
    lam = terms.projection.pinv.T @ force
    unique = terms.projection.rank == terms.A.shape[0]
    return force, lam, unique, mu


def constraint_force(system: MechanicalSystem, state: GeneralizedState, f,
                     terms: ModelTerms | None = None,
                     rank_tol: float | None = None):
    """Reaction force transmitted by the constraints, with minimum-norm multipliers.

    Returns ``(force, multipliers, unique)``.  The force lives in the row
    space of the constraint Jacobian; the multipliers solve
    ``A.T lam = force`` with minimum norm and are unique exactly when the
    Jacobian has full row rank.
    """
    if terms is None:
        terms = model_terms(system, state, rank_tol=rank_tol)
    f = np.asarray(f, dtype=float)
    if f.shape != (system.dof,) or not np.all(np.isfinite(f)):
        raise InvalidInputError(f"f must be a finite vector of length {system.dof}")
    force, lam, unique, _ = _recover_force(terms, f)
    return force, lam, unique


def forward_dynamics(system: MechanicalSystem, state: GeneralizedState, f,
                     variant: str = "skew", gamma: float | None = None,
                     rank_tol: float | None = None,
                     terms: ModelTerms | None = None,
                     warn_drift: bool = True) -> DynamicsSolution:
    """Constrained acceleration under applied force f, by nullspace projection.

    Parameters
    ----------
    variant : str
        Constraint-inertia construction: "skew", "symmetric", or
        "parameterized".  All three yield the same acceleration.
    gamma : float, optional
        Free parameter of the parameterized variant; spectral norm of M
        when omitted.
    rank_tol : float, optional
        Absolute singular-value cutoff forwarded to the projector.  An
        absolute band makes the solver treat near-singular Jacobians as
        rank deficient instead of amplifying them.
    """
    if variant not in VARIANTS:
        raise InvalidParameterError(
            f"variant must be one of {VARIANTS}, got {variant!r}")
    if terms is None:
        terms = model_terms(system, state, rank_tol=rank_tol,
                            warn_drift=warn_drift)
    f = np.asarray(f, dtype=float)
    if f.shape != (system.dof,) or not np.all(np.isfinite(f)):
        raise InvalidInputError(f"f must be a finite vector of length {system.dof}")

    M, h, P, cq = terms.M, terms.h, terms.P, terms.curvature
    proj_force = P @ (f - h)
    if variant == "skew":
        Mc = constraint_inertia_skew(M, P)
        rhs = proj_force + M @ cq
    elif variant == "symmetric":
        Mc = constraint_inertia_symmetric(M, P)
        rhs = proj_force + (np.eye(P.shape[0]) - 2.0 * P) @ (M @ cq)
    else:
        Mc = constraint_inertia_parameterized(M, P, gamma=gamma)
        g = float(np.linalg.norm(M, 2)) if gamma is None else float(gamma)
        rhs = proj_force + g * cq
    try:
        qddot = np.linalg.solve(Mc, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError(
            f"constraint inertia ({variant}) is singular") from exc

    force, lam, unique, mu = _recover_force(terms, f)
    return DynamicsSolution(qddot=qddot, constraint_force=force,
                            multipliers=lam, multipliers_unique=unique,
                            mu=mu, projection=terms.projection)


def forward_dynamics_classical(system: MechanicalSystem, state: GeneralizedState,
                               f, rank_tol: float | None = None):
    """Reference multiplier-based solver.

    Solves the textbook saddle-point form: multipliers from the
    constraint-space inertia ``A inv(M) A.T``, then acceleration from
    Newton's law.  Returns ``(qddot, multipliers)``.  Raises
    :class:`RankDeficientError` when the constraint Jacobian is rank
    deficient at the given tolerance, which is exactly the regime the
    projected solver survives.
    """
    q, qdot = state.q, state.qdot
    M = np.asarray(system.mass_matrix(q), dtype=float)
    h = np.asarray(system.bias(q, qdot), dtype=float)
    A = np.atleast_2d(np.asarray(system.jacobian(q), dtype=float))
    A_dot = np.atleast_2d(np.asarray(system.jacobian_rate(q, qdot), dtype=float))
    f = np.asarray(f, dtype=float)
    if f.shape != (system.dof,) or not np.all(np.isfinite(f)):
        raise InvalidInputError(f"f must be a finite vector of length {system.dof}")

    data = pseudo_inverse(A, tol=rank_tol)
    if data.rank < A.shape[0]:
        raise RankDeficientError(
            f"constraint Jacobian rank {data.rank} < {A.shape[0]}; "
            "multiplier system is singular")
    Minv_rhs = np.linalg.solve(M, (f - h))
    Minv_At = np.linalg.solve(M, A.T)
    gram = A @ Minv_At
    try:
        lam = np.linalg.solve(gram, A @ Minv_rhs + A_dot @ qdot)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("constraint-space inertia is singular") from exc
    qddot = Minv_rhs - Minv_At @ lam
    return qddot, lam
