"""Mechanical system descriptions and the built-in benchmark models.

A system is a bundle of evaluators over generalized coordinates: mass
matrix, bias forces (Coriolis, centrifugal, gravity), holonomic
constraint residual, its Jacobian and Jacobian rate, plus an actuation
selector and an optional task map used by the controllers.  Analytic
Jacobians are preferred; finite-difference fallbacks are wired in when
an evaluator is omitted.

Two models ship with the package.  The slider crank (two equal links,
tip pinned to the ground line) is the standard hard case: its constraint
Jacobian loses rank at quarter-turn crank angles.  The particle on a
circle is the minimal decoupled example with closed-form everything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .projection import MetricTensor


@dataclass
class GeneralizedState:
    """Coordinates, velocities, and time. Arrays are copied and checked."""

    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float).reshape(-1)
        self.qdot = np.array(self.qdot, dtype=float).reshape(-1)
        self.t = float(self.t)
        if self.q.size == 0 or self.q.shape != self.qdot.shape:
            raise InvalidInputError(
                f"q and qdot must be equal-length nonempty vectors, "
                f"got {self.q.shape} and {self.qdot.shape}")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))
                and np.isfinite(self.t)):
            raise InvalidInputError("state contains non-finite entries")

    @property
    def dof(self) -> int:
        return self.q.size

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(self.q.copy(), self.qdot.copy(), self.t)


@dataclass
class TaskMap:
    """Reduced-coordinate chart for a constrained system.

    ``embed`` maps task coordinates theta to full coordinates q on the
    constraint manifold, ``jacobian`` is its n x k derivative, and
    ``chart`` recovers theta from q (the inverse of embed on the branch
    the map describes).
    """

    dim: int
    embed: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    jacobian_rate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    chart: Callable[[np.ndarray], np.ndarray]


def fd_jacobian(func: Callable[[np.ndarray], np.ndarray], q,
                step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of a vector evaluator at q."""
    q = np.asarray(q, dtype=float)
    if step is None:
        step = 1e-7 * (1.0 + float(np.linalg.norm(q)))
    f0 = np.atleast_1d(np.asarray(func(q), dtype=float))
    J = np.empty((f0.size, q.size))
    for i in range(q.size):
        dq = np.zeros_like(q)
        dq[i] = step
        fp = np.atleast_1d(np.asarray(func(q + dq), dtype=float))
        fm = np.atleast_1d(np.asarray(func(q - dq), dtype=float))
        J[:, i] = (fp - fm) / (2.0 * step)
    return J


def fd_jacobian_rate(jacobian: Callable[[np.ndarray], np.ndarray], q, qdot,
                     step: float | None = None) -> np.ndarray:
    """Directional difference of a Jacobian along qdot, approximating its time derivative."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if step is None:
        step = 1e-7 * (1.0 + float(np.linalg.norm(q))) / (1.0 + float(np.linalg.norm(qdot)))
    Ap = np.atleast_2d(np.asarray(jacobian(q + step * qdot), dtype=float))
    Am = np.atleast_2d(np.asarray(jacobian(q - step * qdot), dtype=float))
    return (Ap - Am) / (2.0 * step)


@dataclass
class MechanicalSystem:
    """Evaluator bundle for one constrained mechanism.

    Parameters
    ----------
    dof, n_constraints : int
        Sizes n and m.
    mass_matrix : callable q -> (n, n)
    bias : callable (q, qdot) -> (n,)
        Coriolis, centrifugal, and gravity forces on the left-hand side,
        so the unconstrained equations read M qddot + h = f.
    constraint : callable q -> (m,)
    jacobian : callable q -> (m, n), optional
        Finite-difference fallback on ``constraint`` when omitted.
    jacobian_rate : callable (q, qdot) -> (m, n), optional
        Directional-difference fallback on ``jacobian`` when omitted.
    actuation : (n, n) ndarray, optional
        Diagonal 0/1 selector of actuated joints; identity by default.
    potential : callable q -> float, optional
        Potential energy, used for the energy log column.
    task_map : TaskMap, optional
    name : str
    """

    dof: int
    n_constraints: int
    mass_matrix: Callable[[np.ndarray], np.ndarray]
    bias: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constraint: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian_rate: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    actuation: Optional[np.ndarray] = None
    metric: Optional[MetricTensor] = None
    potential: Optional[Callable[[np.ndarray], float]] = None
    task_map: Optional[TaskMap] = None
    name: str = ""

    def __post_init__(self):
        if self.dof < 1 or self.n_constraints < 0:
            raise InvalidParameterError("dof must be >= 1 and n_constraints >= 0")
        fd_jac = self.jacobian is None
        if fd_jac:
            self.jacobian = lambda q: fd_jacobian(self.constraint, q)
        if self.jacobian_rate is None:
            if fd_jac:
                # differencing a differenced Jacobian amplifies its roundoff
                # by 1/step, so the outer step must be much coarser
                def rate(q, qdot):
                    s = 1e-4 * (1.0 + float(np.linalg.norm(q))) \
                        / (1.0 + float(np.linalg.norm(qdot)))
                    return fd_jacobian_rate(self.jacobian, q, qdot, step=s)
                self.jacobian_rate = rate
            else:
                self.jacobian_rate = lambda q, qdot: fd_jacobian_rate(
                    self.jacobian, q, qdot)
        if self.actuation is None:
            self.actuation = np.eye(self.dof)
        else:
            B = np.asarray(self.actuation, dtype=float)
            if B.shape != (self.dof, self.dof):
                raise InvalidInputError(
                    f"actuation must be ({self.dof}, {self.dof}), got {B.shape}")
            d = np.diag(B)
            if not np.allclose(B, np.diag(d)) or not np.all((d == 0.0) | (d == 1.0)):
                raise InvalidInputError("actuation must be diagonal with 0/1 entries")
            self.actuation = np.diag(d)
        if self.metric is None:
            self.metric = MetricTensor.identity(self.dof)

    def energy(self, state: GeneralizedState) -> float:
        """Kinetic plus potential energy at a state."""
        M = self.mass_matrix(state.q)
        T = 0.5 * float(state.qdot @ (M @ state.qdot))
        V = float(self.potential(state.q)) if self.potential is not None else 0.0
        return T + V


def make_slider_crank(mass: float = 1.0, length: float = 1.0,
                      gravity: float = 9.81) -> MechanicalSystem:
    """Two-link slider crank with equal link lengths and point masses at the joints.

    Coordinates are the crank angle q1 and the relative rod angle q2.
    The rod tip is pinned to the horizontal line through the crank
    pivot, giving one holonomic constraint.  On the working branch
    q2 = 2 pi - 2 q1 the constraint Jacobian is parallel to (2, 1) and
    collapses to zero at q1 = pi/2 + k pi, the fully folded and fully
    extended postures.
    """
    if mass <= 0.0 or length <= 0.0:
        raise InvalidParameterError("mass and length must be positive")
    m, l, g = float(mass), float(length), float(gravity)
    ml2 = m * l * l

    def mass_matrix(q):
        c2 = np.cos(q[1])
        return ml2 * np.array([[3.0 + 2.0 * c2, 1.0 + c2],
                               [1.0 + c2, 1.0]])

    def bias(q, qdot):
        s2 = np.sin(q[1])
        c1 = np.cos(q[0])
        c12 = np.cos(q[0] + q[1])
        qd1, qd2 = qdot
        return np.array([
            -ml2 * s2 * (qd2 * qd2 + 2.0 * qd1 * qd2) + m * l * g * (c12 + 2.0 * c1),
            ml2 * s2 * qd1 * qd1 + m * l * g * c12,
        ])

    def constraint(q):
        return np.array([l * (np.sin(q[0]) + np.sin(q[0] + q[1]))])

    def jacobian(q):
        c1 = np.cos(q[0])
        c12 = np.cos(q[0] + q[1])
        return l * np.array([[c1 + c12, c12]])

    def jacobian_rate(q, qdot):
        s1 = np.sin(q[0])
        s12 = np.sin(q[0] + q[1])
        qd1, qd12 = qdot[0], qdot[0] + qdot[1]
        return l * np.array([[-s1 * qd1 - s12 * qd12, -s12 * qd12]])

    def potential(q):
        return m * l * g * (2.0 * np.sin(q[0]) + np.sin(q[0] + q[1]))

    task = TaskMap(
        dim=1,
        embed=lambda th: np.array([th[0], 2.0 * np.pi - 2.0 * th[0]]),
        jacobian=lambda th: np.array([[1.0], [-2.0]]),
        jacobian_rate=lambda th, thd: np.zeros((2, 1)),
        chart=lambda q: np.array([q[0]]),
    )

    return MechanicalSystem(
        dof=2, n_constraints=1,
        mass_matrix=mass_matrix, bias=bias,
        constraint=constraint, jacobian=jacobian, jacobian_rate=jacobian_rate,
        potential=potential, task_map=task, name="slider_crank")


def slider_crank_state(q1: float, q1dot: float, t: float = 0.0) -> GeneralizedState:
    """On-manifold slider-crank state on the branch q2 = 2 pi - 2 q1."""
    return GeneralizedState(
        q=np.array([q1, 2.0 * np.pi - 2.0 * q1]),
        qdot=np.array([q1dot, -2.0 * q1dot]),
        t=t)


def make_particle_on_circle(mass: float = 1.0, radius: float = 1.0,
                            gravity: float = 0.0) -> MechanicalSystem:
    """Point mass confined to a circle of given radius about the origin.

    The constraint residual is the radial distance error, so its
    Jacobian is the unit radial direction and is full rank everywhere
    except the origin, where the evaluators refuse to work.  With zero
    gravity the model is conservative and fully decoupled.
    """
    if mass <= 0.0 or radius <= 0.0:
        raise InvalidParameterError("mass and radius must be positive")
    m, rho, g = float(mass), float(radius), float(gravity)

    def radial(q):
        r = float(np.hypot(q[0], q[1]))
        if r <= 0.0:
            raise InvalidInputError("circle constraint is undefined at the origin")
        return r

    def constraint(q):
        return np.array([radial(q) - rho])

    def jacobian(q):
        r = radial(q)
        return np.array([[q[0] / r, q[1] / r]])

    def jacobian_rate(q, qdot):
        # d/dt (q^T / |q|), exact also away from the circle
        r = radial(q)
        rdot = float(q @ qdot) / r
        return np.array([qdot / r - q * (rdot / (r * r))])

    def mass_matrix(q):
        return m * np.eye(2)

    def bias(q, qdot):
        return np.array([0.0, m * g])

    def potential(q):
        return m * g * q[1]

    task = TaskMap(
        dim=1,
        embed=lambda th: rho * np.array([np.cos(th[0]), np.sin(th[0])]),
        jacobian=lambda th: rho * np.array([[-np.sin(th[0])], [np.cos(th[0])]]),
        jacobian_rate=lambda th, thd: rho * thd[0] * np.array(
            [[-np.cos(th[0])], [-np.sin(th[0])]]),
        chart=lambda q: np.array([np.arctan2(q[1], q[0])]),
    )

    return MechanicalSystem(
        dof=2, n_constraints=1,
        mass_matrix=mass_matrix, bias=bias,
        constraint=constraint, jacobian=jacobian, jacobian_rate=jacobian_rate,
        potential=potential, task_map=task, name="particle_on_circle")


def circle_state(theta: float, theta_dot: float, radius: float = 1.0,
                 t: float = 0.0) -> GeneralizedState:
    """On-manifold circle state at angle theta with tangential rate theta_dot."""
    c, s = np.cos(theta), np.sin(theta)
    return GeneralizedState(
        q=radius * np.array([c, s]),
        qdot=radius * theta_dot * np.array([-s, c]),
        t=t)
