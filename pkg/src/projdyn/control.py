"""Projected inverse-dynamics controllers.

All controllers are built from the same decomposition the dynamics use:
commands in the range of the nullspace projector shape motion along the
constraint manifold, commands in the orthogonal complement shape the
constraint force, and the two channels can be composed freely.

The motion controller feedback-linearises a task-space error through
the projected inertia; its command is automatically minimum-norm among
all commands producing the same motion.  The weighted variant does the
same in a non-Euclidean metric.  The force controller closes a loop on
the recovered constraint force; because that force responds
instantaneously to the applied command, the feedback loop is algebraic
and is solved in closed form here.  The passive-joint map reshapes a
motion command so that unactuated joints carry no torque.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (InvalidInputError, InvalidParameterError,
                     TaskSingularityError, UncontrollableError)
from .projection import MetricTensor, pseudo_inverse
from .dynamics import ModelTerms, coupling_map, model_terms
from .systems import GeneralizedState, MechanicalSystem, TaskMap

CURVATURE_FORMS = ("printed", "plant")


def _check_spd(G, name: str) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix")
    if not np.allclose(G, G.T, rtol=1e-12, atol=1e-12):
        raise InvalidInputError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(G)) <= 0.0:
        raise InvalidInputError(f"{name} must be positive definite")
    return G


@dataclass
class MotionGains:
    """Proportional and derivative gains on the task-space error."""

    gp: np.ndarray
    gd: np.ndarray

    def __post_init__(self):
        self.gp = _check_spd(self.gp, "gp")
        self.gd = _check_spd(self.gd, "gd")
        if self.gp.shape != self.gd.shape:
            raise InvalidInputError("gp and gd must have the same shape")

    @classmethod
    def from_scalars(cls, gp: float, gd: float, dim: int) -> "MotionGains":
        return cls(gp=gp * np.eye(dim), gd=gd * np.eye(dim))


@dataclass
class ForceGains:
    """Proportional and integral gains on the constraint-force error.

    Carries the integral state; :func:`force_control` advances it by the
    trapezoid rule once per call, so the control rate is the call rate.
    """

    gf: np.ndarray
    gi: np.ndarray
    windup_limit: Optional[float] = None
    integral: np.ndarray = field(init=False)
    prev_error: Optional[np.ndarray] = field(init=False, default=None)
    last_error: Optional[np.ndarray] = field(init=False, default=None)

    def __post_init__(self):
        self.gf = _check_spd(self.gf, "gf")
        self.gi = _check_spd(self.gi, "gi")
        if self.gf.shape != self.gi.shape:
            raise InvalidInputError("gf and gi must have the same shape")
        if self.windup_limit is not None and self.windup_limit <= 0.0:
            raise InvalidParameterError("windup_limit must be positive")
        self.integral = np.zeros(self.gf.shape[0])

    @classmethod
    def from_scalars(cls, gf: float, gi: float, dim: int,
                     windup_limit: float | None = None) -> "ForceGains":
        return cls(gf=gf * np.eye(dim), gi=gi * np.eye(dim),
                   windup_limit=windup_limit)

    def reset(self) -> None:
        self.integral = np.zeros(self.gf.shape[0])
        self.prev_error = None
        self.last_error = None


@dataclass
class DesiredMotion:
    """Desired task trajectory: position, velocity, acceleration callables."""

    theta: Callable[[float], np.ndarray]
    theta_dot: Callable[[float], np.ndarray]
    theta_ddot: Callable[[float], np.ndarray]

    @classmethod
    def constant(cls, theta_d) -> "DesiredMotion":
        target = np.atleast_1d(np.asarray(theta_d, dtype=float))
        zero = np.zeros_like(target)
        return cls(theta=lambda t: target.copy(),
                   theta_dot=lambda t: zero.copy(),
                   theta_ddot=lambda t: zero.copy())

    @classmethod
    def sinusoid(cls, center, amplitude, omega: float, phase: float = 0.0) -> "DesiredMotion":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        a = np.atleast_1d(np.asarray(amplitude, dtype=float))
        w = float(omega)
        return cls(
            theta=lambda t: c + a * np.sin(w * t + phase),
            theta_dot=lambda t: a * w * np.cos(w * t + phase),
            theta_ddot=lambda t: -a * w * w * np.sin(w * t + phase))


def _task_state(task: TaskMap, state: GeneralizedState):
    """Task coordinates, rates, and the full-rank task Jacobian at a state."""
    th = np.atleast_1d(np.asarray(task.chart(state.q), dtype=float))
    L = np.atleast_2d(np.asarray(task.jacobian(th), dtype=float))
    if L.shape != (state.dof, task.dim):
        raise InvalidInputError(
            f"task jacobian must be ({state.dof}, {task.dim}), got {L.shape}")
    data = pseudo_inverse(L)
    if data.rank < task.dim:
        raise TaskSingularityError(
            f"task jacobian lost rank ({data.rank} < {task.dim})")
    th_dot = data.pinv @ state.qdot
    return th, th_dot, L


def _motion_accel(task: TaskMap, desired: DesiredMotion, gains: MotionGains,
                  state: GeneralizedState, t: float) -> np.ndarray:
    """Feedback-linearising acceleration u_p from the task-space error."""
    th, th_dot, L = _task_state(task, state)
    e = np.atleast_1d(desired.theta(t)) - th
    e_dot = np.atleast_1d(desired.theta_dot(t)) - th_dot
    L_dot = np.atleast_2d(np.asarray(task.jacobian_rate(th, th_dot), dtype=float))
    acc = np.atleast_1d(desired.theta_ddot(t)) + gains.gd @ e_dot + gains.gp @ e
    return L_dot @ th_dot + L @ acc


def pidc(system: MechanicalSystem, state: GeneralizedState,
         desired: DesiredMotion, gains: MotionGains, t: float,
         task: TaskMap | None = None, terms: ModelTerms | None = None,
         rank_tol: float | None = None) -> np.ndarray:
    """Projected inverse-dynamics motion command.

    Returns the nullspace-channel force ``P (h + M u_p)`` that imposes
    critically-specified second-order error dynamics on the task
    coordinates.  The command satisfies ``P f = f`` and is minimum-norm:
    adding any constraint-space component produces the same motion at
    strictly larger cost.
    """
    task = task if task is not None else system.task_map
    if task is None:
        raise InvalidParameterError("system has no task map and none was given")
    if terms is None:
        terms = model_terms(system, state, rank_tol=rank_tol)
    u_p = _motion_accel(task, desired, gains, state, t)
    return terms.P @ (terms.h + terms.M @ u_p)


def weighted_pidc(system: MechanicalSystem, state: GeneralizedState,
                  desired: DesiredMotion, gains: MotionGains,
                  metric: MetricTensor, t: float,
                  task: TaskMap | None = None,
                  rank_tol: float | None = None) -> np.ndarray:
    """Motion command minimising a weighted norm instead of the Euclidean one.

    The projection happens in the geometry induced by the weight matrix:
    with weight W the command is ``W^(1/2) P_W W^(-1/2) (h + M u_p)``,
    which reproduces :func:`pidc` exactly when W is the identity.  A
    diagonal weight is how commands mixing incommensurable units (forces
    and torques) are made scale-consistent.
    """
    task = task if task is not None else system.task_map
    if task is None:
        raise InvalidParameterError("system has no task map and none was given")
    if metric.dim != system.dof:
        raise InvalidInputError(
            f"metric dimension {metric.dim} does not match dof {system.dof}")
    terms = model_terms(system, state, rank_tol=rank_tol)
    data = pseudo_inverse(terms.A @ metric.inv_sqrt, tol=rank_tol)
    u_p = _motion_accel(task, desired, gains, state, t)
    return metric.sqrt @ (data.projector @ (metric.inv_sqrt @ (terms.h + terms.M @ u_p)))


def force_control(system: MechanicalSystem, state: GeneralizedState, f_par,
                  desired_force, gains: ForceGains, dt: float,
                  curvature_form: str = "printed",
                  extra_force=None,
                  terms: ModelTerms | None = None,
                  rank_tol: float | None = None) -> np.ndarray:
    """Constraint-force command for the orthogonal channel.

    Computes ``f_perp = h_perp + mu (f_par - h_par + c) + u`` where the
    regulation term ``u`` closes a proportional-integral loop on the
    recovered constraint force.  The force responds to the command with
    no dynamics in between, so the loop is algebraic; it is solved in
    closed form rather than iterated.

    Parameters
    ----------
    f_par : (n,) array_like
        Motion-channel command the force command rides on top of.
    desired_force : (n,) array_like
        Target constraint force.  Components outside the row space of
        the constraint Jacobian are unreachable; they are projected out
        with a warning.
    dt : float
        Control interval.  The integral state advances by the trapezoid
        rule each call; pass 0 to evaluate without advancing.
    curvature_form : str
        "printed" uses the bare curvature product in the compensation
        term; "plant" uses the mass-weighted product that matches the
        force-recovery equation exactly, zeroing the steady-state
        mismatch between the two.
    extra_force : (n,) array_like, optional
        Known additional input the plant will see (a feedforward
        disturbance); the loop solve accounts for its effect on the
        measured force.
    """
    if curvature_form not in CURVATURE_FORMS:
        raise InvalidParameterError(
            f"curvature_form must be one of {CURVATURE_FORMS}")
    if terms is None:
        terms = model_terms(system, state, rank_tol=rank_tol)
    n = system.dof
    f_par = np.asarray(f_par, dtype=float)
    Fd = np.asarray(desired_force, dtype=float)
    if f_par.shape != (n,) or Fd.shape != (n,):
        raise InvalidInputError(f"f_par and desired_force must have shape ({n},)")

    P = terms.P
    Q = np.eye(n) - P
    mu = coupling_map(terms.M, P)

    Fd_par = P @ Fd
    if float(np.linalg.norm(Fd_par)) > 1e-9 * (1.0 + float(np.linalg.norm(Fd))):
        warnings.warn("desired force has an unreachable nullspace component; "
                      "projecting it out", stacklevel=2)
    Fd_perp = Q @ Fd

    h_par, h_perp = P @ terms.h, Q @ terms.h
    c_plant = terms.M @ terms.curvature
    c_used = terms.curvature if curvature_form == "printed" else c_plant
    base = h_perp + mu @ (f_par - h_par + c_used)
    base_plant = h_perp + mu @ (f_par - h_par + c_plant)

    # Per-channel measurement under the command being computed:
    #   F = f_perp + d_perp - base_plant, with f_perp = base + Fd_perp + gf e + gi S,
    # so the error e = Fd_perp - F satisfies (I + gf) e = -(delta + gi S + d_perp).
    delta = base - base_plant
    d_perp = Q @ np.asarray(extra_force, dtype=float) if extra_force is not None \
        else np.zeros(n)
    e_f = np.linalg.solve(np.eye(n) + gains.gf, -(delta + gains.gi @ gains.integral + d_perp))

    u = Fd_perp + gains.gf @ e_f + gains.gi @ gains.integral
    f_perp = Q @ (base + u)

    e_prev = gains.prev_error if gains.prev_error is not None else e_f
    gains.integral = gains.integral + 0.5 * float(dt) * (e_prev + e_f)
    if gains.windup_limit is not None:
        gains.integral = np.clip(gains.integral, -gains.windup_limit,
                                 gains.windup_limit)
    gains.prev_error = e_f
    gains.last_error = e_f
    return f_perp


def hybrid_control(system: MechanicalSystem, state: GeneralizedState,
                   desired: DesiredMotion, motion_gains: MotionGains,
                   desired_force, force_gains: ForceGains,
                   t: float, dt: float,
                   task: TaskMap | None = None,
                   curvature_form: str = "printed",
                   extra_force=None,
                   rank_tol: float | None = None) -> np.ndarray:
    """Simultaneous motion and constraint-force command.

    The two channels are orthogonal, so the combined command is simply
    the sum of :func:`pidc` and :func:`force_control` and each loop
    keeps its own error dynamics.
    """
    terms = model_terms(system, state, rank_tol=rank_tol)
    f_par = pidc(system, state, desired, motion_gains, t, task=task, terms=terms)
    f_perp = force_control(system, state, f_par, desired_force, force_gains, dt,
                           curvature_form=curvature_form,
                           extra_force=extra_force, terms=terms)
    return f_par + f_perp


@dataclass(frozen=True)
class PassiveJointMap:
    """Reshaping map for systems with unactuated joints.

    ``H`` sends a motion command to the nullspace-orthogonal correction
    that cancels its passive-row components; ``feasible`` records
    whether the cancellation is exact for every command in the motion
    channel.
    """

    H: np.ndarray
    feasible: bool
    projector: np.ndarray
    actuation: np.ndarray
    Q_pinv: np.ndarray


def passive_joint_map(P, B, tol: float = 1e-9) -> PassiveJointMap:
    """Build the passive-joint reshaping map from projector P and selector B.

    The workhorse operator is ``Q = (I - B)(I - P)``, the passive-row
    restriction of the orthogonal channel.  Feasibility demands that
    every passive-row component of a motion command be reachable through
    the orthogonal channel, i.e. each column of ``(I - B) P`` must lie
    in the range of Q.
    """
    P = np.asarray(P, dtype=float)
    B = np.asarray(B, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n) or B.shape != (n, n):
        raise InvalidInputError("P and B must be square matrices of equal size")
    Ib = np.eye(n) - B
    Q = Ib @ (np.eye(n) - P)
    # |Q| <= 1 by construction, so tol is a meaningful absolute rank cut;
    # it must match the one controllability_check applies to its stack
    data = pseudo_inverse(Q, tol=tol)
    range_proj = Q @ data.pinv
    range_proj = 0.5 * (range_proj + range_proj.T)
    V = Ib @ P
    feasible = True
    for j in range(n):
        v = V[:, j]
        if float(np.linalg.norm(v - range_proj @ v)) > tol * (1.0 + float(np.linalg.norm(v))):
            feasible = False
            break
    H = -(np.eye(n) - P) @ data.pinv @ Ib
    return PassiveJointMap(H=H, feasible=feasible, projector=P,
                           actuation=B, Q_pinv=data.pinv)


def passive_joint_control(f_par, pjmap: PassiveJointMap) -> np.ndarray:
    """Reshape a motion command so passive joints carry no torque.

    Returns ``(I + H) f_par``.  The added part lives in the orthogonal
    channel, so the motion produced is unchanged while the passive rows
    of the command vanish.  Raises :class:`UncontrollableError` when the
    map was built infeasible.
    """
    if not pjmap.feasible:
        raise UncontrollableError(
            "passive-joint cancellation is infeasible for this projector "
            "and actuation pattern")
    f_par = np.asarray(f_par, dtype=float)
    return f_par + pjmap.H @ f_par


def controllability_check(P, B, tol: float = 1e-9) -> bool:
    """Whether the motion channel is fully reachable through actuated joints.

    The obstruction is a nullspace direction with no actuated component:
    the check returns True exactly when ``N(A) ∩ range(I - B)^perp``
    restricted to passive rows is trivial, computed as the numerical
    rank of the stacked matrix ``[(I - P); B]`` being full.
    """
    P = np.asarray(P, dtype=float)
    B = np.asarray(B, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n) or B.shape != (n, n):
        raise InvalidInputError("P and B must be square matrices of equal size")
    stack = np.vstack([np.eye(n) - P, B])
    s = np.linalg.svd(stack, compute_uv=False)
    return bool(s[-1] > tol * max(1.0, float(s[0])))


class PidcPolicy:
    """Stateless motion-control force policy; evaluated fresh at every query."""

    def __init__(self, system: MechanicalSystem, desired: DesiredMotion,
                 gains: MotionGains, task: TaskMap | None = None,
                 metric: MetricTensor | None = None,
                 rank_tol: float | None = None):
        self.system = system
        self.desired = desired
        self.gains = gains
        self.task = task
        self.metric = metric
        self.rank_tol = rank_tol

    def __call__(self, t, state):
        if self.metric is not None:
            return weighted_pidc(self.system, state, self.desired, self.gains,
                                 self.metric, t, task=self.task,
                                 rank_tol=self.rank_tol)
        return pidc(self.system, state, self.desired, self.gains, t,
                    task=self.task, rank_tol=self.rank_tol)


class ForceControlPolicy:
    """Zero-order-hold force-control policy.

    Recomputes the command once per completed step (the simulator's
    ``advance`` hook); integrator stages see the held value.  An
    optional motion policy supplies the parallel channel, and an
    optional constant disturbance is added to the applied force with
    the loop solve made aware of it.
    """

    def __init__(self, system: MechanicalSystem, desired_force,
                 gains: ForceGains, motion=None, disturbance=None,
                 curvature_form: str = "plant",
                 rank_tol: float | None = None):
        self.system = system
        self.desired_force = np.asarray(desired_force, dtype=float)
        self.gains = gains
        self.motion = motion
        self.disturbance = (np.asarray(disturbance, dtype=float)
                            if disturbance is not None else None)
        self.curvature_form = curvature_form
        self.rank_tol = rank_tol
        self._held = None

    def _compute(self, t, state, dt):
        f_par = (np.asarray(self.motion(t, state), dtype=float)
                 if self.motion is not None else np.zeros(state.dof))
        f_perp = force_control(self.system, state, f_par, self.desired_force,
                               self.gains, dt, curvature_form=self.curvature_form,
                               extra_force=self.disturbance,
                               rank_tol=self.rank_tol)
        total = f_par + f_perp
        if self.disturbance is not None:
            total = total + self.disturbance
        return total

    def __call__(self, t, state):
        if self._held is None:
            self._held = self._compute(t, state, 0.0)
        return self._held

    def advance(self, state, dt):
        self._held = self._compute(state.t, state, dt)


class HybridPolicy:
    """Zero-order-hold combined motion and force policy."""

    def __init__(self, system: MechanicalSystem, desired: DesiredMotion,
                 motion_gains: MotionGains, desired_force,
                 force_gains: ForceGains, task: TaskMap | None = None,
                 curvature_form: str = "plant", extra_force=None,
                 rank_tol: float | None = None):
        self.system = system
        self.desired = desired
        self.motion_gains = motion_gains
        self.desired_force = np.asarray(desired_force, dtype=float)
        self.force_gains = force_gains
        self.task = task
        self.curvature_form = curvature_form
        self.extra_force = extra_force
        self.rank_tol = rank_tol
        self._held = None

    def _compute(self, t, state, dt):
        f = hybrid_control(self.system, state, self.desired, self.motion_gains,
                           self.desired_force, self.force_gains, t, dt,
                           task=self.task, curvature_form=self.curvature_form,
                           extra_force=self.extra_force, rank_tol=self.rank_tol)
        if self.extra_force is not None:
            f = f + np.asarray(self.extra_force, dtype=float)
        return f

    def __call__(self, t, state):
        if self._held is None:
            self._held = self._compute(t, state, 0.0)
        return self._held

    def advance(self, state, dt):
        self._held = self._compute(state.t, state, dt)


class PassiveJointPolicy:
    """Wraps a motion policy so unactuated joints receive no command."""

    def __init__(self, system: MechanicalSystem, base_policy,
                 tol: float = 1e-9, rank_tol: float | None = None):
        self.system = system
        self.base_policy = base_policy
        self.tol = tol
        self.rank_tol = rank_tol

    def __call__(self, t, state):
        f_par = np.asarray(self.base_policy(t, state), dtype=float)
        A = np.atleast_2d(np.asarray(self.system.jacobian(state.q), dtype=float))
        data = pseudo_inverse(A, tol=self.rank_tol)
        pjmap = passive_joint_map(data.projector, self.system.actuation,
                                  tol=self.tol)
        return passive_joint_control(f_par, pjmap)

    def advance(self, state, dt):
        if hasattr(self.base_policy, "advance"):
            self.base_policy.advance(state, dt)
