"""Fixed-step simulation with constraint drift correction.

Integration and constraint enforcement are separated: an explicit
integrator advances the projected dynamics, then a Newton iteration
retracts the coordinates onto the constraint manifold and the velocity
is projected back into the admissible tangent space.  Correction runs
every ``correction_every`` steps, or immediately whenever the residual
exceeds ten times the Newton tolerance.

Force policies are callables ``policy(t, state) -> f``.  Integrator
stages may query the policy several times per step; a policy that
carries internal state (an integral term, say) should do its bookkeeping
in an ``advance(state, dt)`` method, which the simulator calls exactly
once per completed step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, ProjectionFailureError
from .projection import pseudo_inverse
from .dynamics import VARIANTS, forward_dynamics, model_terms
from .systems import GeneralizedState, MechanicalSystem

INTEGRATORS = ("rk4", "semi_implicit_euler")


@dataclass
class SimConfig:
    """Fixed-step integration settings.

    ``rank_tol`` is forwarded to every projector build during the run;
    leaving it ``None`` keeps the relative SVD cutoff, while an absolute
    value widens the singular band the solver treats as rank deficient.
    """

    dt: float
    t_end: float
    integrator: str = "rk4"
    nr_tol: float = 1e-10
    nr_max_iter: int = 10
    correction_every: int = 1
    dynamics_variant: str = "skew"
    gamma: float | None = None
    rank_tol: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if not (np.isfinite(self.t_end) and self.t_end >= 0.0):
            raise InvalidParameterError(f"t_end must be nonnegative, got {self.t_end}")
        if self.integrator not in INTEGRATORS:
            raise InvalidParameterError(
                f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.nr_tol <= 0.0:
            raise InvalidParameterError("nr_tol must be positive")
        if self.nr_max_iter < 1:
            raise InvalidParameterError("nr_max_iter must be >= 1")
        if self.correction_every < 1:
            raise InvalidParameterError("correction_every must be >= 1")
        if self.dynamics_variant not in VARIANTS:
            raise InvalidParameterError(
                f"dynamics_variant must be one of {VARIANTS}")


@dataclass
class NRResult:
    """Outcome of one Newton retraction onto the constraint manifold."""

    q: np.ndarray
    iterations: int
    residuals: list
    converged: bool


def nr_project(system: MechanicalSystem, q, tol: float = 1e-10,
               max_iter: int = 10, rank_tol: float | None = None) -> NRResult:
    """Retract coordinates onto the constraint manifold by Newton iteration.

    Each sweep applies the minimum-norm update ``q -= pinv(A) phi``.
    Residual growth over two consecutive sweeps aborts with a
    :class:`ProjectionFailureError` carrying the residual history;
    exhausting ``max_iter`` returns with ``converged=False``.
    """
    q = np.array(q, dtype=float).reshape(-1)
    phi = np.atleast_1d(np.asarray(system.constraint(q), dtype=float))
    residuals = [float(np.linalg.norm(phi))]
    if residuals[0] <= tol:
        return NRResult(q=q, iterations=0, residuals=residuals, converged=True)
    growth = 0
    for k in range(max_iter):
        A = np.atleast_2d(np.asarray(system.jacobian(q), dtype=float))
        data = pseudo_inverse(A, tol=rank_tol)
        delta = data.pinv @ phi
        if not np.any(delta):
            # rank-zero Jacobian (or exact landing): iterating is a no-op
            return NRResult(q=q, iterations=k, residuals=residuals,
                            converged=residuals[-1] <= tol)
        q = q - delta
        phi = np.atleast_1d(np.asarray(system.constraint(q), dtype=float))
        res = float(np.linalg.norm(phi))
        residuals.append(res)
        if res <= tol:
            return NRResult(q=q, iterations=k + 1, residuals=residuals, converged=True)
        # only count growth above the noise floor as divergence
        if res > residuals[-2] and res > 10.0 * tol:
            growth += 1
            if growth >= 2:
                raise ProjectionFailureError(
                    f"Newton retraction diverged after {k + 1} sweeps "
                    f"(residual {res:.3e})", residuals=residuals)
        else:
            growth = 0
    return NRResult(q=q, iterations=max_iter, residuals=residuals, converged=False)


def _acceleration(system, t, q, qdot, policy, config):
    state = GeneralizedState(q, qdot, t)
    f = np.asarray(policy(t, state), dtype=float)
    # stage states legitimately wander off-manifold; retraction handles it
    sol = forward_dynamics(system, state, f,
                           variant=config.dynamics_variant,
                           gamma=config.gamma, rank_tol=config.rank_tol,
                           warn_drift=False)
    return sol.qddot


def step(system: MechanicalSystem, state: GeneralizedState, policy,
         config: SimConfig, correct: bool = True) -> tuple[GeneralizedState, int]:
    """Advance one step of size ``config.dt``.

    Returns the new state and the number of Newton sweeps spent on
    drift correction (0 when correction is skipped or unnecessary).
    With ``correct=True`` the coordinates are retracted onto the
    manifold and the velocity is projected into the tangent space at
    the corrected configuration.
    """
    dt = config.dt
    t, q, qdot = state.t, state.q, state.qdot

    if config.integrator == "rk4":
        k1v = _acceleration(system, t, q, qdot, policy, config)
        k1q = qdot
        k2v = _acceleration(system, t + 0.5 * dt, q + 0.5 * dt * k1q,
                            qdot + 0.5 * dt * k1v, policy, config)
        k2q = qdot + 0.5 * dt * k1v
        k3v = _acceleration(system, t + 0.5 * dt, q + 0.5 * dt * k2q,
                            qdot + 0.5 * dt * k2v, policy, config)
        k3q = qdot + 0.5 * dt * k2v
        k4v = _acceleration(system, t + dt, q + dt * k3q,
                            qdot + dt * k3v, policy, config)
        k4q = qdot + dt * k3v
        q_new = q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        qdot_new = qdot + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    else:
        acc = _acceleration(system, t, q, qdot, policy, config)
        qdot_new = qdot + dt * acc
        q_new = q + dt * qdot_new

    iters = 0
    if correct:
        result = nr_project(system, q_new, tol=config.nr_tol,
                            max_iter=config.nr_max_iter, rank_tol=config.rank_tol)
        q_new, iters = result.q, result.iterations
        A = np.atleast_2d(np.asarray(system.jacobian(q_new), dtype=float))
        data = pseudo_inverse(A, tol=config.rank_tol)
        qdot_new = data.projector @ qdot_new

    return GeneralizedState(q_new, qdot_new, t + dt), iters


@dataclass
class TrajectoryLog:
    """Column-oriented record of one simulation.

    One row per logged instant: time, coordinates, velocities,
    accelerations, constraint residual norm, total energy, multipliers,
    applied force, and Newton sweeps spent reaching that instant.
    """

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray
    phi_norm: np.ndarray
    energy: np.ndarray
    multipliers: np.ndarray
    force: np.ndarray
    nr_iters: np.ndarray

    @property
    def rows(self) -> int:
        return self.t.size

    @property
    def dof(self) -> int:
        return self.q.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.multipliers.shape[1]

    def header(self) -> list:
        n, m = self.dof, self.n_constraints
        cols = ["t"]
        cols += [f"q{i + 1}" for i in range(n)]
        cols += [f"qd{i + 1}" for i in range(n)]
        cols += [f"qdd{i + 1}" for i in range(n)]
        cols += ["phi_norm", "energy"]
        cols += [f"lambda{i + 1}" for i in range(m)]
        cols += [f"f{i + 1}" for i in range(n)]
        cols += ["nr_iters"]
        return cols

    def to_csv(self, path) -> None:
        """Write the log; floats carry 17 significant digits so a reparse is bit-exact."""
        with open(path, "w") as fh:
            fh.write(",".join(self.header()) + "\n")
            for i in range(self.rows):
                vals = [self.t[i], *self.q[i], *self.qdot[i], *self.qddot[i],
                        self.phi_norm[i], self.energy[i],
                        *self.multipliers[i], *self.force[i]]
                fields = [f"{v:.17g}" for v in vals] + [str(int(self.nr_iters[i]))]
                fh.write(",".join(fields) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.array([[float(v) for v in line.strip().split(",")]
                             for line in fh if line.strip()])
        if data.ndim != 2 or data.shape[1] != len(header):
            raise InvalidInputError(f"malformed trajectory csv: {path}")
        n = sum(1 for c in header if c.startswith("q") and not c.startswith("qd"))
        m = sum(1 for c in header if c.startswith("lambda"))
        i = 1
        q = data[:, i:i + n]; i += n
        qdot = data[:, i:i + n]; i += n
        qddot = data[:, i:i + n]; i += n
        phi_norm = data[:, i]; i += 1
        energy = data[:, i]; i += 1
        lam = data[:, i:i + m]; i += m
        force = data[:, i:i + n]; i += n
        nr_iters = data[:, i].astype(int)
        return cls(t=data[:, 0], q=q, qdot=qdot, qddot=qddot,
                   phi_norm=phi_norm, energy=energy, multipliers=lam,
                   force=force, nr_iters=nr_iters)


def zero_policy(t, state):
    return np.zeros(state.dof)


class ConstantPolicy:
    """Applies a fixed generalized force."""

    def __init__(self, f):
        self.f = np.asarray(f, dtype=float)

    def __call__(self, t, state):
        return self.f


def simulate(system: MechanicalSystem, initial: GeneralizedState,
             policy=None, config: SimConfig | None = None) -> TrajectoryLog:
    """Run a fixed-step simulation and log every step.

    The initial state is drift-corrected first when needed.  The log
    holds ``floor(t_end / dt) + 1`` rows, the first being the (possibly
    corrected) initial state.  Runs are deterministic: identical inputs
    produce bit-identical logs.
    """
    if config is None:
        raise InvalidParameterError("config is required")
    if policy is None:
        policy = zero_policy
    if initial.dof != system.dof:
        raise InvalidInputError(
            f"initial state has {initial.dof} dof, system has {system.dof}")

    n_steps = int(np.floor(config.t_end / config.dt + 1e-9))
    state = initial.copy()

    # retract a drifted initial state before logging it
    phi0 = np.atleast_1d(np.asarray(system.constraint(state.q), dtype=float))
    init_iters = 0
    if float(np.linalg.norm(phi0)) > config.nr_tol:
        result = nr_project(system, state.q, tol=config.nr_tol,
                            max_iter=config.nr_max_iter, rank_tol=config.rank_tol)
        data = pseudo_inverse(
            np.atleast_2d(np.asarray(system.jacobian(result.q), dtype=float)),
            tol=config.rank_tol)
        state = GeneralizedState(result.q, data.projector @ state.qdot, state.t)
        init_iters = result.iterations

    cols_t, cols_q, cols_qd, cols_qdd = [], [], [], []
    cols_phi, cols_en, cols_lam, cols_f, cols_nr = [], [], [], [], []

    def log_row(st: GeneralizedState, iters: int):
        f = np.asarray(policy(st.t, st), dtype=float)
        sol = forward_dynamics(system, st, f,
                               variant=config.dynamics_variant,
                               gamma=config.gamma, rank_tol=config.rank_tol,
                               warn_drift=False)
        phi = np.atleast_1d(np.asarray(system.constraint(st.q), dtype=float))
        cols_t.append(st.t)
        cols_q.append(st.q.copy())
        cols_qd.append(st.qdot.copy())
        cols_qdd.append(sol.qddot)
        cols_phi.append(float(np.linalg.norm(phi)))
        cols_en.append(system.energy(st))
        cols_lam.append(sol.multipliers)
        cols_f.append(f)
        cols_nr.append(iters)

    def build_log() -> TrajectoryLog:
        return TrajectoryLog(
            t=np.array(cols_t), q=np.array(cols_q), qdot=np.array(cols_qd),
            qddot=np.array(cols_qdd), phi_norm=np.array(cols_phi),
            energy=np.array(cols_en), multipliers=np.array(cols_lam),
            force=np.array(cols_f), nr_iters=np.array(cols_nr, dtype=int))

    try:
        log_row(state, init_iters)
        for k in range(n_steps):
            # correct on cadence, or out of cadence if drift got visible
            due = ((k + 1) % config.correction_every == 0)
            if not due:
                probe, _ = step(system, state, policy, config, correct=False)
                drift = float(np.linalg.norm(
                    np.atleast_1d(np.asarray(system.constraint(probe.q), dtype=float))))
                if drift > 10.0 * config.nr_tol:
                    result = nr_project(system, probe.q, tol=config.nr_tol,
                                        max_iter=config.nr_max_iter,
                                        rank_tol=config.rank_tol)
                    data = pseudo_inverse(
                        np.atleast_2d(np.asarray(system.jacobian(result.q), dtype=float)),
                        tol=config.rank_tol)
                    state, iters = GeneralizedState(
                        result.q, data.projector @ probe.qdot, probe.t), result.iterations
                else:
                    state, iters = probe, 0
            else:
                state, iters = step(system, state, policy, config, correct=True)
            if hasattr(policy, "advance"):
                policy.advance(state, config.dt)
            log_row(state, iters)
    except Exception as exc:
        # let callers flush whatever was computed before the failure
        if cols_t:
            exc.partial_log = build_log()
        raise

    return build_log()
