"""Sweep the projector rank tolerance across a singular-angle crossing.

The slider crank passes through configurations where the constraint
Jacobian vanishes along the motion branch.  With the default relative
SVD cutoff the projector never treats the Jacobian as rank deficient,
and the pseudoinverse amplifies the off-branch component the integrator
carries; the trajectory picks up energy kicks at each crossing.  An
absolute rank tolerance opens a band around the singular angle inside
which the solver switches to the unconstrained dynamics, and the kicks
disappear.

Run:
    python scripts/singularity_sweep.py
    python scripts/singularity_sweep.py --t-end 10 --dt 1e-3
"""

import argparse
import sys

import numpy as np

from projdyn.dynamics import forward_dynamics_classical
from projdyn.errors import ProjdynError, RankDeficientError
from projdyn.simulate import SimConfig, simulate
from projdyn.systems import GeneralizedState, make_slider_crank, slider_crank_state


def run_once(system, initial, dt, t_end, rank_tol):
    config = SimConfig(dt=dt, t_end=t_end, rank_tol=rank_tol)
    try:
        log = simulate(system, initial.copy(), config=config)
    except ProjdynError as exc:
        return dict(ok=False, error=str(exc))
    e0 = log.energy[0]
    classical_failures = 0
    for i in range(0, log.rows, 10):
        st = GeneralizedState(log.q[i], log.qdot[i], log.t[i])
        try:
            forward_dynamics_classical(system, st, log.force[i],
                                       rank_tol=rank_tol)
        except RankDeficientError:
            classical_failures += 1
    return dict(
        ok=True,
        max_phi=float(np.max(log.phi_norm)),
        energy_drift=float(np.max(np.abs(log.energy - e0)) / abs(e0)),
        min_abs_c1=float(np.min(np.abs(np.cos(log.q[:, 0])))),
        classical_failures=classical_failures,
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--t-end", type=float, default=10.0)
    parser.add_argument("--tols", type=float, nargs="*",
                        default=[0.0, 1e-6, 1e-4, 1e-3, 1e-2, 5e-2])
    args = parser.parse_args(argv)

    system = make_slider_crank(gravity=0.0)
    initial = slider_crank_state(0.3, 1.0)

    print(f"slider crank, dt={args.dt:g}, t_end={args.t_end:g} "
          "(rank_tol 0 means the default relative cutoff)")
    header = (f"{'rank_tol':>10} {'max|phi|':>12} {'energy drift':>13} "
              f"{'min|cos q1|':>12} {'classical fails':>16}")
    print(header)
    print("-" * len(header))
    for tol in args.tols:
        result = run_once(system, initial, args.dt, args.t_end,
                          None if tol == 0.0 else tol)
        if not result["ok"]:
            print(f"{tol:10.1e} failed: {result['error']}")
            continue
        print(f"{tol:10.1e} {result['max_phi']:12.3e} "
              f"{result['energy_drift']:13.3e} {result['min_abs_c1']:12.3e} "
              f"{result['classical_failures']:16d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
