"""Convergence studies on the infiltration fixture: tau self-convergence, eps-regularisation and L sweep.

    python3 scripts/convergence_studies.py [tau|eps|lscheme|all]

Set RICHARDS_DD_THREADS to run the independent solves of a study in parallel.
"""

import sys
from dataclasses import replace

import numpy as np

from richards_dd.config import DEFAULT_CONFIG, parse_config
from richards_dd.timestepper import MeshSpec, Stepper
from richards_dd.verify import eps_convergence_study, lscheme_sweep, solve_reference, tau_convergence_study

SCENARIO, _ = parse_config(DEFAULT_CONFIG)


def tau_study():
    tau0 = SCENARIO.T / 10
    table = tau_convergence_study(SCENARIO, [tau0 / 2**k for k in range(5)])
    print(f"tau self-convergence (reference N={table.extra['N_ref']})")
    for tau, d, order in table.rows():
        print(f"  tau={tau:.5f}  distance={d:.4e}  order={order:.3f}")


def eps_study():
    eps = [1e-1, 1e-2, 1e-3, 1e-4]
    # the eps window only resolves once eps * tau / h^2 is small; compare both meshes
    for n_cells in (50, 100):
        sc = replace(SCENARIO, mesh=MeshSpec(dim=1, n_cells=n_cells))
        model = sc.build_model()
        for N in (10, 20, 40):
            table = eps_convergence_study(sc, eps, tau=sc.T / N, model=model)
            ds = ", ".join(f"{d:.3e}" for d in table.distances)
            print(f"  cells={n_cells:3d} N={N:2d}: {ds}  ratio={table.distances[-1] / table.distances[0]:.2e}")


def lscheme_study(step=11, factors=(0.55, 0.75, 1.0, 2.0, 4.0)):
    st = Stepper(SCENARIO)
    times = np.linspace(0.0, SCENARIO.T, SCENARIO.N + 1)
    u = st.initial_state()
    for n in range(1, step):
        u, _, _ = st.step(u, times[n - 1], times[n])
    ref, _, _ = solve_reference(st, u, times[step - 1], times[step], SCENARIO.solver, tol=1e-13)
    print(f"L-scheme at step {step}")
    for f, (_, hist, rate) in zip(factors, lscheme_sweep(st, u, times[step - 1], times[step], list(factors),
                                                          SCENARIO.solver, reference=ref)):
        print(f"  L/L_theta={f:5.2f} iters={hist.n_iters:3d} converged={hist.converged} "
              f"gm ratio={rate.geometric_mean_ratio:.3f} monotone excess={rate.monotone_excess:.1e}")


STUDIES = {"tau": tau_study, "eps": eps_study, "lscheme": lscheme_study}

if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    for name, fn in STUDIES.items():
        if which in (name, "all"):
            fn()
