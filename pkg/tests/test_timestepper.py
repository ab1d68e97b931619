from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import brentq

from richards_dd.lsolver import LschemeConfig
from richards_dd.timestepper import MeshSpec, Scenario, Stepper, run, run_regularized, step, with_steps

TIGHT = LschemeConfig(atol=1e-14, rtol=0.0, max_iters=5000, lin_tol=1e-14)


@pytest.fixture(scope="module")
def infiltration(soil):
    return Scenario(soil=soil, mesh=MeshSpec(n_cells=40), T=0.1, N=10, u0="0",
                    bc={"bottom": "0", "top": "ustar"})


@pytest.fixture(scope="module")
def model(infiltration):
    return infiltration.build_model()


@pytest.mark.parametrize("eps", [0.0, 0.05])
def test_three_node_step_matches_scalar_root(soil, model, eps):
    """Two cells, one unknown: the step equation reduces to a monotone scalar equation."""
    us = model.u_star
    sc = Scenario(soil=soil, mesh=MeshSpec(n_cells=2), T=0.3, N=3, u0="0.4*ustar",
                  bc={"bottom": "0.1*ustar", "top": "ustar"}, source="0.2", epsilon=eps, solver=TIGHT)
    st = Stepper(sc, model)
    u_prev = np.array([0.1, 0.4, 1.0]) * us
    tau, h = sc.tau, 0.5
    k = model.conductivity(np.array([u_prev[:2].mean(), u_prev[1:].mean()])) + eps
    kb = model.kbar_z(np.array([u_prev[:2].mean(), u_prev[1:].mean()]))
    g0, g2 = u_prev[0], u_prev[2]
    th_prev = model.theta(u_prev[1])

    def f(v):
        flux = (-k[0] * g0 + (k[0] + k[1]) * v - k[1] * g2) / h
        return h * (model.theta(v) - th_prev) + tau * flux + tau * (kb[0] - kb[1]) - tau * h * 0.2

    expected = brentq(f, -5.0, 5.0, xtol=1e-15)
    u, hist, _ = st.step(u_prev, 0.0, tau)
    assert hist.converged
    assert u[1] == pytest.approx(expected, abs=1e-10)
    assert u[0] == g0 and u[2] == g2


def test_constant_state_preserved_with_gravity(soil, model):
    for mesh in (MeshSpec(n_cells=20), MeshSpec(dim=2, nx=4, ny=4)):
        tags = mesh.tags
        sc = Scenario(soil=soil, mesh=mesh, T=1.0, N=20, u0="0.6*ustar",
                      bc={t: "0.6*ustar" for t in tags})
        traj = Stepper(sc, model).run()
        assert np.abs(traj.as_array() - 0.6 * model.u_star).max() <= 1e-12


def test_constant_saturated_state(soil, model):
    sc = Scenario(soil=soil, mesh=MeshSpec(n_cells=10), T=1.0, N=5, u0="ustar",
                  bc={"bottom": "ustar", "top": "ustar"})
    traj = Stepper(sc, model).run()
    np.testing.assert_allclose(traj.states[-1], model.u_star, atol=1e-12)


def test_infiltration_bounds_and_balance(infiltration, model):
    traj = Stepper(infiltration, model).run()
    arr = traj.as_array()
    assert traj.converged
    assert arr.min() >= -1e-8 and arr.max() <= model.u_star + 1e-8
    # the front moves up from the wet top boundary: mass increases
    masses = [d["theta_mass"] for d in traj.diagnostics]
    assert all(b >= a for a, b in zip(masses, masses[1:]))
    for d in traj.diagnostics:
        bound = infiltration.solver.lin_tol * d["system_scale"] + d["increment_bound"]
        assert d["balance_residual"] <= bound


def test_balance_at_tight_tolerance(infiltration, model):
    # with the fixed point resolved, only the linear-solver residual is left
    traj = Stepper(replace(infiltration, solver=TIGHT), model).run()
    for d in traj.diagnostics:
        assert d["balance_residual"] <= 10 * TIGHT.lin_tol * d["system_scale"]


def test_determinism(infiltration, model):
    a = Stepper(infiltration, model).run().as_array()
    b = Stepper(infiltration, model).run().as_array()
    assert a.tobytes() == b.tobytes()


def test_regularised_run(infiltration, model):
    with pytest.raises(ValueError):
        run_regularized(infiltration, 0.0, model)
    reg = run_regularized(infiltration, 1e-2, model)
    base = run(infiltration, model)
    diff = np.abs(reg.as_array() - base.as_array()).max()
    assert 0.0 < diff < model.u_star


def test_module_step_function(infiltration, model):
    st = Stepper(infiltration, model)
    u0 = st.initial_state()
    u_a, _ = step(u0, infiltration.tau, infiltration, model)
    u_b, _, _ = st.step(u0, 0.0, infiltration.tau)
    np.testing.assert_array_equal(u_a, u_b)


def test_linear_model_without_soil():
    sc = Scenario(model="linear", mesh=MeshSpec(n_cells=10), T=1.0, N=4, u0="x*(1-x)",
                  bc={"bottom": "0", "top": "0"}, physical_bounds=False)
    traj = run(sc)
    # pure diffusion decays
    assert np.abs(traj.states[-1]).max() < np.abs(traj.states[0]).max()
    assert all(h.n_iters <= 2 for h in traj.histories)


def test_time_dependent_boundary_data():
    sc = Scenario(model="linear", mesh=MeshSpec(n_cells=4), T=1.0, N=4, u0="0",
                  bc={"bottom": "t", "top": "0"}, physical_bounds=False)
    traj = run(sc)
    assert [s[0] for s in traj.states] == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])


def test_scenario_validation(soil):
    with pytest.raises(ValueError):
        Scenario(soil=soil, N=0)
    with pytest.raises(ValueError):
        Scenario(soil=soil, T=0.0)
    with pytest.raises(ValueError):
        Scenario(soil=soil, epsilon=-1.0)
    with pytest.raises(ValueError, match="soil"):
        Scenario()
    with pytest.raises(ValueError, match="missing boundary"):
        Stepper(Scenario(model="linear", mesh=MeshSpec(dim=2, nx=2, ny=2), bc={"top": "0"}))


def test_physical_bounds_check_on_data(soil, model):
    sc = Scenario(soil=soil, mesh=MeshSpec(n_cells=4), u0="2*ustar", bc={"bottom": "0", "top": "0"})
    with pytest.raises(ValueError, match="physical_bounds"):
        Stepper(sc, model).initial_state()
    ok = Stepper(replace(sc, physical_bounds=False), model).initial_state()
    assert ok[2] == pytest.approx(2 * model.u_star)


def test_with_steps(infiltration):
    sc = with_steps(infiltration, 7)
    assert sc.N == 7 and sc.tau == pytest.approx(infiltration.T / 7)


def test_bc_dict_is_normalised(soil):
    a = Scenario(soil=soil, bc={"top": "1", "bottom": "0"})
    b = Scenario(soil=soil, bc={"bottom": "0", "top": "1"})
    assert a == b and a.bc_map == {"bottom": "0", "top": "1"}
