import warnings

import numpy as np
import pytest

from lindmap.hilbert import (
    annihilation,
    boson,
    build_space,
    identity_op,
    number_op,
    spin,
    spin_op,
)
from lindmap.lindblad import (
    ConvergenceError,
    DegenerateSteadyStateError,
    DensityMatrix,
    InvariantViolationError,
    LindbladModel,
    SteadyStateError,
    Trajectory,
    TruncationLeakWarning,
    convergence_check,
    dissipator_apply,
    evolve,
    fock_state,
    liouvillian_apply,
    liouvillian_matrix,
    maximally_mixed,
    random_low_occupation_state,
    steady_state,
    vacuum_state,
)
from lindmap.models import DimerParams, build_dimer, dimer_space

RNG = np.random.default_rng(42)


def decaying_mode(cutoff=4, gamma=1.0):
    space = build_space([boson(cutoff)])
    a = annihilation(space, 0)
    model = LindbladModel(H=0.0 * number_op(space, 0), channels=((gamma, a),))
    return space, a, model


def driven_linear_mode(cutoff=10, delta_omega=0.7, epsilon=0.3, gamma=1.0):
    space = build_space([boson(cutoff)])
    a = annihilation(space, 0)
    H = delta_omega * number_op(space, 0) + epsilon * (a + a.dag())
    model = LindbladModel(H=H, channels=((gamma, a),))
    alpha = -epsilon / (delta_omega - 0.5j * gamma)
    return space, a, model, alpha


def random_hermitian(dim, rng):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return m + m.conj().T


# ---------------------------------------------------------------- states


def test_fock_state_projector():
    space = build_space([boson(2), boson(2)])
    rho = fock_state(space, [1, 1])
    idx = space.basis_index((1, 1))
    assert rho.matrix[idx, idx] == 1.0
    assert rho.trace() == 1.0
    assert np.count_nonzero(rho.matrix) == 1


def test_state_validation_rejects_bad_matrices():
    space = build_space([boson(2)])
    with pytest.raises(InvariantViolationError):
        DensityMatrix(space, np.diag([0.6, 0.6, -0.2]).astype(complex)).validate()
    with pytest.raises(InvariantViolationError):
        DensityMatrix(space, np.diag([0.5, 0.3, 0.3]).astype(complex)).validate()
    bad = np.diag([0.5, 0.3, 0.2]).astype(complex)
    bad[0, 1] = 0.1
    with pytest.raises(InvariantViolationError):
        DensityMatrix(space, bad).validate()


def test_maximally_mixed_and_random_state():
    space = build_space([boson(5)])
    mm = maximally_mixed(space)
    assert np.allclose(mm.matrix, np.eye(6) / 6)
    r = random_low_occupation_state(space, np.random.default_rng(3), max_level=2)
    diag = np.real(np.diag(r.matrix))
    assert diag[3:].max() == 0.0
    assert abs(r.trace() - 1) < 1e-12


# ------------------------------------------------------------ generator


def test_model_validation():
    space, a, _ = decaying_mode()
    with pytest.raises(ValueError):
        LindbladModel(H=1j * number_op(space, 0), channels=())
    with pytest.raises(ValueError):
        LindbladModel(H=0.0 * number_op(space, 0), channels=((-1.0, a),))
    other = build_space([boson(2)])
    with pytest.raises(ValueError):
        LindbladModel(
            H=0.0 * number_op(space, 0), channels=((1.0, annihilation(other, 0)),)
        )


def test_dissipator_vacuum_dark():
    space, a, _ = decaying_mode()
    out = dissipator_apply(a, vacuum_state(space))
    assert np.abs(out).max() == 0.0


def test_dissipator_single_excitation():
    space, a, _ = decaying_mode()
    out = dissipator_apply(a, fock_state(space, [1]))
    expected = np.zeros((5, 5))
    expected[0, 0] = 1.0
    expected[1, 1] = -1.0
    assert np.allclose(out, expected)


def test_dissipator_spin_maximally_mixed():
    space = build_space([spin()])
    sm = spin_op(space, 0, "lower")
    out = dissipator_apply(sm, maximally_mixed(space))
    assert np.allclose(out, np.diag([0.5, -0.5]))


def test_dissipator_traceless_hermitian():
    space = build_space([boson(3), spin()])
    c = annihilation(space, 0) @ spin_op(space, 1, "raise")
    for seed in range(5):
        rho = random_hermitian(space.dim, np.random.default_rng(seed))
        out = dissipator_apply(c, rho)
        assert abs(np.trace(out)) < 1e-12 * space.dim
        assert np.abs(out - out.conj().T).max() < 1e-12


def test_liouvillian_commuting_diagonal_case():
    space = build_space([boson(2)])
    model = LindbladModel(H=1.3 * number_op(space, 0), channels=())
    rho = np.diag([0.5, 0.3, 0.2]).astype(complex)
    assert np.abs(liouvillian_apply(model, rho)).max() == 0.0


def test_liouvillian_decay_example():
    space, a, model = decaying_mode(gamma=2.0)
    out = liouvillian_apply(model, fock_state(space, [1]))
    expected = np.zeros((5, 5))
    expected[0, 0] = 2.0
    expected[1, 1] = -2.0
    assert np.allclose(out, expected)


def test_liouvillian_dimer_traceless():
    p = DimerParams(U=5.0, delta_omega=1.0, epsilon=15.0, J=10.0, cutoff=4)
    model = build_dimer(p)
    rho = fock_state(dimer_space(p), [1, 1])
    out = liouvillian_apply(model, rho)
    assert abs(np.trace(out)) < 1e-12 * model.dim
    rho2 = random_hermitian(model.dim, np.random.default_rng(11))
    assert abs(np.trace(liouvillian_apply(model, rho2))) < 1e-12 * model.dim


def test_liouvillian_linearity():
    space = build_space([boson(3)])
    a = annihilation(space, 0)
    model = LindbladModel(
        H=0.4 * number_op(space, 0) + 0.1 * (a + a.dag()), channels=((0.7, a),)
    )
    rng = np.random.default_rng(5)
    r1 = random_hermitian(4, rng)
    r2 = random_hermitian(4, rng)
    al, be = 0.3 - 0.2j, 1.1 + 0.7j
    lhs = liouvillian_apply(model, al * r1 + be * r2)
    rhs = al * liouvillian_apply(model, r1) + be * liouvillian_apply(model, r2)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_sparse_matrix_matches_dense_apply():
    """Kron-built superoperator against the dense reference, independent routes."""
    space = build_space([boson(3), spin()])
    a = annihilation(space, 0)
    sm = spin_op(space, 1, "lower")
    H = (
        0.7 * number_op(space, 0)
        + 0.3 * (a + a.dag())
        + 0.5 * (a @ sm.dag() + a.dag() @ sm)
    )
    model = LindbladModel(H=H, channels=((1.0, a), (0.5, sm)))
    L = liouvillian_matrix(model)
    rng = np.random.default_rng(7)
    for _ in range(3):
        rho = random_hermitian(space.dim, rng)
        via_matrix = (L @ rho.reshape(-1)).reshape(space.dim, space.dim)
        via_apply = liouvillian_apply(model, rho)
        assert np.abs(via_matrix - via_apply).max() < 1e-13 * np.abs(via_apply).max()


# ------------------------------------------------------------- evolve


def test_evolve_single_mode_decay():
    space, a, model = decaying_mode()
    t = np.array([0.0, 0.5, 1.0, 2.0])
    traj = evolve(model, fock_state(space, [1]), t, observables=[number_op(space, 0)])
    assert np.abs(traj.expectations[:, 0].real - np.exp(-t)).max() < 1e-7


def test_evolve_single_point_grid_is_identity():
    space, a, model = decaying_mode()
    rho0 = fock_state(space, [1])
    traj = evolve(model, rho0, [0.0])
    assert np.array_equal(traj.final_state.matrix, rho0.matrix)


def test_evolve_initial_expectations_exact():
    space, a, model = decaying_mode()
    traj = evolve(model, fock_state(space, [1]), [0.0, 0.1], observables=[number_op(space, 0)])
    assert traj.expectations[0, 0] == 1.0


def test_evolve_driven_linear_mode_closed_form():
    space, a, model, alpha = driven_linear_mode()
    t = np.linspace(0.0, 5.0, 11)
    traj = evolve(
        model, vacuum_state(space), t, observables=[a, number_op(space, 0)]
    )
    a_exact = alpha * (1.0 - np.exp(-(1j * 0.7 + 0.5) * t))
    assert np.abs(traj.expectations[:, 0] - a_exact).max() < 1e-7
    assert np.abs(traj.expectations[:, 1] - np.abs(a_exact) ** 2).max() < 1e-7


def test_evolve_grid_validation():
    space, a, model = decaying_mode()
    rho0 = vacuum_state(space)
    for bad in ([], [0.5, 1.0], [0.0, 1.0, 1.0], [0.0, 2.0, 1.0]):
        with pytest.raises(ValueError):
            evolve(model, rho0, bad)


def test_evolve_snapshot_states_mode():
    space, a, model = decaying_mode()
    traj = evolve(model, fock_state(space, [1]), [0.0, 0.3, 0.6])
    assert traj.states is not None and len(traj.states) == 3
    assert traj.expectations is None
    for dm in traj.states:
        dm.validate()
    assert np.array_equal(traj.states[-1].matrix, traj.final_state.matrix)


def test_evolve_fixed_mode_deterministic():
    space, a, model, _ = driven_linear_mode()
    rho0 = fock_state(space, [1])
    t = np.linspace(0.0, 2.0, 21)
    obs = [number_op(space, 0)]
    e1 = evolve(model, rho0, t, observables=obs, method="fixed").expectations
    e2 = evolve(model, rho0, t, observables=obs, method="fixed").expectations
    assert np.array_equal(e1, e2)
    e3 = evolve(model, rho0, t, observables=obs, method="adaptive").expectations
    assert np.abs(e1 - e3).max() < 1e-8


def test_evolve_truncation_leak_warning():
    space = build_space([boson(3)])
    a = annihilation(space, 0)
    model = LindbladModel(
        H=1.0 * number_op(space, 0) + 2.0 * (a + a.dag()), channels=((1.0, a),)
    )
    with pytest.warns(TruncationLeakWarning):
        evolve(model, vacuum_state(space), np.linspace(0.0, 3.0, 31))


def test_trajectory_times_validation():
    space, _, model = decaying_mode()
    dm = vacuum_state(space)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.0, 0.0]), expectations=None, states=None, final_state=dm)


# --------------------------------------------------------- steady state


def test_steady_state_decay_to_vacuum():
    space, a, model = decaying_mode()
    ss = steady_state(model)
    assert np.abs(ss.matrix - vacuum_state(space).matrix).max() < 1e-12


def test_steady_state_driven_linear_closed_form():
    space, a, model, alpha = driven_linear_mode(cutoff=10)
    ss = steady_state(model)
    assert abs(ss.expectation(a) - alpha) < 1e-9
    L = liouvillian_matrix(model)
    assert np.abs(L @ ss.matrix.reshape(-1)).max() < 1e-10


def test_steady_state_no_dissipation_rejected():
    space = build_space([boson(2)])
    model = LindbladModel(H=1.0 * number_op(space, 0), channels=())
    with pytest.raises(ValueError):
        steady_state(model)


def test_steady_state_degenerate_dense():
    # no coupling to site 1 and no loss there: any site-1 state is stationary
    space = build_space([boson(1), boson(1)])
    model = LindbladModel(
        H=0.0 * number_op(space, 0), channels=((1.0, annihilation(space, 0)),)
    )
    with pytest.raises(DegenerateSteadyStateError) as exc:
        steady_state(model)
    assert exc.value.multiplicity == 4


def test_steady_state_degenerate_sparse_probe():
    # dim 49 forces the sparse path; site 1 fully decoupled again
    space = build_space([boson(6), boson(6)])
    model = LindbladModel(
        H=0.7 * number_op(space, 0), channels=((1.0, annihilation(space, 0)),)
    )
    with pytest.raises(DegenerateSteadyStateError):
        steady_state(model)


def test_steady_state_sparse_path_driven_dimer():
    p = DimerParams(U=0.0, delta_omega=0.7, epsilon=0.3, J=0.4, cutoff=6)
    model = build_dimer(p)
    assert model.dim == 49  # above the dense cutoff, below the direct limit
    ss = steady_state(model)
    L = liouvillian_matrix(model)
    assert np.abs(L @ ss.matrix.reshape(-1)).max() < 1e-10
    ss_ev = steady_state(model, method="evolve")
    assert np.abs(ss.matrix - ss_ev.matrix).max() < 1e-8


def test_steady_state_evolve_fallback_matches_closed_form():
    space, a, model, alpha = driven_linear_mode()
    ss = steady_state(model, method="evolve")
    assert abs(ss.expectation(a) - alpha) < 1e-9


def test_steady_state_evolve_horizon_error():
    space, a, model, _ = driven_linear_mode()
    with pytest.raises(SteadyStateError):
        steady_state(model, method="evolve", t_horizon=4.0)


# ---------------------------------------------------------- convergence


def linear_family(delta_omega=0.7, epsilon=0.1):
    def family(cutoff):
        space = build_space([boson(cutoff)])
        a = annihilation(space, 0)
        H = delta_omega * number_op(space, 0) + epsilon * (a + a.dag())
        model = LindbladModel(H=H, channels=((1.0, a),))
        return model, vacuum_state(space)

    return family


def test_convergence_weak_drive_small_cutoff():
    res = convergence_check(
        linear_family(epsilon=0.1),
        lambda space: number_op(space, 0),
        np.linspace(0.0, 5.0, 26),
    )
    assert res.cutoff <= 4
    assert res.deltas[-1][2] < 1e-6


def test_convergence_zero_drive_cutoff_one():
    def family(cutoff):
        space = build_space([boson(cutoff), boson(cutoff)])
        a0, a1 = annihilation(space, 0), annihilation(space, 1)
        model = LindbladModel(
            H=0.0 * number_op(space, 0), channels=((1.0, a0), (1.0, a1))
        )
        return model, fock_state(space, [1, 1])

    res = convergence_check(
        family,
        lambda space: number_op(space, 0),
        np.linspace(0.0, 3.0, 16),
        start=1,
    )
    assert res.cutoff == 1


def test_convergence_ceiling_error():
    with pytest.raises(ConvergenceError):
        convergence_check(
            linear_family(epsilon=0.1),
            lambda space: number_op(space, 0),
            np.linspace(0.0, 5.0, 26),
            start=2,
            ceiling=2,
        )
