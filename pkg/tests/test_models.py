import numpy as np
import pytest

from lindmap.hilbert import number_op, spin_op
from lindmap.models import (
    DimerParams,
    LatticeGraph,
    SpinLatticeParams,
    build_dimer,
    build_spin_lattice,
    dimer_space,
    is_frustrated,
    spin_space,
)

FIG1 = dict(U=5.0, delta_omega=1.0, epsilon=15.0, J=10.0)


def triangle_params(delta_Omega=1.0, eps=5.0, J=5.0):
    return SpinLatticeParams(
        delta_Omega=delta_Omega,
        drives=(eps, 0.0, 0.0),
        J=J,
        graph=LatticeGraph.triangle(),
    )


def test_dimer_free_hamiltonian_diagonal():
    p = DimerParams(U=0.0, delta_omega=1.0, epsilon=0.0, J=0.0, cutoff=2)
    h = build_dimer(p).H.matrix
    assert np.allclose(h, np.diag(np.diag(h)))
    # diagonal entries are the total occupation n0 + n1
    assert np.allclose(np.diag(h).real, [0, 1, 2, 1, 2, 3, 2, 3, 4])


def test_dimer_fig1_structure():
    p = DimerParams(cutoff=4, **FIG1)
    m = build_dimer(p)
    assert m.H.is_hermitian()
    assert len(m.channels) == 2
    assert all(rate == 1.0 for rate, _ in m.channels)
    space = dimer_space(p)
    for k, (_, jump) in enumerate(m.channels):
        n_from_jump = jump.dag() @ jump
        assert np.allclose(n_from_jump.matrix, number_op(space, k).matrix)


def test_dimer_interaction_eigenvalue():
    """U adag adag a a contributes U n(n-1) per site."""
    p = DimerParams(U=1.0, delta_omega=0.0, epsilon=0.0, J=0.0, cutoff=3)
    h = build_dimer(p).H.matrix
    space = dimer_space(p)
    idx = space.basis_index((2, 0))
    vec = np.zeros(space.dim)
    vec[idx] = 1.0
    assert np.allclose(h @ vec, 2.0 * vec)
    idx33 = space.basis_index((3, 3))
    vec33 = np.zeros(space.dim)
    vec33[idx33] = 1.0
    assert np.allclose(h @ vec33, 12.0 * vec33)


def test_dimer_number_conservation_without_drive():
    p = DimerParams(U=5.0, delta_omega=1.0, epsilon=0.0, J=10.0, cutoff=3)
    m = build_dimer(p)
    space = dimer_space(p)
    n_tot = number_op(space, 0) + number_op(space, 1)
    comm = m.H @ n_tot - n_tot @ m.H
    assert np.abs(comm.matrix).max() < 1e-12


def test_dimer_negated_hamiltonian_is_exact_sign_flip():
    p = DimerParams(cutoff=5, **FIG1)
    h_plus = build_dimer(p).H.matrix
    h_minus = build_dimer(p.negated()).H.matrix
    assert np.array_equal(h_minus, -h_plus)


def test_dimer_negation_keeps_gamma():
    p = DimerParams(cutoff=2, gamma=1.0, **FIG1)
    q = p.negated()
    assert (q.U, q.delta_omega, q.epsilon, q.J) == (-5.0, -1.0, -15.0, -10.0)
    assert q.gamma == 1.0
    assert q.negated() == p


def test_dimer_chain_generalization():
    p = DimerParams(U=1.0, delta_omega=0.5, epsilon=0.2, J=0.3, cutoff=1, n_sites=3)
    assert p.resolved_edges() == ((0, 1), (1, 2))
    m = build_dimer(p)
    assert m.dim == 8
    assert len(m.channels) == 3
    ring = DimerParams(
        U=1.0, delta_omega=0.5, epsilon=0.2, J=0.3, cutoff=1, n_sites=3,
        edges=((0, 1), (1, 2), (2, 0)),
    )
    assert ring.resolved_edges() == ((0, 1), (0, 2), (1, 2))


def test_dimer_param_validation():
    with pytest.raises(ValueError):
        DimerParams(U=1.0, delta_omega=0.0, epsilon=0.0, J=0.0, cutoff=0)
    with pytest.raises(ValueError):
        DimerParams(U=1.0, delta_omega=0.0, epsilon=0.0, J=0.0, cutoff=2, gamma=-1.0)
    with pytest.raises(ValueError):
        DimerParams(U=1.0, delta_omega=0.0, epsilon=0.0, J=0.0, cutoff=2, gamma=0.0)
    with pytest.raises(ValueError):
        DimerParams(U=1.0, delta_omega=0.0, epsilon=0.0, J=0.0, cutoff=2, n_sites=1)


def test_single_spin_hamiltonian():
    p = SpinLatticeParams(
        delta_Omega=1.0, drives=(0.0,), J=3.0, graph=LatticeGraph(1, ())
    )
    h = build_spin_lattice(p).H.matrix
    assert np.allclose(h, np.diag([0.0, 1.0]))


def test_fig2_triangle_structure():
    m = build_spin_lattice(triangle_params())
    assert m.dim == 8
    assert m.H.is_hermitian()
    assert len(m.channels) == 3


def test_ising_pair_eigenvalues():
    for J in (2.5, -2.5):
        p = SpinLatticeParams(
            delta_Omega=0.0, drives=(0.0, 0.0), J=J, graph=LatticeGraph.chain(2)
        )
        h = build_spin_lattice(p).H.matrix
        vals = np.sort(np.linalg.eigvalsh(h))
        assert np.allclose(vals, [-abs(J), -abs(J), abs(J), abs(J)])


def test_spin_excitation_conservation_without_drive():
    p = triangle_params(eps=0.0)
    m = build_spin_lattice(p)
    space = spin_space(p)
    n_tot = None
    for j in range(3):
        nj = spin_op(space, j, "raise") @ spin_op(space, j, "lower")
        n_tot = nj if n_tot is None else n_tot + nj
    comm = m.H @ n_tot - n_tot @ m.H
    assert np.abs(comm.matrix).max() < 1e-12


def test_spin_negation():
    p = triangle_params()
    q = p.negated()
    assert q.delta_Omega == -1.0
    assert q.drives == (-5.0, 0.0, 0.0)
    assert q.J == -5.0
    assert q.Gamma == p.Gamma
    h_plus = build_spin_lattice(p).H.matrix
    h_minus = build_spin_lattice(q).H.matrix
    assert np.array_equal(h_minus, -h_plus)


def test_frustration_predicate():
    assert is_frustrated(triangle_params(J=5.0))
    assert not is_frustrated(triangle_params(J=-5.0))
    square = SpinLatticeParams(
        delta_Omega=1.0, drives=(1.0, 0, 0, 0), J=5.0, graph=LatticeGraph.ring(4)
    )
    assert not is_frustrated(square)
    pentagon = SpinLatticeParams(
        delta_Omega=1.0, drives=(0,) * 5, J=5.0, graph=LatticeGraph.ring(5)
    )
    assert is_frustrated(pentagon)


def test_graph_validation():
    with pytest.raises(ValueError):
        LatticeGraph(3, ((0, 0),))
    with pytest.raises(ValueError):
        LatticeGraph(3, ((0, 3),))
    with pytest.raises(ValueError):
        LatticeGraph(3, ((0, 1), (1, 0)))
    assert LatticeGraph.chain(4).is_bipartite()
    assert not LatticeGraph.triangle().is_bipartite()
    assert LatticeGraph(5, ()).is_bipartite()


def test_spin_param_validation():
    with pytest.raises(ValueError):
        SpinLatticeParams(
            delta_Omega=1.0, drives=(1.0, 0.0), J=1.0, graph=LatticeGraph.triangle()
        )
    with pytest.raises(ValueError):
        SpinLatticeParams(
            delta_Omega=1.0, drives=(0.0,), J=1.0, graph=LatticeGraph(1, ()), Gamma=0.0
        )
