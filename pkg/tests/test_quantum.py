import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnlce import quantum
from dnlce.lattice import LatticeSpec
from dnlce.quantum import InitialStateSpec, ModelSpec, TimeGrid

from oracles import (PAULI, expect, expm_evolve, kron_hamiltonian, kron_product_state,
                     site_operator)

PLAQ = [(0, 1), (0, 2), (1, 3), (2, 3)]


@pytest.mark.parametrize("model", [ModelSpec.ising(0.7, 1.3), ModelSpec.xxz(0.9, -0.4)])
def test_hamiltonian_matches_kron_oracle(model):
    n, bonds = 5, [(0, 1), (1, 2), (2, 3), (1, 4)]
    H = quantum.hamiltonian_from_bonds(model, n, bonds)
    ref = kron_hamiltonian(model.variant, n, bonds, model.J, model.h, model.Jperp, model.Jz)
    assert np.allclose(H.dense(), ref, atol=1e-14)
    assert H.is_hermitian()
    psi = np.random.default_rng(1).normal(size=32) + 0j
    assert np.allclose(H.matvec(psi), ref @ psi, atol=1e-13)


def test_two_site_xxz_matrix():
    H = quantum.hamiltonian_from_bonds(ModelSpec.xxz(1.0, 0.5), 2, [(0, 1)]).dense().real
    expect_ = np.array([[-0.5, 0, 0, 0], [0, 0.5, -2, 0], [0, -2, 0.5, 0], [0, 0, 0, -0.5]])
    assert np.allclose(H, expect_)


def test_xxz_sectors_cover_basis():
    H = quantum.hamiltonian_from_bonds(ModelSpec.xxz(), 6, [(i, i + 1) for i in range(5)])
    allidx = np.sort(np.concatenate(H.sectors))
    assert np.array_equal(allidx, np.arange(64))
    dense = H.dense()
    for a in H.sectors:
        others = np.setdiff1d(np.arange(64), a)
        assert not np.any(dense[np.ix_(a, others)])


def test_site_cap():
    with pytest.raises(quantum.ResourceLimitError):
        quantum.hamiltonian_from_bonds(ModelSpec.ising(), 21, [])
    with pytest.raises(quantum.ResourceLimitError):
        quantum.build_hamiltonian(ModelSpec.ising(), LatticeSpec(1), [(i,) for i in range(6)], site_cap=5)


def test_model_and_state_validation():
    with pytest.raises(ValueError):
        ModelSpec("heisenberg")
    with pytest.raises(ValueError):
        InitialStateSpec(4.0)
    with pytest.raises(ValueError):
        TimeGrid([0.1, 0.2])
    with pytest.raises(ValueError):
        TimeGrid([0.0, 0.2, 0.2])


@given(st.floats(0, np.pi), st.floats(-3, 3), st.integers(1, 5))
def test_product_state_matches_kron(theta, phi, n):
    psi = quantum.product_state(InitialStateSpec(theta, phi), n)
    assert np.allclose(psi, kron_product_state(theta, phi, n), atol=1e-14)
    for a in "xyz":
        single = InitialStateSpec(theta, phi).single_site(a)
        assert np.allclose(quantum.site_expectations(psi, a), single, atol=1e-12)


def test_single_spin_precession():
    t = np.linspace(0, 3, 31)
    H = quantum.hamiltonian_from_bonds(ModelSpec.ising(1.0, 0.8), 1, [])
    states = quantum.evolve_dense(H, quantum.product_state(InitialStateSpec(0.0), 1), t)
    assert np.allclose(quantum.site_expectations(states, "z")[:, 0], np.cos(1.6 * t), atol=1e-13)
    assert np.allclose(quantum.site_expectations(states, "y")[:, 0], np.sin(1.6 * t), atol=1e-13)


@pytest.mark.parametrize("method", ["dense", "krylov"])
@pytest.mark.parametrize("model", [ModelSpec.ising(1.0, 1.0), ModelSpec.xxz(1.0, 0.15)])
def test_evolution_matches_expm_oracle(method, model):
    t = np.linspace(0, 2, 9)
    H = quantum.hamiltonian_from_bonds(model, 4, PLAQ)
    psi0 = quantum.product_state(InitialStateSpec(1.1, 0.4), 4)
    ours = quantum.evolve(H, psi0, t, method=method)
    ref = expm_evolve(kron_hamiltonian(model.variant, 4, PLAQ, model.J, model.h, model.Jperp, model.Jz),
                      psi0, t)
    assert np.abs(ours - ref).max() < 1e-11


def test_krylov_info_and_conservation():
    model = ModelSpec.ising(1.0, 1.0)
    bonds = [(i, i + 1) for i in range(9)]
    H = quantum.hamiltonian_from_bonds(model, 10, bonds)
    psi0 = quantum.product_state(InitialStateSpec(np.pi / 2), 10)
    t = np.linspace(0, 2, 11)
    states, info = quantum.evolve_krylov(H, psi0, t, return_info=True)
    assert info.max_norm_drift < 1e-10 and info.steps >= 10
    e = quantum.energy(H, states)
    assert np.abs(e - e[0]).max() < 1e-10


def test_krylov_step_halving_and_failure():
    H = quantum.hamiltonian_from_bonds(ModelSpec.ising(1.0, 1.0), 8, [(i, i + 1) for i in range(7)])
    psi0 = quantum.product_state(InitialStateSpec(np.pi / 2), 8)
    ref = quantum.evolve_dense(H, psi0, [0, 3.0])
    # a small Krylov space forces several halvings but still converges
    out, info = quantum.evolve_krylov(H, psi0, [0, 3.0], m=12, dt_max=3.0, return_info=True)
    assert info.steps > 1 and np.abs(out - ref).max() < 1e-9
    with pytest.raises(quantum.KrylovConvergenceError):
        quantum.evolve_krylov(H, psi0, [0, 3.0], m=3, dt_max=3.0, max_halvings=1)


def test_non_hermitian_dense_rejected():
    with pytest.raises(quantum.PropagationError):
        quantum.evolve_dense(np.array([[0, 1], [0, 0]]), np.array([1, 0]), [0, 1])


@settings(max_examples=20)
@given(st.integers(2, 5), st.sampled_from("xyz"), st.sampled_from("xyz"), st.integers(0, 10 ** 6))
def test_pauli_expectations_match_kron(n, a, b, seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    psi /= np.linalg.norm(psi)
    i, j = rng.choice(n, size=2, replace=False)
    assert np.isclose(quantum.expect_single(psi, i, a), expect(psi, site_operator(PAULI[a], i, n)), atol=1e-12)
    op = site_operator(PAULI[a], i, n) @ site_operator(PAULI[b], j, n)
    assert np.isclose(quantum.expect_pair(psi, i, j, a, b), expect(psi, op), atol=1e-12)


def test_expectation_errors():
    psi = quantum.product_state(InitialStateSpec(1.0), 3)
    with pytest.raises(IndexError):
        quantum.expect_single(psi, 3, "x")
    with pytest.raises(ValueError):
        quantum.expect_pair(psi, 1, 1, "x", "z")
    with pytest.raises(ValueError):
        quantum.apply_pauli(psi, 0, "w")


def test_mp_evolution_agrees_with_double():
    model = ModelSpec.ising(1.0, 1.0)
    H = quantum.hamiltonian_from_bonds(model, 3, [(0, 1), (1, 2)])
    init = InitialStateSpec(np.pi / 2)
    t = [0.0, 0.3, 0.7]
    hi = quantum.evolve_mp(H, quantum.product_state(init, 3, dps=40), t, dps=40)
    lo = quantum.evolve_dense(H, quantum.product_state(init, 3), t)
    assert np.abs(hi.astype(complex) - lo).max() < 1e-13


def test_diagonal_propagation_is_extended_and_exact():
    H = quantum.hamiltonian_from_bonds(ModelSpec.ising(1.0, 0.0), 4, PLAQ)
    assert H.is_diagonal
    t = np.linspace(0, 2, 9)
    psi0 = quantum.product_state(InitialStateSpec(np.pi / 2), 4, extended=True)
    st = quantum.evolve_dense(H, psi0, t)
    assert st.dtype == np.clongdouble
    x = quantum.site_expectations(st, "x")
    assert x.dtype == np.longdouble
    # each plaquette site has two neighbours
    assert np.abs(x - np.cos(2 * t.astype(np.longdouble))[:, None] ** 2).max() < 1e-17
    plain = quantum.evolve_dense(H, quantum.product_state(InitialStateSpec(np.pi / 2), 4), t)
    assert plain.dtype == np.complex128 and np.abs(plain - st).max() < 1e-15


def test_compensated_site_sums_match_pairwise():
    rng = np.random.default_rng(5)
    st = rng.normal(size=(3, 1 << 10)) + 1j * rng.normal(size=(3, 1 << 10))
    st /= np.linalg.norm(st, axis=1, keepdims=True)
    ext = st.astype(np.clongdouble)
    for a in "xyz":
        ref = quantum.site_expectations(ext, a)
        assert np.abs(quantum.site_expectations(st, a) - ref).max() < 5e-16


def _random_cluster(rng, n):
    """Random connected bond list on n sites (a random tree plus extra bonds)."""
    bonds = {(int(rng.integers(k)), k) for k in range(1, n)}
    for _ in range(int(rng.integers(0, n))):
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        bonds.add((a, b))
    return sorted(bonds)


@settings(max_examples=25)
@given(st.integers(2, 8), st.booleans(), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(0, np.pi), st.floats(-3, 3), st.integers(0, 10 ** 6))
def test_propagators_conserve_and_agree(n, ising, c1, c2, theta, phi, seed):
    rng = np.random.default_rng(seed)
    model = ModelSpec.ising(c1, c2) if ising else ModelSpec.xxz(c1, c2)
    H = quantum.hamiltonian_from_bonds(model, n, _random_cluster(rng, n))
    psi0 = quantum.product_state(InitialStateSpec(theta, phi), n)
    t = np.linspace(0, 2, 6)
    dense = quantum.evolve_dense(H, psi0, t)
    kry = quantum.evolve_krylov(H, psi0, t)
    assert np.abs(dense - kry).max() < 1e-8
    e0 = quantum.energy(H, psi0[None])[0]
    for states in (dense, kry):
        assert np.abs(np.linalg.norm(states, axis=1) - 1).max() < 1e-10
        assert np.abs(quantum.energy(H, states) - e0).max() < 1e-10


@settings(max_examples=20)
@given(st.integers(2, 6), st.booleans(), st.integers(0, 10 ** 6))
def test_relabelling_permutes_observables(n, ising, seed):
    rng = np.random.default_rng(seed)
    model = ModelSpec.ising(1.0, 0.7) if ising else ModelSpec.xxz(1.0, 0.3)
    bonds = _random_cluster(rng, n)
    perm = rng.permutation(n)
    moved = [tuple(sorted((int(perm[a]), int(perm[b])))) for a, b in bonds]
    psi0 = quantum.product_state(InitialStateSpec(1.0, 0.4), n)
    t = np.linspace(0, 1, 4)
    a = quantum.site_expectations(quantum.evolve_dense(quantum.hamiltonian_from_bonds(model, n, bonds), psi0, t), "y")
    b = quantum.site_expectations(quantum.evolve_dense(quantum.hamiltonian_from_bonds(model, n, moved), psi0, t), "y")
    assert np.abs(a - b[:, perm]).max() < 1e-12
