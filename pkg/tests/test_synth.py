import numpy as np
import pytest

from krikf.errors import DisconnectedAfterRetries, ReconstructionError
from krikf.graph import GraphSequence, TransitionSpec, build_graph, eigendecompose, is_connected, laplacian
from krikf.kernels import build_kernel, diffusion
from krikf.synth import (
    DEFAULT_SEED_MATRIX,
    KroneckerConfig,
    SignalModelConfig,
    bernoulli_adjacency,
    evolve_graph,
    gen_bandlimited,
    gen_scenario,
    gen_trend_sequence,
    kronecker_expand,
    kronecker_sequence,
    sample_initial_adjacency,
)

from conftest import basis_of, random_connected_graph


def test_kronecker_expand_examples():
    s = np.array(DEFAULT_SEED_MATRIX)
    np.testing.assert_array_equal(kronecker_expand(s, 1), s)
    s2 = kronecker_expand(s, 2)
    assert s2.shape == (9, 9)
    # entry (3i+k, 3j+l) is s[i, j] * s[k, l]
    assert s2[1, 2] == s[0, 0] * s[1, 2]
    assert s2[5, 7] == s[1, 2] * s[2, 1]
    assert kronecker_expand(s, 4).shape == (81, 81)
    with pytest.raises(ReconstructionError):
        kronecker_expand(s, 0)


def test_bernoulli_edge_frequency():
    rng = np.random.default_rng(7)
    s = np.array([[0.0, 0.9], [0.3, 0.0]])
    hits = [bernoulli_adjacency(s, rng)[1, 0] for _ in range(1000)]
    assert abs(np.mean(hits) - 0.3) <= 0.05


def test_bernoulli_is_symmetric_without_loops(rng):
    a = bernoulli_adjacency(np.full((6, 6), 0.5), rng)
    np.testing.assert_array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)


def test_initial_adjacency_extremes(rng):
    g = sample_initial_adjacency(np.ones((4, 4)), rng)
    np.testing.assert_array_equal(g.adjacency, np.ones((4, 4)) - np.eye(4))
    with pytest.raises(DisconnectedAfterRetries):
        sample_initial_adjacency(np.zeros((3, 3)), rng)


def test_evolve_without_perturbation_is_identity(rng):
    g = random_connected_graph(8, rng)
    cfg = KroneckerConfig(omega=0.0, delete_prob=0.0)
    for t in range(1, 50):
        assert evolve_graph(g, t, cfg, rng).adjacency.tolist() == g.adjacency.tolist()


def test_evolution_stays_connected_and_symmetric(rng):
    cfg = KroneckerConfig(power=3, omega=0.2, t_change=3, t_delete=5, delete_prob=0.5, rng_seed=3)
    seq = kronecker_sequence(cfg, 200, np.random.default_rng(3))
    assert len(seq.snapshots) > 1
    for _, g in seq.snapshots:
        np.testing.assert_array_equal(g.adjacency, g.adjacency.T)
        assert is_connected(g.adjacency)
        assert (g.adjacency >= 0).all()


def test_deletion_only_removes_edges(rng):
    cfg = KroneckerConfig(power=3, omega=0.0, t_change=1, t_delete=1, delete_prob=0.3)
    g = sample_initial_adjacency(kronecker_expand(cfg.seed_matrix, 3), rng)
    g2 = evolve_graph(g, 1, cfg, rng)
    assert (g2.adjacency <= g.adjacency).all()
    assert is_connected(g2.adjacency)


def test_default_sequence_is_reproducible():
    cfg = KroneckerConfig(omega=0.1)
    a = kronecker_sequence(cfg, 90)
    b = kronecker_sequence(cfg, 90)
    assert a.num_nodes == 81
    assert [s for s, _ in a.snapshots] == [s for s, _ in b.snapshots]
    for (_, ga), (_, gb) in zip(a.snapshots, b.snapshots):
        np.testing.assert_array_equal(ga.adjacency, gb.adjacency)


def test_bandlimited_support(rng):
    basis = basis_of(random_connected_graph(10, rng))
    x = gen_bandlimited(basis, 4, rng)
    coeffs = basis.eigenvectors.T @ x
    np.testing.assert_allclose(coeffs[4:], 0.0, atol=1e-12)
    np.testing.assert_array_equal(gen_bandlimited(basis, 0, rng), np.zeros(10))
    with pytest.raises(ReconstructionError):
        gen_bandlimited(basis, 11, rng)


def test_bandlimited_isotropic_covariance(rng):
    basis = basis_of(random_connected_graph(6, rng))
    xs = np.array([gen_bandlimited(basis, 3, rng) for _ in range(20000)])
    u = basis.eigenvectors[:, :3]
    np.testing.assert_allclose(xs.T @ xs / len(xs), u @ u.T, atol=0.05)


def test_trend_innovation_covariance(rng):
    g = random_connected_graph(5, rng)
    seq = GraphSequence.static(g)
    spec = TransitionSpec("scaled_adjacency_plus_identity", 0.1)
    noise = diffusion(0.25)
    b = 0.1 * (g.adjacency + np.eye(5))
    innov = []
    for _ in range(4000):
        chi = np.array(gen_trend_sequence(seq, spec, noise, 2, rng))
        innov.append(chi[1] - b @ chi[0])
        innov.append(chi[0])
    innov = np.array(innov)
    k = build_kernel(eigendecompose(laplacian(g)), noise).matrix
    np.testing.assert_allclose(innov.T @ innov / len(innov), k, atol=0.05)


def test_scenario_zero_bandwidth_has_zero_nu(rng):
    seq = GraphSequence.static(random_connected_graph(6, rng))
    sc = gen_scenario(SignalModelConfig(bandwidth=0), seq, 5, rng)
    np.testing.assert_array_equal(sc.nu, np.zeros((5, 6)))
    np.testing.assert_array_equal(sc.signals, sc.chi)


def test_scenario_default_shapes_and_decomposition():
    seq = kronecker_sequence(KroneckerConfig(), 90)
    sc = gen_scenario(SignalModelConfig(), seq, 90, np.random.default_rng(0))
    assert sc.signals.shape == (90, 81)
    np.testing.assert_allclose(sc.signals, sc.nu + sc.chi, atol=0)
    assert np.isfinite(sc.signals).all()


def test_autoregressive_reduces_to_bandlimited(rng):
    g = random_connected_graph(7, rng)
    seq = GraphSequence.static(g)
    model = SignalModelConfig(model="autoregressive_plus_bandlimited", bandwidth=3, gamma_f=0.0)
    sc = gen_scenario(model, seq, 4, np.random.default_rng(1))
    assert sc.nu is None and sc.chi is None
    basis = eigendecompose(laplacian(g))
    ref_rng = np.random.default_rng(1)
    ref = np.array([gen_bandlimited(basis, 3, ref_rng) for _ in range(4)])
    np.testing.assert_array_equal(sc.signals, ref)


def test_autoregressive_recursion(rng):
    g = random_connected_graph(5, rng)
    model = SignalModelConfig(model="autoregressive_plus_bandlimited", bandwidth=2, gamma_f=0.3)
    sc = gen_scenario(model, GraphSequence.static(g), 3, np.random.default_rng(4))
    basis = eigendecompose(laplacian(g))
    ref_rng = np.random.default_rng(4)
    prev = np.zeros(5)
    for t in range(3):
        prev = 0.3 * g.adjacency @ prev + gen_bandlimited(basis, 2, ref_rng)
        np.testing.assert_allclose(sc.signals[t], prev, atol=1e-14)


def test_scenario_is_deterministic(rng):
    seq = GraphSequence.static(random_connected_graph(6, rng))
    a = gen_scenario(SignalModelConfig(rng_seed=5), seq, 6)
    b = gen_scenario(SignalModelConfig(rng_seed=5), seq, 6)
    np.testing.assert_array_equal(a.signals, b.signals)


def test_config_validation():
    with pytest.raises(ReconstructionError):
        KroneckerConfig(seed_matrix=((1.5, 0, 0), (0, 0, 0), (0, 0, 0)))
    with pytest.raises(ReconstructionError):
        KroneckerConfig(delete_prob=2.0)
    with pytest.raises(ReconstructionError):
        SignalModelConfig(model="random_walk")
    with pytest.raises(ReconstructionError):
        gen_scenario(SignalModelConfig(bandwidth=9), GraphSequence.static(build_graph(np.ones((3, 3)) - np.eye(3))), 2)
