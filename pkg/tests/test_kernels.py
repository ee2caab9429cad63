import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krikf.errors import AllZeroCoefficients, DegenerateKernel, DimensionMismatch, PStepPole, ReconstructionError
from krikf.graph import eigendecompose
from krikf.kernels import (
    KernelDictionary,
    KernelMatrix,
    KernelSpec,
    build_kernel,
    combine,
    diffusion,
    identity,
    pinv_spectrum,
    spectral_weight,
    spectral_weights,
)

from conftest import basis_of, random_connected_graph

PATH2_BASIS = eigendecompose([[1.0, -1.0], [-1.0, 1.0]])


def test_spectral_weight_examples():
    assert spectral_weight(diffusion(0.0), 3.7, 1, 5) == 1.0
    assert spectral_weight(KernelSpec("bandlimited", {"beta": 50.0, "B": 20}), 0.0, 1, 40) == pytest.approx(0.02)
    assert spectral_weight(KernelSpec("bandlimited", {"beta": 50.0, "B": 20}), 0.0, 21, 40) == 50.0
    pstep = KernelSpec("p_step_random_walk", {"a": 2.55, "p": 6})
    assert spectral_weight(pstep, 0.0, 1, 5) == pytest.approx(2.55 ** -6, rel=1e-14)


def test_spectral_weight_families():
    assert spectral_weight(diffusion(2.0), 1.5, 1, 3) == pytest.approx(math.exp(1.5))
    assert spectral_weight(KernelSpec("regularized_laplacian", {"sigma2": 4.0}), 0.5, 2, 3) == 3.0
    br = KernelSpec("band_rejection", {"beta": 10.0, "k": 2, "l": 1})
    assert [spectral_weight(br, 0.0, n, 4) for n in (1, 2, 3, 4)] == [0.1, 10.0, 10.0, 0.1]
    assert spectral_weight(identity(), 9.0, 1, 1) == 1.0


def test_pstep_pole():
    with pytest.raises(PStepPole):
        spectral_weight(KernelSpec("p_step_random_walk", {"a": 2.0, "p": 1}), 2.0, 1, 2)
    with pytest.raises(PStepPole):
        build_kernel(PATH2_BASIS, KernelSpec("p_step_random_walk", {"a": 2.0, "p": 2}))


def test_kernel_spec_validation():
    with pytest.raises(ReconstructionError):
        KernelSpec("gaussian", {})
    with pytest.raises(ReconstructionError):
        KernelSpec("diffusion", {})
    with pytest.raises(ReconstructionError):
        KernelSpec("diffusion", {"sigma2": 1.0, "beta": 2.0})
    with pytest.raises(ReconstructionError):
        KernelSpec("bandlimited", {"beta": 2.0, "B": 0})
    with pytest.raises(ReconstructionError):
        spectral_weights(KernelSpec("bandlimited", {"beta": 2.0, "B": 5}), [0, 1, 2])


def test_kernel_spec_json_round_trip():
    for spec in (diffusion(3.24), KernelSpec("band_rejection", {"beta": 5.0, "k": 2, "l": 3}), identity(1e-5)):
        assert KernelSpec.from_dict(spec.to_dict()) == spec
    assert KernelSpec.from_dict({"family": "diffusion", "sigma2": 3.24}) == diffusion(3.24)


def test_pinv_spectrum_threshold():
    np.testing.assert_array_equal(pinv_spectrum([2.0, 1e-13, 0.0, 4.0]), [0.5, 0.0, 0.0, 0.25])


def test_build_kernel_single_node():
    k = build_kernel(eigendecompose([[0.0]]), diffusion(2.0))
    np.testing.assert_array_equal(k.matrix, [[1.0]])


def test_build_kernel_two_node_diffusion():
    k = build_kernel(PATH2_BASIS, diffusion(2.0))
    e = math.exp(-2)
    np.testing.assert_allclose(k.matrix, 0.5 * np.array([[1 + e, 1 - e], [1 - e, 1 + e]]), atol=1e-14)
    np.testing.assert_allclose(k.matrix, [[0.5677, 0.4323], [0.4323, 0.5677]], atol=5e-5)


def test_identity_kernel(rng):
    basis = basis_of(random_connected_graph(7, rng))
    np.testing.assert_allclose(build_kernel(basis, identity()).matrix, np.eye(7), atol=1e-10)
    np.testing.assert_allclose(build_kernel(basis, identity(1e-5)).matrix, 1e-5 * np.eye(7), atol=1e-14)


def test_degenerate_kernel():
    # 1/beta = 1e-13 on every mode falls under the pseudo-inverse threshold
    with pytest.raises(DegenerateKernel):
        build_kernel(PATH2_BASIS, KernelSpec("bandlimited", {"beta": 1e13, "B": 2}))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**31 - 1), st.floats(0.0, 5.0))
def test_laplacian_kernels_are_psd_and_share_basis(n, seed, sigma2):
    rng = np.random.default_rng(seed)
    basis = basis_of(random_connected_graph(n, rng))
    k = build_kernel(basis, diffusion(sigma2))
    assert np.linalg.eigvalsh(k.matrix).min() > -1e-12
    np.testing.assert_allclose(k.matrix @ basis.eigenvectors, basis.eigenvectors * k.spectral_values, atol=1e-10)


def _dictionary(rng, n=6):
    basis = basis_of(random_connected_graph(n, rng))
    specs = [diffusion(0.5), diffusion(2.0), KernelSpec("regularized_laplacian", {"sigma2": 1.0})]
    return KernelDictionary.from_specs(basis, specs)


def test_combine_unit_vector(rng):
    d = _dictionary(rng)
    np.testing.assert_array_equal(combine(d, [0, 1, 0]).matrix, d.kernel(1).matrix)


def test_combine_average_of_spectra(rng):
    d = _dictionary(rng)
    k = combine(d, [0.5, 0.5, 0.0])
    np.testing.assert_allclose(k.spectral_values, (d.spectra[0] + d.spectra[1]) / 2)


def test_combine_matches_dense_sum(rng):
    d = _dictionary(rng)
    for _ in range(10):
        theta = rng.uniform(0, 2, d.size)
        dense = sum(t * build_kernel(d.basis, s).matrix for t, s in zip(theta, d.specs))
        assert np.linalg.norm(combine(d, theta).matrix - dense) < 1e-10


def test_combine_errors(rng):
    d = _dictionary(rng)
    with pytest.raises(AllZeroCoefficients):
        combine(d, np.zeros(3))
    with pytest.raises(ReconstructionError):
        combine(d, [1.0, -0.1, 0.0])
    with pytest.raises(DimensionMismatch):
        combine(d, [1.0, 1.0])


def test_dictionary_rebased_on_new_basis(rng):
    d = _dictionary(rng)
    new_basis = basis_of(random_connected_graph(6, rng))
    r = d.rebased(new_basis)
    np.testing.assert_allclose(r.kernel(0).matrix, build_kernel(new_basis, d.specs[0]).matrix)


def test_kernel_matrix_checks():
    with pytest.raises(ReconstructionError):
        KernelMatrix.from_matrix([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ReconstructionError):
        KernelMatrix.from_matrix([[1.0, 0.0], [0.0, -1.0]])
    k = KernelMatrix.from_matrix([[2.0, 1.0], [1.0, 2.0]])
    assert k.min_eigenvalue() == pytest.approx(1.0)
