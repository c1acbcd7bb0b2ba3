import math

import numpy as np
import pytest

from gradreduce import Potential, SpectralBasis

from oracles import dense_energy, dense_projection, direct_synthesis


@pytest.mark.parametrize("L,j,expected", [(math.pi, 1, 1.0), (math.pi, 5, 25.0),
                                          (2 * math.pi, 2, 1.0)])
def test_eigenvalue_examples(L, j, expected):
    assert SpectralBasis(L, 8).eigenvalue(j) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("j", [0, 9, -1])
def test_eigenvalue_out_of_range(j):
    with pytest.raises(IndexError):
        SpectralBasis(math.pi, 8).eigenvalue(j)


def test_eigenvalues_strictly_increasing_and_positive():
    lam = SpectralBasis(2.7, 40).eigenvalues
    assert lam[0] > 0
    assert np.all(np.diff(lam) > 0)


@pytest.mark.parametrize("kwargs", [dict(domain_length=0.0, n_modes=8),
                                    dict(domain_length=1.0, n_modes=3),
                                    dict(domain_length=1.0, n_modes=8, n_quad=15)])
def test_invalid_basis_rejected(kwargs):
    with pytest.raises(ValueError):
        SpectralBasis(**kwargs)


def test_discrete_orthonormality():
    b = SpectralBasis(1.3, 24, 57)
    S = b.synthesize(np.eye(b.n_modes))
    gram = b.spacing * S @ S.T
    assert np.max(np.abs(gram - np.eye(b.n_modes))) <= 1e-10


def test_synthesize_unit_mode_matches_basis_function():
    b = SpectralBasis(math.pi, 16)
    vals = b.synthesize(b.mode(3))
    assert np.allclose(vals, math.sqrt(2 / math.pi) * np.sin(3 * b.nodes), atol=1e-14)


def test_synthesize_zero():
    b = SpectralBasis(math.pi, 16)
    assert np.all(b.synthesize(np.zeros(16)) == 0)


def test_synthesis_against_direct_summation(rng):
    b = SpectralBasis(2.0, 16)
    a = rng.normal(size=16)
    assert np.max(np.abs(b.synthesize(a) - direct_synthesis(a, 2.0, b.nodes))) <= 1e-12


def test_roundtrip(rng):
    b = SpectralBasis(2.0, 16)
    a = rng.normal(size=(5, 16))
    assert np.max(np.abs(b.analyze(b.synthesize(a)) - a)) <= 1e-12


def test_size_mismatch():
    b = SpectralBasis(2.0, 16)
    with pytest.raises(ValueError):
        b.analyze(np.zeros(31))
    with pytest.raises(ValueError):
        b.synthesize(np.zeros(15))


def test_projections_example():
    b = SpectralBasis(math.pi, 4)
    a = np.array([1.0, 2.0, 3.0, 4.0])
    assert b.project_head(a, 2).tolist() == [1, 2, 0, 0]
    assert b.project_tail(a, 2).tolist() == [0, 0, 3, 4]


def test_projection_properties(rng):
    b = SpectralBasis(math.pi, 12)
    a = rng.normal(size=12)
    h, t = b.project_head(a, 5), b.project_tail(a, 5)
    assert np.array_equal(h + t, a)
    assert np.array_equal(b.project_head(h, 5), h)
    assert b.inner(h, t) == 0.0


@pytest.mark.parametrize("m", [0, 12, 13])
def test_projection_cutoff_range(m):
    b = SpectralBasis(math.pi, 12)
    with pytest.raises(ValueError):
        b.project_head(np.zeros(12), m)
    with pytest.raises(ValueError):
        b.project_tail(np.zeros(12), m)


def test_inv_laplacian_examples(rng):
    b = SpectralBasis(math.pi, 8)
    assert np.allclose(b.inv_laplacian(b.mode(3)), -b.mode(3) / 9, atol=1e-16)
    assert np.all(b.inv_laplacian(np.zeros(8)) == 0)
    f = rng.normal(size=8)
    assert np.max(np.abs(b.laplacian(b.inv_laplacian(f)) - f)) <= 1e-12
    assert np.max(np.abs(b.inv_laplacian(b.laplacian(f)) - f)) <= 1e-12


def test_parseval_and_integration_by_parts(rng):
    b = SpectralBasis(1.7, 20)
    a = rng.normal(size=(10, 20))
    assert np.max(np.abs(b.quad_norm(a) ** 2 - np.sum(a * a, axis=-1))) <= 1e-10
    assert np.max(np.abs(b.inner(b.laplacian(a), a) + np.sum(b.eigenvalues * a * a, -1))) <= 1e-10


def test_nonlinearity_zero_and_linear(rng):
    b = SpectralBasis(math.pi, 16)
    a = rng.normal(size=16)
    assert np.all(b.apply_nonlinearity(a, Potential.zero()) == 0)
    assert np.allclose(b.apply_nonlinearity(a, Potential.linear(2.5)), 2.5 * a, atol=1e-12)


def test_nonlinearity_square_matches_dense_quadrature():
    # u_1^2 is not a finite sine series, so collocation converges with n_quad
    L, N = math.pi, 16
    ref = dense_projection(lambda x: (math.sqrt(2 / L) * np.sin(x)) ** 2, L, N)
    errs = []
    for nq in (32, 256, 2048):
        b = SpectralBasis(L, N, nq)
        errs.append(np.max(np.abs(b.apply_nonlinearity(b.mode(1), Potential.polynomial([0, 0, 1])) - ref)))
    assert errs[0] <= 1e-4
    assert errs[-1] <= 1e-9
    assert errs[0] > errs[1] > errs[2]


def test_cubic_nonlinearity_is_exact(rng):
    L, N = 2.0, 16
    b = SpectralBasis(L, N)
    a = np.zeros(N)
    a[:5] = rng.normal(size=5)
    got = b.apply_nonlinearity(a, Potential.polynomial([0, 0, 0, 1]))
    ref = dense_projection(lambda x: direct_synthesis(a, L, x) ** 3, L, N, n=20_001)
    assert np.max(np.abs(got - ref)) <= 1e-10


def test_energy_examples(well):
    b = SpectralBasis(math.pi, 16)
    assert b.energy(np.zeros(16), well) == 0.0
    assert b.energy(b.mode(1), Potential.zero()) == pytest.approx(0.5, rel=1e-15)


def test_energy_matches_dense_quadrature(well):
    a = np.zeros(16)
    a[:2] = 1.0
    ref = dense_energy(a, well.value, math.pi)
    assert SpectralBasis(math.pi, 16).energy(a, well) == pytest.approx(ref, abs=1e-5)
    assert SpectralBasis(math.pi, 16, 512).energy(a, well) == pytest.approx(ref, abs=1e-9)


def test_energy_bounded_below(rng, well):
    b = SpectralBasis(math.pi, 16)
    a = 3 * rng.normal(size=(200, 16))
    assert np.all(b.energy(a, well) >= well.lower_bound * math.pi)


def test_residual_examples(rng, well):
    b = SpectralBasis(math.pi, 16)
    assert np.all(b.residual(np.zeros(16), well) == 0)
    assert np.allclose(b.residual(b.mode(2), Potential.zero()), -4 * b.mode(2))
