import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from thermolab import (
    GaussianTestFunction,
    ModelSpec,
    QuadratureError,
    Region,
    ResourceError,
    TestOperator,
    UsageError,
    build_model,
    canonical_state,
    default_probes,
    evolve,
    kms_residual,
    kms_smeared_residual,
    kms_theta_discrimination,
    site_pauli,
)
from thermolab.kms import PAULI_X, PAULI_Y, PAULI_Z, random_hermitian
from thermolab.lattice import ObservableFamily, Translation


def single_site_sz_family():
    return ObservableFamily(Region("single_sites", 1), ("sz",),
                            diagonals=[np.array([1.0, -1.0])])


def ising(n, j=1.0, h=0.2):
    spec = ModelSpec("ising_chain", J=j, h=h)
    return build_model(spec, spec.region(n))


class TestEvolve:
    def test_time_zero_identity(self):
        fam = ising(3)
        a = site_pauli("x", 1, 3)
        moved = evolve(a, fam, [0.7, 0.1], 0.0)
        assert_allclose(moved.matrix, a.matrix, atol=1e-14)

    def test_commuting_operator_invariant(self):
        fam = ising(3)
        a = site_pauli("z", 0, 3)  # diagonal, commutes with the generator
        moved = evolve(a, fam, [0.9, -0.4], 1.7)
        assert_allclose(moved.matrix, a.matrix, atol=1e-12)

    def test_single_site_closed_form(self):
        fam = single_site_sz_family()
        for t in (0.3, 1.0, 2.5):
            moved = evolve(TestOperator(PAULI_X, "sx"), fam, [1.0], t)
            expected = math.cos(2 * t) * PAULI_X - math.sin(2 * t) * PAULI_Y
            assert_allclose(moved.matrix, expected, atol=1e-12)

    def test_spectrum_preserved(self):
        fam = ising(4)
        rng = np.random.default_rng(3)
        a = random_hermitian(fam.dim, rng)
        moved = evolve(a, fam, [1.1, 0.3], 2.2)
        assert_allclose(
            np.linalg.eigvalsh(moved.matrix), np.linalg.eigvalsh(a.matrix), atol=1e-10
        )

    def test_group_law(self):
        fam = ising(4)
        theta = [0.7, 0.2]
        rng = np.random.default_rng(5)
        a = random_hermitian(fam.dim, rng)
        once = evolve(evolve(a, fam, theta, 0.9), fam, theta, 1.4)
        direct = evolve(a, fam, theta, 2.3)
        assert float(np.max(np.abs(once.matrix - direct.matrix))) <= 1e-10

    def test_commutes_with_translation_on_ring(self):
        fam = ising(4)
        theta = [0.8, 0.1]
        shift = Translation(4)
        rng = np.random.default_rng(7)
        a = random_hermitian(fam.dim, rng)
        before = evolve(TestOperator(shift.conjugate_dense(a.matrix), "moved"),
                        fam, theta, 1.3)
        after = shift.conjugate_dense(evolve(a, fam, theta, 1.3).matrix)
        assert float(np.max(np.abs(before.matrix - after))) <= 1e-10

    def test_stationarity_of_canonical_state(self):
        fam = ising(3)
        theta = [1.0, 0.3]
        psi = canonical_state(fam, theta)
        a = site_pauli("x", 0, 3)
        values = [
            psi.expectation(evolve(a, fam, theta, t).matrix) for t in (0.0, 0.7, 2.9)
        ]
        assert float(np.ptp(values)) <= 1e-10

    def test_dimension_mismatch(self):
        fam = ising(3)
        with pytest.raises(UsageError):
            evolve(TestOperator(PAULI_X, "sx"), fam, [1.0, 0.0], 0.5)

    def test_non_finite_time(self):
        fam = single_site_sz_family()
        with pytest.raises(UsageError):
            evolve(TestOperator(PAULI_X, "sx"), fam, [1.0], math.inf)


class TestPointwiseResidual:
    def test_identity_pair(self):
        fam = ising(3)
        eye = TestOperator(np.eye(8), "1")
        assert kms_residual(fam, [1.0, 0.2], eye, eye, 1.3) <= 1e-14

    def test_single_site_sigma_x(self):
        fam = single_site_sz_family()
        a = TestOperator(PAULI_X, "sx")
        assert kms_residual(fam, [1.0], a, a, 0.7) <= 1e-12

    def test_diagonal_pair_any_time(self):
        fam = ising(3)
        a = site_pauli("z", 0, 3)
        b = site_pauli("z", 2, 3)
        for t in (0.0, 1.0, 8.5):
            assert kms_residual(fam, [1.5, -0.2], a, b, t) <= 1e-12

    def test_two_level_against_hand_formula(self):
        # omega(alpha_t(sx) sx) = (p0 e^{2it} + p1 e^{-2it}) for theta.Q = sz
        fam = single_site_sz_family()
        theta, t = 0.8, 1.1
        z = math.exp(-theta) + math.exp(theta)
        p0, p1 = math.exp(-theta) / z, math.exp(theta) / z
        lhs = p0 * np.exp(2j * t) + p1 * np.exp(-2j * t)
        rhs = p1 * np.exp(2j * t) * math.exp(2 * theta) * p0 / p1 * math.exp(-2 * theta) \
            + p0 * np.exp(-2j * t) * math.exp(-2 * theta) * p1 / p0 * math.exp(2 * theta)
        assert_allclose(lhs, rhs, atol=1e-12)  # sanity of the hand algebra
        a = TestOperator(PAULI_X, "sx")
        assert kms_residual(fam, [theta], a, a, t) <= 1e-13

    def test_random_pairs_all_models(self):
        rng = np.random.default_rng(11)
        specs = [
            ModelSpec("free_spins"),
            ModelSpec("ising_chain", J=1.0, h=0.3),
            ModelSpec("curie_weiss", J=1.0, h=0.1),
        ]
        for spec in specs:
            fam = build_model(spec, spec.region(4))
            theta = [0.9] + [0.2] * (fam.n_observables - 1)
            for _ in range(5):
                a = random_hermitian(fam.dim, rng)
                b = random_hermitian(fam.dim, rng)
                t = float(rng.uniform(-5, 5))
                assert kms_residual(fam, theta, a, b, t) <= 1e-9

    def test_strong_coupling_guarded(self):
        fam = ising(3)
        a = site_pauli("x", 0, 3)
        res = kms_residual(fam, [5.0, 0.0], a, a, 2.0)
        assert math.isfinite(res)
        assert res <= 1e-9

    def test_dimension_cap(self):
        spec = ModelSpec("free_spins")
        fam = build_model(spec, spec.region(11))  # dim 2048 over the residual cap
        eye = TestOperator(np.eye(fam.dim), "1")
        with pytest.raises(ResourceError):
            kms_residual(fam, [1.0], eye, eye, 0.0)


class TestSmearedResidual:
    def test_identity_pair_gaussian(self):
        fam = ising(3)
        eye = TestOperator(np.eye(8), "1")
        res = kms_smeared_residual(fam, [1.0, 0.0], eye, eye, GaussianTestFunction(2.0))
        assert res <= 1e-10

    def test_single_site_sigma_x(self):
        fam = single_site_sz_family()
        a = TestOperator(PAULI_X, "sx")
        res = kms_smeared_residual(fam, [1.0], a, a, GaussianTestFunction(2.0))
        assert res <= 1e-7

    def test_vanishing_window_is_zero(self):
        fam = single_site_sz_family()
        a = TestOperator(PAULI_X, "sx")
        res = kms_smeared_residual(fam, [1.0], a, a, GaussianTestFunction(2.0),
                                   t_range=1e-12)
        assert res <= 1e-12

    def test_under_resolved_quadrature_detected(self):
        fam = ising(4, j=1.0, h=0.5)
        a = site_pauli("x", 0, 4)
        with pytest.raises(QuadratureError):
            kms_smeared_residual(fam, [2.0, 0.0], a, a, GaussianTestFunction(2.0),
                                 step=1.9)

    def test_gaussian_validation(self):
        with pytest.raises(UsageError):
            GaussianTestFunction(0.0)


class TestThetaDiscrimination:
    def test_equal_controls_score_zero(self):
        fam = ising(3)
        probes = default_probes(fam, seed=1, times=[0.5, 1.5])
        report = kms_theta_discrimination(fam, [1.0, 0.1], [1.0, 0.1], probes)
        assert report.max_score <= 1e-12
        assert not report.distinguishable

    def test_single_site_doubling_frozen_value(self):
        fam = single_site_sz_family()
        probe = [(TestOperator(PAULI_X, "sx"), TestOperator(PAULI_X, "sx"), 1.0)]
        report = kms_theta_discrimination(fam, [1.0], [2.0], probe)
        expected = abs(
            (math.cos(2) - math.cos(4)) + 1j * (math.sin(2) - math.sin(4))
        )
        assert_allclose(report.max_score, expected, atol=1e-12)
        assert report.max_score > 0.5
        assert report.distinguishable

    def test_identity_component_generates_nothing(self):
        region = Region("single_sites", 2)
        number = np.array([0.0, 1.0, 1.0, 2.0])
        fam = ObservableFamily(region, ("number", "unit"),
                               diagonals=[number, np.ones(4)])
        probes = default_probes(fam, seed=3, times=[1.0, 2.0])
        report = kms_theta_discrimination(fam, [1.0, 0.0], [1.0, 2.5], probes)
        assert report.max_score <= 1e-10
        assert not report.distinguishable

    def test_empty_probe_set_rejected(self):
        fam = ising(3)
        with pytest.raises(UsageError):
            kms_theta_discrimination(fam, [1.0, 0.0], [2.0, 0.0], [])


def test_default_probes_deterministic():
    fam = ising(3)
    first = default_probes(fam, seed=9, times=[0.5])
    second = default_probes(fam, seed=9, times=[0.5])
    for (a1, b1, t1), (a2, b2, t2) in zip(first, second):
        assert np.array_equal(a1.matrix, a2.matrix)
        assert np.array_equal(b1.matrix, b2.matrix)
        assert t1 == t2
    assert any("random#9" in a.label for a, _, _ in first)


def test_test_operator_validation():
    with pytest.raises(UsageError):
        TestOperator(np.ones((2, 3)), "bad")
    with pytest.raises(UsageError):
        TestOperator(np.array([[np.nan, 0], [0, 1]]), "bad")
