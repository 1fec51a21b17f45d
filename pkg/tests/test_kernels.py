"""Tests for CND detection, the Hilbert embedding, and the norm integrals.

Oracle notes:
- squared Euclidean distance is the classical conditionally-negative kernel;
- the integral identity's spot value pi*sqrt(2) comes from the closed form
  of integral_0^inf sqrt(y)/(1+y^2) dy = pi/sqrt(2);
- the smoothing family (1 - F_eps)/eps is checked against an independent
  high-accuracy quadrature of its defining convolution.
"""
import math

import numpy as np
import pytest

from mobius_lab.heisenberg import heis_distance_matrix, heis_inv, heis_mul, heis_norm, sample_heis_points
from mobius_lab.kernels import (
    KernelMatrix,
    check_cnd,
    cnd_limit_check,
    f_eps,
    gns_embed,
    integral_identity,
    norm_integral_closed_form,
    one_minus_f_over_eps,
)


class TestCheckCnd:
    def test_two_points_always_cnd(self):
        K = np.array([[0.0, 3.7], [3.7, 0.0]])
        assert check_cnd(K).is_cnd

    def test_squared_euclidean_is_cnd(self):
        rng = np.random.default_rng(0)
        xs = rng.uniform(-5, 5, size=10)
        K = (xs[:, None] - xs[None, :]) ** 2
        report = check_cnd(K)
        assert report.is_cnd
        assert report.max_centered_eigenvalue <= report.threshold

    def test_heisenberg_distance_is_cnd(self):
        pts = sample_heis_points(30, 1, seed=4)
        report = check_cnd(heis_distance_matrix(pts))
        assert report.is_cnd

    def test_euclidean_distance_on_plane_not_plainly_psd_logic(self):
        # a kernel that is NOT conditionally negative: minus squared distance
        rng = np.random.default_rng(1)
        xs = rng.uniform(-2, 2, size=8)
        K = -((xs[:, None] - xs[None, :]) ** 2)
        assert not check_cnd(K).is_cnd

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            check_cnd(np.array([[0.0, 1.0], [2.0, 0.0]]))

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            check_cnd(np.array([[1.0, 2.0], [2.0, 0.0]]))


class TestGnsEmbed:
    def test_two_point_embedding(self):
        K = np.array([[0.0, 4.0], [4.0, 0.0]])
        emb = gns_embed(K)
        dists = np.sqrt(emb.pairwise_sq_dists())
        assert dists[0, 1] == pytest.approx(2.0)
        assert np.allclose(emb.coordinates[0], 0.0)

    def test_collinear_configuration_recovered(self):
        xs = np.array([0.0, 1.0, 3.0])
        K = (xs[:, None] - xs[None, :]) ** 2
        emb = gns_embed(K)
        dists = np.sqrt(emb.pairwise_sq_dists())
        assert np.abs(dists - np.abs(xs[:, None] - xs[None, :])).max() <= 1e-10

    def test_reconstruction_error_small_for_heisenberg(self):
        K = heis_distance_matrix(sample_heis_points(25, 2, seed=6))
        emb = gns_embed(K)
        assert emb.reconstruction_error <= 1e-8

    def test_embedding_halves_cross_ratio_exponent(self):
        # the embedded metric is sqrt(d_N); cross ratios follow a square root law
        pts = sample_heis_points(18, 1, seed=8)
        K = heis_distance_matrix(pts)
        emb = gns_embed(K)
        D_emb = np.sqrt(emb.pairwise_sq_dists())
        rng = np.random.default_rng(3)
        for _ in range(300):
            i, j, k, l = rng.choice(len(pts), 4, replace=False)
            s = (K[i, k] * K[j, l]) / (K[i, l] * K[j, k])
            t = (D_emb[i, k] * D_emb[j, l]) / (D_emb[i, l] * D_emb[j, k])
            assert t == pytest.approx(math.sqrt(s), rel=1e-10)

    def test_rejects_non_cnd_kernel(self):
        rng = np.random.default_rng(2)
        xs = rng.uniform(-2, 2, size=6)
        K = -((xs[:, None] - xs[None, :]) ** 2)
        with pytest.raises(ValueError, match="negative type"):
            gns_embed(K)


class TestIntegralIdentity:
    def test_spot_value_at_one_zero(self):
        report = integral_identity(1.0, 0.0)
        assert report.rhs == pytest.approx(math.pi * math.sqrt(2.0), rel=1e-12)
        assert report.lhs == pytest.approx(math.pi * math.sqrt(2.0), rel=1e-9)
        assert report.rel_error <= 1e-6

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("t", [0.0, 1.0, 5.0])
    def test_identity_grid(self, r, t):
        assert integral_identity(r, t).rel_error <= 1e-6

    def test_scale_covariance(self):
        # the substitution x = r^2 y collapses (r, t) onto (1, t/r^2)
        r, t = 1.7, 3.3
        full = integral_identity(r, t)
        unit = integral_identity(1.0, t / r**2)
        assert full.rhs == pytest.approx(r * unit.rhs, rel=1e-12)
        assert full.lhs == pytest.approx(r * unit.lhs, rel=1e-9)

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            integral_identity(1.0, 0.0, quadrature_budget=10)
        with pytest.raises(ValueError):
            integral_identity(-1.0, 0.0)


class TestCndLimit:
    def test_values_increase_toward_target(self):
        report = cnd_limit_check(1.0, 0.0, [0.1, 0.05, 0.01])
        assert report.target == pytest.approx(math.sqrt(2.0), rel=1e-12)
        assert report.values[0] < report.values[1] < report.values[2] < report.target

    def test_limit_estimate_beats_last_value(self):
        report = cnd_limit_check(1.0, 0.0, [0.05, 0.01])
        assert abs(report.limit_estimate - report.target) < abs(
            report.values[-1] - report.target
        )

    def test_f_eps_vanishes_at_large_center(self):
        # Cauchy tails: F_eps -> 0 as t grows
        small = f_eps(1.0, 1e4, 0.05)
        smaller = f_eps(1.0, 1e6, 0.05)
        assert small < 1e-2
        assert smaller < small

    def test_smoothed_family_is_cnd_on_group_sample(self):
        # kernel Psi_eps(h^{-1} g) built from the smoothing family must have a
        # negative semidefinite centered Gram (it is conditionally negative)
        eps = 0.05
        pts = sample_heis_points(10, 1, seed=13)
        n = len(pts)
        K = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                diff = heis_mul(heis_inv(pts[j]), pts[i])
                a_norm = heis_norm(diff, "horizontal")
                if a_norm == 0.0:
                    # central difference: the Cauchy scale degenerates to a delta
                    val = (1.0 - math.exp(-eps * math.sqrt(abs(diff.t)))) / eps
                else:
                    val = one_minus_f_over_eps(a_norm, diff.t, eps)
                K[i, j] = K[j, i] = val
        report = check_cnd(K)
        assert report.is_cnd

    def test_validates_eps_sequence(self):
        with pytest.raises(ValueError):
            cnd_limit_check(1.0, 0.0, [0.01, 0.05])
        with pytest.raises(ValueError):
            cnd_limit_check(1.0, 0.0, [0.1, -0.01])


class TestKernelMatrix:
    def test_hermitian_flag(self):
        values = np.array([[1.0, 1j], [-1j, 1.0]])
        assert KernelMatrix(values).hermitian
        assert not KernelMatrix(np.array([[1.0, 1j], [1j, 1.0]])).hermitian

    def test_closed_form_monotone_in_r(self):
        assert norm_integral_closed_form(2.0, 1.0) > norm_integral_closed_form(1.0, 1.0)
