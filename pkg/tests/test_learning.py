"""Likelihood ascent, moment matching, and the homogeneous-surface search."""

import math

import numpy as np
import pytest

from bethelearn import (
    InputError,
    LearnOptions,
    MinimalMarginals,
    PolytopeError,
    ThetaGrid,
    bethe_entropy,
    bethe_free_energy,
    bethe_likelihood,
    canonical_parameters,
    figure1_search,
    homogeneous_grid_argmax,
    homogeneous_marginals,
    homogeneous_region_grid,
    homogeneous_surface,
    hull_distance,
    learn_subgradient,
    moment_matching_check,
    multi_restart_bp,
    torus,
    zero_potentials,
)
from bethelearn.learning import homogeneous_free_energy, homogeneous_potentials
from conftest import random_interior_marginals, random_tree


class TestBetheLikelihood:
    def test_canonical_value_on_tree(self, rng):
        """On a tree the canonical parameters are the exact ML fit, where the
        likelihood equals minus the entropy of the target."""
        g = random_tree(6, rng)
        mu = random_interior_marginals(g, rng)
        lik = bethe_likelihood(canonical_parameters(mu, g), mu, g)
        assert lik == pytest.approx(-bethe_entropy(mu, g), abs=1e-8)

    def test_canonical_beats_zero_on_tree(self, rng):
        g = random_tree(6, rng)
        mu = random_interior_marginals(g, rng)
        best = bethe_likelihood(canonical_parameters(mu, g), mu, g)
        assert best > bethe_likelihood(zero_potentials(g), mu, g)


class TestLearnSubgradient:
    def test_tree_matches_immediately(self, rng):
        g = random_tree(7, rng)
        mu = random_interior_marginals(g, rng)
        trace = learn_subgradient(mu, g)
        assert trace.status == "matched"
        assert len(trace.records) == 1
        assert trace.final_residual < 1e-8

    def test_learnable_torus_point_matches(self, torus33):
        mu = homogeneous_marginals(torus33, 0.5, 0.3)
        trace = learn_subgradient(mu, torus33)
        assert trace.status == "matched"
        assert trace.final_residual <= 0.01

    def test_unlearnable_point_fails_to_match(self, torus33):
        mu = homogeneous_marginals(torus33, 0.5, 0.45)
        trace = learn_subgradient(mu, torus33, LearnOptions(max_iter=30))
        assert trace.status != "matched"
        assert trace.final_residual > 0.5

    def test_records_shape(self, torus33):
        mu = homogeneous_marginals(torus33, 0.5, 0.45)
        trace = learn_subgradient(mu, torus33, LearnOptions(max_iter=5))
        assert [r[0] for r in trace.records] == [0, 1, 2, 3, 4]
        assert all(len(r) == 3 for r in trace.records)

    def test_precomputed_start_is_equivalent(self, torus33):
        """Supplying the iteration-zero BP result must not change the trace."""
        mu = homogeneous_marginals(torus33, 0.55, 0.42)
        opts = LearnOptions(max_iter=10)
        plain = learn_subgradient(mu, torus33, opts)
        mr = multi_restart_bp(
            canonical_parameters(mu, torus33),
            torus33,
            n_restarts=opts.n_restarts,
            seed=opts.seed,
            opts=opts.bp_opts,
        )
        seeded = learn_subgradient(mu, torus33, opts, initial_bp=mr)
        assert seeded.status == plain.status
        assert seeded.records == plain.records
        np.testing.assert_array_equal(
            seeded.final_theta.theta_node, plain.final_theta.theta_node
        )
        np.testing.assert_array_equal(
            seeded.final_theta.theta_edge, plain.final_theta.theta_edge
        )

    def test_boundary_target_rejected(self, torus33):
        # (0.5, 0.5) sits on the polytope boundary, so interiority fails
        mu = homogeneous_marginals(torus33, 0.5, 0.5)
        with pytest.raises(InputError):
            learn_subgradient(mu, torus33)

    def test_options_validated(self):
        with pytest.raises(InputError, match="schedule"):
            LearnOptions(schedule="linear")
        with pytest.raises(InputError, match="step0"):
            LearnOptions(step0=0.0)
        with pytest.raises(InputError, match="max_iter"):
            LearnOptions(max_iter=0)


class TestMomentMatching:
    def test_residual_against_uniform_beliefs(self, torus33):
        """At zero potentials BP sits at the uniform point (0.5, 0.25), so the
        residual to a (0.6, 0.4) target is the 0.15 gap in the (1,1) entry."""
        chk = moment_matching_check(
            zero_potentials(torus33), homogeneous_marginals(torus33, 0.6, 0.4), torus33
        )
        assert not chk.matched
        assert chk.residual == pytest.approx(0.15, abs=1e-8)
        assert chk.top_multiplicity == 1

    def test_tie_blocks_match(self, torus33):
        """Past the curvature threshold two magnetized fixed points tie for the
        best free energy, so matching fails even before the residual."""
        mu = homogeneous_marginals(torus33, 0.5, 0.45)
        chk = moment_matching_check(canonical_parameters(mu, torus33), mu, torus33)
        assert not chk.matched
        assert chk.top_multiplicity == 2
        assert chk.residual > 0.5

    def test_tree_canonical_matches(self, rng):
        g = random_tree(6, rng)
        mu = random_interior_marginals(g, rng)
        chk = moment_matching_check(canonical_parameters(mu, g), mu, g)
        assert chk.matched
        assert chk.residual < 1e-8
        assert chk.top_multiplicity == 1


class TestHomogeneousSurface:
    def test_grid_covers_region(self):
        mv_vals, mv, me, starts = homogeneous_region_grid(0.05)
        assert len(mv) == 121
        assert len(mv_vals) == len(starts) == 21
        assert np.all(me <= mv + 1e-12)
        assert np.all(me >= 2.0 * mv - 1.0 - 1e-12)
        # groups are contiguous runs of constant mu_v
        np.testing.assert_allclose(mv[starts], mv_vals)

    def test_resolution_validated(self):
        with pytest.raises(InputError):
            homogeneous_region_grid(0.0)
        with pytest.raises(InputError):
            homogeneous_region_grid(0.2)

    def test_vectorized_free_energy_matches_pointwise(self, torus33):
        for mv, me in [(0.5, 0.3), (0.4, 0.2), (0.62, 0.41)]:
            vec = float(
                homogeneous_free_energy(
                    torus33, 0.3, 0.7, np.array([mv]), np.array([me])
                )[0]
            )
            point = bethe_free_energy(
                homogeneous_marginals(torus33, mv, me),
                homogeneous_potentials(torus33, 0.3, 0.7),
                torus33,
            )
            assert vec == pytest.approx(point, abs=1e-12)

    def test_surface_shape(self, torus33):
        mv, me, F = homogeneous_surface(torus33, 0.0, 0.0, 0.05)
        assert mv.shape == me.shape == F.shape == (121,)
        assert np.all(np.isfinite(F))


class TestGridArgmax:
    def test_entropy_peaks_at_independence(self, torus33):
        top = homogeneous_grid_argmax((0.0, 0.0), torus33, 0.01)
        assert top[0][:2] == (0.5, 0.25)
        # the value at zero potentials is the entropy of the uniform point
        assert top[0][2] == pytest.approx(
            bethe_entropy(homogeneous_marginals(torus33, 0.5, 0.25), torus33), abs=1e-9
        )

    def test_positive_field_shifts_peak_up(self, torus33):
        top = homogeneous_grid_argmax((0.3, 0.2), torus33, 0.01)
        mv, me, _ = top[0]
        assert mv > 0.5
        assert me > mv * mv  # positively correlated

    def test_sorted_descending(self, torus33):
        top = homogeneous_grid_argmax((0.3, 0.2), torus33, 0.01)
        fs = [t[2] for t in top]
        assert fs == sorted(fs, reverse=True)


class TestHullDistance:
    def test_inside_triangle_is_zero(self):
        tri = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        assert hull_distance(tri, (0.2, 0.2)) == 0.0

    def test_outside_triangle(self):
        tri = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        assert hull_distance(tri, (2.0, 0.0)) == pytest.approx(1.0)

    def test_single_point(self):
        assert hull_distance([(1.0, 1.0)], (4.0, 5.0)) == pytest.approx(5.0)

    def test_segment(self):
        seg = [(0.0, 0.0), (1.0, 0.0)]
        assert hull_distance(seg, (0.5, 1.0)) == pytest.approx(1.0)
        assert hull_distance(seg, (2.0, 0.0)) == pytest.approx(1.0)

    def test_duplicates_collapse(self):
        pts = [(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]
        assert hull_distance(pts, (0.5, 0.5)) == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            hull_distance([], (0.0, 0.0))


COARSE_GRID = ThetaGrid(h_min=-0.5, h_max=0.5, j_min=0.0, j_max=1.0, resolution=0.05)


class TestFigure1Search:
    def test_unlearnable_target_straddled(self, torus33):
        r = figure1_search((0.5, 0.40), torus33, theta_grid=COARSE_GRID,
                           mu_resolution=0.01)
        assert len(r.maximizers) >= 2
        assert r.hull_contains_mu
        assert r.hull_dist <= 0.02
        assert r.f_max - r.f_at_mu > 0.5
        # mirrored pair around mu_v = 0.5
        mvs = sorted(p[0] for p in r.maximizers)
        assert mvs[0] + mvs[-1] == pytest.approx(1.0, abs=1e-9)

    def test_learnable_target_is_its_own_maximizer(self, torus33):
        r = figure1_search((0.5, 0.30), torus33, theta_grid=COARSE_GRID,
                           mu_resolution=0.01)
        assert len(r.maximizers) == 1
        assert r.maximizers[0][:2] == (0.5, 0.3)
        assert r.hull_dist == 0.0
        assert r.f_max == pytest.approx(r.f_at_mu, abs=1e-12)

    def test_minimal_marginals_input(self, torus33):
        a = figure1_search((0.5, 0.30), torus33, theta_grid=COARSE_GRID,
                           mu_resolution=0.01)
        b = figure1_search(homogeneous_marginals(torus33, 0.5, 0.30), torus33,
                           theta_grid=COARSE_GRID, mu_resolution=0.01)
        assert a.theta_b == b.theta_b
        assert a.maximizers == b.maximizers

    def test_non_homogeneous_input_rejected(self, torus33, rng):
        mu = random_interior_marginals(torus33, rng)
        with pytest.raises(InputError, match="homogeneous"):
            figure1_search(mu, torus33)

    def test_boundary_target_rejected(self, torus33):
        with pytest.raises(PolytopeError):
            figure1_search((0.5, 0.5), torus33, theta_grid=COARSE_GRID,
                           mu_resolution=0.01)

    def test_surface_carried_in_result(self, torus33):
        r = figure1_search((0.5, 0.30), torus33, theta_grid=COARSE_GRID,
                           mu_resolution=0.01)
        mv, me, F = r.surface
        assert mv.shape == me.shape == F.shape
        assert F.max() == pytest.approx(r.f_max)
