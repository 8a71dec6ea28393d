"""Prior sampling: ball membership, bounds, projections, reproducibility."""

import numpy as np
import pytest
from scipy import stats

from icl_lab import priors as pr
from icl_lab import wavelets as wv
from icl_lab.errors import DomainError
from icl_lab.seeding import child_rng


def besov(alpha=0.5, C0=1.0, lmax=5):
    return pr.BesovPriorSpec(alpha, C0, lmax)


class TestSampleBesov:
    def test_raw_coefficients_bounded(self):
        spec = besov()
        rng = child_rng(0, 1)
        for _ in range(100):
            f = pr.sample_besov(spec, rng)
            assert np.all(np.abs(f.tree.fathers) <= 1.0)
            for arr in f.tree.mothers.values():
                assert np.all(np.abs(arr) <= 1.0)

    def test_besov_ball_membership(self):
        # scaled tree norm <= 2 C0 for every draw
        for alpha, C0 in [(0.3, 1.0), (0.7, 2.0)]:
            spec = besov(alpha, C0)
            rng = child_rng(1, 2)
            for _ in range(100):
                f = pr.sample_besov(spec, rng)
                scaled = wv.CoefficientTree.zeros(spec.basis, spec.max_level)
                scaled.fathers = C0 * f.tree.fathers
                for l in f.tree.mothers:
                    scaled.mothers[l] = C0 * 2.0 ** (-l * (alpha + 0.5)) * f.tree.mothers[l]
                assert wv.besov_sup_norm(scaled, alpha, spec.basis) <= 2 * C0 + 1e-12

    def test_symmetric_law_mean(self):
        spec = besov()
        rng = child_rng(2, 3)
        vals = np.array([pr.eval_function(pr.sample_besov(spec, rng), 0.5)
                         for _ in range(10_000)])
        assert abs(vals.mean()) <= 4 * vals.std(ddof=1) / np.sqrt(len(vals))

    def test_reproducible(self):
        spec = besov()
        f1 = pr.sample_besov(spec, child_rng(7, 1))
        f2 = pr.sample_besov(spec, child_rng(7, 1))
        assert np.array_equal(f1.tree.fathers, f2.tree.fathers)
        for l in f1.tree.mothers:
            assert np.array_equal(f1.tree.mothers[l], f2.tree.mothers[l])

    def test_boundedness_constant(self):
        spec = besov(0.5, 1.0, 6)
        bound = pr.sup_norm_bound(spec)
        rng = child_rng(3, 1)
        grid = np.linspace(0, 1, 1024).reshape(-1, 1)
        for _ in range(50):
            f = pr.sample_besov(spec, rng)
            assert np.abs(pr.eval_function_many(f, grid)).max() <= bound


class TestTailBound:
    def test_vanishes_in_the_limit(self):
        vals = [pr.truncation_tail_bound(besov(0.5, 1.0, L)) for L in (4, 8, 16)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-2

    def test_monotone_in_alpha(self):
        assert pr.truncation_tail_bound(besov(1.0 - 1e-9, 1.0, 6)) < \
            pr.truncation_tail_bound(besov(0.5, 1.0, 6))

    def test_closed_geometric_sum(self):
        # Haar d=1, C0=1, alpha=0.5, L=6: C' = 1, tail = 2^{-3.5}/(1 - 2^{-0.5})
        got = pr.truncation_tail_bound(besov(0.5, 1.0, 6))
        # independent oracle: partial geometric sum taken far past convergence
        expect = sum(2.0 ** (-0.5 * l) for l in range(7, 500))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_choose_truncation_level(self):
        L = pr.choose_truncation_level(0.7, 1.0, 0.25)
        assert pr.truncation_tail_bound(besov(0.7, 1.0, L)).real <= 0.025 + 1e-12
        # slow tails hit the cap
        assert pr.choose_truncation_level(0.3, 1.0, 0.25, cap=10) == 10


class TestStiefel:
    def test_orthonormal_columns(self):
        rng = child_rng(4, 1)
        for d, p in [(3, 1), (4, 2), (2, 2), (5, 5)]:
            U = pr.sample_stiefel(d, p, rng)
            assert np.abs(U.T @ U - np.eye(p)).max() < 1e-10
            assert np.abs(np.linalg.norm(U, axis=0) - 1).max() < 1e-10

    def test_square_case_is_orthogonal(self):
        U = pr.sample_stiefel(2, 2, child_rng(5, 1))
        assert abs(abs(np.linalg.det(U)) - 1) < 1e-8

    def test_rotation_invariance(self):
        # entries of QU and U should match in distribution (uniform law)
        rng = child_rng(6, 1)
        theta = 0.7
        Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        a = np.array([pr.sample_stiefel(2, 1, rng)[0, 0] for _ in range(10_000)])
        b = np.array([(Q @ pr.sample_stiefel(2, 1, rng))[0, 0] for _ in range(10_000)])
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            pr.sample_stiefel(2, 3, child_rng(0, 0))


class TestMultiIndex:
    def spec(self, d=3, p=1):
        return pr.MultiIndexPriorSpec(pr.BesovPriorSpec(0.5, 1.0, 4,
                                                        wv.WaveletSpec("haar", 0, 0, p)), d)

    def test_identity_projection_hook(self):
        mspec = self.spec(d=2, p=2)
        g = pr.sample_multi_index(mspec, child_rng(8, 1),
                                  projection_override=np.eye(2))
        base = pr.RandomFunction(mspec.base, g.tree)
        x = np.array([0.2, -0.4])
        assert pr.eval_function(g, x) == pytest.approx(
            pr.eval_function(base, (x + 1) / 2), abs=1e-12)

    def test_projected_argument_in_cube(self):
        mspec = self.spec()
        rng = child_rng(9, 1)
        g = pr.sample_multi_index(mspec, rng)
        pts = rng.standard_normal((100, 3))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1.0)
        z = (pts @ g.projection + 1.0) / 2.0
        assert np.all(z >= 0.0) and np.all(z <= 1.0)

    def test_sup_bounded_by_base(self):
        mspec = self.spec()
        rng = child_rng(10, 1)
        g = pr.sample_multi_index(mspec, rng)
        pts = rng.standard_normal((1000, 3))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1.0)
        vals = pr.eval_function_many(g, pts)
        base = pr.RandomFunction(mspec.base, g.tree)
        base_sup = np.abs(pr.eval_function_many(
            base, np.linspace(0, 1, 4097).reshape(-1, 1))).max()
        assert np.abs(vals).max() <= base_sup + 1e-12

    def test_domain_error_outside_ball(self):
        g = pr.sample_multi_index(self.spec(), child_rng(11, 1))
        with pytest.raises(DomainError):
            pr.eval_function(g, np.array([1.0, 1.0, 1.0]))


class TestMixture:
    def mix(self):
        return pr.MixtureSpec((("a", besov(0.3)), ("b", besov(0.7))), (0.5, 0.5))

    def test_single_component_label(self):
        single = pr.MixtureSpec((("only", besov()),), (1.0,))
        rng = child_rng(12, 1)
        assert all(pr.sample_mixture(single, rng)[0] == "only" for _ in range(20))

    def test_balanced_frequencies(self):
        rng = child_rng(13, 1)
        labels = [pr.sample_mixture(self.mix(), rng)[0] for _ in range(10_000)]
        freq = labels.count("a") / len(labels)
        assert abs(freq - 0.5) < 0.02

    def test_component_invariants_delegate(self):
        rng = child_rng(14, 1)
        label, f = pr.sample_mixture(self.mix(), rng)
        assert label in ("a", "b")
        assert np.all(np.abs(f.tree.fathers) <= 1.0)

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            pr.MixtureSpec((("a", besov()),), (0.9,))
        with pytest.raises(ValueError):
            pr.MixtureSpec((("a", besov()), ("b", besov(0.7))), (1.0, -0.1))


class TestTiltedLaw:
    def test_tilted_mean(self):
        eps = 0.8
        rng = child_rng(15, 1)
        draws = pr.sample_tilted(rng, eps, 20_000)
        assert np.all(np.abs(draws) <= 1.0)
        se = draws.std(ddof=1) / np.sqrt(len(draws))
        assert abs(draws.mean() - eps / 3) <= 4 * se

    def test_tilted_spec_changes_only_keys(self):
        spec = besov(0.5, 1.0, 3)
        key = ("mother", 0, (0,), (1,))
        tilted = pr.tilt_spec(spec, ((key, 0.9),))
        rng = child_rng(16, 1)
        vals = np.array([pr.sample_besov(tilted, rng).tree.mother(0, (0,), (1,))
                         for _ in range(5000)])
        se = vals.std(ddof=1) / np.sqrt(len(vals))
        assert abs(vals.mean() - 0.3) <= 4 * se

    def test_density_ratio(self):
        spec = besov(0.5, 1.0, 3)
        key = ("mother", 1, (1,), (1,))
        tilted = pr.tilt_spec(spec, ((key, 0.5),))
        f = pr.sample_besov(tilted, child_rng(17, 1))
        ratio = pr.density_ratio(tilted, f)
        assert ratio == pytest.approx(1 + 0.5 * f.tree.mother(1, (1,), (1,)))
        assert ratio > 0

    def test_c0_reflects_tilt(self):
        law = pr.CoefficientLaw(((("father", (0,)), 0.4),))
        assert law.c0 == pytest.approx(0.6)
        assert law.kind == "tilted"


class TestFunctionBatch:
    def test_batch_matches_single(self):
        mix = pr.MixtureSpec((("a", besov(0.3)), ("b", besov(0.7, 1.0, 4))), (0.5, 0.5))
        batch = pr.sample_function_batch(mix, 64, child_rng(18, 1))
        xs = np.linspace(0, 1, 33).reshape(-1, 1)
        direct = batch.values_at(xs)
        for m in (0, 7, 63):
            _, f = batch.function_at(m)
            single = pr.eval_function_many(f, xs)
            np.testing.assert_allclose(direct[m], single, atol=1e-12)

    def test_multi_index_batch(self):
        mspec = pr.MultiIndexPriorSpec(
            pr.BesovPriorSpec(0.5, 1.0, 4, wv.WaveletSpec("haar", 0, 0, 1)), 3)
        batch = pr.sample_function_batch(mspec, 16, child_rng(19, 1))
        rng = child_rng(20, 1)
        pts = rng.standard_normal((10, 3))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1.0)
        direct = batch.values_at(pts)
        for m in (0, 5, 15):
            _, f = batch.function_at(m)
            np.testing.assert_allclose(direct[m], pr.eval_function_many(f, pts),
                                       atol=1e-12)
        assert batch.cell_tables() is None

    def test_serialization_round_trip(self):
        mspec = pr.MultiIndexPriorSpec(
            pr.BesovPriorSpec(0.5, 1.0, 3, wv.WaveletSpec("haar", 0, 0, 1)), 3)
        g = pr.sample_multi_index(mspec, child_rng(21, 1))
        g2 = pr.function_from_json(pr.function_to_json(g))
        rng = child_rng(22, 1)
        pts = rng.standard_normal((20, 3))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1.0)
        np.testing.assert_array_equal(pr.eval_function_many(g, pts),
                                      pr.eval_function_many(g2, pts))
