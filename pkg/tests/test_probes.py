import numpy as np
import pytest

from mralab.gensig import (DiluteClassSpec, gen_collision_free,
                           gen_symm_bernoulli_gaussian, gen_symm_interval)
from mralab.probes import (FrequencySet, GoodSetParams,
                           LambdaConstructionError, adversarial_direction,
                           dilute_lower_bound_check, good_set_report,
                           lambda_construct, moderate_curvature_check,
                           moment_sandwich_probe, spectral_floor,
                           support_restricted_min_ratio, uup_check, uup_sample)
from mralab.ring import Signal, std_offset
from mralab.spectral import (delta_m, dft, second_moment_difference_expansion)


class TestDiluteLowerBound:
    SPEC = DiluteClassSpec(L=101, s=8, m=1.0, M=1.5, eps=1.0)

    def test_passes_on_class_member(self):
        rng = np.random.default_rng(0)
        theta0 = gen_collision_free(self.SPEC, rng)
        rep = dilute_lower_bound_check(theta0, self.SPEC, 300, rng)
        assert rep["passes"]
        assert rep["min_ratio"] >= rep["bound"] * 0.95

    def test_single_coordinate_direction(self):
        rng = np.random.default_rng(1)
        theta0 = gen_collision_free(self.SPEC, rng)
        off = std_offset(101)
        i = sorted(theta0.support)[0]
        h = np.zeros(101)
        h[(i + off) % 101] = 1e-3
        theta = Signal(theta0.values + h)
        ratio = (delta_m(theta, theta0, 2).frobenius()
                 / (np.sqrt(self.SPEC.s / 101) * 1e-3))
        assert ratio >= self.SPEC.curvature_constant() * 0.95

    def test_exact_minimum_respects_bound(self):
        rng = np.random.default_rng(2)
        theta0 = gen_collision_free(self.SPEC, rng)
        exact = support_restricted_min_ratio(theta0, self.SPEC.s)
        assert exact >= self.SPEC.curvature_constant() * 0.95

    def test_colliding_support_violates_bound(self):
        # an interval support repeats every short difference; the curvature
        # floor collapses along a direction in its span
        v = np.zeros(101)
        v[:5] = 1.0
        exact = support_restricted_min_ratio(Signal.from_natural(v), 5)
        spec = DiluteClassSpec(L=101, s=5, m=1.0, M=1.0, eps=1.0)
        assert exact < spec.curvature_constant() * 0.5

    def test_class_check_enforced(self):
        rng = np.random.default_rng(3)
        bad = Signal.from_natural(np.concatenate([np.ones(5), np.zeros(96)]))
        with pytest.raises(ValueError):
            dilute_lower_bound_check(bad, self.SPEC, 10, rng)


class TestAdversarialDirection:
    def test_mean_zero(self):
        rng = np.random.default_rng(4)
        for L in (8, 17, 64):
            theta0 = Signal(np.abs(rng.normal(size=L)) + 0.5)
            h = adversarial_direction(theta0, 1e-3)
            assert abs(h.mean()) < 1e-15

    def test_linear_term_cancels(self):
        rng = np.random.default_rng(5)
        for L in (8, 17, 64):
            for _ in range(10):
                theta0 = Signal(rng.normal(size=L))
                h = adversarial_direction(theta0, 1e-3)
                lin, _ = second_moment_difference_expansion(theta0, h)
                scale = np.sqrt(L) * theta0.norm() * h.norm()
                assert np.linalg.norm(lin) <= 1e-8 * scale

    def test_quadratic_bound(self):
        rng = np.random.default_rng(6)
        for L in (8, 17):
            theta0 = Signal(rng.normal(size=L))
            h = adversarial_direction(theta0, 1e-2)
            theta = Signal(theta0.values + h.values)
            assert delta_m(theta, theta0, 2).frobenius() <= L * h.norm() ** 2 + 1e-12

    def test_even_L_half_frequency_zeroed(self):
        theta0 = Signal(np.random.default_rng(7).normal(size=8))
        h = adversarial_direction(theta0, 1e-2)
        assert abs(dft(h).value_at(4)) < 1e-12

    def test_dead_frequency_skipped_with_warning(self):
        # flat spectrum except a dead frequency at xi = +-2
        L = 8
        spec = np.ones(L, dtype=complex)
        spec[2] = spec[L - 2] = 0.0
        theta0 = Signal.from_natural(np.fft.ifft(spec).real * L)
        with pytest.warns(UserWarning):
            h = adversarial_direction(theta0, 1e-3)
        assert abs(dft(h).value_at(2)) < 1e-12

    def test_kl_sigma6_band(self):
        theta0 = Signal(np.abs(np.random.default_rng(8).normal(size=8)) + 0.5)
        h = adversarial_direction(theta0, 1.0)
        h = Signal(h.values * (0.1 / h.norm()))
        theta1 = Signal(theta0.values + h.values)
        from mralab.mra import kl_monte_carlo
        vals = []
        for sigma in (2.0, 4.0, 8.0):
            kl, _ = kl_monte_carlo(theta0, theta1, sigma, 200_000,
                                   np.random.default_rng(9))
            vals.append(kl * sigma**6)
        assert max(vals) / min(vals) < 4.0


class TestUup:
    def test_full_set_ratio_one(self):
        L = 64
        off = std_offset(L)
        lam = FrequencySet(L=L, frequencies=frozenset(range(-off, L - off)))
        c1, c2 = uup_check(lam, 5, 200, np.random.default_rng(10))
        assert c1 == pytest.approx(1.0, rel=1e-12)
        assert c2 == pytest.approx(1.0, rel=1e-12)

    def test_one_sparse_flat(self):
        lam = uup_sample(64, 20, np.random.default_rng(11))
        c1, c2 = uup_check(lam, 1, 100, np.random.default_rng(12))
        assert c1 == pytest.approx(1.0, rel=1e-10)
        assert c2 == pytest.approx(1.0, rel=1e-10)

    def test_sample_size_mean(self):
        rng = np.random.default_rng(13)
        L, a = 256, 64
        sizes = [uup_sample(L, a, rng).size() for _ in range(2000)]
        se = np.sqrt(a * (1 - a / L) / len(sizes))
        assert abs(np.mean(sizes) - a) < 4 * se

    def test_a_validation(self):
        with pytest.raises(ValueError):
            uup_sample(16, 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            uup_sample(16, 17, np.random.default_rng(0))

    def test_empty_set_rejected(self):
        lam = FrequencySet(L=16, frequencies=frozenset())
        with pytest.raises(ValueError):
            uup_check(lam, 2, 10, np.random.default_rng(0))

    def test_half_density_constants(self):
        rng = np.random.default_rng(14)
        lam = uup_sample(512, 256, rng)
        c1, c2 = uup_check(lam, 8, 2000, rng)
        assert c1 >= 0.05
        assert c2 <= 20.0


class TestGoodSet:
    def test_flat_spike(self):
        f = Signal.delta(32, 0, 1.5)
        rep = good_set_report(f, GoodSetParams(kappa=1.0, eta=0.5))
        assert rep["fraction"] == 1.0

    def test_threshold_monotone(self):
        f = gen_symm_bernoulli_gaussian(128, 16, 1.0, np.random.default_rng(15))
        sizes = []
        for kappa in (0.25, 0.5, 1.0):
            rep = good_set_report(f, GoodSetParams(kappa=kappa, eta=0.5))
            sizes.append(len(rep["good_set"]))
        assert sizes[0] <= sizes[1] <= sizes[2]

    def test_bernoulli_gaussian_mass(self):
        rng = np.random.default_rng(16)
        hits = 0
        draws = 0
        while draws < 100:
            f = gen_symm_bernoulli_gaussian(1024, 64, 1.0, rng)
            if not f.support:
                continue
            draws += 1
            rep = good_set_report(f, GoodSetParams(kappa=1.0, eta=0.75))
            hits += rep["fraction"] >= 0.9
        assert hits >= 90

    def test_empty_support_rejected(self):
        with pytest.raises(ValueError):
            good_set_report(Signal.zeros(8), GoodSetParams(kappa=1.0, eta=0.5))

    def test_params_validated(self):
        with pytest.raises(ValueError):
            GoodSetParams(kappa=1.0, eta=1.5)


class TestLambdaConstruct:
    def test_flat_spectrum_first_try(self):
        theta = Signal.delta(64, 0, 2.0)
        rng = np.random.default_rng(17)
        lam = lambda_construct(theta, 3, 48, 10, rng)
        assert lam.rounds == 1

    def test_dead_frequency_excluded(self):
        L = 16
        spec = np.ones(L, dtype=complex)
        spec[3] = spec[L - 3] = 0.0  # theta-hat vanishes at xi = +-3
        theta = Signal.from_natural(np.fft.ifft(spec).real * L)
        rng = np.random.default_rng(18)
        lam = lambda_construct(theta, 3, 8, 200, rng, floor=1e-6)
        assert 3 not in lam.frequencies and -3 not in lam.frequencies

    def test_budget_error_carries_best(self):
        theta = Signal.delta(32, 0, 1e-9)  # spectrum far below any floor
        rng = np.random.default_rng(19)
        with pytest.raises(LambdaConstructionError) as err:
            lambda_construct(theta, 3, 16, 5, rng, floor=1.0)
        assert err.value.best is not None
        assert err.value.stats["tries"] == 5

    def test_symmetric_interval_signal(self):
        rng = np.random.default_rng(20)
        theta = gen_symm_interval(128, 6, 1.0, rng)
        lam = lambda_construct(theta, 13, 64, 50, rng)
        assert lam.c1_hat >= 0.05
        assert lam.spectral_floor >= spectral_floor(13, 1.0)


class TestModerateCurvature:
    def test_symmetric_interval_passes(self):
        rng = np.random.default_rng(21)
        theta0 = gen_symm_interval(128, 6, 1.0, rng)
        lam = lambda_construct(theta0, 13, 64, 50, rng)
        rep = moderate_curvature_check(theta0, lam, 100, 1e-3, rng)
        assert rep["passes"]
        assert rep["chain_min"] > 0

    def test_asymmetric_rejected(self):
        rng = np.random.default_rng(22)
        theta0 = Signal(rng.normal(size=16))
        lam = FrequencySet(L=16, frequencies=frozenset({0, 1, -1}))
        with pytest.raises(ValueError):
            moderate_curvature_check(theta0, lam, 10, 1e-3, rng)


class TestSandwich:
    def _centered_pair(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=8)
        v -= v.mean()
        w = v + 0.3 * rng.normal(size=8)
        w -= w.mean()
        return Signal(v), Signal(w)

    def test_identical_pair(self):
        theta, _ = self._centered_pair(23)
        rep = moment_sandwich_probe(theta, theta, [2.0], 20_000,
                                    np.random.default_rng(24))
        row = rep["rows"][0]
        assert row["lower_series"] == 0.0
        assert abs(row["kl"]) <= max(3 * row["kl_se"], 1e-12)

    def test_centered_pair_sandwich(self):
        theta, phi = self._centered_pair(25)
        rep = moment_sandwich_probe(theta, phi, [2.0, 4.0, 8.0], 100_000,
                                    np.random.default_rng(26))
        assert rep["passes"]
        # Delta_1 of centered signals vanishes
        for row in rep["rows"]:
            assert row["delta_norms"][0] == pytest.approx(0.0, abs=1e-12)

    def test_sigma4_dominance(self):
        theta, phi = self._centered_pair(27)
        rep = moment_sandwich_probe(theta, phi, [2.0, 4.0, 8.0], 100_000,
                                    np.random.default_rng(28))
        scaled = [r["kl"] * r["sigma"] ** 4 for r in rep["rows"]]
        assert max(scaled) / min(scaled) < 4.0

    def test_uncentered_rejected(self):
        theta = Signal(np.ones(8))
        with pytest.raises(ValueError):
            moment_sandwich_probe(theta, theta, [2.0], 100,
                                  np.random.default_rng(0))

    def test_size_guard(self):
        v = np.random.default_rng(29).normal(size=32)
        v -= v.mean()
        with pytest.raises(ValueError):
            moment_sandwich_probe(Signal(v), Signal(v), [2.0], 100,
                                  np.random.default_rng(0))
