import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetfac.errors import ConfigError, InputError
from hetfac.factor_core import (
    CorrelationMatrix,
    DataMatrix,
    correlation_from_data,
    model_from_loadings,
    paf_fit,
)
from hetfac.heterogeneity import (
    IndividualLoadingSet,
    LooLoadingSet,
    NullReference,
    accept_individual_loadings,
    binomial_cutoff,
    candidate_loading,
    conditional_predictor,
    full_assignment,
    heterogeneity_test,
    hrfs_determinacy,
    hrfs_scores,
    loading_delta,
    loo_loading_sweep,
    null_reference_sd,
    salient_assignment,
    _binomial_right_tail,
)
from hetfac.scoring import determinacy_population, determinacy_sample, rfs_scores, rfs_weights

from conftest import simulate_homogeneous

finite_loadings = st.floats(min_value=-1.2, max_value=1.2, allow_nan=False)


class TestLoadingDelta:
    def test_equal_loadings_give_zero(self):
        assert loading_delta(0.6, 0.6) == 0.0

    def test_hand_case_descending(self):
        # sqrt(.64 - .36), positive because deleting k lowered the loading
        assert loading_delta(0.8, 0.6) == pytest.approx(0.5291502622129181, abs=1e-12)

    def test_hand_case_sign_flip(self):
        # sqrt(.09 + .09): signed squares straddle zero
        assert loading_delta(0.3, -0.3) == pytest.approx(0.4242640687119285, abs=1e-12)

    @given(finite_loadings, finite_loadings)
    @settings(max_examples=200)
    def test_skew_symmetry(self, a, b):
        assert loading_delta(a, b) == -loading_delta(b, a)

    @given(finite_loadings, finite_loadings)
    @settings(max_examples=200)
    def test_squared_magnitude(self, a, b):
        expected = abs(a * a * math.copysign(1.0, a) * (a != 0) - b * b * math.copysign(1.0, b) * (b != 0))
        assert loading_delta(a, b) ** 2 == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(InputError):
            loading_delta(float("nan"), 0.5)


class TestCandidateLoading:
    def test_equal_column_gives_unit_weight(self):
        model = model_from_loadings(np.array([0.5, 0.5, 0.5]))
        assert candidate_loading(model, 0, 0, 0.1) == pytest.approx(0.6, abs=1e-15)

    def test_weight_two(self):
        # |lam| = .8 against column mean .4 doubles the delta
        model = model_from_loadings(np.array([0.8, 0.2, 0.2]))
        assert candidate_loading(model, 0, 0, 0.1) == pytest.approx(0.8 + 2.0 * 0.1, abs=1e-14)

    def test_zero_delta_returns_loading(self):
        model = model_from_loadings(np.array([0.7, 0.6]))
        assert candidate_loading(model, 1, 0, 0.0) == pytest.approx(0.6, abs=1e-15)

    def test_zero_column_warns_and_uses_zero_weight(self):
        model = model_from_loadings(np.zeros((3, 1)))
        with pytest.warns(UserWarning, match="zero mean absolute"):
            assert candidate_loading(model, 0, 0, 0.5) == 0.0


def make_sweep(data, q=1):
    model = paf_fit(correlation_from_data(data), q, n_used=data.n)
    sweep = loo_loading_sweep(data, q, model)
    return model, sweep


def brute_force_acceptance(values, lam, loo_loadings, converged):
    """Independent direct evaluation of the acceptance rule: rebuild the
    one-cell-perturbed model per (i, j, k) and compare raw off-diagonal
    sums of squares."""
    n = values.shape[0]
    p, q = lam.shape
    s_full = np.corrcoef(values, rowvar=False)
    mean_abs = np.mean(np.abs(lam), axis=0)
    base_resid = lam @ lam.T - s_full
    np.fill_diagonal(base_resid, 0.0)
    base = np.sum(base_resid**2)
    mask = np.zeros((n, p, q), dtype=bool)
    tilde = np.tile(lam, (n, 1, 1))
    for k in range(n):
        if not converged[k]:
            continue
        s_loo = np.corrcoef(np.delete(values, k, axis=0), rowvar=False)
        for i in range(p):
            for j in range(q):
                a = lam[i, j] ** 2 * np.sign(lam[i, j])
                b = loo_loadings[k, i, j] ** 2 * np.sign(loo_loadings[k, i, j])
                delta = math.sqrt(abs(a - b)) * np.sign(a - b)
                w = abs(lam[i, j]) / mean_abs[j]
                cand = lam[i, j] + w * delta
                lamk = lam.copy()
                lamk[i, j] = cand
                resid = lamk @ lamk.T - s_loo
                np.fill_diagonal(resid, 0.0)
                if np.sum(resid**2) > base and w * delta != 0.0:
                    mask[k, i, j] = True
                    tilde[k, i, j] = cand
    return mask, tilde


class TestAcceptIndividualLoadings:
    def test_matches_brute_force_oracle(self, rng):
        values, _ = simulate_homogeneous(np.array([0.8, 0.7, 0.6]), 24, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        result = accept_individual_loadings(data, model, sweep)
        mask, tilde = brute_force_acceptance(
            data.values, model.loadings.values, sweep.loadings, sweep.converged
        )
        assert np.array_equal(result.accepted, mask)
        assert np.abs(result.loadings - np.clip(tilde, -0.99, 0.99)).max() < 1e-12

    def test_zero_deltas_give_zero_acceptances(self, rng):
        values, _ = simulate_homogeneous(np.array([0.8, 0.7, 0.6]), 20, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        identical = LooLoadingSet(
            loadings=np.tile(model.loadings.values, (data.n, 1, 1)),
            unique_variances=np.tile(model.unique_variances, (data.n, 1)),
            converged=np.ones(data.n, dtype=bool),
            sds=np.zeros_like(model.loadings.values),
        )
        result = accept_individual_loadings(data, model, identical)
        assert not result.accepted.any()
        assert np.array_equal(result.loadings, np.tile(model.loadings.values, (data.n, 1, 1)))

    def test_rejected_entries_equal_total_loadings_exactly(self, rng):
        values, _ = simulate_homogeneous(np.array([0.8, 0.7, 0.6, 0.5]), 30, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        result = accept_individual_loadings(data, model, sweep)
        lam = model.loadings.values
        rejected = ~result.accepted
        for k in range(data.n):
            assert np.array_equal(result.loadings[k][rejected[k]], np.tile(lam, (1, 1))[rejected[k]])

    def test_non_converged_individual_keeps_total_loadings(self, rng):
        values, _ = simulate_homogeneous(np.array([0.8, 0.7, 0.6]), 20, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        hobbled = LooLoadingSet(
            loadings=sweep.loadings,
            unique_variances=sweep.unique_variances,
            converged=np.r_[False, sweep.converged[1:]],
            sds=sweep.sds,
        )
        result = accept_individual_loadings(data, model, hobbled)
        assert np.array_equal(result.loadings[0], model.loadings.values)
        assert not result.accepted[0].any()

    def test_heywood_reset_path(self, rng):
        values, _ = simulate_homogeneous(np.array([0.9, 0.7, 0.6]), 20, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        # an extreme sign-flipped leave-one-out loading forces a candidate
        # far above the cap; the perturbed model then badly misfits, so the
        # entry is accepted and must be reset to +-0.99
        extreme = np.array(sweep.loadings)
        extreme[3, 0, 0] = -0.95
        hacked = LooLoadingSet(
            loadings=extreme,
            unique_variances=sweep.unique_variances,
            converged=sweep.converged,
            sds=sweep.sds,
        )
        result = accept_individual_loadings(data, model, hacked)
        assert result.accepted[3, 0, 0]
        assert result.loadings[3, 0, 0] == pytest.approx(0.99, abs=1e-15)
        assert result.heywood_resets >= 1

    def test_direction_diagnostic_counts(self, rng):
        values, _ = simulate_homogeneous(np.array([0.8, 0.7, 0.6]), 24, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        printed = accept_individual_loadings(data, model, sweep, direction="larger")
        flipped = accept_individual_loadings(data, model, sweep, direction="smaller")
        assert printed.reversed_acceptances == int(flipped.accepted.sum())
        assert flipped.reversed_acceptances == int(printed.accepted.sum())


class TestHrfs:
    def collapse_set(self, lam, n):
        return IndividualLoadingSet(
            loadings=np.tile(lam, (n, 1, 1)),
            accepted=np.zeros((n,) + lam.shape, dtype=bool),
            loo_converged=np.ones(n, dtype=bool),
        )

    def test_homogeneous_collapse_correlates_one_with_rfs(self, rng):
        lam = np.array([0.8, 0.7, 0.6, 0.5])
        values, _ = simulate_homogeneous(lam, 50, rng)
        data = DataMatrix.from_array(values)
        s = correlation_from_data(data)
        model = paf_fit(s, 1, n_used=data.n)
        individual = self.collapse_set(model.loadings.values, data.n)
        hrfs = hrfs_scores(individual, model, data, s)
        rfs = rfs_scores(model, data)
        corr = np.corrcoef(hrfs.values[:, 0], rfs.values[:, 0])[0, 1]
        assert corr == pytest.approx(1.0, abs=1e-10)
        # rows are the RFS rows rescaled by one common per-factor constant
        ratio = hrfs.values[:, 0] / rfs.values[:, 0]
        assert np.nanstd(ratio) < 1e-10

    def test_collapse_determinacy_equals_sample_formula(self, rng):
        for seed in range(20):
            local = np.random.default_rng(seed)
            lam = local.uniform(0.4, 0.8, size=(5, 1))
            values, _ = simulate_homogeneous(lam, 40, local)
            data = DataMatrix.from_array(values)
            s = correlation_from_data(data)
            model = paf_fit(s, 1, n_used=data.n)
            individual = self.collapse_set(model.loadings.values, data.n)
            got = hrfs_determinacy(individual, s).rho
            want = determinacy_sample(model, s).rho
            assert np.abs(got - want).max() < 1e-10

    def test_collapse_with_implied_sample_equals_population(self):
        lam = np.array([0.7, 0.6, 0.5])
        model = model_from_loadings(lam)
        individual = self.collapse_set(lam.reshape(-1, 1), 10)
        got = hrfs_determinacy(individual, model.implied).rho
        want = determinacy_population(model).rho
        assert np.abs(got - want).max() < 1e-10

    def test_heterogeneous_toy_matches_hand_mean(self):
        # three individuals with different loading matrices; oracle computes
        # each term with explicit inverses
        s = CorrelationMatrix(np.array([[1.0, 0.4, 0.3], [0.4, 1.0, 0.35], [0.3, 0.35, 1.0]]))
        mats = [
            np.array([[0.8], [0.6], [0.5]]),
            np.array([[0.5], [0.7], [0.4]]),
            np.array([[0.6], [0.6], [0.6]]),
        ]
        individual = IndividualLoadingSet(
            loadings=np.stack(mats),
            accepted=np.ones((3, 3, 1), dtype=bool),
            loo_converged=np.ones(3, dtype=bool),
        )
        terms = []
        for lam in mats:
            psi2 = np.clip(1.0 - (lam**2).sum(axis=1), 1e-4, None)
            sigma = lam @ lam.T + np.diag(psi2)
            inv = np.linalg.inv(sigma)
            num = (lam.T @ inv @ lam)[0, 0]
            den = (lam.T @ inv @ s.values @ inv @ lam)[0, 0]
            terms.append(num / math.sqrt(den))
        got = hrfs_determinacy(individual, s).rho[0]
        assert got == pytest.approx(np.mean(terms), abs=1e-12)

    def test_zero_observation_row_scores_zero(self, rng):
        lam = np.array([0.7, 0.6, 0.5])
        base, _ = simulate_homogeneous(lam, 30, rng)
        values = np.vstack([base, base.mean(axis=0)])
        data = DataMatrix.from_array(values)
        s = correlation_from_data(data)
        model = paf_fit(s, 1, n_used=data.n)
        individual = self.collapse_set(model.loadings.values, data.n)
        hrfs = hrfs_scores(individual, model, data, s)
        assert np.abs(hrfs.values[-1]).max() < 1e-12

    def test_doubled_loadings_shift_weights_toward_doubled_variables(self, rng):
        lam = np.full((4, 1), 0.5)
        values, _ = simulate_homogeneous(lam, 40, rng)
        data = DataMatrix.from_array(values)
        s = correlation_from_data(data)
        model = model_from_loadings(lam)
        tilde = np.tile(lam, (data.n, 1, 1))
        tilde[0, :2, 0] = 0.9  # individual 0 nearly doubles the first two
        individual = IndividualLoadingSet(
            loadings=tilde,
            accepted=np.zeros_like(tilde, dtype=bool),
            loo_converged=np.ones(data.n, dtype=bool),
        )
        lam_k = tilde[0]
        psi2 = np.clip(1.0 - (lam_k**2).sum(axis=1), 1e-4, None)
        sigma = lam_k @ lam_k.T + np.diag(psi2)
        w_k = np.linalg.solve(sigma, lam_k)[:, 0]
        w_rfs = rfs_weights(model)[0]
        assert w_k[0] / w_k[2] > w_rfs[0] / w_rfs[2]


class TestBinomialCutoff:
    def enumeration_tail(self, p, c):
        count = sum(1 for outcome in range(2**p) if bin(outcome).count("1") >= c)
        return Fraction(count, 2**p)

    def test_paper_row_p6(self):
        crit, alpha = binomial_cutoff(6, 0.25)
        assert (crit, alpha) == (5, 0.109375)
        assert Fraction(alpha) == self.enumeration_tail(6, 5)

    def test_paper_row_p12(self):
        crit, alpha = binomial_cutoff(12, 0.10)
        assert crit == 9
        assert alpha == pytest.approx(0.0730, abs=5e-5)
        assert Fraction(alpha) == self.enumeration_tail(12, 9)

    def test_paper_row_p2(self):
        assert binomial_cutoff(2, 0.25) == (2, 0.25)

    def test_unattainable_level(self):
        with pytest.raises(ConfigError, match="0.0625"):
            binomial_cutoff(4, 0.05)

    def test_tail_matches_enumeration(self):
        for p in (2, 5, 9):
            for c in range(p + 1):
                assert _binomial_right_tail(p, c) == self.enumeration_tail(p, c)

    def test_input_validation(self):
        with pytest.raises(InputError):
            binomial_cutoff(1, 0.25)
        with pytest.raises(InputError):
            binomial_cutoff(6, 1.5)


def make_loo_set(sds):
    sds = np.asarray(sds, dtype=float)
    p, q = sds.shape
    n = 5
    return LooLoadingSet(
        loadings=np.zeros((n, p, q)),
        unique_variances=np.ones((n, p)),
        converged=np.ones(n, dtype=bool),
        sds=sds,
    )


def make_null(mean_sds, n_d=10):
    mean_sds = np.asarray(mean_sds, dtype=float)
    return NullReference(
        mean_sds=mean_sds,
        population_loadings=np.zeros_like(mean_sds),
        n_draws=n_d,
        draws_used=n_d,
    )


class TestHeterogeneityTest:
    def test_tie_scores_zero(self):
        loo = make_loo_set(np.full((6, 1), 0.05))
        null = make_null(np.full((6, 1), 0.05))
        report = heterogeneity_test(loo, null, full_assignment(6, 1))
        assert not report.indicators.any()
        assert report.factors[0].g_count == 0
        assert not report.factors[0].heterogeneous

    def test_all_exceed_rejects_at_paper_cutoff(self):
        loo = make_loo_set(np.full((6, 1), 0.08))
        null = make_null(np.full((6, 1), 0.05))
        report = heterogeneity_test(loo, null, full_assignment(6, 1))
        decision = report.factors[0]
        assert decision.g_count == 6
        assert decision.g_crit == 5
        assert decision.alpha_exact == pytest.approx(0.109375, abs=1e-12)
        assert decision.heterogeneous

    def test_four_of_six_is_homogeneous(self):
        sds = np.full((6, 1), 0.02)
        sds[:4] = 0.08
        report = heterogeneity_test(make_loo_set(sds), make_null(np.full((6, 1), 0.05)), full_assignment(6, 1))
        assert report.factors[0].g_count == 4
        assert not report.factors[0].heterogeneous

    def test_monotone_in_empirical_sd(self, rng):
        null = make_null(rng.uniform(0.02, 0.06, size=(6, 1)))
        for _ in range(20):
            sds = rng.uniform(0.01, 0.09, size=(6, 1))
            base = heterogeneity_test(make_loo_set(sds), null, full_assignment(6, 1))
            bumped = sds.copy()
            bumped[rng.integers(6), 0] += 0.05
            after = heterogeneity_test(make_loo_set(bumped), null, full_assignment(6, 1))
            if base.factors[0].heterogeneous:
                assert after.factors[0].heterogeneous

    def test_explicit_cutoffs_and_report_schema(self):
        sds = np.full((6, 1), 0.08)
        report = heterogeneity_test(
            make_loo_set(sds), make_null(np.full((6, 1), 0.05)), full_assignment(6, 1), cutoffs=(6, 0.015625)
        )
        assert report.factors[0].g_crit == 6
        payload = report.to_dict()
        assert payload["factors"][0]["decision"] == "heterogeneous"
        assert payload["n_d"] == 10

    def test_assignment_validation(self):
        loo = make_loo_set(np.full((6, 2), 0.08))
        null = make_null(np.full((6, 2), 0.05))
        with pytest.raises(InputError):
            heterogeneity_test(loo, null, ((0, 1, 9), (2, 3)))
        with pytest.raises(InputError):
            heterogeneity_test(loo, null, ((0, 1),))


class TestAssignments:
    def test_salient_assignment_groups_by_largest_loading(self):
        lam = np.array([[0.8, 0.1], [0.7, 0.2], [-0.1, 0.6], [0.2, -0.7]])
        assert salient_assignment(lam) == ((0, 1), (2, 3))

    def test_salient_assignment_rejects_empty_factor(self):
        lam = np.array([[0.8, 0.1], [0.7, 0.2]])
        with pytest.raises(ConfigError):
            salient_assignment(lam)

    def test_full_assignment(self):
        assert full_assignment(3, 2) == ((0, 1, 2), (0, 1, 2))


class TestConditionalPredictor:
    def report_with(self, decisions):
        factors = []
        sds = np.zeros((4, len(decisions)))
        loo = make_loo_set(sds)
        null = make_null(np.full_like(sds, 0.5))
        base = heterogeneity_test(loo, null, full_assignment(4, len(decisions)), cutoffs=(1, 0.25))
        # rebuild with forced outcomes
        from hetfac.heterogeneity import FactorDecision, HeterogeneityReport

        factors = tuple(
            FactorDecision(
                factor=j,
                variables=tuple(range(4)),
                g_count=4 if het else 0,
                g_crit=1,
                alpha_exact=0.25,
                heterogeneous=het,
            )
            for j, het in enumerate(decisions)
        )
        return HeterogeneityReport(
            empirical_sds=sds,
            null_sds=sds,
            indicators=np.zeros_like(sds, dtype=bool),
            factors=factors,
            n_d=10,
        )

    def scores(self, n, q, kind, offset):
        from hetfac.scoring import ScoreMatrix

        values = np.arange(n * q, dtype=float).reshape(n, q) + offset
        return ScoreMatrix(values, kind=kind)

    def test_all_homogeneous_returns_rfs(self):
        report = self.report_with([False, False])
        rfs = self.scores(5, 2, "rfs", 0.0)
        hrfs = self.scores(5, 2, "hrfs", 100.0)
        out = conditional_predictor(report, rfs, hrfs, np.array([0.8, 0.7]), np.array([0.9, 0.95]))
        assert np.array_equal(out.values, rfs.values)
        assert out.chosen == ("rfs", "rfs")
        assert np.array_equal(out.rho, np.array([0.8, 0.7]))

    def test_all_heterogeneous_returns_hrfs(self):
        report = self.report_with([True, True])
        rfs = self.scores(5, 2, "rfs", 0.0)
        hrfs = self.scores(5, 2, "hrfs", 100.0)
        out = conditional_predictor(report, rfs, hrfs, np.array([0.8, 0.7]), np.array([0.9, 0.95]))
        assert np.array_equal(out.values, hrfs.values)
        assert out.chosen == ("hrfs", "hrfs")

    def test_mixed_assembly(self):
        report = self.report_with([True, False, True])
        rfs = self.scores(4, 3, "rfs", 0.0)
        hrfs = self.scores(4, 3, "hrfs", 100.0)
        out = conditional_predictor(
            report, rfs, hrfs, np.array([0.8, 0.7, 0.6]), np.array([0.9, 0.95, 0.85])
        )
        expected = np.column_stack([hrfs.values[:, 0], rfs.values[:, 1], hrfs.values[:, 2]])
        assert np.array_equal(out.values, expected)
        assert out.chosen == ("hrfs", "rfs", "hrfs")
        assert np.allclose(out.rho, [0.9, 0.7, 0.85])


class TestLooSweepAndNullReference:
    def test_identical_rows_with_noise_give_tiny_sds(self, rng):
        lam = np.array([0.8, 0.7, 0.6])
        base, _ = simulate_homogeneous(lam, 25, rng)
        data = DataMatrix.from_array(base)
        model, sweep = make_sweep(data)
        assert sweep.sds.min() >= 0.0
        assert sweep.converged.all()
        # each solution close to the total solution
        spread = np.nanmax(np.abs(sweep.loadings - model.loadings.values), axis=(1, 2))
        assert np.median(spread) < 0.2

    def test_outlier_row_has_largest_influence(self, rng):
        lam = np.array([0.8, 0.7, 0.6, 0.5])
        values, _ = simulate_homogeneous(lam, 40, rng)
        values[7] = np.array([6.0, -6.0, 6.0, -6.0])  # adversarial row
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        deviation = np.abs(sweep.loadings - model.loadings.values).max(axis=(1, 2))
        assert int(np.nanargmax(deviation)) == 7

    def test_null_reference_nonnegative_and_deterministic(self, rng):
        lam = np.array([0.8, 0.7, 0.6])
        values, _ = simulate_homogeneous(lam, 30, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        a = null_reference_sd(model, sweep, data.n, n_d=3, seed=11)
        b = null_reference_sd(model, sweep, data.n, n_d=3, seed=11)
        assert np.array_equal(a.mean_sds, b.mean_sds)
        assert a.mean_sds.min() >= 0.0
        assert a.draws_used == 3

    def test_null_reference_worker_count_invariance(self, rng):
        lam = np.array([0.8, 0.7, 0.6])
        values, _ = simulate_homogeneous(lam, 26, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        serial = null_reference_sd(model, sweep, data.n, n_d=4, seed=5, workers=1)
        parallel = null_reference_sd(model, sweep, data.n, n_d=4, seed=5, workers=3)
        assert np.array_equal(serial.mean_sds, parallel.mean_sds)

    def test_null_sds_shrink_with_sample_size(self, rng):
        lam = np.array([0.75, 0.7, 0.65])
        values, _ = simulate_homogeneous(lam, 30, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        small = null_reference_sd(model, sweep, 30, n_d=2, seed=3)
        large = null_reference_sd(model, sweep, 700, n_d=1, seed=3)
        assert large.mean_sds.max() < small.mean_sds.max()
        assert large.mean_sds.max() < 0.02

    def test_communality_above_cap_is_rescaled(self, rng):
        lam = np.array([0.8, 0.7, 0.6])
        values, _ = simulate_homogeneous(lam, 30, rng)
        data = DataMatrix.from_array(values)
        model, sweep = make_sweep(data)
        inflated = np.array(sweep.loadings)
        inflated[:, 0, 0] = 1.05  # mean leave-one-out loading above one
        hacked = LooLoadingSet(
            loadings=inflated,
            unique_variances=sweep.unique_variances,
            converged=sweep.converged,
            sds=sweep.sds,
        )
        with pytest.warns(UserWarning, match="rescaled"):
            null = null_reference_sd(model, hacked, data.n, n_d=1, seed=2)
        assert null.rescaled_variables == (0,)
        comm = np.sum(null.population_loadings**2, axis=1)
        assert comm.max() <= 0.9801 + 1e-12
