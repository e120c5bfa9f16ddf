import math

import numpy as np
import pytest

from hedonic_lab.clustering import AlgoConfig
from hedonic_lab.experiments import (
    Campaign,
    CampaignKind,
    FrequencyEstimate,
    ResultRow,
    TrialSummary,
    export_results,
    fixed_shape_ns_successes,
    grand_coalition_flags,
    load_results,
    nash_existence_by_k,
    run_campaign,
    run_mc_alg,
    run_oracle_existence,
    wilson_interval,
    WILSON_Z,
)
from hedonic_lab.games import HedonicGame, Partition
from hedonic_lab.oracle import EnumerationLimitError, enumerate_partitions
from hedonic_lab.sampling import SeedSpec, UtilityDistribution, sample_game
from hedonic_lab.stability import Concept, check, implied_concepts

D = UtilityDistribution(-1, 1)


class TestWilson:
    def test_closed_form_at_zero_successes(self):
        lo, hi = wilson_interval(0, 50)
        z2 = WILSON_Z ** 2
        assert lo == 0.0
        assert hi == pytest.approx(z2 / (50 + z2))

    def test_closed_form_at_full_successes(self):
        lo, hi = wilson_interval(50, 50)
        z2 = WILSON_Z ** 2
        assert hi == 1.0
        assert lo == pytest.approx(50 / (50 + z2))

    def test_interval_contains_estimate(self):
        for s, t in [(1, 10), (5, 10), (999, 1000), (0, 3)]:
            est = FrequencyEstimate.from_counts(s, t)
            assert 0.0 <= est.wilson_lo <= est.estimate <= est.wilson_hi <= 1.0

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            wilson_interval(5, 0)
        with pytest.raises(ValueError):
            wilson_interval(7, 5)


class TestCampaignValidation:
    def test_zero_trials_rejected(self):
        with pytest.raises(ValueError):
            Campaign(kind=CampaignKind.MC_GRAND, n_values=(5,), trials=0,
                     dist=D, master_seed=SeedSpec(0))

    def test_unsorted_n_rejected(self):
        with pytest.raises(ValueError):
            Campaign(kind=CampaignKind.MC_GRAND, n_values=(10, 5), trials=5,
                     dist=D, master_seed=SeedSpec(0))


class TestGrandStudy:
    def test_flags_match_reference_checker(self):
        batch = np.empty((64, 5, 5))
        rng = SeedSpec(505).rng()
        batch[:] = rng.uniform(-1, 1, batch.shape)
        idx = np.arange(5)
        batch[:, idx, idx] = 0.0
        flags = grand_coalition_flags(batch)
        for i in range(64):
            g = HedonicGame(batch[i])
            grand = Partition.grand(5)
            singles = Partition.singletons(5)
            assert flags["grand-exit-denied"][i] == check(
                g, grand, Concept.EXIT_DENIED).stable
            assert flags["grand-cns"][i] == check(
                g, grand, Concept.CONTRACTUAL_NASH).stable
            assert flags["grand-ir"][i] == check(
                g, grand, Concept.INDIVIDUALLY_RATIONAL).stable
            assert flags["grand-ns"][i] == check(g, grand, Concept.NASH).stable
            assert flags["singleton-ns"][i] == check(g, singles, Concept.NASH).stable

    def test_exit_denied_tracks_formula(self):
        campaign = Campaign(kind=CampaignKind.MC_GRAND, n_values=(8,), trials=4000,
                            dist=D, master_seed=SeedSpec(21))
        rows = {r.property: r for r in run_campaign(campaign).rows}
        row = rows["grand-exit-denied"]
        se = math.sqrt(row.bound_value * (1 - row.bound_value) / row.trials)
        assert abs(row.estimate - row.bound_value) <= 4 * se

    def test_nonpositive_support_singleton_ns_always(self):
        campaign = Campaign(kind=CampaignKind.MC_GRAND, n_values=(6,), trials=500,
                            dist=UtilityDistribution(-1.0, -1e-9),
                            master_seed=SeedSpec(3))
        rows = {r.property: r for r in run_campaign(campaign).rows}
        assert rows["singleton-ns"].estimate == 1.0


class TestOracleExistence:
    def test_n2_exact_half(self):
        # Exact existence probability at n=2 is 1/2: a Nash-stable partition
        # exists iff the two utilities share a sign (grand for +/+, singletons
        # for -/-); the two mixed-sign quadrants are run-and-chase.
        campaign = Campaign(kind=CampaignKind.ORACLE_EXISTENCE, n_values=(2,),
                            trials=4000, dist=D, master_seed=SeedSpec(55),
                            concepts=(Concept.NASH,))
        rows = {r.property: r for r in run_campaign(campaign).rows}
        row = rows["exists:nash"]
        assert row.wilson_lo <= 0.5 <= row.wilson_hi

    def test_engine_matches_reference_oracle(self):
        T, n = 40, 5
        games = np.empty((T, n, n))
        for t in range(T):
            games[t] = sample_game(n, D, SeedSpec(7000 + t)).utilities
        ex = nash_existence_by_k(games)
        for t in range(T):
            g = HedonicGame(games[t])
            for k in range(1, n + 1):
                truth = any(check(g, p, Concept.NASH).stable
                            for p in enumerate_partitions(n, k=k))
                assert ex[t, k] == truth

    def test_cis_always_exists(self):
        campaign = Campaign(kind=CampaignKind.ORACLE_EXISTENCE, n_values=(4, 5),
                            trials=100, dist=D, master_seed=SeedSpec(77),
                            concepts=(Concept.CONTRACTUAL_INDIVIDUAL,))
        for row in run_campaign(campaign).rows:
            assert row.estimate == 1.0

    def test_limit_respected(self):
        campaign = Campaign(kind=CampaignKind.ORACLE_EXISTENCE, n_values=(9,),
                            trials=5, dist=D, master_seed=SeedSpec(0),
                            concepts=(Concept.NASH,), oracle_limit=8)
        with pytest.raises(EnumerationLimitError):
            run_oracle_existence(campaign)


class TestMcAlg:
    CFG = AlgoConfig(num_groups=4, compat_constant=2.0,
                     clique_size_rule=lambda n: 2)

    def campaign(self, **kw):
        defaults = dict(kind=CampaignKind.MC_ALG, n_values=(60,), trials=30,
                        dist=D, master_seed=SeedSpec(99), config=self.CFG)
        defaults.update(kw)
        return Campaign(**defaults)

    def test_positive_support_is_always_ir(self):
        campaign = self.campaign(dist=UtilityDistribution(0.1, 1.0))
        rows = {r.property: r for r in run_campaign(campaign).rows}
        assert rows["individually-rational"].estimate == 1.0

    def test_lattice_consistent_on_all_trials(self):
        result = run_mc_alg(self.campaign(trials=40))
        assert len(result.summaries) == 40
        for summary in result.summaries:
            outcomes = dict(summary.outcomes)
            profile = {c: outcomes[c.value] for c in Concept}
            assert implied_concepts(profile) == []

    def test_histogram_totals_n(self):
        result = run_mc_alg(self.campaign(trials=10))
        for summary in result.summaries:
            assert sum(s * c for s, c in summary.coalition_sizes) == summary.n

    def test_worker_count_does_not_change_results(self):
        r1 = run_mc_alg(self.campaign(workers=1))
        r4 = run_mc_alg(self.campaign(workers=4))
        assert r1.rows == r4.rows
        assert r1.summaries == r4.summaries


class TestFixedShape:
    def test_matches_reference_on_small_batch(self):
        n, k = 4, 2
        lab = [0, 0, 1, 1]
        succ = 0
        trials = 3000
        got = fixed_shape_ns_successes(n, k, trials, D, SeedSpec(123))
        # reference: same partition, generic checker over fresh games
        ref_partition = Partition.from_labels(lab)
        count = 0
        rng = SeedSpec(124).rng()
        for _ in range(trials):
            arr = rng.uniform(-1, 1, (n, n))
            np.fill_diagonal(arr, 0.0)
            if check(HedonicGame(arr), ref_partition, Concept.NASH).stable:
                count += 1
        p_hat, p_ref = got / trials, count / trials
        se = math.sqrt(max(p_hat * (1 - p_hat), 1e-9) / trials) * 2
        assert abs(p_hat - p_ref) <= 4 * se + 0.01

    def test_rejects_singleton_shapes(self):
        with pytest.raises(ValueError):
            fixed_shape_ns_successes(5, 2, 10, D, SeedSpec(0))
        with pytest.raises(ValueError):
            fixed_shape_ns_successes(6, 6, 10, D, SeedSpec(0))


class TestExport:
    ROWS = [
        ResultRow(5, "grand-ns", 3, 10, 0.3, 0.1, 0.6, 0.25),
        ResultRow(6, "exists:nash", 0, 10, 0.0, 0.0, 0.3, None),
    ]

    def test_csv_header_only_for_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        export_results([], path, "csv")
        assert path.read_text() == ("n,property,successes,trials,estimate,"
                                    "wilson_lo,wilson_hi,bound_value\n")

    def test_csv_content(self, tmp_path):
        path = tmp_path / "r.csv"
        export_results(self.ROWS, path, "csv")
        lines = path.read_text().splitlines()
        assert lines[1] == "5,grand-ns,3,10,0.3,0.1,0.6,0.25"
        assert lines[2].endswith(",")  # empty bound column

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "r.json"
        export_results(self.ROWS, path, "json")
        assert load_results(path) == self.ROWS

    def test_byte_identical_reruns(self, tmp_path):
        campaign = Campaign(kind=CampaignKind.MC_GRAND, n_values=(5, 7), trials=300,
                            dist=D, master_seed=SeedSpec(1234))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        export_results(run_campaign(campaign).rows, a, "csv")
        export_results(run_campaign(campaign).rows, b, "csv")
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_results(self.ROWS, tmp_path / "x.bin", "parquet")


def test_trial_summary_wall_time_ignored_in_equality():
    a = TrialSummary(5, 0, 0, (("x", True),), wall_ms=1.0)
    b = TrialSummary(5, 0, 0, (("x", True),), wall_ms=99.0)
    assert a == b


class TestExistenceSumTrend:
    def test_per_k_existence_sum_non_increasing(self):
        # Sum over k of P(some k-block partition is Nash-stable), n=4..7:
        # non-increasing in n up to confidence-interval overlap.
        trials = 400
        sums, ses = [], []
        for n_idx, n in enumerate(range(4, 8)):
            campaign = Campaign(kind=CampaignKind.ORACLE_EXISTENCE,
                                n_values=(n,), trials=trials, dist=D,
                                master_seed=SeedSpec(424200 + n_idx),
                                concepts=(Concept.NASH,))
            rows = [r for r in run_campaign(campaign, keep_summaries=False).rows
                    if ":k=" in r.property]
            total = sum(r.estimate for r in rows)
            var = sum(r.estimate * (1 - r.estimate) / trials for r in rows)
            sums.append(total)
            ses.append(math.sqrt(var))
        for i in range(len(sums) - 1):
            assert sums[i + 1] <= sums[i] + 3 * (ses[i] + ses[i + 1])
