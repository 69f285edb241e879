// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "tokencarve/errors.hpp"

using tokencarve::ConfigError;
namespace attn = tokencarve::attention;
namespace harness = tokencarve::harness;

namespace {

harness::SweepSpec small_spec() {
    harness::SweepSpec spec;
    spec.model.layers = 4;
    spec.model.heads = 4;
    spec.model.dim = 32;
    spec.model.ff_dim = 48;
    spec.model.seed = 5;
    spec.input.system_len = 4;
    spec.input.visual_len = 24;
    spec.input.prompt_len = 4;
    spec.input.dim = 32;
    spec.input.effective_rank = 6;
    spec.input.noise = 1e-3;
    spec.carve.carve_after_layer = 2;
    spec.carve.rank_rel_tol = 1e-2;
    spec.carve.lambda = 0.5;
    spec.carve.merge_proportion = 0.5;
    spec.strategies = {harness::Strategy::ipgs(0.5, 0.5), harness::Strategy::none()};
    spec.budgets = {6, 12};
    spec.seeds = {1, 2};
    return spec;
}

const harness::SweepRecord* find_record(const harness::SweepResult& result,
                                        const std::string& strategy, std::size_t budget,
                                        std::uint64_t seed) {
    for (const auto& r : result.records) {
        if (r.strategy == strategy && r.budget == budget && r.seed == seed) {
            return &r;
        }
    }
    return nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------
// normalize_curve
// ---------------------------------------------------------------------------

TEST(NormalizeCurve, LinearExample) {
    const harness::NormalizedCurve out = harness::normalize_curve({2.0, 4.0, 6.0});
    EXPECT_FALSE(out.degenerate);
    EXPECT_DOUBLE_EQ(out.values[0], 0.0);
    EXPECT_DOUBLE_EQ(out.values[1], 0.5);
    EXPECT_DOUBLE_EQ(out.values[2], 1.0);
}

TEST(NormalizeCurve, EndpointsAlwaysZeroAndOne) {
    const harness::NormalizedCurve out = harness::normalize_curve({7.0, -3.0, 2.0, 11.0, 0.0});
    double lo = 1e300, hi = -1e300;
    for (double v : out.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_DOUBLE_EQ(lo, 0.0);
    EXPECT_DOUBLE_EQ(hi, 1.0);
}

TEST(NormalizeCurve, ConstantInputFlagged) {
    const harness::NormalizedCurve out = harness::normalize_curve({5.0, 5.0, 5.0});
    EXPECT_TRUE(out.degenerate);
    for (double v : out.values) {
        EXPECT_DOUBLE_EQ(v, 0.0);
    }
}

TEST(NormalizeCurve, TooShortRejected) {
    EXPECT_THROW(harness::normalize_curve({1.0}), ConfigError);
}

TEST(NormalizeCurve, AffineInvariance) {
    const std::vector<double> base{3.0, 1.0, 4.0, 1.5, 9.0};
    std::vector<double> affine;
    for (double v : base) {
        affine.push_back(2.5 * v - 7.0);
    }
    const harness::NormalizedCurve a = harness::normalize_curve(base);
    const harness::NormalizedCurve b = harness::normalize_curve(affine);
    for (std::size_t i = 0; i < base.size(); ++i) {
        EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
    }
}

// ---------------------------------------------------------------------------
// kv_cache_fraction
// ---------------------------------------------------------------------------

TEST(KvCacheFraction, FullBudgetIsOne) {
    EXPECT_DOUBLE_EQ(harness::kv_cache_fraction(36, 576, 88, 576), 1.0);
}

TEST(KvCacheFraction, ReferenceShapesReproduceReportedFractions) {
    // Prompt length 88 follows from inverting the 36% budget-128 row:
    // (36 + 128 + p) / (36 + 576 + p) = 0.36  =>  p = 88.
    EXPECT_NEAR(harness::kv_cache_fraction(36, 128, 88, 576), 0.360, 5e-4);
    EXPECT_NEAR(harness::kv_cache_fraction(36, 192, 88, 576), 0.451, 5e-3);
    EXPECT_NEAR(harness::kv_cache_fraction(36, 64, 88, 576), 0.269, 5e-3);
}

TEST(KvCacheFraction, ZeroBudgetArithmetic) {
    EXPECT_DOUBLE_EQ(harness::kv_cache_fraction(36, 0, 0, 576), 36.0 / 612.0);
}

TEST(KvCacheFraction, StrictlyIncreasingInBudget) {
    double prev = 0.0;
    for (std::size_t b : {0u, 10u, 128u, 400u, 576u}) {
        const double f = harness::kv_cache_fraction(36, b, 88, 576);
        EXPECT_GT(f, prev);
        EXPECT_LE(f, 1.0);
        prev = f;
    }
}

TEST(KvCacheFraction, Errors) {
    EXPECT_THROW(harness::kv_cache_fraction(0, 0, 0, 0), ConfigError);
    EXPECT_THROW(harness::kv_cache_fraction(1, 5, 1, 4), ConfigError);
}

// ---------------------------------------------------------------------------
// attention_flops
// ---------------------------------------------------------------------------

TEST(AttentionFlops, AnalyticModelAndMonotonicity) {
    attn::ToyModelSpec model;
    model.layers = 4;
    model.heads = 4;
    model.dim = 64;
    const double full = harness::attention_flops(model, 100, 100, 2);
    EXPECT_DOUBLE_EQ(full, 4.0 * 2.0 * 4.0 * 100.0 * 100.0 * 16.0);
    double prev = full;
    for (std::size_t carved : {90u, 60u, 30u}) {
        const double flops = harness::attention_flops(model, 100, carved, 2);
        EXPECT_LT(flops, prev);
        prev = flops;
    }
}

// ---------------------------------------------------------------------------
// run_sweep
// ---------------------------------------------------------------------------

TEST(RunSweep, RecordGridAndOrder) {
    const harness::SweepSpec spec = small_spec();
    const harness::SweepResult result = harness::run_sweep(spec);
    EXPECT_EQ(result.records.size(), 2u * 2u * 2u);
    EXPECT_TRUE(result.skipped.empty());
    EXPECT_EQ(result.records[0].strategy, "ipgs");
    EXPECT_EQ(result.records[0].budget, 6u);
    EXPECT_EQ(result.records[0].seed, 1u);
    EXPECT_EQ(result.records[3].strategy, "ipgs");
    EXPECT_EQ(result.records[3].budget, 12u);
    EXPECT_EQ(result.records[3].seed, 2u);
}

TEST(RunSweep, NoneStrategyConstantAcrossBudgets) {
    const harness::SweepSpec spec = small_spec();
    const harness::SweepResult result = harness::run_sweep(spec);
    const auto* a = find_record(result, "none", 6, 1);
    const auto* b = find_record(result, "none", 12, 1);
    ASSERT_NE(a, nullptr);
    ASSERT_NE(b, nullptr);
    EXPECT_EQ(a->rank_final, b->rank_final);
    EXPECT_DOUBLE_EQ(a->surrogate, 1.0);
    EXPECT_DOUBLE_EQ(b->surrogate, 1.0);
    EXPECT_DOUBLE_EQ(a->kv_fraction, 1.0);
}

TEST(RunSweep, FullBudgetMatchesNoneWithinTolerance) {
    harness::SweepSpec spec = small_spec();
    spec.strategies = {harness::Strategy::ipgs(0.5, 0.0), harness::Strategy::none()};
    spec.budgets = {24};  // the full visual count
    const harness::SweepResult result = harness::run_sweep(spec);
    const auto* carved = find_record(result, "ipgs", 24, 1);
    const auto* none = find_record(result, "none", 24, 1);
    ASSERT_NE(carved, nullptr);
    ASSERT_NE(none, nullptr);
    EXPECT_NEAR(carved->surrogate, none->surrogate, 1e-9);
    EXPECT_EQ(carved->rank_final, none->rank_final);
}

TEST(RunSweep, AttentionOnlyEqualsIpgsAtLambdaOne) {
    harness::SweepSpec spec = small_spec();
    spec.strategies = {harness::Strategy::attention_only(), harness::Strategy::ipgs(1.0, 0.0)};
    spec.budgets = {8};
    const harness::SweepResult result = harness::run_sweep(spec);
    for (std::uint64_t seed : spec.seeds) {
        const auto* a = find_record(result, "attention_only", 8, seed);
        const auto* b = find_record(result, "ipgs", 8, seed);
        ASSERT_NE(a, nullptr);
        ASSERT_NE(b, nullptr);
        EXPECT_EQ(a->rank_final, b->rank_final);
        EXPECT_EQ(a->rank_carve_layer, b->rank_carve_layer);
        EXPECT_DOUBLE_EQ(a->surrogate, b->surrogate);
    }
}

TEST(RunSweep, InfeasibleBudgetSkippedWithReason) {
    harness::SweepSpec spec = small_spec();
    spec.budgets = {200};  // exceeds 24 visual tokens
    spec.strategies = {harness::Strategy::ipgs(0.5, 0.5)};
    const harness::SweepResult result = harness::run_sweep(spec);
    EXPECT_TRUE(result.records.empty());
    ASSERT_EQ(result.skipped.size(), 2u);
    EXPECT_FALSE(result.skipped[0].reason.empty());
}

TEST(RunSweep, DeterministicModuloWallTime) {
    const harness::SweepSpec spec = small_spec();
    const harness::SweepResult a = harness::run_sweep(spec);
    const harness::SweepResult b = harness::run_sweep(spec);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].strategy, b.records[i].strategy);
        EXPECT_EQ(a.records[i].rank_carve_layer, b.records[i].rank_carve_layer);
        EXPECT_EQ(a.records[i].rank_final, b.records[i].rank_final);
        EXPECT_EQ(a.records[i].surrogate, b.records[i].surrogate);
        EXPECT_EQ(a.records[i].kv_fraction, b.records[i].kv_fraction);
        EXPECT_EQ(a.records[i].flops, b.records[i].flops);
    }
}

TEST(RunSweep, ThreadedRunMatchesSerialRun) {
    harness::SweepSpec serial = small_spec();
    harness::SweepSpec threaded = small_spec();
    threaded.threads = 4;
    const harness::SweepResult a = harness::run_sweep(serial);
    const harness::SweepResult b = harness::run_sweep(threaded);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].rank_final, b.records[i].rank_final);
        EXPECT_EQ(a.records[i].surrogate, b.records[i].surrogate);
    }
}

TEST(SweepCsv, FixedHeaderAndRowCount) {
    const harness::SweepResult result = harness::run_sweep(small_spec());
    const std::string csv = harness::sweep_csv(result);
    EXPECT_EQ(csv.rfind("strategy,budget,seed,rank_carve_layer,rank_final,surrogate,"
                        "kv_fraction,flops,wall_ms\n",
                        0),
              0u);
    std::size_t lines = 0;
    for (char c : csv) {
        lines += c == '\n' ? 1 : 0;
    }
    EXPECT_EQ(lines, 1u + result.records.size());
}

// ---------------------------------------------------------------------------
// ablation_grid
// ---------------------------------------------------------------------------

TEST(AblationGrid, RhoZeroEqualsPurePruning) {
    harness::SweepSpec spec = small_spec();
    spec.seeds = {4};
    const harness::AblationResult grid =
        harness::ablation_grid(spec, harness::AblationAxis::kRho, {0.0, 0.5}, 8);
    ASSERT_EQ(grid.rows.size(), 2u);

    // rho = 0: the kept set is exactly the stage-1 top-8 with no merging.
    const attn::ToyModel model = attn::make_toy_model(spec.model);
    attn::SyntheticSpec input = spec.input;
    input.seed = 4;
    const attn::TokenSequence seq = attn::make_synthetic_input(input);
    tokencarve::carving::CarveConfig cfg = spec.carve;
    cfg.target_count = 8;
    cfg.merge_proportion = 0.0;
    const tokencarve::carving::CarveOutput out = tokencarve::carving::carve(seq, model, cfg);
    EXPECT_EQ(grid.rows[0].kept_per_seed[0], out.result.kept_visual_indices);
}

TEST(AblationGrid, RecomputationOracleAgreesAcrossLambdaGrid) {
    harness::SweepSpec spec = small_spec();
    spec.seeds = {5};
    const std::vector<double> grid_points{0.0, 0.25, 0.5, 0.75, 1.0};
    const harness::AblationResult grid =
        harness::ablation_grid(spec, harness::AblationAxis::kLambda, grid_points, 8);

    const attn::ToyModel model = attn::make_toy_model(spec.model);
    attn::SyntheticSpec input = spec.input;
    input.seed = 5;
    const attn::TokenSequence seq = attn::make_synthetic_input(input);
    for (std::size_t g = 0; g < grid_points.size(); ++g) {
        tokencarve::carving::CarveConfig cfg = spec.carve;
        cfg.target_count = 8;
        cfg.lambda = grid_points[g];
        const tokencarve::carving::CarveOutput out = tokencarve::carving::carve(seq, model, cfg);
        EXPECT_EQ(grid.rows[g].kept_per_seed[0], out.result.kept_visual_indices)
            << "lambda " << grid_points[g];
        EXPECT_DOUBLE_EQ(grid.rows[g].mean_rank_final, static_cast<double>(out.rank_final));
    }
}

TEST(AblationGrid, RejectsOutOfRangeGrid) {
    const harness::SweepSpec spec = small_spec();
    EXPECT_THROW(harness::ablation_grid(spec, harness::AblationAxis::kLambda, {1.5}, 8),
                 ConfigError);
    EXPECT_THROW(harness::ablation_grid(spec, harness::AblationAxis::kRho, {1.0}, 8),
                 ConfigError);
}

// ---------------------------------------------------------------------------
// surrogate_score / time_carve
// ---------------------------------------------------------------------------

TEST(SurrogateScore, IdenticalRunsScoreOne) {
    const attn::ToyModel model = attn::make_toy_model(attn::ToyModelSpec{});
    attn::SyntheticSpec input;
    input.dim = model.spec.dim;
    const attn::TokenSequence seq = attn::make_synthetic_input(input);
    const attn::PrefillResult run = attn::prefill(model, seq, {});
    EXPECT_NEAR(harness::surrogate_score(run.sequence, run.sequence), 1.0, 1e-12);
}

TEST(TimeCarve, ReportsSanenumbersAtIdentityBudget) {
    harness::SweepSpec spec = small_spec();
    spec.carve.target_count = spec.input.visual_len;
    spec.carve.merge_proportion = 0.0;
    const harness::TimingReport report = harness::time_carve(spec, 3);
    EXPECT_EQ(report.repetitions, 3u);
    EXPECT_GT(report.carved_mean_ms, 0.0);
    EXPECT_GT(report.uncarved_mean_ms, 0.0);
    // Identity-budget carve still pays its scoring cost; just band the ratio.
    EXPECT_GT(report.speedup, 0.1);
    EXPECT_LT(report.speedup, 10.0);
}

TEST(TimeCarve, QuarterBudgetFasterThanUncarved) {
    harness::SweepSpec spec;
    spec.model.layers = 4;
    spec.model.heads = 4;
    spec.model.dim = 64;
    spec.model.ff_dim = 96;
    spec.input.system_len = 16;
    spec.input.visual_len = 256;
    spec.input.prompt_len = 32;
    spec.input.dim = 64;
    spec.input.effective_rank = 12;
    spec.carve.target_count = 64;
    spec.carve.merge_proportion = 0.5;
    spec.carve.carve_after_layer = 2;
    const harness::TimingReport report = harness::time_carve(spec, 5);
    EXPECT_GT(report.speedup, 1.0);
}

TEST(TimeCarve, RejectsTooFewRepetitions) {
    EXPECT_THROW(harness::time_carve(small_spec(), 2), ConfigError);
}
