// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokencarve/attention.hpp"
#include "tokencarve/carve.hpp"

namespace tokencarve::harness {

enum class StrategyKind { kIpgs, kAttentionOnly, kIcsOnly, kRandom, kNone };

/// A token selection strategy for the sweep harness. The attention-only and
/// ICS-only baselines are the IPGS pipeline at the lambda extremes with
/// merging disabled, so their kept sets are IPGS kept sets by construction.
struct Strategy {
    StrategyKind kind = StrategyKind::kIpgs;
    double lambda = 0.5;
    double rho = 0.5;
    std::uint64_t seed = 0;  // only kRandom uses this

    static Strategy ipgs(double lambda, double rho) {
        return {StrategyKind::kIpgs, lambda, rho, 0};
    }
    static Strategy attention_only() { return {StrategyKind::kAttentionOnly, 1.0, 0.0, 0}; }
    static Strategy ics_only() { return {StrategyKind::kIcsOnly, 0.0, 0.0, 0}; }
    static Strategy random(std::uint64_t seed) { return {StrategyKind::kRandom, 0.0, 0.0, seed}; }
    static Strategy none() { return {StrategyKind::kNone, 0.0, 0.0, 0}; }

    std::string label() const;
};

/// Everything a sweep needs: the model, the input family, the carve knobs
/// shared by all cells, and the cell grid.
struct SweepSpec {
    attention::ToyModelSpec model;
    attention::SyntheticSpec input;
    carving::CarveConfig carve;  // target_count/lambda/rho are overridden per cell
    std::vector<Strategy> strategies;
    std::vector<std::size_t> budgets;
    std::vector<std::uint64_t> seeds;
    std::size_t threads = 1;
};

struct SweepRecord {
    std::string strategy;
    std::size_t budget = 0;
    std::uint64_t seed = 0;
    std::size_t rank_carve_layer = 0;
    std::size_t rank_final = 0;
    double surrogate = 0.0;
    double kv_fraction = 0.0;
    double flops = 0.0;
    double wall_ms = 0.0;
};

struct SkippedCell {
    std::string strategy;
    std::size_t budget = 0;
    std::uint64_t seed = 0;
    std::string reason;
};

struct SweepResult {
    std::vector<std::size_t> budgets;
    std::vector<std::string> strategy_labels;
    std::vector<std::uint64_t> seeds;
    std::vector<SweepRecord> records;  // ordered by (strategy, budget, seed)
    std::vector<SkippedCell> skipped;
};

struct NormalizedCurve {
    std::vector<double> values;
    bool degenerate = false;  // constant input mapped to zeros
};

enum class AblationAxis { kLambda, kRho };

struct AblationRow {
    double value = 0.0;
    double mean_surrogate = 0.0;
    double mean_rank_final = 0.0;
    std::vector<std::vector<std::size_t>> kept_per_seed;
};

struct AblationResult {
    AblationAxis axis;
    std::size_t budget = 0;
    std::vector<AblationRow> rows;
};

struct TimingReport {
    double carved_mean_ms = 0.0;
    double carved_stddev_ms = 0.0;
    double uncarved_mean_ms = 0.0;
    double uncarved_stddev_ms = 0.0;
    double speedup = 0.0;
    std::size_t repetitions = 0;
};

/// (v - min) / (max - min) elementwise; constant input maps to zeros with the
/// degenerate flag set. Throws ConfigError for fewer than two values.
NormalizedCurve normalize_curve(const std::vector<double>& values);

/// Retained KV fraction (L_s + L_vc + L_p) / (L_s + L_v + L_p).
double kv_cache_fraction(std::size_t system_len, std::size_t carved_visual_len,
                         std::size_t prompt_len, std::size_t visual_len);

/// Analytic attention cost 2 * H * L^2 * d_k summed over layers; layers past
/// carve_after_layer run at the carved length.
double attention_flops(const attention::ToyModelSpec& model, std::size_t full_len,
                       std::size_t carved_len, std::size_t carve_after_layer);

/// Cosine similarity of the mean visual hidden-state rows of two runs.
double surrogate_score(const attention::TokenSequence& carved_final,
                       const attention::TokenSequence& uncarved_final);

/// Run every (strategy, budget, seed) cell; cells are independent and may be
/// computed in parallel, results are gathered in deterministic order.
SweepResult run_sweep(const SweepSpec& spec);

/// Sweep one of lambda/rho over a grid at a fixed budget, averaging over the
/// spec's seeds.
AblationResult ablation_grid(const SweepSpec& spec, AblationAxis axis,
                             const std::vector<double>& grid, std::size_t budget);

/// Wall-clock comparison of carved vs uncarved prefill at matched shapes.
TimingReport time_carve(const SweepSpec& spec, std::size_t repetitions);

/// CSV with the fixed header
/// strategy,budget,seed,rank_carve_layer,rank_final,surrogate,kv_fraction,flops,wall_ms.
std::string sweep_csv(const SweepResult& result);

std::string ablation_csv(const AblationResult& result);

}  // namespace tokencarve::harness
