// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "tokencarve/errors.hpp"
#include "tokencarve/rng.hpp"

namespace tokencarve::harness {

namespace {

using attention::PrefillResult;
using attention::TokenSequence;
using attention::ToyModel;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_ms(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) {
        return 0.0;
    }
    double acc = 0.0;
    for (double x : v) {
        acc += (x - mean) * (x - mean);
    }
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::vector<double> mean_visual_row(const TokenSequence& seq) {
    const std::size_t sys = seq.segments.system;
    const std::size_t vis = seq.segments.visual;
    const std::size_t dim = seq.dim();
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < vis; ++i) {
        const double* row = seq.embeddings.row(sys + i).data();
        for (std::size_t j = 0; j < dim; ++j) {
            mean[j] += row[j];
        }
    }
    for (double& x : mean) {
        x /= static_cast<double>(vis);
    }
    return mean;
}

// Deterministic per-cell stream for the random baseline.
std::uint64_t cell_seed(std::uint64_t strategy_seed, std::uint64_t seed, std::size_t budget) {
    std::uint64_t h = strategy_seed + 0x9e3779b97f4a7c15ULL;
    h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(budget) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

std::vector<std::size_t> sample_without_replacement(std::size_t count, std::size_t population,
                                                    Rng& rng) {
    std::vector<std::size_t> pool(population);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(population - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<std::size_t> kept(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(kept.begin(), kept.end());
    return kept;
}

struct SeedBaseline {
    TokenSequence input;
    std::vector<double> mean_visual;
    std::size_t rank_carve = 0;
    std::size_t rank_final = 0;
    double flops = 0.0;
};

SeedBaseline make_baseline(const SweepSpec& spec, const ToyModel& model, std::uint64_t seed) {
    attention::SyntheticSpec input_spec = spec.input;
    input_spec.seed = seed;
    SeedBaseline base;
    base.input = attention::make_synthetic_input(input_spec);

    const std::size_t c = spec.carve.carve_after_layer;
    const std::size_t layers = model.spec.layers;
    PrefillResult full = attention::prefill(model, base.input, {c, layers});
    base.mean_visual = mean_visual_row(full.sequence);
    base.rank_carve = linalg::numerical_rank(
        attention::extract_visual_slice(full.captured.at(c).output, base.input),
        spec.carve.rank_rel_tol);
    base.rank_final = linalg::numerical_rank(
        attention::extract_visual_slice(full.captured.at(layers).output, base.input),
        spec.carve.rank_rel_tol);
    const std::size_t len = base.input.length();
    base.flops = attention_flops(model.spec, len, len, layers);
    return base;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) {
        return 1.0;
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::string Strategy::label() const {
    switch (kind) {
        case StrategyKind::kIpgs:
            return "ipgs";
        case StrategyKind::kAttentionOnly:
            return "attention_only";
        case StrategyKind::kIcsOnly:
            return "ics_only";
        case StrategyKind::kRandom:
            return "random";
        case StrategyKind::kNone:
            return "none";
    }
    return "unknown";
}

NormalizedCurve normalize_curve(const std::vector<double>& values) {
    if (values.size() < 2) {
        throw ConfigError("normalize_curve: need at least two values");
    }
    NormalizedCurve out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*hi == *lo) {
        out.values.assign(values.size(), 0.0);
        out.degenerate = true;
        return out;
    }
    out.values.reserve(values.size());
    const double span = *hi - *lo;
    for (double v : values) {
        out.values.push_back((v - *lo) / span);
    }
    return out;
}

double kv_cache_fraction(std::size_t system_len, std::size_t carved_visual_len,
                         std::size_t prompt_len, std::size_t visual_len) {
    if (carved_visual_len > visual_len) {
        throw ConfigError("kv_cache_fraction: carved count exceeds visual count");
    }
    const std::size_t denom = system_len + visual_len + prompt_len;
    if (denom == 0) {
        throw ConfigError("kv_cache_fraction: zero-length sequence");
    }
    return static_cast<double>(system_len + carved_visual_len + prompt_len) /
           static_cast<double>(denom);
}

double attention_flops(const attention::ToyModelSpec& model, std::size_t full_len,
                       std::size_t carved_len, std::size_t carve_after_layer) {
    const double dk = static_cast<double>(model.dim / model.heads);
    const double h = static_cast<double>(model.heads);
    double total = 0.0;
    for (std::size_t l = 1; l <= model.layers; ++l) {
        const double len = static_cast<double>(l <= carve_after_layer ? full_len : carved_len);
        total += 2.0 * h * len * len * dk;
    }
    return total;
}

double surrogate_score(const TokenSequence& carved_final, const TokenSequence& uncarved_final) {
    return cosine(mean_visual_row(carved_final), mean_visual_row(uncarved_final));
}

SweepResult run_sweep(const SweepSpec& spec) {
    if (spec.strategies.empty() || spec.budgets.empty() || spec.seeds.empty()) {
        throw ConfigError("run_sweep: strategies, budgets and seeds must be non-empty");
    }
    const ToyModel model = attention::make_toy_model(spec.model);
    if (spec.carve.carve_after_layer < 1 || spec.carve.carve_after_layer > model.spec.layers) {
        throw ConfigError("run_sweep: carve_after_layer outside the model's layer range");
    }
    if (!(spec.carve.rank_rel_tol > 0.0 && spec.carve.rank_rel_tol < 1.0)) {
        throw ConfigError("run_sweep: rank_rel_tol must lie in (0, 1)");
    }

    SweepResult result;
    result.budgets = spec.budgets;
    result.seeds = spec.seeds;
    for (const Strategy& s : spec.strategies) {
        result.strategy_labels.push_back(s.label());
    }

    // Uncarved baseline per seed, shared by every cell of that seed.
    std::vector<SeedBaseline> baselines;
    baselines.reserve(spec.seeds.size());
    for (std::uint64_t seed : spec.seeds) {
        baselines.push_back(make_baseline(spec, model, seed));
    }

    struct Cell {
        std::size_t strategy_idx;
        std::size_t budget_idx;
        std::size_t seed_idx;
    };
    std::vector<Cell> cells;
    for (std::size_t si = 0; si < spec.strategies.size(); ++si) {
        for (std::size_t bi = 0; bi < spec.budgets.size(); ++bi) {
            for (std::size_t ki = 0; ki < spec.seeds.size(); ++ki) {
                cells.push_back({si, bi, ki});
            }
        }
    }

    struct CellOutcome {
        bool ok = false;
        SweepRecord record;
        std::string skip_reason;
    };
    std::vector<CellOutcome> outcomes(cells.size());

    auto run_cell = [&](std::size_t cell_idx) {
        const Cell& cell = cells[cell_idx];
        const Strategy& strategy = spec.strategies[cell.strategy_idx];
        const std::size_t budget = spec.budgets[cell.budget_idx];
        const std::uint64_t seed = spec.seeds[cell.seed_idx];
        const SeedBaseline& base = baselines[cell.seed_idx];
        CellOutcome& outcome = outcomes[cell_idx];

        SweepRecord rec;
        rec.strategy = strategy.label();
        rec.budget = budget;
        rec.seed = seed;

        const std::size_t visual_len = spec.input.visual_len;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if (strategy.kind == StrategyKind::kNone) {
                rec.rank_carve_layer = base.rank_carve;
                rec.rank_final = base.rank_final;
                rec.surrogate = 1.0;
                rec.kv_fraction = 1.0;
                rec.flops = base.flops;
            } else {
                carving::CarveConfig cfg = spec.carve;
                cfg.target_count = budget;
                carving::CarveOutput out;
                if (strategy.kind == StrategyKind::kRandom) {
                    cfg.merge_proportion = 0.0;
                    Rng rng(cell_seed(strategy.seed, seed, budget));
                    if (budget > visual_len) {
                        throw ConfigError("budget exceeds visual token count");
                    }
                    const std::vector<std::size_t> kept =
                        sample_without_replacement(budget, visual_len, rng);
                    out = carving::carve_with_selection(base.input, model, cfg, kept);
                } else {
                    cfg.lambda = strategy.lambda;
                    cfg.merge_proportion = strategy.rho;
                    out = carving::carve(base.input, model, cfg);
                }
                rec.rank_carve_layer = out.rank_carve_layer;
                rec.rank_final = out.rank_final;
                rec.surrogate = cosine(mean_visual_row(out.final_sequence), base.mean_visual);
                rec.kv_fraction = kv_cache_fraction(spec.input.system_len, budget,
                                                    spec.input.prompt_len, visual_len);
                rec.flops = attention_flops(model.spec, base.input.length(),
                                            out.result.carved_seq.length(),
                                            spec.carve.carve_after_layer);
            }
        } catch (const ConfigError& e) {
            outcome.ok = false;
            outcome.skip_reason = e.what();
            return;
        }
        const auto t1 = std::chrono::steady_clock::now();
        rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        outcome.ok = true;
        outcome.record = std::move(rec);
    };

    const std::size_t threads = std::max<std::size_t>(spec.threads, 1);
    if (threads == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            run_cell(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t workers = std::min(threads, cells.size());
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
                    run_cell(i);
                }
            });
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }

    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& cell = cells[i];
        if (outcomes[i].ok) {
            result.records.push_back(std::move(outcomes[i].record));
        } else {
            result.skipped.push_back({spec.strategies[cell.strategy_idx].label(),
                                      spec.budgets[cell.budget_idx], spec.seeds[cell.seed_idx],
                                      outcomes[i].skip_reason});
        }
    }
    return result;
}

AblationResult ablation_grid(const SweepSpec& spec, AblationAxis axis,
                             const std::vector<double>& grid, std::size_t budget) {
    if (grid.empty()) {
        throw ConfigError("ablation_grid: empty grid");
    }
    for (double v : grid) {
        const bool ok = axis == AblationAxis::kLambda ? (v >= 0.0 && v <= 1.0)
                                                      : (v >= 0.0 && v < 1.0);
        if (!ok) {
            throw ConfigError("ablation_grid: grid value " + std::to_string(v) +
                              " outside the valid range");
        }
    }
    if (spec.seeds.empty()) {
        throw ConfigError("ablation_grid: seeds must be non-empty");
    }

    const ToyModel model = attention::make_toy_model(spec.model);
    std::vector<SeedBaseline> baselines;
    for (std::uint64_t seed : spec.seeds) {
        baselines.push_back(make_baseline(spec, model, seed));
    }

    AblationResult result;
    result.axis = axis;
    result.budget = budget;
    for (double value : grid) {
        carving::CarveConfig cfg = spec.carve;
        cfg.target_count = budget;
        if (axis == AblationAxis::kLambda) {
            cfg.lambda = value;
        } else {
            cfg.merge_proportion = value;
        }
        AblationRow row;
        row.value = value;
        double surrogate_sum = 0.0;
        double rank_sum = 0.0;
        for (const SeedBaseline& base : baselines) {
            carving::CarveOutput out = carving::carve(base.input, model, cfg);
            surrogate_sum += cosine(mean_visual_row(out.final_sequence), base.mean_visual);
            rank_sum += static_cast<double>(out.rank_final);
            row.kept_per_seed.push_back(out.result.kept_visual_indices);
        }
        row.mean_surrogate = surrogate_sum / static_cast<double>(baselines.size());
        row.mean_rank_final = rank_sum / static_cast<double>(baselines.size());
        result.rows.push_back(std::move(row));
    }
    return result;
}

TimingReport time_carve(const SweepSpec& spec, std::size_t repetitions) {
    if (repetitions < 3) {
        throw ConfigError("time_carve: need at least 3 repetitions");
    }
    const ToyModel model = attention::make_toy_model(spec.model);
    carving::validate_config(spec.carve, spec.input.visual_len, model.spec.layers);
    attention::SyntheticSpec input_spec = spec.input;
    const TokenSequence input = attention::make_synthetic_input(input_spec);

    // Warm-up pass for each arm, then timed repetitions run serially.
    (void)carving::carve(input, model, spec.carve);
    (void)attention::prefill(model, input, {});

    std::vector<double> carved_ms, uncarved_ms;
    for (std::size_t r = 0; r < repetitions; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        (void)carving::carve(input, model, spec.carve);
        auto t1 = std::chrono::steady_clock::now();
        carved_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

        t0 = std::chrono::steady_clock::now();
        (void)attention::prefill(model, input, {});
        t1 = std::chrono::steady_clock::now();
        uncarved_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    TimingReport report;
    report.repetitions = repetitions;
    report.carved_mean_ms = mean_of(carved_ms);
    report.carved_stddev_ms = stddev_of(carved_ms, report.carved_mean_ms);
    report.uncarved_mean_ms = mean_of(uncarved_ms);
    report.uncarved_stddev_ms = stddev_of(uncarved_ms, report.uncarved_mean_ms);
    report.speedup =
        report.carved_mean_ms > 0.0 ? report.uncarved_mean_ms / report.carved_mean_ms : 0.0;
    return report;
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream os;
    os << "strategy,budget,seed,rank_carve_layer,rank_final,surrogate,kv_fraction,flops,"
          "wall_ms\n";
    for (const SweepRecord& r : result.records) {
        os << r.strategy << ',' << r.budget << ',' << r.seed << ',' << r.rank_carve_layer << ','
           << r.rank_final << ',' << format_double(r.surrogate) << ','
           << format_double(r.kv_fraction) << ',' << format_double(r.flops) << ','
           << format_ms(r.wall_ms) << '\n';
    }
    return os.str();
}

std::string ablation_csv(const AblationResult& result) {
    std::ostringstream os;
    os << "axis,value,mean_surrogate,mean_rank_final\n";
    const char* axis = result.axis == AblationAxis::kLambda ? "lambda" : "rho";
    for (const AblationRow& row : result.rows) {
        os << axis << ',' << format_double(row.value) << ',' << format_double(row.mean_surrogate)
           << ',' << format_double(row.mean_rank_final) << '\n';
    }
    return os.str();
}

}  // namespace tokencarve::harness
