// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/tokencarve.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tokencarve/attention.hpp"
#include "tokencarve/carve.hpp"
#include "tokencarve/errors.hpp"
#include "tokencarve/harness.hpp"
#include "tokencarve/io.hpp"
#include "tokencarve/linalg.hpp"
#include "tokencarve/tensor.hpp"

using nlohmann::json;
namespace tc = tokencarve;

struct tc_tensor {
    tc::Tensor value;
};

namespace {

thread_local std::string g_last_error = "no error";

tc_status fail(tc_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

// Translate the exception hierarchy into C status codes.
tc_status guard(const std::function<void()>& body) {
    try {
        body();
        return TC_OK;
    } catch (const tc::ConfigError& e) {
        return fail(TC_ERR_CONFIG, e.what());
    } catch (const tc::ShapeError& e) {
        return fail(TC_ERR_CONFIG, e.what());
    } catch (const tc::NumericError& e) {
        return fail(TC_ERR_NUMERIC, e.what());
    } catch (const tc::IoError& e) {
        return fail(TC_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(TC_ERR_NUMERIC, std::string("unexpected error: ") + e.what());
    }
}

tc::io::RunConfig parse_config_text(const char* config_json) {
    json doc;
    try {
        doc = json::parse(config_json);
    } catch (const json::exception& e) {
        throw tc::ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return tc::io::parse_run_config(doc);
}

std::filesystem::path prepare_out_dir(const char* out_dir) {
    std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw tc::IoError("cannot create output directory " + dir.string() + ": " +
                          ec.message());
    }
    return dir;
}

json position_ids_json(const tc::attention::TokenSequence& seq) {
    json out = json::array();
    for (std::int64_t p : seq.position_ids) {
        out.push_back(p);
    }
    return out;
}

json score_report_json(const tc::ipgs::ScoreReport& report) {
    return json{{"ics", report.ics},
                {"attn_score", report.attn_score},
                {"combined", report.combined},
                {"lambda", report.lambda},
                {"normalization",
                 {{"ics_min", report.ics_min},
                  {"ics_max", report.ics_max},
                  {"ics_degenerate", report.ics_degenerate},
                  {"attn_min", report.attn_min},
                  {"attn_max", report.attn_max},
                  {"attn_degenerate", report.attn_degenerate}}}};
}

void replace_segment(tc::attention::TokenSequence& seq, const char* path, std::size_t row0,
                     std::size_t expected_rows, const char* segment_name) {
    if (path == nullptr) {
        return;
    }
    const tc::Tensor loaded = tc::io::read_tensor(path);
    if (loaded.ndim() != 2 || loaded.rows() != expected_rows || loaded.cols() != seq.dim()) {
        throw tc::ConfigError(std::string("input tensor for the ") + segment_name +
                              " segment must be " + std::to_string(expected_rows) + " x " +
                              std::to_string(seq.dim()));
    }
    for (std::size_t i = 0; i < expected_rows; ++i) {
        std::copy_n(loaded.row(i).data(), seq.dim(), seq.embeddings.row(row0 + i).data());
    }
}

json sweep_summary_json(const tc::harness::SweepResult& result, const tc::io::RunConfig& config) {
    // Means per strategy per budget.
    std::map<std::string, std::map<std::string, double>> rank_final, rank_carve, surrogate;
    std::map<std::string, std::map<std::string, std::size_t>> counts;
    for (const auto& r : result.records) {
        const std::string b = std::to_string(r.budget);
        rank_final[r.strategy][b] += static_cast<double>(r.rank_final);
        rank_carve[r.strategy][b] += static_cast<double>(r.rank_carve_layer);
        surrogate[r.strategy][b] += r.surrogate;
        counts[r.strategy][b] += 1;
    }
    for (auto& [strategy, budgets] : rank_final) {
        for (auto& [b, v] : budgets) {
            const double n = static_cast<double>(counts[strategy][b]);
            v /= n;
            rank_carve[strategy][b] /= n;
            surrogate[strategy][b] /= n;
        }
    }

    // Pairwise mean final-rank comparison, the Figure-6 style readout.
    json comparisons = json::array();
    const auto& labels = result.strategy_labels;
    for (std::size_t a = 0; a < labels.size(); ++a) {
        for (std::size_t b = 0; b < labels.size(); ++b) {
            if (a == b) {
                continue;
            }
            for (std::size_t budget : result.budgets) {
                const std::string key = std::to_string(budget);
                if (!rank_final.contains(labels[a]) || !rank_final.at(labels[a]).contains(key) ||
                    !rank_final.contains(labels[b]) || !rank_final.at(labels[b]).contains(key)) {
                    continue;
                }
                const double diff =
                    rank_final.at(labels[a]).at(key) - rank_final.at(labels[b]).at(key);
                comparisons.push_back({{"a", labels[a]},
                                       {"b", labels[b]},
                                       {"budget", budget},
                                       {"mean_rank_final_diff", diff},
                                       {"sign", diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0)}});
            }
        }
    }

    json skipped = json::array();
    for (const auto& s : result.skipped) {
        skipped.push_back(
            {{"strategy", s.strategy}, {"budget", s.budget}, {"seed", s.seed}, {"reason", s.reason}});
    }

    json doc{{"strategies", result.strategy_labels},
             {"budgets", result.budgets},
             {"seeds", result.seeds},
             {"record_count", result.records.size()},
             {"mean_rank_final", rank_final},
             {"mean_rank_carve_layer", rank_carve},
             {"mean_surrogate", surrogate},
             {"pairwise_mean_rank_final", comparisons},
             {"skipped", skipped}};

    if (config.time_repetitions >= 3) {
        tc::harness::SweepSpec spec = tc::io::make_sweep_spec(config);
        const tc::harness::TimingReport timing =
            tc::harness::time_carve(spec, config.time_repetitions);
        doc["timing"] = {{"carved_mean_ms", timing.carved_mean_ms},
                         {"carved_stddev_ms", timing.carved_stddev_ms},
                         {"uncarved_mean_ms", timing.uncarved_mean_ms},
                         {"uncarved_stddev_ms", timing.uncarved_stddev_ms},
                         {"speedup", timing.speedup},
                         {"repetitions", timing.repetitions}};
    }
    return doc;
}

}  // namespace

extern "C" {

const char* tc_version(void) { return "0.1.0"; }

const char* tc_last_error(void) { return g_last_error.c_str(); }

tc_status tc_tensor_create(const uint32_t* dims, size_t ndim, const double* data,
                           tc_tensor** out) {
    if (dims == nullptr || data == nullptr || out == nullptr) {
        return fail(TC_ERR_INVALID, "tc_tensor_create: null argument");
    }
    return guard([&]() {
        if (ndim < 1 || ndim > 3) {
            throw tc::ShapeError("tc_tensor_create: ndim must lie in [1, 3]");
        }
        std::vector<std::size_t> d(dims, dims + ndim);
        std::size_t count = 1;
        for (std::size_t x : d) {
            count *= x;
        }
        *out = new tc_tensor{tc::Tensor(std::move(d), std::vector<double>(data, data + count))};
    });
}

tc_status tc_tensor_read(const char* path, tc_tensor** out) {
    if (path == nullptr || out == nullptr) {
        return fail(TC_ERR_INVALID, "tc_tensor_read: null argument");
    }
    return guard([&]() { *out = new tc_tensor{tc::io::read_tensor(path)}; });
}

tc_status tc_tensor_write(const tc_tensor* tensor, const char* path) {
    if (tensor == nullptr || path == nullptr) {
        return fail(TC_ERR_INVALID, "tc_tensor_write: null argument");
    }
    return guard([&]() { tc::io::write_tensor(path, tensor->value); });
}

void tc_tensor_free(tc_tensor* tensor) { delete tensor; }

size_t tc_tensor_ndim(const tc_tensor* tensor) {
    return tensor == nullptr ? 0 : tensor->value.ndim();
}

tc_status tc_tensor_dims(const tc_tensor* tensor, uint32_t* dims_out) {
    if (tensor == nullptr || dims_out == nullptr) {
        return fail(TC_ERR_INVALID, "tc_tensor_dims: null argument");
    }
    const auto& dims = tensor->value.dims();
    for (std::size_t i = 0; i < dims.size(); ++i) {
        dims_out[i] = static_cast<uint32_t>(dims[i]);
    }
    return TC_OK;
}

const double* tc_tensor_data(const tc_tensor* tensor) {
    return tensor == nullptr ? nullptr : tensor->value.data().data();
}

tc_status tc_tensor_rank(const tc_tensor* tensor, double rel_tol, size_t* rank_out) {
    if (tensor == nullptr || rank_out == nullptr) {
        return fail(TC_ERR_INVALID, "tc_tensor_rank: null argument");
    }
    return guard([&]() {
        const double tol = rel_tol <= 0.0 ? tc::linalg::kDefaultRankRelTol : rel_tol;
        *rank_out = tc::linalg::numerical_rank(tensor->value, tol);
    });
}

tc_status tc_run_gen(const char* config_json, const char* out_dir) {
    if (config_json == nullptr || out_dir == nullptr) {
        return fail(TC_ERR_INVALID, "tc_run_gen: null argument");
    }
    return guard([&]() {
        const tc::io::RunConfig config = parse_config_text(config_json);
        const std::filesystem::path dir = prepare_out_dir(out_dir);

        const tc::attention::TokenSequence seq = tc::attention::make_synthetic_input(config.input);
        tc::io::write_tensor(dir / "sequence.ctns", seq.embeddings);
        tc::io::write_tensor(dir / "visual.ctns",
                             seq.embeddings.slice_rows(seq.segments.system, seq.segments.visual));

        json manifest{{"system_len", seq.segments.system},
                      {"visual_len", seq.segments.visual},
                      {"prompt_len", seq.segments.prompt},
                      {"dim", seq.dim()},
                      {"effective_rank", config.input.effective_rank},
                      {"noise", config.input.noise},
                      {"seed", config.input.seed},
                      {"position_ids", position_ids_json(seq)}};
        tc::io::write_text_atomic(dir / "input.json", manifest.dump(2) + "\n");
    });
}

tc_status tc_run_carve(const char* config_json, const char* system_path, const char* visual_path,
                       const char* prompt_path, const char* out_dir) {
    if (config_json == nullptr || out_dir == nullptr) {
        return fail(TC_ERR_INVALID, "tc_run_carve: null argument");
    }
    return guard([&]() {
        const tc::io::RunConfig config = parse_config_text(config_json);
        const std::filesystem::path dir = prepare_out_dir(out_dir);

        tc::attention::TokenSequence seq = tc::attention::make_synthetic_input(config.input);
        replace_segment(seq, system_path, 0, seq.segments.system, "system");
        replace_segment(seq, visual_path, seq.segments.system, seq.segments.visual, "visual");
        replace_segment(seq, prompt_path, seq.segments.system + seq.segments.visual,
                        seq.segments.prompt, "prompt");

        const tc::attention::ToyModel model = tc::attention::make_toy_model(config.model);
        const tc::carving::CarveOutput out = tc::carving::carve(seq, model, config.carve);

        // Fidelity against the uncarved run on the same input.
        const tc::attention::PrefillResult uncarved = tc::attention::prefill(model, seq, {});
        const double surrogate =
            tc::harness::surrogate_score(out.final_sequence, uncarved.sequence);

        tc::io::write_tensor(dir / "carved.ctns", out.result.carved_seq.embeddings);

        json merge_map = json::array();
        for (const auto& [src, tgt] : out.result.merge_map) {
            merge_map.push_back({src, tgt});
        }
        json kept{{"kept_visual_indices", out.result.kept_visual_indices},
                  {"stage1_kept", out.result.stage1_kept},
                  {"merge_map", merge_map},
                  {"token_sizes", out.result.token_sizes}};
        tc::io::write_text_atomic(dir / "kept_indices.json", kept.dump(2) + "\n");

        tc::io::write_text_atomic(dir / "score_report.json",
                                  score_report_json(out.result.score_report).dump(2) + "\n");

        json metrics{
            {"visual_len", seq.segments.visual},
            {"target_count", config.carve.target_count},
            {"stage1_count", out.result.stage1_kept.size()},
            {"rank_carve_layer", out.rank_carve_layer},
            {"rank_final", out.rank_final},
            {"surrogate", surrogate},
            {"kv_fraction",
             tc::harness::kv_cache_fraction(seq.segments.system, config.carve.target_count,
                                            seq.segments.prompt, seq.segments.visual)},
            {"flops", tc::harness::attention_flops(config.model, seq.length(),
                                                   out.result.carved_seq.length(),
                                                   config.carve.carve_after_layer)},
            {"carved_position_ids", position_ids_json(out.result.carved_seq)}};
        tc::io::write_text_atomic(dir / "metrics.json", metrics.dump(2) + "\n");
    });
}

tc_status tc_run_sweep(const char* config_json, const char* out_dir) {
    if (config_json == nullptr || out_dir == nullptr) {
        return fail(TC_ERR_INVALID, "tc_run_sweep: null argument");
    }
    return guard([&]() {
        const tc::io::RunConfig config = parse_config_text(config_json);
        const std::filesystem::path dir = prepare_out_dir(out_dir);

        const tc::harness::SweepSpec spec = tc::io::make_sweep_spec(config);
        const tc::harness::SweepResult result = tc::harness::run_sweep(spec);

        tc::io::write_text_atomic(dir / "sweep.csv", tc::harness::sweep_csv(result));
        tc::io::write_text_atomic(dir / "summary.json",
                                  sweep_summary_json(result, config).dump(2) + "\n");
    });
}

tc_status tc_run_ablate(const char* config_json, const char* out_dir) {
    if (config_json == nullptr || out_dir == nullptr) {
        return fail(TC_ERR_INVALID, "tc_run_ablate: null argument");
    }
    return guard([&]() {
        const tc::io::RunConfig config = parse_config_text(config_json);
        const std::filesystem::path dir = prepare_out_dir(out_dir);

        const tc::harness::SweepSpec spec = tc::io::make_sweep_spec(config);
        const tc::harness::AblationAxis axis = config.ablate_axis == "lambda"
                                                   ? tc::harness::AblationAxis::kLambda
                                                   : tc::harness::AblationAxis::kRho;
        const tc::harness::AblationResult result = tc::harness::ablation_grid(
            spec, axis, config.ablate_grid, config.carve.target_count);

        tc::io::write_text_atomic(dir / "ablate.csv", tc::harness::ablation_csv(result));

        json rows = json::array();
        for (const auto& row : result.rows) {
            rows.push_back({{"value", row.value},
                            {"mean_surrogate", row.mean_surrogate},
                            {"mean_rank_final", row.mean_rank_final},
                            {"kept_per_seed", row.kept_per_seed}});
        }
        json doc{{"axis", config.ablate_axis},
                 {"budget", result.budget},
                 {"seeds", config.seeds},
                 {"rows", rows}};
        tc::io::write_text_atomic(dir / "ablate.json", doc.dump(2) + "\n");
    });
}

}  // extern "C"
