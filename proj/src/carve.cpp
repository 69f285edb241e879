// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/carve.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "tokencarve/errors.hpp"

namespace tokencarve::carving {

namespace {

using attention::LayerArtifacts;
using attention::TokenSequence;
using attention::ToyModel;

// Assemble [system | chosen visual rows | prompt] keeping original position
// ids. `visual_rows` holds the surviving visual embeddings in ascending
// original order.
TokenSequence reassemble(const TokenSequence& seq, const Tensor& visual_rows,
                         const std::vector<std::size_t>& kept) {
    const std::size_t sys = seq.segments.system;
    const std::size_t vis = seq.segments.visual;
    const std::size_t prompt = seq.segments.prompt;
    const std::size_t dim = seq.dim();
    const std::size_t out_len = sys + kept.size() + prompt;

    Tensor embeddings({out_len, dim});
    std::vector<std::int64_t> position_ids(out_len);
    std::size_t row = 0;
    for (std::size_t i = 0; i < sys; ++i, ++row) {
        std::copy_n(seq.embeddings.row(i).data(), dim, embeddings.row(row).data());
        position_ids[row] = seq.position_ids[i];
    }
    for (std::size_t i = 0; i < kept.size(); ++i, ++row) {
        std::copy_n(visual_rows.row(i).data(), dim, embeddings.row(row).data());
        position_ids[row] = seq.position_ids[sys + kept[i]];
    }
    for (std::size_t i = 0; i < prompt; ++i, ++row) {
        std::copy_n(seq.embeddings.row(sys + vis + i).data(), dim, embeddings.row(row).data());
        position_ids[row] = seq.position_ids[sys + vis + i];
    }
    return TokenSequence(std::move(embeddings), {sys, kept.size(), prompt},
                         std::move(position_ids));
}

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& indices) {
    if (indices.empty()) {
        throw ShapeError("gather_rows: empty index set");
    }
    Tensor out({indices.size(), m.cols()});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::copy_n(m.row(indices[i]).data(), m.cols(), out.row(i).data());
    }
    return out;
}

// Resume the run after the carve point and collect the final Z visual slice.
CarveOutput finish_run(const TokenSequence& carved, const ToyModel& model,
                       const CarveConfig& config, const Tensor& carve_z_survivors,
                       CarveResult result) {
    CarveOutput out;
    out.result = std::move(result);
    out.carve_z_visual = carve_z_survivors;
    out.rank_carve_layer = linalg::numerical_rank(out.carve_z_visual, config.rank_rel_tol);

    const std::size_t layers = model.spec.layers;
    const std::size_t c = config.carve_after_layer;
    if (c < layers) {
        attention::PrefillResult rest =
            attention::run_layers(model, carved, c + 1, layers, {layers});
        out.final_z_visual =
            attention::extract_visual_slice(rest.captured.at(layers).output, rest.sequence);
        out.final_sequence = attention::apply_final_ffn(model, rest.sequence);
    } else {
        // No layers remain after the carve point; the carved carve-layer Z is
        // the last attention output available for the surviving tokens.
        out.final_z_visual = out.carve_z_visual;
        out.final_sequence = attention::apply_final_ffn(model, carved);
    }
    out.rank_final = linalg::numerical_rank(out.final_z_visual, config.rank_rel_tol);
    return out;
}

}  // namespace

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

std::size_t stage1_count(const CarveConfig& config) {
    return round_half_up(static_cast<double>(config.target_count) *
                         (1.0 + config.merge_proportion));
}

namespace {

void validate_budget(const CarveConfig& config, std::size_t visual_len) {
    if (config.target_count < 1) {
        throw ConfigError("carve config: target_count must be at least 1");
    }
    if (!(config.merge_proportion >= 0.0 && config.merge_proportion < 1.0)) {
        throw ConfigError("carve config: merge_proportion must lie in [0, 1)");
    }
    if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) {
        throw ConfigError("carve config: lambda must lie in [0, 1]");
    }
    if (!(config.rank_rel_tol > 0.0 && config.rank_rel_tol < 1.0)) {
        throw ConfigError("carve config: rank_rel_tol must lie in (0, 1)");
    }
    const double intermediate = std::ceil(static_cast<double>(config.target_count) *
                                          (1.0 + config.merge_proportion));
    if (intermediate > static_cast<double>(visual_len)) {
        throw ConfigError("carve config: intermediate budget " +
                          std::to_string(static_cast<std::size_t>(intermediate)) +
                          " exceeds visual token count " + std::to_string(visual_len));
    }
}

}  // namespace

void validate_config(const CarveConfig& config, std::size_t visual_len, std::size_t layers) {
    validate_budget(config, visual_len);
    if (config.carve_after_layer < 1 || config.carve_after_layer > layers) {
        throw ConfigError("carve config: carve_after_layer " +
                          std::to_string(config.carve_after_layer) + " outside [1, " +
                          std::to_string(layers) + "]");
    }
}

std::pair<std::vector<std::size_t>, ipgs::ScoreReport> stage1_prune(
    const TokenSequence& seq, const LayerArtifacts& artifacts, const CarveConfig& config) {
    validate_budget(config, seq.segments.visual);

    const Tensor z_visual = attention::extract_visual_slice(artifacts.output, seq);
    std::vector<double> ics = ipgs::information_contribution(z_visual, config.rank_rel_tol);
    std::vector<double> attn =
        ipgs::attention_score(artifacts.attn, seq, config.attention_mean_mode);
    ipgs::ScoreReport report = ipgs::combined_score(std::move(ics), std::move(attn),
                                                    config.lambda);

    const std::size_t k = stage1_count(config);
    std::vector<std::size_t> order = ipgs::rank_tokens(report);
    std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(kept.begin(), kept.end());
    return {std::move(kept), std::move(report)};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition_sets(
    const std::vector<std::size_t>& intermediate, const ipgs::ScoreReport& report,
    const CarveConfig& config) {
    if (intermediate.size() != stage1_count(config)) {
        throw ConfigError("partition_sets: expected " + std::to_string(stage1_count(config)) +
                          " intermediate tokens, got " + std::to_string(intermediate.size()));
    }
    // Order the intermediate tokens by combined score descending, stable on
    // the original index.
    std::vector<std::size_t> by_score = intermediate;
    std::stable_sort(by_score.begin(), by_score.end(), [&](std::size_t a, std::size_t b) {
        return report.combined[a] > report.combined[b];
    });
    const std::size_t k = by_score.size();
    const std::size_t a_count = (k + 1) / 2;  // ceiling: SetA keeps the better half
    std::vector<std::size_t> set_a(by_score.begin(),
                                   by_score.begin() + static_cast<std::ptrdiff_t>(a_count));
    std::vector<std::size_t> set_b(by_score.begin() + static_cast<std::ptrdiff_t>(a_count),
                                   by_score.end());
    return {std::move(set_a), std::move(set_b)};
}

Tensor similarity_matrix(const Tensor& set_b_rows, const Tensor& set_a_rows) {
    if (set_b_rows.cols() != set_a_rows.cols()) {
        throw ShapeError("similarity_matrix: row width mismatch");
    }
    const linalg::RowNormalizeResult nb = linalg::l2_normalize_rows(set_b_rows);
    const linalg::RowNormalizeResult na = linalg::l2_normalize_rows(set_a_rows);
    Tensor sim = linalg::matmul_transposed_b(nb.normalized, na.normalized);
    // Zero-norm rows have no direction; mark them least mergeable.
    for (std::size_t zb : nb.zero_rows) {
        for (std::size_t j = 0; j < sim.cols(); ++j) {
            sim.at(zb, j) = -1.0;
        }
    }
    for (std::size_t za : na.zero_rows) {
        for (std::size_t i = 0; i < sim.rows(); ++i) {
            sim.at(i, za) = -1.0;
        }
    }
    return sim;
}

MergePlan stage2_merge(const std::vector<std::size_t>& set_a,
                       const std::vector<std::size_t>& set_b, const Tensor& similarity,
                       std::size_t merge_count) {
    if (merge_count > set_b.size()) {
        throw ConfigError("stage2_merge: merge count " + std::to_string(merge_count) +
                          " exceeds SetB size " + std::to_string(set_b.size()));
    }
    MergePlan plan;
    std::vector<bool> merged(set_b.size(), false);

    if (merge_count > 0) {
        if (similarity.rows() != set_b.size() || similarity.cols() != set_a.size()) {
            throw ShapeError("stage2_merge: similarity dims do not match set sizes");
        }
        // Best SetA partner per SetB token; ties go to the earlier (higher
        // scored) SetA entry.
        std::vector<std::size_t> best_target(set_b.size(), 0);
        std::vector<double> best_sim(set_b.size(), 0.0);
        for (std::size_t i = 0; i < set_b.size(); ++i) {
            const double* row = similarity.row(i).data();
            std::size_t arg = 0;
            double best = row[0];
            for (std::size_t j = 1; j < set_a.size(); ++j) {
                if (row[j] > best) {
                    best = row[j];
                    arg = j;
                }
            }
            best_target[i] = arg;
            best_sim[i] = best;
        }
        std::vector<std::size_t> by_sim(set_b.size());
        std::iota(by_sim.begin(), by_sim.end(), 0);
        std::stable_sort(by_sim.begin(), by_sim.end(), [&](std::size_t a, std::size_t b) {
            return best_sim[a] > best_sim[b];
        });
        for (std::size_t i = 0; i < merge_count; ++i) {
            const std::size_t bi = by_sim[i];
            merged[bi] = true;
            plan.merges.emplace_back(set_b[bi], set_a[best_target[bi]]);
        }
        std::sort(plan.merges.begin(), plan.merges.end());
    }

    plan.survivors = set_a;
    for (std::size_t i = 0; i < set_b.size(); ++i) {
        if (!merged[i]) {
            plan.survivors.push_back(set_b[i]);
        }
    }
    std::sort(plan.survivors.begin(), plan.survivors.end());
    return plan;
}

MergedTokens merge_embeddings(const Tensor& rows, const std::vector<std::size_t>& row_indices,
                              const MergePlan& plan) {
    if (rows.rows() != row_indices.size()) {
        throw ShapeError("merge_embeddings: rows do not match index list");
    }
    std::map<std::size_t, std::size_t> row_of;  // original index -> row position
    for (std::size_t i = 0; i < row_indices.size(); ++i) {
        row_of[row_indices[i]] = i;
    }
    // Member lists per survivor, ascending by original index.
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t idx : plan.survivors) {
        members[idx] = {idx};
    }
    for (std::size_t idx : plan.survivors) {
        if (!row_of.contains(idx)) {
            throw ShapeError("merge_embeddings: survivor not present in the row set");
        }
    }
    for (const auto& [src, tgt] : plan.merges) {
        auto it = members.find(tgt);
        if (it == members.end() || !row_of.contains(src)) {
            throw ShapeError("merge_embeddings: merge references a missing token");
        }
        it->second.push_back(src);
    }

    const std::size_t dim = rows.cols();
    MergedTokens out{Tensor({plan.survivors.size(), dim}), {}};
    out.sizes.reserve(plan.survivors.size());
    for (std::size_t s = 0; s < plan.survivors.size(); ++s) {
        std::vector<std::size_t>& group = members[plan.survivors[s]];
        std::sort(group.begin(), group.end());
        double* dst = out.embeddings.row(s).data();
        for (std::size_t member : group) {
            const double* src = rows.row(row_of.at(member)).data();
            for (std::size_t j = 0; j < dim; ++j) {
                dst[j] += src[j];
            }
        }
        const double inv = 1.0 / static_cast<double>(group.size());
        for (std::size_t j = 0; j < dim; ++j) {
            dst[j] *= inv;
        }
        out.sizes.push_back(group.size());
    }
    return out;
}

CarveOutput carve(const TokenSequence& seq, const ToyModel& model, const CarveConfig& config) {
    validate_config(config, seq.segments.visual, model.spec.layers);

    const std::size_t c = config.carve_after_layer;
    attention::PrefillResult head = attention::run_layers(model, seq, 1, c, {c});
    const LayerArtifacts& artifacts = head.captured.at(c);
    const TokenSequence& at_carve = head.sequence;

    auto [stage1_kept, report] = stage1_prune(at_carve, artifacts, config);
    auto [set_a, set_b] = partition_sets(stage1_kept, report, config);

    const std::size_t merge_count = stage1_kept.size() - config.target_count;
    const Tensor z_visual = attention::extract_visual_slice(artifacts.output, at_carve);

    MergePlan plan;
    if (merge_count > 0 && !set_b.empty()) {
        const Tensor sim =
            similarity_matrix(gather_rows(z_visual, set_b), gather_rows(z_visual, set_a));
        plan = stage2_merge(set_a, set_b, sim, merge_count);
    } else {
        plan.survivors = stage1_kept;
    }

    // Merge the hidden states flowing through the model; mirror the merge on
    // the carve-layer Z rows so information metrics see the same grouping.
    const std::size_t sys = at_carve.segments.system;
    std::vector<std::size_t> visual_rows(stage1_kept.size());
    for (std::size_t i = 0; i < stage1_kept.size(); ++i) {
        visual_rows[i] = sys + stage1_kept[i];
    }
    const Tensor intermediate_embeddings = gather_rows(at_carve.embeddings, visual_rows);
    MergedTokens merged = merge_embeddings(intermediate_embeddings, stage1_kept, plan);
    MergedTokens merged_z = merge_embeddings(gather_rows(z_visual, stage1_kept), stage1_kept, plan);

    TokenSequence carved = reassemble(at_carve, merged.embeddings, plan.survivors);

    CarveResult result;
    result.carved_seq = carved;
    result.kept_visual_indices = plan.survivors;
    result.merge_map = plan.merges;
    result.token_sizes = merged.sizes;
    result.score_report = std::move(report);
    result.stage1_kept = std::move(stage1_kept);

    return finish_run(carved, model, config, merged_z.embeddings, std::move(result));
}

CarveOutput carve_with_selection(const TokenSequence& seq, const ToyModel& model,
                                 const CarveConfig& config,
                                 const std::vector<std::size_t>& kept_visual_indices) {
    validate_config(config, seq.segments.visual, model.spec.layers);
    if (kept_visual_indices.size() != config.target_count) {
        throw ConfigError("carve_with_selection: kept set size " +
                          std::to_string(kept_visual_indices.size()) +
                          " does not match target_count " + std::to_string(config.target_count));
    }
    std::vector<std::size_t> kept = kept_visual_indices;
    std::sort(kept.begin(), kept.end());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (kept[i] >= seq.segments.visual || (i > 0 && kept[i] == kept[i - 1])) {
            throw ConfigError("carve_with_selection: kept indices must be unique and in range");
        }
    }

    const std::size_t c = config.carve_after_layer;
    attention::PrefillResult head = attention::run_layers(model, seq, 1, c, {c});
    const TokenSequence& at_carve = head.sequence;
    const Tensor z_visual =
        attention::extract_visual_slice(head.captured.at(c).output, at_carve);

    const std::size_t sys = at_carve.segments.system;
    std::vector<std::size_t> visual_rows(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        visual_rows[i] = sys + kept[i];
    }
    TokenSequence carved =
        reassemble(at_carve, gather_rows(at_carve.embeddings, visual_rows), kept);

    CarveResult result;
    result.carved_seq = carved;
    result.kept_visual_indices = kept;
    result.token_sizes.assign(kept.size(), 1);
    result.stage1_kept = kept;

    return finish_run(carved, model, config, gather_rows(z_visual, kept), std::move(result));
}

}  // namespace tokencarve::carving
