// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tokencarve/attention.hpp"
#include "tokencarve/ipgs.hpp"
#include "tokencarve/linalg.hpp"
#include "tokencarve/tensor.hpp"

namespace tokencarve::carving {

/// Knobs for the two-stage compression pipeline.
///
/// Stage I prunes the visual segment to round-half-up(target_count * (1 +
/// merge_proportion)) tokens by combined score; Stage II merges the excess
/// down to exactly target_count.
struct CarveConfig {
    std::size_t target_count = 16;   // L_vc, final visual token count
    double merge_proportion = 0.5;   // rho in [0, 1)
    double lambda = 0.5;             // combined-score weight in [0, 1]
    std::size_t carve_after_layer = 2;
    double rank_rel_tol = linalg::kDefaultRankRelTol;
    ipgs::AttentionMeanMode attention_mean_mode = ipgs::AttentionMeanMode::kAllQueries;
    std::uint64_t seed = 0;  // used by selection strategies that sample
};

/// Index bookkeeping produced by stage2_merge: which tokens merge where and
/// which survive. All indices are original visual-token indices.
struct MergePlan {
    std::vector<std::pair<std::size_t, std::size_t>> merges;  // source -> target
    std::vector<std::size_t> survivors;                       // ascending, size = target_count
};

/// Survivor embeddings after applying a merge plan.
struct MergedTokens {
    Tensor embeddings;                // survivors x dim, ascending original order
    std::vector<std::size_t> sizes;   // member count per survivor
};

struct CarveResult {
    attention::TokenSequence carved_seq;  // [system | carved visual | prompt]
    std::vector<std::size_t> kept_visual_indices;  // ascending, size = target_count
    std::vector<std::pair<std::size_t, std::size_t>> merge_map;  // source -> target
    std::vector<std::size_t> token_sizes;  // aligned with kept_visual_indices
    ipgs::ScoreReport score_report;
    std::vector<std::size_t> stage1_kept;  // ascending intermediate survivors
};

/// carve() return value: bookkeeping plus the outputs of the resumed run.
struct CarveOutput {
    CarveResult result;
    attention::TokenSequence final_sequence;  // post feed-forward hidden states
    Tensor carve_z_visual;  // survivor rows (merged) of the carve-layer Z visual slice
    Tensor final_z_visual;  // visual slice of the last layer's Z for the carved run
    std::size_t rank_carve_layer = 0;
    std::size_t rank_final = 0;
};

std::size_t round_half_up(double x);

/// Stage-I intermediate token count for a config.
std::size_t stage1_count(const CarveConfig& config);

void validate_config(const CarveConfig& config, std::size_t visual_len, std::size_t layers);

/// Score the visual tokens of the captured carve layer and keep the top
/// stage1_count(config) of them. Returns the kept original indices in
/// ascending order plus the full score report.
std::pair<std::vector<std::size_t>, ipgs::ScoreReport> stage1_prune(
    const attention::TokenSequence& seq, const attention::LayerArtifacts& artifacts,
    const CarveConfig& config);

/// Split the intermediate tokens by combined score: SetA gets the top
/// ceil(k/2), SetB the rest. Both are returned in score order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition_sets(
    const std::vector<std::size_t>& intermediate, const ipgs::ScoreReport& report,
    const CarveConfig& config);

/// Cosine similarity between every SetB row and every SetA row. Rows are L2
/// normalized first; any pair involving a zero-norm row scores -1.
Tensor similarity_matrix(const Tensor& set_b_rows, const Tensor& set_a_rows);

/// Pick the merge_count SetB tokens most similar to SetA and assign each to
/// its best SetA partner.
MergePlan stage2_merge(const std::vector<std::size_t>& set_a,
                       const std::vector<std::size_t>& set_b, const Tensor& similarity,
                       std::size_t merge_count);

/// Apply a merge plan to token rows: each survivor becomes the mean of its
/// member rows (itself plus everything merged into it).
MergedTokens merge_embeddings(const Tensor& rows, const std::vector<std::size_t>& row_indices,
                              const MergePlan& plan);

/// The full pipeline: run layers up to the carve layer, prune and merge the
/// visual segment, reassemble with original position ids, resume the
/// remaining layers and the final feed-forward.
CarveOutput carve(const attention::TokenSequence& seq, const attention::ToyModel& model,
                  const CarveConfig& config);

/// Same pipeline with an externally chosen kept set instead of IPGS scoring
/// and merging (baseline strategies).
CarveOutput carve_with_selection(const attention::TokenSequence& seq,
                                 const attention::ToyModel& model, const CarveConfig& config,
                                 const std::vector<std::size_t>& kept_visual_indices);

}  // namespace tokencarve::carving
