// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "tokencarve/attention.hpp"
#include "tokencarve/linalg.hpp"
#include "tokencarve/tensor.hpp"

namespace tokencarve::ipgs {

/// How attention mass received by a token is averaged over query rows.
enum class AttentionMeanMode {
    /// Mean over all heads and all query rows; causally masked zeros count.
    kAllQueries,
    /// Mean over heads and only the query rows a causal column can see.
    kMaskedQueries,
    /// Mean over heads and query rows inside the visual segment.
    kVisualQueries,
};

/// Per-visual-token scores plus the normalization used to combine them.
struct ScoreReport {
    std::vector<double> ics;         // information contribution C(x)
    std::vector<double> attn_score;  // attention score S(x)
    std::vector<double> combined;    // E(x) = (1-lambda)*norm(C) + lambda*norm(S)
    double lambda = 0.5;
    double ics_min = 0.0, ics_max = 0.0;
    double attn_min = 0.0, attn_max = 0.0;
    bool ics_degenerate = false;   // constant vector normalized to zeros
    bool attn_degenerate = false;
};

/// Information contribution of each token: C(x) = sum_i |u_xi * sigma_i| over
/// the first r singular components, r = numerical rank of z_visual.
std::vector<double> information_contribution(const Tensor& z_visual,
                                             double rank_rel_tol = linalg::kDefaultRankRelTol);

/// Mean attention received by each visual token across heads and query rows.
/// attn is heads x L x L; the visual columns are seq.segments.system + x.
std::vector<double> attention_score(const Tensor& attn, const attention::TokenSequence& seq,
                                    AttentionMeanMode mode = AttentionMeanMode::kAllQueries);

/// Min-max normalize both score vectors and blend with weight lambda.
ScoreReport combined_score(std::vector<double> ics, std::vector<double> attn_score,
                           double lambda);

/// Visual-token indices sorted by combined score descending, ties broken by
/// lower original index.
std::vector<std::size_t> rank_tokens(const ScoreReport& report);

}  // namespace tokencarve::ipgs
