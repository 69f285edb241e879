// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/ipgs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tokencarve/errors.hpp"

namespace tokencarve::ipgs {

namespace {

// (v - min) / (max - min); a constant vector maps to all zeros.
bool min_max_normalize(std::vector<double>& v, double& out_min, double& out_max) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    out_min = *lo;
    out_max = *hi;
    if (*hi == *lo) {
        std::fill(v.begin(), v.end(), 0.0);
        return true;
    }
    const double span = *hi - *lo;
    for (double& x : v) {
        x = (x - out_min) / span;
    }
    return false;
}

}  // namespace

std::vector<double> information_contribution(const Tensor& z_visual, double rank_rel_tol) {
    const std::size_t tokens = z_visual.rows();
    const linalg::SvdEconResult decomp = linalg::svd_econ(z_visual);
    const std::size_t r =
        linalg::rank_from_sigma(decomp.sigma, tokens, z_visual.cols(), rank_rel_tol);

    std::vector<double> scores(tokens, 0.0);
    for (std::size_t x = 0; x < tokens; ++x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            acc += std::abs(decomp.u.at(x, i) * decomp.sigma[i]);
        }
        scores[x] = acc;
    }
    return scores;
}

std::vector<double> attention_score(const Tensor& attn, const attention::TokenSequence& seq,
                                    AttentionMeanMode mode) {
    if (attn.ndim() != 3) {
        throw ShapeError("attention_score: attn must be heads x L x L");
    }
    const std::size_t heads = attn.dims()[0];
    const std::size_t len = attn.dims()[1];
    if (attn.dims()[2] != len || len != seq.length()) {
        throw ShapeError("attention_score: attn dims do not match sequence length");
    }
    const std::size_t visual = seq.segments.visual;
    if (visual == 0) {
        throw ShapeError("attention_score: visual segment is empty");
    }
    const std::size_t sys = seq.segments.system;

    std::vector<double> scores(visual, 0.0);
    for (std::size_t x = 0; x < visual; ++x) {
        const std::size_t col = sys + x;
        std::size_t q_begin = 0;
        std::size_t q_end = len;
        switch (mode) {
            case AttentionMeanMode::kAllQueries:
                break;
            case AttentionMeanMode::kMaskedQueries:
                q_begin = col;  // causal: rows before the column hold zeros
                break;
            case AttentionMeanMode::kVisualQueries:
                q_begin = sys;
                q_end = sys + visual;
                break;
        }
        double acc = 0.0;
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = q_begin; i < q_end; ++i) {
                acc += attn.at(h, i, col);
            }
        }
        scores[x] = acc / (static_cast<double>(heads) * static_cast<double>(q_end - q_begin));
    }
    return scores;
}

ScoreReport combined_score(std::vector<double> ics, std::vector<double> attn_score,
                           double lambda) {
    if (ics.size() != attn_score.size()) {
        throw ShapeError("combined_score: score vectors differ in length (" +
                         std::to_string(ics.size()) + " vs " + std::to_string(attn_score.size()) +
                         ")");
    }
    if (ics.empty()) {
        throw ShapeError("combined_score: empty score vectors");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("combined_score: lambda must lie in [0, 1]");
    }

    ScoreReport report;
    report.lambda = lambda;
    report.ics = std::move(ics);
    report.attn_score = std::move(attn_score);

    std::vector<double> ics_norm = report.ics;
    std::vector<double> attn_norm = report.attn_score;
    report.ics_degenerate = min_max_normalize(ics_norm, report.ics_min, report.ics_max);
    report.attn_degenerate = min_max_normalize(attn_norm, report.attn_min, report.attn_max);

    report.combined.resize(ics_norm.size());
    for (std::size_t i = 0; i < ics_norm.size(); ++i) {
        report.combined[i] = (1.0 - lambda) * ics_norm[i] + lambda * attn_norm[i];
    }
    return report;
}

std::vector<std::size_t> rank_tokens(const ScoreReport& report) {
    std::vector<std::size_t> order(report.combined.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return report.combined[a] > report.combined[b];
    });
    return order;
}

}  // namespace tokencarve::ipgs
