// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/ipgs.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "tokencarve/errors.hpp"
#include "tokencarve/rng.hpp"

using tokencarve::ConfigError;
using tokencarve::Rng;
using tokencarve::ShapeError;
using tokencarve::Tensor;
namespace attn = tokencarve::attention;
namespace ipgs = tokencarve::ipgs;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({rows, cols});
    for (double& v : t.data()) {
        v = rng.gaussian();
    }
    return t;
}

attn::TokenSequence sequence_of(std::size_t sys, std::size_t vis, std::size_t prompt,
                                std::size_t dim, std::uint64_t seed) {
    std::vector<std::int64_t> pos(sys + vis + prompt);
    std::iota(pos.begin(), pos.end(), 0);
    return attn::TokenSequence(random_matrix(sys + vis + prompt, dim, seed), {sys, vis, prompt},
                               std::move(pos));
}

}  // namespace

// ---------------------------------------------------------------------------
// information_contribution
// ---------------------------------------------------------------------------

TEST(InformationContribution, IdentityGivesUnitScores) {
    const std::vector<double> c = ipgs::information_contribution(Tensor::identity(3));
    ASSERT_EQ(c.size(), 3u);
    for (double v : c) {
        EXPECT_NEAR(v, 1.0, 1e-12);
    }
}

TEST(InformationContribution, DiagonalGivesSingularValues) {
    const Tensor z = Tensor::matrix(3, 3, {3, 0, 0, 0, 2, 0, 0, 0, 1});
    const std::vector<double> c = ipgs::information_contribution(z);
    EXPECT_NEAR(c[0], 3.0, 1e-12);
    EXPECT_NEAR(c[1], 2.0, 1e-12);
    EXPECT_NEAR(c[2], 1.0, 1e-12);
}

TEST(InformationContribution, MatchesGramOracle) {
    const Tensor z = random_matrix(6, 4, 411);
    const std::vector<double> got = ipgs::information_contribution(z);

    const oracle::GramSvd svd = oracle::gram_svd(oracle::to_matrix(z));
    for (std::size_t x = 0; x < 6; ++x) {
        double want = 0.0;
        for (std::size_t i = 0; i < svd.sigma.size(); ++i) {
            want += std::abs(svd.u[x][i] * svd.sigma[i]);
        }
        EXPECT_NEAR(got[x], want, 1e-9);
    }
}

TEST(InformationContribution, NonNegativeAndTotalMassIdentity) {
    const Tensor z = random_matrix(10, 6, 503);
    const std::vector<double> c = ipgs::information_contribution(z);

    double total = 0.0;
    for (double v : c) {
        EXPECT_GE(v, 0.0);
        total += v;
    }
    // Sum over tokens equals sum_i sigma_i * l1norm(U[:, i]).
    const oracle::GramSvd svd = oracle::gram_svd(oracle::to_matrix(z));
    double want = 0.0;
    for (std::size_t i = 0; i < svd.sigma.size(); ++i) {
        double l1 = 0.0;
        for (std::size_t x = 0; x < 10; ++x) {
            l1 += std::abs(svd.u[x][i]);
        }
        want += svd.sigma[i] * l1;
    }
    EXPECT_NEAR(total, want, 1e-9);
}

TEST(InformationContribution, RowPermutationEquivariant) {
    const Tensor z = random_matrix(8, 5, 601);
    const std::size_t perm[8] = {5, 2, 7, 0, 4, 6, 1, 3};
    Tensor permuted({8, 5});
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            permuted.at(i, j) = z.at(perm[i], j);
        }
    }
    const std::vector<double> base = ipgs::information_contribution(z);
    const std::vector<double> moved = ipgs::information_contribution(permuted);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_NEAR(moved[i], base[perm[i]], 1e-9);
    }
}

TEST(InformationContribution, PositiveScalingScalesScores) {
    const Tensor z = random_matrix(7, 4, 713);
    Tensor scaled = z;
    for (double& v : scaled.data()) {
        v *= 2.5;
    }
    const std::vector<double> base = ipgs::information_contribution(z);
    const std::vector<double> big = ipgs::information_contribution(scaled);
    EXPECT_EQ(oracle::insertion_rank_desc(base), oracle::insertion_rank_desc(big));
    for (std::size_t i = 0; i < base.size(); ++i) {
        EXPECT_NEAR(big[i], 2.5 * base[i], 1e-9 * std::abs(base[i]) + 1e-12);
    }
}

// ---------------------------------------------------------------------------
// attention_score
// ---------------------------------------------------------------------------

TEST(AttentionScore, UniformAttentionGivesOneOverL) {
    const std::size_t heads = 2, len = 6, vis = 3;
    Tensor attn_map({heads, len, len});
    for (double& v : attn_map.data()) {
        v = 1.0 / static_cast<double>(len);
    }
    const attn::TokenSequence seq = sequence_of(2, vis, 1, 4, 1);
    const std::vector<double> s = ipgs::attention_score(attn_map, seq);
    for (double v : s) {
        EXPECT_NEAR(v, 1.0 / static_cast<double>(len), 1e-15);
    }
}

TEST(AttentionScore, OneHotColumnTakesAllMass) {
    const std::size_t heads = 2, len = 5, vis = 3, sys = 1;
    Tensor attn_map({heads, len, len});
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < len; ++i) {
            attn_map.at(h, i, sys + 0) = 1.0;  // every query hits visual token 0
        }
    }
    const attn::TokenSequence seq = sequence_of(sys, vis, 1, 4, 2);
    const std::vector<double> s = ipgs::attention_score(attn_map, seq);
    EXPECT_NEAR(s[0], 1.0, 1e-15);
    EXPECT_NEAR(s[1], 0.0, 1e-15);
    EXPECT_NEAR(s[2], 0.0, 1e-15);
}

TEST(AttentionScore, CraftedTensorsMatchHandMeans) {
    const std::size_t heads = 2, len = 4, sys = 1, vis = 2;
    Tensor attn_map({heads, len, len});
    double value = 0.0;
    for (double& v : attn_map.data()) {
        v = value;
        value += 1.0;
    }
    const attn::TokenSequence seq = sequence_of(sys, vis, 1, 4, 3);
    const std::vector<double> got = ipgs::attention_score(attn_map, seq);
    for (std::size_t x = 0; x < vis; ++x) {
        double acc = 0.0;
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < len; ++i) {
                acc += attn_map.at(h, i, sys + x);
            }
        }
        EXPECT_DOUBLE_EQ(got[x], acc / static_cast<double>(heads * len));
    }
}

TEST(AttentionScore, MaskedAndVisualQueryModes) {
    const std::size_t heads = 1, len = 4, sys = 1, vis = 2;
    Tensor attn_map({heads, len, len});
    // Causal-looking support: row i has mass only at j <= i.
    attn_map.at(0, 0, 0) = 1.0;
    attn_map.at(0, 1, 0) = 0.5;
    attn_map.at(0, 1, 1) = 0.5;
    attn_map.at(0, 2, 1) = 0.25;
    attn_map.at(0, 2, 2) = 0.75;
    attn_map.at(0, 3, 1) = 0.1;
    attn_map.at(0, 3, 2) = 0.2;
    attn_map.at(0, 3, 3) = 0.7;
    const attn::TokenSequence seq = sequence_of(sys, vis, 1, 4, 4);

    const std::vector<double> all =
        ipgs::attention_score(attn_map, seq, ipgs::AttentionMeanMode::kAllQueries);
    EXPECT_DOUBLE_EQ(all[0], (0.5 + 0.25 + 0.1) / 4.0);
    EXPECT_DOUBLE_EQ(all[1], (0.75 + 0.2) / 4.0);

    // Masked mean: the column is averaged over the queries that can see it.
    const std::vector<double> masked =
        ipgs::attention_score(attn_map, seq, ipgs::AttentionMeanMode::kMaskedQueries);
    EXPECT_DOUBLE_EQ(masked[0], (0.5 + 0.25 + 0.1) / 3.0);
    EXPECT_DOUBLE_EQ(masked[1], (0.75 + 0.2) / 2.0);

    // Visual queries only: rows 1 and 2.
    const std::vector<double> visual =
        ipgs::attention_score(attn_map, seq, ipgs::AttentionMeanMode::kVisualQueries);
    EXPECT_DOUBLE_EQ(visual[0], (0.5 + 0.25) / 2.0);
    EXPECT_DOUBLE_EQ(visual[1], 0.75 / 2.0);
}

TEST(AttentionScore, EmptyVisualSegmentRejected) {
    Tensor attn_map({1, 3, 3});
    const attn::TokenSequence seq = sequence_of(2, 0, 1, 4, 5);
    EXPECT_THROW(ipgs::attention_score(attn_map, seq), ShapeError);
}

// ---------------------------------------------------------------------------
// combined_score
// ---------------------------------------------------------------------------

TEST(CombinedScore, LambdaZeroRanksLikeIcs) {
    Rng rng(888);
    std::vector<double> ics(20), attn_score(20);
    for (std::size_t i = 0; i < 20; ++i) {
        ics[i] = std::abs(rng.gaussian());
        attn_score[i] = std::abs(rng.gaussian());
    }
    const ipgs::ScoreReport report = ipgs::combined_score(ics, attn_score, 0.0);
    EXPECT_EQ(ipgs::rank_tokens(report), oracle::insertion_rank_desc(ics));
}

TEST(CombinedScore, LambdaOneRanksLikeAttention) {
    Rng rng(889);
    std::vector<double> ics(20), attn_score(20);
    for (std::size_t i = 0; i < 20; ++i) {
        ics[i] = std::abs(rng.gaussian());
        attn_score[i] = std::abs(rng.gaussian());
    }
    const ipgs::ScoreReport report = ipgs::combined_score(ics, attn_score, 1.0);
    EXPECT_EQ(ipgs::rank_tokens(report), oracle::insertion_rank_desc(attn_score));
}

TEST(CombinedScore, MidpointArithmetic) {
    // Inputs chosen so min-max normalization is the identity.
    const std::vector<double> c{1.0, 0.0, 0.5};
    const std::vector<double> s{0.0, 1.0, 0.5};
    const ipgs::ScoreReport report = ipgs::combined_score(c, s, 0.5);
    for (double v : report.combined) {
        EXPECT_DOUBLE_EQ(v, 0.5);
    }
}

TEST(CombinedScore, ConstantVectorNormalizesToZerosFlagged) {
    const std::vector<double> c{2.0, 2.0, 2.0};
    const std::vector<double> s{0.0, 1.0, 0.25};
    const ipgs::ScoreReport report = ipgs::combined_score(c, s, 0.25);
    EXPECT_TRUE(report.ics_degenerate);
    EXPECT_FALSE(report.attn_degenerate);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(report.combined[i], 0.25 * s[i]);
    }
}

TEST(CombinedScore, RecordsNormalizationBounds) {
    const std::vector<double> c{1.0, 5.0, 3.0};
    const std::vector<double> s{0.2, 0.1, 0.4};
    const ipgs::ScoreReport report = ipgs::combined_score(c, s, 0.5);
    EXPECT_DOUBLE_EQ(report.ics_min, 1.0);
    EXPECT_DOUBLE_EQ(report.ics_max, 5.0);
    EXPECT_DOUBLE_EQ(report.attn_min, 0.1);
    EXPECT_DOUBLE_EQ(report.attn_max, 0.4);
}

TEST(CombinedScore, RejectsLengthMismatchAndBadLambda) {
    EXPECT_THROW(ipgs::combined_score({1.0}, {1.0, 2.0}, 0.5), ShapeError);
    EXPECT_THROW(ipgs::combined_score({1.0}, {1.0}, -0.1), ConfigError);
    EXPECT_THROW(ipgs::combined_score({1.0}, {1.0}, 1.1), ConfigError);
}

// ---------------------------------------------------------------------------
// rank_tokens
// ---------------------------------------------------------------------------

TEST(RankTokens, DescendingWithExample) {
    ipgs::ScoreReport report;
    report.combined = {0.1, 0.9, 0.5};
    EXPECT_EQ(ipgs::rank_tokens(report), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(RankTokens, AllEqualGivesIdentity) {
    ipgs::ScoreReport report;
    report.combined = {0.5, 0.5, 0.5, 0.5};
    EXPECT_EQ(ipgs::rank_tokens(report), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(RankTokens, AgreesWithInsertionSortOracle) {
    Rng rng(4242);
    ipgs::ScoreReport report;
    report.combined.resize(50);
    for (double& v : report.combined) {
        v = rng.uniform();
    }
    EXPECT_EQ(ipgs::rank_tokens(report), oracle::insertion_rank_desc(report.combined));
}
