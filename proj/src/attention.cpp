// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/attention.hpp"

#include <cmath>
#include <string>

#include "tokencarve/errors.hpp"
#include "tokencarve/linalg.hpp"
#include "tokencarve/rng.hpp"

namespace tokencarve::attention {

namespace {

// Masked scores get a finite sentinel; exp(kMaskValue - row_max) underflows
// to exactly zero for any realistic row maximum, so masked entries of the
// attention matrix are exact zeros.
constexpr double kMaskValue = -1e30;

Tensor gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    Tensor t({rows, cols});
    for (double& v : t.data()) {
        v = rng.gaussian() * scale;
    }
    return t;
}

void validate_rope(const RopeParams& params) {
    if (params.head_dim == 0 || params.head_dim % 2 != 0) {
        throw ConfigError("rope: head_dim must be even and positive, got " +
                          std::to_string(params.head_dim));
    }
    if (params.base <= 0.0) {
        throw ConfigError("rope: base must be positive");
    }
}

}  // namespace

TokenSequence::TokenSequence(Tensor embeddings_in, SegmentLengths segments_in,
                             std::vector<std::int64_t> position_ids_in)
    : embeddings(std::move(embeddings_in)),
      segments(segments_in),
      position_ids(std::move(position_ids_in)) {
    const std::size_t total = embeddings.rows();
    if (segments.total() != total) {
        throw ShapeError("token sequence: segment lengths sum to " +
                         std::to_string(segments.total()) + " but embeddings have " +
                         std::to_string(total) + " rows");
    }
    if (position_ids.size() != total) {
        throw ShapeError("token sequence: position id count does not match rows");
    }
    for (std::size_t i = 0; i < position_ids.size(); ++i) {
        if (position_ids[i] < 0) {
            throw ConfigError("token sequence: position ids must be non-negative");
        }
        if (i > 0 && position_ids[i] <= position_ids[i - 1]) {
            throw ConfigError("token sequence: position ids must be strictly increasing");
        }
    }
}

ToyModel make_toy_model(const ToyModelSpec& spec) {
    if (spec.layers == 0 || spec.heads == 0 || spec.dim == 0 || spec.ff_dim == 0) {
        throw ConfigError("toy model: layers, heads, dim and ff_dim must be positive");
    }
    if (spec.dim % spec.heads != 0) {
        throw ConfigError("toy model: dim " + std::to_string(spec.dim) +
                          " not divisible by heads " + std::to_string(spec.heads));
    }
    validate_rope({spec.dim / spec.heads, spec.rope_base});

    ToyModel model;
    model.spec = spec;
    Rng rng(spec.seed);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    const double ff_scale = 1.0 / std::sqrt(static_cast<double>(spec.ff_dim));
    model.layer_weights.reserve(spec.layers);
    for (std::size_t l = 0; l < spec.layers; ++l) {
        LayerWeights w;
        w.wq = gaussian_matrix(rng, spec.dim, spec.dim, proj_scale);
        w.wk = gaussian_matrix(rng, spec.dim, spec.dim, proj_scale);
        w.wv = gaussian_matrix(rng, spec.dim, spec.dim, proj_scale);
        w.wo = gaussian_matrix(rng, spec.dim, spec.dim, proj_scale);
        model.layer_weights.push_back(std::move(w));
    }
    model.ff_w1 = gaussian_matrix(rng, spec.dim, spec.ff_dim, proj_scale);
    model.ff_w2 = gaussian_matrix(rng, spec.ff_dim, spec.dim, ff_scale);
    return model;
}

Tensor apply_rope(const Tensor& x, std::span<const std::int64_t> position_ids,
                  const RopeParams& params) {
    validate_rope(params);
    const std::size_t rows = x.rows();
    const std::size_t dk = x.cols();
    if (dk != params.head_dim) {
        throw ShapeError("apply_rope: input has " + std::to_string(dk) +
                         " columns, expected head_dim " + std::to_string(params.head_dim));
    }
    if (position_ids.size() != rows) {
        throw ShapeError("apply_rope: position id count does not match rows");
    }

    const std::size_t half = dk / 2;
    std::vector<double> freqs(half);
    for (std::size_t j = 0; j < half; ++j) {
        freqs[j] = std::pow(params.base, -2.0 * static_cast<double>(j) / static_cast<double>(dk));
    }

    Tensor out({rows, dk});
    for (std::size_t i = 0; i < rows; ++i) {
        const double pos = static_cast<double>(position_ids[i]);
        const double* src = x.row(i).data();
        double* dst = out.row(i).data();
        for (std::size_t j = 0; j < half; ++j) {
            const double angle = pos * freqs[j];
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            const double a = src[2 * j];
            const double b = src[2 * j + 1];
            dst[2 * j] = a * c - b * s;
            dst[2 * j + 1] = a * s + b * c;
        }
    }
    return out;
}

std::pair<LayerArtifacts, TokenSequence> attention_layer(const TokenSequence& seq,
                                                         const LayerWeights& weights,
                                                         const RopeParams& params, bool causal) {
    const std::size_t len = seq.length();
    const std::size_t dim = seq.dim();
    if (weights.wq.rows() != dim || weights.wq.cols() != dim || weights.wk.rows() != dim ||
        weights.wv.rows() != dim || weights.wo.rows() != dim) {
        throw ShapeError("attention_layer: projection weights do not match embedding dim " +
                         std::to_string(dim));
    }
    const std::size_t dk = params.head_dim;
    if (dk == 0 || dim % dk != 0) {
        throw ShapeError("attention_layer: dim not divisible by head_dim");
    }
    const std::size_t heads = dim / dk;

    const Tensor q = linalg::matmul(seq.embeddings, weights.wq);
    const Tensor k = linalg::matmul(seq.embeddings, weights.wk);
    const Tensor v = linalg::matmul(seq.embeddings, weights.wv);

    LayerArtifacts artifacts{Tensor({heads, len, len}), Tensor({len, dim})};
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t base_col = h * dk;
        Tensor qh({len, dk});
        Tensor kh({len, dk});
        for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t j = 0; j < dk; ++j) {
                qh.at(i, j) = q.at(i, base_col + j);
                kh.at(i, j) = k.at(i, base_col + j);
            }
        }
        const Tensor qr = apply_rope(qh, seq.position_ids, params);
        const Tensor kr = apply_rope(kh, seq.position_ids, params);

        Tensor scores = linalg::matmul_transposed_b(qr, kr);
        for (std::size_t i = 0; i < len; ++i) {
            double* row = scores.row(i).data();
            for (std::size_t j = 0; j < len; ++j) {
                row[j] = causal && j > i ? kMaskValue : row[j] * inv_sqrt_dk;
            }
        }
        const Tensor attn = linalg::softmax_rows(scores);

        for (std::size_t i = 0; i < len; ++i) {
            const double* arow = attn.row(i).data();
            for (std::size_t j = 0; j < len; ++j) {
                artifacts.attn.at(h, i, j) = arow[j];
            }
            // Z_h row i = sum_j A[i,j] * V_h[j]; fixed summation order.
            double* zrow = artifacts.output.row(i).data();
            for (std::size_t j = 0; j < len; ++j) {
                const double a = arow[j];
                if (a == 0.0) {
                    continue;
                }
                const double* vrow = v.row(j).data();
                for (std::size_t c = 0; c < dk; ++c) {
                    zrow[base_col + c] += a * vrow[base_col + c];
                }
            }
        }
    }

    Tensor projected = linalg::matmul(artifacts.output, weights.wo);
    for (std::size_t i = 0; i < projected.size(); ++i) {
        projected.at(i) += seq.embeddings.at(i);
    }
    TokenSequence next(std::move(projected), seq.segments, seq.position_ids);
    return {std::move(artifacts), std::move(next)};
}

PrefillResult run_layers(const ToyModel& model, const TokenSequence& seq,
                         std::size_t first_layer, std::size_t last_layer,
                         const std::set<std::size_t>& capture_layers) {
    if (seq.length() == 0) {
        throw ConfigError("prefill: empty sequence");
    }
    if (seq.dim() != model.spec.dim) {
        throw ShapeError("prefill: sequence dim " + std::to_string(seq.dim()) +
                         " does not match model dim " + std::to_string(model.spec.dim));
    }
    if (first_layer < 1 || last_layer > model.spec.layers || first_layer > last_layer + 1) {
        throw ConfigError("prefill: layer range [" + std::to_string(first_layer) + ", " +
                          std::to_string(last_layer) + "] invalid for " +
                          std::to_string(model.spec.layers) + " layers");
    }
    for (std::size_t layer : capture_layers) {
        if (layer < first_layer || layer > last_layer) {
            throw ConfigError("prefill: capture layer " + std::to_string(layer) +
                              " outside the requested range");
        }
    }

    PrefillResult result;
    result.sequence = seq;
    for (std::size_t l = first_layer; l <= last_layer; ++l) {
        auto [artifacts, next] = attention_layer(result.sequence, model.layer_weights[l - 1],
                                                 model.rope(), model.spec.causal);
        result.sequence = std::move(next);
        if (capture_layers.contains(l)) {
            result.captured.emplace(l, std::move(artifacts));
        }
    }
    return result;
}

TokenSequence apply_final_ffn(const ToyModel& model, const TokenSequence& seq) {
    Tensor hidden = linalg::matmul(seq.embeddings, model.ff_w1);
    for (double& x : hidden.data()) {
        x = std::tanh(x);
    }
    Tensor ff_out = linalg::matmul(hidden, model.ff_w2);
    for (std::size_t i = 0; i < ff_out.size(); ++i) {
        ff_out.at(i) += seq.embeddings.at(i);
    }
    return TokenSequence(std::move(ff_out), seq.segments, seq.position_ids);
}

PrefillResult prefill(const ToyModel& model, const TokenSequence& seq,
                      const std::set<std::size_t>& capture_layers) {
    for (std::size_t layer : capture_layers) {
        if (layer < 1 || layer > model.spec.layers) {
            throw ConfigError("prefill: capture layer " + std::to_string(layer) +
                              " outside [1, " + std::to_string(model.spec.layers) + "]");
        }
    }
    PrefillResult result = run_layers(model, seq, 1, model.spec.layers, capture_layers);
    result.sequence = apply_final_ffn(model, result.sequence);
    return result;
}

Tensor extract_visual_slice(const Tensor& z, const TokenSequence& seq) {
    if (z.rows() != seq.length()) {
        throw ShapeError("extract_visual_slice: matrix rows " + std::to_string(z.rows()) +
                         " do not match sequence length " + std::to_string(seq.length()));
    }
    if (seq.segments.visual == 0) {
        throw ShapeError("extract_visual_slice: visual segment is empty");
    }
    return z.slice_rows(seq.segments.system, seq.segments.visual);
}

TokenSequence make_synthetic_input(const SyntheticSpec& spec) {
    if (spec.visual_len == 0 || spec.dim == 0) {
        throw ConfigError("synthetic input: visual_len and dim must be positive");
    }
    if (spec.effective_rank > std::min(spec.visual_len, spec.dim)) {
        throw ConfigError("synthetic input: effective_rank " +
                          std::to_string(spec.effective_rank) + " exceeds min(visual_len, dim)");
    }
    if (spec.noise < 0.0) {
        throw ConfigError("synthetic input: noise must be non-negative");
    }

    Rng rng(spec.seed);
    const std::size_t total = spec.system_len + spec.visual_len + spec.prompt_len;
    Tensor embeddings({total, spec.dim});

    auto fill_gaussian_rows = [&](std::size_t row0, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            double* row = embeddings.row(row0 + i).data();
            for (std::size_t j = 0; j < spec.dim; ++j) {
                row[j] = rng.gaussian();
            }
        }
    };

    fill_gaussian_rows(0, spec.system_len);

    // Visual segment: scaled rank-r factor product plus noise. The 1/sqrt(r)
    // factor keeps entry variance near 1, matching the text segments.
    if (spec.effective_rank > 0) {
        const Tensor g1 = gaussian_matrix(rng, spec.visual_len, spec.effective_rank, 1.0);
        const Tensor g2 = gaussian_matrix(rng, spec.effective_rank, spec.dim, 1.0);
        const Tensor product = linalg::matmul(g1, g2);
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.effective_rank));
        for (std::size_t i = 0; i < spec.visual_len; ++i) {
            double* row = embeddings.row(spec.system_len + i).data();
            const double* src = product.row(i).data();
            for (std::size_t j = 0; j < spec.dim; ++j) {
                row[j] = src[j] * scale;
            }
        }
    }
    if (spec.noise > 0.0) {
        for (std::size_t i = 0; i < spec.visual_len; ++i) {
            double* row = embeddings.row(spec.system_len + i).data();
            for (std::size_t j = 0; j < spec.dim; ++j) {
                row[j] += spec.noise * rng.gaussian();
            }
        }
    }

    fill_gaussian_rows(spec.system_len + spec.visual_len, spec.prompt_len);

    std::vector<std::int64_t> position_ids(total);
    for (std::size_t i = 0; i < total; ++i) {
        position_ids[i] = static_cast<std::int64_t>(i);
    }
    return TokenSequence(std::move(embeddings),
                         {spec.system_len, spec.visual_len, spec.prompt_len},
                         std::move(position_ids));
}

}  // namespace tokencarve::attention
