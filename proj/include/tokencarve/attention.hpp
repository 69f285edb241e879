// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "tokencarve/tensor.hpp"

namespace tokencarve::attention {

/// Rotary position embedding parameters. head_dim must be even.
struct RopeParams {
    std::size_t head_dim = 16;
    double base = 10000.0;
};

/// Per-layer projection weights, each dim x dim.
struct LayerWeights {
    Tensor wq;
    Tensor wk;
    Tensor wv;
    Tensor wo;
};

struct ToyModelSpec {
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t dim = 64;
    std::size_t ff_dim = 128;
    std::uint64_t seed = 42;
    double rope_base = 10000.0;
    bool causal = true;
};

/// Decoder-style toy model: rotary attention layers plus one final
/// feed-forward block. Weights are generated deterministically from the seed.
struct ToyModel {
    ToyModelSpec spec;
    std::vector<LayerWeights> layer_weights;
    Tensor ff_w1;  // dim x ff_dim
    Tensor ff_w2;  // ff_dim x dim

    std::size_t head_dim() const { return spec.dim / spec.heads; }
    RopeParams rope() const { return {head_dim(), spec.rope_base}; }
};

ToyModel make_toy_model(const ToyModelSpec& spec);

struct SegmentLengths {
    std::size_t system = 0;
    std::size_t visual = 0;
    std::size_t prompt = 0;

    std::size_t total() const { return system + visual + prompt; }
};

/// Concatenated [system | visual | prompt] token embeddings with per-token
/// position ids. Position ids are strictly increasing; after carving they
/// stay increasing but may be non-contiguous.
struct TokenSequence {
    Tensor embeddings;  // total x dim
    SegmentLengths segments;
    std::vector<std::int64_t> position_ids;

    TokenSequence() = default;
    TokenSequence(Tensor embeddings, SegmentLengths segments,
                  std::vector<std::int64_t> position_ids);

    std::size_t length() const { return embeddings.rows(); }
    std::size_t dim() const { return embeddings.cols(); }
};

/// Captured per-layer state: attn is heads x L x L, output is the attention
/// output matrix A*V (heads concatenated), L x dim.
struct LayerArtifacts {
    Tensor attn;
    Tensor output;
};

struct PrefillResult {
    TokenSequence sequence;
    std::map<std::size_t, LayerArtifacts> captured;  // keyed by 1-based layer index
};

/// Rotate each row of x (L x head_dim) pairwise by angles
/// pos * base^(-2j/head_dim). Norm-preserving per row.
Tensor apply_rope(const Tensor& x, std::span<const std::int64_t> position_ids,
                  const RopeParams& params);

/// One attention layer: per-head A = softmax(rope(Q) rope(K)^T / sqrt(d_k))
/// with optional causal mask, Z = A*V, new embeddings = Z*W_O + residual.
std::pair<LayerArtifacts, TokenSequence> attention_layer(const TokenSequence& seq,
                                                         const LayerWeights& weights,
                                                         const RopeParams& params, bool causal);

/// Run all layers plus the final feed-forward; artifacts of the requested
/// layers (1-based) are retained.
PrefillResult prefill(const ToyModel& model, const TokenSequence& seq,
                      const std::set<std::size_t>& capture_layers);

/// Run layers [first_layer, last_layer] (1-based, inclusive) without the
/// final feed-forward. Building block for pipelines that splice the sequence
/// between layers.
PrefillResult run_layers(const ToyModel& model, const TokenSequence& seq,
                         std::size_t first_layer, std::size_t last_layer,
                         const std::set<std::size_t>& capture_layers);

/// The final feed-forward block: tanh MLP with a residual connection.
TokenSequence apply_final_ffn(const ToyModel& model, const TokenSequence& seq);

/// Rows [system, system + visual) of a L x dim matrix.
Tensor extract_visual_slice(const Tensor& z, const TokenSequence& seq);

struct SyntheticSpec {
    std::size_t system_len = 8;
    std::size_t visual_len = 64;
    std::size_t prompt_len = 8;
    std::size_t dim = 64;
    std::size_t effective_rank = 12;
    double noise = 1e-3;
    std::uint64_t seed = 7;
};

/// Seeded stand-in for a multimodal prefill input: the visual segment is a
/// rank-r factor product plus gaussian noise, text segments are gaussian.
TokenSequence make_synthetic_input(const SyntheticSpec& spec);

}  // namespace tokencarve::attention
