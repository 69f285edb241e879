// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tokencarve/attention.hpp"
#include "tokencarve/carve.hpp"
#include "tokencarve/harness.hpp"
#include "tokencarve/tensor.hpp"

namespace tokencarve::io {

/// Binary tensor container:
///   magic "CTNS" | u16 version=1 | u8 dtype (0=f32, 1=f64) | u8 ndim (1-3)
///   | u32 dims[ndim] | row-major little-endian payload.
/// Files written by write_tensor round-trip bit-exactly; f32 files are
/// upcast to f64 on read.
Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);

/// Write-to-temp plus atomic rename so failed runs leave no partial files.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

/// Full run configuration: model, input, carve knobs and sweep grid.
struct RunConfig {
    attention::ToyModelSpec model;
    attention::SyntheticSpec input;
    carving::CarveConfig carve;
    std::vector<std::string> strategies = {"ipgs", "attention_only"};
    std::vector<std::size_t> budgets = {8, 16, 24, 32};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::size_t threads = 1;
    std::string ablate_axis = "lambda";
    std::vector<double> ablate_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::size_t time_repetitions = 0;  // 0 disables the timing arm
};

/// Parse and validate a config document. Unknown keys are rejected; missing
/// keys take the defaults above.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

harness::Strategy parse_strategy(const std::string& name, const RunConfig& config);

/// The sweep spec implied by a config document.
harness::SweepSpec make_sweep_spec(const RunConfig& config);

}  // namespace tokencarve::io
