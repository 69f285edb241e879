// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokencarve/io.hpp"

#include <cstring>
#include <fstream>
#include <initializer_list>
#include <limits>

#include "tokencarve/errors.hpp"

namespace tokencarve::io {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'N', 'S'};
constexpr std::uint16_t kVersion = 1;

void append_bytes(std::string& out, const void* src, std::size_t n) {
    out.append(static_cast<const char*>(src), n);
}

template <typename T>
T read_le(const std::string& buf, std::size_t& offset, const char* what) {
    if (offset + sizeof(T) > buf.size()) {
        throw IoError(std::string("tensor file truncated while reading ") + what);
    }
    T value;
    std::memcpy(&value, buf.data() + offset, sizeof(T));
    offset += sizeof(T);
    return value;
}

using nlohmann::json;

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
        throw ConfigError("config: '" + section + "' must be an object");
    }
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("config: unknown key '" + item.key() + "' in '" + section + "'");
        }
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& section) {
    if (!obj.contains(key)) {
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + section + "." + key + "': " + e.what());
    }
}

ipgs::AttentionMeanMode parse_attention_mode(const std::string& name) {
    if (name == "all_queries") {
        return ipgs::AttentionMeanMode::kAllQueries;
    }
    if (name == "masked_queries") {
        return ipgs::AttentionMeanMode::kMaskedQueries;
    }
    if (name == "visual_queries") {
        return ipgs::AttentionMeanMode::kVisualQueries;
    }
    throw ConfigError("config: unknown attention_mean_mode '" + name + "'");
}

}  // namespace

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open tensor file " + path.string());
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t offset = 0;
    if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IoError("bad magic in tensor file " + path.string());
    }
    offset += sizeof(kMagic);

    const auto version = read_le<std::uint16_t>(buf, offset, "version");
    if (version != kVersion) {
        throw IoError("unsupported tensor file version " + std::to_string(version));
    }
    const auto dtype = read_le<std::uint8_t>(buf, offset, "dtype");
    if (dtype > 1) {
        throw IoError("unsupported tensor dtype code " + std::to_string(dtype));
    }
    const auto ndim = read_le<std::uint8_t>(buf, offset, "ndim");
    if (ndim < 1 || ndim > 3) {
        throw IoError("tensor ndim " + std::to_string(ndim) + " outside [1, 3]");
    }

    std::vector<std::size_t> dims(ndim);
    std::size_t count = 1;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        const auto d = read_le<std::uint32_t>(buf, offset, "dims");
        if (d == 0) {
            throw IoError("tensor file has a zero dimension");
        }
        dims[i] = d;
        count *= d;
    }

    const std::size_t elem_size = dtype == 0 ? 4 : 8;
    const std::size_t expected = count * elem_size;
    const std::size_t actual = buf.size() - offset;
    if (actual != expected) {
        throw IoError("tensor payload length mismatch: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(actual));
    }

    std::vector<double> data(count);
    if (dtype == 0) {
        for (std::size_t i = 0; i < count; ++i) {
            float v;
            std::memcpy(&v, buf.data() + offset + i * 4, 4);
            data[i] = static_cast<double>(v);
        }
    } else {
        std::memcpy(data.data(), buf.data() + offset, expected);
    }
    return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    std::string buf;
    buf.reserve(16 + tensor.size() * 8);
    append_bytes(buf, kMagic, sizeof(kMagic));
    const std::uint16_t version = kVersion;
    append_bytes(buf, &version, sizeof(version));
    const std::uint8_t dtype = 1;  // written tensors are always f64
    append_bytes(buf, &dtype, 1);
    const std::uint8_t ndim = static_cast<std::uint8_t>(tensor.ndim());
    append_bytes(buf, &ndim, 1);
    for (std::size_t d : tensor.dims()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) {
            throw IoError("tensor dimension too large for the file format");
        }
        const std::uint32_t d32 = static_cast<std::uint32_t>(d);
        append_bytes(buf, &d32, sizeof(d32));
    }
    append_bytes(buf, tensor.data().data(), tensor.size() * 8);
    write_text_atomic(path, buf);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw IoError("short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                      ec.message());
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig parse_run_config(const nlohmann::json& doc) {
    check_keys(doc, "<root>", {"model", "input", "carve", "sweep"});
    RunConfig config;

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        check_keys(m, "model", {"layers", "heads", "dim", "ff_dim", "seed", "rope_base",
                                "causal"});
        read_field(m, "layers", config.model.layers, "model");
        read_field(m, "heads", config.model.heads, "model");
        read_field(m, "dim", config.model.dim, "model");
        read_field(m, "ff_dim", config.model.ff_dim, "model");
        read_field(m, "seed", config.model.seed, "model");
        read_field(m, "rope_base", config.model.rope_base, "model");
        read_field(m, "causal", config.model.causal, "model");
    }
    if (doc.contains("input")) {
        const json& i = doc.at("input");
        check_keys(i, "input", {"system_len", "visual_len", "prompt_len", "dim",
                                "effective_rank", "noise", "seed"});
        read_field(i, "system_len", config.input.system_len, "input");
        read_field(i, "visual_len", config.input.visual_len, "input");
        read_field(i, "prompt_len", config.input.prompt_len, "input");
        config.input.dim = config.model.dim;
        read_field(i, "dim", config.input.dim, "input");
        read_field(i, "effective_rank", config.input.effective_rank, "input");
        read_field(i, "noise", config.input.noise, "input");
        read_field(i, "seed", config.input.seed, "input");
    } else {
        config.input.dim = config.model.dim;
    }
    if (doc.contains("carve")) {
        const json& c = doc.at("carve");
        check_keys(c, "carve",
                   {"target_count", "merge_proportion", "lambda", "carve_after_layer",
                    "rank_rel_tol", "attention_mean_mode", "seed"});
        read_field(c, "target_count", config.carve.target_count, "carve");
        read_field(c, "merge_proportion", config.carve.merge_proportion, "carve");
        read_field(c, "lambda", config.carve.lambda, "carve");
        read_field(c, "carve_after_layer", config.carve.carve_after_layer, "carve");
        read_field(c, "rank_rel_tol", config.carve.rank_rel_tol, "carve");
        std::string mode;
        read_field(c, "attention_mean_mode", mode, "carve");
        if (!mode.empty()) {
            config.carve.attention_mean_mode = parse_attention_mode(mode);
        }
        read_field(c, "seed", config.carve.seed, "carve");
    }
    if (doc.contains("sweep")) {
        const json& s = doc.at("sweep");
        check_keys(s, "sweep",
                   {"strategies", "budgets", "seeds", "threads", "ablate_axis", "ablate_grid",
                    "time_repetitions"});
        read_field(s, "strategies", config.strategies, "sweep");
        read_field(s, "budgets", config.budgets, "sweep");
        read_field(s, "seeds", config.seeds, "sweep");
        read_field(s, "threads", config.threads, "sweep");
        read_field(s, "ablate_axis", config.ablate_axis, "sweep");
        read_field(s, "ablate_grid", config.ablate_grid, "sweep");
        read_field(s, "time_repetitions", config.time_repetitions, "sweep");
    }

    if (config.input.dim != config.model.dim) {
        throw ConfigError("config: input.dim must match model.dim");
    }
    if (config.strategies.empty()) {
        throw ConfigError("config: sweep.strategies must be non-empty");
    }
    for (const std::string& name : config.strategies) {
        (void)parse_strategy(name, config);
    }
    if (config.ablate_axis != "lambda" && config.ablate_axis != "rho") {
        throw ConfigError("config: sweep.ablate_axis must be 'lambda' or 'rho'");
    }
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError("config: cannot parse " + path.string() + ": " + e.what());
    }
    return parse_run_config(doc);
}

harness::Strategy parse_strategy(const std::string& name, const RunConfig& config) {
    if (name == "ipgs") {
        return harness::Strategy::ipgs(config.carve.lambda, config.carve.merge_proportion);
    }
    if (name == "attention_only") {
        return harness::Strategy::attention_only();
    }
    if (name == "ics_only") {
        return harness::Strategy::ics_only();
    }
    if (name == "random") {
        return harness::Strategy::random(config.carve.seed);
    }
    if (name == "none") {
        return harness::Strategy::none();
    }
    throw ConfigError("config: unknown strategy '" + name + "'");
}

harness::SweepSpec make_sweep_spec(const RunConfig& config) {
    harness::SweepSpec spec;
    spec.model = config.model;
    spec.input = config.input;
    spec.carve = config.carve;
    for (const std::string& name : config.strategies) {
        spec.strategies.push_back(parse_strategy(name, config));
    }
    spec.budgets = config.budgets;
    spec.seeds = config.seeds;
    spec.threads = config.threads;
    return spec;
}

}  // namespace tokencarve::io
