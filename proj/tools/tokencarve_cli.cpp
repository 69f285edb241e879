// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Links the C API only; configuration merging and
// argument handling live here, all computation lives behind tokencarve.h.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tokencarve/tokencarve.h"

using nlohmann::json;

namespace {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

LogLevel log_level() {
    const char* env = std::getenv("CARVE_LOG");
    if (env == nullptr) {
        return LogLevel::kWarn;
    }
    const std::string value(env);
    if (value == "debug") return LogLevel::kDebug;
    if (value == "info") return LogLevel::kInfo;
    if (value == "error") return LogLevel::kError;
    return LogLevel::kWarn;
}

void log_info(const std::string& message) {
    if (log_level() <= LogLevel::kInfo) {
        std::cerr << "info: " << message << "\n";
    }
}

const char* status_kind(tc_status status) {
    switch (status) {
        case TC_OK:
            return "ok";
        case TC_ERR_CONFIG:
            return "config";
        case TC_ERR_NUMERIC:
            return "numeric";
        case TC_ERR_IO:
            return "io";
        case TC_ERR_INVALID:
            return "invalid";
    }
    return "unknown";
}

int exit_code_for(tc_status status) {
    switch (status) {
        case TC_OK:
            return 0;
        case TC_ERR_CONFIG:
        case TC_ERR_INVALID:
            return 1;
        case TC_ERR_NUMERIC:
            return 2;
        case TC_ERR_IO:
            return 3;
    }
    return 2;
}

// Structured error on stderr, then the mapped exit code.
int report_error(tc_status status, const std::string& message) {
    const json err{{"error",
                    {{"code", static_cast<int>(status)},
                     {"kind", status_kind(status)},
                     {"message", message}}}};
    std::cerr << err.dump() << "\n";
    return exit_code_for(status);
}

int report_status(tc_status status) {
    if (status == TC_OK) {
        return 0;
    }
    return report_error(status, tc_last_error());
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string strategies;
    std::string budgets;
    std::string axis;
};

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

// Load the config file (or start from {}) and fold the command-line
// overrides into the document the library will validate.
int build_config(const CommonArgs& args, std::string& config_out) {
    json doc = json::object();
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) {
            return report_error(TC_ERR_IO, "cannot open config file " + args.config_path);
        }
        try {
            in >> doc;
        } catch (const json::exception& e) {
            return report_error(TC_ERR_CONFIG,
                                "cannot parse " + args.config_path + ": " + e.what());
        }
    }
    if (args.seed) {
        doc["input"]["seed"] = *args.seed;
    }
    if (args.threads) {
        doc["sweep"]["threads"] = *args.threads;
    }
    if (!args.strategies.empty()) {
        doc["sweep"]["strategies"] = split_csv(args.strategies);
    }
    if (!args.budgets.empty()) {
        json budgets = json::array();
        for (const std::string& b : split_csv(args.budgets)) {
            try {
                budgets.push_back(std::stoull(b));
            } catch (const std::exception&) {
                return report_error(TC_ERR_CONFIG, "bad budget value '" + b + "'");
            }
        }
        doc["sweep"]["budgets"] = budgets;
    }
    if (!args.axis.empty()) {
        doc["sweep"]["ablate_axis"] = args.axis;
    }
    config_out = doc.dump();
    return 0;
}

void add_common_options(CLI::App* cmd, CommonArgs& args, bool with_sweep_flags) {
    cmd->add_option("--config", args.config_path, "JSON run configuration path");
    cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed", args.seed, "override input.seed");
    if (with_sweep_flags) {
        cmd->add_option("--threads", args.threads, "override sweep.threads");
        cmd->add_option("--strategies", args.strategies,
                        "comma-separated strategy list (ipgs,attention_only,ics_only,random,none)");
        cmd->add_option("--budgets", args.budgets, "comma-separated target counts");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TokenCarve: two-stage visual token compression on a toy attention pipeline"};
    app.require_subcommand(1);

    CommonArgs gen_args, carve_args, sweep_args, ablate_args;
    std::string carve_system, carve_visual, carve_prompt;
    std::string rank_path;
    double rank_tol = 0.0;

    CLI::App* gen = app.add_subcommand("gen", "emit synthetic input tensors");
    add_common_options(gen, gen_args, false);

    CLI::App* carve = app.add_subcommand("carve", "run the two-stage compression once");
    add_common_options(carve, carve_args, false);
    carve->add_option("--system", carve_system, "system segment tensor (.ctns)");
    carve->add_option("--visual", carve_visual, "visual segment tensor (.ctns)");
    carve->add_option("--prompt", carve_prompt, "prompt segment tensor (.ctns)");

    CLI::App* sweep = app.add_subcommand("sweep", "budget x strategy x seed benchmark sweep");
    add_common_options(sweep, sweep_args, true);

    CLI::App* ablate = app.add_subcommand("ablate", "lambda or rho ablation grid");
    add_common_options(ablate, ablate_args, false);
    ablate->add_option("--axis", ablate_args.axis, "ablation axis: lambda or rho");

    CLI::App* rank = app.add_subcommand("rank", "numerical rank of a tensor file");
    rank->add_option("tensor", rank_path, "tensor file (.ctns)")->required();
    rank->add_option("--tol", rank_tol, "relative singular value cutoff (default 1e-10)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        std::string config;
        if (int rc = build_config(gen_args, config); rc != 0) {
            return rc;
        }
        const tc_status status = tc_run_gen(config.c_str(), gen_args.out_dir.c_str());
        if (status == TC_OK) {
            log_info("wrote synthetic input to " + gen_args.out_dir);
        }
        return report_status(status);
    }

    if (carve->parsed()) {
        std::string config;
        if (int rc = build_config(carve_args, config); rc != 0) {
            return rc;
        }
        const tc_status status = tc_run_carve(
            config.c_str(), carve_system.empty() ? nullptr : carve_system.c_str(),
            carve_visual.empty() ? nullptr : carve_visual.c_str(),
            carve_prompt.empty() ? nullptr : carve_prompt.c_str(), carve_args.out_dir.c_str());
        if (status == TC_OK) {
            log_info("wrote carve outputs to " + carve_args.out_dir);
        }
        return report_status(status);
    }

    if (sweep->parsed()) {
        std::string config;
        if (int rc = build_config(sweep_args, config); rc != 0) {
            return rc;
        }
        const tc_status status = tc_run_sweep(config.c_str(), sweep_args.out_dir.c_str());
        if (status == TC_OK) {
            log_info("wrote sweep outputs to " + sweep_args.out_dir);
        }
        return report_status(status);
    }

    if (ablate->parsed()) {
        std::string config;
        if (int rc = build_config(ablate_args, config); rc != 0) {
            return rc;
        }
        const tc_status status = tc_run_ablate(config.c_str(), ablate_args.out_dir.c_str());
        if (status == TC_OK) {
            log_info("wrote ablation outputs to " + ablate_args.out_dir);
        }
        return report_status(status);
    }

    if (rank->parsed()) {
        tc_tensor* tensor = nullptr;
        tc_status status = tc_tensor_read(rank_path.c_str(), &tensor);
        if (status != TC_OK) {
            return report_status(status);
        }
        size_t value = 0;
        status = tc_tensor_rank(tensor, rank_tol, &value);
        if (status != TC_OK) {
            tc_tensor_free(tensor);
            return report_status(status);
        }
        const size_t ndim = tc_tensor_ndim(tensor);
        std::vector<uint32_t> dims(ndim);
        tc_tensor_dims(tensor, dims.data());
        tc_tensor_free(tensor);

        json out{{"rank", value},
                 {"dims", dims},
                 {"rel_tol", rank_tol <= 0.0 ? 1e-10 : rank_tol}};
        std::cout << out.dump() << "\n";
        return 0;
    }

    return 1;
}
