#pragma once

#include "ctalvae/synthbench.hpp"

#include <json.hpp>

#include <string>

namespace ctalvae {

/// Everything a run needs, with working defaults throughout. `core` and
/// `train` are the full-scale settings used by the train/adapt/score
/// subcommands; `bench` is the self-contained quick benchmark setup.
struct RunConfig {
    CoreConfig core;
    TrainConfig train;
    int adapt_epochs = 100;
    int n_shots = 5;
    double threshold_q = 0.99;
    DomainSpec source = bench_source_default();
    DomainSpec target = bench_target_default();
    BenchParams bench;
    std::string out_dir = "out";

    void validate() const;
};

/// Strict parse: every key must be known (unknown keys are rejected with
/// their full path) and well-typed; absent keys keep their defaults.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace ctalvae
