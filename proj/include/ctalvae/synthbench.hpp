#pragma once

#include "ctalvae/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ctalvae {

struct AnomalySpec {
    double fraction = 0.07;  // share of flows overwritten by attack runs
    std::vector<std::string> types = {"burst", "scan", "exfil"};
    double magnitude = 4.0;

    void validate() const;
};

/// Parameters of one synthetic traffic domain. Benign features follow
/// per-receiver AR(1) processes with a seasonal component; anomalies
/// overwrite contiguous runs. Every flow is a pure function of the spec.
struct DomainSpec {
    std::string name = "source";
    int dim = 12;
    int receivers = 8;
    int flows_per_receiver = 750;
    double ar_min = 0.55;
    double ar_max = 0.9;
    double level_scale = 2.0;
    double noise_scale = 0.3;
    int season_period = 24;
    double season_scale = 0.5;
    AnomalySpec anomaly;
    std::uint64_t seed = 101;

    void validate() const;
};

/// The first flows of every receiver are always benign, so the earliest
/// windows are safe few-shot anchors without looking at labels.
constexpr int kBenignWarmup = 64;

struct GeneratedDomain {
    FeatureSchema schema;
    std::vector<FlowRecord> flows;  // receiver-major, time-ordered
    std::vector<Label> labels;      // parallel to flows
};

GeneratedDomain generate_domain(const DomainSpec& spec);

/// Same engine and seeded initialization as the full model, restricted to
/// the baseline objective (ae: reconstruction only, deterministic latent;
/// vae: reconstruction + KL).
TrainResult train_baseline(ModelKind kind,
                           const std::vector<Sequence>& sequences,
                           const DomainInfo& source, const CoreConfig& core,
                           const TrainConfig& cfg);

/// Benchmark defaults sized for minutes of CPU runtime; the full-scale
/// CoreConfig defaults stay untouched for direct pipeline use.
CoreConfig bench_core_default();
TrainConfig bench_train_default();
DomainSpec bench_source_default();
DomainSpec bench_target_default();

struct BenchParams {
    CoreConfig core = bench_core_default();
    TrainConfig train = bench_train_default();
    // Brief adaptation: long few-shot fine-tuning overfits the anchors and
    // deflates the quantile threshold fitted on their scores.
    int adapt_epochs = 10;
    int n_shots = 5;
    double threshold_q = 0.99;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    void validate() const;
};

struct MetricSummary {
    double accuracy = 0.0;
    double mcc = 0.0;
    double sensitivity = 0.0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::map<std::string, Metrics> models;  // keys: ctal_vae, vae, ae
};

struct BenchReport {
    DomainSpec source;
    DomainSpec target;
    BenchParams params;
    std::vector<SeedResult> per_seed;
    std::map<std::string, MetricSummary> medians;
    double runtime_seconds = 0.0;
};

/// Per seed: generate both domains, train ctal_vae/vae/ae on benign source
/// sequences from identical seeded initializations, adapt each on the same
/// n_shots label-free target anchors, fit the quantile threshold on the
/// anchor scores, score and evaluate the remaining target windows. Medians
/// are taken per metric across seeds.
BenchReport run_benchmark(const DomainSpec& source_spec,
                          const DomainSpec& target_spec,
                          const BenchParams& params);

nlohmann::json core_config_to_json(const CoreConfig& core);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
nlohmann::json domain_spec_to_json(const DomainSpec& spec);
nlohmann::json bench_params_to_json(const BenchParams& params);
nlohmann::json report_to_json(const BenchReport& report);
BenchReport report_from_json(const nlohmann::json& j);

/// Writes report.json and metrics.csv (model, seed, accuracy, mcc,
/// sensitivity) into `directory`, creating it if needed.
void emit_report(const BenchReport& report, const std::string& directory);

}  // namespace ctalvae
