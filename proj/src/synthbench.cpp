#include "ctalvae/synthbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace ctalvae {

namespace {

constexpr std::uint64_t kStreamGen = 0x5A01;
constexpr std::uint64_t kStreamDomainSeed = 0x5A02;

const std::set<std::string> kAnomalyTypes = {"burst", "scan", "exfil"};
constexpr int kMinRun = 10;
constexpr int kMaxRun = 30;

std::string receiver_name(int r) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "recv-%03d", r);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void AnomalySpec::validate() const {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw DataError("anomaly fraction must be in [0, 1)");
    if (fraction > 0.0) {
        if (types.empty())
            throw DataError("anomaly types must be non-empty when fraction > 0");
        if (!(magnitude > 0.0))
            throw DataError("anomaly magnitude must be positive");
    }
    for (const auto& t : types)
        if (!kAnomalyTypes.count(t))
            throw DataError("unknown anomaly type '" + t + "'");
}

void DomainSpec::validate() const {
    if (name.empty()) throw DataError("domain name must be non-empty");
    if (dim < 2) throw DataError("domain dim must be >= 2");
    if (receivers < 1 || flows_per_receiver < 1)
        throw DataError("receiver and flow counts must be positive");
    if (!(ar_min >= 0.0 && ar_min <= ar_max && ar_max < 1.0))
        throw DataError("AR coefficients must satisfy 0 <= ar_min <= ar_max < 1");
    if (level_scale < 0.0 || noise_scale < 0.0 || season_scale < 0.0)
        throw DataError("scales must be non-negative");
    if (season_period < 2) throw DataError("season_period must be >= 2");
    anomaly.validate();
    if (anomaly.fraction > 0.0 &&
        flows_per_receiver <= kBenignWarmup + kMaxRun)
        throw DataError(
            "flows_per_receiver too small to place anomaly runs after the "
            "benign warmup");
}

GeneratedDomain generate_domain(const DomainSpec& spec) {
    spec.validate();

    // Feature blocks: rate-like, size/level, categorical-proxy.
    const int n_rate = (spec.dim + 2) / 3;
    const int n_size = (spec.dim + 1) / 3;
    const int n_cat = spec.dim - n_rate - n_size;

    GeneratedDomain out;
    for (int i = 0; i < n_rate; ++i)
        out.schema.names.push_back("rate_" + std::to_string(i));
    for (int i = 0; i < n_size; ++i)
        out.schema.names.push_back("size_" + std::to_string(i));
    for (int i = 0; i < n_cat; ++i)
        out.schema.names.push_back("cat_" + std::to_string(i));

    std::mt19937_64 rng(derive_seed(spec.seed, kStreamGen));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t total =
        static_cast<std::size_t>(spec.receivers) * spec.flows_per_receiver;
    out.flows.reserve(total);
    out.labels.assign(total, Label::benign);

    const double two_pi = 2.0 * std::acos(-1.0);
    for (int r = 0; r < spec.receivers; ++r) {
        Vec level(spec.dim), phi(spec.dim), amp(spec.dim), phase(spec.dim);
        for (int j = 0; j < spec.dim; ++j) {
            level(j) = spec.level_scale * (2.0 * u01(rng) - 1.0);
            phi(j) = spec.ar_min + (spec.ar_max - spec.ar_min) * u01(rng);
            amp(j) = spec.season_scale * (0.25 + 0.75 * u01(rng));
            phase(j) = spec.season_period * u01(rng);
        }
        Vec ar = Vec::Zero(spec.dim);
        for (int t = 0; t < spec.flows_per_receiver; ++t) {
            FlowRecord f;
            f.ts = 1000.0 * r + 0.25 * t;
            f.src = "src-" + std::to_string(t % 5);
            f.dst = receiver_name(r);
            f.features.resize(spec.dim);
            for (int j = 0; j < spec.dim; ++j) {
                ar(j) = phi(j) * ar(j) + spec.noise_scale * gauss(rng);
                f.features(j) =
                    level(j) +
                    amp(j) * std::sin(two_pi * (t + phase(j)) /
                                      spec.season_period) +
                    ar(j);
            }
            out.flows.push_back(std::move(f));
        }
    }

    if (spec.anomaly.fraction > 0.0) {
        const int cat_off = n_cat > 0 ? n_rate + n_size : n_rate;
        const int cat_len = n_cat > 0 ? n_cat : n_size;
        const auto target = static_cast<long>(
            std::llround(spec.anomaly.fraction * static_cast<double>(total)));
        long injected = 0;
        long attempts = 0;
        while (injected < target) {
            if (++attempts > 100000)
                throw DataError(
                    "unable to place anomaly runs; lower anomaly.fraction");
            std::uniform_int_distribution<int> pick_recv(0, spec.receivers - 1);
            const int r = pick_recv(rng);
            std::uniform_int_distribution<int> pick_len(kMinRun, kMaxRun);
            const int len = std::min<long>(pick_len(rng), target - injected);
            if (spec.flows_per_receiver - kBenignWarmup < len) continue;
            std::uniform_int_distribution<int> pick_start(
                kBenignWarmup, spec.flows_per_receiver - len);
            const int start = pick_start(rng);

            const std::size_t base =
                static_cast<std::size_t>(r) * spec.flows_per_receiver;
            bool overlaps = false;
            for (int t = start; t < start + len && !overlaps; ++t)
                overlaps = out.labels[base + t] == Label::anomalous;
            if (overlaps) continue;

            std::uniform_int_distribution<std::size_t> pick_type(
                0, spec.anomaly.types.size() - 1);
            const std::string& type = spec.anomaly.types[pick_type(rng)];
            for (int t = start; t < start + len; ++t) {
                out.labels[base + t] = Label::anomalous;
                Vec& f = out.flows[base + t].features;
                if (type == "burst") {
                    f.segment(0, n_rate).array() += spec.anomaly.magnitude;
                } else if (type == "scan") {
                    for (int j = cat_off; j < cat_off + cat_len; ++j)
                        f(j) = spec.anomaly.magnitude * gauss(rng);
                } else {  // exfil: sustained level shift on size features
                    f.segment(n_rate, n_size).array() +=
                        0.75 * spec.anomaly.magnitude;
                }
            }
            injected += len;
        }
    }
    return out;
}

TrainResult train_baseline(ModelKind kind,
                           const std::vector<Sequence>& sequences,
                           const DomainInfo& source, const CoreConfig& core,
                           const TrainConfig& cfg) {
    if (kind == ModelKind::ctal_vae)
        throw DataError("train_baseline expects ae or vae");
    return train_source(sequences, source, core, cfg, kind);
}

CoreConfig bench_core_default() {
    return CoreConfig{.core_dim = 10, .hidden = 32, .latent = 8, .seq_len = 30};
}

TrainConfig bench_train_default() {
    TrainConfig cfg;
    cfg.epochs = 100;
    // A wider margin than the pipeline default separates the benchmark's
    // small-scale receivers more cleanly; echoed in the report config.
    cfg.contrastive.margin = 2.0;
    return cfg;
}

DomainSpec bench_source_default() { return DomainSpec{}; }

DomainSpec bench_target_default() {
    DomainSpec spec;
    spec.name = "target";
    spec.dim = 8;
    spec.receivers = 6;
    spec.flows_per_receiver = 667;
    spec.seed = 202;
    return spec;
}

void BenchParams::validate() const {
    core.validate();
    train.validate();
    if (adapt_epochs < 1) throw DataError("adapt_epochs must be positive");
    if (n_shots < 1) throw DataError("n_shots must be positive");
    if (!(threshold_q > 0.0 && threshold_q <= 1.0))
        throw DataError("threshold_q must be in (0, 1]");
    if (seeds.empty()) throw DataError("at least one benchmark seed required");
}

namespace {

struct SourceSplit {
    std::vector<FlowRecord> train;
    std::vector<FlowRecord> holdout;
};

// Per receiver, first 80% of its benign flows train, the rest are held out.
SourceSplit split_source_benign(const GeneratedDomain& gen, double frac) {
    std::map<std::string, std::vector<std::size_t>> by_recv;
    for (std::size_t i = 0; i < gen.flows.size(); ++i)
        if (gen.labels[i] == Label::benign)
            by_recv[gen.flows[i].dst].push_back(i);

    SourceSplit split;
    for (const auto& [recv, idx] : by_recv) {
        const auto n_train =
            static_cast<std::size_t>(frac * static_cast<double>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k)
            (k < n_train ? split.train : split.holdout)
                .push_back(gen.flows[idx[k]]);
    }
    return split;
}

struct TargetSplit {
    std::vector<FlowRecord> shot_flows;  // n_shots windows of seq_len flows
    std::vector<FlowRecord> eval_flows;
    std::vector<Label> eval_labels;
};

// Label-free anchor selection: the first full window of each of the first
// n_shots receivers (benign by the generator's warmup construction, but
// nothing here reads labels). Everything else goes to evaluation.
TargetSplit split_target(const GeneratedDomain& gen, int n_shots, int seq_len) {
    std::map<std::string, std::vector<std::size_t>> by_recv;
    for (std::size_t i = 0; i < gen.flows.size(); ++i)
        by_recv[gen.flows[i].dst].push_back(i);
    if (static_cast<int>(by_recv.size()) < n_shots)
        throw DataError("target domain needs at least n_shots receivers");

    TargetSplit split;
    int taken = 0;
    for (const auto& [recv, idx] : by_recv) {
        std::size_t skip = 0;
        if (taken < n_shots) {
            if (idx.size() < static_cast<std::size_t>(seq_len))
                throw DataError("receiver '" + recv +
                                "' has fewer flows than one window");
            for (int t = 0; t < seq_len; ++t)
                split.shot_flows.push_back(gen.flows[idx[t]]);
            skip = static_cast<std::size_t>(seq_len);
            ++taken;
        }
        for (std::size_t k = skip; k < idx.size(); ++k) {
            split.eval_flows.push_back(gen.flows[idx[k]]);
            split.eval_labels.push_back(gen.labels[idx[k]]);
        }
    }
    return split;
}

SeedResult run_seed(const DomainSpec& source_spec, const DomainSpec& target_spec,
                    const BenchParams& p, std::uint64_t seed) {
    DomainSpec src_spec = source_spec;
    src_spec.seed = derive_seed(source_spec.seed, kStreamDomainSeed, seed);
    DomainSpec tgt_spec = target_spec;
    tgt_spec.seed = derive_seed(target_spec.seed, kStreamDomainSeed, seed);

    const auto src = generate_domain(src_spec);
    const auto tgt = generate_domain(tgt_spec);

    const auto s_split = split_source_benign(src, 0.8);
    const Normalizer src_norm = fit_normalizer(s_split.train);
    const DomainInfo src_info{src_spec.name, src_spec.dim, src_norm};
    const auto train_seqs =
        build_sequences(s_split.train, src_norm, p.core.seq_len);

    auto t_split = split_target(tgt, p.n_shots, p.core.seq_len);
    const Normalizer tgt_norm = fit_normalizer(t_split.shot_flows);
    const DomainInfo tgt_info{tgt_spec.name, tgt_spec.dim, tgt_norm};
    const auto shots =
        build_sequences(t_split.shot_flows, tgt_norm, p.core.seq_len);
    const auto eval_seqs = build_sequences(t_split.eval_flows, tgt_norm,
                                           p.core.seq_len, &t_split.eval_labels);
    std::vector<Label> truth;
    truth.reserve(eval_seqs.size());
    for (const auto& s : eval_seqs) truth.push_back(s.label.value());

    TrainConfig cfg = p.train;
    cfg.seed = seed;
    TrainConfig acfg = cfg;
    acfg.epochs = p.adapt_epochs;

    SeedResult result;
    result.seed = seed;
    for (const ModelKind kind :
         {ModelKind::ctal_vae, ModelKind::vae, ModelKind::ae}) {
        TrainResult tr =
            kind == ModelKind::ctal_vae
                ? train_source(train_seqs, src_info, p.core, cfg)
                : train_baseline(kind, train_seqs, src_info, p.core, cfg);
        adapt_target(tr.bundle, shots, tgt_info, acfg, kind);
        const auto shot_scores = score(tr.bundle, tgt_spec.name, shots);
        const double threshold = fit_threshold(shot_scores, p.threshold_q);
        const auto preds =
            classify(score(tr.bundle, tgt_spec.name, eval_seqs), threshold);
        result.models[model_kind_name(kind)] = evaluate(preds, truth);
    }
    return result;
}

}  // namespace

BenchReport run_benchmark(const DomainSpec& source_spec,
                          const DomainSpec& target_spec,
                          const BenchParams& params) {
    source_spec.validate();
    target_spec.validate();
    params.validate();
    if (source_spec.name == target_spec.name)
        throw DataError("source and target domains must have distinct names");

    const auto t0 = std::chrono::steady_clock::now();
    BenchReport report;
    report.source = source_spec;
    report.target = target_spec;
    report.params = params;
    for (const auto seed : params.seeds)
        report.per_seed.push_back(
            run_seed(source_spec, target_spec, params, seed));

    for (const char* model : {"ctal_vae", "vae", "ae"}) {
        std::vector<double> acc, mcc, sens;
        for (const auto& sr : report.per_seed) {
            const auto& m = sr.models.at(model);
            acc.push_back(m.accuracy);
            mcc.push_back(m.mcc);
            sens.push_back(m.sensitivity);
        }
        report.medians[model] =
            MetricSummary{median(acc), median(mcc), median(sens)};
    }
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return report;
}

namespace {

nlohmann::json metrics_to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"mcc", m.mcc},
            {"sensitivity", m.sensitivity}, {"tp", m.tp},
            {"tn", m.tn},             {"fp", m.fp},
            {"fn", m.fn}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
    Metrics m;
    m.accuracy = j.at("accuracy").get<double>();
    m.mcc = j.at("mcc").get<double>();
    m.sensitivity = j.at("sensitivity").get<double>();
    m.tp = j.at("tp").get<long>();
    m.tn = j.at("tn").get<long>();
    m.fp = j.at("fp").get<long>();
    m.fn = j.at("fn").get<long>();
    return m;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.weights.rec = j.at("weights").at("rec").get<double>();
    cfg.weights.kl = j.at("weights").at("kl").get<double>();
    cfg.weights.con = j.at("weights").at("con").get<double>();
    cfg.contrastive.margin = j.at("contrastive").at("margin").get<double>();
    cfg.contrastive.noise_sigma =
        j.at("contrastive").at("noise_sigma").get<double>();
    cfg.contrastive.triplets_per_anchor =
        j.at("contrastive").at("triplets_per_anchor").get<int>();
    return cfg;
}

CoreConfig core_from_json(const nlohmann::json& j) {
    CoreConfig core;
    core.core_dim = j.at("core_dim").get<int>();
    core.hidden = j.at("hidden").get<int>();
    core.latent = j.at("latent").get<int>();
    core.seq_len = j.at("seq_len").get<int>();
    return core;
}

DomainSpec domain_spec_from_json(const nlohmann::json& j) {
    DomainSpec spec;
    spec.name = j.at("name").get<std::string>();
    spec.dim = j.at("dim").get<int>();
    spec.receivers = j.at("receivers").get<int>();
    spec.flows_per_receiver = j.at("flows_per_receiver").get<int>();
    spec.ar_min = j.at("ar_min").get<double>();
    spec.ar_max = j.at("ar_max").get<double>();
    spec.level_scale = j.at("level_scale").get<double>();
    spec.noise_scale = j.at("noise_scale").get<double>();
    spec.season_period = j.at("season_period").get<int>();
    spec.season_scale = j.at("season_scale").get<double>();
    spec.anomaly.fraction = j.at("anomaly").at("fraction").get<double>();
    spec.anomaly.types =
        j.at("anomaly").at("types").get<std::vector<std::string>>();
    spec.anomaly.magnitude = j.at("anomaly").at("magnitude").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

}  // namespace

nlohmann::json core_config_to_json(const CoreConfig& core) {
    return {{"core_dim", core.core_dim},
            {"hidden", core.hidden},
            {"latent", core.latent},
            {"seq_len", core.seq_len}};
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"lr", cfg.lr},
            {"batch_size", cfg.batch_size},
            {"seed", cfg.seed},
            {"weights",
             {{"rec", cfg.weights.rec},
              {"kl", cfg.weights.kl},
              {"con", cfg.weights.con}}},
            {"contrastive",
             {{"margin", cfg.contrastive.margin},
              {"noise_sigma", cfg.contrastive.noise_sigma},
              {"triplets_per_anchor", cfg.contrastive.triplets_per_anchor}}}};
}

nlohmann::json domain_spec_to_json(const DomainSpec& spec) {
    return {{"name", spec.name},
            {"dim", spec.dim},
            {"receivers", spec.receivers},
            {"flows_per_receiver", spec.flows_per_receiver},
            {"ar_min", spec.ar_min},
            {"ar_max", spec.ar_max},
            {"level_scale", spec.level_scale},
            {"noise_scale", spec.noise_scale},
            {"season_period", spec.season_period},
            {"season_scale", spec.season_scale},
            {"anomaly",
             {{"fraction", spec.anomaly.fraction},
              {"types", spec.anomaly.types},
              {"magnitude", spec.anomaly.magnitude}}},
            {"seed", spec.seed}};
}

nlohmann::json bench_params_to_json(const BenchParams& params) {
    return {{"core", core_config_to_json(params.core)},
            {"train", train_config_to_json(params.train)},
            {"adapt_epochs", params.adapt_epochs},
            {"n_shots", params.n_shots},
            {"threshold_q", params.threshold_q},
            {"seeds", params.seeds}};
}

nlohmann::json report_to_json(const BenchReport& report) {
    nlohmann::json j;
    j["config"] = {{"source", domain_spec_to_json(report.source)},
                   {"target", domain_spec_to_json(report.target)},
                   {"params", bench_params_to_json(report.params)}};
    j["per_seed"] = nlohmann::json::array();
    for (const auto& sr : report.per_seed) {
        nlohmann::json models;
        for (const auto& [name, m] : sr.models) models[name] = metrics_to_json(m);
        j["per_seed"].push_back({{"seed", sr.seed}, {"models", models}});
    }
    j["medians"] = nlohmann::json::object();
    for (const auto& [name, s] : report.medians)
        j["medians"][name] = {{"accuracy", s.accuracy},
                              {"mcc", s.mcc},
                              {"sensitivity", s.sensitivity}};
    j["runtime_seconds"] = report.runtime_seconds;
    return j;
}

BenchReport report_from_json(const nlohmann::json& j) {
    BenchReport report;
    try {
        const auto& cfg = j.at("config");
        report.source = domain_spec_from_json(cfg.at("source"));
        report.target = domain_spec_from_json(cfg.at("target"));
        const auto& pj = cfg.at("params");
        report.params.core = core_from_json(pj.at("core"));
        report.params.train = train_config_from_json(pj.at("train"));
        report.params.adapt_epochs = pj.at("adapt_epochs").get<int>();
        report.params.n_shots = pj.at("n_shots").get<int>();
        report.params.threshold_q = pj.at("threshold_q").get<double>();
        report.params.seeds =
            pj.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& srj : j.at("per_seed")) {
            SeedResult sr;
            sr.seed = srj.at("seed").get<std::uint64_t>();
            for (const auto& [name, mj] : srj.at("models").items())
                sr.models[name] = metrics_from_json(mj);
            report.per_seed.push_back(std::move(sr));
        }
        for (const auto& [name, sj] : j.at("medians").items())
            report.medians[name] =
                MetricSummary{sj.at("accuracy").get<double>(),
                              sj.at("mcc").get<double>(),
                              sj.at("sensitivity").get<double>()};
        report.runtime_seconds = j.at("runtime_seconds").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed benchmark report: ") + e.what());
    }
    return report;
}

void emit_report(const BenchReport& report, const std::string& directory) {
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec)
        throw DataError("cannot create directory '" + directory +
                        "': " + ec.message());

    {
        std::ofstream f(directory + "/report.json");
        if (!f) throw DataError("cannot write report.json");
        f << report_to_json(report).dump(2) << '\n';
        if (!f) throw DataError("failed writing report.json");
    }
    {
        std::ofstream f(directory + "/metrics.csv");
        if (!f) throw DataError("cannot write metrics.csv");
        f << "model,seed,accuracy,mcc,sensitivity\n";
        char buf[160];
        for (const auto& sr : report.per_seed)
            for (const auto& [name, m] : sr.models) {
                std::snprintf(buf, sizeof(buf), "%s,%llu,%.9f,%.9f,%.9f\n",
                              name.c_str(),
                              static_cast<unsigned long long>(sr.seed),
                              m.accuracy, m.mcc, m.sensitivity);
                f << buf;
            }
        if (!f) throw DataError("failed writing metrics.csv");
    }
}

}  // namespace ctalvae
