#include "ctalvae/config.hpp"

#include <fstream>
#include <set>

namespace ctalvae {

namespace {

/// Tracks which keys of one JSON object were consumed so leftovers can be
/// reported with their full path.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string path)
        : j_(j), path_(std::move(path)) {
        if (!j.is_object())
            throw DataError("config node '" + label() + "' must be an object");
    }

    template <class T>
    void read(const char* key, T& out) {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw DataError("config key '" + path_ + key +
                            "' has the wrong type");
        }
    }

    /// Child object for nested sections; nullptr when absent.
    const nlohmann::json* child(const char* key) {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    std::string child_path(const char* key) const { return path_ + key + "."; }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key))
                throw DataError("unknown config key '" + path_ + key + "'");
    }

private:
    std::string label() const {
        return path_.empty() ? "<root>"
                             : path_.substr(0, path_.size() - 1);
    }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void parse_core(const nlohmann::json& j, const std::string& path,
                CoreConfig& core) {
    ObjectReader r(j, path);
    r.read("core_dim", core.core_dim);
    r.read("hidden", core.hidden);
    r.read("latent", core.latent);
    r.read("seq_len", core.seq_len);
    r.finish();
}

void parse_train(const nlohmann::json& j, const std::string& path,
                 TrainConfig& cfg) {
    ObjectReader r(j, path);
    r.read("epochs", cfg.epochs);
    r.read("lr", cfg.lr);
    r.read("batch_size", cfg.batch_size);
    r.read("seed", cfg.seed);
    if (const auto* wj = r.child("weights")) {
        ObjectReader wr(*wj, r.child_path("weights"));
        wr.read("rec", cfg.weights.rec);
        wr.read("kl", cfg.weights.kl);
        wr.read("con", cfg.weights.con);
        wr.finish();
    }
    if (const auto* cj = r.child("contrastive")) {
        ObjectReader cr(*cj, r.child_path("contrastive"));
        cr.read("margin", cfg.contrastive.margin);
        cr.read("noise_sigma", cfg.contrastive.noise_sigma);
        cr.read("triplets_per_anchor", cfg.contrastive.triplets_per_anchor);
        cr.finish();
    }
    r.finish();
}

void parse_domain(const nlohmann::json& j, const std::string& path,
                  DomainSpec& spec) {
    ObjectReader r(j, path);
    r.read("name", spec.name);
    r.read("dim", spec.dim);
    r.read("receivers", spec.receivers);
    r.read("flows_per_receiver", spec.flows_per_receiver);
    r.read("ar_min", spec.ar_min);
    r.read("ar_max", spec.ar_max);
    r.read("level_scale", spec.level_scale);
    r.read("noise_scale", spec.noise_scale);
    r.read("season_period", spec.season_period);
    r.read("season_scale", spec.season_scale);
    r.read("seed", spec.seed);
    if (const auto* aj = r.child("anomaly")) {
        ObjectReader ar(*aj, r.child_path("anomaly"));
        ar.read("fraction", spec.anomaly.fraction);
        ar.read("types", spec.anomaly.types);
        ar.read("magnitude", spec.anomaly.magnitude);
        ar.finish();
    }
    r.finish();
}

void parse_bench(const nlohmann::json& j, const std::string& path,
                 BenchParams& params) {
    ObjectReader r(j, path);
    if (const auto* cj = r.child("core"))
        parse_core(*cj, r.child_path("core"), params.core);
    if (const auto* tj = r.child("train"))
        parse_train(*tj, r.child_path("train"), params.train);
    r.read("adapt_epochs", params.adapt_epochs);
    r.read("n_shots", params.n_shots);
    r.read("threshold_q", params.threshold_q);
    r.read("seeds", params.seeds);
    r.finish();
}

}  // namespace

void RunConfig::validate() const {
    core.validate();
    train.validate();
    if (adapt_epochs < 1) throw DataError("adapt_epochs must be positive");
    if (n_shots < 1) throw DataError("n_shots must be positive");
    if (!(threshold_q > 0.0 && threshold_q <= 1.0))
        throw DataError("threshold_q must be in (0, 1]");
    source.validate();
    target.validate();
    bench.validate();
    if (out_dir.empty()) throw DataError("out_dir must be non-empty");
}

RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    ObjectReader r(j, "");
    if (const auto* cj = r.child("core"))
        parse_core(*cj, r.child_path("core"), cfg.core);
    if (const auto* tj = r.child("train"))
        parse_train(*tj, r.child_path("train"), cfg.train);
    r.read("adapt_epochs", cfg.adapt_epochs);
    r.read("n_shots", cfg.n_shots);
    r.read("threshold_q", cfg.threshold_q);
    if (const auto* sj = r.child("source"))
        parse_domain(*sj, r.child_path("source"), cfg.source);
    if (const auto* gj = r.child("target"))
        parse_domain(*gj, r.child_path("target"), cfg.target);
    if (const auto* bj = r.child("bench"))
        parse_bench(*bj, r.child_path("bench"), cfg.bench);
    r.read("out_dir", cfg.out_dir);
    r.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config '" + path +
                        "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    return {{"core", core_config_to_json(cfg.core)},
            {"train", train_config_to_json(cfg.train)},
            {"adapt_epochs", cfg.adapt_epochs},
            {"n_shots", cfg.n_shots},
            {"threshold_q", cfg.threshold_q},
            {"source", domain_spec_to_json(cfg.source)},
            {"target", domain_spec_to_json(cfg.target)},
            {"bench", bench_params_to_json(cfg.bench)},
            {"out_dir", cfg.out_dir}};
}

}  // namespace ctalvae
