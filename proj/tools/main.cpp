#include "ctalvae/config.hpp"
#include "ctalvae/log.hpp"
#include "ctalvae/pipeline.hpp"
#include "ctalvae/synthbench.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace cv = ctalvae;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* config_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, CommonArgs& c) {
    c.config_opt = sub->add_option("--config", c.config_path,
                                   "JSON config file; unset keys keep their "
                                   "documented defaults");
    c.seed_opt = sub->add_option(
        "--seed", c.seed,
        "override the run seed (training seed, synth domain seeds and the "
        "benchmark seed list)");
}

/// defaults <- config file <- --seed, then logged before any work.
cv::RunConfig make_config(const CommonArgs& c) {
    cv::RunConfig cfg;
    if (c.config_opt->count()) cfg = cv::load_run_config(c.config_path);
    if (c.seed_opt->count()) {
        cfg.train.seed = c.seed;
        cfg.bench.train.seed = c.seed;
        cfg.source.seed = c.seed;
        cfg.target.seed = cv::derive_seed(c.seed, 0x74);
        cfg.bench.seeds = {c.seed};
    }
    cv::log_info("effective config: " + cv::run_config_to_json(cfg).dump());
    return cfg;
}

cv::ParsedFlows read_flows_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw cv::DataError("cannot open flows file '" + path + "'");
    return cv::parse_flows_csv(f);
}

std::string ts_key(double ts) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", ts);
    return buf;
}

void write_flows_file(const std::string& path, const cv::FeatureSchema& schema,
                      const std::vector<cv::FlowRecord>& flows) {
    std::ofstream f(path);
    if (!f) throw cv::DataError("cannot write '" + path + "'");
    cv::write_flows_csv(f, schema, flows);
    if (!f) throw cv::DataError("failed writing '" + path + "'");
}

void write_seq_labels_file(const std::string& path,
                           const std::vector<cv::Sequence>& seqs) {
    std::ofstream f(path);
    if (!f) throw cv::DataError("cannot write '" + path + "'");
    f << "receiver,start_ts,label\n";
    for (const auto& s : seqs)
        f << s.receiver << ',' << ts_key(s.start_ts) << ','
          << (s.label.value() == cv::Label::anomalous ? "anomalous" : "benign")
          << '\n';
    if (!f) throw cv::DataError("failed writing '" + path + "'");
}

void write_scores_file(const std::string& path,
                       const std::vector<cv::Sequence>& seqs,
                       const std::vector<double>& scores) {
    std::ofstream f(path);
    if (!f) throw cv::DataError("cannot write '" + path + "'");
    f << "receiver,start_ts,score\n";
    char buf[64];
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12g", scores[i]);
        f << seqs[i].receiver << ',' << ts_key(seqs[i].start_ts) << ',' << buf
          << '\n';
    }
    if (!f) throw cv::DataError("failed writing '" + path + "'");
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& cell, const std::string& what) {
    double v = 0.0;
    const auto* begin = cell.data();
    const auto* end = begin + cell.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw cv::DataError("cannot parse " + what + " value '" + cell + "'");
    return v;
}

void expect_header(const std::string& path, const std::string& line,
                   const std::vector<std::string>& expected) {
    std::string clean = line;
    if (!clean.empty() && clean.back() == '\r') clean.pop_back();
    if (split_line(clean) != expected) {
        std::string want;
        for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
        throw cv::DataError("'" + path + "' must start with header '" + want +
                            "'");
    }
}

struct ScoreRow {
    std::string receiver;
    std::string ts;
    double score;
};

std::vector<ScoreRow> read_scores_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw cv::DataError("cannot open scores file '" + path + "'");
    std::string line;
    if (!std::getline(f, line))
        throw cv::DataError("scores file '" + path + "' is empty");
    expect_header(path, line, {"receiver", "start_ts", "score"});
    std::vector<ScoreRow> rows;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != 3)
            throw cv::DataError("scores row '" + line + "' has " +
                                std::to_string(cells.size()) + " columns");
        rows.push_back({cells[0], ts_key(parse_number(cells[1], "start_ts")),
                        parse_number(cells[2], "score")});
    }
    if (rows.empty()) throw cv::DataError("scores file has no rows");
    return rows;
}

std::map<std::string, cv::Label> read_labels_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw cv::DataError("cannot open labels file '" + path + "'");
    std::string line;
    if (!std::getline(f, line))
        throw cv::DataError("labels file '" + path + "' is empty");
    expect_header(path, line, {"receiver", "start_ts", "label"});
    std::map<std::string, cv::Label> out;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != 3)
            throw cv::DataError("labels row '" + line + "' has " +
                                std::to_string(cells.size()) + " columns");
        cv::Label label;
        if (cells[2] == "benign" || cells[2] == "0")
            label = cv::Label::benign;
        else if (cells[2] == "anomalous" || cells[2] == "1")
            label = cv::Label::anomalous;
        else
            throw cv::DataError("unknown label value '" + cells[2] + "'");
        out[cells[0] + "\n" + ts_key(parse_number(cells[1], "start_ts"))] =
            label;
    }
    return out;
}

// ---- subcommands --------------------------------------------------------

void run_synth(const cv::RunConfig& cfg, const std::string& out_flag) {
    const std::string dir = out_flag.empty() ? cfg.out_dir : out_flag;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw cv::DataError("cannot create directory '" + dir +
                            "': " + ec.message());
    for (const auto* spec : {&cfg.source, &cfg.target}) {
        auto gen = cv::generate_domain(*spec);
        write_flows_file(dir + "/" + spec->name + ".csv", gen.schema,
                         gen.flows);
        const auto seqs =
            cv::build_sequences(gen.flows, cv::Normalizer::identity(spec->dim),
                                cfg.core.seq_len, &gen.labels);
        write_seq_labels_file(dir + "/" + spec->name + "_labels.csv", seqs);
        cv::log_info("wrote " + std::to_string(gen.flows.size()) + " " +
                     spec->name + " flows (" + std::to_string(seqs.size()) +
                     " windows) to " + dir);
    }
}

void log_trace(const cv::LossTrace& trace) {
    for (const auto& row : trace.rows) {
        std::string msg;
        for (std::size_t i = 0; i < trace.columns.size(); ++i)
            msg += (i ? " " : "") + trace.columns[i] + "=" +
                   std::to_string(row[i]);
        cv::log_debug(msg);
    }
    if (!trace.rows.empty()) {
        std::string msg = "final";
        for (std::size_t i = 0; i < trace.columns.size(); ++i)
            msg += " " + trace.columns[i] + "=" +
                   std::to_string(trace.rows.back()[i]);
        cv::log_info(msg);
    }
}

void run_train_source(const cv::RunConfig& cfg, const std::string& flows_path,
                      const std::string& out_path, const std::string& domain,
                      const std::string& kind_name) {
    const auto pf = read_flows_file(flows_path);
    const cv::DomainInfo info{domain, pf.schema.dim(),
                              cv::fit_normalizer(pf.flows)};
    const auto seqs =
        cv::build_sequences(pf.flows, info.norm, cfg.core.seq_len);
    cv::log_info("training on " + std::to_string(seqs.size()) + " windows of " +
                 std::to_string(pf.flows.size()) + " flows, domain '" + domain +
                 "' dim " + std::to_string(info.dim));
    auto result = cv::train_source(seqs, info, cfg.core, cfg.train,
                                   cv::model_kind_from_name(kind_name));
    log_trace(result.trace);
    cv::save_bundle(result.bundle, out_path);
    cv::log_info("wrote checkpoint " + out_path);
}

void run_adapt_target(const cv::RunConfig& cfg, const std::string& ckpt_path,
                      const std::string& shots_path,
                      const std::string& out_path, const std::string& domain,
                      const std::string& kind_name) {
    auto bundle = cv::load_bundle(ckpt_path);
    const auto pf = read_flows_file(shots_path);
    const cv::DomainInfo info{domain, pf.schema.dim(),
                              cv::fit_normalizer(pf.flows)};
    const auto shots =
        cv::build_sequences(pf.flows, info.norm, bundle.core.seq_len);
    if (static_cast<int>(shots.size()) != cfg.n_shots)
        throw cv::DataError("expected " + std::to_string(cfg.n_shots) +
                            " shot windows, got " +
                            std::to_string(shots.size()) +
                            " (set n_shots in the config to change)");
    cv::TrainConfig acfg = cfg.train;
    acfg.epochs = cfg.adapt_epochs;
    log_trace(cv::adapt_target(bundle, shots, info, acfg,
                               cv::model_kind_from_name(kind_name)));
    cv::save_bundle(bundle, out_path);
    cv::log_info("wrote checkpoint " + out_path);
}

void run_score(const std::string& ckpt_path, const std::string& flows_path,
               const std::string& out_path, const std::string& domain) {
    const auto bundle = cv::load_bundle(ckpt_path);
    if (!bundle.has_domain(domain))
        throw cv::DataError("checkpoint has no domain '" + domain + "'");
    const auto pf = read_flows_file(flows_path);
    const auto& entry = bundle.domains.at(domain);
    if (pf.schema.dim() != entry.dim)
        throw cv::DataError("flows have " + std::to_string(pf.schema.dim()) +
                            " feature columns but domain '" + domain +
                            "' expects " + std::to_string(entry.dim));
    const auto seqs =
        cv::build_sequences(pf.flows, entry.norm, bundle.core.seq_len);
    const auto scores = cv::score(bundle, domain, seqs);
    write_scores_file(out_path, seqs, scores);
    cv::log_info("wrote " + std::to_string(scores.size()) + " scores to " +
                 out_path);
}

void run_eval(const std::string& scores_path, const std::string& labels_path,
              bool have_threshold, double threshold, bool have_q, double q) {
    const auto rows = read_scores_file(scores_path);
    const auto labels = read_labels_file(labels_path);

    std::vector<double> scores;
    std::vector<cv::Label> truth;
    for (const auto& r : rows) {
        const auto it = labels.find(r.receiver + "\n" + r.ts);
        if (it == labels.end())
            throw cv::DataError("no label for receiver '" + r.receiver +
                                "' at start_ts " + r.ts);
        scores.push_back(r.score);
        truth.push_back(it->second);
    }
    if (have_q) {
        std::vector<double> benign;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (truth[i] == cv::Label::benign) benign.push_back(scores[i]);
        if (benign.empty())
            throw cv::DataError("no benign-labeled scores to fit a threshold");
        threshold = cv::fit_threshold(benign, q);
        cv::log_info("fitted threshold " + std::to_string(threshold));
    }
    (void)have_threshold;
    const auto m = cv::evaluate(cv::classify(scores, threshold), truth);
    const nlohmann::json out = {
        {"threshold", threshold}, {"accuracy", m.accuracy},
        {"mcc", m.mcc},           {"sensitivity", m.sensitivity},
        {"tp", m.tp},             {"tn", m.tn},
        {"fp", m.fp},             {"fn", m.fn}};
    std::cout << out.dump(2) << std::endl;
}

void run_bench(const cv::RunConfig& cfg, const std::string& out_flag) {
    const std::string dir = out_flag.empty() ? cfg.out_dir : out_flag;
    const auto report = cv::run_benchmark(cfg.source, cfg.target, cfg.bench);
    cv::emit_report(report, dir);
    for (const auto& [model, s] : report.medians) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "%s medians: accuracy=%.4f mcc=%.4f sensitivity=%.4f",
                      model.c_str(), s.accuracy, s.mcc, s.sensitivity);
        cv::log_info(buf);
    }
    cv::log_info("wrote report.json and metrics.csv to " + dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "CTAL-VAE: few-shot cross-domain IoT traffic anomaly detection "
        "(LSTM-VAE core, per-domain adaptors, contrastive objectives)"};
    app.require_subcommand(1);

    const std::vector<std::string> kinds = {"ctal_vae", "vae", "ae"};

    auto* synth = app.add_subcommand(
        "synth", "Generate the synthetic source/target flow CSVs and labels");
    CommonArgs synth_common;
    add_common(synth, synth_common);
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory (default: out_dir)");
    synth->callback(
        [&] { run_synth(make_config(synth_common), synth_out); });

    auto* train = app.add_subcommand(
        "train-source", "Train the core and source adaptors on a flows CSV");
    CommonArgs train_common;
    add_common(train, train_common);
    std::string train_flows, train_out, train_domain = "source",
                             train_kind = "ctal_vae";
    train->add_option("--flows", train_flows, "training flows CSV")->required();
    train->add_option("--out", train_out, "checkpoint to write")->required();
    train->add_option("--domain", train_domain, "domain name (default source)");
    train->add_option("--kind", train_kind, "model kind (default ctal_vae)")
        ->check(CLI::IsMember(kinds));
    train->callback([&] {
        run_train_source(make_config(train_common), train_flows, train_out,
                         train_domain, train_kind);
    });

    auto* adapt = app.add_subcommand(
        "adapt-target",
        "Few-shot adapt a trained checkpoint to a new domain (core frozen)");
    CommonArgs adapt_common;
    add_common(adapt, adapt_common);
    std::string adapt_ckpt, adapt_shots, adapt_out, adapt_domain = "target",
                            adapt_kind = "ctal_vae";
    adapt->add_option("--ckpt", adapt_ckpt, "source-trained checkpoint")
        ->required();
    adapt->add_option("--shots", adapt_shots, "few-shot anchor flows CSV")
        ->required();
    adapt->add_option("--out", adapt_out, "checkpoint to write")->required();
    adapt->add_option("--domain", adapt_domain, "domain name (default target)");
    adapt->add_option("--kind", adapt_kind, "model kind (default ctal_vae)")
        ->check(CLI::IsMember(kinds));
    adapt->callback([&] {
        run_adapt_target(make_config(adapt_common), adapt_ckpt, adapt_shots,
                         adapt_out, adapt_domain, adapt_kind);
    });

    auto* score = app.add_subcommand(
        "score", "Score flows with a checkpoint (reconstruction error)");
    CommonArgs score_common;
    add_common(score, score_common);
    std::string score_ckpt, score_flows, score_out, score_domain = "target";
    score->add_option("--ckpt", score_ckpt, "checkpoint")->required();
    score->add_option("--flows", score_flows, "flows CSV to score")->required();
    score->add_option("--out", score_out, "scores CSV to write")->required();
    score->add_option("--domain", score_domain, "domain name (default target)");
    score->callback([&] {
        make_config(score_common);
        run_score(score_ckpt, score_flows, score_out, score_domain);
    });

    auto* eval = app.add_subcommand(
        "eval", "Join scores with labels and print metrics as JSON");
    CommonArgs eval_common;
    add_common(eval, eval_common);
    std::string eval_scores, eval_labels;
    double eval_threshold = 0.0, eval_q = 0.0;
    eval->add_option("--scores", eval_scores, "scores CSV")->required();
    eval->add_option("--labels", eval_labels,
                     "window labels CSV (receiver,start_ts,label)")
        ->required();
    auto* thr_opt =
        eval->add_option("--threshold", eval_threshold, "decision threshold");
    auto* q_opt = eval->add_option(
        "--fit-q", eval_q,
        "fit the threshold as this quantile of the benign-labeled scores");
    thr_opt->excludes(q_opt);
    eval->callback([&] {
        if (!thr_opt->count() && !q_opt->count())
            throw CLI::RequiredError("one of --threshold / --fit-q");
        make_config(eval_common);
        run_eval(eval_scores, eval_labels, thr_opt->count() > 0, eval_threshold,
                 q_opt->count() > 0, eval_q);
    });

    auto* bench = app.add_subcommand(
        "bench",
        "Run the synthetic two-domain benchmark (ctal_vae vs vae vs ae)");
    CommonArgs bench_common;
    add_common(bench, bench_common);
    std::string bench_out;
    bench->add_option("--out", bench_out, "output directory (default: out_dir)");
    bench->callback(
        [&] { run_bench(make_config(bench_common), bench_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    } catch (const cv::DataError& e) {
        cv::log_error(e.what());
        return 2;
    } catch (const std::exception& e) {
        cv::log_error(e.what());
        return 2;
    }
    return 0;
}
