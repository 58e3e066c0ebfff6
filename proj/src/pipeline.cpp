#include "ctalvae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ctalvae {

namespace {

// Independent random streams per purpose so reordering one consumer never
// perturbs another. Phase (1 = source, 2 = target) is folded into the index.
constexpr std::uint64_t kStreamInit = 0x1111;
constexpr std::uint64_t kStreamShuffle = 0x2222;
constexpr std::uint64_t kStreamEps = 0x3333;
constexpr std::uint64_t kStreamTriplets = 0x4444;

Vec draw_normal(int n, std::mt19937_64& rng,
                std::normal_distribution<double>& dist) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = dist(rng);
    return v;
}

void check_sequences(const std::vector<Sequence>& seqs, int seq_len, int dim,
                     const std::string& who) {
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& s = seqs[i];
        if (s.data.rows() != seq_len || s.data.cols() != dim ||
            static_cast<int>(s.mask.size()) != seq_len)
            throw DataError(who + ": sequence " + std::to_string(i) +
                            " has shape " + std::to_string(s.data.rows()) + "x" +
                            std::to_string(s.data.cols()) + ", expected " +
                            std::to_string(seq_len) + "x" + std::to_string(dim));
    }
}

struct EpochStats {
    double rec = 0.0, kl = 0.0, con = 0.0;
    long forwards = 0, pairs = 0;
};

// One full-model forward/backward over a triplet. Gradient scales:
// rec and kl are averaged over forwards, the contrastive term over pairs.
void triplet_pass(ModelBundle& bundle, const std::string& domain,
                  const Triplet& t, const LossWeights& w, double margin,
                  const Vec& eps, double inv_forwards, double inv_pairs,
                  EpochStats& stats) {
    auto& ps = bundle.params;
    const int d = bundle.core.latent;
    const int T = bundle.core.seq_len;

    const Mat ain = adapt_in_seq(ps, domain, t.anchor.data, t.anchor.mask);
    EncodeCache ec;
    const LatentParams lp = encode(ps, ain, t.anchor.mask, &ec);
    const Vec z = sample_latent(lp, eps);
    DecodeCache dc;
    const Mat em = decode(ps, z, T, &dc);
    const Mat xhat = adapt_out_seq(ps, domain, em);
    const double rec = mse_loss(t.anchor.data, xhat, t.anchor.mask);
    const double kl = kl_loss(lp);

    const Mat pin = adapt_in_seq(ps, domain, t.positive.data, t.positive.mask);
    EncodeCache ecp;
    const LatentParams lpp = encode(ps, pin, t.positive.mask, &ecp);
    const Mat nin = adapt_in_seq(ps, domain, t.negative.data, t.negative.mask);
    EncodeCache ecn;
    const LatentParams lpn = encode(ps, nin, t.negative.mask, &ecn);
    const double con = contrastive_term(lp.mu, lpp.mu, 0, margin) +
                       contrastive_term(lp.mu, lpn.mu, 1, margin);

    stats.rec += rec;
    stats.kl += kl;
    stats.con += con;
    stats.forwards += 1;
    stats.pairs += 2;

    const Mat dxhat =
        mse_loss_backward(t.anchor.data, xhat, t.anchor.mask, w.rec * inv_forwards);
    const Mat dem = adapt_out_seq_backward(ps, domain, em, dxhat);
    const Vec dz = decode_backward(ps, dc, dem);
    Vec dmu = dz;
    Vec dlv = (dz.array() * eps.array() * (lp.log_var.array() / 2).exp() * 0.5)
                  .matrix();
    kl_loss_backward(lp, w.kl * inv_forwards, dmu, dlv);

    Vec dmu_p = Vec::Zero(d), dmu_n = Vec::Zero(d);
    contrastive_term_backward(lp.mu, lpp.mu, 0, margin, w.con * inv_pairs, dmu,
                              dmu_p);
    contrastive_term_backward(lp.mu, lpn.mu, 1, margin, w.con * inv_pairs, dmu,
                              dmu_n);

    const Vec zero = Vec::Zero(d);
    adapt_in_seq_backward(ps, domain, t.anchor.data, t.anchor.mask,
                          encode_backward(ps, ec, dmu, dlv));
    adapt_in_seq_backward(ps, domain, t.positive.data, t.positive.mask,
                          encode_backward(ps, ecp, dmu_p, zero));
    adapt_in_seq_backward(ps, domain, t.negative.data, t.negative.mask,
                          encode_backward(ps, ecn, dmu_n, zero));
}

// Baseline forward/backward on a single anchor: vae samples and adds the
// KL term, ae runs the posterior mean with reconstruction only.
void baseline_pass(ModelBundle& bundle, const std::string& domain,
                   const Sequence& a, const LossWeights& w, ModelKind kind,
                   const Vec* eps, double inv_forwards, EpochStats& stats) {
    auto& ps = bundle.params;
    const int d = bundle.core.latent;
    const int T = bundle.core.seq_len;

    const Mat ain = adapt_in_seq(ps, domain, a.data, a.mask);
    EncodeCache ec;
    const LatentParams lp = encode(ps, ain, a.mask, &ec);
    const Vec z = eps ? sample_latent(lp, *eps) : Vec(lp.mu);
    DecodeCache dc;
    const Mat em = decode(ps, z, T, &dc);
    const Mat xhat = adapt_out_seq(ps, domain, em);
    const double rec = mse_loss(a.data, xhat, a.mask);

    stats.rec += rec;
    stats.forwards += 1;

    const Mat dxhat = mse_loss_backward(a.data, xhat, a.mask, w.rec * inv_forwards);
    const Mat dem = adapt_out_seq_backward(ps, domain, em, dxhat);
    const Vec dz = decode_backward(ps, dc, dem);
    Vec dmu = dz;
    Vec dlv = Vec::Zero(d);
    if (kind == ModelKind::vae) {
        dlv = (dz.array() * eps->array() * (lp.log_var.array() / 2).exp() * 0.5)
                  .matrix();
        stats.kl += kl_loss(lp);
        kl_loss_backward(lp, w.kl * inv_forwards, dmu, dlv);
    }
    adapt_in_seq_backward(ps, domain, a.data, a.mask,
                          encode_backward(ps, ec, dmu, dlv));
}

std::vector<std::string> trace_columns(ModelKind kind) {
    switch (kind) {
        case ModelKind::ctal_vae: return {"epoch", "total", "rec", "kl", "con"};
        case ModelKind::vae: return {"epoch", "total", "rec", "kl"};
        case ModelKind::ae: return {"epoch", "total", "rec"};
    }
    throw DataError("unknown model kind");
}

/// Shared mini-batch engine for both phases. `few_shot` turns off epoch
/// shuffling, treats the whole input as one batch, and (for ctal_vae)
/// builds the triplet ensembles once up front instead of per batch.
LossTrace fit(ModelBundle& bundle, const std::string& domain,
              const std::vector<Sequence>& seqs, const TrainConfig& cfg,
              ModelKind kind, bool few_shot, std::uint64_t phase) {
    AdamOptimizer opt({.lr = cfg.lr});
    std::mt19937_64 eps_rng(derive_seed(cfg.seed, kStreamEps, phase));
    std::normal_distribution<double> unit(0.0, 1.0);
    const int d = bundle.core.latent;
    const Vec zero_eps = Vec::Zero(d);

    std::vector<Triplet> fixed_triplets;
    if (few_shot && kind == ModelKind::ctal_vae)
        fixed_triplets =
            make_triplets(seqs, seqs, cfg.contrastive,
                          derive_seed(cfg.seed, kStreamTriplets, phase << 32));

    LossTrace trace;
    trace.columns = trace_columns(kind);

    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch_size =
        few_shot ? seqs.size() : static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (!few_shot) {
            std::mt19937_64 shuffle_rng(derive_seed(
                cfg.seed, kStreamShuffle,
                (phase << 32) | static_cast<std::uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), shuffle_rng);
        }

        EpochStats epoch_stats;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size();
             start += batch_size, ++batch_index) {
            const std::size_t end = std::min(start + batch_size, order.size());
            std::vector<Sequence> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i)
                batch.push_back(seqs[order[i]]);

            EpochStats batch_stats;
            if (kind == ModelKind::ctal_vae) {
                const auto& triplets =
                    few_shot ? fixed_triplets
                             : make_triplets(
                                   batch, batch, cfg.contrastive,
                                   derive_seed(cfg.seed, kStreamTriplets,
                                               (phase << 32) |
                                                   (static_cast<std::uint64_t>(
                                                        epoch)
                                                    << 16) |
                                                   batch_index));
                const double inv_f = 1.0 / static_cast<double>(triplets.size());
                const double inv_p = inv_f / 2.0;
                for (const auto& t : triplets) {
                    const Vec eps = draw_normal(d, eps_rng, unit);
                    triplet_pass(bundle, domain, t, cfg.weights,
                                 cfg.contrastive.margin, eps, inv_f, inv_p,
                                 batch_stats);
                }
            } else {
                const double inv_f = 1.0 / static_cast<double>(batch.size());
                for (const auto& a : batch) {
                    Vec eps;
                    if (kind == ModelKind::vae) eps = draw_normal(d, eps_rng, unit);
                    baseline_pass(bundle, domain, a, cfg.weights, kind,
                                  kind == ModelKind::vae ? &eps : nullptr, inv_f,
                                  batch_stats);
                }
            }

            const double batch_rec = batch_stats.rec / batch_stats.forwards;
            const double batch_kl =
                kind == ModelKind::ae ? 0.0 : batch_stats.kl / batch_stats.forwards;
            const double batch_con =
                batch_stats.pairs > 0 ? batch_stats.con / batch_stats.pairs : 0.0;
            const double batch_total =
                total_loss(batch_rec, batch_kl, batch_con, cfg.weights);
            if (!std::isfinite(batch_total))
                throw DataError("non-finite loss at epoch " +
                                std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index));

            opt.step(bundle.params);

            epoch_stats.rec += batch_stats.rec;
            epoch_stats.kl += batch_stats.kl;
            epoch_stats.con += batch_stats.con;
            epoch_stats.forwards += batch_stats.forwards;
            epoch_stats.pairs += batch_stats.pairs;
        }

        const double rec = epoch_stats.rec / epoch_stats.forwards;
        const double kl =
            kind == ModelKind::ae ? 0.0 : epoch_stats.kl / epoch_stats.forwards;
        const double con =
            epoch_stats.pairs > 0 ? epoch_stats.con / epoch_stats.pairs : 0.0;
        const double total = total_loss(rec, kl, con, cfg.weights);

        std::vector<double> row{static_cast<double>(epoch), total, rec};
        if (kind != ModelKind::ae) row.push_back(kl);
        if (kind == ModelKind::ctal_vae) row.push_back(con);
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::ctal_vae: return "ctal_vae";
        case ModelKind::vae: return "vae";
        case ModelKind::ae: return "ae";
    }
    throw DataError("unknown model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "ctal_vae") return ModelKind::ctal_vae;
    if (name == "vae") return ModelKind::vae;
    if (name == "ae") return ModelKind::ae;
    throw DataError("unknown model kind '" + name + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw DataError("epochs must be positive");
    if (!(lr > 0)) throw DataError("learning rate must be positive");
    if (batch_size < 1) throw DataError("batch size must be positive");
    weights.validate();
    contrastive.validate();
}

std::vector<double> LossTrace::column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end())
        throw DataError("loss trace has no column '" + name + "'");
    const auto idx = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row.at(idx));
    return out;
}

ModelBundle make_bundle(const CoreConfig& core, const DomainInfo& source,
                        std::uint64_t seed) {
    core.validate();
    if (source.dim < 1) throw DataError("domain dimension must be positive");
    if (source.norm.mean.size() != source.dim ||
        source.norm.std.size() != source.dim)
        throw DataError("domain '" + source.name +
                        "' normalizer does not match its dimension");

    ModelBundle bundle;
    bundle.core = core;
    std::mt19937_64 rng(derive_seed(seed, kStreamInit));
    add_core_params(bundle.params, core, rng);
    add_adaptor_params(bundle.params, source.name, source.dim, core.core_dim,
                       rng);
    bundle.domains[source.name] = DomainEntry{source.dim, source.norm};
    return bundle;
}

TrainResult train_source(const std::vector<Sequence>& sequences,
                         const DomainInfo& source, const CoreConfig& core,
                         const TrainConfig& cfg, ModelKind kind) {
    cfg.validate();
    if (sequences.empty()) throw DataError("train_source: no sequences");
    check_sequences(sequences, core.seq_len, source.dim, "train_source");

    TrainResult result{make_bundle(core, source, cfg.seed), {}};
    set_trainable(result.bundle, TrainScope::all());
    result.trace =
        fit(result.bundle, source.name, sequences, cfg, kind, false, 1);
    return result;
}

LossTrace adapt_target(ModelBundle& bundle, const std::vector<Sequence>& anchors,
                       const DomainInfo& target, const TrainConfig& cfg,
                       ModelKind kind) {
    cfg.validate();
    if (anchors.empty()) throw DataError("adapt_target: zero shots");
    check_sequences(anchors, bundle.core.seq_len, target.dim, "adapt_target");
    if (target.norm.mean.size() != target.dim ||
        target.norm.std.size() != target.dim)
        throw DataError("domain '" + target.name +
                        "' normalizer does not match its dimension");

    if (!bundle.params.has(adaptor_group(target.name) + "/in.w")) {
        // Warm start from the first existing domain; dimensions are checked
        // inside and mismatches fall back to fresh initialization.
        std::string from;
        for (const auto& [dname, entry] : bundle.domains)
            if (dname != target.name) {
                from = dname;
                break;
            }
        std::mt19937_64 rng(derive_seed(cfg.seed, kStreamInit, 2));
        add_adaptor_params_from(bundle.params, target.name, from, target.dim,
                                bundle.core.core_dim, rng);
    }
    bundle.domains[target.name] = DomainEntry{target.dim, target.norm};

    set_trainable(bundle, TrainScope::adaptors_of(target.name));
    return fit(bundle, target.name, anchors, cfg, kind, true, 2);
}

std::vector<double> score(const ModelBundle& bundle, const std::string& domain,
                          const std::vector<Sequence>& sequences) {
    if (!bundle.has_domain(domain))
        throw DataError("unknown domain '" + domain + "'");
    const int dim = bundle.domains.at(domain).dim;
    check_sequences(sequences, bundle.core.seq_len, dim, "score");

    const auto& ps = bundle.params;
    std::vector<double> scores;
    scores.reserve(sequences.size());
    for (const auto& s : sequences) {
        const Mat ain = adapt_in_seq(ps, domain, s.data, s.mask);
        const LatentParams lp = encode(ps, ain, s.mask);
        const Mat em = decode(ps, lp.mu, bundle.core.seq_len);
        const Mat xhat = adapt_out_seq(ps, domain, em);
        scores.push_back(mse_loss(s.data, xhat, s.mask));
    }
    return scores;
}

LossParts sequence_loss_parts(const ModelBundle& bundle,
                              const std::string& domain, const Sequence& seq,
                              const LossWeights& weights, const Vec* eps) {
    if (!bundle.has_domain(domain))
        throw DataError("unknown domain '" + domain + "'");
    const auto& ps = bundle.params;
    const Mat ain = adapt_in_seq(ps, domain, seq.data, seq.mask);
    const LatentParams lp = encode(ps, ain, seq.mask);
    const Vec z = eps ? sample_latent(lp, *eps) : Vec(lp.mu);
    const Mat em = decode(ps, z, bundle.core.seq_len);
    const Mat xhat = adapt_out_seq(ps, domain, em);

    LossParts parts;
    parts.rec = mse_loss(seq.data, xhat, seq.mask);
    parts.kl = kl_loss(lp);
    parts.con = 0.0;
    parts.total = total_loss(parts.rec, parts.kl, parts.con, weights);
    return parts;
}

double fit_threshold(const std::vector<double>& benign_scores, double q) {
    if (benign_scores.empty()) throw DataError("fit_threshold: empty scores");
    if (!(q > 0.0 && q <= 1.0))
        throw DataError("threshold quantile must be in (0, 1]");
    std::vector<double> sorted = benign_scores;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

std::vector<Label> classify(const std::vector<double>& scores,
                            double threshold) {
    std::vector<Label> out;
    out.reserve(scores.size());
    for (double s : scores)
        out.push_back(s > threshold ? Label::anomalous : Label::benign);
    return out;
}

Metrics evaluate(const std::vector<Label>& predicted,
                 const std::vector<Label>& truth) {
    if (predicted.empty()) throw DataError("evaluate: empty input");
    if (predicted.size() != truth.size())
        throw DataError("evaluate: prediction/truth length mismatch");

    Metrics m;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == Label::anomalous;
        const bool t = truth[i] == Label::anomalous;
        if (p && t)
            ++m.tp;
        else if (!p && !t)
            ++m.tn;
        else if (p && !t)
            ++m.fp;
        else
            ++m.fn;
    }
    const auto n = static_cast<double>(predicted.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.sensitivity =
        m.tp + m.fn > 0 ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
    const double f1 = static_cast<double>(m.tp + m.fp);
    const double f2 = static_cast<double>(m.tp + m.fn);
    const double f3 = static_cast<double>(m.tn + m.fp);
    const double f4 = static_cast<double>(m.tn + m.fn);
    if (f1 > 0 && f2 > 0 && f3 > 0 && f4 > 0)
        m.mcc = (static_cast<double>(m.tp) * m.tn -
                 static_cast<double>(m.fp) * m.fn) /
                std::sqrt(f1 * f2 * f3 * f4);
    return m;
}

}  // namespace ctalvae
