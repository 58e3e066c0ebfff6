#pragma once

#include "ctalvae/adaptors.hpp"
#include "ctalvae/bundle.hpp"
#include "ctalvae/objectives.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ctalvae {

/// ctal_vae = full model (reconstruction + KL + contrastive triplets);
/// vae = reconstruction + KL only; ae = deterministic latent (z = mu),
/// reconstruction only. The baselines reuse the exact same topology and
/// seeded initialization so comparisons isolate the objective.
enum class ModelKind { ctal_vae, vae, ae };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct TrainConfig {
    int epochs = 100;
    double lr = 0.001;
    int batch_size = 16;
    std::uint64_t seed = 7;
    LossWeights weights;
    ContrastiveConfig contrastive;

    void validate() const;
};

/// What the pipeline needs to know about one domain: its name, raw feature
/// dimension and the normalizer its sequences were built with.
struct DomainInfo {
    std::string name;
    int dim = 0;
    Normalizer norm;
};

/// Per-epoch loss columns. The column set depends on the model kind:
/// ctal_vae has rec/kl/con, vae has rec/kl, ae has rec only.
struct LossTrace {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::vector<double> column(const std::string& name) const;
};

struct TrainResult {
    ModelBundle bundle;
    LossTrace trace;
};

struct Metrics {
    double accuracy = 0.0;
    double mcc = 0.0;
    double sensitivity = 0.0;
    long tp = 0, tn = 0, fp = 0, fn = 0;
};

/// Seeded core + source-adaptor initialization. Identical (core, source,
/// seed) give bit-identical parameters, whichever model kind trains them.
ModelBundle make_bundle(const CoreConfig& core, const DomainInfo& source,
                        std::uint64_t seed);

/// Phase 1: trains core and source adaptors jointly on source sequences.
/// Mini-batches are reshuffled per epoch; for ctal_vae each batch doubles
/// as the triplet negative pool. Deterministic under cfg.seed.
TrainResult train_source(const std::vector<Sequence>& sequences,
                         const DomainInfo& source, const CoreConfig& core,
                         const TrainConfig& cfg,
                         ModelKind kind = ModelKind::ctal_vae);

/// Phase 2: creates the target adaptor pair (warm-started from an existing
/// domain's pair when the dimensions match), freezes everything else, and
/// fine-tunes on the few-shot anchors as a single batch. For ctal_vae one
/// triplet ensemble per shot is built once and reused every epoch. The
/// core group is byte-identical before and after.
LossTrace adapt_target(ModelBundle& bundle, const std::vector<Sequence>& anchors,
                       const DomainInfo& target, const TrainConfig& cfg,
                       ModelKind kind = ModelKind::ctal_vae);

/// Anomaly score per sequence: masked MSE between the input and its
/// posterior-mean reconstruction (eps = 0). Deterministic and
/// order-preserving with the input list.
std::vector<double> score(const ModelBundle& bundle, const std::string& domain,
                          const std::vector<Sequence>& sequences);

struct LossParts {
    double total = 0.0, rec = 0.0, kl = 0.0, con = 0.0;
};

/// Single-sequence forward pass returning the weighted loss decomposition
/// (contrastive term excluded — it needs a triplet). eps = nullptr takes
/// the posterior mean.
LossParts sequence_loss_parts(const ModelBundle& bundle,
                              const std::string& domain, const Sequence& seq,
                              const LossWeights& weights,
                              const Vec* eps = nullptr);

/// Nearest-rank empirical quantile: value at index ceil(q * n) of the
/// ascending sort (1-based).
double fit_threshold(const std::vector<double>& benign_scores, double q);

/// anomalous iff score > threshold (strict).
std::vector<Label> classify(const std::vector<double>& scores,
                            double threshold);

/// Confusion counts plus accuracy, sensitivity (0 when there are no
/// positives) and MCC (0 when any denominator factor vanishes).
Metrics evaluate(const std::vector<Label>& predicted,
                 const std::vector<Label>& truth);

}  // namespace ctalvae
