#pragma once

#include "ctalvae/flow.hpp"
#include "ctalvae/vae.hpp"

#include <cstdint>
#include <vector>

namespace ctalvae {

struct LossWeights {
    double rec = 1.0;
    double kl = 0.1;
    double con = 1.0;

    void validate() const;  // non-negative, not all zero
};

struct ContrastiveConfig {
    double margin = 0.5;        // in (0, 2]
    double noise_sigma = 0.05;  // positive-pair perturbation scale
    int triplets_per_anchor = 1;

    void validate() const;
};

/// (anchor, positive, negative) sequences. The negative comes from a
/// different receiver, or is a tagged synthetic perturbation when the pool
/// has no other receiver to offer.
struct Triplet {
    Sequence anchor;
    Sequence positive;
    Sequence negative;
    bool synthetic_negative = false;
};

/// Mean squared error over mask=true rows only; padded rows never
/// contribute. Denominator is (#real rows) * dim.
double mse_loss(const Mat& x, const Mat& x_hat,
                const std::vector<std::uint8_t>& mask);

/// Gradient of dloss * mse_loss wrt x_hat (zero on masked rows).
Mat mse_loss_backward(const Mat& x, const Mat& x_hat,
                      const std::vector<std::uint8_t>& mask, double dloss);

/// KL(q || N(0, I)) in closed form: 0.5 * sum(mu^2 + sigma^2 - 1 - log
/// sigma^2). Non-negative, zero exactly at the prior.
double kl_loss(const LatentParams& lp);

/// Accumulates dloss * dKL/dmu and dloss * dKL/dlogvar.
void kl_loss_backward(const LatentParams& lp, double dloss, Vec& dmu,
                      Vec& dlogvar);

/// Cosine of the angle between a and b, norms floored at 1e-12.
double cosine_sim(const Vec& a, const Vec& b);

/// Per-pair contrastive term with C = cosine_sim(anchor, other):
///   y=0 (similar):    (1 - C)^2
///   y=1 (dissimilar): max(0, m - (1 - C))^2
double contrastive_term(const Vec& anchor, const Vec& other, int y, double m);

void contrastive_term_backward(const Vec& anchor, const Vec& other, int y,
                               double m, double dloss, Vec& danchor,
                               Vec& dother);

/// For each anchor, k triplets: positive = anchor plus N(0, sigma^2) noise
/// on real rows; negative drawn uniformly from pool entries with a
/// different receiver, falling back to a synthetic heavy-noise row-shuffled
/// copy of the anchor when the pool has none. Pure function of
/// (inputs, cfg, seed).
std::vector<Triplet> make_triplets(const std::vector<Sequence>& anchors,
                                   const std::vector<Sequence>& pool,
                                   const ContrastiveConfig& cfg,
                                   std::uint64_t seed);

/// Weighted sum lambda_con * con + lambda_rec * rec + lambda_kl * kl.
double total_loss(double rec, double kl, double con, const LossWeights& w);

}  // namespace ctalvae
