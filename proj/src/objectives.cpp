#include "ctalvae/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace ctalvae {

namespace {
constexpr double kNormFloor = 1e-12;
}

void LossWeights::validate() const {
    if (rec < 0 || kl < 0 || con < 0)
        throw DataError("loss weights must be non-negative");
    if (rec == 0 && kl == 0 && con == 0)
        throw DataError("loss weights must not all be zero");
}

void ContrastiveConfig::validate() const {
    if (!(margin > 0.0 && margin <= 2.0))
        throw DataError("contrastive margin must be in (0, 2]");
    if (!(noise_sigma > 0.0))
        throw DataError("contrastive noise_sigma must be positive");
    if (triplets_per_anchor < 1)
        throw DataError("triplets_per_anchor must be >= 1");
}

double mse_loss(const Mat& x, const Mat& x_hat,
                const std::vector<std::uint8_t>& mask) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
        throw DataError("mse_loss: shape mismatch");
    if (static_cast<Eigen::Index>(mask.size()) != x.rows())
        throw DataError("mse_loss: mask length mismatch");
    double sum = 0.0;
    Eigen::Index valid = 0;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        if (!mask[t]) continue;
        ++valid;
        sum += (x.row(t) - x_hat.row(t)).squaredNorm();
    }
    if (valid == 0) throw DataError("mse_loss: all-false mask");
    return sum / static_cast<double>(valid * x.cols());
}

Mat mse_loss_backward(const Mat& x, const Mat& x_hat,
                      const std::vector<std::uint8_t>& mask, double dloss) {
    Eigen::Index valid = 0;
    for (auto m : mask)
        if (m) ++valid;
    const double scale =
        2.0 * dloss / static_cast<double>(valid * x.cols());
    Mat d = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        if (!mask[t]) continue;
        d.row(t) = scale * (x_hat.row(t) - x.row(t));
    }
    return d;
}

double kl_loss(const LatentParams& lp) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < lp.mu.size(); ++j) {
        const double mu = lp.mu(j);
        const double lv = lp.log_var(j);
        sum += mu * mu + std::exp(lv) - 1.0 - lv;
    }
    return 0.5 * sum;
}

void kl_loss_backward(const LatentParams& lp, double dloss, Vec& dmu,
                      Vec& dlogvar) {
    dmu.array() += dloss * lp.mu.array();
    dlogvar.array() += dloss * 0.5 * (lp.log_var.array().exp() - 1.0);
}

double cosine_sim(const Vec& a, const Vec& b) {
    const double na = std::max(a.norm(), kNormFloor);
    const double nb = std::max(b.norm(), kNormFloor);
    return a.dot(b) / (na * nb);
}

double contrastive_term(const Vec& anchor, const Vec& other, int y, double m) {
    const double c = cosine_sim(anchor, other);
    if (y == 0) {
        const double d = 1.0 - c;
        return d * d;
    }
    const double s = std::max(0.0, m - (1.0 - c));
    return s * s;
}

namespace {

// dC/da with the same norm floor the forward pass uses; below the floor
// the norm is a constant, so only the dot-product term survives.
void cosine_backward(const Vec& a, const Vec& b, double dc, Vec& da, Vec& db) {
    const double ra = a.norm();
    const double rb = b.norm();
    const double na = std::max(ra, kNormFloor);
    const double nb = std::max(rb, kNormFloor);
    const double dot = a.dot(b);
    da += dc * (b / (na * nb));
    if (ra > kNormFloor) da -= dc * (dot / (na * na * na * nb)) * a;
    db += dc * (a / (na * nb));
    if (rb > kNormFloor) db -= dc * (dot / (na * nb * nb * nb)) * b;
}

}  // namespace

void contrastive_term_backward(const Vec& anchor, const Vec& other, int y,
                               double m, double dloss, Vec& danchor,
                               Vec& dother) {
    const double c = cosine_sim(anchor, other);
    double dc = 0.0;
    if (y == 0) {
        dc = -2.0 * (1.0 - c) * dloss;
    } else {
        const double s = m - (1.0 - c);
        if (s > 0.0) dc = 2.0 * s * dloss;
    }
    if (dc != 0.0) cosine_backward(anchor, other, dc, danchor, dother);
}

std::vector<Triplet> make_triplets(const std::vector<Sequence>& anchors,
                                   const std::vector<Sequence>& pool,
                                   const ContrastiveConfig& cfg,
                                   std::uint64_t seed) {
    if (anchors.empty()) throw DataError("make_triplets: empty anchors");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    std::vector<Triplet> out;
    out.reserve(anchors.size() * cfg.triplets_per_anchor);
    for (const auto& anchor : anchors) {
        std::vector<std::size_t> other_receiver;
        for (std::size_t j = 0; j < pool.size(); ++j)
            if (pool[j].receiver != anchor.receiver) other_receiver.push_back(j);

        for (int k = 0; k < cfg.triplets_per_anchor; ++k) {
            Triplet t;
            t.anchor = anchor;

            t.positive = anchor;
            if (cfg.noise_sigma > 0.0) {
                const int valid = anchor.valid_len();
                for (int r = 0; r < valid; ++r)
                    for (Eigen::Index c = 0; c < t.positive.data.cols(); ++c)
                        t.positive.data(r, c) += cfg.noise_sigma * unit(rng);
            }

            if (!other_receiver.empty()) {
                std::uniform_int_distribution<std::size_t> pick(
                    0, other_receiver.size() - 1);
                t.negative = pool[other_receiver[pick(rng)]];
            } else {
                // No cross-receiver material: heavy noise plus a row shuffle
                // keeps the negative far from the anchor in input space.
                t.negative = anchor;
                t.synthetic_negative = true;
                const int valid = anchor.valid_len();
                const double sigma = 10.0 * cfg.noise_sigma;
                for (int r = 0; r < valid; ++r)
                    for (Eigen::Index c = 0; c < t.negative.data.cols(); ++c)
                        t.negative.data(r, c) += sigma * unit(rng);
                std::vector<int> order(valid);
                for (int r = 0; r < valid; ++r) order[r] = r;
                std::shuffle(order.begin(), order.end(), rng);
                Mat shuffled = t.negative.data;
                for (int r = 0; r < valid; ++r)
                    shuffled.row(r) = t.negative.data.row(order[r]);
                t.negative.data = std::move(shuffled);
            }
            out.push_back(std::move(t));
        }
    }
    return out;
}

double total_loss(double rec, double kl, double con, const LossWeights& w) {
    return w.con * con + w.rec * rec + w.kl * kl;
}

}  // namespace ctalvae
