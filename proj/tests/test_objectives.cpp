#include <doctest.h>

#include "ctalvae/objectives.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace ctalvae;

namespace {

Sequence make_seq(const std::string& receiver, int seq_len, int dim,
                  int valid, std::uint64_t seed) {
    Sequence s;
    s.receiver = receiver;
    s.data = Mat::Zero(seq_len, dim);
    s.mask.assign(seq_len, 0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int t = 0; t < valid; ++t) {
        s.mask[t] = 1;
        for (int j = 0; j < dim; ++j) s.data(t, j) = dist(rng);
    }
    return s;
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("masked mse fixtures") {
    Mat x(1, 2), xh(1, 2);
    x << 1, 2;
    xh << 0, 0;
    std::vector<std::uint8_t> mask{1};
    CHECK(mse_loss(x, x, mask) == 0.0);
    CHECK(mse_loss(x, xh, mask) == doctest::Approx(2.5).epsilon(1e-15));

    // Masked rows must not contribute no matter their contents.
    Mat x2(3, 2), xh2(3, 2);
    x2.setZero();
    xh2.setZero();
    x2.row(0) << 1, 2;
    std::vector<std::uint8_t> mask2{1, 0, 0};
    const double base = mse_loss(x2, xh2, mask2);
    xh2.row(1) << 1e9, -1e9;
    xh2.row(2) << 42, 42;
    CHECK(mse_loss(x2, xh2, mask2) == base);
    CHECK(base == doctest::Approx(2.5).epsilon(1e-15));

    std::vector<std::uint8_t> none{0, 0, 0};
    CHECK_THROWS_AS(mse_loss(x2, xh2, none), DataError);
    Mat wrong(2, 2);
    wrong.setZero();
    CHECK_THROWS_AS(mse_loss(x2, wrong, mask2), DataError);
    std::vector<std::uint8_t> short_mask{1, 0};
    CHECK_THROWS_AS(mse_loss(x2, xh2, short_mask), DataError);
}

TEST_CASE("masked mse averages over valid rows times dim") {
    Mat x(2, 3), xh(2, 3);
    x.setZero();
    xh.setConstant(2.0);  // per-element squared error 4
    std::vector<std::uint8_t> mask{1, 1};
    CHECK(mse_loss(x, xh, mask) == doctest::Approx(4.0).epsilon(1e-15));
    std::vector<std::uint8_t> half{1, 0};
    CHECK(mse_loss(x, xh, half) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("mse backward matches finite differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat x(4, 3), xh(4, 3);
    for (int t = 0; t < 4; ++t)
        for (int j = 0; j < 3; ++j) {
            x(t, j) = dist(rng);
            xh(t, j) = dist(rng);
        }
    std::vector<std::uint8_t> mask{1, 1, 1, 0};
    const double dloss = 0.7;
    const Mat grad = mse_loss_backward(x, xh, mask, dloss);
    CHECK(grad.row(3).isZero());
    const double h = 1e-6;
    for (int t = 0; t < 4; ++t)
        for (int j = 0; j < 3; ++j) {
            Mat xp = xh, xm = xh;
            xp(t, j) += h;
            xm(t, j) -= h;
            const double numeric =
                dloss * (mse_loss(x, xp, mask) - mse_loss(x, xm, mask)) /
                (2 * h);
            CHECK(grad(t, j) == doctest::Approx(numeric).epsilon(1e-6));
        }
}

TEST_CASE("kl fixtures") {
    LatentParams prior{Vec::Zero(3), Vec::Zero(3)};
    CHECK(kl_loss(prior) == 0.0);

    LatentParams shifted{Vec::Constant(1, 1.0), Vec::Zero(1)};
    CHECK(kl_loss(shifted) == doctest::Approx(0.5).epsilon(1e-15));

    LatentParams wide{Vec::Zero(1), Vec::Constant(1, std::log(4.0))};
    CHECK(kl_loss(wide) ==
          doctest::Approx((3.0 - std::log(4.0)) / 2.0).epsilon(1e-12));
}

TEST_CASE("kl is non-negative and zero only at the prior") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        LatentParams lp{Vec(4), Vec(4)};
        for (int j = 0; j < 4; ++j) {
            lp.mu(j) = dist(rng);
            lp.log_var(j) = dist(rng);
        }
        CHECK(kl_loss(lp) >= 0.0);
    }
    LatentParams nudged{Vec::Zero(2), Vec::Zero(2)};
    nudged.mu(0) = 1e-3;
    CHECK(kl_loss(nudged) > 0.0);
}

TEST_CASE("kl matches a monte-carlo estimate") {
    // KL(q||p) = E_q[log q(z) - log p(z)], estimated by sampling.
    LatentParams lp{Vec::Constant(1, 0.0), Vec::Constant(1, std::log(4.0))};
    const double mu = lp.mu(0);
    const double var = std::exp(lp.log_var(0));
    std::mt19937_64 rng(11);
    std::normal_distribution<double> dist(mu, std::sqrt(var));
    double acc = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double z = dist(rng);
        const double log_q =
            -0.5 * (std::log(2 * M_PI * var) + (z - mu) * (z - mu) / var);
        const double log_p = -0.5 * (std::log(2 * M_PI) + z * z);
        acc += log_q - log_p;
    }
    CHECK(kl_loss(lp) == doctest::Approx(acc / n).epsilon(1e-2));
}

TEST_CASE("kl backward matches finite differences") {
    LatentParams lp{Vec(3), Vec(3)};
    lp.mu << 0.4, -1.2, 0.0;
    lp.log_var << 0.3, -0.5, 1.1;
    Vec dmu = Vec::Zero(3), dlv = Vec::Zero(3);
    const double dloss = 1.3;
    kl_loss_backward(lp, dloss, dmu, dlv);
    const double h = 1e-6;
    for (int j = 0; j < 3; ++j) {
        LatentParams lp_p = lp, lp_m = lp;
        lp_p.mu(j) += h;
        lp_m.mu(j) -= h;
        CHECK(dmu(j) == doctest::Approx(dloss * (kl_loss(lp_p) - kl_loss(lp_m)) /
                                        (2 * h))
                            .epsilon(1e-6));
        lp_p = lp;
        lp_m = lp;
        lp_p.log_var(j) += h;
        lp_m.log_var(j) -= h;
        CHECK(dlv(j) == doctest::Approx(dloss * (kl_loss(lp_p) - kl_loss(lp_m)) /
                                        (2 * h))
                            .epsilon(1e-6));
    }
}

TEST_CASE("cosine similarity fixtures") {
    Vec v(3);
    v << 0.3, -1.0, 2.0;
    CHECK(cosine_sim(v, v) == doctest::Approx(1.0).epsilon(1e-12));
    Vec e1(2), e2(2), diag(2);
    e1 << 1, 0;
    e2 << 0, 1;
    diag << 1, 1;
    CHECK(cosine_sim(e1, e2) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cosine_sim(diag, e1) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(cosine_sim(e1, -e1) == doctest::Approx(-1.0).epsilon(1e-12));
    // The norm floor keeps zero vectors finite.
    CHECK(std::isfinite(cosine_sim(Vec::Zero(2), e1)));
}

TEST_CASE("contrastive term fixtures") {
    Vec v(2);
    v << 1, 1;
    CHECK(contrastive_term(v, v, 0, 0.5) == doctest::Approx(0.0));
    CHECK(contrastive_term(v, v, 1, 0.5) == doctest::Approx(0.25));
    // C = 0 gives a similar-pair penalty of (1-0)^2 = 1.
    Vec e1(2), e2(2);
    e1 << 1, 0;
    e2 << 0, 1;
    CHECK(contrastive_term(e1, e2, 0, 0.5) == doctest::Approx(1.0));
    // y=1 with 1-C = 0.8 >= m = 0.5: margin satisfied, no penalty.
    Vec a(2), b(2);
    a << 1, 0;
    const double c_target = 0.2;
    b << c_target, std::sqrt(1 - c_target * c_target);
    CHECK(cosine_sim(a, b) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(contrastive_term(a, b, 1, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("contrastive backward matches finite differences") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int y : {0, 1}) {
        Vec a(4), b(4);
        for (int j = 0; j < 4; ++j) {
            a(j) = dist(rng);
            b(j) = 0.8 * a(j) + 0.4 * dist(rng);  // keep pairs off the hinge
        }
        const double m = 1.5;  // comfortably inside the active region
        Vec da = Vec::Zero(4), db = Vec::Zero(4);
        const double dloss = 0.9;
        contrastive_term_backward(a, b, y, m, dloss, da, db);
        const double h = 1e-6;
        for (int j = 0; j < 4; ++j) {
            Vec ap = a, am = a;
            ap(j) += h;
            am(j) -= h;
            const double na = dloss *
                              (contrastive_term(ap, b, y, m) -
                               contrastive_term(am, b, y, m)) /
                              (2 * h);
            CHECK(da(j) == doctest::Approx(na).epsilon(1e-5));
            Vec bp = b, bm = b;
            bp(j) += h;
            bm(j) -= h;
            const double nb = dloss *
                              (contrastive_term(a, bp, y, m) -
                               contrastive_term(a, bm, y, m)) /
                              (2 * h);
            CHECK(db(j) == doctest::Approx(nb).epsilon(1e-5));
        }
    }
}

TEST_CASE("contrastive hinge is flat once the margin is satisfied") {
    Vec a(2), b(2);
    a << 1, 0;
    b << -1, 0;  // C = -1, 1-C = 2 >= any m in (0,2]
    Vec da = Vec::Zero(2), db = Vec::Zero(2);
    contrastive_term_backward(a, b, 1, 0.5, 1.0, da, db);
    CHECK(da.isZero());
    CHECK(db.isZero());
}

TEST_CASE("make_triplets is deterministic and respects receivers") {
    std::vector<Sequence> pool;
    for (int r = 0; r < 3; ++r)
        for (int i = 0; i < 2; ++i)
            pool.push_back(
                make_seq("recv-" + std::to_string(r), 6, 4, 6, 100 * r + i));
    ContrastiveConfig cfg;
    cfg.triplets_per_anchor = 2;

    const auto t1 = make_triplets(pool, pool, cfg, 77);
    const auto t2 = make_triplets(pool, pool, cfg, 77);
    REQUIRE(t1.size() == pool.size() * 2);
    REQUIRE(t2.size() == t1.size());
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i].anchor.receiver == t2[i].anchor.receiver);
        CHECK(t1[i].positive.data == t2[i].positive.data);
        CHECK(t1[i].negative.data == t2[i].negative.data);
        CHECK(t1[i].synthetic_negative == t2[i].synthetic_negative);
        // Real negatives come from a different receiver.
        CHECK_FALSE(t1[i].synthetic_negative);
        CHECK(t1[i].negative.receiver != t1[i].anchor.receiver);
    }
    const auto t3 = make_triplets(pool, pool, cfg, 78);
    bool any_different = false;
    for (std::size_t i = 0; i < t1.size(); ++i)
        if (t1[i].positive.data != t3[i].positive.data) any_different = true;
    CHECK(any_different);
}

TEST_CASE("make_triplets perturbs only real rows of the positive") {
    std::vector<Sequence> pool{make_seq("a", 8, 3, 5, 1),
                               make_seq("b", 8, 3, 8, 2)};
    ContrastiveConfig cfg;
    cfg.noise_sigma = 0.5;
    const auto trips = make_triplets(pool, pool, cfg, 9);
    REQUIRE(trips.size() == 2);
    const auto& t = trips[0];
    CHECK(t.positive.mask == t.anchor.mask);
    for (int row = 5; row < 8; ++row) CHECK(t.positive.data.row(row).isZero());
    bool perturbed = false;
    for (int row = 0; row < 5; ++row)
        if (t.positive.data.row(row) != t.anchor.data.row(row)) perturbed = true;
    CHECK(perturbed);
}

TEST_CASE("make_triplets tiny sigma keeps the positive near the anchor") {
    std::vector<Sequence> pool{make_seq("a", 4, 2, 4, 3),
                               make_seq("b", 4, 2, 4, 4)};
    ContrastiveConfig cfg;
    cfg.noise_sigma = 1e-9;
    const auto trips = make_triplets(pool, pool, cfg, 21);
    for (const auto& t : trips)
        CHECK((t.positive.data - t.anchor.data).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("make_triplets falls back to synthetic negatives") {
    std::vector<Sequence> pool{make_seq("only", 6, 3, 6, 7),
                               make_seq("only", 6, 3, 6, 8)};
    ContrastiveConfig cfg;
    const auto trips = make_triplets(pool, pool, cfg, 33);
    REQUIRE(trips.size() == 2);
    for (const auto& t : trips) {
        CHECK(t.synthetic_negative);
        // Heavy noise + row shuffle: must differ from the anchor.
        CHECK(t.negative.data != t.anchor.data);
        CHECK(t.negative.mask == t.anchor.mask);
    }
    CHECK_THROWS_AS(make_triplets({}, pool, cfg, 1), DataError);
}

TEST_CASE("loss weight and contrastive config validation") {
    LossWeights w;
    w.validate();  // defaults are fine
    w.rec = -0.1;
    CHECK_THROWS_AS(w.validate(), DataError);
    w = LossWeights{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(w.validate(), DataError);

    ContrastiveConfig c;
    c.validate();
    c.margin = 0.0;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = ContrastiveConfig{};
    c.margin = 2.5;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = ContrastiveConfig{};
    c.noise_sigma = 0.0;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = ContrastiveConfig{};
    c.triplets_per_anchor = 0;
    CHECK_THROWS_AS(c.validate(), DataError);
}

TEST_CASE("total loss is the weighted sum") {
    LossWeights only_rec{1.0, 0.0, 0.0};
    CHECK(total_loss(2.0, 0.5, 0.25, only_rec) == 2.0);
    LossWeights ones{1.0, 1.0, 1.0};
    CHECK(total_loss(2.0, 0.5, 0.25, ones) == doctest::Approx(2.75));
    LossWeights mixed{2.0, 0.1, 3.0};
    CHECK(total_loss(1.0, 10.0, 0.5, mixed) ==
          doctest::Approx(2.0 + 1.0 + 1.5).epsilon(1e-15));
}

}  // TEST_SUITE
