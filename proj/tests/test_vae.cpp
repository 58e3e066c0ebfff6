#include <doctest.h>

#include "ctalvae/objectives.hpp"
#include "ctalvae/vae.hpp"

#include <cmath>
#include <random>

using namespace ctalvae;

namespace {

ParameterStore make_core(const CoreConfig& cfg, std::uint64_t seed) {
    ParameterStore ps;
    std::mt19937_64 rng(seed);
    add_core_params(ps, cfg, rng);
    return ps;
}

Mat random_seq(int seq_len, int dim, std::uint64_t seed, int valid) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat m = Mat::Zero(seq_len, dim);
    for (int t = 0; t < valid; ++t)
        for (int j = 0; j < dim; ++j) m(t, j) = dist(rng);
    return m;
}

std::vector<std::uint8_t> mask_of(int seq_len, int valid) {
    std::vector<std::uint8_t> m(seq_len, 0);
    for (int t = 0; t < valid; ++t) m[t] = 1;
    return m;
}

}  // namespace

TEST_SUITE("vae") {

TEST_CASE("zero-weight encoder returns the head biases") {
    CoreConfig cfg{4, 3, 2, 5};
    auto ps = make_core(cfg, 1);
    for (const auto& name : ps.names()) ps.at(name).value.setZero();
    ps.at("core/mu.b").value.col(0) << 0.7, -0.3;
    ps.at("core/logvar.b").value.col(0) << 0.1, 0.2;

    const Mat seq = random_seq(5, 4, 2, 5);
    const auto lp = encode(ps, seq, mask_of(5, 5));
    CHECK(lp.mu(0) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(lp.mu(1) == doctest::Approx(-0.3).epsilon(1e-15));
    CHECK(lp.log_var(0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(lp.log_var(1) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("encoding with trailing padding equals encoding the truncated sequence") {
    CoreConfig cfg{6, 5, 3, 8};
    auto ps = make_core(cfg, 7);

    Mat padded = random_seq(8, 6, 3, 5);  // rows 5..7 zero
    const auto lp_padded = encode(ps, padded, mask_of(8, 5));

    CoreConfig short_cfg = cfg;
    short_cfg.seq_len = 5;
    Mat truncated = padded.topRows(5);
    const auto lp_short = encode(ps, truncated, mask_of(5, 5));

    CHECK((lp_padded.mu - lp_short.mu).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((lp_padded.log_var - lp_short.log_var).cwiseAbs().maxCoeff() < 1e-14);

    // Garbage in padded rows must not leak into the posterior.
    padded.row(6).setConstant(1e6);
    const auto lp_garbage = encode(ps, padded, mask_of(8, 5));
    CHECK((lp_garbage.mu - lp_short.mu).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("default-size shapes and all-false mask rejection") {
    CoreConfig cfg;  // 43 / 64 / 16 / 30
    auto ps = make_core(cfg, 3);
    const Mat seq = random_seq(30, 43, 4, 30);
    const auto lp = encode(ps, seq, mask_of(30, 30));
    CHECK(lp.mu.size() == 16);
    CHECK(lp.log_var.size() == 16);
    CHECK_THROWS_AS(encode(ps, seq, mask_of(30, 0)), DataError);
}

TEST_CASE("sample_latent identities") {
    LatentParams lp{Vec(2), Vec(2)};
    lp.mu << 0.5, -1.5;
    lp.log_var << 0.0, std::log(4.0);
    CHECK(sample_latent(lp, Vec::Zero(2)) == lp.mu);

    LatentParams prior{Vec::Zero(3), Vec::Zero(3)};
    Vec e(3);
    e << 0.1, -0.2, 0.3;
    CHECK(sample_latent(prior, e) == e);

    Vec one(2);
    one << 1.0, 1.0;
    const Vec z = sample_latent(lp, one);
    CHECK(z(0) == doctest::Approx(0.5 + 1.0).epsilon(1e-15));
    CHECK(z(1) == doctest::Approx(-1.5 + 2.0).epsilon(1e-15));
}

TEST_CASE("sample_latent mean over draws approaches mu") {
    LatentParams lp{Vec(2), Vec(2)};
    lp.mu << 1.0, -2.0;
    lp.log_var << std::log(0.25), std::log(4.0);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> dist(0.0, 1.0);
    const int n = 10000;
    Vec sum = Vec::Zero(2);
    for (int i = 0; i < n; ++i) {
        Vec e(2);
        e << dist(rng), dist(rng);
        sum += sample_latent(lp, e);
    }
    const Vec mean = sum / n;
    for (int j = 0; j < 2; ++j) {
        const double sigma = std::exp(lp.log_var(j) / 2.0);
        CHECK(std::abs(mean(j) - lp.mu(j)) < 3.0 * sigma / std::sqrt(n));
    }
}

TEST_CASE("zero-weight decoder emits the output bias at every step") {
    CoreConfig cfg{4, 3, 2, 6};
    auto ps = make_core(cfg, 11);
    for (const auto& name : ps.names()) ps.at(name).value.setZero();
    ps.at("core/dec_out.b").value.col(0) << 1.5, -0.5, 0.25, 2.0;

    Vec z(2);
    z << 0.3, -0.7;
    const Mat out = decode(ps, z, 6);
    REQUIRE(out.rows() == 6);
    REQUIRE(out.cols() == 4);
    for (int t = 0; t < 6; ++t) {
        CHECK(out(t, 0) == doctest::Approx(1.5).epsilon(1e-15));
        CHECK(out(t, 3) == doctest::Approx(2.0).epsilon(1e-15));
    }
}

TEST_CASE("decode is deterministic and shape-stable") {
    CoreConfig cfg{5, 4, 3, 7};
    auto ps = make_core(cfg, 13);
    Vec z(3);
    z << 0.2, -1.0, 0.5;
    const Mat a = decode(ps, z, 7);
    const Mat b = decode(ps, z, 7);
    CHECK(a == b);
    CHECK(a.rows() == 7);
    CHECK(a.cols() == 5);
    // Extreme z still yields the full shape with finite values.
    const Mat c = decode(ps, Vec::Constant(3, 50.0), 7);
    CHECK(c.rows() == 7);
    CHECK(c.allFinite());
}

TEST_CASE("encode backward matches finite differences") {
    CoreConfig cfg{3, 4, 2, 5};
    auto ps = make_core(cfg, 17);
    const Mat seq = random_seq(5, 3, 18, 4);
    const auto mask = mask_of(5, 4);
    Vec wmu(2), wlv(2);
    wmu << 1.2, -0.4;
    wlv << 0.6, 0.9;

    auto fn = [&](ParameterStore& s, bool with_grad) {
        EncodeCache cache;
        const auto lp = encode(s, seq, mask, &cache);
        if (with_grad) encode_backward(s, cache, wmu, wlv);
        return wmu.dot(lp.mu) + wlv.dot(lp.log_var);
    };
    const auto report = grad_check(fn, ps, 150, 1e-5, 19);
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("decode backward matches finite differences including dz") {
    CoreConfig cfg{3, 4, 2, 4};
    auto ps = make_core(cfg, 23);
    std::mt19937_64 zrng(24);
    init_uniform(ps.create("probe/z", 2, 1), 2, zrng);
    const Mat target = random_seq(4, 3, 25, 4);

    auto fn = [&](ParameterStore& s, bool with_grad) {
        DecodeCache cache;
        const Vec z = s.at("probe/z").value.col(0);
        const Mat out = decode(s, z, 4, &cache);
        const Mat diff = out - target;
        if (with_grad) {
            const Vec dz = decode_backward(s, cache, 2.0 * diff);
            s.at("probe/z").grad.col(0) += dz;
        }
        return diff.squaredNorm();
    };
    const auto report = grad_check(fn, ps, 200, 1e-5, 26);
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("reconstruct composes encode, sample and decode") {
    CoreConfig cfg{4, 5, 3, 6};
    auto ps = make_core(cfg, 29);
    const Mat seq = random_seq(6, 4, 30, 6);
    const auto mask = mask_of(6, 6);
    Vec eps(3);
    eps << 0.3, -0.1, 0.8;

    const auto direct = reconstruct(ps, seq, mask, eps);
    const auto lp = encode(ps, seq, mask);
    const Vec z = sample_latent(lp, eps);
    const Mat recon = decode(ps, z, 6);
    CHECK(direct.recon == recon);
    CHECK(direct.lp.mu == lp.mu);
    CHECK(direct.lp.log_var == lp.log_var);

    // eps=0 path is deterministic end to end.
    const auto a = reconstruct(ps, seq, mask, Vec::Zero(3));
    const auto b = reconstruct(ps, seq, mask, Vec::Zero(3));
    CHECK(a.recon == b.recon);
}

TEST_CASE("tiny model overfits one sequence") {
    // Full-loop sanity: 200 Adam steps on a single repeated sequence must
    // cut the masked reconstruction error below 10% of its initial value.
    CoreConfig cfg{3, 8, 4, 6};
    auto ps = make_core(cfg, 31);
    const Mat seq = random_seq(6, 3, 32, 6);
    const auto mask = mask_of(6, 6);
    const Vec eps = Vec::Zero(4);

    auto loss_of = [&]() {
        const auto r = reconstruct(ps, seq, mask, eps);
        return mse_loss(seq, r.recon, mask);
    };
    const double initial = loss_of();

    AdamOptimizer opt({.lr = 5e-3});
    for (int step = 0; step < 200; ++step) {
        EncodeCache ec;
        DecodeCache dc;
        const auto lp = encode(ps, seq, mask, &ec);
        const Vec z = sample_latent(lp, eps);
        const Mat recon = decode(ps, z, 6, &dc);
        const Mat drecon = mse_loss_backward(seq, recon, mask, 1.0);
        const Vec dz = decode_backward(ps, dc, drecon);
        // eps=0: z == mu, so dz lands on mu only.
        encode_backward(ps, ec, dz, Vec::Zero(4));
        opt.step(ps);
    }
    const double trained = loss_of();
    CHECK(trained < 0.1 * initial);
}

}  // TEST_SUITE
