#include <doctest.h>

#include "ctalvae/adaptors.hpp"
#include "ctalvae/bundle.hpp"
#include "ctalvae/objectives.hpp"
#include "ctalvae/pipeline.hpp"
#include "ctalvae/vae.hpp"

#include <random>

using namespace ctalvae;

namespace {

ParameterStore with_adaptor(const std::string& domain, int dim, int core,
                            std::uint64_t seed) {
    ParameterStore ps;
    std::mt19937_64 rng(seed);
    add_adaptor_params(ps, domain, dim, core, rng);
    return ps;
}

}  // namespace

TEST_SUITE("adaptors") {

TEST_CASE("adaptor parameters live under the domain group with bridge shapes") {
    auto ps = with_adaptor("target", 78, 43, 1);
    CHECK(adaptor_group("target") == "adaptor.target");
    CHECK(ps.at("adaptor.target/in.w").value.rows() == 43);
    CHECK(ps.at("adaptor.target/in.w").value.cols() == 78);
    CHECK(ps.at("adaptor.target/in.b").value.rows() == 43);
    CHECK(ps.at("adaptor.target/out.w").value.rows() == 78);
    CHECK(ps.at("adaptor.target/out.w").value.cols() == 43);
    CHECK(ps.at("adaptor.target/out.b").value.rows() == 78);

    Vec x(78);
    x.setOnes();
    CHECK(adapt_in(ps, "target", x).size() == 43);
    Vec y(43);
    y.setOnes();
    CHECK(adapt_out(ps, "target", y).size() == 78);
    CHECK_THROWS_AS(adapt_in(ps, "target", y), DataError);
    CHECK_THROWS_AS(adapt_out(ps, "target", x), DataError);
}

TEST_CASE("identity-initialized square adaptor passes input through") {
    auto ps = with_adaptor("d", 4, 4, 2);
    ps.at("adaptor.d/in.w").value = Mat::Identity(4, 4);
    ps.at("adaptor.d/in.b").value.setZero();
    ps.at("adaptor.d/out.w").value = Mat::Identity(4, 4);
    ps.at("adaptor.d/out.b").value.setZero();
    Vec x(4);
    x << 1.5, -2.0, 0.0, 3.25;
    CHECK(adapt_in(ps, "d", x) == x);
    CHECK(adapt_out(ps, "d", x) == x);
}

TEST_CASE("adaptors are affine: bias-corrected linearity") {
    auto ps = with_adaptor("d", 5, 3, 3);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> dist(0.0, 1.0);
    Vec x(5), y(5);
    for (int j = 0; j < 5; ++j) {
        x(j) = dist(rng);
        y(j) = dist(rng);
    }
    const double a = 0.7, b = -1.3;
    const Vec lhs = adapt_in(ps, "d", a * x + b * y);
    const Vec rhs = a * adapt_in(ps, "d", x) + b * adapt_in(ps, "d", y) -
                    (a + b - 1.0) * ps.at("adaptor.d/in.b").value.col(0);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sequence adaptors keep masked rows zero") {
    auto ps = with_adaptor("d", 3, 5, 5);
    Mat seq = Mat::Zero(4, 3);
    seq.row(0) << 1, 2, 3;
    seq.row(1) << -1, 0, 1;
    std::vector<std::uint8_t> mask{1, 1, 0, 0};
    const Mat adapted = adapt_in_seq(ps, "d", seq, mask);
    REQUIRE(adapted.rows() == 4);
    REQUIRE(adapted.cols() == 5);
    CHECK(adapted.row(2).isZero());
    CHECK(adapted.row(3).isZero());
    CHECK(adapted.row(0).transpose() ==
          adapt_in(ps, "d", seq.row(0).transpose()));

    // adapt_out_seq maps every emitted row (no mask).
    Mat emissions = Mat::Ones(4, 5);
    const Mat out = adapt_out_seq(ps, "d", emissions);
    REQUIRE(out.cols() == 3);
    for (int t = 0; t < 4; ++t)
        CHECK(out.row(t).transpose() ==
              adapt_out(ps, "d", emissions.row(t).transpose()));
}

TEST_CASE("adaptor backward passes match finite differences") {
    const int dim = 3, core = 4, T = 5;
    ParameterStore ps;
    std::mt19937_64 rng(6);
    add_adaptor_params(ps, "d", dim, core, rng);
    Mat seq = Mat::Zero(T, dim);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int t = 0; t < 4; ++t)
        for (int j = 0; j < dim; ++j) seq(t, j) = dist(rng);
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 0};
    Mat demissions(T, core), target(T, dim);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < core; ++j) demissions(t, j) = dist(rng);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < dim; ++j) target(t, j) = dist(rng);

    auto fn_in = [&](ParameterStore& s, bool with_grad) {
        const Mat adapted = adapt_in_seq(s, "d", seq, mask);
        if (with_grad) adapt_in_seq_backward(s, "d", seq, mask, demissions);
        return (adapted.array() * demissions.array()).sum();
    };
    CHECK(grad_check(fn_in, ps, 60, 1e-5, 7).max_rel_err < 1e-6);

    Mat emissions(T, core);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < core; ++j) emissions(t, j) = dist(rng);
    auto fn_out = [&](ParameterStore& s, bool with_grad) {
        const Mat out = adapt_out_seq(s, "d", emissions);
        const Mat diff = out - target;
        if (with_grad) adapt_out_seq_backward(s, "d", emissions, 2.0 * diff);
        return diff.squaredNorm();
    };
    CHECK(grad_check(fn_out, ps, 60, 1e-5, 8).max_rel_err < 1e-6);
}

TEST_CASE("gradient through adapt_in composed with encode") {
    CoreConfig cfg{4, 5, 3, 6};
    ParameterStore ps;
    std::mt19937_64 rng(9);
    add_core_params(ps, cfg, rng);
    add_adaptor_params(ps, "src", 7, 4, rng);
    Mat seq = Mat::Zero(6, 7);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 7; ++j) seq(t, j) = dist(rng);
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 0};
    Vec wmu(3);
    wmu << 0.9, -1.1, 0.4;

    auto fn = [&](ParameterStore& s, bool with_grad) {
        EncodeCache cache;
        const Mat adapted = adapt_in_seq(s, "src", seq, mask);
        const auto lp = encode(s, adapted, mask, &cache);
        if (with_grad) {
            const Mat dadapted = encode_backward(s, cache, wmu, Vec::Zero(3));
            adapt_in_seq_backward(s, "src", seq, mask, dadapted);
        }
        return wmu.dot(lp.mu);
    };
    CHECK(grad_check(fn, ps, 200, 1e-5, 10).max_rel_err < 1e-5);
}

TEST_CASE("trained adaptor pair approaches identity on a linear task") {
    // out(in(x)) should learn x when the bridge has enough width.
    const int dim = 3, core = 5;
    ParameterStore ps;
    std::mt19937_64 rng(11);
    add_adaptor_params(ps, "d", dim, core, rng);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Vec> xs;
    for (int i = 0; i < 32; ++i) {
        Vec x(dim);
        for (int j = 0; j < dim; ++j) x(j) = dist(rng);
        xs.push_back(x);
    }
    AdamOptimizer opt({.lr = 2e-2});
    double final_loss = 0.0;
    for (int step = 0; step < 400; ++step) {
        final_loss = 0.0;
        for (const auto& x : xs) {
            Mat seq = x.transpose();
            std::vector<std::uint8_t> mask{1};
            const Mat mid = adapt_in_seq(ps, "d", seq, mask);
            const Mat out = adapt_out_seq(ps, "d", mid);
            const Mat diff = out - seq;
            final_loss += diff.squaredNorm() / xs.size();
            const Mat dmid =
                adapt_out_seq_backward(ps, "d", mid, 2.0 * diff / xs.size());
            adapt_in_seq_backward(ps, "d", seq, mask, dmid);
        }
        opt.step(ps);
    }
    CHECK(final_loss < 1e-3);
}

TEST_CASE("warm start copies matching dims and falls back otherwise") {
    ParameterStore ps;
    std::mt19937_64 rng(12);
    add_adaptor_params(ps, "source", 6, 4, rng);

    std::mt19937_64 rng2(13);
    add_adaptor_params_from(ps, "same_dim", "source", 6, 4, rng2);
    CHECK(ps.at("adaptor.same_dim/in.w").value ==
          ps.at("adaptor.source/in.w").value);
    CHECK(ps.at("adaptor.same_dim/out.b").value ==
          ps.at("adaptor.source/out.b").value);

    std::mt19937_64 rng3(14);
    add_adaptor_params_from(ps, "other_dim", "source", 5, 4, rng3);
    CHECK(ps.at("adaptor.other_dim/in.w").value.cols() == 5);
    CHECK(ps.at("adaptor.other_dim/in.w").value !=
          ps.at("adaptor.source/in.w").value.leftCols(5));
}

TEST_CASE("set_trainable scopes freeze exactly the right groups") {
    CoreConfig cfg{4, 3, 2, 5};
    ModelBundle bundle = make_bundle(cfg, DomainInfo{"source", 6,
                                     Normalizer::identity(6)}, 15);
    std::mt19937_64 rng(16);
    add_adaptor_params_from(bundle.params, "target", "source", 5, 4, rng);
    bundle.domains["target"] = DomainEntry{5, Normalizer::identity(5)};

    set_trainable(bundle, TrainScope::all());
    CHECK(bundle.params.group_trainable("core"));
    CHECK(bundle.params.group_trainable("adaptor.source"));
    CHECK(bundle.params.group_trainable("adaptor.target"));

    set_trainable(bundle, TrainScope::adaptors_of("target"));
    CHECK_FALSE(bundle.params.group_trainable("core"));
    CHECK_FALSE(bundle.params.group_trainable("adaptor.source"));
    CHECK(bundle.params.group_trainable("adaptor.target"));

    set_trainable(bundle, TrainScope::core_only());
    CHECK(bundle.params.group_trainable("core"));
    CHECK_FALSE(bundle.params.group_trainable("adaptor.target"));

    CHECK_THROWS_AS(set_trainable(bundle, TrainScope::adaptors_of("nope")),
                    DataError);
}

TEST_CASE("frozen core is bit-identical after optimizer steps") {
    CoreConfig cfg{3, 4, 2, 4};
    ModelBundle bundle = make_bundle(cfg, DomainInfo{"source", 5,
                                     Normalizer::identity(5)}, 17);
    std::mt19937_64 rng(18);
    add_adaptor_params_from(bundle.params, "target", "source", 4, 3, rng);
    bundle.domains["target"] = DomainEntry{4, Normalizer::identity(4)};
    set_trainable(bundle, TrainScope::adaptors_of("target"));

    const auto core_before = serialize_group_bytes(bundle.params, "core");
    const auto source_before =
        serialize_group_bytes(bundle.params, "adaptor.source");

    AdamOptimizer opt;
    for (int i = 0; i < 5; ++i) {
        for (const auto& name : bundle.params.names())
            bundle.params.at(name).grad.setConstant(0.3);
        opt.step(bundle.params);
    }
    CHECK(serialize_group_bytes(bundle.params, "core") == core_before);
    CHECK(serialize_group_bytes(bundle.params, "adaptor.source") ==
          source_before);
    const auto target_after =
        serialize_group_bytes(bundle.params, "adaptor.target");
    bool changed = false;
    for (const auto& name : bundle.params.names())
        if (ParameterStore::group_of(name) == "adaptor.target" &&
            !bundle.params.at(name).value.isZero())
            changed = true;
    CHECK(changed);
    (void)target_after;
}

}  // TEST_SUITE
