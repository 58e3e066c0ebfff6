#include "ctalvae/adaptors.hpp"

#include "ctalvae/bundle.hpp"

namespace ctalvae {

std::string adaptor_group(const std::string& domain) {
    return "adaptor." + domain;
}

void add_adaptor_params(ParameterStore& ps, const std::string& domain,
                        int domain_dim, int core_dim, std::mt19937_64& rng) {
    if (domain.empty()) throw DataError("domain name must be non-empty");
    const std::string g = adaptor_group(domain);
    init_uniform(ps.create(g + "/in.w", core_dim, domain_dim), domain_dim, rng);
    init_uniform(ps.create(g + "/in.b", core_dim, 1), domain_dim, rng);
    init_uniform(ps.create(g + "/out.w", domain_dim, core_dim), core_dim, rng);
    init_uniform(ps.create(g + "/out.b", domain_dim, 1), core_dim, rng);
}

void add_adaptor_params_from(ParameterStore& ps, const std::string& domain,
                             const std::string& from_domain, int domain_dim,
                             int core_dim, std::mt19937_64& rng) {
    const std::string from = adaptor_group(from_domain);
    if (ps.has(from + "/in.w") &&
        ps.at(from + "/in.w").value.cols() == domain_dim &&
        ps.at(from + "/in.w").value.rows() == core_dim) {
        const std::string g = adaptor_group(domain);
        for (const char* leaf : {"in.w", "in.b", "out.w", "out.b"}) {
            const Param& src = ps.at(from + "/" + leaf);
            Param& dst =
                ps.create(g + "/" + leaf, src.value.rows(), src.value.cols());
            dst.value = src.value;
        }
        return;
    }
    add_adaptor_params(ps, domain, domain_dim, core_dim, rng);
}

Vec adapt_in(const ParameterStore& ps, const std::string& domain,
             const Vec& x) {
    const std::string g = adaptor_group(domain);
    return affine_apply(ps.at(g + "/in.w").value,
                        ps.at(g + "/in.b").value.col(0), x);
}

Vec adapt_out(const ParameterStore& ps, const std::string& domain,
              const Vec& y) {
    const std::string g = adaptor_group(domain);
    return affine_apply(ps.at(g + "/out.w").value,
                        ps.at(g + "/out.b").value.col(0), y);
}

Mat adapt_in_seq(const ParameterStore& ps, const std::string& domain,
                 const Mat& seq, const std::vector<std::uint8_t>& mask) {
    const std::string g = adaptor_group(domain);
    const Mat& w = ps.at(g + "/in.w").value;
    const Vec b = ps.at(g + "/in.b").value.col(0);
    Mat out = Mat::Zero(seq.rows(), w.rows());
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
        if (!mask[t]) continue;
        out.row(t) = affine_apply(w, b, seq.row(t).transpose()).transpose();
    }
    return out;
}

Mat adapt_out_seq(const ParameterStore& ps, const std::string& domain,
                  const Mat& emissions) {
    const std::string g = adaptor_group(domain);
    const Mat& w = ps.at(g + "/out.w").value;
    const Vec b = ps.at(g + "/out.b").value.col(0);
    Mat out(emissions.rows(), w.rows());
    for (Eigen::Index t = 0; t < emissions.rows(); ++t)
        out.row(t) = affine_apply(w, b, emissions.row(t).transpose()).transpose();
    return out;
}

Mat adapt_in_seq_backward(ParameterStore& ps, const std::string& domain,
                          const Mat& seq, const std::vector<std::uint8_t>& mask,
                          const Mat& dadapted) {
    const std::string g = adaptor_group(domain);
    Param& w = ps.at(g + "/in.w");
    Param& b = ps.at(g + "/in.b");
    Mat dx = Mat::Zero(seq.rows(), seq.cols());
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
        if (!mask[t]) continue;
        dx.row(t) = affine_backward(w, b, seq.row(t).transpose(),
                                    dadapted.row(t).transpose())
                        .transpose();
    }
    return dx;
}

Mat adapt_out_seq_backward(ParameterStore& ps, const std::string& domain,
                           const Mat& emissions, const Mat& dout) {
    const std::string g = adaptor_group(domain);
    Param& w = ps.at(g + "/out.w");
    Param& b = ps.at(g + "/out.b");
    Mat dy = Mat::Zero(emissions.rows(), emissions.cols());
    for (Eigen::Index t = 0; t < emissions.rows(); ++t) {
        dy.row(t) = affine_backward(w, b, emissions.row(t).transpose(),
                                    dout.row(t).transpose())
                        .transpose();
    }
    return dy;
}

void set_trainable(ModelBundle& bundle, const TrainScope& scope) {
    ParameterStore& ps = bundle.params;
    if (scope.kind == TrainScope::Kind::adaptors_of &&
        bundle.domains.count(scope.domain) == 0) {
        throw DataError("unknown domain in train scope: " + scope.domain);
    }
    for (const auto& g : ps.groups()) {
        bool on = false;
        switch (scope.kind) {
            case TrainScope::Kind::core_only:
                on = (g == "core");
                break;
            case TrainScope::Kind::adaptors_of:
                on = (g == adaptor_group(scope.domain));
                break;
            case TrainScope::Kind::all:
                on = true;
                break;
        }
        ps.set_group_trainable(g, on);
    }
}

}  // namespace ctalvae
