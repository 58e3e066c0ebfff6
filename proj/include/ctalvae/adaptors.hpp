#pragma once

#include "ctalvae/net.hpp"

#include <string>
#include <vector>

namespace ctalvae {

struct ModelBundle;

/// One domain's affine bridge to the shared core: in_map takes
/// domain_dim -> core_dim feature rows, out_map takes reconstructed
/// core_dim rows back to the domain. Arrays live under group
/// "adaptor.<domain>" as in.{w,b} / out.{w,b}.
struct AdaptorPair {
    std::string domain;
    int domain_dim = 0;
    int core_dim = 0;
};

std::string adaptor_group(const std::string& domain);

void add_adaptor_params(ParameterStore& ps, const std::string& domain,
                        int domain_dim, int core_dim, std::mt19937_64& rng);

/// Warm start: copies the source pair's arrays when the dimensions match,
/// otherwise falls back to fresh seeded initialization.
void add_adaptor_params_from(ParameterStore& ps, const std::string& domain,
                             const std::string& from_domain, int domain_dim,
                             int core_dim, std::mt19937_64& rng);

Vec adapt_in(const ParameterStore& ps, const std::string& domain, const Vec& x);
Vec adapt_out(const ParameterStore& ps, const std::string& domain,
              const Vec& y);

/// Row-wise over a sequence; masked rows stay zero.
Mat adapt_in_seq(const ParameterStore& ps, const std::string& domain,
                 const Mat& seq, const std::vector<std::uint8_t>& mask);

/// Applied to every emitted row (the decoder emits all seq_len steps).
Mat adapt_out_seq(const ParameterStore& ps, const std::string& domain,
                  const Mat& emissions);

/// Returns the gradient on the domain-space rows (unused by callers that
/// stop at the adaptor, but cheap to produce).
Mat adapt_in_seq_backward(ParameterStore& ps, const std::string& domain,
                          const Mat& seq, const std::vector<std::uint8_t>& mask,
                          const Mat& dadapted);

/// Returns the gradient on the core-space emissions.
Mat adapt_out_seq_backward(ParameterStore& ps, const std::string& domain,
                           const Mat& emissions, const Mat& dout);

/// Freeze-control scope for a training phase.
struct TrainScope {
    enum class Kind { core_only, adaptors_of, all };
    Kind kind;
    std::string domain;  // adaptors_of only

    static TrainScope core_only() { return {Kind::core_only, ""}; }
    static TrainScope adaptors_of(std::string d) {
        return {Kind::adaptors_of, std::move(d)};
    }
    static TrainScope all() { return {Kind::all, ""}; }
};

/// Sets trainable flags exactly per scope; every other group is frozen.
void set_trainable(ModelBundle& bundle, const TrainScope& scope);

}  // namespace ctalvae
