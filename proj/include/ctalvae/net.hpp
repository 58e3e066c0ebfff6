#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctalvae {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Raised for malformed inputs, schema mismatches and failed validation.
/// The CLI maps it to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stable seed derivation so independent random streams (init, shuffle,
/// sampling, triplets) never alias each other. FNV-1a over the inputs;
/// identical across runs and platforms.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                          std::uint64_t index = 0);

struct Param {
    Mat value;
    Mat grad;  // same shape as value
};

/// Named parameter arrays with per-array gradients. Arrays belong to the
/// group named by the prefix before the first '/', e.g. "core/enc.wx" is
/// in group "core". Trainability is controlled per group; the optimizer
/// skips frozen groups entirely.
class ParameterStore {
public:
    Param& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    static std::string group_of(const std::string& name);

    void set_group_trainable(const std::string& group, bool trainable);
    bool group_trainable(const std::string& group) const;
    bool param_trainable(const std::string& name) const;

    /// Parameter names in lexicographic order.
    std::vector<std::string> names() const;
    std::vector<std::string> groups() const;

    void zero_grads();

    std::map<std::string, Param>& entries() { return params_; }
    const std::map<std::string, Param>& entries() const { return params_; }

private:
    std::map<std::string, Param> params_;
    std::map<std::string, bool> group_trainable_;
};

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void init_uniform(Param& p, int fan_in, std::mt19937_64& rng);

// ---- affine layer -------------------------------------------------------

Vec affine_apply(const Mat& w, const Vec& b, const Vec& x);

/// Accumulates dW += dy x^T, db += dy; returns dx = W^T dy.
Vec affine_backward(Param& w, Param& b, const Vec& x, const Vec& dy);

// ---- LSTM cell ----------------------------------------------------------

struct LstmState {
    Vec h;
    Vec c;
    static LstmState zero(int hidden);
};

/// Resolved view over one cell's arrays inside a store. Gate rows of the
/// stacked 4H pre-activation are packed [input, forget, candidate, output].
struct LstmCellView {
    const Param* wx;  // 4H x input
    const Param* wh;  // 4H x H
    const Param* b;   // 4H x 1
    int input_size;
    int hidden_size;
};

LstmCellView lstm_view(const ParameterStore& ps, const std::string& prefix);

/// Creates "<prefix>.wx", "<prefix>.wh", "<prefix>.b" and initializes them.
void add_lstm_params(ParameterStore& ps, const std::string& prefix, int input,
                     int hidden, std::mt19937_64& rng);

/// Everything the exact backward pass needs from one forward step.
struct LstmStepCache {
    Vec x, h_prev, c_prev;
    Vec gi, gf, gg, go;  // post-activation gates
    Vec c, tanh_c;
};

LstmState lstm_step(const LstmCellView& cell, const LstmState& prev,
                    const Vec& x, LstmStepCache* cache = nullptr);

struct LstmStepGrads {
    Vec dx, dh_prev, dc_prev;
};

/// dh/dc are the upstream gradients on this step's outputs. Accumulates
/// weight gradients into the store arrays backing `cell`.
LstmStepGrads lstm_step_backward(ParameterStore& ps, const std::string& prefix,
                                 const LstmStepCache& cache, const Vec& dh,
                                 const Vec& dc);

// ---- Adam ---------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Bias-corrected Adam update on trainable groups only; frozen groups
    /// are left bit-identical (values and moments). Zeroes all gradients
    /// afterwards.
    void step(ParameterStore& ps);

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        Mat m, v;
    };
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Moments> moments_;
};

// ---- finite-difference gradient checking --------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    Eigen::Index worst_index = 0;
};

/// fn(store, with_grad): evaluates the scalar objective; when with_grad is
/// true it must also accumulate exact gradients into the store (grads are
/// zeroed before the call). Probes `probes` random trainable coordinates
/// with central differences of step `h` and reports the worst relative
/// error |analytic - numeric| / max(|numeric|, 1e-6).
GradCheckReport grad_check(
    const std::function<double(ParameterStore&, bool)>& fn, ParameterStore& ps,
    int probes, double h, std::uint64_t seed);

}  // namespace ctalvae
