#include "ctalvae/net.hpp"

#include <cmath>

namespace ctalvae {

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                          std::uint64_t index) {
    std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffull;
            h *= 1099511628211ull;  // FNV prime
        }
    };
    mix(root);
    mix(stream);
    mix(index);
    return h;
}

Param& ParameterStore::create(const std::string& name, Eigen::Index rows,
                              Eigen::Index cols) {
    if (params_.count(name) != 0) {
        throw DataError("parameter already exists: " + name);
    }
    Param p;
    p.value = Mat::Zero(rows, cols);
    p.grad = Mat::Zero(rows, cols);
    auto [it, ok] = params_.emplace(name, std::move(p));
    (void)ok;
    group_trainable_.emplace(group_of(name), true);
    return it->second;
}

Param& ParameterStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
}

const Param& ParameterStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
}

std::string ParameterStore::group_of(const std::string& name) {
    auto pos = name.find('/');
    return pos == std::string::npos ? name : name.substr(0, pos);
}

void ParameterStore::set_group_trainable(const std::string& group,
                                         bool trainable) {
    auto it = group_trainable_.find(group);
    if (it == group_trainable_.end())
        throw DataError("unknown parameter group: " + group);
    it->second = trainable;
}

bool ParameterStore::group_trainable(const std::string& group) const {
    auto it = group_trainable_.find(group);
    if (it == group_trainable_.end())
        throw DataError("unknown parameter group: " + group);
    return it->second;
}

bool ParameterStore::param_trainable(const std::string& name) const {
    return group_trainable(group_of(name));
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
}

std::vector<std::string> ParameterStore::groups() const {
    std::vector<std::string> out;
    out.reserve(group_trainable_.size());
    for (const auto& [g, t] : group_trainable_) out.push_back(g);
    return out;
}

void ParameterStore::zero_grads() {
    for (auto& [name, p] : params_) p.grad.setZero();
}

void init_uniform(Param& p, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index c = 0; c < p.value.cols(); ++c)
        for (Eigen::Index r = 0; r < p.value.rows(); ++r)
            p.value(r, c) = dist(rng);
}

Vec affine_apply(const Mat& w, const Vec& b, const Vec& x) {
    if (w.cols() != x.size() || w.rows() != b.size()) {
        throw DataError("affine dimension mismatch: W is " +
                        std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                        ", b " + std::to_string(b.size()) + ", x " +
                        std::to_string(x.size()));
    }
    Vec y = b;
    y.noalias() += w * x;
    return y;
}

Vec affine_backward(Param& w, Param& b, const Vec& x, const Vec& dy) {
    w.grad.noalias() += dy * x.transpose();
    b.grad.col(0).noalias() += dy;
    Vec dx = Vec::Zero(x.size());
    dx.noalias() += w.value.transpose() * dy;
    return dx;
}

LstmState LstmState::zero(int hidden) {
    return LstmState{Vec::Zero(hidden), Vec::Zero(hidden)};
}

LstmCellView lstm_view(const ParameterStore& ps, const std::string& prefix) {
    LstmCellView v;
    v.wx = &ps.at(prefix + ".wx");
    v.wh = &ps.at(prefix + ".wh");
    v.b = &ps.at(prefix + ".b");
    v.input_size = static_cast<int>(v.wx->value.cols());
    v.hidden_size = static_cast<int>(v.wh->value.cols());
    return v;
}

void add_lstm_params(ParameterStore& ps, const std::string& prefix, int input,
                     int hidden, std::mt19937_64& rng) {
    init_uniform(ps.create(prefix + ".wx", 4 * hidden, input), input, rng);
    init_uniform(ps.create(prefix + ".wh", 4 * hidden, hidden), hidden, rng);
    init_uniform(ps.create(prefix + ".b", 4 * hidden, 1), hidden, rng);
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

LstmState lstm_step(const LstmCellView& cell, const LstmState& prev,
                    const Vec& x, LstmStepCache* cache) {
    const int H = cell.hidden_size;
    if (x.size() != cell.input_size || prev.h.size() != H || prev.c.size() != H) {
        throw DataError("lstm_step dimension mismatch: input " +
                        std::to_string(x.size()) + " expected " +
                        std::to_string(cell.input_size));
    }
    Vec pre = cell.b->value.col(0);
    pre.noalias() += cell.wx->value * x;
    pre.noalias() += cell.wh->value * prev.h;

    Vec gi(H), gf(H), gg(H), go(H);
    for (int j = 0; j < H; ++j) {
        gi(j) = sigmoid(pre(j));
        gf(j) = sigmoid(pre(H + j));
        gg(j) = std::tanh(pre(2 * H + j));
        go(j) = sigmoid(pre(3 * H + j));
    }

    LstmState next;
    next.c = gf.cwiseProduct(prev.c) + gi.cwiseProduct(gg);
    Vec tanh_c = next.c.array().tanh();
    next.h = go.cwiseProduct(tanh_c);

    if (cache) {
        cache->x = x;
        cache->h_prev = prev.h;
        cache->c_prev = prev.c;
        cache->gi = std::move(gi);
        cache->gf = std::move(gf);
        cache->gg = std::move(gg);
        cache->go = std::move(go);
        cache->c = next.c;
        cache->tanh_c = std::move(tanh_c);
    }
    return next;
}

LstmStepGrads lstm_step_backward(ParameterStore& ps, const std::string& prefix,
                                 const LstmStepCache& cache, const Vec& dh,
                                 const Vec& dc_in) {
    const int H = static_cast<int>(cache.gi.size());

    // h = o * tanh(c); c = f * c_prev + i * g
    Vec d_go = dh.cwiseProduct(cache.tanh_c);
    Vec dc = dc_in;
    dc.array() +=
        dh.array() * cache.go.array() * (1.0 - cache.tanh_c.array().square());

    Vec d_gi = dc.cwiseProduct(cache.gg);
    Vec d_gg = dc.cwiseProduct(cache.gi);
    Vec d_gf = dc.cwiseProduct(cache.c_prev);
    Vec dc_prev = dc.cwiseProduct(cache.gf);

    Vec dpre(4 * H);
    dpre.segment(0, H) =
        d_gi.array() * cache.gi.array() * (1.0 - cache.gi.array());
    dpre.segment(H, H) =
        d_gf.array() * cache.gf.array() * (1.0 - cache.gf.array());
    dpre.segment(2 * H, H) = d_gg.array() * (1.0 - cache.gg.array().square());
    dpre.segment(3 * H, H) =
        d_go.array() * cache.go.array() * (1.0 - cache.go.array());

    Param& wx = ps.at(prefix + ".wx");
    Param& wh = ps.at(prefix + ".wh");
    Param& b = ps.at(prefix + ".b");
    wx.grad.noalias() += dpre * cache.x.transpose();
    wh.grad.noalias() += dpre * cache.h_prev.transpose();
    b.grad.col(0).noalias() += dpre;

    LstmStepGrads g;
    g.dx = Vec::Zero(cache.x.size());
    g.dx.noalias() += wx.value.transpose() * dpre;
    g.dh_prev = Vec::Zero(H);
    g.dh_prev.noalias() += wh.value.transpose() * dpre;
    g.dc_prev = std::move(dc_prev);
    return g;
}

void AdamOptimizer::step(ParameterStore& ps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : ps.entries()) {
        if (!ps.param_trainable(name)) continue;
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            Moments m;
            m.m = Mat::Zero(p.value.rows(), p.value.cols());
            m.v = Mat::Zero(p.value.rows(), p.value.cols());
            it = moments_.emplace(name, std::move(m)).first;
        }
        Moments& mo = it->second;
        if (mo.m.rows() != p.value.rows() || mo.m.cols() != p.value.cols())
            throw DataError("optimizer moment shape mismatch for " + name);
        mo.m = cfg_.beta1 * mo.m + (1.0 - cfg_.beta1) * p.grad;
        mo.v = cfg_.beta2 * mo.v +
               (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
        const Mat m_hat = mo.m / bc1;
        const Mat v_hat = mo.v / bc2;
        p.value.array() -=
            cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.epsilon);
    }
    ps.zero_grads();
}

GradCheckReport grad_check(
    const std::function<double(ParameterStore&, bool)>& fn, ParameterStore& ps,
    int probes, double h, std::uint64_t seed) {
    ps.zero_grads();
    const double f0 = fn(ps, true);
    if (!std::isfinite(f0)) throw DataError("grad_check: non-finite objective");

    struct Coord {
        std::string name;
        Eigen::Index idx;
    };
    std::vector<std::string> trainable;
    Eigen::Index total = 0;
    for (const auto& name : ps.names()) {
        if (!ps.param_trainable(name)) continue;
        trainable.push_back(name);
        total += ps.at(name).value.size();
    }
    if (total == 0) throw DataError("grad_check: no trainable coordinates");

    // Snapshot analytic gradients before FD evaluations overwrite state.
    std::map<std::string, Mat> analytic;
    for (const auto& name : trainable) analytic[name] = ps.at(name).grad;

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);

    GradCheckReport report;
    for (int p = 0; p < probes; ++p) {
        Eigen::Index flat = pick(rng);
        std::string name;
        for (const auto& n : trainable) {
            const Eigen::Index sz = ps.at(n).value.size();
            if (flat < sz) {
                name = n;
                break;
            }
            flat -= sz;
        }
        double* slot = ps.at(name).value.data() + flat;
        const double saved = *slot;
        *slot = saved + h;
        const double fp = fn(ps, false);
        *slot = saved - h;
        const double fm = fn(ps, false);
        *slot = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw DataError("grad_check: non-finite objective at probe");
        const double numeric = (fp - fm) / (2.0 * h);
        const double exact = analytic.at(name)(flat);
        const double rel =
            std::abs(exact - numeric) / std::max(std::abs(numeric), 1e-6);
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_param = name;
            report.worst_index = flat;
        }
    }
    return report;
}

}  // namespace ctalvae
