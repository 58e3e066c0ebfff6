#include "ctalvae/vae.hpp"

#include <cmath>

namespace ctalvae {

void CoreConfig::validate() const {
    if (core_dim < 1 || hidden < 1 || latent < 1 || seq_len < 1)
        throw DataError("core config dimensions must all be positive");
}

void add_core_params(ParameterStore& ps, const CoreConfig& cfg,
                     std::mt19937_64& rng) {
    cfg.validate();
    const int C = cfg.core_dim;
    const int H = cfg.hidden;
    const int d = cfg.latent;
    add_lstm_params(ps, "core/enc", C, H, rng);
    init_uniform(ps.create("core/mu.w", d, H), H, rng);
    init_uniform(ps.create("core/mu.b", d, 1), H, rng);
    init_uniform(ps.create("core/logvar.w", d, H), H, rng);
    init_uniform(ps.create("core/logvar.b", d, 1), H, rng);
    init_uniform(ps.create("core/dec_init.w", 2 * H, d), d, rng);
    init_uniform(ps.create("core/dec_init.b", 2 * H, 1), d, rng);
    add_lstm_params(ps, "core/dec", C, H, rng);
    init_uniform(ps.create("core/dec_out.w", C, H), H, rng);
    init_uniform(ps.create("core/dec_out.b", C, 1), H, rng);
    ps.create("core/dec_start", C, 1);  // zeros
}

LatentParams encode(const ParameterStore& ps, const Mat& seq_core,
                    const std::vector<std::uint8_t>& mask,
                    EncodeCache* cache) {
    const LstmCellView enc = lstm_view(ps, "core/enc");
    if (seq_core.cols() != enc.input_size)
        throw DataError("encode: sequence width " +
                        std::to_string(seq_core.cols()) + " != core_dim " +
                        std::to_string(enc.input_size));
    if (static_cast<Eigen::Index>(mask.size()) != seq_core.rows())
        throw DataError("encode: mask length does not match sequence rows");

    int valid = 0;
    while (valid < static_cast<int>(mask.size()) && mask[valid]) ++valid;
    if (valid == 0) throw DataError("encode: all-false mask");

    LstmState state = LstmState::zero(enc.hidden_size);
    if (cache) {
        cache->steps.clear();
        cache->steps.resize(valid);
        cache->inputs = seq_core;
        cache->valid_len = valid;
    }
    for (int t = 0; t < valid; ++t) {
        const Vec x = seq_core.row(t).transpose();
        state = lstm_step(enc, state, x, cache ? &cache->steps[t] : nullptr);
    }

    LatentParams lp;
    lp.mu = affine_apply(ps.at("core/mu.w").value, ps.at("core/mu.b").value.col(0),
                         state.h);
    lp.log_var = affine_apply(ps.at("core/logvar.w").value,
                              ps.at("core/logvar.b").value.col(0), state.h);
    if (cache) {
        cache->h_last = state.h;
        cache->lp = lp;
    }
    return lp;
}

Mat encode_backward(ParameterStore& ps, const EncodeCache& cache,
                    const Vec& dmu, const Vec& dlogvar) {
    Vec dh = affine_backward(ps.at("core/mu.w"), ps.at("core/mu.b"),
                             cache.h_last, dmu);
    dh += affine_backward(ps.at("core/logvar.w"), ps.at("core/logvar.b"),
                          cache.h_last, dlogvar);

    Mat dinputs = Mat::Zero(cache.inputs.rows(), cache.inputs.cols());
    Vec dc = Vec::Zero(dh.size());
    for (int t = cache.valid_len - 1; t >= 0; --t) {
        LstmStepGrads g =
            lstm_step_backward(ps, "core/enc", cache.steps[t], dh, dc);
        dinputs.row(t) = g.dx.transpose();
        dh = std::move(g.dh_prev);
        dc = std::move(g.dc_prev);
    }
    return dinputs;
}

Vec sample_latent(const LatentParams& lp, const Vec& eps) {
    if (eps.size() != lp.mu.size())
        throw DataError("sample_latent: eps length does not match latent dim");
    return lp.mu.array() + (lp.log_var.array() / 2.0).exp() * eps.array();
}

Mat decode(const ParameterStore& ps, const Vec& z, int seq_len,
           DecodeCache* cache) {
    const LstmCellView dec = lstm_view(ps, "core/dec");
    const int H = dec.hidden_size;
    const int C = dec.input_size;

    Vec init = affine_apply(ps.at("core/dec_init.w").value,
                            ps.at("core/dec_init.b").value.col(0), z);
    LstmState state{init.segment(0, H), init.segment(H, H)};

    if (cache) {
        cache->z = z;
        cache->init_pre = init;
        cache->steps.clear();
        cache->steps.resize(seq_len);
        cache->hidden.clear();
        cache->hidden.resize(seq_len);
        cache->emissions = Mat::Zero(seq_len, C);
    }

    Mat emissions(seq_len, C);
    Vec prev = ps.at("core/dec_start").value.col(0);
    const Mat& wout = ps.at("core/dec_out.w").value;
    const Vec bout = ps.at("core/dec_out.b").value.col(0);
    for (int t = 0; t < seq_len; ++t) {
        state = lstm_step(dec, state, prev, cache ? &cache->steps[t] : nullptr);
        Vec y = affine_apply(wout, bout, state.h);
        emissions.row(t) = y.transpose();
        if (cache) {
            cache->hidden[t] = state.h;
            cache->emissions.row(t) = y.transpose();
        }
        prev = std::move(y);
    }
    return emissions;
}

Vec decode_backward(ParameterStore& ps, const DecodeCache& cache,
                    const Mat& demissions) {
    const int seq_len = static_cast<int>(cache.steps.size());
    const int H = static_cast<int>(cache.hidden.front().size());

    Param& wout = ps.at("core/dec_out.w");
    Param& bout = ps.at("core/dec_out.b");

    Vec dh_next = Vec::Zero(H);
    Vec dc_next = Vec::Zero(H);
    Vec dfeedback = Vec::Zero(demissions.cols());  // d wrt emission t-1 via input t
    Vec dstart;
    for (int t = seq_len - 1; t >= 0; --t) {
        const Vec dy = demissions.row(t).transpose() + dfeedback;
        Vec dh = affine_backward(wout, bout, cache.hidden[t], dy);
        dh += dh_next;
        LstmStepGrads g =
            lstm_step_backward(ps, "core/dec", cache.steps[t], dh, dc_next);
        dh_next = std::move(g.dh_prev);
        dc_next = std::move(g.dc_prev);
        if (t == 0) {
            dstart = std::move(g.dx);
        } else {
            dfeedback = std::move(g.dx);
        }
    }
    ps.at("core/dec_start").grad.col(0) += dstart;

    Vec dinit(2 * H);
    dinit.segment(0, H) = dh_next;
    dinit.segment(H, H) = dc_next;
    return affine_backward(ps.at("core/dec_init.w"), ps.at("core/dec_init.b"),
                           cache.z, dinit);
}

ReconstructResult reconstruct(const ParameterStore& ps, const Mat& seq_core,
                              const std::vector<std::uint8_t>& mask,
                              const Vec& eps) {
    ReconstructResult out;
    out.lp = encode(ps, seq_core, mask);
    const Vec z = sample_latent(out.lp, eps);
    out.recon = decode(ps, z, static_cast<int>(seq_core.rows()));
    return out;
}

}  // namespace ctalvae
