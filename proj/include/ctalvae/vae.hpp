#pragma once

#include "ctalvae/net.hpp"

#include <vector>

namespace ctalvae {

/// Shared-core dimensions. core_dim is the per-step width both LSTMs see;
/// adaptors bridge each domain's feature count to it.
struct CoreConfig {
    int core_dim = 43;
    int hidden = 64;
    int latent = 16;
    int seq_len = 30;

    void validate() const;
};

/// Diagonal Gaussian posterior parameters for one sequence.
struct LatentParams {
    Vec mu;
    Vec log_var;
};

/// Creates every core array under group "core":
///   enc.{wx,wh,b}        encoder LSTM
///   mu.{w,b} logvar.{w,b}   posterior heads off the last hidden state
///   dec_init.{w,b}       latent -> decoder initial (h, c), stacked 2H
///   dec.{wx,wh,b}        decoder LSTM
///   dec_out.{w,b}        hidden -> emitted step
///   dec_start            learned first decoder input (zeros)
void add_core_params(ParameterStore& ps, const CoreConfig& cfg,
                     std::mt19937_64& rng);

struct EncodeCache {
    Mat inputs;  // seq_len x core_dim, masked rows zero
    int valid_len = 0;
    std::vector<LstmStepCache> steps;
    Vec h_last;
    LatentParams lp;
};

/// Runs the encoder LSTM over the real rows only; the hidden state at the
/// last mask=true step feeds the mu / log-variance heads, so padding can
/// never leak into the posterior.
LatentParams encode(const ParameterStore& ps, const Mat& seq_core,
                    const std::vector<std::uint8_t>& mask,
                    EncodeCache* cache = nullptr);

/// Accumulates parameter gradients; returns the gradient on the adapted
/// inputs (seq_len x core_dim, zero on masked rows).
Mat encode_backward(ParameterStore& ps, const EncodeCache& cache,
                    const Vec& dmu, const Vec& dlogvar);

/// z = mu + exp(log_var / 2) * eps. Gradients flow through mu and log_var
/// only; eps is treated as a constant.
Vec sample_latent(const LatentParams& lp, const Vec& eps);

struct DecodeCache {
    Vec z;
    Vec init_pre;  // 2H affine output split into (h0, c0)
    std::vector<LstmStepCache> steps;
    std::vector<Vec> hidden;  // per-step hidden state
    Mat emissions;            // seq_len x core_dim
};

/// Maps z to the decoder's initial (h, c), then emits seq_len steps. Each
/// step consumes the previous emission (the learned start vector at t=1),
/// so the decoder is autonomous in training and inference alike.
Mat decode(const ParameterStore& ps, const Vec& z, int seq_len,
           DecodeCache* cache = nullptr);

/// `demissions` holds upstream gradients on each emitted row. Feedback
/// gradients (step t's input is step t-1's emission) are handled here.
/// Returns dz.
Vec decode_backward(ParameterStore& ps, const DecodeCache& cache,
                    const Mat& demissions);

struct ReconstructResult {
    Mat recon;  // seq_len x core_dim
    LatentParams lp;
};

/// encode -> sample_latent -> decode on one core-space sequence.
ReconstructResult reconstruct(const ParameterStore& ps, const Mat& seq_core,
                              const std::vector<std::uint8_t>& mask,
                              const Vec& eps);

}  // namespace ctalvae
