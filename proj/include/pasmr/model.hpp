#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pasmr/rng.hpp"
#include "pasmr/vocab.hpp"

namespace pasmr {

struct ModelDims {
    std::int32_t vocab = 0;
    std::int32_t embed = 32;
    std::int32_t hidden = 64;
    std::int32_t max_pos = 192;  // longest context the attention read supports

    bool operator==(const ModelDims&) const = default;
};

// All trainable tensors of the policy: token embeddings, one recurrent layer
// fed by a single-head attention read over the context, and the output
// projection. The same shape doubles as the gradient and the Adam moment
// buffers. Tensor order here is the checkpoint order.
struct ParamTensors {
    ModelDims dims;
    std::vector<double> emb;                       // vocab x embed
    std::vector<double> w_qh;                      // embed x hidden (query from h_{t-1})
    std::vector<double> w_qx;                      // embed x embed  (query from x_t)
    std::vector<double> b_q;                       // embed
    std::vector<double> w_k;                       // embed x embed  (keys)
    std::vector<double> b_k;                       // embed
    std::vector<double> p_pos;                     // max_pos x embed (key position terms)
    std::vector<double> w_ir, w_iz, w_in;          // hidden x 2*embed ([x_t ; attended])
    std::vector<double> w_hr, w_hz, w_hn;          // hidden x hidden
    std::vector<double> b_ir, b_iz, b_in;          // hidden
    std::vector<double> b_hr, b_hz, b_hn;          // hidden
    std::vector<double> w_out;                     // vocab x hidden
    std::vector<double> b_out;                     // vocab

    static ParamTensors zeros(ModelDims dims);
    void set_zero();
    bool all_finite() const;
    std::size_t total_size() const;

    struct TensorRef {
        const char* name;
        std::vector<double>* data;
    };
    std::array<TensorRef, 21> tensors();
    std::array<TensorRef, 21> tensors() const;  // points at const data; do not write
};

using PolicyParams = ParamTensors;

/// Uniform init in [-range, range] for every tensor, seeded.
PolicyParams init_params(ModelDims dims, std::uint64_t seed, double range = 0.08);

enum class SnapshotRole : std::uint8_t { Live = 0, Reference = 1, Old = 2 };

/// Frozen copy of the policy. Keep it const after creation.
struct PolicySnapshot {
    SnapshotRole role;
    PolicyParams params;
};

PolicySnapshot snapshot(const PolicyParams& params, SnapshotRole role);

// ---------------------------------------------------------------------------
// Forward / backward

/// Per-step activations cached for backprop.
struct ForwardCache {
    int steps = 0;
    std::vector<Token> tokens;
    std::vector<double> h, r, z, n, hh;  // each steps x hidden
    std::vector<double> q, k, c;         // each steps x embed
    std::vector<double> alpha;           // steps x steps attention weights (lower triangle)
};

/// Runs the layer over `tokens`; h[t] is the state after consuming tokens[t].
void forward_hidden(const PolicyParams& p, std::span<const Token> tokens, ForwardCache& cache);

/// Scores for the next token at every position of `context`
/// (row t predicts the token following context[t]). Row-major, vocab wide.
std::vector<double> logits(const PolicyParams& p, std::span<const Token> context);

/// log softmax(logits)[target] for one row, numerically stable.
double log_prob_of(std::span<const double> logit_row, Token target);

/// Incremental decoding state: hidden state plus the attention caches for
/// every consumed position.
struct GruState {
    std::vector<double> h;
    std::vector<double> keys;        // positions x embed
    std::vector<double> values;      // positions x embed (token embeddings)
    int positions = 0;
};
GruState initial_state(const PolicyParams& p);
void gru_step(const PolicyParams& p, GruState& state, Token token);
void logits_from_state(const PolicyParams& p, const GruState& state, std::vector<double>& out);

struct SampleResult {
    std::vector<Token> tokens;     // generated tokens, <eos> included when emitted
    std::vector<double> logprob;   // per generated token, under the model (temperature 1)
};

/// Ancestral sampling from the policy. temperature == 0 is greedy argmax
/// (ties break toward the lowest token id).
SampleResult sample_traced(const PolicyParams& p, std::span<const Token> prompt, int max_len,
                           double temperature, Rng& rng);
std::vector<Token> sample(const PolicyParams& p, std::span<const Token> prompt, int max_len,
                          double temperature, Rng& rng);

/// Per-token log-probabilities of `target` given `prompt` (teacher forced).
std::vector<double> sequence_logprob(const PolicyParams& p, std::span<const Token> prompt,
                                     std::span<const Token> target);

/// Weighted next-token NLL: loss = sum_t weights[t] * -log P(labels[t] | inputs[..t]).
/// Positions with weight 0 contribute nothing and their labels are never read.
double weighted_nll(const PolicyParams& p, std::span<const Token> inputs,
                    std::span<const Token> labels, std::span<const double> weights);

/// Same loss, plus exact analytic gradients accumulated into `grads`.
/// Throws on a non-finite loss.
double weighted_nll_backward(const PolicyParams& p, std::span<const Token> inputs,
                             std::span<const Token> labels, std::span<const double> weights,
                             ParamTensors& grads);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
    ParamTensors m, v;
    std::int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam(ModelDims dims, double lr, double beta1 = 0.9, double beta2 = 0.999,
                    double eps = 1e-8);
void adam_step(PolicyParams& params, const ParamTensors& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Checkpoints (little-endian binary, header + flat tensors in declared order)

inline constexpr std::uint32_t checkpoint_version = 1;

struct CheckpointMeta {
    std::uint32_t version = checkpoint_version;
    ModelDims dims;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    SnapshotRole role = SnapshotRole::Reference;
};

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const CheckpointMeta& meta);
PolicyParams load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr);

}  // namespace pasmr
