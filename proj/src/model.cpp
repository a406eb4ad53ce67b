#include "pasmr/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "pasmr/io.hpp"
#include "pasmr/kernels.hpp"

namespace pasmr {

namespace {

std::size_t sz(std::int32_t a, std::int32_t b = 1) {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(b);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_tokens(const PolicyParams& p, std::span<const Token> seq, const char* where) {
    for (Token t : seq)
        if (t < 0 || t >= p.dims.vocab)
            throw std::invalid_argument(std::string(where) + ": token id out of range");
}

}  // namespace

ParamTensors ParamTensors::zeros(ModelDims d) {
    ParamTensors p;
    p.dims = d;
    p.emb.assign(sz(d.vocab, d.embed), 0.0);
    p.w_qh.assign(sz(d.embed, d.hidden), 0.0);
    p.w_qx.assign(sz(d.embed, d.embed), 0.0);
    p.b_q.assign(sz(d.embed), 0.0);
    p.w_k.assign(sz(d.embed, d.embed), 0.0);
    p.b_k.assign(sz(d.embed), 0.0);
    p.p_pos.assign(sz(d.max_pos, d.embed), 0.0);
    p.w_ir.assign(sz(d.hidden, 2 * d.embed), 0.0);
    p.w_iz.assign(sz(d.hidden, 2 * d.embed), 0.0);
    p.w_in.assign(sz(d.hidden, 2 * d.embed), 0.0);
    p.w_hr.assign(sz(d.hidden, d.hidden), 0.0);
    p.w_hz.assign(sz(d.hidden, d.hidden), 0.0);
    p.w_hn.assign(sz(d.hidden, d.hidden), 0.0);
    p.b_ir.assign(sz(d.hidden), 0.0);
    p.b_iz.assign(sz(d.hidden), 0.0);
    p.b_in.assign(sz(d.hidden), 0.0);
    p.b_hr.assign(sz(d.hidden), 0.0);
    p.b_hz.assign(sz(d.hidden), 0.0);
    p.b_hn.assign(sz(d.hidden), 0.0);
    p.w_out.assign(sz(d.vocab, d.hidden), 0.0);
    p.b_out.assign(sz(d.vocab), 0.0);
    return p;
}

void ParamTensors::set_zero() {
    for (auto ref : tensors()) std::fill(ref.data->begin(), ref.data->end(), 0.0);
}

bool ParamTensors::all_finite() const {
    for (auto ref : tensors())
        for (double v : *ref.data)
            if (!std::isfinite(v)) return false;
    return true;
}

std::size_t ParamTensors::total_size() const {
    std::size_t n = 0;
    for (auto ref : tensors()) n += ref.data->size();
    return n;
}

std::array<ParamTensors::TensorRef, 21> ParamTensors::tensors() {
    return {{{"emb", &emb},
             {"w_qh", &w_qh}, {"w_qx", &w_qx}, {"b_q", &b_q},
             {"w_k", &w_k}, {"b_k", &b_k}, {"p_pos", &p_pos},
             {"w_ir", &w_ir}, {"w_iz", &w_iz}, {"w_in", &w_in},
             {"w_hr", &w_hr}, {"w_hz", &w_hz}, {"w_hn", &w_hn},
             {"b_ir", &b_ir}, {"b_iz", &b_iz}, {"b_in", &b_in},
             {"b_hr", &b_hr}, {"b_hz", &b_hz}, {"b_hn", &b_hn},
             {"w_out", &w_out}, {"b_out", &b_out}}};
}

std::array<ParamTensors::TensorRef, 21> ParamTensors::tensors() const {
    return const_cast<ParamTensors*>(this)->tensors();
}

PolicyParams init_params(ModelDims dims, std::uint64_t seed, double range) {
    if (dims.vocab <= 0 || dims.embed <= 0 || dims.hidden <= 0 || dims.max_pos <= 0)
        throw std::invalid_argument("init_params: dims must be positive");
    PolicyParams p = ParamTensors::zeros(dims);
    Rng rng(derive_seed(seed, 0x1417));
    for (auto ref : p.tensors())
        for (double& v : *ref.data) v = rng.uniform(-range, range);
    // attention score parameters start wider, otherwise q.k stays ~0 and the
    // softmax cannot break out of uniform within a desk-scale step budget
    const double attn_range = 0.5;
    for (auto* t : {&p.w_qh, &p.w_qx, &p.w_k, &p.p_pos})
        for (double& v : *t) v = rng.uniform(-attn_range, attn_range);
    return p;
}

PolicySnapshot snapshot(const PolicyParams& params, SnapshotRole role) {
    return PolicySnapshot{role, params};
}

// ---------------------------------------------------------------------------
// Forward
//
// One step, context position t:
//   x_t  = emb[token_t]
//   k_t  = b_k + W_k x_t + p_pos[t]
//   q_t  = b_q + W_qh h_{t-1} + W_qx x_t
//   a_tj = softmax_j(q_t . k_j / sqrt(E)),  j <= t
//   c_t  = sum_j a_tj x_j
//   u_t  = [x_t ; c_t]
//   r    = sig(b_ir + W_ir u + b_hr + W_hr h)
//   z    = sig(b_iz + W_iz u + b_hz + W_hz h)
//   hh   = b_hn + W_hn h
//   n    = tanh(b_in + W_in u + r.*hh)
//   h_t  = (1-z).*n + z.*h
//   logits_t = b_out + W_out h_t

namespace {

struct StepWork {
    std::vector<double> q, u, a, scores;
};

// fills k row for position t
void compute_key(const PolicyParams& p, const double* x, int t, double* k_row) {
    const int E = p.dims.embed;
    for (int i = 0; i < E; ++i)
        k_row[i] = p.b_k[static_cast<std::size_t>(i)] +
                   p.p_pos[sz(t, E) + static_cast<std::size_t>(i)];
    K().matvec_add(k_row, p.w_k.data(), x, static_cast<std::size_t>(E),
                   static_cast<std::size_t>(E));
}

// attention read at position t; keys/values are rows 0..t. alpha_out gets t+1 weights.
void attention_read(const PolicyParams& p, const double* q, const double* keys,
                    const double* values, int t, double* alpha_out, double* c_out,
                    std::vector<double>& scores) {
    const int E = p.dims.embed;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(E));
    scores.resize(static_cast<std::size_t>(t) + 1);
    for (int j = 0; j <= t; ++j)
        scores[static_cast<std::size_t>(j)] =
            K().dot(q, keys + sz(j, E), static_cast<std::size_t>(E)) * inv_sqrt;
    const double m = K().max_value(scores.data(), scores.size());
    double total = 0.0;
    for (int j = 0; j <= t; ++j) {
        alpha_out[j] = std::exp(scores[static_cast<std::size_t>(j)] - m);
        total += alpha_out[j];
    }
    const double inv = 1.0 / total;
    std::fill(c_out, c_out + E, 0.0);
    for (int j = 0; j <= t; ++j) {
        alpha_out[j] *= inv;
        K().axpy(c_out, alpha_out[j], values + sz(j, E), static_cast<std::size_t>(E));
    }
}

void gru_cell(const PolicyParams& p, const double* u, const double* h_prev,
              double* r, double* z, double* hh, double* n, double* h_new,
              std::vector<double>& scratch) {
    const int H = p.dims.hidden;
    const int U = 2 * p.dims.embed;
    scratch.resize(static_cast<std::size_t>(H));
    double* a = scratch.data();

    for (int i = 0; i < H; ++i)
        a[i] = p.b_ir[static_cast<std::size_t>(i)] + p.b_hr[static_cast<std::size_t>(i)];
    K().matvec_add(a, p.w_ir.data(), u, static_cast<std::size_t>(H), static_cast<std::size_t>(U));
    K().matvec_add(a, p.w_hr.data(), h_prev, static_cast<std::size_t>(H),
                   static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i) r[i] = sigmoid(a[i]);

    for (int i = 0; i < H; ++i)
        a[i] = p.b_iz[static_cast<std::size_t>(i)] + p.b_hz[static_cast<std::size_t>(i)];
    K().matvec_add(a, p.w_iz.data(), u, static_cast<std::size_t>(H), static_cast<std::size_t>(U));
    K().matvec_add(a, p.w_hz.data(), h_prev, static_cast<std::size_t>(H),
                   static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i) z[i] = sigmoid(a[i]);

    std::memcpy(hh, p.b_hn.data(), sizeof(double) * static_cast<std::size_t>(H));
    K().matvec_add(hh, p.w_hn.data(), h_prev, static_cast<std::size_t>(H),
                   static_cast<std::size_t>(H));

    std::memcpy(a, p.b_in.data(), sizeof(double) * static_cast<std::size_t>(H));
    K().matvec_add(a, p.w_in.data(), u, static_cast<std::size_t>(H), static_cast<std::size_t>(U));
    for (int i = 0; i < H; ++i) n[i] = std::tanh(a[i] + r[i] * hh[i]);

    for (int i = 0; i < H; ++i) h_new[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
}

void compute_query(const PolicyParams& p, const double* h_prev, const double* x, double* q) {
    const int E = p.dims.embed;
    std::memcpy(q, p.b_q.data(), sizeof(double) * static_cast<std::size_t>(E));
    K().matvec_add(q, p.w_qh.data(), h_prev, static_cast<std::size_t>(E),
                   static_cast<std::size_t>(p.dims.hidden));
    K().matvec_add(q, p.w_qx.data(), x, static_cast<std::size_t>(E),
                   static_cast<std::size_t>(E));
}

}  // namespace

void forward_hidden(const PolicyParams& p, std::span<const Token> tokens, ForwardCache& cache) {
    if (tokens.empty()) throw std::invalid_argument("forward_hidden: empty context");
    if (static_cast<std::int32_t>(tokens.size()) > p.dims.max_pos)
        throw std::invalid_argument("forward_hidden: context longer than max_pos");
    check_tokens(p, tokens, "forward_hidden");
    const int H = p.dims.hidden;
    const int E = p.dims.embed;
    const int T = static_cast<int>(tokens.size());
    cache.steps = T;
    cache.tokens.assign(tokens.begin(), tokens.end());
    cache.h.assign(sz(T, H), 0.0);
    cache.r.assign(sz(T, H), 0.0);
    cache.z.assign(sz(T, H), 0.0);
    cache.n.assign(sz(T, H), 0.0);
    cache.hh.assign(sz(T, H), 0.0);
    cache.q.assign(sz(T, E), 0.0);
    cache.k.assign(sz(T, E), 0.0);
    cache.c.assign(sz(T, E), 0.0);
    cache.alpha.assign(sz(T, T), 0.0);

    // values are the raw token embeddings; gather them once
    std::vector<double> values(sz(T, E));
    for (int t = 0; t < T; ++t)
        std::memcpy(values.data() + sz(t, E),
                    p.emb.data() + sz(tokens[static_cast<std::size_t>(t)], E),
                    sizeof(double) * static_cast<std::size_t>(E));

    std::vector<double> h_zero(static_cast<std::size_t>(H), 0.0);
    std::vector<double> scratch, scores, u(static_cast<std::size_t>(2 * E));
    for (int t = 0; t < T; ++t) {
        const double* x = values.data() + sz(t, E);
        const double* h_prev = (t == 0) ? h_zero.data() : cache.h.data() + sz(t - 1, H);
        compute_key(p, x, t, cache.k.data() + sz(t, E));
        compute_query(p, h_prev, x, cache.q.data() + sz(t, E));
        attention_read(p, cache.q.data() + sz(t, E), cache.k.data(), values.data(), t,
                       cache.alpha.data() + sz(t, T), cache.c.data() + sz(t, E), scores);
        std::memcpy(u.data(), x, sizeof(double) * static_cast<std::size_t>(E));
        std::memcpy(u.data() + E, cache.c.data() + sz(t, E),
                    sizeof(double) * static_cast<std::size_t>(E));
        const std::size_t off = sz(t, H);
        gru_cell(p, u.data(), h_prev, cache.r.data() + off, cache.z.data() + off,
                 cache.hh.data() + off, cache.n.data() + off, cache.h.data() + off, scratch);
    }
}

std::vector<double> logits(const PolicyParams& p, std::span<const Token> context) {
    ForwardCache cache;
    forward_hidden(p, context, cache);
    const int V = p.dims.vocab;
    const int H = p.dims.hidden;
    std::vector<double> out(sz(cache.steps, V));
    for (int t = 0; t < cache.steps; ++t) {
        double* row = out.data() + sz(t, V);
        std::memcpy(row, p.b_out.data(), sizeof(double) * static_cast<std::size_t>(V));
        K().matvec_add(row, p.w_out.data(), cache.h.data() + sz(t, H),
                       static_cast<std::size_t>(V), static_cast<std::size_t>(H));
    }
    return out;
}

double log_prob_of(std::span<const double> logit_row, Token target) {
    const std::size_t n = logit_row.size();
    const double m = K().max_value(logit_row.data(), n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(logit_row[i] - m);
    return logit_row[static_cast<std::size_t>(target)] - m - std::log(sum);
}

GruState initial_state(const PolicyParams& p) {
    GruState s;
    s.h.assign(static_cast<std::size_t>(p.dims.hidden), 0.0);
    return s;
}

void gru_step(const PolicyParams& p, GruState& state, Token token) {
    if (token < 0 || token >= p.dims.vocab)
        throw std::invalid_argument("gru_step: token id out of range");
    if (state.positions >= p.dims.max_pos)
        throw std::invalid_argument("gru_step: context longer than max_pos");
    const int H = p.dims.hidden;
    const int E = p.dims.embed;
    const int t = state.positions;

    state.values.resize(sz(t + 1, E));
    state.keys.resize(sz(t + 1, E));
    double* x = state.values.data() + sz(t, E);
    std::memcpy(x, p.emb.data() + sz(token, E), sizeof(double) * static_cast<std::size_t>(E));
    compute_key(p, x, t, state.keys.data() + sz(t, E));

    static thread_local std::vector<double> q, alpha, u, r, z, hh, n, h_new, scratch, scores;
    q.resize(static_cast<std::size_t>(E));
    alpha.resize(static_cast<std::size_t>(t) + 1);
    u.resize(static_cast<std::size_t>(2 * E));
    r.resize(static_cast<std::size_t>(H));
    z.resize(static_cast<std::size_t>(H));
    hh.resize(static_cast<std::size_t>(H));
    n.resize(static_cast<std::size_t>(H));
    h_new.resize(static_cast<std::size_t>(H));

    compute_query(p, state.h.data(), x, q.data());
    attention_read(p, q.data(), state.keys.data(), state.values.data(), t, alpha.data(),
                   u.data() + E, scores);
    std::memcpy(u.data(), x, sizeof(double) * static_cast<std::size_t>(E));
    gru_cell(p, u.data(), state.h.data(), r.data(), z.data(), hh.data(), n.data(),
             h_new.data(), scratch);
    std::memcpy(state.h.data(), h_new.data(), sizeof(double) * static_cast<std::size_t>(H));
    state.positions = t + 1;
}

void logits_from_state(const PolicyParams& p, const GruState& state, std::vector<double>& out) {
    const int V = p.dims.vocab;
    out.resize(static_cast<std::size_t>(V));
    std::memcpy(out.data(), p.b_out.data(), sizeof(double) * static_cast<std::size_t>(V));
    K().matvec_add(out.data(), p.w_out.data(), state.h.data(), static_cast<std::size_t>(V),
                   static_cast<std::size_t>(p.dims.hidden));
}

// ---------------------------------------------------------------------------
// Sampling

SampleResult sample_traced(const PolicyParams& p, std::span<const Token> prompt, int max_len,
                           double temperature, Rng& rng) {
    if (max_len <= 0) throw std::invalid_argument("sample: max_len must be > 0");
    if (prompt.empty()) throw std::invalid_argument("sample: empty prompt");
    if (temperature < 0.0) throw std::invalid_argument("sample: negative temperature");
    check_tokens(p, prompt, "sample");

    GruState state = initial_state(p);
    for (Token t : prompt) gru_step(p, state, t);

    const int V = p.dims.vocab;
    SampleResult out;
    std::vector<double> row, probs(static_cast<std::size_t>(V));
    for (int step = 0; step < max_len; ++step) {
        logits_from_state(p, state, row);

        Token chosen;
        if (temperature == 0.0) {
            chosen = 0;
            for (Token t = 1; t < V; ++t)
                if (row[static_cast<std::size_t>(t)] > row[static_cast<std::size_t>(chosen)]) chosen = t;
        } else {
            const double m = K().max_value(row.data(), static_cast<std::size_t>(V));
            double total = 0.0;
            for (int i = 0; i < V; ++i) {
                probs[static_cast<std::size_t>(i)] =
                    std::exp((row[static_cast<std::size_t>(i)] - m) / temperature);
                total += probs[static_cast<std::size_t>(i)];
            }
            const double u = rng.uniform01() * total;
            double acc = 0.0;
            chosen = static_cast<Token>(V - 1);
            for (int i = 0; i < V; ++i) {
                acc += probs[static_cast<std::size_t>(i)];
                if (u < acc) {
                    chosen = static_cast<Token>(i);
                    break;
                }
            }
        }
        out.tokens.push_back(chosen);
        out.logprob.push_back(log_prob_of(row, chosen));
        if (chosen == tok::eos) break;
        if (state.positions >= p.dims.max_pos) break;  // no room to condition on more
        gru_step(p, state, chosen);
    }
    return out;
}

std::vector<Token> sample(const PolicyParams& p, std::span<const Token> prompt, int max_len,
                          double temperature, Rng& rng) {
    return sample_traced(p, prompt, max_len, temperature, rng).tokens;
}

std::vector<double> sequence_logprob(const PolicyParams& p, std::span<const Token> prompt,
                                     std::span<const Token> target) {
    if (prompt.empty()) throw std::invalid_argument("sequence_logprob: empty prompt");
    if (target.empty()) return {};
    check_tokens(p, prompt, "sequence_logprob");
    check_tokens(p, target, "sequence_logprob");

    GruState state = initial_state(p);
    for (Token t : prompt) gru_step(p, state, t);

    std::vector<double> out;
    out.reserve(target.size());
    std::vector<double> row;
    for (std::size_t j = 0; j < target.size(); ++j) {
        logits_from_state(p, state, row);
        out.push_back(log_prob_of(row, target[j]));
        if (j + 1 < target.size()) gru_step(p, state, target[j]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward

double weighted_nll(const PolicyParams& p, std::span<const Token> inputs,
                    std::span<const Token> labels, std::span<const double> weights) {
    if (inputs.size() != labels.size() || inputs.size() != weights.size())
        throw std::invalid_argument("weighted_nll: inputs/labels/weights size mismatch");
    ForwardCache cache;
    forward_hidden(p, inputs, cache);
    const int V = p.dims.vocab;
    const int H = p.dims.hidden;
    std::vector<double> row(static_cast<std::size_t>(V));
    double loss = 0.0;
    for (int t = 0; t < cache.steps; ++t) {
        const double w = weights[static_cast<std::size_t>(t)];
        if (w == 0.0) continue;
        const Token label = labels[static_cast<std::size_t>(t)];
        if (label < 0 || label >= V) throw std::invalid_argument("weighted_nll: label out of range");
        std::memcpy(row.data(), p.b_out.data(), sizeof(double) * static_cast<std::size_t>(V));
        K().matvec_add(row.data(), p.w_out.data(), cache.h.data() + sz(t, H),
                       static_cast<std::size_t>(V), static_cast<std::size_t>(H));
        loss -= w * log_prob_of(row, label);
    }
    return loss;
}

double weighted_nll_backward(const PolicyParams& p, std::span<const Token> inputs,
                             std::span<const Token> labels, std::span<const double> weights,
                             ParamTensors& grads) {
    if (inputs.size() != labels.size() || inputs.size() != weights.size())
        throw std::invalid_argument("weighted_nll_backward: size mismatch");
    if (grads.dims != p.dims)
        throw std::invalid_argument("weighted_nll_backward: gradient shape mismatch");

    ForwardCache cache;
    forward_hidden(p, inputs, cache);
    const int V = p.dims.vocab;
    const int H = p.dims.hidden;
    const int E = p.dims.embed;
    const int T = cache.steps;

    // softmax rows where the loss looks, kept for the backward pass
    std::vector<double> probs(sz(T, V), 0.0);
    std::vector<bool> active(static_cast<std::size_t>(T), false);
    std::vector<double> row(static_cast<std::size_t>(V));
    double loss = 0.0;
    for (int t = 0; t < T; ++t) {
        const double w = weights[static_cast<std::size_t>(t)];
        if (w == 0.0) continue;
        const Token label = labels[static_cast<std::size_t>(t)];
        if (label < 0 || label >= V)
            throw std::invalid_argument("weighted_nll_backward: label out of range");
        std::memcpy(row.data(), p.b_out.data(), sizeof(double) * static_cast<std::size_t>(V));
        K().matvec_add(row.data(), p.w_out.data(), cache.h.data() + sz(t, H),
                       static_cast<std::size_t>(V), static_cast<std::size_t>(H));
        const double m = K().max_value(row.data(), static_cast<std::size_t>(V));
        double total = 0.0;
        double* pr = probs.data() + sz(t, V);
        for (int i = 0; i < V; ++i) {
            pr[i] = std::exp(row[static_cast<std::size_t>(i)] - m);
            total += pr[i];
        }
        const double inv = 1.0 / total;
        for (int i = 0; i < V; ++i) pr[i] *= inv;
        loss -= w * std::log(pr[static_cast<std::size_t>(label)]);
        active[static_cast<std::size_t>(t)] = true;
    }
    if (!std::isfinite(loss))
        throw std::runtime_error("weighted_nll_backward: non-finite loss, aborting step");

    // re-gather values (token embeddings per position)
    std::vector<double> values(sz(T, E));
    for (int t = 0; t < T; ++t)
        std::memcpy(values.data() + sz(t, E),
                    p.emb.data() + sz(cache.tokens[static_cast<std::size_t>(t)], E),
                    sizeof(double) * static_cast<std::size_t>(E));

    std::vector<double> dX(sz(T, E), 0.0);  // d loss / d x_j, all paths
    std::vector<double> dK(sz(T, E), 0.0);  // d loss / d k_j
    std::vector<double> dh(static_cast<std::size_t>(H), 0.0);
    std::vector<double> dh_prev(static_cast<std::size_t>(H), 0.0);
    std::vector<double> dlogits(static_cast<std::size_t>(V));
    std::vector<double> dn(static_cast<std::size_t>(H)), dz(static_cast<std::size_t>(H));
    std::vector<double> da(static_cast<std::size_t>(H)), dhh(static_cast<std::size_t>(H));
    std::vector<double> dr(static_cast<std::size_t>(H));
    std::vector<double> du(static_cast<std::size_t>(2 * E));
    std::vector<double> dq(static_cast<std::size_t>(E));
    std::vector<double> dalpha(static_cast<std::size_t>(T));
    std::vector<double> u(static_cast<std::size_t>(2 * E));
    std::vector<double> h_zero(static_cast<std::size_t>(H), 0.0);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(E));

    for (int t = T - 1; t >= 0; --t) {
        const std::size_t off = sz(t, H);
        const double* h_t = cache.h.data() + off;
        const double* h_prev = (t == 0) ? h_zero.data() : cache.h.data() + sz(t - 1, H);
        const double* r = cache.r.data() + off;
        const double* z = cache.z.data() + off;
        const double* n = cache.n.data() + off;
        const double* hh = cache.hh.data() + off;
        const double* x = values.data() + sz(t, E);
        const double* c = cache.c.data() + sz(t, E);
        const double* alpha = cache.alpha.data() + sz(t, T);
        const double* q = cache.q.data() + sz(t, E);

        if (active[static_cast<std::size_t>(t)]) {
            const double w = weights[static_cast<std::size_t>(t)];
            const Token label = labels[static_cast<std::size_t>(t)];
            const double* pr = probs.data() + sz(t, V);
            for (int i = 0; i < V; ++i) dlogits[static_cast<std::size_t>(i)] = w * pr[i];
            dlogits[static_cast<std::size_t>(label)] -= w;
            K().ger_add(grads.w_out.data(), dlogits.data(), h_t, static_cast<std::size_t>(V),
                        static_cast<std::size_t>(H));
            for (int i = 0; i < V; ++i)
                grads.b_out[static_cast<std::size_t>(i)] += dlogits[static_cast<std::size_t>(i)];
            K().matvec_t_add(dh.data(), p.w_out.data(), dlogits.data(),
                             static_cast<std::size_t>(V), static_cast<std::size_t>(H));
        }

        // h = (1-z).*n + z.*h_prev
        for (int i = 0; i < H; ++i) {
            dn[static_cast<std::size_t>(i)] = dh[static_cast<std::size_t>(i)] * (1.0 - z[i]);
            dz[static_cast<std::size_t>(i)] = dh[static_cast<std::size_t>(i)] * (h_prev[i] - n[i]);
            dh_prev[static_cast<std::size_t>(i)] = dh[static_cast<std::size_t>(i)] * z[i];
        }

        std::memcpy(u.data(), x, sizeof(double) * static_cast<std::size_t>(E));
        std::memcpy(u.data() + E, c, sizeof(double) * static_cast<std::size_t>(E));
        std::fill(du.begin(), du.end(), 0.0);

        // n = tanh(b_in + W_in u + r.*hh)
        for (int i = 0; i < H; ++i)
            da[static_cast<std::size_t>(i)] = dn[static_cast<std::size_t>(i)] * (1.0 - n[i] * n[i]);
        K().ger_add(grads.w_in.data(), da.data(), u.data(), static_cast<std::size_t>(H),
                    static_cast<std::size_t>(2 * E));
        for (int i = 0; i < H; ++i) grads.b_in[static_cast<std::size_t>(i)] += da[static_cast<std::size_t>(i)];
        K().matvec_t_add(du.data(), p.w_in.data(), da.data(), static_cast<std::size_t>(H),
                         static_cast<std::size_t>(2 * E));
        for (int i = 0; i < H; ++i) {
            dr[static_cast<std::size_t>(i)] = da[static_cast<std::size_t>(i)] * hh[i];
            dhh[static_cast<std::size_t>(i)] = da[static_cast<std::size_t>(i)] * r[i];
        }
        K().ger_add(grads.w_hn.data(), dhh.data(), h_prev, static_cast<std::size_t>(H),
                    static_cast<std::size_t>(H));
        for (int i = 0; i < H; ++i) grads.b_hn[static_cast<std::size_t>(i)] += dhh[static_cast<std::size_t>(i)];
        K().matvec_t_add(dh_prev.data(), p.w_hn.data(), dhh.data(), static_cast<std::size_t>(H),
                         static_cast<std::size_t>(H));

        // z gate
        for (int i = 0; i < H; ++i)
            da[static_cast<std::size_t>(i)] = dz[static_cast<std::size_t>(i)] * z[i] * (1.0 - z[i]);
        K().ger_add(grads.w_iz.data(), da.data(), u.data(), static_cast<std::size_t>(H),
                    static_cast<std::size_t>(2 * E));
        K().ger_add(grads.w_hz.data(), da.data(), h_prev, static_cast<std::size_t>(H),
                    static_cast<std::size_t>(H));
        for (int i = 0; i < H; ++i) {
            grads.b_iz[static_cast<std::size_t>(i)] += da[static_cast<std::size_t>(i)];
            grads.b_hz[static_cast<std::size_t>(i)] += da[static_cast<std::size_t>(i)];
        }
        K().matvec_t_add(du.data(), p.w_iz.data(), da.data(), static_cast<std::size_t>(H),
                         static_cast<std::size_t>(2 * E));
        K().matvec_t_add(dh_prev.data(), p.w_hz.data(), da.data(), static_cast<std::size_t>(H),
                         static_cast<std::size_t>(H));

        // r gate
        for (int i = 0; i < H; ++i)
            da[static_cast<std::size_t>(i)] = dr[static_cast<std::size_t>(i)] * r[i] * (1.0 - r[i]);
        K().ger_add(grads.w_ir.data(), da.data(), u.data(), static_cast<std::size_t>(H),
                    static_cast<std::size_t>(2 * E));
        K().ger_add(grads.w_hr.data(), da.data(), h_prev, static_cast<std::size_t>(H),
                    static_cast<std::size_t>(H));
        for (int i = 0; i < H; ++i) {
            grads.b_ir[static_cast<std::size_t>(i)] += da[static_cast<std::size_t>(i)];
            grads.b_hr[static_cast<std::size_t>(i)] += da[static_cast<std::size_t>(i)];
        }
        K().matvec_t_add(du.data(), p.w_ir.data(), da.data(), static_cast<std::size_t>(H),
                         static_cast<std::size_t>(2 * E));
        K().matvec_t_add(dh_prev.data(), p.w_hr.data(), da.data(), static_cast<std::size_t>(H),
                         static_cast<std::size_t>(H));

        // u = [x ; c]
        K().axpy(dX.data() + sz(t, E), 1.0, du.data(), static_cast<std::size_t>(E));
        const double* dc = du.data() + E;

        // attention: c = sum_j alpha_j x_j, alpha = softmax(q.k_j/sqrt(E))
        double weighted_sum = 0.0;
        for (int j = 0; j <= t; ++j) {
            dalpha[static_cast<std::size_t>(j)] =
                K().dot(dc, values.data() + sz(j, E), static_cast<std::size_t>(E));
            weighted_sum += alpha[j] * dalpha[static_cast<std::size_t>(j)];
        }
        std::fill(dq.begin(), dq.end(), 0.0);
        for (int j = 0; j <= t; ++j) {
            const double ds = alpha[j] * (dalpha[static_cast<std::size_t>(j)] - weighted_sum) * inv_sqrt;
            if (ds != 0.0) {
                K().axpy(dq.data(), ds, cache.k.data() + sz(j, E), static_cast<std::size_t>(E));
                K().axpy(dK.data() + sz(j, E), ds, q, static_cast<std::size_t>(E));
            }
            if (alpha[j] != 0.0)
                K().axpy(dX.data() + sz(j, E), alpha[j], dc, static_cast<std::size_t>(E));
        }
        // q = b_q + W_qh h_prev + W_qx x
        K().ger_add(grads.w_qh.data(), dq.data(), h_prev, static_cast<std::size_t>(E),
                    static_cast<std::size_t>(H));
        for (int i = 0; i < E; ++i) grads.b_q[static_cast<std::size_t>(i)] += dq[static_cast<std::size_t>(i)];
        K().matvec_t_add(dh_prev.data(), p.w_qh.data(), dq.data(), static_cast<std::size_t>(E),
                         static_cast<std::size_t>(H));
        K().ger_add(grads.w_qx.data(), dq.data(), x, static_cast<std::size_t>(E),
                    static_cast<std::size_t>(E));
        K().matvec_t_add(dX.data() + sz(t, E), p.w_qx.data(), dq.data(),
                         static_cast<std::size_t>(E), static_cast<std::size_t>(E));

        dh.swap(dh_prev);
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    }

    // keys: k_j = b_k + W_k x_j + p_pos[j]
    for (int j = 0; j < T; ++j) {
        const double* dk = dK.data() + sz(j, E);
        K().ger_add(grads.w_k.data(), dk, values.data() + sz(j, E), static_cast<std::size_t>(E),
                    static_cast<std::size_t>(E));
        for (int i = 0; i < E; ++i) grads.b_k[static_cast<std::size_t>(i)] += dk[i];
        K().axpy(grads.p_pos.data() + sz(j, E), 1.0, dk, static_cast<std::size_t>(E));
        K().matvec_t_add(dX.data() + sz(j, E), p.w_k.data(), dk, static_cast<std::size_t>(E),
                         static_cast<std::size_t>(E));
    }
    for (int j = 0; j < T; ++j)
        K().axpy(grads.emb.data() + sz(cache.tokens[static_cast<std::size_t>(j)], E), 1.0,
                 dX.data() + sz(j, E), static_cast<std::size_t>(E));
    return loss;
}

// ---------------------------------------------------------------------------
// Adam

AdamState make_adam(ModelDims dims, double lr, double beta1, double beta2, double eps) {
    AdamState s;
    s.m = ParamTensors::zeros(dims);
    s.v = ParamTensors::zeros(dims);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

void adam_step(PolicyParams& params, const ParamTensors& grads, AdamState& state) {
    if (params.dims != grads.dims || params.dims != state.m.dims)
        throw std::invalid_argument("adam_step: shape mismatch");
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    auto pt = params.tensors();
    auto gt = grads.tensors();
    auto mt = state.m.tensors();
    auto vt = state.v.tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
        K().adam_update(pt[i].data->data(), mt[i].data->data(), vt[i].data->data(),
                        gt[i].data->data(), pt[i].data->size(), state.lr, state.beta1,
                        state.beta2, state.eps, c1, c2);
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char checkpoint_magic[8] = {'P', 'A', 'S', 'M', 'R', 'C', 'K', 'P'};
}

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write(checkpoint_magic, 8);
    write_u32(os, meta.version);
    write_u32(os, static_cast<std::uint32_t>(params.dims.vocab));
    write_u32(os, static_cast<std::uint32_t>(params.dims.embed));
    write_u32(os, static_cast<std::uint32_t>(params.dims.hidden));
    write_u32(os, static_cast<std::uint32_t>(params.dims.max_pos));
    write_u64(os, meta.seed);
    write_u64(os, meta.config_hash);
    write_u8(os, static_cast<std::uint8_t>(meta.role));
    for (auto ref : params.tensors())
        for (double v : *ref.data) write_f64(os, v);
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

PolicyParams load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, checkpoint_magic, 8) != 0)
        throw std::runtime_error("'" + path + "' is not a checkpoint file");
    CheckpointMeta meta;
    meta.version = read_u32(is);
    if (meta.version != checkpoint_version)
        throw std::runtime_error("checkpoint version mismatch in '" + path + "': file has " +
                                 std::to_string(meta.version) + ", expected " +
                                 std::to_string(checkpoint_version));
    meta.dims.vocab = static_cast<std::int32_t>(read_u32(is));
    meta.dims.embed = static_cast<std::int32_t>(read_u32(is));
    meta.dims.hidden = static_cast<std::int32_t>(read_u32(is));
    meta.dims.max_pos = static_cast<std::int32_t>(read_u32(is));
    meta.seed = read_u64(is);
    meta.config_hash = read_u64(is);
    meta.role = static_cast<SnapshotRole>(read_u8(is));
    PolicyParams p = ParamTensors::zeros(meta.dims);
    for (auto ref : p.tensors())
        for (double& v : *ref.data) v = read_f64(is);
    if (meta_out != nullptr) *meta_out = meta;
    return p;
}

}  // namespace pasmr
