#include "pasmr/pam.hpp"

#include <cmath>
#include <stdexcept>

namespace pasmr {

PamExample make_pam_example(const RenderedExample& ex) {
    return PamExample{ex.question_tokens, assemble_target(ex)};
}

namespace {

// Next-token layout: inputs = prompt + target[:-1]; the label at position t
// is the token that follows inputs[t]. Prompt positions carry weight 0.
struct NextTokenView {
    std::vector<Token> inputs;
    std::vector<Token> labels;
    std::vector<double> weights;
};

NextTokenView next_token_view(const PamExample& ex, double weight) {
    const std::size_t P = ex.prompt.size();
    const std::size_t T = ex.target.size();
    if (P == 0 || T == 0) throw std::invalid_argument("pam: empty prompt or target");
    NextTokenView v;
    v.inputs = ex.prompt;
    v.inputs.insert(v.inputs.end(), ex.target.begin(), ex.target.end() - 1);
    v.labels.assign(v.inputs.size(), 0);
    v.weights.assign(v.inputs.size(), 0.0);
    for (std::size_t j = 0; j < T; ++j) {
        v.labels[P - 1 + j] = ex.target[j];
        v.weights[P - 1 + j] = weight;
    }
    return v;
}

}  // namespace

double sft_loss(const PolicyParams& p, std::span<const PamExample> batch) {
    if (batch.empty()) throw std::invalid_argument("sft_loss: empty batch");
    const double w = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& ex : batch) {
        const NextTokenView v = next_token_view(ex, w);
        loss += weighted_nll(p, v.inputs, v.labels, v.weights);
    }
    return loss;
}

double sft_loss_backward(const PolicyParams& p, std::span<const PamExample> batch,
                         ParamTensors& grads) {
    if (batch.empty()) throw std::invalid_argument("sft_loss_backward: empty batch");
    const double w = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& ex : batch) {
        const NextTokenView v = next_token_view(ex, w);
        loss += weighted_nll_backward(p, v.inputs, v.labels, v.weights, grads);
    }
    return loss;
}

PamResult train_pam(const std::vector<RenderedExample>& sft_split, ModelDims dims,
                    const PamConfig& cfg, std::uint64_t seed,
                    const std::function<void(const PamLogRow&)>& on_step) {
    if (sft_split.empty()) throw std::invalid_argument("train_pam: empty SFT split");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0)
        throw std::invalid_argument("train_pam: epochs and batch_size must be positive");

    std::vector<PamExample> examples;
    examples.reserve(sft_split.size());
    for (const auto& ex : sft_split) examples.push_back(make_pam_example(ex));

    const std::size_t probe_n =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.probe_size), examples.size());
    const std::span<const PamExample> probe(examples.data(), probe_n);

    PamResult res;
    res.params = init_params(dims, derive_seed(seed, 0x1A17));
    AdamState adam = make_adam(dims, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    ParamTensors grads = ParamTensors::zeros(dims);

    res.probe_loss_initial = sft_loss(res.params, probe);

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, 0x5AFF, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::vector<PamExample> batch;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) batch.push_back(examples[order[i]]);

            grads.set_zero();
            double loss;
            try {
                loss = sft_loss_backward(res.params, batch, grads);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("PAM training diverged at step " + std::to_string(step) +
                                         ": " + e.what());
            }
            adam_step(res.params, grads, adam);
            if (!res.params.all_finite())
                throw std::runtime_error("PAM training diverged at step " + std::to_string(step) +
                                         ": non-finite parameters");

            PamLogRow row{step, loss, cfg.lr};
            res.log.push_back(row);
            if (on_step) on_step(row);
            ++step;
        }
    }

    res.probe_loss_final = sft_loss(res.params, probe);
    res.reference = snapshot(res.params, SnapshotRole::Reference);
    return res;
}

}  // namespace pasmr
