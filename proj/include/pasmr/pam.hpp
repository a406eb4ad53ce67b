#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pasmr/corpus.hpp"
#include "pasmr/model.hpp"

namespace pasmr {

/// One supervised example: the model conditions on the raw question and is
/// trained to emit "<piv> Q_En </piv> A_T <eos>".
struct PamExample {
    std::vector<Token> prompt;  // Q_T
    std::vector<Token> target;  // <piv> Q_En </piv> A_T <eos>
};

PamExample make_pam_example(const RenderedExample& ex);

struct PamConfig {
    int epochs = 10;
    int batch_size = 32;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int probe_size = 32;
};

struct PamLogRow {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct PamResult {
    PolicyParams params;
    PolicySnapshot reference;  // frozen copy of the final parameters
    std::vector<PamLogRow> log;
    double probe_loss_initial = 0.0;
    double probe_loss_final = 0.0;
};

/// Mean over examples of the summed next-token NLL on the target span.
double sft_loss(const PolicyParams& p, std::span<const PamExample> batch);

/// sft_loss plus gradients accumulated into `grads`.
double sft_loss_backward(const PolicyParams& p, std::span<const PamExample> batch,
                         ParamTensors& grads);

/// Supervised stage. Batches mix all languages and reshuffle every epoch.
/// Throws on divergence, identifying the failing step.
PamResult train_pam(const std::vector<RenderedExample>& sft_split, ModelDims dims,
                    const PamConfig& cfg, std::uint64_t seed,
                    const std::function<void(const PamLogRow&)>& on_step = {});

}  // namespace pasmr
