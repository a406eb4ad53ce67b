#include "pasmr/srl.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace pasmr {

namespace {
constexpr double kLogRatioClamp = 20.0;  // exp(20) ~ 4.9e8, far outside any clip window
}

std::string to_string(RewardSpread v) {
    return v == RewardSpread::PaperLiteral ? "paper-literal" : "terminal-only";
}
std::string to_string(ReturnConvention v) {
    return v == ReturnConvention::PaperLiteral ? "paper-literal" : "inclusive";
}
std::string to_string(RewardSource v) {
    return v == RewardSource::SelfPivot ? "self-pivot" : "gold-answer";
}

RewardSpread reward_spread_from_string(const std::string& s) {
    if (s == "paper-literal") return RewardSpread::PaperLiteral;
    if (s == "terminal-only") return RewardSpread::TerminalOnly;
    throw std::invalid_argument("unknown reward_spread '" + s + "'");
}
ReturnConvention return_convention_from_string(const std::string& s) {
    if (s == "paper-literal") return ReturnConvention::PaperLiteral;
    if (s == "inclusive") return ReturnConvention::Inclusive;
    throw std::invalid_argument("unknown return_convention '" + s + "'");
}
RewardSource reward_source_from_string(const std::string& s) {
    if (s == "self-pivot") return RewardSource::SelfPivot;
    if (s == "gold-answer") return RewardSource::GoldAnswer;
    throw std::invalid_argument("unknown reward_source '" + s + "'");
}

void SrlConfig::validate() const {
    if (beta < 0.0) throw std::invalid_argument("srl: beta must be >= 0");
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("srl: gamma must be in (0,1]");
    if (epsilon <= 0.0 || epsilon >= 1.0) throw std::invalid_argument("srl: epsilon must be in (0,1)");
    if (rollouts_per_question <= 0 || batch_size <= 0 || total_steps <= 0 || max_gen_len <= 0)
        throw std::invalid_argument("srl: counts must be positive");
    if (temperature < 0.0) throw std::invalid_argument("srl: temperature must be >= 0");
}

// ---------------------------------------------------------------------------
// Rewards

double f_reward(std::optional<long long> a_t, std::optional<long long> a_en) {
    if (!a_t.has_value() || !a_en.has_value()) return 0.0;
    return *a_t == *a_en ? 1.0 : 0.1;
}

double gold_reward(std::optional<long long> a_t, long long gold_answer) {
    if (!a_t.has_value()) return 0.0;
    return *a_t == gold_answer ? 1.0 : 0.1;
}

std::vector<double> kl_terms(const Trajectory& traj) {
    std::vector<double> out(traj.tokens.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = traj.logp_cur[i] - traj.logp_ref[i];
    return out;
}

double kl_term(const Trajectory& traj, int i) {
    return traj.logp_cur[static_cast<std::size_t>(i)] - traj.logp_ref[static_cast<std::size_t>(i)];
}

std::vector<double> token_rewards(double F, std::span<const double> kl_nonterminal, double beta,
                                  RewardSpread spread) {
    std::vector<double> r(kl_nonterminal.size() + 1);
    for (std::size_t i = 0; i < kl_nonterminal.size(); ++i) {
        r[i] = (spread == RewardSpread::PaperLiteral) ? F - beta * kl_nonterminal[i]
                                                      : -beta * kl_nonterminal[i];
    }
    r.back() = F;
    return r;
}

std::vector<double> returns(std::span<const double> rewards, double gamma,
                            ReturnConvention convention) {
    const std::size_t L = rewards.size();
    std::vector<double> g(L, 0.0);
    if (L == 0) return g;
    if (convention == ReturnConvention::Inclusive) {
        // G_i = R_i + gamma * G_{i+1}
        g[L - 1] = rewards[L - 1];
        for (std::size_t i = L - 1; i-- > 0;) g[i] = rewards[i] + gamma * g[i + 1];
    } else {
        // G_i = sum_{k=i+1} gamma^{k-i} R_k  =>  G_i = gamma * (R_{i+1} + G_{i+1}), G_L = 0
        g[L - 1] = 0.0;
        for (std::size_t i = L - 1; i-- > 0;) g[i] = gamma * (rewards[i + 1] + g[i + 1]);
    }
    return g;
}

void normalize_advantages(std::vector<std::vector<double>>& returns_batch) {
    std::size_t n = 0;
    double mean = 0.0;
    for (const auto& g : returns_batch)
        for (double v : g) {
            mean += v;
            ++n;
        }
    if (n == 0) return;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& g : returns_batch)
        for (double v : g) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double denom = std::sqrt(var) + 1e-8;
    for (auto& g : returns_batch)
        for (double& v : g) v = (v - mean) / denom;
}

double clip_term(double ratio, double advantage, double epsilon) {
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

ClipResult clip_objective(const PolicyParams& params, std::span<const Trajectory> batch,
                          const std::vector<std::vector<double>>& advantages, double epsilon,
                          ParamTensors* grads) {
    if (batch.size() != advantages.size())
        throw std::invalid_argument("clip_objective: batch/advantage size mismatch");

    std::size_t total_tokens = 0;
    for (const auto& traj : batch) total_tokens += traj.tokens.size();
    if (total_tokens == 0) throw std::invalid_argument("clip_objective: empty batch");

    ClipResult res;
    std::size_t clipped_count = 0;
    const double inv_total = 1.0 / static_cast<double>(total_tokens);

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Trajectory& traj = batch[b];
        const auto& adv = advantages[b];
        if (adv.size() != traj.tokens.size())
            throw std::invalid_argument("clip_objective: advantage length mismatch");
        if (traj.tokens.empty()) continue;

        // fresh current-policy log-probs; this is the differentiable path
        const std::vector<double> logp_cur =
            sequence_logprob(params, traj.prompt, traj.tokens);

        const std::size_t L = traj.tokens.size();
        std::vector<double> weights(traj.prompt.size() - 1 + L, 0.0);
        std::vector<Token> inputs(traj.prompt.begin(), traj.prompt.end());
        inputs.insert(inputs.end(), traj.tokens.begin(), traj.tokens.end() - 1);
        std::vector<Token> labels(inputs.size(), 0);
        const std::size_t P = traj.prompt.size();
        bool any_weight = false;

        for (std::size_t i = 0; i < L; ++i) {
            const double diff =
                std::clamp(logp_cur[i] - traj.logp_old[i], -kLogRatioClamp, kLogRatioClamp);
            const double r = std::exp(diff);
            const double unclipped = r * adv[i];
            const double clipped = std::clamp(r, 1.0 - epsilon, 1.0 + epsilon) * adv[i];
            res.objective += std::min(unclipped, clipped) * inv_total;
            res.mean_kl += (logp_cur[i] - traj.logp_ref[i]) * inv_total;
            if (clipped < unclipped) ++clipped_count;

            // d objective / d logp_cur_i = r * adv when the unclipped branch is
            // active (ties included), 0 when the clipped constant branch wins.
            if (grads != nullptr && unclipped <= clipped) {
                labels[P - 1 + i] = traj.tokens[i];
                // weighted_nll minimizes -sum w*logp, so w = +x accumulates
                // d(-objective); negate to ascend.
                weights[P - 1 + i] = -(r * adv[i]) * inv_total;
                if (weights[P - 1 + i] != 0.0) any_weight = true;
            }
        }

        if (grads != nullptr && any_weight) {
            // weighted_nll_backward computes gradients of sum w * (-logp); with
            // w = -r*adv/total this accumulates +d(objective)/d(theta).
            weighted_nll_backward(params, inputs, labels, weights, *grads);
        }
    }
    res.clip_fraction = static_cast<double>(clipped_count) / static_cast<double>(total_tokens);
    return res;
}

// ---------------------------------------------------------------------------
// Rollouts

Trajectory rollout(const PolicyParams& params, const PolicySnapshot& reference,
                   std::span<const Token> question, double temperature, int max_len, Rng& rng) {
    Trajectory traj;
    traj.prompt.assign(question.begin(), question.end());
    SampleResult s = sample_traced(params, question, max_len, temperature, rng);
    traj.tokens = std::move(s.tokens);
    traj.logp_cur = s.logprob;
    traj.logp_old = std::move(s.logprob);
    traj.logp_ref = sequence_logprob(reference.params, question, traj.tokens);
    traj.format_ok = check_format(traj.tokens, true);
    traj.pivot_span = find_pivot_span(traj.tokens);
    traj.answer = traj.format_ok ? extract_answer(traj.tokens) : std::nullopt;
    return traj;
}

std::optional<std::vector<Token>> extract_pivot(const Trajectory& traj) {
    const auto span = find_pivot_span(traj.tokens);
    if (!span.has_value()) return std::nullopt;
    return std::vector<Token>(traj.tokens.begin() + span->first, traj.tokens.begin() + span->second);
}

std::optional<long long> pivot_rollout(const PolicyParams& params,
                                       std::span<const Token> pivot_question, int max_len) {
    std::vector<Token> context;
    context.reserve(pivot_question.size() * 2 + 2);
    context.insert(context.end(), pivot_question.begin(), pivot_question.end());
    context.push_back(tok::piv_open);
    context.insert(context.end(), pivot_question.begin(), pivot_question.end());
    context.push_back(tok::piv_close);

    Rng unused(0);  // greedy decoding draws nothing
    const std::vector<Token> generated = sample(params, context, max_len, 0.0, unused);
    if (!check_format(generated, false)) return std::nullopt;
    return extract_answer(generated);
}

// ---------------------------------------------------------------------------
// Training loop

SrlResult srl_train(const PolicyParams& start, const PolicySnapshot& reference,
                    const std::vector<RlQuestion>& rl_split, const SrlConfig& cfg,
                    std::uint64_t seed,
                    const std::function<long long(const RlQuestion&)>& gold_lookup,
                    bool keep_audit,
                    const std::function<void(const SrlLogRow&)>& on_step) {
    cfg.validate();
    if (rl_split.empty()) throw std::invalid_argument("srl_train: empty RL split");
    if (reference.role != SnapshotRole::Reference)
        throw std::invalid_argument("srl_train: reference snapshot has wrong role");
    if (cfg.reward_source == RewardSource::GoldAnswer && !gold_lookup)
        throw std::invalid_argument("srl_train: gold-answer reward needs a gold lookup");

    SrlResult res;
    res.params = start;
    AdamState adam = make_adam(start.dims, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    ParamTensors grads = ParamTensors::zeros(start.dims);

    // epoch-shuffled cursor over the RL questions
    std::vector<std::size_t> order(rl_split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = 0;
    int epoch = 0;
    auto reshuffle = [&]() {
        Rng r(derive_seed(seed, 0x0DDE, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
        cursor = 0;
        ++epoch;
    };
    reshuffle();

    for (int step = 0; step < cfg.total_steps; ++step) {
        // old policy = parameters at the start of the step (single inner epoch)
        const PolicyParams old_params = res.params;

        std::vector<const RlQuestion*> questions;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) reshuffle();
            questions.push_back(&rl_split[order[cursor++]]);
        }

        std::vector<Trajectory> batch;
        std::vector<double> terminal_f;
        int n_pivot_fail = 0, n_pc_tc = 0, n_pc_tf = 0, n_with_gold = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const RlQuestion& q = *questions[static_cast<std::size_t>(b)];
            for (int k = 0; k < cfg.rollouts_per_question; ++k) {
                Rng rng(derive_seed(seed, 0x5A3 + static_cast<std::uint64_t>(step),
                                    static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(k)));
                Trajectory traj = rollout(old_params, reference, q.question_tokens,
                                          cfg.temperature, cfg.max_gen_len, rng);

                std::optional<long long> a_en;
                if (const auto piv = extract_pivot(traj); piv.has_value())
                    a_en = pivot_rollout(old_params, *piv, cfg.max_gen_len);

                // Reward: a function of the two answers only (self-pivot) or of
                // the target answer and the gold value (gold-answer mode).
                double F;
                if (cfg.reward_source == RewardSource::SelfPivot) {
                    F = f_reward(traj.answer, a_en);
                } else {
                    F = gold_reward(traj.answer, gold_lookup(q));
                }
                terminal_f.push_back(F);

                if (gold_lookup) {  // diagnostics only; not part of the reward path
                    const long long gold = gold_lookup(q);
                    const bool pivot_ok = a_en.has_value() && *a_en == gold;
                    const bool target_ok = traj.answer.has_value() && *traj.answer == gold;
                    if (!pivot_ok) ++n_pivot_fail;
                    if (pivot_ok && target_ok) ++n_pc_tc;
                    if (pivot_ok && !target_ok) ++n_pc_tf;
                    ++n_with_gold;
                }
                if (keep_audit) {
                    res.audit.push_back(SrlEpisodeAudit{step, q.lang_index, q.problem_seed,
                                                        traj.answer, a_en, F, traj.format_ok});
                }
                batch.push_back(std::move(traj));
            }
        }

        SrlLogRow row;
        row.step = step;
        const std::size_t n_eps = terminal_f.size();
        for (double f : terminal_f) row.mean_reward += f;
        row.mean_reward /= static_cast<double>(n_eps);
        if (n_with_gold > 0) {
            row.pivot_fail = static_cast<double>(n_pivot_fail) / n_with_gold;
            row.pivot_correct_target_correct = static_cast<double>(n_pc_tc) / n_with_gold;
            row.pivot_correct_target_fail = static_cast<double>(n_pc_tf) / n_with_gold;
        }

        const bool all_format_error =
            std::none_of(batch.begin(), batch.end(), [](const Trajectory& t) { return t.format_ok; });
        if (all_format_error) {
            row.skipped = true;
            std::cerr << "srl_train: step " << step
                      << ": every rollout failed the format check; skipping update\n";
            res.log.push_back(row);
            if (on_step) on_step(row);
            continue;
        }

        // rewards -> returns -> pooled normalized advantages
        std::vector<std::vector<double>> adv(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const Trajectory& traj = batch[i];
            const std::vector<double> kl = kl_terms(traj);
            const std::span<const double> kl_nonterminal(kl.data(), kl.empty() ? 0 : kl.size() - 1);
            const std::vector<double> R =
                token_rewards(terminal_f[i], kl_nonterminal, cfg.beta, cfg.reward_spread);
            adv[i] = returns(R, cfg.gamma, cfg.return_convention);
        }
        normalize_advantages(adv);

        grads.set_zero();
        ClipResult clip;
        try {
            clip = clip_objective(res.params, batch, adv, cfg.epsilon, &grads);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("SRL training diverged at step " + std::to_string(step) +
                                     ": " + e.what());
        }
        // Adam minimizes; grads hold the ascent direction.
        for (auto ref : grads.tensors())
            for (double& g : *ref.data) g = -g;
        adam_step(res.params, grads, adam);
        if (!res.params.all_finite())
            throw std::runtime_error("SRL training diverged at step " + std::to_string(step) +
                                     ": non-finite parameters");

        row.mean_kl = clip.mean_kl;
        row.clip_fraction = clip.clip_fraction;
        row.objective = clip.objective;
        res.log.push_back(row);
        if (on_step) on_step(row);
    }
    return res;
}

}  // namespace pasmr
