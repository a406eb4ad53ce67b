#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pasmr/corpus.hpp"
#include "pasmr/model.hpp"

namespace pasmr {

enum class RewardSpread { PaperLiteral, TerminalOnly };
enum class ReturnConvention { PaperLiteral, Inclusive };
enum class RewardSource { SelfPivot, GoldAnswer };

std::string to_string(RewardSpread v);
std::string to_string(ReturnConvention v);
std::string to_string(RewardSource v);
RewardSpread reward_spread_from_string(const std::string& s);
ReturnConvention return_convention_from_string(const std::string& s);
RewardSource reward_source_from_string(const std::string& s);

struct SrlConfig {
    double beta = 0.01;
    double gamma = 0.99;
    double epsilon = 0.2;
    RewardSpread reward_spread = RewardSpread::PaperLiteral;
    ReturnConvention return_convention = ReturnConvention::PaperLiteral;
    RewardSource reward_source = RewardSource::SelfPivot;
    int rollouts_per_question = 4;
    double temperature = 0.7;
    int batch_size = 32;
    int total_steps = 300;
    int max_gen_len = 64;
    double lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

/// One sampled generation [Q_En, A_T] for a target-language question, with
/// per-token log-probabilities under the current, old, and reference policies.
struct Trajectory {
    std::vector<Token> prompt;
    std::vector<Token> tokens;                        // a_1..a_L
    std::vector<double> logp_cur;                     // under the sampling policy
    std::vector<double> logp_old;                     // snapshot at sampling time
    std::vector<double> logp_ref;                     // frozen PAM policy
    std::optional<std::pair<int, int>> pivot_span;    // [begin, end) inside tokens
    std::optional<long long> answer;                  // parsed A_T; empty on format error
    bool format_ok = false;
};

struct RewardTrace {
    double F = 0.0;                 // terminal consistency value: 1, 0.1, or 0
    std::vector<double> kl;         // per token
    std::vector<double> rewards;    // R_1..R_L
    std::vector<double> returns;    // G_1..G_L
    std::vector<double> advantages; // batch-normalized
};

// --- reward pieces ---------------------------------------------------------

/// 1 on equal answers, 0.1 on differing answers, 0 on a format error in
/// either answer (a missing value means format error).
double f_reward(std::optional<long long> a_t, std::optional<long long> a_en);

/// Same constants against the gold answer.
double gold_reward(std::optional<long long> a_t, long long gold_answer);

/// Sampled-token log-ratio log(pi_theta(a_i) / pi_pam(a_i)) per token.
std::vector<double> kl_terms(const Trajectory& traj);
double kl_term(const Trajectory& traj, int i);

/// Token-wise rewards from the terminal value F and the non-terminal KL
/// terms (kl_nonterminal has L-1 entries; the result has L).
std::vector<double> token_rewards(double F, std::span<const double> kl_nonterminal, double beta,
                                  RewardSpread spread);

/// Discounted returns. PaperLiteral sums k from i+1 (so G_L = 0); Inclusive
/// sums k from i. Backward recursion, exact match with direct summation.
std::vector<double> returns(std::span<const double> rewards, double gamma,
                            ReturnConvention convention);

/// Pooled batch normalization: subtract the global mean over every token of
/// every trajectory, divide by the global population std (+1e-8). In place.
void normalize_advantages(std::vector<std::vector<double>>& returns_batch);

/// min(r*adv, clip(r, 1-eps, 1+eps)*adv) for one token.
double clip_term(double ratio, double advantage, double epsilon);

struct ClipResult {
    double objective = 0.0;      // mean over tokens, to be maximized
    double clip_fraction = 0.0;  // tokens where clipping bit
    double mean_kl = 0.0;        // mean sampled-token log-ratio vs reference
};

/// Clipped surrogate objective over a trajectory batch; gradients of the
/// objective (ascent direction) are accumulated into grads when non-null.
/// Ratios are computed in log space with a clamped difference, so they stay
/// finite. Gradients flow only through the current-policy log-probs.
ClipResult clip_objective(const PolicyParams& params, std::span<const Trajectory> batch,
                          const std::vector<std::vector<double>>& advantages, double epsilon,
                          ParamTensors* grads);

// --- rollouts ---------------------------------------------------------------

/// Samples tau = [Q_En, A_T] from the policy and fills log-probs (current =
/// old at collection time) plus reference log-probs under the frozen PAM
/// snapshot. Malformed generations are carried with format_ok = false.
Trajectory rollout(const PolicyParams& params, const PolicySnapshot& reference,
                   std::span<const Token> question, double temperature, int max_len, Rng& rng);

/// Tokens strictly between the pivot delimiters; empty on missing,
/// duplicated, or inverted delimiters. An empty span is valid.
std::optional<std::vector<Token>> extract_pivot(const Trajectory& traj);

/// Greedy answer for an extracted pivot question: the prompt is wrapped the
/// way PAM formats pivot-language items (Q <piv> Q </piv>), then decoded.
std::optional<long long> pivot_rollout(const PolicyParams& params,
                                       std::span<const Token> pivot_question, int max_len);

// --- training loop -----------------------------------------------------------

struct SrlLogRow {
    int step = 0;
    double mean_reward = 0.0;  // mean terminal F over the step's episodes
    double pivot_fail = 0.0;
    double pivot_correct_target_correct = 0.0;
    double pivot_correct_target_fail = 0.0;
    double mean_kl = 0.0;
    double clip_fraction = 0.0;
    double objective = 0.0;
    bool skipped = false;  // all-format-error batch
};

/// Audit record per episode; lets the reward be recomputed from answers alone.
struct SrlEpisodeAudit {
    int step = 0;
    int lang_index = 0;
    std::uint64_t problem_seed = 0;
    std::optional<long long> a_t;
    std::optional<long long> a_en;
    double F = 0.0;
    bool format_ok = false;
};

struct SrlResult {
    PolicyParams params;
    std::vector<SrlLogRow> log;
    std::vector<SrlEpisodeAudit> audit;  // filled when cfg asks for it
};

/// Self-feedback RL loop. Gold answers never enter the reward path; the
/// gold_lookup hook is used only for the diagnostic rates in the log (and is
/// what gold-answer reward mode uses when selected).
SrlResult srl_train(const PolicyParams& start, const PolicySnapshot& reference,
                    const std::vector<RlQuestion>& rl_split, const SrlConfig& cfg,
                    std::uint64_t seed,
                    const std::function<long long(const RlQuestion&)>& gold_lookup,
                    bool keep_audit = false,
                    const std::function<void(const SrlLogRow&)>& on_step = {});

}  // namespace pasmr
