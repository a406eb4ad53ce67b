#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pasmr/vocab.hpp"

namespace pasmr {

struct CorpusConfig {
    WorldConfig world;
    int per_language_budget = 2048;  // N; split evenly between SFT and RL
    int n_heldout = 256;             // per language, disjoint from both splits
    int operand_min = 2;
    int operand_max = 20;
    int value_cap = 40;  // every intermediate and final value stays in [0, cap]
    int ood_operand_min = 10;
    int ood_operand_max = 50;
    int ood_value_cap = 999;
    bool ood_flag = false;
    std::uint64_t split_seed = 1;

    void validate() const;  // throws invalid_argument
};

/// Left-to-right chain expression: ((operands[0] op[0] operands[1]) op[1] ...).
struct Problem {
    std::vector<int> operands;     // 2 or 3 values
    std::vector<OpKind> ops;       // operands.size() - 1
    std::vector<int> op_synonyms;  // surface synonym per op slot
    int template_id = 0;
    int filler_id = 0;
    int name_id = 0;
    bool ood = false;
    long long gold_answer = 0;
    std::uint64_t seed = 0;
};

struct RenderedExample {
    int lang_index = 0;
    std::vector<Token> question_tokens;        // Q_T
    std::vector<Token> pivot_question_tokens;  // Q_En
    std::vector<Token> answer_tokens;          // chain-of-thought + "####" + digits
    long long gold_answer = 0;
    std::uint64_t problem_seed = 0;
};

/// RL-stage record: the question alone. Gold answers never ride along here.
struct RlQuestion {
    int lang_index = 0;
    std::vector<Token> question_tokens;
    std::uint64_t problem_seed = 0;
};

struct CorpusSplits {
    std::vector<RenderedExample> sft;
    std::vector<RlQuestion> rl;
    std::vector<RenderedExample> heldout;
};

long long eval_chain(const std::vector<int>& operands, const std::vector<OpKind>& ops);

Problem gen_problem(std::uint64_t rng_seed, const CorpusConfig& cfg);
Problem gen_problem(std::uint64_t rng_seed, const CorpusConfig& cfg, bool ood);

std::vector<Token> digit_tokens(long long value);

RenderedExample render(const Problem& p, const World& w, int lang_index);

/// Prompt-side target of one supervised example:
/// <piv> Q_En </piv> A_T <eos>.
std::vector<Token> assemble_target(const RenderedExample& ex);

CorpusSplits build_corpus(const CorpusConfig& cfg, const World& w, std::uint64_t run_seed);

// Rule-based filter predicates.
bool check_answer_correct(const RenderedExample& ex);
bool check_language_consistency(std::span<const Token> seq, int lang_index, const World& w);
bool check_format(std::span<const Token> seq, bool expect_pivot_span);

/// Exactly one well-nested <piv>...</piv>; returns [begin, end) of the inner span.
std::optional<std::pair<int, int>> find_pivot_span(std::span<const Token> seq);

/// Digits after the final "####" (up to <eos>), numerically parsed.
std::optional<long long> extract_answer(std::span<const Token> seq);

struct FilterCounts {
    std::size_t input = 0;
    std::size_t retained = 0;
    std::size_t bad_answer = 0;
    std::size_t bad_language = 0;
    std::size_t bad_format = 0;
};

struct FilterResult {
    std::vector<RenderedExample> retained;
    FilterCounts counts;
};

FilterResult filter_corpus(const std::vector<RenderedExample>& examples, const World& w);

}  // namespace pasmr
