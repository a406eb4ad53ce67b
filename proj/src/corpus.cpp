#include "pasmr/corpus.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "pasmr/rng.hpp"

namespace pasmr {

namespace {

long long apply_op(long long v, OpKind op, long long b) {
    switch (op) {
        case OpKind::Add: return v + b;
        case OpKind::Sub: return v - b;
        case OpKind::Mul: return v * b;
    }
    return 0;
}

bool op_valid(long long v, OpKind op, long long b, long long cap) {
    const long long r = apply_op(v, op, b);
    return r >= 0 && r <= cap;
}

}  // namespace

void CorpusConfig::validate() const {
    if (per_language_budget <= 0 || per_language_budget % 2 != 0)
        throw std::invalid_argument("corpus: per_language_budget must be positive and even");
    if (n_heldout <= 0) throw std::invalid_argument("corpus: n_heldout must be positive");
    auto check_range = [](int lo, int hi, int cap, const char* what) {
        if (lo < 0 || hi < lo) throw std::invalid_argument(std::string("corpus: bad ") + what + " operand range");
        // cap >= 2*hi guarantees every intermediate value admits at least one operator
        if (cap < 2 * hi) throw std::invalid_argument(std::string("corpus: ") + what + " value cap must be >= 2 * operand max");
    };
    check_range(operand_min, operand_max, value_cap, "in-domain");
    check_range(ood_operand_min, ood_operand_max, ood_value_cap, "ood");
}

long long eval_chain(const std::vector<int>& operands, const std::vector<OpKind>& ops) {
    if (operands.size() < 2 || ops.size() != operands.size() - 1)
        throw std::invalid_argument("eval_chain: need n operands and n-1 operators");
    long long v = operands[0];
    for (std::size_t k = 0; k < ops.size(); ++k) v = apply_op(v, ops[k], operands[k + 1]);
    return v;
}

Problem gen_problem(std::uint64_t rng_seed, const CorpusConfig& cfg) {
    return gen_problem(rng_seed, cfg, cfg.ood_flag);
}

Problem gen_problem(std::uint64_t rng_seed, const CorpusConfig& cfg, bool ood) {
    const int lo = ood ? cfg.ood_operand_min : cfg.operand_min;
    const int hi = ood ? cfg.ood_operand_max : cfg.operand_max;
    const long long cap = ood ? cfg.ood_value_cap : cfg.value_cap;

    Rng rng(rng_seed);
    Problem p;
    p.seed = rng_seed;
    p.ood = ood;
    const int count = 2 + static_cast<int>(rng.below(2));
    p.operands.resize(count);
    for (int i = 0; i < count; ++i)
        p.operands[i] = static_cast<int>(rng.uniform_int(lo, hi));

    long long v = p.operands[0];
    for (int k = 0; k + 1 < count; ++k) {
        OpKind valid[3];
        int n_valid = 0;
        for (OpKind op : {OpKind::Add, OpKind::Sub, OpKind::Mul})
            if (op_valid(v, op, p.operands[k + 1], cap)) valid[n_valid++] = op;
        // cap >= 2*operand_max (validated) means add or sub is always available
        const OpKind chosen = valid[rng.below(static_cast<std::uint64_t>(n_valid))];
        p.ops.push_back(chosen);
        p.op_synonyms.push_back(
            static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.world.n_op_synonyms))));
        v = apply_op(v, chosen, p.operands[k + 1]);
    }
    p.gold_answer = v;

    const std::size_t n_templates = ood ? 2 : 3;
    p.template_id = static_cast<int>(rng.below(n_templates));
    p.filler_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.world.n_fillers)));
    p.name_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.world.n_names)));
    return p;
}

std::vector<Token> digit_tokens(long long value) {
    if (value < 0) throw std::invalid_argument("digit_tokens: negative value");
    std::vector<Token> out;
    if (value == 0) {
        out.push_back(tok::digit(0));
        return out;
    }
    Token buf[20];
    int n = 0;
    while (value > 0) {
        buf[n++] = tok::digit(static_cast<int>(value % 10));
        value /= 10;
    }
    for (int i = n - 1; i >= 0; --i) out.push_back(buf[i]);
    return out;
}

namespace {

void append_digits(std::vector<Token>& out, long long value) {
    for (Token t : digit_tokens(value)) out.push_back(t);
}

// ones digit first; the worked steps write intermediate values this way so
// each digit depends only on the matching input digits and a carry
void append_digits_lsd(std::vector<Token>& out, long long value) {
    const std::vector<Token> d = digit_tokens(value);
    out.insert(out.end(), d.rbegin(), d.rend());
}

std::vector<Token> render_question(const Problem& p, const World& w, int lang_index) {
    const auto& templates = p.ood ? w.ood_templates : w.templates;
    const auto& arrangement = p.ood ? w.ood_arrangement : w.arrangement;
    const QuestionTemplate& tpl = templates[static_cast<std::size_t>(p.template_id)];
    const std::vector<int>& order = arrangement[lang_index][static_cast<std::size_t>(p.template_id)];
    const int n_ops = static_cast<int>(p.ops.size());

    std::vector<Token> out;
    for (int slot_index : order) {
        const Slot& s = tpl.slots[static_cast<std::size_t>(slot_index)];
        switch (s.kind) {
            case SlotKind::Word:
                out.push_back(w.surface(lang_index, w.word_concept(static_cast<CoreWord>(s.arg))));
                break;
            case SlotKind::Name:
                out.push_back(w.surface(lang_index, w.name_concept(p.name_id)));
                break;
            case SlotKind::Filler:
                out.push_back(w.surface(lang_index, w.filler_concept(p.filler_id)));
                break;
            case SlotKind::Num:
                if (s.arg < static_cast<int>(p.operands.size()))
                    append_digits(out, p.operands[static_cast<std::size_t>(s.arg)]);
                break;
            case SlotKind::Op:
                if (s.arg < n_ops)
                    out.push_back(w.surface(
                        lang_index, w.op_concept(p.ops[static_cast<std::size_t>(s.arg)],
                                                 p.op_synonyms[static_cast<std::size_t>(s.arg)])));
                break;
        }
    }
    return out;
}

// Chain-of-thought: one "x op y = z ;" step per operator, ending with the
// marker and the gold digits. The step restates the operator in its canonical
// surface form (synonym 0), the way a worked solution normalizes wording, and
// writes the step result ones-digit-first; the final answer after the marker
// is in normal reading order.
std::vector<Token> render_answer(const Problem& p, const World& w, int lang_index) {
    std::vector<Token> out;
    long long v = p.operands[0];
    for (std::size_t k = 0; k < p.ops.size(); ++k) {
        const long long next = apply_op(v, p.ops[k], p.operands[k + 1]);
        append_digits(out, v);
        out.push_back(w.surface(lang_index, w.op_concept(p.ops[k], 0)));
        append_digits(out, p.operands[k + 1]);
        out.push_back(w.surface(lang_index, w.eq_concept()));
        append_digits_lsd(out, next);
        out.push_back(tok::sep);
        v = next;
    }
    out.push_back(tok::answer_marker);
    append_digits(out, p.gold_answer);
    return out;
}

}  // namespace

RenderedExample render(const Problem& p, const World& w, int lang_index) {
    if (lang_index < 0 || lang_index >= static_cast<int>(w.languages.size()))
        throw std::invalid_argument("render: unknown language index");
    RenderedExample ex;
    ex.lang_index = lang_index;
    ex.question_tokens = render_question(p, w, lang_index);
    ex.pivot_question_tokens = render_question(p, w, w.pivot_index);
    ex.answer_tokens = render_answer(p, w, lang_index);
    ex.gold_answer = p.gold_answer;
    ex.problem_seed = p.seed;
    return ex;
}

std::vector<Token> assemble_target(const RenderedExample& ex) {
    std::vector<Token> t;
    t.reserve(ex.pivot_question_tokens.size() + ex.answer_tokens.size() + 3);
    t.push_back(tok::piv_open);
    t.insert(t.end(), ex.pivot_question_tokens.begin(), ex.pivot_question_tokens.end());
    t.push_back(tok::piv_close);
    t.insert(t.end(), ex.answer_tokens.begin(), ex.answer_tokens.end());
    t.push_back(tok::eos);
    return t;
}

CorpusSplits build_corpus(const CorpusConfig& cfg, const World& w, std::uint64_t run_seed) {
    cfg.validate();
    const std::uint64_t base = derive_seed(run_seed, 0xC0B5, cfg.split_seed, cfg.ood_flag ? 1 : 0);
    const int half = cfg.per_language_budget / 2;

    // One problem pool per split, shared across languages; low-resource
    // languages see a prefix of the SFT pool.
    std::vector<Problem> sft_pool(static_cast<std::size_t>(half));
    std::vector<Problem> rl_pool(static_cast<std::size_t>(half));
    std::vector<Problem> held_pool(static_cast<std::size_t>(cfg.n_heldout));
    for (int i = 0; i < half; ++i)
        sft_pool[static_cast<std::size_t>(i)] =
            gen_problem(derive_seed(base, 1, static_cast<std::uint64_t>(i)), cfg);
    for (int i = 0; i < half; ++i)
        rl_pool[static_cast<std::size_t>(i)] =
            gen_problem(derive_seed(base, 2, static_cast<std::uint64_t>(i)), cfg);
    for (int i = 0; i < cfg.n_heldout; ++i)
        held_pool[static_cast<std::size_t>(i)] =
            gen_problem(derive_seed(base, 3, static_cast<std::uint64_t>(i)), cfg);

    CorpusSplits out;
    for (const auto& lang : w.languages) {
        const int sft_count = static_cast<int>(lang.resource_level * half);
        for (int i = 0; i < sft_count; ++i)
            out.sft.push_back(render(sft_pool[static_cast<std::size_t>(i)], w, lang.index));
        for (const auto& p : rl_pool) {
            RlQuestion q;
            q.lang_index = lang.index;
            q.question_tokens = render_question(p, w, lang.index);
            q.problem_seed = p.seed;
            out.rl.push_back(std::move(q));
        }
        for (const auto& p : held_pool)
            out.heldout.push_back(render(p, w, lang.index));
    }
    return out;
}

bool check_answer_correct(const RenderedExample& ex) {
    const auto parsed = extract_answer(ex.answer_tokens);
    return parsed.has_value() && *parsed == ex.gold_answer;
}

bool check_language_consistency(std::span<const Token> seq, int lang_index, const World& w) {
    for (Token t : seq)
        if (!w.is_shared(t) && !w.token_in_language(t, lang_index)) return false;
    return true;
}

std::optional<std::pair<int, int>> find_pivot_span(std::span<const Token> seq) {
    int open = -1, close = -1;
    for (int i = 0; i < static_cast<int>(seq.size()); ++i) {
        if (seq[static_cast<std::size_t>(i)] == tok::piv_open) {
            if (open != -1) return std::nullopt;  // duplicated
            open = i;
        } else if (seq[static_cast<std::size_t>(i)] == tok::piv_close) {
            if (close != -1) return std::nullopt;
            close = i;
        }
    }
    if (open == -1 || close == -1 || close < open) return std::nullopt;
    return std::make_pair(open + 1, close);
}

std::optional<long long> extract_answer(std::span<const Token> seq) {
    // strip one trailing <eos> if present
    std::size_t end = seq.size();
    while (end > 0 && seq[end - 1] == tok::eos) --end;
    int marker = -1;
    for (std::size_t i = 0; i < end; ++i)
        if (seq[i] == tok::answer_marker) marker = static_cast<int>(i);
    if (marker < 0) return std::nullopt;
    const std::size_t first = static_cast<std::size_t>(marker) + 1;
    if (first >= end) return std::nullopt;
    long long value = 0;
    for (std::size_t i = first; i < end; ++i) {
        if (!tok::is_digit(seq[i])) return std::nullopt;
        if (value > (std::numeric_limits<long long>::max() - 9) / 10)
            return std::nullopt;  // overlong digit runs are malformed
        value = value * 10 + tok::digit_value(seq[i]);
    }
    return value;
}

bool check_format(std::span<const Token> seq, bool expect_pivot_span) {
    std::size_t end = seq.size();
    while (end > 0 && seq[end - 1] == tok::eos) --end;
    for (std::size_t i = 0; i < end; ++i)
        if (seq[i] == tok::eos) return false;  // interior <eos>

    if (expect_pivot_span) {
        if (!find_pivot_span(seq.first(end)).has_value()) return false;
    }
    int markers = 0;
    for (std::size_t i = 0; i < end; ++i)
        if (seq[i] == tok::answer_marker) ++markers;
    if (markers != 1) return false;
    return extract_answer(seq).has_value();
}

FilterResult filter_corpus(const std::vector<RenderedExample>& examples, const World& w) {
    FilterResult res;
    res.counts.input = examples.size();
    for (const auto& ex : examples) {
        const bool ok_answer = check_answer_correct(ex);
        const bool ok_language =
            check_language_consistency(ex.question_tokens, ex.lang_index, w) &&
            check_language_consistency(ex.answer_tokens, ex.lang_index, w) &&
            check_language_consistency(ex.pivot_question_tokens, w.pivot_index, w);
        const bool ok_format = check_format(assemble_target(ex), true);
        if (!ok_answer) ++res.counts.bad_answer;
        if (!ok_language) ++res.counts.bad_language;
        if (!ok_format) ++res.counts.bad_format;
        if (ok_answer && ok_language && ok_format) res.retained.push_back(ex);
    }
    res.counts.retained = res.retained.size();
    return res;
}

}  // namespace pasmr
