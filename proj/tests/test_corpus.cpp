#include <algorithm>
#include <set>

#include <doctest.h>

#include "pasmr/corpus.hpp"
#include "pasmr/rng.hpp"

using namespace pasmr;

namespace {

CorpusConfig small_config() {
    CorpusConfig c;
    c.per_language_budget = 64;
    c.n_heldout = 16;
    return c;
}

World small_world() { return build_world(small_config().world, 2024); }

}  // namespace

TEST_CASE("world: surface maps are bijective and disjoint, one pivot") {
    const World w = small_world();
    std::set<Token> seen;
    for (const auto& lang : w.languages)
        for (int c = 0; c < w.concepts_per_language; ++c) {
            const Token t = w.surface(lang.index, c);
            CHECK(t >= tok::shared_count);
            CHECK(seen.insert(t).second);  // no collisions anywhere
        }
    CHECK(static_cast<Token>(seen.size()) + tok::shared_count == w.vocab_size);

    int pivots = 0;
    for (const auto& lang : w.languages)
        if (lang.is_pivot) {
            ++pivots;
            CHECK(lang.resource_level == 1.0);
        }
    CHECK(pivots == 1);

    const auto strings = vocab_strings(w);
    CHECK(static_cast<Token>(strings.size()) == w.vocab_size);
    std::set<std::string> unique(strings.begin(), strings.end());
    CHECK(unique.size() == strings.size());
}

TEST_CASE("eval_chain evaluates left to right") {
    CHECK(eval_chain({3, 4}, {OpKind::Add}) == 7);
    CHECK(eval_chain({5, 6, 2}, {OpKind::Mul, OpKind::Sub}) == 28);  // (5*6)-2
    CHECK(eval_chain({10, 3, 2}, {OpKind::Sub, OpKind::Mul}) == 14); // (10-3)*2
    CHECK_THROWS(eval_chain({3}, {}));
}

TEST_CASE("gen_problem: deterministic, bounded, gold exact") {
    const CorpusConfig cfg = small_config();
    for (std::uint64_t seed : {1ull, 99ull, 12345ull}) {
        const Problem a = gen_problem(seed, cfg);
        const Problem b = gen_problem(seed, cfg);
        CHECK(a.operands == b.operands);
        CHECK(a.ops == b.ops);
        CHECK(a.template_id == b.template_id);
        CHECK(a.gold_answer == b.gold_answer);
    }
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const Problem p = gen_problem(seed, cfg);
        CHECK(p.operands.size() >= 2);
        CHECK(p.operands.size() <= 3);
        for (int v : p.operands) {
            CHECK(v >= cfg.operand_min);
            CHECK(v <= cfg.operand_max);
        }
        CHECK(p.gold_answer == eval_chain(p.operands, p.ops));
        CHECK(p.gold_answer >= 0);
        CHECK(p.gold_answer <= cfg.value_cap);
        // every intermediate stays within the cap too
        long long v = p.operands[0];
        for (std::size_t k = 0; k < p.ops.size(); ++k) {
            v = eval_chain({static_cast<int>(v), p.operands[k + 1]}, {p.ops[k]});
            CHECK(v >= 0);
            CHECK(v <= cfg.value_cap);
        }
    }
    // OOD variant uses its own ranges
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const Problem p = gen_problem(seed, cfg, true);
        for (int v : p.operands) {
            CHECK(v >= cfg.ood_operand_min);
            CHECK(v <= cfg.ood_operand_max);
        }
        CHECK(p.gold_answer <= cfg.ood_value_cap);
    }
}

TEST_CASE("render: pivot renders to itself; languages share only shared symbols") {
    const CorpusConfig cfg = small_config();
    const World w = small_world();
    const Problem p = gen_problem(77, cfg);

    const RenderedExample pivot_ex = render(p, w, w.pivot_index);
    CHECK(pivot_ex.question_tokens == pivot_ex.pivot_question_tokens);

    const RenderedExample e3 = render(p, w, 3);
    const RenderedExample e4 = render(p, w, 4);
    std::set<Token> t3(e3.question_tokens.begin(), e3.question_tokens.end());
    for (Token t : e4.question_tokens)
        if (t3.count(t)) CHECK(t < tok::shared_count);

    // answer digits after the marker are identical across languages
    auto digits_after_marker = [](const std::vector<Token>& a) {
        auto it = std::find(a.rbegin(), a.rend(), tok::answer_marker);
        REQUIRE(it != a.rend());
        return std::vector<Token>(it.base(), a.end());
    };
    for (int lang = 0; lang < 6; ++lang) {
        const RenderedExample ex = render(p, w, lang);
        CHECK(digits_after_marker(ex.answer_tokens) == digits_after_marker(e3.answer_tokens));
        CHECK(extract_answer(ex.answer_tokens) == p.gold_answer);
    }
    CHECK_THROWS(render(p, w, 17));
}

TEST_CASE("render is deterministic and satisfies its invariants") {
    const CorpusConfig cfg = small_config();
    const World w = small_world();
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        const Problem p = gen_problem(seed, cfg);
        for (const auto& lang : w.languages) {
            const RenderedExample a = render(p, w, lang.index);
            const RenderedExample b = render(p, w, lang.index);
            CHECK(a.question_tokens == b.question_tokens);
            CHECK(a.answer_tokens == b.answer_tokens);
            CHECK(check_answer_correct(a));
            CHECK(check_language_consistency(a.question_tokens, lang.index, w));
            CHECK(check_language_consistency(a.answer_tokens, lang.index, w));
            CHECK(check_format(assemble_target(a), true));
        }
    }
}

TEST_CASE("check_answer_correct on malformed sequences") {
    const World w = small_world();
    const Problem p = gen_problem(5, small_config());
    RenderedExample ex = render(p, w, 1);
    CHECK(check_answer_correct(ex));

    RenderedExample wrong = ex;
    wrong.answer_tokens.back() = tok::digit((tok::digit_value(wrong.answer_tokens.back()) + 1) % 10);
    CHECK_FALSE(check_answer_correct(wrong));

    RenderedExample no_marker = ex;
    std::erase(no_marker.answer_tokens, tok::answer_marker);
    CHECK_FALSE(check_answer_correct(no_marker));
}

TEST_CASE("check_language_consistency") {
    const World w = small_world();
    std::vector<Token> pure = {w.surface(3, 0), w.surface(3, 5), tok::digit(7)};
    CHECK(check_language_consistency(pure, 3, w));
    std::vector<Token> mixed = pure;
    mixed.push_back(w.surface(4, 0));
    CHECK_FALSE(check_language_consistency(mixed, 3, w));
    std::vector<Token> shared_only = {tok::digit(1), tok::answer_marker, tok::digit(2)};
    CHECK(check_language_consistency(shared_only, 3, w));
    CHECK(check_language_consistency(shared_only, 0, w));
}

TEST_CASE("check_format cases") {
    const World w = small_world();
    const Token word = w.surface(1, 0);
    // <piv> q </piv> cot #### 7 <eos>
    std::vector<Token> good = {tok::piv_open, word, tok::piv_close,
                               word, tok::answer_marker, tok::digit(7), tok::eos};
    CHECK(check_format(good, true));

    std::vector<Token> missing_close = {tok::piv_open, word, word, tok::answer_marker,
                                        tok::digit(7), tok::eos};
    CHECK_FALSE(check_format(missing_close, true));

    std::vector<Token> two_markers = good;
    two_markers.insert(two_markers.begin() + 3, tok::answer_marker);
    two_markers.insert(two_markers.begin() + 4, tok::digit(1));
    CHECK_FALSE(check_format(two_markers, true));

    std::vector<Token> no_digits = {tok::piv_open, word, tok::piv_close, tok::answer_marker,
                                    tok::eos};
    CHECK_FALSE(check_format(no_digits, true));

    std::vector<Token> inverted = {tok::piv_close, word, tok::piv_open, tok::answer_marker,
                                   tok::digit(7), tok::eos};
    CHECK_FALSE(check_format(inverted, true));

    // span not required
    std::vector<Token> bare = {word, tok::answer_marker, tok::digit(7), tok::eos};
    CHECK(check_format(bare, false));
    CHECK_FALSE(check_format(bare, true));
}

TEST_CASE("extract_answer") {
    std::vector<Token> seq = {tok::answer_marker, tok::digit(2), tok::digit(8), tok::eos};
    CHECK(extract_answer(seq) == 28);
    std::vector<Token> empty_digits = {tok::answer_marker, tok::eos};
    CHECK_FALSE(extract_answer(empty_digits).has_value());
    std::vector<Token> leading_zero = {tok::answer_marker, tok::digit(0), tok::digit(7)};
    CHECK(extract_answer(leading_zero) == 7);
    std::vector<Token> junk_after = {tok::answer_marker, tok::digit(1), tok::sep};
    CHECK_FALSE(extract_answer(junk_after).has_value());
    std::vector<Token> no_marker = {tok::digit(1), tok::digit(2)};
    CHECK_FALSE(extract_answer(no_marker).has_value());
}

TEST_CASE("build_corpus: split sizes, budgets, disjoint seeds") {
    CorpusConfig cfg;  // full-size defaults: N=2048
    const World w = build_world(cfg.world, 1);
    const CorpusSplits s = build_corpus(cfg, w, 9);

    // per-language SFT counts
    std::vector<int> sft_count(w.languages.size(), 0);
    for (const auto& ex : s.sft) ++sft_count[static_cast<std::size_t>(ex.lang_index)];
    for (const auto& lang : w.languages) {
        const int expected = static_cast<int>(lang.resource_level * 1024);
        CHECK(sft_count[static_cast<std::size_t>(lang.index)] == expected);
        if (lang.resource_level < 1.0) {
            CHECK(expected == 153);  // floor(0.15 * 1024)
            CHECK(expected < 1024);
        }
    }

    std::vector<int> rl_count(w.languages.size(), 0);
    for (const auto& q : s.rl) ++rl_count[static_cast<std::size_t>(q.lang_index)];
    for (int c : rl_count) CHECK(c == 1024);

    std::set<std::uint64_t> train_seeds;
    for (const auto& ex : s.sft) train_seeds.insert(ex.problem_seed);
    for (const auto& q : s.rl) train_seeds.insert(q.problem_seed);
    for (const auto& ex : s.heldout) CHECK(train_seeds.count(ex.problem_seed) == 0);
}

TEST_CASE("filter_corpus: clean corpus fully retained; injected defects removed") {
    const CorpusConfig cfg = small_config();
    const World w = small_world();
    const CorpusSplits s = build_corpus(cfg, w, 5);

    const FilterResult clean = filter_corpus(s.sft, w);
    CHECK(clean.counts.retained == clean.counts.input);
    CHECK(clean.counts.bad_answer == 0);
    CHECK(clean.counts.bad_language == 0);
    CHECK(clean.counts.bad_format == 0);

    // retained examples re-pass the filter
    const FilterResult again = filter_corpus(clean.retained, w);
    CHECK(again.counts.retained == clean.counts.retained);

    const FilterResult empty = filter_corpus({}, w);
    CHECK(empty.counts.input == 0);
    CHECK(empty.retained.empty());

    // inject k corrupted examples, each with one defect; exactly k removed
    std::vector<RenderedExample> corpus = s.sft;
    const std::size_t k = 12;
    Rng rng(17);
    for (std::size_t i = 0; i < k; ++i) {
        RenderedExample ex = s.sft[rng.below(s.sft.size())];
        switch (i % 3) {
            case 0:  // wrong answer digits
                ex.answer_tokens.back() =
                    tok::digit((tok::digit_value(ex.answer_tokens.back()) + 3) % 10);
                break;
            case 1: {  // one token from another language's vocabulary
                for (auto& t : ex.question_tokens)
                    if (!w.is_shared(t)) {
                        const int other = (ex.lang_index + 1) % static_cast<int>(w.languages.size());
                        t = w.surface(other, 0);
                        break;
                    }
                break;
            }
            case 2:  // duplicated marker breaks the format only
                ex.answer_tokens.insert(ex.answer_tokens.begin(), tok::digit(1));
                ex.answer_tokens.insert(ex.answer_tokens.begin(), tok::answer_marker);
                break;
        }
        corpus.push_back(ex);
    }
    const FilterResult dirty = filter_corpus(corpus, w);
    CHECK(dirty.counts.input == s.sft.size() + k);
    CHECK(dirty.counts.retained == s.sft.size());
}
