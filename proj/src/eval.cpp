#include "pasmr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "pasmr/rng.hpp"

namespace pasmr {

std::string to_string(EvalMode m) {
    switch (m) {
        case EvalMode::SelfPivot: return "self-pivot";
        case EvalMode::GoldPivot: return "gold-pivot";
        case EvalMode::NoisyPivot: return "noisy-pivot";
    }
    return "?";
}

EvalMode eval_mode_from_string(const std::string& s) {
    if (s == "self-pivot") return EvalMode::SelfPivot;
    if (s == "gold-pivot") return EvalMode::GoldPivot;
    if (s == "noisy-pivot") return EvalMode::NoisyPivot;
    throw std::invalid_argument("unknown eval mode '" + s + "'");
}

AlignmentRates alignment_report(std::span<const EpisodeRecord> episodes) {
    AlignmentRates rates;
    int align_pc = 0, align_pf = 0;
    for (const auto& e : episodes) {
        // a missing pivot answer is an incorrect pivot answer, and nothing aligns with it
        const bool pivot_ok = e.a_en.has_value() && *e.a_en == e.gold;
        const bool align =
            e.a_en.has_value() && e.a_t.has_value() && *e.a_t == *e.a_en;
        if (pivot_ok) {
            ++rates.pivot_correct_n;
            if (align) ++align_pc;
        } else {
            ++rates.pivot_fail_n;
            if (align) ++align_pf;
        }
    }
    if (rates.pivot_correct_n > 0)
        rates.align_given_pivot_correct =
            static_cast<double>(align_pc) / rates.pivot_correct_n;
    if (rates.pivot_fail_n > 0)
        rates.align_given_pivot_fail = static_cast<double>(align_pf) / rates.pivot_fail_n;
    return rates;
}

MetricsReport report_from_episodes(std::vector<EpisodeRecord> episodes, const World& w) {
    MetricsReport r;
    r.episodes = std::move(episodes);
    if (!r.episodes.empty()) r.mode = r.episodes.front().mode;

    const int n_langs = static_cast<int>(w.languages.size());
    std::vector<std::vector<const EpisodeRecord*>> by_lang(static_cast<std::size_t>(n_langs));
    for (const auto& e : r.episodes)
        by_lang[static_cast<std::size_t>(e.lang_index)].push_back(&e);

    // pivot-language correctness by problem seed, for the overlap counts
    std::map<std::uint64_t, bool> pivot_correct;
    for (const auto* e : by_lang[static_cast<std::size_t>(w.pivot_index)])
        pivot_correct[e->problem_seed] = e->a_t.has_value() && *e->a_t == e->gold;

    int total_format_errors = 0, total_episodes = 0;
    double acc_sum = 0.0, low_sum = 0.0;
    int low_count = 0;
    for (int lang = 0; lang < n_langs; ++lang) {
        const auto& eps = by_lang[static_cast<std::size_t>(lang)];
        LangMetrics m;
        m.lang_id = w.languages[static_cast<std::size_t>(lang)].lang_id;
        m.is_pivot = w.languages[static_cast<std::size_t>(lang)].is_pivot;
        m.low_resource = w.languages[static_cast<std::size_t>(lang)].resource_level < 1.0;
        m.episodes = static_cast<int>(eps.size());
        std::vector<EpisodeRecord> lang_eps;
        lang_eps.reserve(eps.size());
        for (const auto* e : eps) {
            lang_eps.push_back(*e);
            const bool correct = e->a_t.has_value() && *e->a_t == e->gold;
            if (correct) {
                ++m.correct;
                const auto it = pivot_correct.find(e->problem_seed);
                if (it != pivot_correct.end() && it->second)
                    ++m.overlap_with_pivot;
                else
                    ++m.non_overlap;
            }
            if (e->format_error) {
                ++total_format_errors;
                m.format_error_rate += 1.0;
            }
        }
        total_episodes += m.episodes;
        if (m.episodes > 0) {
            m.accuracy = static_cast<double>(m.correct) / m.episodes;
            m.format_error_rate /= m.episodes;
        }
        m.alignment = alignment_report(lang_eps);
        acc_sum += m.accuracy;
        if (m.low_resource) {
            low_sum += m.accuracy;
            ++low_count;
        }
        if (m.is_pivot) r.pivot_accuracy = m.accuracy;
        r.rows.push_back(std::move(m));
    }
    r.overall_avg = n_langs > 0 ? acc_sum / n_langs : 0.0;
    r.low_resource_avg = low_count > 0 ? low_sum / low_count : 0.0;
    r.format_error_rate =
        total_episodes > 0 ? static_cast<double>(total_format_errors) / total_episodes : 0.0;
    r.overall_alignment = alignment_report(r.episodes);
    return r;
}

namespace {

std::vector<Token> corrupt_tokens(std::span<const Token> seq, double rate, Token vocab_size,
                                  Rng& rng) {
    std::vector<Token> out(seq.begin(), seq.end());
    for (auto& t : out) {
        if (rng.uniform01() >= rate) continue;
        // substitution draws from the full vocabulary minus the span-breaking
        // symbols (<eos> and the pivot delimiters)
        Token candidate;
        do {
            candidate = static_cast<Token>(rng.below(static_cast<std::uint64_t>(vocab_size)));
        } while (candidate == tok::eos || candidate == tok::piv_open ||
                 candidate == tok::piv_close);
        t = candidate;
    }
    return out;
}

}  // namespace

MetricsReport evaluate(const PolicyParams& params, const World& w,
                       std::span<const RenderedExample> heldout, const EvalConfig& cfg,
                       std::uint64_t seed) {
    if (cfg.max_gen_len <= 0) throw std::invalid_argument("evaluate: max_gen_len must be > 0");
    Rng dummy(0);  // greedy decoding draws nothing

    std::vector<EpisodeRecord> episodes;
    episodes.reserve(heldout.size());
    std::size_t item_index = 0;
    for (const auto& ex : heldout) {
        EpisodeRecord rec;
        rec.lang_index = ex.lang_index;
        rec.problem_seed = ex.problem_seed;
        rec.gold = ex.gold_answer;
        rec.mode = cfg.mode;

        if (cfg.mode == EvalMode::SelfPivot) {
            const std::vector<Token> gen =
                sample(params, ex.question_tokens, cfg.max_gen_len, 0.0, dummy);
            rec.format_error = !check_format(gen, true);
            rec.a_t = rec.format_error ? std::nullopt : extract_answer(gen);
            if (const auto span = find_pivot_span(gen); span.has_value()) {
                const std::vector<Token> piv(gen.begin() + span->first, gen.begin() + span->second);
                rec.a_en = pivot_rollout(params, piv, cfg.max_gen_len);
            }
        } else {
            std::vector<Token> span_content = ex.pivot_question_tokens;
            if (cfg.mode == EvalMode::NoisyPivot) {
                Rng noise(derive_seed(seed, 0x401E, item_index));
                span_content = corrupt_tokens(span_content, cfg.noise_rate, w.vocab_size, noise);
            }
            std::vector<Token> prompt = ex.question_tokens;
            prompt.push_back(tok::piv_open);
            prompt.insert(prompt.end(), span_content.begin(), span_content.end());
            prompt.push_back(tok::piv_close);
            const std::vector<Token> gen = sample(params, prompt, cfg.max_gen_len, 0.0, dummy);
            rec.format_error = !check_format(gen, false);
            rec.a_t = rec.format_error ? std::nullopt : extract_answer(gen);
            rec.a_en = pivot_rollout(params, span_content, cfg.max_gen_len);
        }
        episodes.push_back(rec);
        ++item_index;
    }
    return report_from_episodes(std::move(episodes), w);
}

std::string format_report_table(const MetricsReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "mode: %s\n", to_string(r.mode).c_str());
    out += buf;
    std::snprintf(buf, sizeof buf, "%-6s %6s %8s %8s %8s %8s %9s %9s\n", "lang", "n", "acc",
                  "fmt_err", "overlap", "nonovl", "al|pc", "al|pf");
    out += buf;
    auto opt_str = [](const std::optional<double>& v) {
        char b[32];
        if (!v.has_value()) return std::string("-");
        std::snprintf(b, sizeof b, "%.3f", *v);
        return std::string(b);
    };
    for (const auto& m : r.rows) {
        std::snprintf(buf, sizeof buf, "%-6s %6d %8.3f %8.3f %8d %8d %9s %9s\n",
                      m.lang_id.c_str(), m.episodes, m.accuracy, m.format_error_rate,
                      m.overlap_with_pivot, m.non_overlap, opt_str(m.alignment.align_given_pivot_correct).c_str(),
                      opt_str(m.alignment.align_given_pivot_fail).c_str());
        out += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "overall_avg %.4f  low_resource_avg %.4f  pivot_acc %.4f  fmt_err %.4f\n",
                  r.overall_avg, r.low_resource_avg, r.pivot_accuracy, r.format_error_rate);
    out += buf;
    return out;
}

std::vector<SweepRow> sweep(std::vector<int> train_sizes, const CorpusConfig& corpus_cfg,
                            ModelDims dims, const PamConfig& pam_cfg, const SrlConfig& srl_cfg,
                            const EvalConfig& eval_cfg, std::uint64_t seed) {
    if (train_sizes.empty()) throw std::invalid_argument("sweep: no train sizes");
    std::sort(train_sizes.begin(), train_sizes.end());

    std::vector<SweepRow> rows;
    for (int size : train_sizes) {
        SweepRow row;
        row.train_size = size;
        row.cell_seed = derive_seed(seed, 0x53EE, static_cast<std::uint64_t>(size));
        try {
            CorpusConfig cc = corpus_cfg;
            cc.per_language_budget = size;
            cc.validate();
            const World w = build_world(cc.world, row.cell_seed);
            const CorpusSplits splits = build_corpus(cc, w, row.cell_seed);

            CorpusConfig ood_cc = cc;
            ood_cc.ood_flag = true;
            const CorpusSplits ood_splits = build_corpus(ood_cc, w, row.cell_seed);

            ModelDims d = dims;
            d.vocab = w.vocab_size;
            const PamResult pam = train_pam(splits.sft, d, pam_cfg, row.cell_seed);
            row.pam_in_domain =
                evaluate(pam.params, w, splits.heldout, eval_cfg, row.cell_seed).overall_avg;
            row.pam_ood =
                evaluate(pam.params, w, ood_splits.heldout, eval_cfg, row.cell_seed).overall_avg;

            auto gold_lookup = [&cc](const RlQuestion& q) {
                return gen_problem(q.problem_seed, cc).gold_answer;
            };
            const SrlResult srl = srl_train(pam.params, pam.reference, splits.rl, srl_cfg,
                                            row.cell_seed, gold_lookup);
            row.srl_in_domain =
                evaluate(srl.params, w, splits.heldout, eval_cfg, row.cell_seed).overall_avg;
            row.srl_ood =
                evaluate(srl.params, w, ood_splits.heldout, eval_cfg, row.cell_seed).overall_avg;
        } catch (const std::exception& e) {
            throw std::runtime_error("sweep: size " + std::to_string(size) +
                                     " failed: " + e.what());
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace pasmr
