#include "pasmr/vocab.hpp"

#include <stdexcept>

#include "pasmr/rng.hpp"

namespace pasmr {

namespace {

const char* core_word_name(CoreWord w) {
    switch (w) {
        case CoreWord::Calc: return "calc";
        case CoreWord::Q: return "q";
        case CoreWord::Has: return "has";
        case CoreWord::Item: return "item";
        case CoreWord::Result: return "result";
        case CoreWord::What: return "what";
        case CoreWord::Is: return "is";
        case CoreWord::Tell: return "tell";
        case CoreWord::OodA: return "ooda";
        case CoreWord::OodB: return "oodb";
        case CoreWord::OodC: return "oodc";
        case CoreWord::OodD: return "oodd";
    }
    return "?";
}

Slot word(CoreWord w) { return {SlotKind::Word, static_cast<int>(w)}; }
Slot num(int pos) { return {SlotKind::Num, pos}; }
Slot op(int pos) { return {SlotKind::Op, pos}; }
Slot name() { return {SlotKind::Name, 0}; }
Slot filler() { return {SlotKind::Filler, 0}; }

std::vector<QuestionTemplate> in_domain_templates() {
    std::vector<QuestionTemplate> t;
    t.push_back({{word(CoreWord::Calc), filler(), num(0), op(0), num(1), op(1), num(2),
                  word(CoreWord::Q)}});
    t.push_back({{name(), word(CoreWord::Has), num(0), word(CoreWord::Item), filler(),
                  op(0), num(1), op(1), num(2), word(CoreWord::Result), word(CoreWord::Q)}});
    t.push_back({{word(CoreWord::What), word(CoreWord::Is), num(0), op(0), num(1), op(1),
                  num(2), filler(), word(CoreWord::Tell)}});
    return t;
}

std::vector<QuestionTemplate> out_of_domain_templates() {
    std::vector<QuestionTemplate> t;
    t.push_back({{word(CoreWord::OodA), filler(), num(0), op(0), num(1), op(1), num(2),
                  word(CoreWord::OodB)}});
    t.push_back({{word(CoreWord::OodC), num(0), op(0), num(1), op(1), num(2), filler(),
                  word(CoreWord::OodD), word(CoreWord::Q)}});
    return t;
}

// Shuffles slot order, then restores the relative order of Num slots and of
// Op slots so the expression still reads left to right in every language.
std::vector<int> make_arrangement(const QuestionTemplate& tpl, Rng& rng) {
    const int n = static_cast<int>(tpl.slots.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[i], order[j]);
    }
    for (SlotKind kind : {SlotKind::Num, SlotKind::Op}) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (tpl.slots[i].kind == kind) members.push_back(i);
        // members is already sorted by arg (templates list them in order)
        int next = 0;
        for (int pos = 0; pos < n; ++pos)
            if (tpl.slots[order[pos]].kind == kind) order[pos] = members[next++];
    }
    return order;
}

std::vector<int> identity_arrangement(const QuestionTemplate& tpl) {
    std::vector<int> order(tpl.slots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    return order;
}

}  // namespace

int World::op_concept(OpKind opk, int synonym) const {
    return static_cast<int>(opk) * cfg.n_op_synonyms + synonym;
}

int World::eq_concept() const { return 3 * cfg.n_op_synonyms; }

int World::word_concept(CoreWord w) const {
    return 3 * cfg.n_op_synonyms + 1 + static_cast<int>(w);
}

int World::name_concept(int i) const {
    return 3 * cfg.n_op_synonyms + 1 + core_word_count + i;
}

int World::filler_concept(int i) const {
    return 3 * cfg.n_op_synonyms + 1 + core_word_count + cfg.n_names + i;
}

Token World::surface(int lang_index, int concept_id) const {
    return languages[lang_index].base_id + static_cast<Token>(concept_id);
}

bool World::token_in_language(Token t, int lang_index) const {
    const Token base = languages[lang_index].base_id;
    return t >= base && t < base + static_cast<Token>(concepts_per_language);
}

int World::language_index(const std::string& lang_id) const {
    for (const auto& l : languages)
        if (l.lang_id == lang_id) return l.index;
    throw std::invalid_argument("unknown language id '" + lang_id + "'");
}

World build_world(const WorldConfig& cfg, std::uint64_t seed) {
    if (cfg.n_languages < 2 || cfg.n_low_resource < 0 ||
        cfg.n_low_resource > cfg.n_languages - 1)
        throw std::invalid_argument("world: invalid language counts");
    if (cfg.low_resource_level <= 0.0 || cfg.low_resource_level > 1.0)
        throw std::invalid_argument("world: resource level must be in (0,1]");
    if (cfg.n_op_synonyms < 1 || cfg.n_names < 1 || cfg.n_fillers < 1)
        throw std::invalid_argument("world: lexicon sizes must be >= 1");

    World w;
    w.cfg = cfg;
    w.seed = seed;
    w.concepts_per_language =
        3 * cfg.n_op_synonyms + 1 + core_word_count + cfg.n_names + cfg.n_fillers;

    const char* op_prefix[3] = {"add", "sub", "mul"};
    for (int k = 0; k < 3; ++k)
        for (int s = 0; s < cfg.n_op_synonyms; ++s)
            w.concept_names.push_back(op_prefix[k] + std::to_string(s));
    w.concept_names.push_back("eq");
    for (int i = 0; i < core_word_count; ++i)
        w.concept_names.push_back(core_word_name(static_cast<CoreWord>(i)));
    for (int i = 0; i < cfg.n_names; ++i) w.concept_names.push_back("name" + std::to_string(i));
    for (int i = 0; i < cfg.n_fillers; ++i) w.concept_names.push_back("fill" + std::to_string(i));

    const int n_high = cfg.n_languages - 1 - cfg.n_low_resource;
    w.pivot_index = 0;
    for (int i = 0; i < cfg.n_languages; ++i) {
        LanguageSpec l;
        l.index = i;
        if (i == 0) {
            l.lang_id = "pv";
            l.is_pivot = true;
            l.resource_level = 1.0;
        } else if (i <= n_high) {
            l.lang_id = "h" + std::to_string(i);
            l.resource_level = 1.0;
        } else {
            l.lang_id = "l" + std::to_string(i - n_high);
            l.resource_level = cfg.low_resource_level;
        }
        l.base_id = tok::shared_count + static_cast<Token>(i) *
                                            static_cast<Token>(w.concepts_per_language);
        w.languages.push_back(l);
    }
    w.vocab_size = tok::shared_count + static_cast<Token>(cfg.n_languages) *
                                           static_cast<Token>(w.concepts_per_language);

    w.templates = in_domain_templates();
    w.ood_templates = out_of_domain_templates();
    w.arrangement.resize(cfg.n_languages);
    w.ood_arrangement.resize(cfg.n_languages);
    for (int lang = 0; lang < cfg.n_languages; ++lang) {
        for (std::size_t t = 0; t < w.templates.size(); ++t) {
            if (lang == w.pivot_index) {
                w.arrangement[lang].push_back(identity_arrangement(w.templates[t]));
            } else {
                Rng rng(derive_seed(seed, 0xA11A, static_cast<std::uint64_t>(lang), t));
                w.arrangement[lang].push_back(make_arrangement(w.templates[t], rng));
            }
        }
        for (std::size_t t = 0; t < w.ood_templates.size(); ++t) {
            if (lang == w.pivot_index) {
                w.ood_arrangement[lang].push_back(identity_arrangement(w.ood_templates[t]));
            } else {
                Rng rng(derive_seed(seed, 0xA11B, static_cast<std::uint64_t>(lang), t));
                w.ood_arrangement[lang].push_back(make_arrangement(w.ood_templates[t], rng));
            }
        }
    }
    return w;
}

std::vector<std::string> vocab_strings(const World& w) {
    std::vector<std::string> v;
    v.reserve(static_cast<std::size_t>(w.vocab_size));
    v.push_back("<eos>");
    v.push_back("<piv>");
    v.push_back("</piv>");
    v.push_back("####");
    v.push_back(";");
    for (int d = 0; d < 10; ++d) v.push_back(std::to_string(d));
    for (const auto& lang : w.languages)
        for (int c = 0; c < w.concepts_per_language; ++c)
            v.push_back(w.concept_names[c] + "@" + lang.lang_id);
    return v;
}

}  // namespace pasmr
