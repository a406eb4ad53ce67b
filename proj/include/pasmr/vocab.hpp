#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pasmr {

using Token = std::int32_t;

// Shared symbols, identical ids in every language. Everything else is
// language-unique surface vocabulary.
namespace tok {
inline constexpr Token eos = 0;
inline constexpr Token piv_open = 1;
inline constexpr Token piv_close = 2;
inline constexpr Token answer_marker = 3;  // "####"
inline constexpr Token sep = 4;            // ";"
inline constexpr Token digit0 = 5;
inline constexpr int shared_count = 15;

inline constexpr bool is_digit(Token t) { return t >= digit0 && t < digit0 + 10; }
inline constexpr int digit_value(Token t) { return static_cast<int>(t - digit0); }
inline constexpr Token digit(int d) { return digit0 + static_cast<Token>(d); }
}  // namespace tok

enum class OpKind { Add = 0, Sub = 1, Mul = 2 };

struct LanguageSpec {
    std::string lang_id;
    int index = 0;
    double resource_level = 1.0;
    bool is_pivot = false;
    Token base_id = 0;  // first id of this language's surface block
};

// Question templates are slot skeletons. The canonical slot order is the
// pivot language's word order; every other language renders the same slots
// in its own fixed arrangement, so translation into the pivot requires both
// a lexicon and a reordering.
enum class SlotKind { Word, Name, Filler, Num, Op };

struct Slot {
    SlotKind kind;
    int arg;  // Word: core-word id; Num/Op: position; Name/Filler: unused
};

struct QuestionTemplate {
    std::vector<Slot> slots;
};

// Core template words, one concept each.
enum class CoreWord { Calc, Q, Has, Item, Result, What, Is, Tell, OodA, OodB, OodC, OodD };
inline constexpr int core_word_count = 12;

struct WorldConfig {
    int n_languages = 6;  // pivot + high-resource + low-resource
    int n_low_resource = 3;
    double low_resource_level = 0.15;
    int n_op_synonyms = 4;
    int n_fillers = 24;
    int n_names = 6;
};

struct World {
    WorldConfig cfg;
    std::uint64_t seed = 0;
    std::vector<LanguageSpec> languages;
    int pivot_index = 0;
    int concepts_per_language = 0;
    std::vector<std::string> concept_names;        // size concepts_per_language
    std::vector<QuestionTemplate> templates;       // in-domain
    std::vector<QuestionTemplate> ood_templates;
    // arrangement[lang][tpl] = slot visit order; pivot rows are identity
    std::vector<std::vector<std::vector<int>>> arrangement;
    std::vector<std::vector<std::vector<int>>> ood_arrangement;
    Token vocab_size = 0;

    // concept indices
    int op_concept(OpKind op, int synonym) const;
    int eq_concept() const;
    int word_concept(CoreWord w) const;
    int name_concept(int i) const;
    int filler_concept(int i) const;

    Token surface(int lang_index, int concept_id) const;
    bool token_in_language(Token t, int lang_index) const;  // shared tokens excluded
    bool is_shared(Token t) const { return t < tok::shared_count; }

    const LanguageSpec& pivot() const { return languages[pivot_index]; }
    int language_index(const std::string& lang_id) const;  // throws if unknown
};

World build_world(const WorldConfig& cfg, std::uint64_t seed);

/// All token surface strings, indexed by token id.
std::vector<std::string> vocab_strings(const World& w);

}  // namespace pasmr
