#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pasmr/corpus.hpp"
#include "pasmr/model.hpp"
#include "pasmr/pam.hpp"
#include "pasmr/srl.hpp"

namespace pasmr {

enum class EvalMode { SelfPivot, GoldPivot, NoisyPivot };

std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

struct EvalConfig {
    EvalMode mode = EvalMode::SelfPivot;
    double noise_rate = 0.1;  // token corruption rate for NoisyPivot
    int max_gen_len = 64;
};

struct EpisodeRecord {
    int lang_index = 0;
    std::uint64_t problem_seed = 0;
    std::optional<long long> a_t;
    std::optional<long long> a_en;
    long long gold = 0;
    EvalMode mode = EvalMode::SelfPivot;
    bool format_error = false;
};

/// Conditional agreement rates with explicit denominators; a rate is absent
/// when its denominator is zero.
struct AlignmentRates {
    std::optional<double> align_given_pivot_correct;
    std::optional<double> align_given_pivot_fail;
    int pivot_correct_n = 0;
    int pivot_fail_n = 0;
};

struct LangMetrics {
    std::string lang_id;
    bool is_pivot = false;
    bool low_resource = false;
    int episodes = 0;
    int correct = 0;
    double accuracy = 0.0;
    double format_error_rate = 0.0;
    int overlap_with_pivot = 0;      // correct here and correct in the pivot language
    int non_overlap = 0;             // correct here, wrong in the pivot language
    AlignmentRates alignment;
};

struct MetricsReport {
    EvalMode mode = EvalMode::SelfPivot;
    std::vector<LangMetrics> rows;   // language order of the world
    double overall_avg = 0.0;        // mean per-language accuracy
    double low_resource_avg = 0.0;
    double pivot_accuracy = 0.0;
    double format_error_rate = 0.0;  // pooled
    AlignmentRates overall_alignment;
    std::vector<EpisodeRecord> episodes;
};

std::optional<long long> extract_answer(std::span<const Token> seq);  // see corpus.hpp

AlignmentRates alignment_report(std::span<const EpisodeRecord> episodes);

/// Pure reduction of an episode log into the report tables.
MetricsReport report_from_episodes(std::vector<EpisodeRecord> episodes, const World& w);

/// Greedy evaluation over the held-out set.
/// self-pivot: the model generates its own pivot span;
/// gold-pivot: the gold pivot rendering is forced into the span;
/// noisy-pivot: gold pivot with token substitutions at cfg.noise_rate.
MetricsReport evaluate(const PolicyParams& params, const World& w,
                       std::span<const RenderedExample> heldout, const EvalConfig& cfg,
                       std::uint64_t seed);

std::string format_report_table(const MetricsReport& r);

// --- data-size sweep ---------------------------------------------------------

struct SweepRow {
    int train_size = 0;          // per-language budget
    std::uint64_t cell_seed = 0;
    double pam_in_domain = 0.0;  // overall averages, self-pivot mode
    double srl_in_domain = 0.0;
    double pam_ood = 0.0;
    double srl_ood = 0.0;
};

/// Repeats PAM + SRL at each per-language budget and reports accuracy against
/// the in-domain and OOD held-out sets. Rows come back sorted by size.
std::vector<SweepRow> sweep(std::vector<int> train_sizes, const CorpusConfig& corpus_cfg,
                            ModelDims dims, const PamConfig& pam_cfg, const SrlConfig& srl_cfg,
                            const EvalConfig& eval_cfg, std::uint64_t seed);

}  // namespace pasmr
