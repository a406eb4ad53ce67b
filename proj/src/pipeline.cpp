#include "pasmr/pipeline.hpp"

#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "pasmr/io.hpp"
#include "pasmr/kernels.hpp"

namespace pasmr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string header_line(const RunConfig& cfg, const char* format, json extra = json::object()) {
    json h;
    h["format"] = format;
    h["version"] = 1;
    h["config_hash"] = hex64(config_hash(cfg));
    h["seed"] = cfg.seed;
    for (auto& [k, v] : extra.items()) h[k] = v;
    return h.dump();
}

std::string ensure_dir(const std::string& out_dir, const char* sub) {
    const fs::path p = fs::path(out_dir) / sub;
    fs::create_directories(p);
    return p.string();
}

json tokens_to_json(const std::vector<Token>& t) { return json(t); }

long long gold_for_seed(std::uint64_t problem_seed, const CorpusConfig& cc, bool ood) {
    return gen_problem(problem_seed, cc, ood).gold_answer;
}

CorpusSplits corpus_for(const RunConfig& cfg, const World& w, bool ood) {
    CorpusConfig cc = cfg.corpus;
    cc.ood_flag = ood;
    return build_corpus(cc, w, cfg.seed);
}

}  // namespace

std::uint64_t world_seed_for(const RunConfig& cfg) { return derive_seed(cfg.seed, 0x11011D); }

World world_for(const RunConfig& cfg) {
    set_kernel_backend(parse_kernel_backend(cfg.kernels));
    cfg.corpus.validate();
    return build_world(cfg.corpus.world, world_seed_for(cfg));
}

GenDataArtifacts cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    const World w = world_for(cfg);
    const CorpusSplits splits = corpus_for(cfg, w, cfg.corpus.ood_flag);
    const std::string dir = ensure_dir(out_dir, "corpus");

    GenDataArtifacts out;

    {
        LineFileWriter f(dir + "/vocab.tsv");
        f.line(header_line(cfg, "pasmr-vocab"));
        const auto strings = vocab_strings(w);
        for (std::size_t id = 0; id < strings.size(); ++id)
            f.line(std::to_string(id) + "\t" + strings[id]);
        out.files.push_back(dir + "/vocab.tsv");
    }

    auto example_line = [&](const RenderedExample& ex) {
        json j;
        j["lang"] = w.languages[static_cast<std::size_t>(ex.lang_index)].lang_id;
        j["q"] = tokens_to_json(ex.question_tokens);
        j["piv"] = tokens_to_json(ex.pivot_question_tokens);
        j["a"] = tokens_to_json(ex.answer_tokens);
        j["gold"] = ex.gold_answer;
        j["seed"] = ex.problem_seed;
        return j.dump();
    };

    // filter runs on the SFT split, as in the data construction it mirrors
    std::vector<RenderedExample> sft = splits.sft;
    const FilterResult filtered = filter_corpus(sft, w);
    out.filter_counts = filtered.counts;

    {
        LineFileWriter f(dir + "/sft.jsonl");
        f.line(header_line(cfg, "pasmr-corpus", json{{"split", "sft"}, {"ood", cfg.corpus.ood_flag}}));
        for (const auto& ex : filtered.retained) f.line(example_line(ex));
        out.files.push_back(dir + "/sft.jsonl");
    }
    {
        CorpusConfig cc = cfg.corpus;
        LineFileWriter f(dir + "/rl.jsonl");
        f.line(header_line(cfg, "pasmr-corpus", json{{"split", "rl"}, {"ood", cfg.corpus.ood_flag}}));
        for (const auto& q : splits.rl) {
            json j;
            j["lang"] = w.languages[static_cast<std::size_t>(q.lang_index)].lang_id;
            j["q"] = tokens_to_json(q.question_tokens);
            j["gold"] = gold_for_seed(q.problem_seed, cc, cfg.corpus.ood_flag);
            j["seed"] = q.problem_seed;
            f.line(j.dump());
        }
        out.files.push_back(dir + "/rl.jsonl");
    }
    {
        LineFileWriter f(dir + "/heldout.jsonl");
        f.line(header_line(cfg, "pasmr-corpus",
                           json{{"split", "heldout"}, {"ood", cfg.corpus.ood_flag}}));
        for (const auto& ex : splits.heldout) f.line(example_line(ex));
        out.files.push_back(dir + "/heldout.jsonl");
    }
    return out;
}

PamArtifacts cmd_train_pam(const RunConfig& cfg, const std::string& out_dir) {
    const World w = world_for(cfg);
    const CorpusSplits splits = corpus_for(cfg, w, false);
    const FilterResult filtered = filter_corpus(splits.sft, w);
    const std::string dir = ensure_dir(out_dir, "pam");

    PamArtifacts out;
    out.log_path = dir + "/train_log.jsonl";
    LineFileWriter log(out.log_path);
    log.line(header_line(cfg, "pasmr-train-log", json{{"stage", "pam"}}));

    const PamResult res =
        train_pam(filtered.retained, cfg.dims_for(w), cfg.pam, cfg.seed,
                  [&](const PamLogRow& row) {
                      json j;
                      j["step"] = row.step;
                      j["loss"] = row.loss;
                      j["lr"] = row.lr;
                      log.line(j.dump());
                  });

    CheckpointMeta meta;
    meta.dims = res.params.dims;
    meta.seed = cfg.seed;
    meta.config_hash = config_hash(cfg);

    out.checkpoint_path = dir + "/checkpoint.bin";
    meta.role = SnapshotRole::Live;
    save_checkpoint(out.checkpoint_path, res.params, meta);

    out.reference_path = dir + "/reference.bin";
    meta.role = SnapshotRole::Reference;
    save_checkpoint(out.reference_path, res.reference.params, meta);

    out.probe_loss_initial = res.probe_loss_initial;
    out.probe_loss_final = res.probe_loss_final;
    return out;
}

SrlArtifacts cmd_train_srl(const RunConfig& cfg, const std::string& pam_checkpoint,
                           const std::string& pam_reference, const std::string& out_dir) {
    const World w = world_for(cfg);
    const CorpusSplits splits = corpus_for(cfg, w, cfg.srl_ood_data);

    CheckpointMeta meta;
    PolicyParams params = load_checkpoint(pam_checkpoint, &meta);
    if (meta.dims != cfg.dims_for(w))
        throw std::runtime_error("train-srl: checkpoint dims do not match this config's world");
    CheckpointMeta ref_meta;
    PolicyParams ref_params = load_checkpoint(pam_reference, &ref_meta);
    if (ref_meta.role != SnapshotRole::Reference)
        throw std::runtime_error("train-srl: '" + pam_reference + "' is not a reference snapshot");
    if (ref_meta.dims != meta.dims)
        throw std::runtime_error("train-srl: reference dims do not match the checkpoint");
    PolicySnapshot reference{SnapshotRole::Reference, std::move(ref_params)};

    const std::string dir = ensure_dir(out_dir, "srl");
    SrlArtifacts out;
    out.log_path = dir + "/train_log.jsonl";
    LineFileWriter log(out.log_path);
    log.line(header_line(cfg, "pasmr-train-log",
                         json{{"stage", "srl"},
                              {"reward_source", to_string(cfg.srl.reward_source)},
                              {"reward_spread", to_string(cfg.srl.reward_spread)},
                              {"return_convention", to_string(cfg.srl.return_convention)},
                              {"ood_data", cfg.srl_ood_data}}));

    CorpusConfig cc = cfg.corpus;
    const bool ood = cfg.srl_ood_data;
    auto gold_lookup = [cc, ood](const RlQuestion& q) {
        return gen_problem(q.problem_seed, cc, ood).gold_answer;
    };

    const SrlResult res = srl_train(
        params, reference, splits.rl, cfg.srl, cfg.seed, gold_lookup, cfg.srl_audit_log,
        [&](const SrlLogRow& row) {
            json j;
            j["step"] = row.step;
            j["mean_reward"] = row.mean_reward;
            j["pivot_fail"] = row.pivot_fail;
            j["pivot_correct_target_correct"] = row.pivot_correct_target_correct;
            j["pivot_correct_target_fail"] = row.pivot_correct_target_fail;
            j["mean_kl"] = row.mean_kl;
            j["clip_fraction"] = row.clip_fraction;
            j["objective"] = row.objective;
            j["skipped"] = row.skipped;
            log.line(j.dump());
        });

    if (cfg.srl_audit_log) {
        out.audit_path = dir + "/trajectories.jsonl";
        LineFileWriter audit(out.audit_path);
        audit.line(header_line(cfg, "pasmr-srl-audit",
                               json{{"reward_source", to_string(cfg.srl.reward_source)}}));
        for (const auto& a : res.audit) {
            json j;
            j["step"] = a.step;
            j["lang"] = w.languages[static_cast<std::size_t>(a.lang_index)].lang_id;
            j["seed"] = a.problem_seed;
            j["a_t"] = a.a_t.has_value() ? json(*a.a_t) : json(nullptr);
            j["a_en"] = a.a_en.has_value() ? json(*a.a_en) : json(nullptr);
            j["F"] = a.F;
            j["format_ok"] = a.format_ok;
            audit.line(j.dump());
        }
    }

    CheckpointMeta out_meta;
    out_meta.dims = res.params.dims;
    out_meta.seed = cfg.seed;
    out_meta.config_hash = config_hash(cfg);
    out_meta.role = SnapshotRole::Live;
    out.checkpoint_path = dir + "/checkpoint.bin";
    save_checkpoint(out.checkpoint_path, res.params, out_meta);
    return out;
}

EvalArtifacts cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                       const std::string& out_dir) {
    const World w = world_for(cfg);
    const CorpusSplits splits = corpus_for(cfg, w, cfg.corpus.ood_flag);

    CheckpointMeta meta;
    const PolicyParams params = load_checkpoint(checkpoint_path, &meta);
    if (meta.dims != cfg.dims_for(w))
        throw std::runtime_error("eval: checkpoint dims do not match this config's world");

    EvalArtifacts out;
    out.report = evaluate(params, w, splits.heldout, cfg.eval, cfg.seed);

    const std::string dir = ensure_dir(out_dir, "eval");
    const std::string mode = to_string(cfg.eval.mode);

    out.episodes_path = dir + "/episodes_" + mode + ".jsonl";
    {
        LineFileWriter f(out.episodes_path);
        f.line(header_line(cfg, "pasmr-episodes", json{{"mode", mode}}));
        for (const auto& e : out.report.episodes) {
            json j;
            j["lang"] = w.languages[static_cast<std::size_t>(e.lang_index)].lang_id;
            j["seed"] = e.problem_seed;
            j["a_t"] = e.a_t.has_value() ? json(*e.a_t) : json(nullptr);
            j["a_en"] = e.a_en.has_value() ? json(*e.a_en) : json(nullptr);
            j["gold"] = e.gold;
            j["mode"] = mode;
            j["format_error"] = e.format_error;
            f.line(j.dump());
        }
    }
    out.metrics_json_path = dir + "/metrics_" + mode + ".jsonl";
    {
        LineFileWriter f(out.metrics_json_path);
        f.line(header_line(cfg, "pasmr-metrics", json{{"mode", mode}}));
        for (const auto& m : out.report.rows) {
            json j;
            j["lang"] = m.lang_id;
            j["is_pivot"] = m.is_pivot;
            j["low_resource"] = m.low_resource;
            j["episodes"] = m.episodes;
            j["correct"] = m.correct;
            j["accuracy"] = m.accuracy;
            j["format_error_rate"] = m.format_error_rate;
            j["overlap_with_pivot"] = m.overlap_with_pivot;
            j["non_overlap"] = m.non_overlap;
            j["align_pivot_correct"] = m.alignment.align_given_pivot_correct.has_value()
                                           ? json(*m.alignment.align_given_pivot_correct)
                                           : json(nullptr);
            j["align_pivot_fail"] = m.alignment.align_given_pivot_fail.has_value()
                                        ? json(*m.alignment.align_given_pivot_fail)
                                        : json(nullptr);
            f.line(j.dump());
        }
        json agg;
        agg["lang"] = "__aggregate__";
        agg["overall_avg"] = out.report.overall_avg;
        agg["low_resource_avg"] = out.report.low_resource_avg;
        agg["pivot_accuracy"] = out.report.pivot_accuracy;
        agg["format_error_rate"] = out.report.format_error_rate;
        f.line(agg.dump());
    }
    out.metrics_table_path = dir + "/metrics_" + mode + ".txt";
    {
        LineFileWriter f(out.metrics_table_path);
        f.line(header_line(cfg, "pasmr-metrics-table", json{{"mode", mode}}));
        f.line(format_report_table(out.report));
    }
    return out;
}

SweepArtifacts cmd_sweep(const RunConfig& cfg, const std::string& out_dir) {
    set_kernel_backend(parse_kernel_backend(cfg.kernels));
    ModelDims dims{0, static_cast<std::int32_t>(cfg.embed_dim),
                   static_cast<std::int32_t>(cfg.hidden_dim)};
    SweepArtifacts out;
    out.rows = sweep(cfg.sweep_sizes, cfg.corpus, dims, cfg.pam, cfg.srl, cfg.eval, cfg.seed);

    const std::string dir = ensure_dir(out_dir, "sweep");
    out.json_path = dir + "/sweep.jsonl";
    {
        LineFileWriter f(out.json_path);
        f.line(header_line(cfg, "pasmr-sweep"));
        for (const auto& r : out.rows) {
            json j;
            j["train_size"] = r.train_size;
            j["cell_seed"] = r.cell_seed;
            j["pam_in_domain"] = r.pam_in_domain;
            j["srl_in_domain"] = r.srl_in_domain;
            j["pam_ood"] = r.pam_ood;
            j["srl_ood"] = r.srl_ood;
            f.line(j.dump());
        }
    }
    out.table_path = dir + "/sweep.txt";
    {
        LineFileWriter f(out.table_path);
        f.line(header_line(cfg, "pasmr-sweep-table"));
        char buf[160];
        std::snprintf(buf, sizeof buf, "%8s %12s %12s %12s %12s", "size", "pam_in", "srl_in",
                      "pam_ood", "srl_ood");
        f.line(buf);
        for (const auto& r : out.rows) {
            std::snprintf(buf, sizeof buf, "%8d %12.4f %12.4f %12.4f %12.4f", r.train_size,
                          r.pam_in_domain, r.srl_in_domain, r.pam_ood, r.srl_ood);
            f.line(buf);
        }
    }
    return out;
}

}  // namespace pasmr
