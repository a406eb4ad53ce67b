// pasmr: synthetic multilingual arithmetic world with two-stage training
// (supervised pivot-aligned mapping, then self-feedback RL) and an
// evaluation harness. Subcommands: gen-data, train-pam, train-srl, eval, sweep.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pasmr/config.hpp"
#include "pasmr/io.hpp"
#include "pasmr/kernels.hpp"
#include "pasmr/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

pasmr::RunConfig load_effective_config(const CommonArgs& args) {
    pasmr::RunConfig cfg =
        args.config_path.empty() ? pasmr::default_config() : pasmr::load_config_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config out_dir)");
    cmd->add_option("--seed", args.seed, "master seed (overrides config)")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PASMR: pivot-aligned mapping + self-feedback RL on a synthetic multilingual arithmetic world"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* gen = app.add_subcommand("gen-data", "generate and filter the corpus files");
    add_common(gen, args);
    bool gen_ood = false;
    gen->add_flag("--ood", gen_ood, "generate the out-of-domain variant");

    auto* tpam = app.add_subcommand("train-pam", "stage 1: supervised pivot-aligned mapping");
    add_common(tpam, args);

    auto* tsrl = app.add_subcommand("train-srl", "stage 2: self-feedback reinforcement learning");
    add_common(tsrl, args);
    std::string pam_checkpoint, pam_reference, reward_source, reward_spread, return_convention;
    bool srl_ood = false, srl_audit = false;
    int srl_steps = -1;
    tsrl->add_option("--pam-checkpoint", pam_checkpoint, "PAM checkpoint file")->required();
    tsrl->add_option("--pam-reference", pam_reference, "frozen PAM reference snapshot")->required();
    tsrl->add_option("--reward-source", reward_source, "self-pivot | gold-answer");
    tsrl->add_option("--reward-spread", reward_spread, "paper-literal | terminal-only");
    tsrl->add_option("--return-convention", return_convention, "paper-literal | inclusive");
    tsrl->add_flag("--ood-data", srl_ood, "train on the OOD question set");
    tsrl->add_flag("--audit", srl_audit, "write the per-episode trajectory audit log");
    tsrl->add_option("--steps", srl_steps, "override srl.total_steps");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the held-out set");
    add_common(ev, args);
    std::string eval_checkpoint, eval_mode;
    bool eval_ood = false;
    ev->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    ev->add_option("--mode", eval_mode, "self-pivot | gold-pivot | noisy-pivot");
    ev->add_flag("--ood", eval_ood, "evaluate on the OOD held-out set");

    auto* sw = app.add_subcommand("sweep", "repeat PAM+SRL across per-language data budgets");
    add_common(sw, args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            pasmr::RunConfig cfg = load_effective_config(args);
            if (gen_ood) cfg.corpus.ood_flag = true;
            const auto res = pasmr::cmd_gen_data(cfg, cfg.out_dir);
            std::printf("gen-data: %zu examples in, %zu retained\n", res.filter_counts.input,
                        res.filter_counts.retained);
            std::printf("rejections: answer %zu, language %zu, format %zu\n",
                        res.filter_counts.bad_answer, res.filter_counts.bad_language,
                        res.filter_counts.bad_format);
            for (const auto& f : res.files) std::printf("wrote %s\n", f.c_str());
        } else if (tpam->parsed()) {
            const pasmr::RunConfig cfg = load_effective_config(args);
            const auto res = pasmr::cmd_train_pam(cfg, cfg.out_dir);
            std::printf("train-pam: probe loss %.4f -> %.4f\n", res.probe_loss_initial,
                        res.probe_loss_final);
            std::printf("wrote %s\nwrote %s\nwrote %s\n", res.checkpoint_path.c_str(),
                        res.reference_path.c_str(), res.log_path.c_str());
        } else if (tsrl->parsed()) {
            pasmr::RunConfig cfg = load_effective_config(args);
            if (!reward_source.empty())
                cfg.srl.reward_source = pasmr::reward_source_from_string(reward_source);
            if (!reward_spread.empty())
                cfg.srl.reward_spread = pasmr::reward_spread_from_string(reward_spread);
            if (!return_convention.empty())
                cfg.srl.return_convention = pasmr::return_convention_from_string(return_convention);
            if (srl_ood) cfg.srl_ood_data = true;
            if (srl_audit) cfg.srl_audit_log = true;
            if (srl_steps > 0) cfg.srl.total_steps = srl_steps;
            const auto res = pasmr::cmd_train_srl(cfg, pam_checkpoint, pam_reference, cfg.out_dir);
            std::printf("wrote %s\nwrote %s\n", res.checkpoint_path.c_str(), res.log_path.c_str());
            if (!res.audit_path.empty()) std::printf("wrote %s\n", res.audit_path.c_str());
        } else if (ev->parsed()) {
            pasmr::RunConfig cfg = load_effective_config(args);
            if (!eval_mode.empty()) cfg.eval.mode = pasmr::eval_mode_from_string(eval_mode);
            if (eval_ood) cfg.corpus.ood_flag = true;
            const auto res = pasmr::cmd_eval(cfg, eval_checkpoint, cfg.out_dir);
            std::fputs(pasmr::format_report_table(res.report).c_str(), stdout);
            std::printf("wrote %s\nwrote %s\nwrote %s\n", res.metrics_json_path.c_str(),
                        res.metrics_table_path.c_str(), res.episodes_path.c_str());
        } else if (sw->parsed()) {
            const pasmr::RunConfig cfg = load_effective_config(args);
            const auto res = pasmr::cmd_sweep(cfg, cfg.out_dir);
            for (const auto& r : res.rows)
                std::printf("size %5d: pam_in %.4f srl_in %.4f pam_ood %.4f srl_ood %.4f\n",
                            r.train_size, r.pam_in_domain, r.srl_in_domain, r.pam_ood, r.srl_ood);
            std::printf("wrote %s\nwrote %s\n", res.json_path.c_str(), res.table_path.c_str());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
