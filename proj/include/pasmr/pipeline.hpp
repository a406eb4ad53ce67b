#pragma once

#include <string>
#include <vector>

#include "pasmr/config.hpp"
#include "pasmr/eval.hpp"

namespace pasmr {

// Command implementations shared by the CLI and the test suites. Every
// artifact they write embeds (config hash, seed, format version) and is a
// pure function of the configuration, so equal hashes give identical bytes.

/// Applies cfg.kernels and builds the world for this run.
World world_for(const RunConfig& cfg);
std::uint64_t world_seed_for(const RunConfig& cfg);

struct GenDataArtifacts {
    FilterCounts filter_counts;
    std::vector<std::string> files;
};
GenDataArtifacts cmd_gen_data(const RunConfig& cfg, const std::string& out_dir);

struct PamArtifacts {
    std::string checkpoint_path;
    std::string reference_path;
    std::string log_path;
    double probe_loss_initial = 0.0;
    double probe_loss_final = 0.0;
};
PamArtifacts cmd_train_pam(const RunConfig& cfg, const std::string& out_dir);

struct SrlArtifacts {
    std::string checkpoint_path;
    std::string log_path;
    std::string audit_path;  // empty unless the audit log is enabled
};
SrlArtifacts cmd_train_srl(const RunConfig& cfg, const std::string& pam_checkpoint,
                           const std::string& pam_reference, const std::string& out_dir);

struct EvalArtifacts {
    MetricsReport report;
    std::string metrics_json_path;
    std::string metrics_table_path;
    std::string episodes_path;
};
EvalArtifacts cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                       const std::string& out_dir);

struct SweepArtifacts {
    std::vector<SweepRow> rows;
    std::string json_path;
    std::string table_path;
};
SweepArtifacts cmd_sweep(const RunConfig& cfg, const std::string& out_dir);

}  // namespace pasmr
