#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pasmr/corpus.hpp"
#include "pasmr/eval.hpp"
#include "pasmr/model.hpp"
#include "pasmr/pam.hpp"
#include "pasmr/srl.hpp"

namespace pasmr {

/// Whole-run configuration. Every field has a default; an empty config file
/// reproduces the paper-literal method at the default scale. out_dir is not
/// part of the config hash — it never affects computed artifacts.
struct RunConfig {
    std::uint64_t seed = 12345;
    std::string kernels = "auto";  // auto | scalar | avx2
    std::string out_dir = "runs/out";
    CorpusConfig corpus;
    int embed_dim = 32;
    int hidden_dim = 64;
    double init_range = 0.08;
    PamConfig pam;
    SrlConfig srl;
    bool srl_ood_data = false;  // train SRL on the OOD question set
    bool srl_audit_log = false;
    EvalConfig eval;
    std::vector<int> sweep_sizes = {256, 512, 1024, 2048};

    ModelDims dims_for(const World& w) const {
        return ModelDims{w.vocab_size, static_cast<std::int32_t>(embed_dim),
                         static_cast<std::int32_t>(hidden_dim)};
    }
};

RunConfig default_config();

/// Parses a JSON config. Missing fields default; unknown keys are an error.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

/// Canonical full-form serialization; load(save(c)) == c, bit for bit.
std::string config_to_json(const RunConfig& cfg);
void save_config_file(const std::string& path, const RunConfig& cfg);

/// FNV-1a over the canonical serialization with out_dir blanked.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace pasmr
