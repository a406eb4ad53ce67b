#include "pasmr/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "pasmr/io.hpp"
#include "pasmr/kernels.hpp"

namespace pasmr {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (known.find(key) == known.end())
            throw std::invalid_argument("config: unknown key '" + where + key + "'");
    }
}

template <typename T>
void get_if(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

json corpus_to_json(const CorpusConfig& c) {
    return json{{"n_languages", c.world.n_languages},
                {"n_low_resource", c.world.n_low_resource},
                {"low_resource_level", c.world.low_resource_level},
                {"n_op_synonyms", c.world.n_op_synonyms},
                {"n_fillers", c.world.n_fillers},
                {"n_names", c.world.n_names},
                {"per_language_budget", c.per_language_budget},
                {"n_heldout", c.n_heldout},
                {"operand_min", c.operand_min},
                {"operand_max", c.operand_max},
                {"value_cap", c.value_cap},
                {"ood_operand_min", c.ood_operand_min},
                {"ood_operand_max", c.ood_operand_max},
                {"ood_value_cap", c.ood_value_cap},
                {"ood", c.ood_flag},
                {"split_seed", c.split_seed}};
}

CorpusConfig corpus_from_json(const json& obj) {
    CorpusConfig c;
    check_keys(obj,
               {"n_languages", "n_low_resource", "low_resource_level", "n_op_synonyms",
                "n_fillers", "n_names", "per_language_budget", "n_heldout", "operand_min",
                "operand_max", "value_cap", "ood_operand_min", "ood_operand_max",
                "ood_value_cap", "ood", "split_seed"},
               "corpus.");
    get_if(obj, "n_languages", c.world.n_languages);
    get_if(obj, "n_low_resource", c.world.n_low_resource);
    get_if(obj, "low_resource_level", c.world.low_resource_level);
    get_if(obj, "n_op_synonyms", c.world.n_op_synonyms);
    get_if(obj, "n_fillers", c.world.n_fillers);
    get_if(obj, "n_names", c.world.n_names);
    get_if(obj, "per_language_budget", c.per_language_budget);
    get_if(obj, "n_heldout", c.n_heldout);
    get_if(obj, "operand_min", c.operand_min);
    get_if(obj, "operand_max", c.operand_max);
    get_if(obj, "value_cap", c.value_cap);
    get_if(obj, "ood_operand_min", c.ood_operand_min);
    get_if(obj, "ood_operand_max", c.ood_operand_max);
    get_if(obj, "ood_value_cap", c.ood_value_cap);
    get_if(obj, "ood", c.ood_flag);
    get_if(obj, "split_seed", c.split_seed);
    return c;
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
    check_keys(root, {"seed", "kernels", "out_dir", "corpus", "model", "pam", "srl", "eval",
                      "sweep"},
               "");

    RunConfig cfg;
    get_if(root, "seed", cfg.seed);
    get_if(root, "kernels", cfg.kernels);
    get_if(root, "out_dir", cfg.out_dir);
    if (root.contains("corpus")) cfg.corpus = corpus_from_json(root.at("corpus"));

    if (root.contains("model")) {
        const json& m = root.at("model");
        check_keys(m, {"embed_dim", "hidden_dim", "init_range"}, "model.");
        get_if(m, "embed_dim", cfg.embed_dim);
        get_if(m, "hidden_dim", cfg.hidden_dim);
        get_if(m, "init_range", cfg.init_range);
    }
    if (root.contains("pam")) {
        const json& p = root.at("pam");
        check_keys(p, {"epochs", "batch_size", "lr", "adam_beta1", "adam_beta2", "adam_eps",
                       "probe_size"},
                   "pam.");
        get_if(p, "epochs", cfg.pam.epochs);
        get_if(p, "batch_size", cfg.pam.batch_size);
        get_if(p, "lr", cfg.pam.lr);
        get_if(p, "adam_beta1", cfg.pam.adam_beta1);
        get_if(p, "adam_beta2", cfg.pam.adam_beta2);
        get_if(p, "adam_eps", cfg.pam.adam_eps);
        get_if(p, "probe_size", cfg.pam.probe_size);
    }
    if (root.contains("srl")) {
        const json& s = root.at("srl");
        check_keys(s,
                   {"beta", "gamma", "epsilon", "reward_spread", "return_convention",
                    "reward_source", "rollouts_per_question", "temperature", "batch_size",
                    "total_steps", "max_gen_len", "lr", "adam_beta1", "adam_beta2", "adam_eps",
                    "ood_data", "audit_log"},
                   "srl.");
        get_if(s, "beta", cfg.srl.beta);
        get_if(s, "gamma", cfg.srl.gamma);
        get_if(s, "epsilon", cfg.srl.epsilon);
        if (s.contains("reward_spread"))
            cfg.srl.reward_spread = reward_spread_from_string(s.at("reward_spread").get<std::string>());
        if (s.contains("return_convention"))
            cfg.srl.return_convention =
                return_convention_from_string(s.at("return_convention").get<std::string>());
        if (s.contains("reward_source"))
            cfg.srl.reward_source = reward_source_from_string(s.at("reward_source").get<std::string>());
        get_if(s, "rollouts_per_question", cfg.srl.rollouts_per_question);
        get_if(s, "temperature", cfg.srl.temperature);
        get_if(s, "batch_size", cfg.srl.batch_size);
        get_if(s, "total_steps", cfg.srl.total_steps);
        get_if(s, "max_gen_len", cfg.srl.max_gen_len);
        get_if(s, "lr", cfg.srl.lr);
        get_if(s, "adam_beta1", cfg.srl.adam_beta1);
        get_if(s, "adam_beta2", cfg.srl.adam_beta2);
        get_if(s, "adam_eps", cfg.srl.adam_eps);
        get_if(s, "ood_data", cfg.srl_ood_data);
        get_if(s, "audit_log", cfg.srl_audit_log);
    }
    if (root.contains("eval")) {
        const json& e = root.at("eval");
        check_keys(e, {"mode", "noise_rate", "max_gen_len"}, "eval.");
        if (e.contains("mode")) cfg.eval.mode = eval_mode_from_string(e.at("mode").get<std::string>());
        get_if(e, "noise_rate", cfg.eval.noise_rate);
        get_if(e, "max_gen_len", cfg.eval.max_gen_len);
    }
    if (root.contains("sweep")) {
        const json& s = root.at("sweep");
        check_keys(s, {"sizes"}, "sweep.");
        get_if(s, "sizes", cfg.sweep_sizes);
    }
    parse_kernel_backend(cfg.kernels);  // validates the name
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_to_json(const RunConfig& cfg) {
    json root;
    root["seed"] = cfg.seed;
    root["kernels"] = cfg.kernels;
    root["out_dir"] = cfg.out_dir;
    root["corpus"] = corpus_to_json(cfg.corpus);
    root["model"] = json{{"embed_dim", cfg.embed_dim},
                         {"hidden_dim", cfg.hidden_dim},
                         {"init_range", cfg.init_range}};
    root["pam"] = json{{"epochs", cfg.pam.epochs},
                       {"batch_size", cfg.pam.batch_size},
                       {"lr", cfg.pam.lr},
                       {"adam_beta1", cfg.pam.adam_beta1},
                       {"adam_beta2", cfg.pam.adam_beta2},
                       {"adam_eps", cfg.pam.adam_eps},
                       {"probe_size", cfg.pam.probe_size}};
    root["srl"] = json{{"beta", cfg.srl.beta},
                       {"gamma", cfg.srl.gamma},
                       {"epsilon", cfg.srl.epsilon},
                       {"reward_spread", to_string(cfg.srl.reward_spread)},
                       {"return_convention", to_string(cfg.srl.return_convention)},
                       {"reward_source", to_string(cfg.srl.reward_source)},
                       {"rollouts_per_question", cfg.srl.rollouts_per_question},
                       {"temperature", cfg.srl.temperature},
                       {"batch_size", cfg.srl.batch_size},
                       {"total_steps", cfg.srl.total_steps},
                       {"max_gen_len", cfg.srl.max_gen_len},
                       {"lr", cfg.srl.lr},
                       {"adam_beta1", cfg.srl.adam_beta1},
                       {"adam_beta2", cfg.srl.adam_beta2},
                       {"adam_eps", cfg.srl.adam_eps},
                       {"ood_data", cfg.srl_ood_data},
                       {"audit_log", cfg.srl_audit_log}};
    root["eval"] = json{{"mode", to_string(cfg.eval.mode)},
                        {"noise_rate", cfg.eval.noise_rate},
                        {"max_gen_len", cfg.eval.max_gen_len}};
    root["sweep"] = json{{"sizes", cfg.sweep_sizes}};
    return root.dump(2);
}

void save_config_file(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << config_to_json(cfg) << '\n';
}

std::uint64_t config_hash(const RunConfig& cfg) {
    RunConfig canonical = cfg;
    canonical.out_dir.clear();
    return fnv1a64(config_to_json(canonical));
}

}  // namespace pasmr
