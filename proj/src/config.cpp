#include "mbmon/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mbmon {

namespace {

using nlohmann::json;

void require_known(const json& j, const std::string& context,
                   const std::set<std::string>& allowed) {
    if (!j.is_object()) {
        throw ConfigError("config: '" + context + "' must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end()) {
            throw ConfigError("config: unknown key '" + key + "' in " + context);
        }
    }
}

template <class T>
void read_field(const json& j, const char* key, T& out, const char* context) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: key '") + key + "' in " + context +
                          " has the wrong type");
    }
}

}  // namespace

SimulateConfig SimulateConfig::defaults() {
    SimulateConfig sim;
    sim.targets[FaultKind::step] = {7};
    sim.targets[FaultKind::random_variation] = {7};
    sim.targets[FaultKind::slow_drift] = {6, 7, 8, 20, 29, 9, 10};
    sim.targets[FaultKind::sticking] = {20, 29};
    return sim;
}

RunConfig RunConfig::defaults() {
    RunConfig config;
    // Four blocks over 31 variables: inputs, reactor, separation train,
    // stripper.
    config.partition.blocks = {
        {1, {0, 1, 2, 4, 5, 22, 23, 24}},
        {2, {6, 7, 8, 20, 29}},
        {3, {9, 10, 11, 12, 13, 19, 21, 26, 27, 30}},
        {4, {3, 14, 15, 16, 17, 18, 25, 28}},
    };
    config.simulate = SimulateConfig::defaults();
    return config;
}

void RunConfig::validate() const {
    if (in_control_path.empty() || out_dir.empty()) {
        throw ConfigError("config: data paths must be non-empty");
    }
    partition.validate();
    pipeline.validate();
    if (simulate.t_train < 2 || simulate.t_test < 2) {
        throw ConfigError("config: simulate lengths must be >= 2");
    }
    if (simulate.onset < 0 || simulate.onset >= simulate.t_test) {
        throw ConfigError("config: simulate onset " + std::to_string(simulate.onset) +
                          " outside test stream of length " + std::to_string(simulate.t_test));
    }
    if (simulate.magnitude < 0.0) {
        throw ConfigError("config: simulate magnitude must be >= 0");
    }
}

RunConfig run_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: parse failure: ") + e.what());
    }
    RunConfig config = RunConfig::defaults();
    require_known(j, "top level",
                  {"data", "blocks", "olae", "stats", "fusion", "simulate", "ablation", "seed",
                   "jobs", "train_fraction"});

    if (j.contains("data")) {
        require_known(j.at("data"), "data", {"in_control", "out_dir"});
        read_field(j.at("data"), "in_control", config.in_control_path, "data");
        read_field(j.at("data"), "out_dir", config.out_dir, "data");
    }
    if (j.contains("blocks")) {
        std::vector<std::vector<int>> blocks;
        try {
            blocks = j.at("blocks").get<std::vector<std::vector<int>>>();
        } catch (const json::exception&) {
            throw ConfigError("config: 'blocks' must be an array of integer arrays");
        }
        config.partition.blocks.clear();
        int id = 1;
        for (auto& cols : blocks) {
            config.partition.blocks.emplace_back(id++, std::move(cols));
        }
    }
    if (j.contains("olae")) {
        const auto& olae = j.at("olae");
        require_known(olae, "olae",
                      {"window", "hidden", "latent", "epochs", "batch_size", "learning_rate",
                       "ortho_weight", "gradient_clip_norm", "adam_beta1", "adam_beta2",
                       "adam_epsilon", "gram_normalization", "ortho_exclude_diagonal"});
        read_field(olae, "window", config.pipeline.window, "olae");
        read_field(olae, "hidden", config.pipeline.hidden, "olae");
        read_field(olae, "latent", config.pipeline.latent, "olae");
        read_field(olae, "epochs", config.pipeline.train.epochs, "olae");
        read_field(olae, "batch_size", config.pipeline.train.batch_size, "olae");
        read_field(olae, "learning_rate", config.pipeline.train.learning_rate, "olae");
        read_field(olae, "ortho_weight", config.pipeline.train.ortho_weight, "olae");
        read_field(olae, "gradient_clip_norm", config.pipeline.train.gradient_clip_norm, "olae");
        read_field(olae, "adam_beta1", config.pipeline.train.beta1, "olae");
        read_field(olae, "adam_beta2", config.pipeline.train.beta2, "olae");
        read_field(olae, "adam_epsilon", config.pipeline.train.epsilon, "olae");
        if (olae.contains("gram_normalization")) {
            const auto gram = olae.at("gram_normalization").get<std::string>();
            if (gram == "batch") {
                config.pipeline.train.gram_normalization = GramNormalization::batch;
            } else if (gram == "none") {
                config.pipeline.train.gram_normalization = GramNormalization::none;
            } else {
                throw ConfigError("config: gram_normalization must be 'batch' or 'none'");
            }
        }
        read_field(olae, "ortho_exclude_diagonal", config.pipeline.train.ortho_exclude_diagonal,
                   "olae");
    }
    if (j.contains("stats")) {
        const auto& stats = j.at("stats");
        require_known(stats, "stats",
                      {"quantiles", "allowance", "top_r", "cusum_form", "t2_confidence",
                       "target_far", "calib_reps", "calib_horizon"});
        read_field(stats, "quantiles", config.pipeline.quantiles, "stats");
        read_field(stats, "allowance", config.pipeline.allowance, "stats");
        read_field(stats, "top_r", config.pipeline.top_r, "stats");
        if (stats.contains("cusum_form")) {
            const auto form = stats.at("cusum_form").get<std::string>();
            if (form == "paper") {
                config.pipeline.cusum_form = CusumForm::paper;
            } else if (form == "qiu_hawkins") {
                config.pipeline.cusum_form = CusumForm::qiu_hawkins;
            } else {
                throw ConfigError("config: cusum_form must be 'paper' or 'qiu_hawkins'");
            }
        }
        read_field(stats, "t2_confidence", config.pipeline.t2_confidence, "stats");
        read_field(stats, "target_far", config.pipeline.target_far, "stats");
        read_field(stats, "calib_reps", config.pipeline.calib_reps, "stats");
        read_field(stats, "calib_horizon", config.pipeline.calib_horizon, "stats");
    }
    if (j.contains("fusion")) {
        const auto& fusion = j.at("fusion");
        require_known(fusion, "fusion",
                      {"alpha", "alarm_threshold", "b_lim_confidence", "sustain"});
        read_field(fusion, "alpha", config.pipeline.alpha, "fusion");
        if (fusion.contains("alarm_threshold")) {
            config.pipeline.alarm_threshold = fusion.at("alarm_threshold").is_null()
                                                  ? -1.0
                                                  : fusion.at("alarm_threshold").get<double>();
        }
        read_field(fusion, "b_lim_confidence", config.pipeline.b_lim_confidence, "fusion");
        read_field(fusion, "sustain", config.pipeline.sustain, "fusion");
    }
    if (j.contains("simulate")) {
        const auto& sim = j.at("simulate");
        require_known(sim, "simulate", {"t_train", "t_test", "onset", "magnitude", "targets"});
        read_field(sim, "t_train", config.simulate.t_train, "simulate");
        read_field(sim, "t_test", config.simulate.t_test, "simulate");
        read_field(sim, "onset", config.simulate.onset, "simulate");
        read_field(sim, "magnitude", config.simulate.magnitude, "simulate");
        if (sim.contains("targets")) {
            require_known(sim.at("targets"), "simulate.targets",
                          {"step", "random_variation", "slow_drift", "sticking"});
            for (const auto& [key, value] : sim.at("targets").items()) {
                try {
                    config.simulate.targets[fault_kind_from_string(key)] =
                        value.get<std::vector<int>>();
                } catch (const json::exception&) {
                    throw ConfigError("config: simulate.targets." + key +
                                      " must be an integer array");
                }
            }
        }
    }
    if (j.contains("ablation")) {
        config.pipeline.ablation = ablation_from_string(j.at("ablation").get<std::string>());
    }
    read_field(j, "seed", config.pipeline.seed, "top level");
    read_field(j, "jobs", config.pipeline.jobs, "top level");
    read_field(j, "train_fraction", config.pipeline.train_fraction, "top level");

    config.validate();
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("config: cannot open '" + path + "'");
    }
    std::stringstream text;
    text << in.rdbuf();
    return run_config_from_json(text.str());
}

std::string run_config_to_json(const RunConfig& config) {
    nlohmann::ordered_json pipeline = nlohmann::ordered_json::parse(
        pipeline_config_to_json(config.pipeline));
    nlohmann::ordered_json j;
    j["data"] = {{"in_control", config.in_control_path}, {"out_dir", config.out_dir}};
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    for (const auto& [id, cols] : config.partition.blocks) {
        (void)id;
        blocks.push_back(cols);
    }
    j["blocks"] = blocks;
    j["olae"] = pipeline.at("olae");
    j["stats"] = pipeline.at("stats");
    j["fusion"] = pipeline.at("fusion");
    nlohmann::ordered_json targets;
    for (const auto& [kind, vars] : config.simulate.targets) {
        targets[to_string(kind)] = vars;
    }
    j["simulate"] = {{"t_train", config.simulate.t_train},
                     {"t_test", config.simulate.t_test},
                     {"onset", config.simulate.onset},
                     {"magnitude", config.simulate.magnitude},
                     {"targets", targets}};
    j["ablation"] = to_string(config.pipeline.ablation);
    j["seed"] = config.pipeline.seed;
    j["jobs"] = config.pipeline.jobs;
    j["train_fraction"] = config.pipeline.train_fraction;
    return j.dump(2);
}

}  // namespace mbmon
