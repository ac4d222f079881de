#include "mbmon/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mbmon/config.hpp"
#include "mbmon/core.hpp"
#include "mbmon/pipeline.hpp"
#include "mbmon/simgen.hpp"

namespace fs = std::filesystem;

namespace mbmon {

namespace {

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::string out_dir;
};

RunConfig effective_config(const GlobalFlags& flags) {
    RunConfig config =
        flags.config_path.empty() ? RunConfig::defaults() : load_run_config(flags.config_path);
    if (flags.seed) {
        config.pipeline.seed = *flags.seed;
    }
    if (flags.jobs) {
        config.pipeline.jobs = *flags.jobs;
    }
    if (!flags.out_dir.empty()) {
        config.out_dir = flags.out_dir;
    }
    config.validate();
    return config;
}

std::string stem_of(const std::string& path) {
    return fs::path(path).stem().string();
}

Eigen::VectorXd raw_stdevs(const StreamMatrix& stream) {
    Eigen::VectorXd stdevs(stream.cols());
    for (Eigen::Index j = 0; j < stream.cols(); ++j) {
        const auto col = stream.values.col(j);
        const double mean = col.mean();
        stdevs[j] = std::sqrt((col.array() - mean).square().mean());
    }
    return stdevs;
}

int cmd_simulate(const RunConfig& config, const std::string& faults_arg, int t_train, int t_test,
                 int onset, double magnitude, const std::vector<int>& target_override) {
    std::vector<FaultKind> kinds;
    if (faults_arg == "all") {
        kinds = {FaultKind::step, FaultKind::random_variation, FaultKind::slow_drift,
                 FaultKind::sticking};
    } else if (faults_arg != "none") {
        kinds = {fault_kind_from_string(faults_arg)};
    }
    if (onset >= t_test) {
        throw ConfigError("simulate: onset " + std::to_string(onset) +
                          " must precede the test stream end " + std::to_string(t_test));
    }
    if (t_train < 2 || t_test < 2) {
        throw ConfigError("simulate: stream lengths must be >= 2");
    }
    if (magnitude < 0.0) {
        throw ConfigError("simulate: magnitude must be >= 0");
    }

    const std::uint64_t seed = config.pipeline.seed;
    const ProcessSpec spec = ProcessSpec::default_benchmark(mix_seed(seed, "process-spec"));
    const std::string hash = spec_hash(spec);

    // Validate every fault before any file is written.
    std::vector<FaultSpec> fault_specs;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        FaultSpec fault;
        fault.kind = kinds[i];
        fault.magnitude = magnitude;
        fault.onset = onset;
        fault.seed = mix_seed(seed, "fault", i);
        if (!target_override.empty()) {
            fault.targets = target_override;
        } else {
            const auto it = config.simulate.targets.find(kinds[i]);
            if (it == config.simulate.targets.end()) {
                throw ConfigError("simulate: no target variables configured for fault '" +
                                  to_string(kinds[i]) + "'");
            }
            fault.targets = it->second;
        }
        fault.validate(t_test, spec.variable_count());
        fault_specs.push_back(std::move(fault));
    }

    fs::create_directories(config.out_dir);
    const fs::path out(config.out_dir);

    const StreamMatrix in_control = generate(spec, t_train, mix_seed(seed, "in-control"));
    const std::string in_control_path = (out / "in_control.csv").string();
    write_csv(in_control, in_control_path);
    StreamMeta meta;
    meta.seed = seed;
    meta.spec_hash = hash;
    write_meta(in_control_path, meta);
    std::cout << "wrote " << in_control_path << " (" << t_train << " samples)\n";

    const Eigen::VectorXd stdevs = raw_stdevs(in_control);
    for (std::size_t i = 0; i < fault_specs.size(); ++i) {
        const StreamMatrix base =
            generate(spec, t_test, mix_seed(seed, "test-stream", i));
        const StreamMatrix faulted = inject_fault(base, fault_specs[i], stdevs);
        const std::string name = "fault_" + to_string(fault_specs[i].kind) + ".csv";
        const std::string path = (out / name).string();
        write_csv(faulted, path);
        StreamMeta fault_meta;
        fault_meta.seed = seed;
        fault_meta.spec_hash = hash;
        fault_meta.fault = fault_specs[i];
        fault_meta.onset = fault_specs[i].onset;
        write_meta(path, fault_meta);
        std::cout << "wrote " << path << " (onset " << fault_specs[i].onset << ")\n";
    }
    return 0;
}

int cmd_train(const RunConfig& config, const std::string& data_override) {
    const std::string data_path =
        data_override.empty() ? config.in_control_path : data_override;
    if (!fs::exists(data_path)) {
        throw ConfigError("train (load stage): in-control data file '" + data_path +
                          "' not found");
    }
    const StreamMatrix in_control = load_csv(data_path);

    TrainingLog log;
    PlantArtifacts artifacts =
        offline_learn(in_control, config.partition, config.pipeline, &log);

    const fs::path out(config.out_dir);
    fs::create_directories(out);
    save_artifacts(artifacts, (out / "artifacts").string());

    std::ofstream history(out / "training_history.csv", std::ios::binary);
    history << "block_id,epoch,total,mse,ortho\n";
    for (const auto& [block_id, entries] : log.per_block) {
        for (std::size_t e = 0; e < entries.size(); ++e) {
            history << block_id << ',' << e << ',' << format_g17(entries[e].total) << ','
                    << format_g17(entries[e].mse) << ',' << format_g17(entries[e].ortho) << '\n';
        }
    }
    std::cout << "trained " << artifacts.blocks.size() << " block(s) -> "
              << (out / "artifacts").string() << (artifacts.baseline ? " (baseline)" : "")
              << "\n";
    return 0;
}

int cmd_monitor(const RunConfig& config, const std::string& artifacts_dir,
                const std::string& data_path, const std::string& ablate_flag) {
    const std::string dir =
        artifacts_dir.empty() ? (fs::path(config.out_dir) / "artifacts").string()
                              : artifacts_dir;
    if (!fs::exists(fs::path(dir) / "plant.json")) {
        throw ConfigError("monitor (load stage): no artifacts under '" + dir + "'");
    }
    if (data_path.empty()) {
        throw ConfigError("monitor: --data is required");
    }
    if (!fs::exists(data_path)) {
        throw ConfigError("monitor (load stage): data file '" + data_path + "' not found");
    }
    PlantArtifacts artifacts = load_artifacts(dir);
    if (!ablate_flag.empty()) {
        const AblationMode mode = ablation_from_string(ablate_flag);
        if (mode != artifacts.config.ablation) {
            if (mode != AblationMode::no_cusum &&
                artifacts.blocks.front().stats.grid.stream_count() == 0) {
                throw ConfigError("monitor: artifacts were trained without CUSUM detectors; "
                                  "cannot ablate to '" + ablate_flag + "'");
            }
            std::cerr << "monitor: overriding artifact ablation mode '"
                      << to_string(artifacts.config.ablation) << "' with '" << ablate_flag
                      << "'; block limits were calibrated for the original mode\n";
            artifacts.config.ablation = mode;
        }
    }

    const StreamMatrix stream = load_csv(data_path);
    const auto records = monitor(artifacts, stream);

    fs::create_directories(config.out_dir);
    const std::string records_path =
        (fs::path(config.out_dir) / ("records_" + stem_of(data_path) + ".csv")).string();
    write_records_csv(records, artifacts, records_path);

    // Propagate the fault onset so evaluate can pick it up.
    if (const auto meta = load_meta(data_path)) {
        StreamMeta records_meta = *meta;
        write_meta(records_path, records_meta);
    }

    long alarms = 0;
    for (const auto& r : records) {
        alarms += r.alarm_raw ? 1 : 0;
    }
    const double fraction =
        records.empty() ? 0.0 : static_cast<double>(alarms) / static_cast<double>(records.size());
    std::printf("records: %zu, raw alarm fraction: %.4f -> %s\n", records.size(), fraction,
                records_path.c_str());
    return 0;
}

int cmd_evaluate(const RunConfig& config, const std::string& records_path,
                 std::optional<int> onset_flag, int sustain_override) {
    if (records_path.empty()) {
        throw ConfigError("evaluate: --records is required");
    }
    if (!fs::exists(records_path)) {
        throw ConfigError("evaluate (load stage): records file '" + records_path +
                          "' not found");
    }
    const auto records = read_records_csv(records_path);

    std::optional<int> onset = onset_flag;
    if (!onset) {
        if (const auto meta = load_meta(records_path); meta && meta->onset) {
            onset = meta->onset;
        }
    }
    const int sustain = sustain_override > 0 ? sustain_override : config.pipeline.sustain;

    std::string label = stem_of(records_path);
    if (label.rfind("records_", 0) == 0) {
        label = label.substr(8);
    }
    const EvalCase result = evaluate(records, onset, sustain, label);

    fs::create_directories(config.out_dir);
    const fs::path out(config.out_dir);
    write_report_csv({result}, (out / ("report_" + label + ".csv")).string());
    write_report_json({result}, (out / ("report_" + label + ".json")).string());

    if (result.onset) {
        std::printf("%s: FDD=%s FDR=%.4f FAR=%s detected=%d\n", label.c_str(),
                    result.fdd ? std::to_string(*result.fdd).c_str() : "--",
                    result.fdr.value_or(0.0),
                    result.far ? format_g17(*result.far).substr(0, 6).c_str() : "n/a",
                    result.detected ? 1 : 0);
    } else {
        std::printf("%s: FAR=%.4f (in-control)\n", label.c_str(), result.far.value_or(0.0));
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Multi-block process monitoring: orthogonal LSTM autoencoders with "
                 "quantile CUSUM and adaptive Bayesian fusion"};
    app.require_subcommand(1);

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "JSON config file");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "master seed override");
    int jobs_value = 0;
    auto* jobs_opt = app.add_option("--jobs", jobs_value, "per-block parallelism");
    app.add_option("--out", flags.out_dir, "output directory override");

    auto* simulate = app.add_subcommand("simulate", "generate benchmark streams");
    std::string faults = "all";
    simulate->add_option("--faults", faults,
                         "all, none, step, random_variation, slow_drift or sticking");
    int t_train = -1, t_test = -1, onset = -1;
    double magnitude = -1.0;
    simulate->add_option("--t-train", t_train, "in-control stream length");
    simulate->add_option("--T", t_test, "faulted stream length");
    simulate->add_option("--onset", onset, "fault onset sample");
    simulate->add_option("--magnitude", magnitude, "fault magnitude in stdev units");
    std::vector<int> targets;
    simulate->add_option("--targets", targets, "target variable override")->delimiter(',');

    auto* train_cmd = app.add_subcommand("train", "offline learning from in-control data");
    std::string train_data;
    train_cmd->add_option("--data", train_data, "in-control CSV (overrides config)");
    double ortho_weight = -1.0;
    auto* ow_opt = train_cmd->add_option("--ortho-weight", ortho_weight,
                                         "orthogonality loss weight (0 = baseline)");
    int epochs = -1;
    train_cmd->add_option("--epochs", epochs, "training epochs override");
    std::string train_ablate;
    train_cmd->add_option("--ablate", train_ablate, "full, no_bf or no_cusum");

    auto* monitor_cmd = app.add_subcommand("monitor", "score a stream against artifacts");
    std::string artifacts_dir, monitor_data, monitor_ablate;
    monitor_cmd->add_option("--artifacts", artifacts_dir, "artifacts directory");
    monitor_cmd->add_option("--data", monitor_data, "stream CSV to monitor");
    monitor_cmd->add_option("--ablate", monitor_ablate, "full, no_bf or no_cusum");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "detection metrics from records");
    std::string records_path;
    evaluate_cmd->add_option("--records", records_path, "records CSV from monitor");
    int onset_flag = -1;
    evaluate_cmd->add_option("--onset", onset_flag, "fault onset sample index");
    int sustain = -1;
    evaluate_cmd->add_option("--sustain", sustain, "consecutive alarms for detection");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (seed_opt->count() > 0) {
            flags.seed = seed_value;
        }
        if (jobs_opt->count() > 0) {
            flags.jobs = jobs_value;
        }
        RunConfig config = effective_config(flags);

        if (simulate->parsed()) {
            return cmd_simulate(config, faults,
                                t_train > 0 ? t_train : config.simulate.t_train,
                                t_test > 0 ? t_test : config.simulate.t_test,
                                onset >= 0 ? onset : config.simulate.onset,
                                magnitude >= 0.0 ? magnitude : config.simulate.magnitude,
                                targets);
        }
        if (train_cmd->parsed()) {
            if (ow_opt->count() > 0) {
                if (ortho_weight < 0.0) {
                    throw ConfigError("train: --ortho-weight must be >= 0");
                }
                config.pipeline.train.ortho_weight = ortho_weight;
            }
            if (epochs > 0) {
                config.pipeline.train.epochs = epochs;
            }
            if (!train_ablate.empty()) {
                config.pipeline.ablation = ablation_from_string(train_ablate);
            }
            return cmd_train(config, train_data);
        }
        if (monitor_cmd->parsed()) {
            return cmd_monitor(config, artifacts_dir, monitor_data, monitor_ablate);
        }
        if (evaluate_cmd->parsed()) {
            return cmd_evaluate(config, records_path,
                                onset_flag >= 0 ? std::optional<int>(onset_flag) : std::nullopt,
                                sustain);
        }
        throw ConfigError("no command given");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace mbmon
