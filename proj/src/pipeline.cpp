#include "mbmon/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "json_tensors.hpp"

namespace fs = std::filesystem;

namespace mbmon {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Runs fn(0..count-1) on up to `jobs` threads; block outputs are written to
// pre-sized slots so the result order never depends on scheduling.
void parallel_blocks(int count, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, count));
    if (jobs == 1) {
        for (int i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    std::atomic<int> next{0};
    for (int w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= count) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

struct BlockSeries {
    std::vector<double> t2;
    std::vector<double> w;  // empty when the CUSUM metric is disabled
};

// Per-step statistics over trailing windows: window i covers rows
// [i, i+L-1] and scores sample index i+L-1. Codes are centered by the
// in-control validation mean; the CUSUM recursion starts from zero state and
// carries across steps.
BlockSeries score_block(const OlaeModel& model, const VectorXd& code_mean,
                        const T2Model& t2model, const QuantileGrid* grid,
                        const CusumConfig* cusum, const Eigen::MatrixXd& values, int window) {
    WindowedDataset ds(values, window, 1);
    BlockSeries series;
    series.t2.reserve(static_cast<std::size_t>(ds.size()));
    const bool with_cusum = grid != nullptr && cusum != nullptr && grid->stream_count() > 0;
    CusumState state;
    if (with_cusum) {
        series.w.reserve(static_cast<std::size_t>(ds.size()));
        state = CusumState::zero(grid->stream_count(), cusum->d);
    }
    for (int i = 0; i < ds.size(); ++i) {
        const VectorXd code = encode(model, ds.window(i)) - code_mean;
        series.t2.push_back(t2_score(t2model, code));
        if (with_cusum) {
            series.w.push_back(cusum_step(state, *grid, code, *cusum));
        }
    }
    return series;
}

std::vector<MetricReading> block_readings(double t2, double t2_lim, const double* w, double h,
                                          int block_id) {
    std::vector<MetricReading> readings;
    readings.push_back({t2, t2_lim, MetricId::t2, block_id});
    if (w != nullptr) {
        readings.push_back({*w, h, MetricId::cusum, block_id});
    }
    return readings;
}

nlohmann::ordered_json config_to_json_obj(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["olae"] = {{"window", c.window},
                 {"hidden", c.hidden},
                 {"latent", c.latent},
                 {"epochs", c.train.epochs},
                 {"batch_size", c.train.batch_size},
                 {"learning_rate", c.train.learning_rate},
                 {"ortho_weight", c.train.ortho_weight},
                 {"gradient_clip_norm", c.train.gradient_clip_norm},
                 {"adam_beta1", c.train.beta1},
                 {"adam_beta2", c.train.beta2},
                 {"adam_epsilon", c.train.epsilon},
                 {"gram_normalization",
                  c.train.gram_normalization == GramNormalization::batch ? "batch" : "none"},
                 {"ortho_exclude_diagonal", c.train.ortho_exclude_diagonal}};
    j["stats"] = {{"quantiles", c.quantiles},
                  {"allowance", c.allowance},
                  {"top_r", c.top_r},
                  {"cusum_form", c.cusum_form == CusumForm::paper ? "paper" : "qiu_hawkins"},
                  {"t2_confidence", c.t2_confidence},
                  {"target_far", c.target_far},
                  {"calib_reps", c.calib_reps},
                  {"calib_horizon", c.calib_horizon}};
    j["fusion"] = {{"alpha", c.alpha},
                   {"b_lim_confidence", c.b_lim_confidence},
                   {"sustain", c.sustain}};
    if (c.alarm_threshold < 0.0) {
        j["fusion"]["alarm_threshold"] = nullptr;
    } else {
        j["fusion"]["alarm_threshold"] = c.alarm_threshold;
    }
    j["ablation"] = to_string(c.ablation);
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["train_fraction"] = c.train_fraction;
    return j;
}

PipelineConfig config_from_json_obj(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        const auto& olae = j.at("olae");
        c.window = olae.at("window").get<int>();
        c.hidden = olae.at("hidden").get<int>();
        c.latent = olae.at("latent").get<int>();
        c.train.epochs = olae.at("epochs").get<int>();
        c.train.batch_size = olae.at("batch_size").get<int>();
        c.train.learning_rate = olae.at("learning_rate").get<double>();
        c.train.ortho_weight = olae.at("ortho_weight").get<double>();
        c.train.gradient_clip_norm = olae.at("gradient_clip_norm").get<double>();
        c.train.beta1 = olae.at("adam_beta1").get<double>();
        c.train.beta2 = olae.at("adam_beta2").get<double>();
        c.train.epsilon = olae.at("adam_epsilon").get<double>();
        const auto gram = olae.at("gram_normalization").get<std::string>();
        if (gram == "batch") {
            c.train.gram_normalization = GramNormalization::batch;
        } else if (gram == "none") {
            c.train.gram_normalization = GramNormalization::none;
        } else {
            throw ConfigError("config: gram_normalization must be 'batch' or 'none'");
        }
        c.train.ortho_exclude_diagonal = olae.at("ortho_exclude_diagonal").get<bool>();

        const auto& stats = j.at("stats");
        c.quantiles = stats.at("quantiles").get<int>();
        c.allowance = stats.at("allowance").get<double>();
        c.top_r = stats.at("top_r").get<int>();
        const auto form = stats.at("cusum_form").get<std::string>();
        if (form == "paper") {
            c.cusum_form = CusumForm::paper;
        } else if (form == "qiu_hawkins") {
            c.cusum_form = CusumForm::qiu_hawkins;
        } else {
            throw ConfigError("config: cusum_form must be 'paper' or 'qiu_hawkins'");
        }
        c.t2_confidence = stats.at("t2_confidence").get<double>();
        c.target_far = stats.at("target_far").get<double>();
        c.calib_reps = stats.at("calib_reps").get<int>();
        c.calib_horizon = stats.at("calib_horizon").get<int>();

        const auto& fusion = j.at("fusion");
        c.alpha = fusion.at("alpha").get<double>();
        c.alarm_threshold =
            fusion.at("alarm_threshold").is_null() ? -1.0 : fusion.at("alarm_threshold").get<double>();
        c.b_lim_confidence = fusion.at("b_lim_confidence").get<double>();
        c.sustain = fusion.at("sustain").get<int>();

        c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
        c.seed = j.at("seed").get<std::uint64_t>();
        c.jobs = j.at("jobs").get<int>();
        c.train_fraction = j.at("train_fraction").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: missing or malformed field: ") + e.what());
    }
    c.validate();
    return c;
}

std::string fmt_opt_long(const std::optional<long>& v) {
    return v ? std::to_string(*v) : std::string("--");
}

std::string fmt_fraction(const std::optional<double>& v) {
    if (!v) {
        return "";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

}  // namespace

AblationMode ablation_from_string(const std::string& name) {
    if (name == "full") return AblationMode::full;
    if (name == "no_bf") return AblationMode::no_bf;
    if (name == "no_cusum") return AblationMode::no_cusum;
    throw ConfigError("unknown ablation mode '" + name +
                      "' (expected full, no_bf or no_cusum)");
}

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::full: return "full";
        case AblationMode::no_bf: return "no_bf";
        case AblationMode::no_cusum: return "no_cusum";
    }
    throw ConfigError("unknown ablation mode value");
}

void PipelineConfig::validate() const {
    if (window < 1 || hidden < 1 || latent < 1) {
        throw ConfigError("config: window, hidden and latent must be >= 1");
    }
    if (latent > hidden) {
        throw ConfigError("config: latent must not exceed hidden");
    }
    train.validate();
    if (quantiles < 2) {
        throw ConfigError("config: quantiles must be >= 2");
    }
    if (allowance < 0.0) {
        throw ConfigError("config: allowance must be >= 0");
    }
    if (top_r < 0 || top_r > latent) {
        throw ConfigError("config: top_r must lie in [0, latent]");
    }
    if (!(t2_confidence > 0.0 && t2_confidence < 1.0) ||
        !(b_lim_confidence > 0.0 && b_lim_confidence < 1.0)) {
        throw ConfigError("config: confidences must lie in (0, 1)");
    }
    if (!(target_far > 0.0 && target_far < 1.0)) {
        throw ConfigError("config: target_far must lie in (0, 1)");
    }
    if (calib_reps < 1 || calib_horizon < 1) {
        throw ConfigError("config: calib_reps and calib_horizon must be >= 1");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("config: alpha must lie in (0, 1)");
    }
    if (sustain < 1) {
        throw ConfigError("config: sustain must be >= 1");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("config: train_fraction must lie in (0, 1)");
    }
    if (jobs < 1) {
        throw ConfigError("config: jobs must be >= 1");
    }
}

std::string pipeline_config_to_json(const PipelineConfig& config) {
    return config_to_json_obj(config).dump(2);
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: parse failure: ") + e.what());
    }
    return config_from_json_obj(j);
}

std::vector<PlantArtifacts> offline_learn_modes(const StreamMatrix& in_control,
                                                const BlockPartition& partition,
                                                const PipelineConfig& config,
                                                const std::vector<AblationMode>& modes,
                                                TrainingLog* log) {
    config.validate();
    partition.validate();
    in_control.validate();
    if (modes.empty()) {
        throw ConfigError("offline_learn: needs at least one mode");
    }

    const Index total = in_control.rows();
    if (total < 2) {
        throw DataError("offline_learn (standardize stage): needs at least 2 rows");
    }
    const auto n_train = static_cast<Index>(std::floor(config.train_fraction *
                                                       static_cast<double>(total)));
    const Index n_valid = total - n_train;
    if (n_train < config.window + 1) {
        throw DataError("offline_learn (training stage): " + std::to_string(n_train) +
                        " training rows cannot form windows of length " +
                        std::to_string(config.window));
    }
    const Index n_codes = n_valid - config.window + 1;
    const Index needed = std::max<Index>({100, 10 * config.quantiles,
                                          static_cast<Index>(config.latent) + 1});
    if (n_codes < needed) {
        throw DataError("offline_learn (calibration stage): validation slice yields " +
                        std::to_string(std::max<Index>(n_codes, 0)) + " codes, needs >= " +
                        std::to_string(needed));
    }

    const Standardizer standardizer = fit_standardizer(in_control);
    const StreamMatrix standardized = apply_standardizer(standardizer, in_control);

    StreamMatrix train_stream = standardized;
    train_stream.values = standardized.values.topRows(n_train);
    StreamMatrix valid_stream = standardized;
    valid_stream.values = standardized.values.bottomRows(n_valid);

    const auto train_blocks = mbmon::partition(train_stream, partition);
    const auto valid_blocks = mbmon::partition(valid_stream, partition);
    const int n_blocks = partition.block_count();

    const bool need_cusum =
        std::any_of(modes.begin(), modes.end(),
                    [](AblationMode m) { return m != AblationMode::no_cusum; });

    struct PerBlock {
        OlaeModel model;
        VectorXd code_mean;
        MatrixXd valid_codes;  // centered
        T2Model t2;
        QuantileGrid grid;
        CusumConfig cusum;
        BlockSeries valid_series;
        CalibrationMeta meta;
        std::vector<LossBreakdown> history;
    };
    std::vector<PerBlock> per_block(static_cast<std::size_t>(n_blocks));

    parallel_blocks(n_blocks, config.jobs, [&](int b) {
        auto& slot = per_block[static_cast<std::size_t>(b)];
        const auto& train_block = train_blocks[static_cast<std::size_t>(b)];
        const auto& valid_block = valid_blocks[static_cast<std::size_t>(b)];

        OlaeDims dims{static_cast<int>(train_block.cols()), config.hidden, config.latent,
                      config.window};
        OlaeModel init = make_olae(dims, mix_seed(config.seed, "olae-init",
                                                  static_cast<std::uint64_t>(b)));
        TrainConfig tc = config.train;
        tc.seed = mix_seed(config.seed, "olae-train", static_cast<std::uint64_t>(b));
        TrainResult trained = train(init, make_windows(train_block, config.window, 1), tc);
        for (const auto& warning : trained.warnings) {
            std::cerr << "offline_learn: block " << partition.blocks[b].first << ": " << warning
                      << "\n";
        }
        slot.model = std::move(trained.model);
        slot.history = std::move(trained.history);

        slot.valid_codes =
            encode_all(slot.model, make_windows(valid_block, config.window, 1));
        // Center once on the validation mean; tanh codes carry non-zero
        // means that would otherwise dominate the uncentered quadratic form.
        slot.code_mean = slot.valid_codes.colwise().mean();
        slot.valid_codes.rowwise() -= slot.code_mean.transpose();
        slot.t2 = fit_t2(slot.valid_codes);
        VectorXd scores(slot.valid_codes.rows());
        for (Index i = 0; i < slot.valid_codes.rows(); ++i) {
            scores[i] = t2_score(slot.t2, slot.valid_codes.row(i).transpose());
        }
        const auto t2_res = kde_limit(scores, config.t2_confidence);
        if (t2_res.degenerate) {
            std::cerr << "offline_learn: block " << partition.blocks[b].first
                      << ": degenerate T2 score distribution\n";
        }
        slot.t2.limit = t2_res.limit;

        slot.cusum.d = config.quantiles;
        slot.cusum.k = config.allowance;
        slot.cusum.r = config.top_r;
        slot.cusum.form = config.cusum_form;
        slot.cusum.finalize(config.latent);
        if (need_cusum) {
            slot.grid = fit_quantile_grid(slot.valid_codes, config.quantiles);
            // Codes from stride-1 windows overlap heavily; the moving-block
            // bootstrap keeps that serial dependence in the calibration runs.
            slot.cusum.h = calibrate_threshold(
                slot.valid_codes, slot.grid, slot.cusum, config.target_far, config.calib_reps,
                config.calib_horizon,
                mix_seed(config.seed, "cusum-calib", static_cast<std::uint64_t>(b)),
                2 * config.window);
        }

        slot.valid_series = score_block(slot.model, slot.code_mean, slot.t2,
                                        need_cusum ? &slot.grid : nullptr,
                                        need_cusum ? &slot.cusum : nullptr, valid_block.values,
                                        config.window);

        slot.meta.seed = config.seed;
        slot.meta.n_reps = config.calib_reps;
        slot.meta.horizon = config.calib_horizon;
        slot.meta.target_far = config.target_far;
        slot.meta.t2_confidence = config.t2_confidence;
        slot.meta.b_lim_confidence = config.b_lim_confidence;
    });

    if (log != nullptr) {
        log->per_block.clear();
        for (int b = 0; b < n_blocks; ++b) {
            log->per_block.emplace_back(partition.blocks[static_cast<std::size_t>(b)].first,
                                        per_block[static_cast<std::size_t>(b)].history);
        }
    }

    std::vector<PlantArtifacts> out;
    out.reserve(modes.size());
    for (const AblationMode mode : modes) {
        PlantArtifacts artifacts;
        artifacts.standardizer = standardizer;
        artifacts.partition = partition;
        artifacts.config = config;
        artifacts.config.ablation = mode;
        artifacts.baseline = config.train.ortho_weight == 0.0;
        for (int b = 0; b < n_blocks; ++b) {
            const auto& slot = per_block[static_cast<std::size_t>(b)];
            BlockArtifacts block;
            block.block_id = partition.blocks[static_cast<std::size_t>(b)].first;
            block.model = slot.model;
            block.stats.code_mean = slot.code_mean;
            block.stats.t2 = slot.t2;
            block.stats.cusum = slot.cusum;
            block.stats.calibration = slot.meta;
            if (mode != AblationMode::no_cusum) {
                block.stats.grid = slot.grid;
            }

            const auto steps = slot.valid_series.t2.size();
            VectorXd b_series(static_cast<Index>(steps));
            for (std::size_t i = 0; i < steps; ++i) {
                const double* w =
                    (mode != AblationMode::no_cusum) ? &slot.valid_series.w[i] : nullptr;
                const auto readings = block_readings(slot.valid_series.t2[i], slot.t2.limit, w,
                                                     slot.cusum.h, block.block_id);
                b_series[static_cast<Index>(i)] =
                    fuse_block(readings, config.alpha, mode != AblationMode::no_bf).b;
            }
            const auto b_res = fit_block_limit(b_series, config.b_lim_confidence);
            if (b_res.degenerate) {
                std::cerr << "offline_learn: block " << block.block_id
                          << ": degenerate fused-statistic series\n";
            }
            block.stats.b_lim = b_res.limit;
            if (!(block.stats.b_lim > 0.0) || !(block.stats.t2.limit > 0.0) ||
                (mode != AblationMode::no_cusum && !(block.stats.cusum.h > 0.0))) {
                throw NumericError("offline_learn: block " + std::to_string(block.block_id) +
                                   " produced a non-positive control limit");
            }
            artifacts.blocks.push_back(std::move(block));
        }
        out.push_back(std::move(artifacts));
    }
    return out;
}

PlantArtifacts offline_learn(const StreamMatrix& in_control, const BlockPartition& partition,
                             const PipelineConfig& config, TrainingLog* log) {
    return std::move(
        offline_learn_modes(in_control, partition, config, {config.ablation}, log).front());
}

std::vector<MonitorRecord> monitor(const PlantArtifacts& artifacts, const StreamMatrix& stream) {
    stream.validate();
    if (stream.variable_names != artifacts.standardizer.variable_names) {
        throw DataError("monitor: stream schema does not match the fitted standardizer");
    }
    const PipelineConfig& config = artifacts.config;
    const int window = config.window;
    if (stream.rows() < window) {
        std::cerr << "monitor: stream of " << stream.rows()
                  << " rows is shorter than the warm-up window " << window
                  << "; no records emitted\n";
        return {};
    }

    const StreamMatrix standardized = apply_standardizer(artifacts.standardizer, stream);
    const auto block_streams = mbmon::partition(standardized, artifacts.partition);
    const int n_blocks = static_cast<int>(artifacts.blocks.size());
    const bool with_cusum = config.ablation != AblationMode::no_cusum;
    const bool adaptive = config.ablation != AblationMode::no_bf;

    std::vector<BlockSeries> series(static_cast<std::size_t>(n_blocks));
    parallel_blocks(n_blocks, config.jobs, [&](int b) {
        const auto& block = artifacts.blocks[static_cast<std::size_t>(b)];
        series[static_cast<std::size_t>(b)] = score_block(
            block.model, block.stats.code_mean, block.stats.t2,
            with_cusum ? &block.stats.grid : nullptr,
            with_cusum ? &block.stats.cusum : nullptr,
            block_streams[static_cast<std::size_t>(b)].values, window);
    });

    const std::size_t steps = series.front().t2.size();
    std::vector<MonitorRecord> records;
    records.reserve(steps);
    const double threshold = config.effective_alarm_threshold();
    int run = 0;
    for (std::size_t i = 0; i < steps; ++i) {
        MonitorRecord rec;
        rec.t = static_cast<long>(i) + window - 1;
        std::vector<std::pair<double, double>> block_stats;
        block_stats.reserve(static_cast<std::size_t>(n_blocks));
        for (int b = 0; b < n_blocks; ++b) {
            const auto& block = artifacts.blocks[static_cast<std::size_t>(b)];
            const auto& s = series[static_cast<std::size_t>(b)];
            const double* w = with_cusum ? &s.w[i] : nullptr;
            const auto readings =
                block_readings(s.t2[i], block.stats.t2.limit, w, block.stats.cusum.h,
                               block.block_id);
            const BlockFused fused = fuse_block(readings, config.alpha, adaptive);
            BlockRecord br;
            br.t2 = s.t2[i];
            br.w = with_cusum ? s.w[i] : kNaN;
            br.b = fused.b;
            br.weight_t2 = fused.weights[0];
            br.weight_cusum = with_cusum ? fused.weights[1] : kNaN;
            br.exceed = fused.b > block.stats.b_lim;
            rec.blocks.push_back(br);
            block_stats.emplace_back(fused.b, block.stats.b_lim);
        }
        const PlantIndex plant = fuse_plant(block_stats, config.alpha, threshold, adaptive);
        rec.block_weights = plant.weights;
        rec.pfi = plant.pfi;
        rec.alarm_raw = plant.alarm;
        run = plant.alarm ? run + 1 : 0;
        rec.alarm_sustained = run >= config.sustain;
        records.push_back(std::move(rec));
    }
    return records;
}

EvalCase evaluate(const std::vector<MonitorRecord>& records, std::optional<int> onset,
                  int sustain_m, const std::string& label) {
    if (records.empty()) {
        throw DataError("evaluate: no records");
    }
    if (sustain_m < 1) {
        throw ConfigError("evaluate: sustain must be >= 1");
    }
    EvalCase result;
    result.label = label;
    result.onset = onset;
    result.sustain = sustain_m;

    if (!onset) {
        long alarms = 0;
        for (const auto& r : records) {
            alarms += r.alarm_raw ? 1 : 0;
        }
        result.far = static_cast<double>(alarms) / static_cast<double>(records.size());
        return result;
    }

    const long first_t = records.front().t;
    const long last_t = records.back().t;
    if (*onset < first_t || *onset > last_t) {
        throw DataError("evaluate: onset " + std::to_string(*onset) +
                        " outside record range [" + std::to_string(first_t) + ", " +
                        std::to_string(last_t) + "]");
    }
    long pre = 0, pre_alarms = 0, post = 0, post_alarms = 0;
    for (const auto& r : records) {
        if (r.t < *onset) {
            ++pre;
            pre_alarms += r.alarm_raw ? 1 : 0;
        } else {
            ++post;
            post_alarms += r.alarm_raw ? 1 : 0;
        }
    }
    if (pre > 0) {
        result.far = static_cast<double>(pre_alarms) / static_cast<double>(pre);
    }
    result.fdr = static_cast<double>(post_alarms) / static_cast<double>(post);

    const std::size_t onset_idx = static_cast<std::size_t>(*onset - first_t);
    for (std::size_t i = onset_idx; i < records.size(); ++i) {
        if (records[i].alarm_raw && !result.fdd_first_alarm) {
            result.fdd_first_alarm = records[i].t - *onset;
        }
        if (!result.fdd) {
            bool sustained = i + static_cast<std::size_t>(sustain_m) <= records.size();
            for (int j = 0; sustained && j < sustain_m; ++j) {
                sustained = records[i + static_cast<std::size_t>(j)].alarm_raw;
            }
            if (sustained) {
                result.fdd = records[i].t - *onset;  // run-start convention
            }
        }
    }
    result.detected = result.fdd.has_value();
    return result;
}

void write_report_csv(const std::vector<EvalCase>& cases, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("write_report_csv: cannot open '" + path + "'");
    }
    out << "case,onset,FDD,FDD_first_alarm,FDR,FAR,detected\n";
    for (const auto& c : cases) {
        out << c.label << ',';
        out << (c.onset ? std::to_string(*c.onset) : std::string()) << ',';
        if (c.onset) {
            out << fmt_opt_long(c.fdd) << ',' << fmt_opt_long(c.fdd_first_alarm) << ','
                << fmt_fraction(c.fdr) << ',';
        } else {
            out << ",,,";
        }
        out << fmt_fraction(c.far) << ',' << (c.detected ? 1 : 0) << '\n';
    }
}

void write_report_json(const std::vector<EvalCase>& cases, const std::string& path) {
    nlohmann::ordered_json j;
    j["fdd_units"] = "samples";
    j["cases"] = nlohmann::ordered_json::array();
    for (const auto& c : cases) {
        nlohmann::ordered_json e;
        e["case"] = c.label;
        e["onset"] = c.onset ? nlohmann::ordered_json(*c.onset) : nlohmann::ordered_json(nullptr);
        e["fdd"] = c.fdd ? nlohmann::ordered_json(*c.fdd) : nlohmann::ordered_json(nullptr);
        e["fdd_first_alarm"] = c.fdd_first_alarm ? nlohmann::ordered_json(*c.fdd_first_alarm)
                                                 : nlohmann::ordered_json(nullptr);
        e["fdr"] = c.fdr ? nlohmann::ordered_json(*c.fdr) : nlohmann::ordered_json(nullptr);
        e["far"] = c.far ? nlohmann::ordered_json(*c.far) : nlohmann::ordered_json(nullptr);
        e["detected"] = c.detected;
        e["sustain"] = c.sustain;
        j["cases"].push_back(e);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("write_report_json: cannot open '" + path + "'");
    }
    out << j.dump(2) << '\n';
}

void write_records_csv(const std::vector<MonitorRecord>& records, const PlantArtifacts& artifacts,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("write_records_csv: cannot open '" + path + "'");
    }
    const bool with_cusum = artifacts.config.ablation != AblationMode::no_cusum;
    out << "t,block_id,T2,T2_lim";
    if (with_cusum) {
        out << ",W,W_lim";
    }
    out << ",B,limit,w_t2";
    if (with_cusum) {
        out << ",w_cusum";
    }
    out << ",w_block,alarm,sustained\n";
    const double threshold = artifacts.config.effective_alarm_threshold();
    auto emit = [&out](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) {
                out << ',';
            }
            out << fields[i];
        }
        out << '\n';
    };
    for (const auto& rec : records) {
        for (std::size_t b = 0; b < rec.blocks.size(); ++b) {
            const auto& block = artifacts.blocks[b];
            const auto& br = rec.blocks[b];
            std::vector<std::string> fields{std::to_string(rec.t),
                                            std::to_string(block.block_id), format_g17(br.t2),
                                            format_g17(block.stats.t2.limit)};
            if (with_cusum) {
                fields.push_back(format_g17(br.w));
                fields.push_back(format_g17(block.stats.cusum.h));
            }
            fields.push_back(format_g17(br.b));
            fields.push_back(format_g17(block.stats.b_lim));
            fields.push_back(format_g17(br.weight_t2));
            if (with_cusum) {
                fields.push_back(format_g17(br.weight_cusum));
            }
            fields.push_back(format_g17(rec.block_weights[static_cast<Index>(b)]));
            fields.push_back(br.exceed ? "1" : "0");
            fields.emplace_back();  // sustained is a plant-level flag
            emit(fields);
        }
        std::vector<std::string> fields{std::to_string(rec.t), "PLANT", "", ""};
        if (with_cusum) {
            fields.emplace_back();
            fields.emplace_back();
        }
        fields.push_back(format_g17(rec.pfi));
        fields.push_back(format_g17(threshold));
        fields.emplace_back();  // w_t2
        if (with_cusum) {
            fields.emplace_back();  // w_cusum
        }
        fields.emplace_back();  // w_block
        fields.push_back(rec.alarm_raw ? "1" : "0");
        fields.push_back(rec.alarm_sustained ? "1" : "0");
        emit(fields);
    }
    if (!out.good()) {
        throw DataError("write_records_csv: write failure on '" + path + "'");
    }
}

std::vector<MonitorRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("read_records_csv: cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("read_records_csv: '" + path + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            header.push_back(field);
        }
    }
    auto col = [&header](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return static_cast<long>(i);
            }
        }
        return -1L;
    };
    const long c_t = col("t");
    const long c_id = col("block_id");
    const long c_b = col("B");
    const long c_alarm = col("alarm");
    const long c_sustained = col("sustained");
    if (c_t < 0 || c_id < 0 || c_b < 0 || c_alarm < 0 || c_sustained < 0) {
        throw DataError("read_records_csv: missing required columns "
                        "(t, block_id, B, alarm, sustained; PLANT rows carry the fused index)");
    }
    const long c_t2 = col("T2");
    const long c_w = col("W");

    std::vector<MonitorRecord> records;
    MonitorRecord current;
    bool have_current = false;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        while (fields.size() < header.size()) {
            fields.emplace_back();  // trailing empty fields
        }
        if (fields.size() != header.size()) {
            throw DataError("records line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields");
        }
        auto num = [&](long c) {
            if (c < 0 || fields[static_cast<std::size_t>(c)].empty()) {
                return kNaN;
            }
            try {
                return std::stod(fields[static_cast<std::size_t>(c)]);
            } catch (const std::exception&) {
                throw DataError("records line " + std::to_string(line_no) +
                                ": cannot parse number");
            }
        };
        const long t = static_cast<long>(num(c_t));
        if (!have_current || t != current.t) {
            if (have_current) {
                records.push_back(current);
            }
            current = MonitorRecord{};
            current.t = t;
            have_current = true;
        }
        if (fields[static_cast<std::size_t>(c_id)] == "PLANT") {
            current.pfi = num(c_b);
            if (!std::isfinite(current.pfi)) {
                throw DataError("records line " + std::to_string(line_no) +
                                ": PLANT row without a fused index value");
            }
            current.alarm_raw = num(c_alarm) == 1.0;
            current.alarm_sustained = num(c_sustained) == 1.0;
        } else {
            BlockRecord br;
            br.t2 = num(c_t2);
            br.w = num(c_w);
            br.b = num(c_b);
            current.blocks.push_back(br);
        }
    }
    if (have_current) {
        records.push_back(current);
    }
    if (records.empty()) {
        throw DataError("read_records_csv: no records in '" + path + "'");
    }
    return records;
}

namespace {

nlohmann::ordered_json standardizer_to_json(const Standardizer& s) {
    nlohmann::ordered_json j;
    j["variable_names"] = s.variable_names;
    j["means"] = std::vector<double>(s.means.data(), s.means.data() + s.means.size());
    j["stdevs"] = std::vector<double>(s.stdevs.data(), s.stdevs.data() + s.stdevs.size());
    std::vector<int> flags(s.constant_flags.begin(), s.constant_flags.end());
    j["constant_flags"] = flags;
    return j;
}

Standardizer standardizer_from_json(const nlohmann::json& j) {
    Standardizer s;
    s.variable_names = j.at("variable_names").get<std::vector<std::string>>();
    const auto means = j.at("means").get<std::vector<double>>();
    const auto stdevs = j.at("stdevs").get<std::vector<double>>();
    const auto flags = j.at("constant_flags").get<std::vector<int>>();
    if (means.size() != s.variable_names.size() || stdevs.size() != means.size() ||
        flags.size() != means.size()) {
        throw DataError("plant json: standardizer field lengths disagree");
    }
    s.means = Eigen::Map<const VectorXd>(means.data(), static_cast<Index>(means.size()));
    s.stdevs = Eigen::Map<const VectorXd>(stdevs.data(), static_cast<Index>(stdevs.size()));
    s.constant_flags.assign(flags.begin(), flags.end());
    return s;
}

}  // namespace

void save_artifacts(const PlantArtifacts& artifacts, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::ordered_json plant;
    plant["version"] = "plant_v1";
    plant["baseline"] = artifacts.baseline;
    plant["config"] = config_to_json_obj(artifacts.config);
    plant["standardizer"] = standardizer_to_json(artifacts.standardizer);
    plant["partition"] = nlohmann::ordered_json::array();
    for (const auto& [id, cols] : artifacts.partition.blocks) {
        plant["partition"].push_back({{"id", id}, {"columns", cols}});
    }
    std::vector<int> ids;
    for (const auto& block : artifacts.blocks) {
        ids.push_back(block.block_id);
    }
    plant["blocks"] = ids;

    const fs::path base(dir);
    {
        std::ofstream out(base / "plant.json", std::ios::binary);
        if (!out) {
            throw DataError("save_artifacts: cannot write plant.json in '" + dir + "'");
        }
        out << plant.dump(2) << '\n';
    }
    for (const auto& block : artifacts.blocks) {
        const std::string tag = "block_" + std::to_string(block.block_id);
        std::ofstream model_out(base / (tag + ".model.json"), std::ios::binary);
        model_out << model_to_json(block.model) << '\n';
        std::ofstream stats_out(base / (tag + ".stats.json"), std::ios::binary);
        stats_out << stats_to_json(block.stats) << '\n';
        if (!model_out.good() || !stats_out.good()) {
            throw DataError("save_artifacts: write failure for " + tag);
        }
    }
}

PlantArtifacts load_artifacts(const std::string& dir) {
    const fs::path base(dir);
    std::ifstream in(base / "plant.json", std::ios::binary);
    if (!in) {
        throw DataError("load_artifacts: cannot open '" + (base / "plant.json").string() + "'");
    }
    nlohmann::json plant;
    try {
        in >> plant;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_artifacts: malformed plant.json: ") + e.what());
    }
    if (plant.value("version", "") != "plant_v1") {
        throw DataError("load_artifacts: unsupported plant.json version");
    }
    PlantArtifacts artifacts;
    try {
        artifacts.baseline = plant.at("baseline").get<bool>();
        artifacts.config = config_from_json_obj(plant.at("config"));
        artifacts.standardizer = standardizer_from_json(plant.at("standardizer"));
        for (const auto& e : plant.at("partition")) {
            artifacts.partition.blocks.emplace_back(e.at("id").get<int>(),
                                                    e.at("columns").get<std::vector<int>>());
        }
        for (const int id : plant.at("blocks").get<std::vector<int>>()) {
            const std::string tag = "block_" + std::to_string(id);
            BlockArtifacts block;
            block.block_id = id;
            std::ifstream model_in(base / (tag + ".model.json"), std::ios::binary);
            if (!model_in) {
                throw DataError("load_artifacts: missing " + tag + ".model.json");
            }
            std::stringstream model_text;
            model_text << model_in.rdbuf();
            block.model = model_from_json(model_text.str());
            std::ifstream stats_in(base / (tag + ".stats.json"), std::ios::binary);
            if (!stats_in) {
                throw DataError("load_artifacts: missing " + tag + ".stats.json");
            }
            std::stringstream stats_text;
            stats_text << stats_in.rdbuf();
            block.stats = stats_from_json(stats_text.str());
            artifacts.blocks.push_back(std::move(block));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_artifacts: missing or malformed field: ") + e.what());
    }
    artifacts.partition.validate();
    return artifacts;
}

}  // namespace mbmon
