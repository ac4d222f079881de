#include "mbmon/simgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace mbmon {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> dist(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            m(r, c) = dist(rng);
        }
    }
    return m;
}

// Joint state-transition matrix: block-diagonal dynamics plus scaled random
// coupling blocks.
MatrixXd joint_dynamics(const ProcessSpec& spec) {
    const int total = spec.state_count();
    MatrixXd joint = MatrixXd::Zero(total, total);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& b : spec.blocks) {
        offsets.push_back(off);
        off += static_cast<int>(b.dynamics.rows());
    }
    for (int b = 0; b < spec.block_count(); ++b) {
        const auto dim = spec.blocks[static_cast<std::size_t>(b)].dynamics.rows();
        joint.block(offsets[static_cast<std::size_t>(b)], offsets[static_cast<std::size_t>(b)],
                    dim, dim) = spec.blocks[static_cast<std::size_t>(b)].dynamics;
    }
    // Coupling blocks are drawn from the structure seed so the joint system
    // is fully determined by the spec.
    std::mt19937_64 rng(mix_seed(spec.structure_seed, "coupling"));
    for (int a = 0; a < spec.block_count(); ++a) {
        for (int b = 0; b < spec.block_count(); ++b) {
            const double coeff = spec.coupling(a, b);
            const auto rows = spec.blocks[static_cast<std::size_t>(a)].dynamics.rows();
            const auto cols = spec.blocks[static_cast<std::size_t>(b)].dynamics.rows();
            if (a == b) {
                continue;
            }
            MatrixXd g = random_matrix(rng, rows, cols);
            g /= std::max(1e-12, g.norm());
            if (coeff != 0.0) {
                joint.block(offsets[static_cast<std::size_t>(a)],
                            offsets[static_cast<std::size_t>(b)], rows, cols) = coeff * g;
            }
        }
    }
    return joint;
}

}  // namespace

int ProcessSpec::variable_count() const {
    int total = 0;
    for (const auto& b : blocks) {
        total += static_cast<int>(b.output_map.rows());
    }
    return total;
}

int ProcessSpec::state_count() const {
    int total = 0;
    for (const auto& b : blocks) {
        total += static_cast<int>(b.dynamics.rows());
    }
    return total;
}

void ProcessSpec::validate() const {
    if (blocks.empty()) {
        throw ConfigError("process spec: needs at least one block");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& blk = blocks[b];
        if (blk.dynamics.rows() != blk.dynamics.cols() || blk.dynamics.rows() < 1) {
            throw ConfigError("process spec: block " + std::to_string(b + 1) +
                              " dynamics must be square");
        }
        if (blk.output_map.cols() != blk.dynamics.rows() || blk.output_map.rows() < 1) {
            throw ConfigError("process spec: block " + std::to_string(b + 1) +
                              " output map shape mismatch");
        }
        const double radius = spectral_radius(blk.dynamics);
        if (radius >= 0.95) {
            throw ConfigError("process spec: block " + std::to_string(b + 1) +
                              " dynamics spectral radius " + std::to_string(radius) +
                              " >= 0.95 (unstable)");
        }
        if (blk.process_noise < 0.0) {
            throw ConfigError("process spec: negative process noise");
        }
    }
    if (coupling.rows() != block_count() || coupling.cols() != block_count()) {
        throw ConfigError("process spec: coupling must be N x N");
    }
    const double joint_radius = spectral_radius(joint_dynamics(*this));
    if (joint_radius >= 0.98) {
        throw ConfigError("process spec: coupled system spectral radius " +
                          std::to_string(joint_radius) + " >= 0.98 (unstable)");
    }
    if (static_cast<int>(variable_names.size()) != variable_count()) {
        throw ConfigError("process spec: variable name count mismatch");
    }
    if (measurement_noise < 0.0 || burn_in < 0) {
        throw ConfigError("process spec: negative measurement noise or burn-in");
    }
    if (!column_layout.empty()) {
        if (static_cast<int>(column_layout.size()) != block_count()) {
            throw ConfigError("process spec: column layout must list every block");
        }
        std::vector<bool> seen(static_cast<std::size_t>(variable_count()), false);
        for (std::size_t b = 0; b < column_layout.size(); ++b) {
            if (column_layout[b].size() !=
                static_cast<std::size_t>(blocks[b].output_map.rows())) {
                throw ConfigError("process spec: column layout size mismatch in block " +
                                  std::to_string(b + 1));
            }
            for (int c : column_layout[b]) {
                if (c < 0 || c >= variable_count() || seen[static_cast<std::size_t>(c)]) {
                    throw ConfigError("process spec: column layout is not a permutation");
                }
                seen[static_cast<std::size_t>(c)] = true;
            }
        }
    }
}

ProcessSpec ProcessSpec::default_benchmark(std::uint64_t structure_seed) {
    const std::vector<int> var_counts = {8, 5, 10, 8};
    const std::vector<int> state_dims = {6, 5, 7, 6};
    ProcessSpec spec;
    spec.structure_seed = structure_seed;
    spec.measurement_noise = 0.15;
    spec.burn_in = 200;

    std::mt19937_64 rng(mix_seed(structure_seed, "structure"));
    for (std::size_t b = 0; b < var_counts.size(); ++b) {
        BlockDynamics blk;
        // Identity-dominated transition keeps the eigenvalues near the
        // positive real axis, so the measured series are positively
        // autocorrelated rather than oscillatory.
        MatrixXd a = 0.8 * MatrixXd::Identity(state_dims[b], state_dims[b]) +
                     0.2 * random_matrix(rng, state_dims[b], state_dims[b]);
        blk.dynamics = a * (0.88 / spectral_radius(a));
        blk.output_map = random_matrix(rng, var_counts[b], state_dims[b]);
        blk.output_map.rowwise().normalize();
        blk.process_noise = 0.35;
        spec.blocks.push_back(std::move(blk));
    }
    const int n = spec.block_count();
    spec.coupling = MatrixXd::Zero(n, n);
    for (int b = 0; b + 1 < n; ++b) {
        spec.coupling(b, b + 1) = 0.04;
        spec.coupling(b + 1, b) = 0.04;
    }
    // Columns follow the default monitoring partition (inputs, reactor,
    // separation train, stripper), so generator blocks and monitored blocks
    // coincide.
    spec.column_layout = {{0, 1, 2, 4, 5, 22, 23, 24},
                          {6, 7, 8, 20, 29},
                          {9, 10, 11, 12, 13, 19, 21, 26, 27, 30},
                          {3, 14, 15, 16, 17, 18, 25, 28}};
    char name[16];
    for (int v = 0; v < spec.variable_count(); ++v) {
        std::snprintf(name, sizeof(name), "v%02d", v);
        spec.variable_names.emplace_back(name);
    }
    spec.validate();
    return spec;
}

FaultKind fault_kind_from_string(const std::string& name) {
    if (name == "step") return FaultKind::step;
    if (name == "random_variation") return FaultKind::random_variation;
    if (name == "slow_drift") return FaultKind::slow_drift;
    if (name == "sticking") return FaultKind::sticking;
    throw ConfigError("unknown fault kind '" + name +
                      "' (expected step, random_variation, slow_drift or sticking)");
}

std::string to_string(FaultKind kind) {
    switch (kind) {
        case FaultKind::step: return "step";
        case FaultKind::random_variation: return "random_variation";
        case FaultKind::slow_drift: return "slow_drift";
        case FaultKind::sticking: return "sticking";
    }
    throw ConfigError("unknown fault kind value");
}

void FaultSpec::validate(Eigen::Index rows, Eigen::Index cols) const {
    if (targets.empty()) {
        throw ConfigError("fault: needs at least one target variable");
    }
    for (int v : targets) {
        if (v < 0 || v >= cols) {
            throw ConfigError("fault: target variable " + std::to_string(v) +
                              " outside stream with " + std::to_string(cols) + " columns");
        }
    }
    if (magnitude < 0.0) {
        throw ConfigError("fault: magnitude must be >= 0");
    }
    if (onset < 0 || onset >= rows) {
        throw ConfigError("fault: onset " + std::to_string(onset) +
                          " outside stream of length " + std::to_string(rows));
    }
}

double spectral_radius(const Eigen::MatrixXd& m) {
    Eigen::EigenSolver<MatrixXd> solver(m, /*computeEigenvectors=*/false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

StreamMatrix generate(const ProcessSpec& spec, int t_len, std::uint64_t seed) {
    spec.validate();
    if (t_len < 1) {
        throw ConfigError("generate: stream length must be >= 1");
    }
    const MatrixXd joint = joint_dynamics(spec);
    const int states = spec.state_count();
    const int vars = spec.variable_count();

    VectorXd noise_scale(states);
    {
        int off = 0;
        for (const auto& b : spec.blocks) {
            const int dim = static_cast<int>(b.dynamics.rows());
            noise_scale.segment(off, dim).setConstant(b.process_noise);
            off += dim;
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto draw = [&](Index len) {
        VectorXd v(len);
        for (Index i = 0; i < len; ++i) {
            v[i] = dist(rng);
        }
        return v;
    };

    StreamMatrix stream;
    stream.variable_names = spec.variable_names;
    stream.values.resize(t_len, vars);

    VectorXd state = VectorXd::Zero(states);
    for (int t = -spec.burn_in; t < t_len; ++t) {
        state = joint * state + noise_scale.cwiseProduct(draw(states));
        if (t < 0) {
            continue;
        }
        int var_off = 0;
        int state_off = 0;
        for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
            const auto& blk = spec.blocks[b];
            const int dim = static_cast<int>(blk.dynamics.rows());
            const int out = static_cast<int>(blk.output_map.rows());
            VectorXd y = (blk.output_map * state.segment(state_off, dim)).array().tanh();
            if (spec.column_layout.empty()) {
                stream.values.row(t).segment(var_off, out) = y.transpose();
            } else {
                const auto& layout = spec.column_layout[b];
                for (int j = 0; j < out; ++j) {
                    stream.values(t, layout[static_cast<std::size_t>(j)]) = y[j];
                }
            }
            var_off += out;
            state_off += dim;
        }
        if (spec.measurement_noise > 0.0) {
            stream.values.row(t) += (spec.measurement_noise * draw(vars)).transpose();
        }
    }
    return stream;
}

StreamMatrix inject_fault(const StreamMatrix& stream, const FaultSpec& fault,
                          const Eigen::VectorXd& in_control_stdevs) {
    if (in_control_stdevs.size() != stream.cols()) {
        throw DataError("inject_fault: stdev vector length does not match stream");
    }
    fault.validate(stream.rows(), stream.cols());
    StreamMatrix out = stream;
    const Index t_len = stream.rows();
    const Index last = t_len - 1;

    switch (fault.kind) {
        case FaultKind::step:
            for (int v : fault.targets) {
                const double shift = fault.magnitude * in_control_stdevs[v];
                for (Index t = fault.onset; t < t_len; ++t) {
                    out.values(t, v) += shift;
                }
            }
            break;
        case FaultKind::random_variation: {
            std::mt19937_64 rng(fault.seed);
            std::normal_distribution<double> dist(0.0, 1.0);
            for (Index t = fault.onset; t < t_len; ++t) {
                for (int v : fault.targets) {
                    out.values(t, v) += fault.magnitude * in_control_stdevs[v] * dist(rng);
                }
            }
            break;
        }
        case FaultKind::slow_drift: {
            const double span = std::max<double>(1, last - fault.onset);
            for (int v : fault.targets) {
                const double full = fault.magnitude * in_control_stdevs[v];
                for (Index t = fault.onset; t < t_len; ++t) {
                    out.values(t, v) += full * static_cast<double>(t - fault.onset) / span;
                }
            }
            break;
        }
        case FaultKind::sticking:
            for (int v : fault.targets) {
                const double frozen = stream.values(fault.onset, v);
                for (Index t = fault.onset; t < t_len; ++t) {
                    out.values(t, v) = frozen;
                }
            }
            break;
    }
    return out;
}

StationarityReport stationarity_check(const StreamMatrix& stream) {
    const Index t_len = stream.rows();
    if (t_len < 200) {
        throw DataError("stationarity_check: needs at least 200 samples");
    }
    const Index half = t_len / 2;
    StationarityReport report;

    // Batch-means standard errors absorb the autocorrelation of the
    // generated series.
    constexpr Index kBatch = 50;
    auto half_stats = [&](const VectorXd& x, double& mean, double& se_mean, double& var,
                          double& se_var) {
        const Index n = x.size();
        mean = x.mean();
        var = (x.array() - mean).square().mean();
        const Index batches = n / kBatch;
        VectorXd bmeans(batches), bvars(batches);
        for (Index i = 0; i < batches; ++i) {
            const auto seg = x.segment(i * kBatch, kBatch);
            bmeans[i] = seg.mean();
            bvars[i] = (seg.array() - mean).square().mean();
        }
        const double mvar = (bmeans.array() - bmeans.mean()).square().mean();
        const double vvar = (bvars.array() - bvars.mean()).square().mean();
        se_mean = std::sqrt(mvar / static_cast<double>(batches));
        se_var = std::sqrt(vvar / static_cast<double>(batches));
    };

    for (Index j = 0; j < stream.cols(); ++j) {
        VectorXd first = stream.values.col(j).head(half);
        VectorXd second = stream.values.col(j).tail(t_len - half);
        double m1, sm1, v1, sv1, m2, sm2, v2, sv2;
        half_stats(first, m1, sm1, v1, sv1);
        half_stats(second, m2, sm2, v2, sv2);
        const double se_m = std::max(1e-12, std::hypot(sm1, sm2));
        const double se_v = std::max(1e-12, std::hypot(sv1, sv2));
        report.max_mean_z = std::max(report.max_mean_z, std::abs(m1 - m2) / se_m);
        report.max_var_z = std::max(report.max_var_z, std::abs(v1 - v2) / se_v);
    }
    return report;
}

void write_csv(const StreamMatrix& stream, const std::string& path) {
    stream.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("write_csv: cannot open '" + path + "' for writing");
    }
    out << "sample_index";
    for (const auto& name : stream.variable_names) {
        out << ',' << name;
    }
    out << '\n';
    for (Index t = 0; t < stream.rows(); ++t) {
        out << t;
        for (Index j = 0; j < stream.cols(); ++j) {
            out << ',' << format_g17(stream.values(t, j));
        }
        out << '\n';
    }
    if (!out.good()) {
        throw DataError("write_csv: write failure on '" + path + "'");
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

double parse_double(const std::string& field, int line_no) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw DataError("csv line " + std::to_string(line_no) + ": cannot parse '" + field +
                        "' as a number");
    }
    return value;
}

}  // namespace

StreamMatrix load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("load_csv: cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("load_csv: '" + path + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "sample_index") {
        throw DataError("load_csv: first header column must be 'sample_index', got '" +
                        (header.empty() ? std::string() : header[0]) + "'");
    }
    StreamMatrix stream;
    stream.variable_names.assign(header.begin() + 1, header.end());
    const std::size_t cols = stream.variable_names.size();
    if (cols == 0) {
        throw DataError("load_csv: no variable columns in '" + path + "'");
    }

    std::vector<VectorXd> rows;
    int line_no = 1;
    int dropped = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != cols + 1) {
            throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(cols + 1) + " fields, got " +
                            std::to_string(fields.size()));
        }
        long long idx = 0;
        {
            const char* begin = fields[0].data();
            const char* end = begin + fields[0].size();
            auto [ptr, ec] = std::from_chars(begin, end, idx);
            if (ec != std::errc() || ptr != end) {
                throw DataError("csv line " + std::to_string(line_no) +
                                ": sample_index '" + fields[0] + "' is not an integer");
            }
        }
        VectorXd row(static_cast<Index>(cols));
        bool finite = true;
        for (std::size_t j = 0; j < cols; ++j) {
            row[static_cast<Index>(j)] = parse_double(fields[j + 1], line_no);
            finite = finite && std::isfinite(row[static_cast<Index>(j)]);
        }
        if (!finite) {
            ++dropped;  // row rejection, no imputation
            continue;
        }
        rows.push_back(std::move(row));
    }
    if (dropped > 0) {
        std::cerr << "load_csv: dropped " << dropped << " row(s) with non-finite values from '"
                  << path << "'\n";
    }
    if (rows.empty()) {
        throw DataError("load_csv: no usable data rows in '" + path + "'");
    }
    stream.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        stream.values.row(static_cast<Index>(t)) = rows[t].transpose();
    }
    stream.validate();
    return stream;
}

std::string meta_path_for(const std::string& csv_path) {
    const std::size_t dot = csv_path.rfind(".csv");
    if (dot != std::string::npos && dot == csv_path.size() - 4) {
        return csv_path.substr(0, dot) + ".meta.json";
    }
    return csv_path + ".meta.json";
}

void write_meta(const std::string& csv_path, const StreamMeta& meta) {
    nlohmann::ordered_json j;
    j["seed"] = meta.seed;
    j["spec_hash"] = meta.spec_hash;
    if (meta.fault) {
        j["fault"] = {{"kind", to_string(meta.fault->kind)},
                      {"targets", meta.fault->targets},
                      {"magnitude", meta.fault->magnitude},
                      {"onset", meta.fault->onset},
                      {"seed", meta.fault->seed}};
    }
    if (meta.onset) {
        j["onset"] = *meta.onset;
    }
    const std::string path = meta_path_for(csv_path);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("write_meta: cannot open '" + path + "'");
    }
    out << j.dump(2) << '\n';
}

std::optional<StreamMeta> load_meta(const std::string& csv_path) {
    std::ifstream in(meta_path_for(csv_path), std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_meta: malformed sidecar for '" + csv_path + "': " + e.what());
    }
    StreamMeta meta;
    meta.seed = j.value("seed", 0ULL);
    meta.spec_hash = j.value("spec_hash", "");
    if (j.contains("fault")) {
        FaultSpec fault;
        const auto& f = j.at("fault");
        fault.kind = fault_kind_from_string(f.at("kind").get<std::string>());
        fault.targets = f.at("targets").get<std::vector<int>>();
        fault.magnitude = f.at("magnitude").get<double>();
        fault.onset = f.at("onset").get<int>();
        fault.seed = f.value("seed", 0ULL);
        meta.fault = fault;
    }
    if (j.contains("onset")) {
        meta.onset = j.at("onset").get<int>();
    }
    return meta;
}

std::string spec_hash(const ProcessSpec& spec) {
    // FNV-1a over the raw double bit patterns and dimensions.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto fold = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto fold_matrix = [&](const MatrixXd& m) {
        const std::int64_t dims[2] = {m.rows(), m.cols()};
        fold(dims, sizeof(dims));
        fold(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    };
    fold(&spec.structure_seed, sizeof(spec.structure_seed));
    fold(&spec.measurement_noise, sizeof(double));
    fold(&spec.burn_in, sizeof(int));
    for (const auto& b : spec.blocks) {
        fold_matrix(b.dynamics);
        fold_matrix(b.output_map);
        fold(&b.process_noise, sizeof(double));
    }
    fold_matrix(spec.coupling);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace mbmon
