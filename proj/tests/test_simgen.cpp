#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mbmon/simgen.hpp"

using namespace mbmon;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mbmon_simgen_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Eigen::VectorXd column_stdevs(const StreamMatrix& s) {
    Eigen::VectorXd out(s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const auto col = s.values.col(j);
        out[j] = std::sqrt((col.array() - col.mean()).square().mean());
    }
    return out;
}

}  // namespace

TEST_CASE("generate: zero noise and zero initial state give an all-zero stream") {
    ProcessSpec spec = ProcessSpec::default_benchmark(3);
    for (auto& b : spec.blocks) {
        b.process_noise = 0.0;
    }
    spec.measurement_noise = 0.0;
    const auto stream = generate(spec, 50, 7);
    CHECK(stream.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generate: deterministic under seed") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(3);
    const auto a = generate(spec, 300, 42);
    const auto b = generate(spec, 300, 42);
    const auto c = generate(spec, 300, 43);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
}

TEST_CASE("generate: default benchmark has dynamics (lag-1 autocorrelation > 0.2)") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(11);
    const auto stream = generate(spec, 10000, 17);
    for (Eigen::Index j = 0; j < stream.cols(); ++j) {
        const auto col = stream.values.col(j);
        const double mean = col.mean();
        const auto head = col.head(stream.rows() - 1).array() - mean;
        const auto tail = col.tail(stream.rows() - 1).array() - mean;
        const double ac1 = (head * tail).mean() / (col.array() - mean).square().mean();
        CHECK(ac1 > 0.2);
    }
}

TEST_CASE("generate: stationarity of the default benchmark") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(11);
    const auto stream = generate(spec, 8000, 12);
    const auto report = stationarity_check(stream);
    CHECK(report.max_mean_z < 3.0);
    CHECK(report.max_var_z < 3.0);
}

TEST_CASE("process spec: unstable dynamics are rejected at construction") {
    ProcessSpec spec = ProcessSpec::default_benchmark(5);
    spec.blocks[0].dynamics *= 1.2;  // spectral radius past 0.95
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("inject_fault: zero magnitude is the identity") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 200, 3);
    FaultSpec fault;
    fault.kind = FaultKind::step;
    fault.targets = {4};
    fault.magnitude = 0.0;
    fault.onset = 50;
    const auto out = inject_fault(stream, fault, column_stdevs(stream));
    CHECK(out.values == stream.values);
}

TEST_CASE("inject_fault: step shifts the post-onset mean by magnitude * stdev") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 4000, 3);
    const auto stdevs = column_stdevs(stream);
    FaultSpec fault;
    fault.kind = FaultKind::step;
    fault.targets = {7};
    fault.magnitude = 2.0;
    fault.onset = 2000;
    const auto out = inject_fault(stream, fault, stdevs);
    const double pre = out.values.col(7).head(2000).mean();
    const double post = out.values.col(7).tail(2000).mean();
    const double base_pre = stream.values.col(7).head(2000).mean();
    const double base_post = stream.values.col(7).tail(2000).mean();
    // Moment check against the unfaulted stream's own halves.
    CHECK((post - base_post) == doctest::Approx(2.0 * stdevs[7]).epsilon(1e-9));
    CHECK(pre == base_pre);
}

TEST_CASE("inject_fault: sticking freezes the variable exactly") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 500, 5);
    FaultSpec fault;
    fault.kind = FaultKind::sticking;
    fault.targets = {20};
    fault.magnitude = 3.0;
    fault.onset = 100;
    const auto out = inject_fault(stream, fault, column_stdevs(stream));
    const auto post = out.values.col(20).tail(400);
    CHECK((post.array() - out.values(100, 20)).abs().maxCoeff() == 0.0);  // variance exactly 0
}

TEST_CASE("inject_fault: slow drift reaches magnitude * stdev at the last sample") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 600, 9);
    const auto stdevs = column_stdevs(stream);
    FaultSpec fault;
    fault.kind = FaultKind::slow_drift;
    fault.targets = {3};
    fault.magnitude = 3.0;
    fault.onset = 200;
    const auto out = inject_fault(stream, fault, stdevs);
    CHECK(out.values(599, 3) - stream.values(599, 3) == doctest::Approx(3.0 * stdevs[3]));
    CHECK(out.values(200, 3) == stream.values(200, 3));  // ramp starts at zero
}

TEST_CASE("inject_fault: random variation inflates post-onset variance") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 6000, 13);
    const auto stdevs = column_stdevs(stream);
    FaultSpec fault;
    fault.kind = FaultKind::random_variation;
    fault.targets = {7};
    fault.magnitude = 3.0;
    fault.onset = 3000;
    fault.seed = 99;
    const auto out = inject_fault(stream, fault, stdevs);
    const auto post = out.values.col(7).tail(3000);
    const double post_var = (post.array() - post.mean()).square().mean();
    const double base_var = stdevs[7] * stdevs[7];
    // Var(x + 3*sigma*eps) = sigma^2 (1 + 9).
    CHECK(post_var == doctest::Approx(10.0 * base_var).epsilon(0.15));
    // Deterministic under the fault seed.
    const auto again = inject_fault(stream, fault, stdevs);
    CHECK(again.values == out.values);
}

TEST_CASE("inject_fault: non-target variables are untouched bitwise") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 300, 21);
    FaultSpec fault;
    fault.kind = FaultKind::random_variation;
    fault.targets = {7, 8};
    fault.magnitude = 3.0;
    fault.onset = 100;
    const auto out = inject_fault(stream, fault, column_stdevs(stream));
    for (Eigen::Index j = 0; j < stream.cols(); ++j) {
        if (j == 7 || j == 8) {
            continue;
        }
        CHECK(out.values.col(j) == stream.values.col(j));
    }
}

TEST_CASE("inject_fault: validation errors") {
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 100, 1);
    const auto stdevs = column_stdevs(stream);
    FaultSpec fault;
    fault.kind = FaultKind::step;
    fault.targets = {7};
    fault.magnitude = 1.0;
    fault.onset = 100;  // outside
    CHECK_THROWS_AS(inject_fault(stream, fault, stdevs), ConfigError);
    fault.onset = 10;
    fault.targets = {31};
    CHECK_THROWS_AS(inject_fault(stream, fault, stdevs), ConfigError);
    CHECK_THROWS_AS(fault_kind_from_string("melting"), ConfigError);
}

TEST_CASE("csv: write and load round trip is value-exact") {
    TempDir tmp;
    const ProcessSpec spec = ProcessSpec::default_benchmark(2);
    const auto stream = generate(spec, 120, 5);
    const std::string path = (tmp.path / "stream.csv").string();
    write_csv(stream, path);
    const auto back = load_csv(path);
    CHECK(back.variable_names == stream.variable_names);
    CHECK(back.values == stream.values);
}

TEST_CASE("csv: malformed rows are reported with their line number") {
    TempDir tmp;
    const std::string path = (tmp.path / "bad.csv").string();
    {
        std::ofstream out(path);
        out << "sample_index,a,b\n0,1.0,2.0\n1,3.0\n";
    }
    try {
        load_csv(path);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("csv: non-finite rows are dropped, malformed headers rejected") {
    TempDir tmp;
    const std::string path = (tmp.path / "nan.csv").string();
    {
        std::ofstream out(path);
        out << "sample_index,a\n0,1.0\n1,nan\n2,3.0\n";
    }
    const auto stream = load_csv(path);
    CHECK(stream.rows() == 2);
    CHECK(stream.values(1, 0) == 3.0);

    const std::string bad = (tmp.path / "hdr.csv").string();
    {
        std::ofstream out(bad);
        out << "time,a\n0,1.0\n";
    }
    CHECK_THROWS_AS(load_csv(bad), DataError);
}

TEST_CASE("meta sidecar: onset and fault survive the round trip") {
    TempDir tmp;
    const std::string path = (tmp.path / "fault_step.csv").string();
    CHECK(meta_path_for(path) == (tmp.path / "fault_step.meta.json").string());
    StreamMeta meta;
    meta.seed = 2400;
    meta.spec_hash = "abc123";
    FaultSpec fault;
    fault.kind = FaultKind::slow_drift;
    fault.targets = {1, 2};
    fault.magnitude = 3.0;
    fault.onset = 600;
    meta.fault = fault;
    meta.onset = 600;
    write_meta(path, meta);
    const auto back = load_meta(path);
    REQUIRE(back.has_value());
    CHECK(back->seed == 2400);
    CHECK(back->onset == 600);
    REQUIRE(back->fault.has_value());
    CHECK(back->fault->kind == FaultKind::slow_drift);
    CHECK(back->fault->targets == std::vector<int>{1, 2});
    CHECK_FALSE(load_meta((tmp.path / "missing.csv").string()).has_value());
}
