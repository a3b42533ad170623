#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "droneguard/detectors.hpp"
#include "droneguard/pipeline.hpp"
#include "droneguard/rules.hpp"
#include "droneguard/simkit.hpp"

namespace droneguard::eval {

/// Confusion counts plus the two rates. A rate whose denominator is zero is
/// left empty rather than reported as 0.
struct Metrics {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    std::optional<double> recall;
    std::optional<double> false_positive_rate;
};

/// Throws Error(LengthMismatch) when the vectors differ in length.
Metrics evaluate(const std::vector<bool>& flagged, const std::vector<bool>& labels);
Metrics combine(const Metrics& a, const Metrics& b);

struct LabeledCase {
    std::string name;
    telemetry::FlightLog log;
    std::vector<bool> labels;
};

struct AblationResult {
    Metrics rules_only;
    Metrics ensemble_only;
    Metrics combined;
    std::array<Metrics, 5> per_detector;  ///< in detectors::kAllDetectors order
};

/// Evaluates every case once and scores the same verdicts under the three
/// fusion settings.
AblationResult run_ablation(std::span<const LabeledCase> corpus, const rules::RuleSet& rules,
                            const detectors::ModelBundle& models, const pipeline::Options& options = {});

struct TimingStats {
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double max_ms = 0.0;
    std::size_t samples = 0;
};

TimingStats summarize_timings(std::vector<double> millis);

struct BenchmarkResult {
    TimingStats rules;
    std::array<TimingStats, 5> detectors;
    TimingStats pipeline_without_optics;
    TimingStats pipeline_with_optics;
};

/// Per-point wall time on a monotonic clock, single-threaded, I/O excluded.
/// Without models the pipeline is the rule check alone and reports the same
/// numbers. `max_points` of 0 uses the whole stream.
BenchmarkResult benchmark_latency(const detectors::ModelBundle* models, const rules::RuleSet& rules,
                                  const telemetry::FlightLog& stream, std::size_t max_points = 0);

// --- simulated protocol ----------------------------------------------------

enum class Suite { RandomClean, WindStrong, WindMild, Actuator, RollStuck, BaroStuck, Crash };
inline constexpr std::array<Suite, 7> kAllSuites = {Suite::RandomClean, Suite::WindStrong, Suite::WindMild,
                                                     Suite::Actuator,    Suite::RollStuck,  Suite::BaroStuck,
                                                     Suite::Crash};
std::string suite_name(Suite suite);

/// `runs` seeded logs of one fault archetype.
std::vector<LabeledCase> make_suite(Suite suite, std::size_t runs, std::uint64_t seed);
/// Clean base-mission runs with seeds seed, seed+1, ...
std::vector<telemetry::FlightLog> make_training_corpus(std::size_t runs, std::uint64_t seed);

detectors::Dataset feature_corpus(std::span<const telemetry::FlightLog> logs,
                                  std::span<const telemetry::Field> features);
/// Phase of every record, aligned with feature_corpus; used to stratify the
/// detector training sample.
std::vector<std::size_t> phase_strata(std::span<const telemetry::FlightLog> logs,
                                      const phases::Tolerances& tolerances = {});

struct SuiteReport {
    std::string name;
    std::size_t runs = 0;
    std::size_t records = 0;
    AblationResult result;
};

struct ProtocolConfig {
    std::size_t train_runs = 30;
    std::size_t runs_per_suite = 5;
    std::uint64_t seed = 1;
    rules::MiningConfig mining;
    detectors::DetectorConfig detectors;
    pipeline::Options options;
};

struct ProtocolResult {
    rules::RuleSet rules;
    detectors::ModelBundle models;
    std::vector<SuiteReport> suites;
    double seconds = 0.0;
};

/// Train on clean base missions, then score every fault suite.
ProtocolResult run_protocol(const ProtocolConfig& config, std::ostream* progress = nullptr);

std::string report_json(std::span<const SuiteReport> suites, const std::optional<BenchmarkResult>& bench = {});
std::string report_table(std::span<const SuiteReport> suites);
std::string benchmark_table(const BenchmarkResult& bench);

}  // namespace droneguard::eval
