#include "droneguard/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "json.hpp"

#include "droneguard/error.hpp"
#include "droneguard/phases.hpp"

namespace droneguard::eval {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void fill_rates(Metrics& m) {
    m.recall.reset();
    m.false_positive_rate.reset();
    if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.fp + m.tn > 0) m.false_positive_rate = static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tn);
}

}  // namespace

Metrics evaluate(const std::vector<bool>& flagged, const std::vector<bool>& labels) {
    if (flagged.size() != labels.size()) {
        throw Error(Errc::LengthMismatch, std::to_string(flagged.size()) + " verdicts vs " +
                                              std::to_string(labels.size()) + " labels");
    }
    Metrics m;
    for (std::size_t i = 0; i < flagged.size(); ++i) {
        if (labels[i]) {
            flagged[i] ? ++m.tp : ++m.fn;
        } else {
            flagged[i] ? ++m.fp : ++m.tn;
        }
    }
    fill_rates(m);
    return m;
}

Metrics combine(const Metrics& a, const Metrics& b) {
    Metrics m;
    m.tp = a.tp + b.tp;
    m.fp = a.fp + b.fp;
    m.tn = a.tn + b.tn;
    m.fn = a.fn + b.fn;
    fill_rates(m);
    return m;
}

AblationResult run_ablation(std::span<const LabeledCase> corpus, const rules::RuleSet& rules,
                            const detectors::ModelBundle& models, const pipeline::Options& options) {
    AblationResult out;
    for (const auto& c : corpus) {
        const auto verdicts = pipeline::detect_log(c.log, rules, &models, options);
        out.rules_only = combine(out.rules_only, evaluate(pipeline::finals(verdicts, pipeline::Fusion::RulesOnly), c.labels));
        out.ensemble_only =
            combine(out.ensemble_only, evaluate(pipeline::finals(verdicts, pipeline::Fusion::EnsembleOnly), c.labels));
        out.combined = combine(out.combined, evaluate(pipeline::finals(verdicts, pipeline::Fusion::Combined), c.labels));
        for (std::size_t d = 0; d < 5; ++d) {
            out.per_detector[d] = combine(
                out.per_detector[d], evaluate(pipeline::detector_flags(verdicts, detectors::kAllDetectors[d]), c.labels));
        }
    }
    return out;
}

TimingStats summarize_timings(std::vector<double> millis) {
    TimingStats s;
    s.samples = millis.size();
    if (millis.empty()) return s;
    double sum = 0.0;
    for (double v : millis) sum += v;
    s.mean_ms = sum / static_cast<double>(millis.size());
    s.max_ms = *std::max_element(millis.begin(), millis.end());
    s.median_ms = detectors::percentile(std::move(millis), 50.0);
    return s;
}

BenchmarkResult benchmark_latency(const detectors::ModelBundle* models, const rules::RuleSet& rules,
                                  const telemetry::FlightLog& stream, std::size_t max_points) {
    if (stream.records.empty()) throw Error(Errc::EmptyCorpus, "benchmark stream has no records");
    const auto annotated = phases::segment(stream);
    std::size_t n = stream.records.size();
    if (max_points > 0) n = std::min(n, max_points);

    std::vector<double> t_rules;
    std::array<std::vector<double>, 5> t_det;
    std::vector<double> t_without;
    std::vector<double> t_with;
    volatile std::size_t sink = 0;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = stream.records[i];
        const auto phase = annotated.phase_of[i];
        auto start = Clock::now();
        sink = sink + rules::check_record(rules, r, phase, i).size();
        t_rules.push_back(ms_since(start));
        if (!models) continue;

        const auto x = detectors::feature_vector(r, models->config.features);
        start = Clock::now();
        sink = sink + static_cast<std::size_t>(detectors::predict_kmeans(models->kmeans, x));
        t_det[0].push_back(ms_since(start));
        start = Clock::now();
        sink = sink + static_cast<std::size_t>(detectors::predict_dbscan(models->dbscan, x));
        t_det[1].push_back(ms_since(start));
        start = Clock::now();
        sink = sink + static_cast<std::size_t>(detectors::predict_optics(models->optics, x));
        t_det[2].push_back(ms_since(start));
        start = Clock::now();
        sink = sink + static_cast<std::size_t>(detectors::predict_lof(models->lof, x));
        t_det[3].push_back(ms_since(start));
        start = Clock::now();
        sink = sink + static_cast<std::size_t>(detectors::predict_ocsvm(models->svm, x));
        t_det[4].push_back(ms_since(start));

        for (bool optics : {false, true}) {
            start = Clock::now();
            auto violations = rules::check_record(rules, r, phase, i);
            const auto fv = detectors::feature_vector(r, models->config.features);
            const auto votes = detectors::predict_all(*models, fv, optics);
            const auto verdict = ensemble::decide(std::move(violations), ensemble::vote(votes), i, r.timestamp_ms);
            sink = sink + static_cast<std::size_t>(verdict.final);
            (optics ? t_with : t_without).push_back(ms_since(start));
        }
    }

    BenchmarkResult out;
    out.rules = summarize_timings(t_rules);
    if (!models) {
        out.pipeline_without_optics = out.rules;
        out.pipeline_with_optics = out.rules;
        return out;
    }
    for (std::size_t d = 0; d < 5; ++d) out.detectors[d] = summarize_timings(std::move(t_det[d]));
    out.pipeline_without_optics = summarize_timings(std::move(t_without));
    out.pipeline_with_optics = summarize_timings(std::move(t_with));
    return out;
}

// --- simulated protocol ----------------------------------------------------

std::string suite_name(Suite suite) {
    switch (suite) {
        case Suite::RandomClean: return "random-clean";
        case Suite::WindStrong: return "wind-strong";
        case Suite::WindMild: return "wind-mild";
        case Suite::Actuator: return "actuator-0.7";
        case Suite::RollStuck: return "sensor-roll-pi";
        case Suite::BaroStuck: return "sensor-baro-0";
        case Suite::Crash: return "crash";
    }
    return "?";
}

namespace {

LabeledCase to_case(std::string name, sim::LabeledLog&& run) {
    return {std::move(name), std::move(run.log), std::move(run.anomaly_mask)};
}

/// Seeded engine-cutoff time inside the clean run's ON_MISSION phase, on a
/// tick boundary and clear of the phase edges.
std::int64_t cutoff_time(const sim::MissionSpec& mission, std::uint64_t seed) {
    const auto clean = sim::simulate(mission, {}, seed);
    const auto annotated = phases::segment(clean.log);
    std::int64_t first = -1;
    std::int64_t last = -1;
    for (std::size_t i = 0; i < annotated.phase_of.size(); ++i) {
        if (annotated.phase_of[i] != phases::MissionPhase::OnMission) continue;
        if (first < 0) first = clean.log.records[i].timestamp_ms;
        last = clean.log.records[i].timestamp_ms;
    }
    if (first < 0) throw Error(Errc::InfeasibleMission, "clean run never reaches ON_MISSION");
    std::mt19937_64 rng(seed * 7919 + 17);
    const double lo = static_cast<double>(first) + 2000.0;
    const double hi = std::max(lo, static_cast<double>(last) - 2000.0);
    const double t = std::uniform_real_distribution<double>(lo, hi)(rng);
    const std::int64_t tick = mission.tick_ms;
    return static_cast<std::int64_t>(t) / tick * tick;
}

}  // namespace

std::vector<LabeledCase> make_suite(Suite suite, std::size_t runs, std::uint64_t seed) {
    std::vector<LabeledCase> out;
    const auto base = sim::base_mission();
    constexpr double kPi = std::numbers::pi;
    for (std::size_t i = 0; i < runs; ++i) {
        const std::uint64_t s = seed + i;
        const std::string name = suite_name(suite) + "-" + std::to_string(s);
        switch (suite) {
            case Suite::RandomClean:
                out.push_back(to_case(name, sim::simulate(sim::random_mission(s), {}, s)));
                break;
            case Suite::WindStrong:
                out.push_back(to_case(name, std::move(sim::windy_pair(base, s).strong)));
                break;
            case Suite::WindMild:
                out.push_back(to_case(name, std::move(sim::windy_pair(base, s).mild)));
                break;
            case Suite::Actuator: {
                const std::vector<sim::FaultSpec> f{sim::ActuatorFault{0.7, 0, sim::kForever}};
                out.push_back(to_case(name, sim::simulate(base, f, s)));
                break;
            }
            case Suite::RollStuck: {
                const std::vector<sim::FaultSpec> f{sim::SensorStuckFault{telemetry::Field::Roll, kPi, 0, sim::kForever}};
                out.push_back(to_case(name, sim::simulate(sim::random_mission(s), f, s)));
                break;
            }
            case Suite::BaroStuck: {
                const std::vector<sim::FaultSpec> f{
                    sim::SensorStuckFault{telemetry::Field::BaroStatus, 0.0, 0, sim::kForever}};
                out.push_back(to_case(name, sim::simulate(sim::random_mission(s), f, s)));
                break;
            }
            case Suite::Crash: {
                const std::vector<sim::FaultSpec> f{sim::EngineCutoffFault{cutoff_time(base, s)}};
                out.push_back(to_case(name, sim::simulate(base, f, s)));
                break;
            }
        }
    }
    return out;
}

std::vector<telemetry::FlightLog> make_training_corpus(std::size_t runs, std::uint64_t seed) {
    std::vector<telemetry::FlightLog> out;
    const auto base = sim::base_mission();
    for (std::size_t i = 0; i < runs; ++i) out.push_back(sim::simulate(base, {}, seed + i).log);
    return out;
}

detectors::Dataset feature_corpus(std::span<const telemetry::FlightLog> logs,
                                  std::span<const telemetry::Field> features) {
    detectors::Dataset out;
    for (const auto& l : logs) {
        for (const auto& r : l.records) out.push_back(detectors::feature_vector(r, features));
    }
    return out;
}

std::vector<std::size_t> phase_strata(std::span<const telemetry::FlightLog> logs, const phases::Tolerances& tolerances) {
    std::vector<std::size_t> out;
    for (const auto& l : logs) {
        for (auto p : phases::segment(l, tolerances).phase_of) out.push_back(static_cast<std::size_t>(p));
    }
    return out;
}

ProtocolResult run_protocol(const ProtocolConfig& config, std::ostream* progress) {
    const auto start = Clock::now();
    ProtocolResult out;
    const auto training = make_training_corpus(config.train_runs, config.seed);
    std::vector<phases::PhaseAnnotatedLog> annotated;
    for (const auto& l : training) annotated.push_back(phases::segment(l, config.options.tolerances));
    out.rules = rules::mine_rules(annotated, config.mining);
    out.rules.provenance.push_back("base mission x" + std::to_string(config.train_runs) + ", seeds " +
                                   std::to_string(config.seed) + ".." +
                                   std::to_string(config.seed + config.train_runs - 1));
    out.models = detectors::fit_bundle(feature_corpus(training, config.detectors.features), config.detectors,
                                       phase_strata(training, config.options.tolerances));
    out.models.provenance = out.rules.provenance;
    if (progress) {
        *progress << "trained: " << out.rules.range_rules.size() << " rules, " << out.models.optics.train.size()
                  << " detector training points\n";
    }

    for (std::size_t s = 0; s < kAllSuites.size(); ++s) {
        const Suite suite = kAllSuites[s];
        const auto cases = make_suite(suite, config.runs_per_suite, config.seed + 1000 * (s + 1));
        SuiteReport rep;
        rep.name = suite_name(suite);
        rep.runs = cases.size();
        for (const auto& c : cases) rep.records += c.log.records.size();
        rep.result = run_ablation(cases, out.rules, out.models, config.options);
        if (progress) *progress << "suite " << rep.name << ": " << rep.records << " records\n";
        out.suites.push_back(std::move(rep));
    }
    out.seconds = ms_since(start) / 1000.0;
    return out;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
    nlohmann::json j = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
    j["recall"] = m.recall ? nlohmann::json(*m.recall) : nlohmann::json(nullptr);
    j["false_positive_rate"] = m.false_positive_rate ? nlohmann::json(*m.false_positive_rate) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json timing_json(const TimingStats& t) {
    return {{"mean_ms", t.mean_ms}, {"median_ms", t.median_ms}, {"max_ms", t.max_ms}, {"samples", t.samples}};
}

std::string pct(const std::optional<double>& v) {
    if (!v) return "N.A";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
    return buf;
}

/// Recall on fault suites, false-positive rate on suites without anomalies.
std::string headline(const Metrics& m) { return m.recall ? pct(m.recall) : pct(m.false_positive_rate); }

}  // namespace

std::string report_json(std::span<const SuiteReport> suites, const std::optional<BenchmarkResult>& bench) {
    nlohmann::json j;
    j["suites"] = nlohmann::json::array();
    for (const auto& s : suites) {
        nlohmann::json js = {{"name", s.name},
                             {"runs", s.runs},
                             {"records", s.records},
                             {"combined", metrics_json(s.result.combined)},
                             {"rules_only", metrics_json(s.result.rules_only)},
                             {"ensemble_only", metrics_json(s.result.ensemble_only)}};
        for (std::size_t d = 0; d < 5; ++d) {
            js["detectors"][std::string(detectors::detector_tag(detectors::kAllDetectors[d]))] =
                metrics_json(s.result.per_detector[d]);
        }
        j["suites"].push_back(js);
    }
    if (bench) {
        j["benchmark"] = {{"rules", timing_json(bench->rules)},
                          {"pipeline_without_optics", timing_json(bench->pipeline_without_optics)},
                          {"pipeline_with_optics", timing_json(bench->pipeline_with_optics)}};
        for (std::size_t d = 0; d < 5; ++d) {
            j["benchmark"]["detectors"][std::string(detectors::detector_tag(detectors::kAllDetectors[d]))] =
                timing_json(bench->detectors[d]);
        }
    }
    return j.dump(2) + "\n";
}

std::string report_table(std::span<const SuiteReport> suites) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %8s %9s %9s %9s | %7s %7s %7s %7s %7s\n", "dataset", "records",
                  "combined", "rules", "ensemble", "KM", "DB", "OP", "LOF", "SVM");
    out += line;
    out += std::string(std::char_traits<char>::length(line) - 1, '-') + "\n";
    for (const auto& s : suites) {
        const auto& r = s.result;
        std::snprintf(line, sizeof line, "%-16s %8zu %9s %9s %9s | %7s %7s %7s %7s %7s\n", s.name.c_str(), s.records,
                      headline(r.combined).c_str(), headline(r.rules_only).c_str(), headline(r.ensemble_only).c_str(),
                      headline(r.per_detector[0]).c_str(), headline(r.per_detector[1]).c_str(),
                      headline(r.per_detector[2]).c_str(), headline(r.per_detector[3]).c_str(),
                      headline(r.per_detector[4]).c_str());
        out += line;
    }
    out += "(values in %: recall on fault suites, false-positive rate on clean suites; N.A when undefined)\n";
    return out;
}

std::string benchmark_table(const BenchmarkResult& b) {
    std::string out;
    char line[160];
    auto row = [&](const char* name, const TimingStats& t) {
        std::snprintf(line, sizeof line, "%-26s %10.4f %10.4f %10.4f %8zu\n", name, t.mean_ms, t.median_ms, t.max_ms,
                      t.samples);
        out += line;
    };
    std::snprintf(line, sizeof line, "%-26s %10s %10s %10s %8s\n", "stage", "mean ms", "median ms", "max ms", "points");
    out += line;
    row("rules", b.rules);
    for (std::size_t d = 0; d < 5; ++d) {
        row(std::string(detectors::detector_tag(detectors::kAllDetectors[d])).c_str(), b.detectors[d]);
    }
    row("pipeline without OPTICS", b.pipeline_without_optics);
    row("pipeline with OPTICS", b.pipeline_with_optics);
    return out;
}

}  // namespace droneguard::eval
