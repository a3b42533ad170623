#include "droneguard/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "droneguard/config.hpp"
#include "droneguard/detectors.hpp"
#include "droneguard/ensemble.hpp"
#include "droneguard/error.hpp"
#include "droneguard/evalkit.hpp"
#include "droneguard/phases.hpp"
#include "droneguard/pipeline.hpp"
#include "droneguard/rules.hpp"
#include "droneguard/simkit.hpp"
#include "droneguard/telemetry.hpp"

namespace droneguard::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::InvalidDocument, "cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::InvalidDocument, "cannot write " + path.string());
    f << content;
}

struct Run {
    std::string name;
    telemetry::FlightLog log;
    std::optional<std::vector<bool>> labels;
};

Run load_run(const fs::path& dir) {
    Run run;
    run.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    if (!fs::exists(dir / "mission.json")) {
        throw Error(Errc::MissingMetadata, dir.string() + ": mission.json is missing");
    }
    const auto meta = telemetry::parse_mission(read_file(dir / "mission.json"));
    run.log = telemetry::parse_log(read_file(dir / "log.csv"), meta);
    if (fs::exists(dir / "commands.csv")) run.log.commands = telemetry::parse_commands(read_file(dir / "commands.csv"));
    if (fs::exists(dir / "labels.csv")) run.labels = sim::parse_labels(read_file(dir / "labels.csv"), run.log);
    return run;
}

/// A directory holding log.csv is one run; any other directory contributes
/// its immediate subdirectories that hold one.
std::vector<Run> collect_runs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> dirs;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (!fs::is_directory(p)) throw Error(Errc::EmptyCorpus, in + " is not a directory");
        if (fs::exists(p / "log.csv")) {
            dirs.push_back(p);
            continue;
        }
        std::vector<fs::path> sub;
        for (const auto& e : fs::directory_iterator(p)) {
            if (e.is_directory() && fs::exists(e.path() / "log.csv")) sub.push_back(e.path());
        }
        std::sort(sub.begin(), sub.end());
        if (sub.empty()) throw Error(Errc::EmptyCorpus, in + " holds no flight logs");
        dirs.insert(dirs.end(), sub.begin(), sub.end());
    }
    std::vector<Run> runs;
    for (const auto& d : dirs) runs.push_back(load_run(d));
    if (runs.empty()) throw Error(Errc::EmptyCorpus, "no flight logs given");
    return runs;
}

/// Runs whose labels mark anomalies are not used for training.
std::vector<Run> clean_runs(std::vector<Run> runs, std::ostream& err) {
    std::vector<Run> out;
    for (auto& r : runs) {
        if (r.labels && std::find(r.labels->begin(), r.labels->end(), true) != r.labels->end()) {
            err << "skipping " << r.name << ": labels mark anomalies\n";
            continue;
        }
        out.push_back(std::move(r));
    }
    if (out.empty()) throw Error(Errc::EmptyCorpus, "no clean flight logs to train on");
    return out;
}

std::string pct(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * *v);
    return buf;
}

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> overrides;
};

Config load_config(const Globals& g) {
    Config c = g.config_path.empty() ? Config{} : parse_config(read_file(g.config_path));
    for (const auto& o : g.overrides) apply_override(c, o);
    if (g.seed) c.seed = *g.seed;
    return c;
}

fs::path out_dir(const Globals& g) { return g.out.empty() ? fs::path(".") : fs::path(g.out); }

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string mission;
    bool random_mission = false;
    std::vector<std::string> faults;
    std::string windy;
    std::size_t count = 1;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out) {
    const Config config = load_config(g);
    std::vector<sim::FaultSpec> faults;
    for (const auto& f : a.faults) faults.push_back(sim::parse_fault(f));
    const sim::MissionSpec fixed = a.mission.empty() ? sim::base_mission() : sim::parse_mission_spec(read_file(a.mission));

    const fs::path root = out_dir(g);
    for (std::size_t i = 0; i < a.count; ++i) {
        const std::uint64_t seed = config.seed + i;
        const auto mission = a.random_mission ? sim::random_mission(seed) : fixed;
        sim::LabeledLog run;
        if (!a.windy.empty()) {
            auto pair = sim::windy_pair(mission, seed);
            run = a.windy == "strong" ? std::move(pair.strong) : std::move(pair.mild);
            out << "wind " << telemetry::format_double(a.windy == "strong" ? pair.strong_speed_mps : pair.mild_speed_mps)
                << " m/s toward " << telemetry::format_double(pair.direction_rad) << " rad\n";
        } else {
            run = sim::simulate(mission, faults, seed);
        }
        char name[32];
        std::snprintf(name, sizeof name, "run_%03zu", i);
        const fs::path dir = a.count > 1 ? root / name : root;
        telemetry::FlightLog records_only = run.log;
        records_only.commands.clear();
        write_file(dir / "log.csv", telemetry::write_log(records_only));
        write_file(dir / "commands.csv", telemetry::write_commands(run.log.commands));
        write_file(dir / "mission.json", sim::write_mission_spec(mission));
        write_file(dir / "labels.csv", sim::write_labels(run));
        const auto anomalies = std::count(run.anomaly_mask.begin(), run.anomaly_mask.end(), true);
        out << dir.string() << " seed=" << seed << " records=" << run.log.records.size()
            << " completed=" << (run.completed ? 1 : 0) << " anomalous=" << anomalies << "\n";
    }
    return kExitClean;
}

// --- mine / fit ------------------------------------------------------------

int cmd_mine(const Globals& g, const std::vector<std::string>& inputs, bool verbose, std::ostream& out,
             std::ostream& err) {
    const Config config = load_config(g);
    const auto runs = clean_runs(collect_runs(inputs), err);
    std::vector<phases::PhaseAnnotatedLog> annotated;
    for (const auto& r : runs) annotated.push_back(phases::segment(r.log, config.tolerances));
    rules::MiningDiagnostics diag;
    auto rs = rules::mine_rules(annotated, config.mining, &diag);
    for (const auto& r : runs) rs.provenance.push_back(r.name);

    const fs::path path = out_dir(g) / "rules.json";
    write_file(path, rules::write_ruleset(rs));
    out << "mined " << rs.range_rules.size() << " range rules from " << runs.size() << " logs -> " << path.string()
        << "\n";
    for (const auto& r : rs.range_rules) out << "  " << r.description << "\n";
    if (rs.latency_rule) out << "  every command is enacted within " << rs.latency_rule->max_latency_ms << " ms\n";
    if (verbose) {
        for (const auto& d : diag.dropped) {
            out << "  dropped " << telemetry::field_name(d.feature) << " in " << phases::phase_name(d.phase)
                << ": holds for " << pct(d.holding_fraction) << ", excursion "
                << telemetry::format_double(d.max_excursion) << "\n";
        }
        for (const auto& n : diag.near_misses) {
            out << "  widened " << telemetry::field_name(n.feature) << " in " << phases::phase_name(n.phase)
                << " for " << telemetry::format_double(n.observed) << "\n";
        }
    }
    return kExitClean;
}

int cmd_fit(const Globals& g, const std::vector<std::string>& inputs, std::ostream& out, std::ostream& err) {
    const Config config = load_config(g);
    const auto runs = clean_runs(collect_runs(inputs), err);
    std::vector<telemetry::FlightLog> logs;
    for (const auto& r : runs) logs.push_back(r.log);
    const auto dcfg = detector_config(config);
    const auto corpus = eval::feature_corpus(logs, dcfg.features);
    auto bundle = detectors::fit_bundle(corpus, dcfg, eval::phase_strata(logs, config.tolerances));
    for (const auto& r : runs) bundle.provenance.push_back(r.name);

    const fs::path path = out_dir(g) / "models.json";
    write_file(path, detectors::write_bundle(bundle));
    out << "fitted 5 detectors on " << std::min(corpus.size(), dcfg.max_train) << " of " << corpus.size()
        << " points -> " << path.string() << "\n";
    out << "  dbscan eps=" << telemetry::format_double(bundle.dbscan.eps)
        << " optics threshold=" << telemetry::format_double(bundle.optics.reach_threshold)
        << " svm gamma=" << telemetry::format_double(bundle.svm.gamma) << "\n";
    return kExitClean;
}

// --- detect / stream -------------------------------------------------------

struct DetectArgs {
    std::string rules;
    std::string models;
    std::string mission;
    std::string commands;
    bool no_optics = false;
    bool verbose = false;
};

struct Loaded {
    rules::RuleSet rules;
    std::optional<detectors::ModelBundle> models;
};

Loaded load_models(const DetectArgs& a) {
    Loaded l;
    l.rules = rules::parse_ruleset(read_file(a.rules));
    if (!a.models.empty()) l.models = detectors::parse_bundle(read_file(a.models));
    return l;
}

int cmd_detect(const Globals& g, const DetectArgs& a, const std::vector<std::string>& inputs, std::ostream& out) {
    const Config config = load_config(g);
    const auto loaded = load_models(a);
    const auto runs = collect_runs(inputs);
    pipeline::Options opt{config.tolerances, !a.no_optics};

    bool any_alert = false;
    for (const auto& run : runs) {
        const auto lv = pipeline::detect_log(run.log, loaded.rules, loaded.models ? &*loaded.models : nullptr, opt);
        ensemble::WindowState window{config.window, {}, 0};
        std::ostringstream detail;
        std::size_t anomalous = 0;
        std::size_t alerts = 0;
        for (const auto& v : lv.verdicts) {
            if (v.final == detectors::Vote::Anomaly) ++anomalous;
            if (a.verbose || !g.out.empty()) detail << ensemble::format_verdict_line(v) << "\n";
            if (auto alert = ensemble::stream_step(window, v)) {
                ++alerts;
                const auto line = ensemble::format_alert_line(*alert);
                detail << line << "\n";
                if (!a.verbose && alerts == 1) out << run.name << ": first " << line << "\n";
            }
        }
        if (a.verbose) out << detail.str();
        if (!g.out.empty()) write_file(fs::path(g.out) / (run.name + ".verdicts.txt"), detail.str());
        out << run.name << " records=" << lv.verdicts.size() << " anomalous=" << anomalous << " alerts=" << alerts;
        if (run.labels) {
            const auto m = eval::evaluate(pipeline::finals(lv, pipeline::Fusion::Combined), *run.labels);
            out << " recall=" << pct(m.recall) << " fpr=" << pct(m.false_positive_rate);
        }
        out << "\n";
        any_alert = any_alert || alerts > 0;
    }
    return any_alert ? kExitAnomalies : kExitClean;
}

int cmd_stream(const Globals& g, const DetectArgs& a, std::istream& in, std::ostream& out, std::ostream& err) {
    const Config config = load_config(g);
    const auto loaded = load_models(a);
    const auto meta = telemetry::parse_mission(read_file(a.mission));
    std::vector<telemetry::CommandEvent> commands;
    if (!a.commands.empty()) commands = telemetry::parse_commands(read_file(a.commands));

    // Latency breaches surface on the first row at or after the moment the
    // limit ran out.
    struct Pending {
        std::int64_t due_ms;
        rules::Violation violation;
    };
    std::vector<Pending> pending;
    if (loaded.rules.latency_rule) {
        for (auto& v : rules::check_latency(*loaded.rules.latency_rule, commands)) {
            const auto cmd = std::find_if(commands.begin(), commands.end(),
                                          [&](const auto& c) { return c.cmd_id == v.cmd_id; });
            pending.push_back({cmd->issue_ms + loaded.rules.latency_rule->max_latency_ms + 1, std::move(v)});
        }
        std::stable_sort(pending.begin(), pending.end(),
                         [](const auto& x, const auto& y) { return x.due_ms < y.due_ms; });
    }
    std::size_t next_pending = 0;

    phases::PhaseTracker tracker(meta, config.tolerances);
    ensemble::WindowState window{config.window, {}, 0};
    const detectors::ModelBundle* models = loaded.models ? &*loaded.models : nullptr;
    std::optional<std::int64_t> last_ts;
    std::size_t line_no = 0;
    std::size_t index = 0;
    bool any_alert = false;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("timestamp_ms", 0) == 0) continue;
        // A command section appended to a log ends the telemetry rows.
        if (line.rfind("cmd_id", 0) == 0) break;
        telemetry::LogRecord rec;
        try {
            rec = telemetry::parse_record_row(line);
            if (last_ts && rec.timestamp_ms <= *last_ts) {
                throw Error(Errc::NonMonotoneTimestamps, "timestamp " + std::to_string(rec.timestamp_ms) +
                                                             " does not follow " + std::to_string(*last_ts));
            }
        } catch (const Error& e) {
            err << "error line " << line_no << ": " << e.what() << "\n";
            continue;
        }
        last_ts = rec.timestamp_ms;
        const auto phase = tracker.update(rec);
        auto violations = rules::check_record(loaded.rules, rec, phase, index);
        while (next_pending < pending.size() && pending[next_pending].due_ms <= rec.timestamp_ms) {
            auto v = pending[next_pending++].violation;
            v.record_index = index;
            violations.push_back(std::move(v));
        }
        std::array<detectors::Vote, 5> votes{};
        votes.fill(detectors::Vote::Normal);
        if (models) {
            votes = detectors::predict_all(*models, detectors::feature_vector(rec, models->config.features),
                                           !a.no_optics);
        }
        const auto verdict = ensemble::decide(std::move(violations), ensemble::vote(votes), index, rec.timestamp_ms);
        out << ensemble::format_verdict_line(verdict) << "\n";
        if (auto alert = ensemble::stream_step(window, verdict)) {
            out << ensemble::format_alert_line(*alert) << "\n";
            any_alert = true;
        }
        out.flush();
        ++index;
    }
    return any_alert ? kExitAnomalies : kExitClean;
}

// --- eval / bench ----------------------------------------------------------

struct EvalArgs {
    bool protocol = false;
    std::size_t runs = 5;
    std::size_t train_runs = 30;
    bool bench = false;
};

int cmd_eval(const Globals& g, const EvalArgs& e, const DetectArgs& a, const std::vector<std::string>& inputs,
             std::ostream& out, std::ostream& err) {
    const Config config = load_config(g);
    std::vector<eval::SuiteReport> reports;
    std::optional<eval::BenchmarkResult> bench;
    if (e.protocol) {
        eval::ProtocolConfig pc;
        pc.train_runs = e.train_runs;
        pc.runs_per_suite = e.runs;
        pc.seed = config.seed;
        pc.mining = config.mining;
        pc.detectors = detector_config(config);
        pc.options.tolerances = config.tolerances;
        pc.options.include_optics = !a.no_optics;
        auto result = eval::run_protocol(pc, &err);
        reports = std::move(result.suites);
        if (e.bench) {
            const auto stream = sim::simulate(sim::random_mission(config.seed + 7), {}, config.seed + 7);
            bench = eval::benchmark_latency(&result.models, result.rules, stream.log, 200);
        }
    } else {
        if (a.rules.empty() || a.models.empty()) {
            throw Error(Errc::InvalidConfig, "eval needs --protocol, or --rules and --models with labeled runs");
        }
        const auto loaded = load_models(a);
        pipeline::Options opt{config.tolerances, !a.no_optics};
        eval::SuiteReport total{"all", 0, 0, {}};
        for (auto& run : collect_runs(inputs)) {
            if (!run.labels) throw Error(Errc::MissingMetadata, run.name + ": labels.csv is missing");
            std::vector<eval::LabeledCase> one{{run.name, run.log, *run.labels}};
            eval::SuiteReport rep{run.name, 1, run.log.records.size(),
                                  eval::run_ablation(one, loaded.rules, *loaded.models, opt)};
            total.runs += 1;
            total.records += rep.records;
            total.result.rules_only = eval::combine(total.result.rules_only, rep.result.rules_only);
            total.result.ensemble_only = eval::combine(total.result.ensemble_only, rep.result.ensemble_only);
            total.result.combined = eval::combine(total.result.combined, rep.result.combined);
            for (std::size_t d = 0; d < 5; ++d) {
                total.result.per_detector[d] = eval::combine(total.result.per_detector[d], rep.result.per_detector[d]);
            }
            reports.push_back(std::move(rep));
        }
        reports.push_back(std::move(total));
        if (e.bench) bench = eval::benchmark_latency(&*loaded.models, loaded.rules, collect_runs(inputs).front().log, 200);
    }
    out << eval::report_table(reports);
    if (bench) out << eval::benchmark_table(*bench);
    if (!g.out.empty()) {
        write_file(fs::path(g.out) / "report.json", eval::report_json(reports, bench));
        write_file(fs::path(g.out) / "report.txt", eval::report_table(reports));
    }
    return kExitClean;
}

int cmd_bench(const Globals& g, const DetectArgs& a, const std::vector<std::string>& inputs, std::size_t max_points,
              std::ostream& out) {
    (void)load_config(g);
    const auto loaded = load_models(a);
    const auto runs = collect_runs(inputs);
    const auto result =
        eval::benchmark_latency(loaded.models ? &*loaded.models : nullptr, loaded.rules, runs.front().log, max_points);
    out << eval::benchmark_table(result);
    return kExitClean;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Flight-log anomaly detection: rule mining, detector ensemble and fault simulation"};
    app.name("droneguard");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Master seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Simulate missions, optionally with injected faults");
    simulate->add_option("--mission", sa.mission, "Mission JSON (default: built-in loop)")->check(CLI::ExistingFile);
    simulate->add_flag("--random-mission", sa.random_mission, "Generate a random mission per run");
    simulate->add_option("--fault", sa.faults, "Fault, e.g. wind:speed=12,dir=1.57 (repeatable)");
    simulate->add_option("--windy", sa.windy, "Calibrated whole-mission wind")->check(CLI::IsMember({"strong", "mild"}));
    simulate->add_option("--count", sa.count, "Number of runs; more than one writes run_NNN directories")
        ->check(CLI::PositiveNumber);

    std::vector<std::string> inputs;
    bool verbose = false;
    auto* mine = app.add_subcommand("mine", "Mine range and latency rules from clean logs");
    mine->add_option("logs", inputs, "Run directories or directories of runs")->required();
    mine->add_flag("-v,--verbose", verbose, "Also list dropped and widened candidates");

    auto* fit = app.add_subcommand("fit", "Fit the five unsupervised detectors on clean logs");
    fit->add_option("logs", inputs, "Run directories or directories of runs")->required();

    DetectArgs da;
    auto* detect = app.add_subcommand("detect", "Score logs; exit 1 when any window alert fires");
    detect->add_option("--rules", da.rules, "rules.json")->required()->check(CLI::ExistingFile);
    detect->add_option("--models", da.models, "models.json (omit for rules only)")->check(CLI::ExistingFile);
    detect->add_flag("--no-optics", da.no_optics, "Skip the OPTICS refit");
    detect->add_flag("-v,--verbose", da.verbose, "Print every verdict");
    detect->add_option("logs", inputs, "Run directories or directories of runs")->required();

    auto* stream = app.add_subcommand("stream", "Score CSV rows from stdin as they arrive");
    stream->add_option("--rules", da.rules, "rules.json")->required()->check(CLI::ExistingFile);
    stream->add_option("--models", da.models, "models.json (omit for rules only)")->check(CLI::ExistingFile);
    stream->add_option("--mission", da.mission, "Mission JSON")->required()->check(CLI::ExistingFile);
    stream->add_option("--commands", da.commands, "Command log for latency checks")->check(CLI::ExistingFile);
    stream->add_flag("--no-optics", da.no_optics, "Skip the OPTICS refit");

    EvalArgs ea;
    auto* evalc = app.add_subcommand("eval", "Recall and false-positive rate with the rules/ensemble ablation");
    evalc->add_flag("--protocol", ea.protocol, "Simulate training data and every fault suite");
    evalc->add_option("--runs", ea.runs, "Runs per suite")->check(CLI::PositiveNumber);
    evalc->add_option("--train-runs", ea.train_runs, "Clean training runs")->check(CLI::PositiveNumber);
    evalc->add_flag("--bench", ea.bench, "Append per-point latency figures");
    evalc->add_option("--rules", da.rules, "rules.json")->check(CLI::ExistingFile);
    evalc->add_option("--models", da.models, "models.json")->check(CLI::ExistingFile);
    evalc->add_flag("--no-optics", da.no_optics, "Skip the OPTICS refit");
    evalc->add_option("logs", inputs, "Labeled run directories");

    std::size_t max_points = 0;
    auto* bench = app.add_subcommand("bench", "Per-point detection latency");
    bench->add_option("--rules", da.rules, "rules.json")->required()->check(CLI::ExistingFile);
    bench->add_option("--models", da.models, "models.json")->check(CLI::ExistingFile);
    bench->add_option("--max-points", max_points, "Points to time (0: all)");
    bench->add_option("logs", inputs, "Run directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitClean : kExitUsage;
    }
    if (seed_opt->count() > 0) g.seed = seed;
    if (evalc->parsed() && !ea.protocol && inputs.empty()) {
        err << "eval: give --protocol or labeled run directories\n";
        return kExitUsage;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(g, sa, out);
        if (mine->parsed()) return cmd_mine(g, inputs, verbose, out, err);
        if (fit->parsed()) return cmd_fit(g, inputs, out, err);
        if (detect->parsed()) return cmd_detect(g, da, inputs, out);
        if (stream->parsed()) return cmd_stream(g, da, in, out, err);
        if (evalc->parsed()) return cmd_eval(g, ea, da, inputs, out, err);
        if (bench->parsed()) return cmd_bench(g, da, inputs, max_points, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace droneguard::cli
