#include <cmath>
#include <random>

#include "support.hpp"

#include "droneguard/evalkit.hpp"
#include "droneguard/pipeline.hpp"

using namespace droneguard;
using namespace droneguard::eval;
using telemetry::FlightMode;

TEST_CASE("metrics from confusion counts") {
    SUBCASE("perfect detector on anomalous data") {
        const auto m = evaluate({true, true, true}, {true, true, true});
        CHECK(m.recall == 1.0);
        CHECK_FALSE(m.false_positive_rate.has_value());
    }
    SUBCASE("seven of three hundred") {
        std::vector<bool> flagged(300, false);
        for (int i = 0; i < 7; ++i) flagged[static_cast<std::size_t>(i * 40)] = true;
        const auto m = evaluate(flagged, std::vector<bool>(300, false));
        REQUIRE(m.false_positive_rate.has_value());
        CHECK(std::round(*m.false_positive_rate * 10000.0) / 100.0 == doctest::Approx(2.33));
        CHECK_FALSE(m.recall.has_value());
    }
    SUBCASE("clean and silent") {
        const auto m = evaluate({false, false}, {false, false});
        CHECK(m.false_positive_rate == 0.0);
        CHECK_FALSE(m.recall.has_value());
    }
    SUBCASE("length mismatch") { CHECK_ERRC(evaluate({true}, {true, false}), Errc::LengthMismatch); }
    SUBCASE("randomized hand counts") {
        std::mt19937_64 rng(3);
        for (int t = 0; t < 200; ++t) {
            const std::size_t n = 1 + rng() % 50;
            std::vector<bool> f(n), l(n);
            std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                f[i] = rng() % 2;
                l[i] = rng() % 3 == 0;
                if (l[i] && f[i]) ++tp;
                if (l[i] && !f[i]) ++fn;
                if (!l[i] && f[i]) ++fp;
                if (!l[i] && !f[i]) ++tn;
            }
            const auto m = evaluate(f, l);
            CHECK(m.tp == tp);
            CHECK(m.fp == fp);
            CHECK(m.tn == tn);
            CHECK(m.fn == fn);
            if (tp + fn > 0) CHECK(*m.recall == static_cast<double>(tp) / static_cast<double>(tp + fn));
            if (fp + tn > 0) CHECK(*m.false_positive_rate == static_cast<double>(fp) / static_cast<double>(fp + tn));
            const auto twice = combine(m, m);
            CHECK(twice.tp == 2 * tp);
            CHECK(twice.recall == m.recall);
        }
    }
}

TEST_CASE("timing summary") {
    const auto s = summarize_timings({3.0, 1.0, 2.0, 10.0});
    CHECK(s.mean_ms == 4.0);
    CHECK(s.median_ms == 2.5);
    CHECK(s.max_ms == 10.0);
    CHECK(s.samples == 4);
    CHECK(summarize_timings({}).samples == 0);
}

namespace {

struct Trained {
    rules::RuleSet rules;
    detectors::ModelBundle models;
};

const Trained& trained() {
    static const Trained t = [] {
        const auto logs = make_training_corpus(8, 1);
        std::vector<phases::PhaseAnnotatedLog> annotated;
        for (const auto& l : logs) annotated.push_back(phases::segment(l));
        detectors::DetectorConfig cfg;
        cfg.max_train = 200;
        return Trained{rules::mine_rules(annotated, rules::MiningConfig{}),
                       detectors::fit_bundle(feature_corpus(logs, cfg.features), cfg)};
    }();
    return t;
}

}  // namespace

TEST_CASE("pipeline fuses rules and detectors per record") {
    const auto& t = trained();
    const auto run = sim::simulate(sim::base_mission(), {}, 500);
    const auto lv = pipeline::detect_log(run.log, t.rules, &t.models);
    REQUIRE(lv.verdicts.size() == run.log.records.size());
    const auto rules_only = pipeline::finals(lv, pipeline::Fusion::RulesOnly);
    const auto ens = pipeline::finals(lv, pipeline::Fusion::EnsembleOnly);
    const auto both = pipeline::finals(lv, pipeline::Fusion::Combined);
    for (std::size_t i = 0; i < both.size(); ++i) {
        CHECK(both[i] == (rules_only[i] || ens[i]));
        CHECK(lv.verdicts[i].record_index == i);
    }

    const auto bare = pipeline::detect_log(run.log, t.rules, nullptr);
    CHECK(pipeline::finals(bare, pipeline::Fusion::EnsembleOnly) == std::vector<bool>(both.size(), false));
    CHECK(pipeline::finals(bare, pipeline::Fusion::RulesOnly) == rules_only);
}

TEST_CASE("pipeline places latency breaches when they become known") {
    const auto& t = trained();
    auto log = sim::simulate(sim::base_mission(), {}, 501).log;
    log.commands = {{1, 1000, 3500}, {2, 1000, 2500}, {3, 4000, std::nullopt}};
    const auto lv = pipeline::detect_log(log, t.rules, nullptr);
    REQUIRE(lv.latency.size() == 2);
    std::vector<std::pair<std::int64_t, rules::ViolationKind>> seen;
    for (const auto& v : lv.verdicts) {
        for (const auto& viol : v.rule_violations) {
            if (viol.kind != rules::ViolationKind::Range) seen.emplace_back(v.timestamp_ms, viol.kind);
        }
    }
    // 200 ms ticks: 1000 + 2000 + 1 lands on 3200, 4000 + 2000 + 1 on 6200
    REQUIRE(seen.size() == 2);
    CHECK(seen[0] == std::pair{std::int64_t{3200}, rules::ViolationKind::Latency});
    CHECK(seen[1] == std::pair{std::int64_t{6200}, rules::ViolationKind::LostCommand});
}

TEST_CASE("ablation is OR-monotone") {
    const auto& t = trained();
    std::vector<LabeledCase> cases = make_suite(Suite::RandomClean, 1, 77);
    const auto actuator = make_suite(Suite::Actuator, 1, 78);
    cases.insert(cases.end(), actuator.begin(), actuator.end());
    for (const auto& c : cases) {
        const std::vector<LabeledCase> one{c};
        const auto r = run_ablation(one, t.rules, t.models);
        CHECK(r.combined.fp >= std::max(r.rules_only.fp, r.ensemble_only.fp));
        CHECK(r.combined.tp >= std::max(r.rules_only.tp, r.ensemble_only.tp));
        CHECK(r.combined.tp + r.combined.fn == r.rules_only.tp + r.rules_only.fn);
    }
}

TEST_CASE("suites are seeded and labeled") {
    const auto a = make_suite(Suite::Crash, 2, 40);
    const auto b = make_suite(Suite::Crash, 2, 40);
    REQUIRE(a.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(a[i].log == b[i].log);
        CHECK(a[i].labels == b[i].labels);
        CHECK(a[i].labels.size() == a[i].log.records.size());
        CHECK(std::count(a[i].labels.begin(), a[i].labels.end(), true) > 0);
    }
    const auto clean = make_suite(Suite::RandomClean, 2, 40);
    for (const auto& c : clean) CHECK(std::count(c.labels.begin(), c.labels.end(), true) == 0);
    CHECK_FALSE(clean[0].log.meta == clean[1].log.meta);
}

TEST_CASE("benchmark") {
    const auto& t = trained();
    const auto run = sim::simulate(sim::base_mission(), {}, 502);
    const auto with = benchmark_latency(&t.models, t.rules, run.log, 20);
    CHECK(with.rules.samples == 20);
    CHECK(with.pipeline_with_optics.samples == 20);
    CHECK(with.pipeline_without_optics.mean_ms < with.pipeline_with_optics.mean_ms);
    const auto bare = benchmark_latency(nullptr, t.rules, run.log, 20);
    CHECK(bare.pipeline_with_optics.mean_ms == bare.rules.mean_ms);
    CHECK(bare.pipeline_without_optics.mean_ms == bare.rules.mean_ms);
    CHECK_ERRC(benchmark_latency(nullptr, t.rules, telemetry::FlightLog{}), Errc::EmptyCorpus);
    CHECK(benchmark_table(with).find("OPTICS") != std::string::npos);
}

TEST_CASE("reports mark undefined rates") {
    SuiteReport s{"clean", 1, 3, {}};
    s.result.combined = evaluate({false, true, false}, {false, false, false});
    const std::vector<SuiteReport> v{s};
    const auto table = report_table(v);
    CHECK(table.find("33.33") != std::string::npos);
    const auto json = report_json(v);
    CHECK(json.find("\"recall\": null") != std::string::npos);
}
