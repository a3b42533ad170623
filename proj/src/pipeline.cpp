#include "droneguard/pipeline.hpp"

#include <algorithm>

namespace droneguard::pipeline {

using detectors::Vote;

LogVerdicts detect_log(const telemetry::FlightLog& log, const rules::RuleSet& rules,
                       const detectors::ModelBundle* models, const Options& options) {
    LogVerdicts out;
    out.phase_of = phases::segment(log, options.tolerances).phase_of;
    const auto& records = log.records;

    std::vector<std::vector<rules::Violation>> latency_at(records.size());
    if (rules.latency_rule && !records.empty()) {
        out.latency = rules::check_latency(*rules.latency_rule, log.commands, records.back().timestamp_ms);
        for (const auto& v : out.latency) {
            const auto* cmd = &*std::find_if(log.commands.begin(), log.commands.end(),
                                             [&](const auto& c) { return c.cmd_id == v.cmd_id; });
            const auto known = cmd->issue_ms + rules.latency_rule->max_latency_ms + 1;
            auto it = std::lower_bound(records.begin(), records.end(), known,
                                       [](const auto& r, std::int64_t t) { return r.timestamp_ms < t; });
            if (it == records.end()) --it;
            auto idx = static_cast<std::size_t>(it - records.begin());
            auto copy = v;
            copy.record_index = idx;
            latency_at[idx].push_back(std::move(copy));
        }
    }

    out.verdicts.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto violations = rules::check_record(rules, records[i], out.phase_of[i], i);
        for (auto& v : latency_at[i]) violations.push_back(std::move(v));
        std::array<Vote, 5> votes{};
        votes.fill(Vote::Normal);
        if (models) {
            const auto x = detectors::feature_vector(records[i], models->config.features);
            votes = detectors::predict_all(*models, x, options.include_optics);
        }
        out.verdicts.push_back(
            ensemble::decide(std::move(violations), ensemble::vote(votes), i, records[i].timestamp_ms));
    }
    return out;
}

std::vector<bool> finals(const LogVerdicts& verdicts, Fusion fusion) {
    std::vector<bool> out;
    out.reserve(verdicts.verdicts.size());
    for (const auto& v : verdicts.verdicts) {
        const bool rules = !v.rule_violations.empty();
        const bool ens = v.ensemble.majority == Vote::Anomaly;
        switch (fusion) {
            case Fusion::RulesOnly: out.push_back(rules); break;
            case Fusion::EnsembleOnly: out.push_back(ens); break;
            case Fusion::Combined: out.push_back(rules || ens); break;
        }
    }
    return out;
}

std::vector<bool> detector_flags(const LogVerdicts& verdicts, detectors::Detector which) {
    std::vector<bool> out;
    out.reserve(verdicts.verdicts.size());
    for (const auto& v : verdicts.verdicts) {
        out.push_back(v.ensemble.votes[static_cast<std::size_t>(which)] == Vote::Anomaly);
    }
    return out;
}

}  // namespace droneguard::pipeline
