#include "droneguard/ensemble.hpp"

#include <algorithm>
#include <cstdio>

#include "droneguard/error.hpp"

namespace droneguard::ensemble {

std::size_t EnsembleVerdict::anomaly_votes() const {
    return static_cast<std::size_t>(std::count(votes.begin(), votes.end(), Vote::Anomaly));
}

EnsembleVerdict vote(std::span<const Vote> votes) {
    if (votes.size() != 5) {
        throw Error(Errc::WrongArity, "majority vote needs exactly 5 votes, got " + std::to_string(votes.size()));
    }
    EnsembleVerdict out;
    std::copy(votes.begin(), votes.end(), out.votes.begin());
    out.majority = out.anomaly_votes() >= 3 ? Vote::Anomaly : Vote::Normal;
    return out;
}

namespace {

std::string votes_text(const EnsembleVerdict& e, char sep) {
    std::string s;
    for (std::size_t i = 0; i < e.votes.size(); ++i) {
        if (i) s += ' ';
        s += detectors::detector_tag(detectors::kAllDetectors[i]);
        s += sep;
        s += e.votes[i] == Vote::Anomaly ? 'A' : 'N';
    }
    return s;
}

}  // namespace

PointVerdict decide(std::vector<rules::Violation> rule_violations, const EnsembleVerdict& ensemble,
                    std::size_t record_index, std::int64_t timestamp_ms) {
    PointVerdict v;
    v.record_index = record_index;
    v.timestamp_ms = timestamp_ms;
    v.ensemble = ensemble;
    const bool broken = !rule_violations.empty();
    v.rule_violations = std::move(rule_violations);
    v.final = broken || ensemble.majority == Vote::Anomaly ? Vote::Anomaly : Vote::Normal;
    for (const auto& viol : v.rule_violations) v.explanation.push_back(viol.description);
    if (ensemble.majority == Vote::Anomaly) {
        v.explanation.push_back("ensemble majority " + std::to_string(ensemble.anomaly_votes()) +
                                "/5 flags this point (" + votes_text(ensemble, '=') + ")");
    }
    return v;
}

std::optional<Alert> stream_step(WindowState& state, const PointVerdict& verdict) {
    const bool anomalous = verdict.final == Vote::Anomaly;
    state.ring.push_back(anomalous);
    while (state.ring.size() > std::max<std::size_t>(state.config.window_len, 1)) state.ring.pop_front();
    state.run = anomalous ? state.run + 1 : 0;

    const auto hits = static_cast<double>(std::count(state.ring.begin(), state.ring.end(), true));
    const double fraction = hits / static_cast<double>(std::max<std::size_t>(state.config.window_len, 1));
    if (fraction > state.config.alert_fraction && state.run >= state.config.sustained_run) {
        return Alert{verdict.timestamp_ms, verdict.record_index, fraction, state.run, verdict.explanation};
    }
    return std::nullopt;
}

std::string format_verdict_line(const PointVerdict& v) {
    std::string rules;
    for (const auto& viol : v.rule_violations) {
        if (!rules.empty()) rules += ';';
        rules += viol.description;
    }
    return "ts=" + std::to_string(v.timestamp_ms) + " final=" + (v.final == Vote::Anomaly ? "ANOMALY" : "NORMAL") +
           " rules=[" + rules + "] votes=" + votes_text(v.ensemble, ':');
}

std::string format_alert_line(const Alert& a) {
    char frac[32];
    std::snprintf(frac, sizeof frac, "%.2f", a.window_fraction);
    std::string line = "ALERT window_frac=" + std::string(frac) + " run=" + std::to_string(a.run) +
                       " ts=" + std::to_string(a.timestamp_ms);
    if (!a.explanation.empty()) line += " reason=\"" + a.explanation.front() + "\"";
    return line;
}

}  // namespace droneguard::ensemble
