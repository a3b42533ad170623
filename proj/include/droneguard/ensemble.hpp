#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "droneguard/detectors.hpp"
#include "droneguard/rules.hpp"

namespace droneguard::ensemble {

using detectors::Vote;

struct EnsembleVerdict {
    std::array<Vote, 5> votes{};  ///< in detectors::kAllDetectors order
    Vote majority = Vote::Normal;

    std::size_t anomaly_votes() const;
};

/// Majority is Anomaly when at least 3 of the 5 votes are. Throws
/// Error(WrongArity) for any other vote count.
EnsembleVerdict vote(std::span<const Vote> votes);

struct PointVerdict {
    std::size_t record_index = 0;
    std::int64_t timestamp_ms = 0;
    std::vector<rules::Violation> rule_violations;
    EnsembleVerdict ensemble;
    Vote final = Vote::Normal;
    std::vector<std::string> explanation;
};

/// Rules broken OR ensemble majority.
PointVerdict decide(std::vector<rules::Violation> rule_violations, const EnsembleVerdict& ensemble,
                    std::size_t record_index = 0, std::int64_t timestamp_ms = 0);

struct WindowConfig {
    std::size_t window_len = 10;
    double alert_fraction = 0.3;
    std::size_t sustained_run = 3;
};

struct WindowState {
    WindowConfig config;
    std::deque<bool> ring;  ///< last finals, newest at the back
    std::size_t run = 0;    ///< current streak of anomalous finals
};

struct Alert {
    std::int64_t timestamp_ms = 0;
    std::size_t record_index = 0;
    double window_fraction = 0.0;
    std::size_t run = 0;
    std::vector<std::string> explanation;
};

/// Pushes the verdict into the window. Raises an alert when the anomalous
/// share of the window (counted against the full window length, so a young
/// stream does not alert on a handful of points) exceeds alert_fraction and
/// the current anomalous streak is at least sustained_run.
std::optional<Alert> stream_step(WindowState& state, const PointVerdict& verdict);

/// `ts=<ms> final=<ANOMALY|NORMAL> rules=[...] votes=KM:x DB:x OP:x LOF:x SVM:x`
std::string format_verdict_line(const PointVerdict& verdict);
/// `ALERT window_frac=<f> run=<n> ...`
std::string format_alert_line(const Alert& alert);

}  // namespace droneguard::ensemble
