#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "droneguard/detectors.hpp"
#include "droneguard/ensemble.hpp"
#include "droneguard/phases.hpp"
#include "droneguard/rules.hpp"

namespace droneguard::pipeline {

struct Options {
    phases::Tolerances tolerances;
    bool include_optics = true;
};

struct LogVerdicts {
    std::vector<phases::MissionPhase> phase_of;
    std::vector<ensemble::PointVerdict> verdicts;  ///< one per record
    std::vector<rules::Violation> latency;         ///< also folded into verdicts
};

/// Runs rule checks and the five detectors over every record of a log and
/// fuses them. Latency violations land on the first record at or after the
/// moment they become known (issue time plus the limit). With no bundle the
/// ensemble abstains (all Normal).
LogVerdicts detect_log(const telemetry::FlightLog& log, const rules::RuleSet& rules,
                       const detectors::ModelBundle* models, const Options& options = {});

enum class Fusion { RulesOnly, EnsembleOnly, Combined };

std::vector<bool> finals(const LogVerdicts& verdicts, Fusion fusion);
/// Per-record vote of one detector.
std::vector<bool> detector_flags(const LogVerdicts& verdicts, detectors::Detector which);

}  // namespace droneguard::pipeline
