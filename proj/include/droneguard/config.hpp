#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "droneguard/detectors.hpp"
#include "droneguard/ensemble.hpp"
#include "droneguard/phases.hpp"
#include "droneguard/rules.hpp"

namespace droneguard {

/// Every tunable in one place. Files use dotted keys, either flat
/// (`{"rules.min_support": 0.02}`) or nested (`{"rules": {"min_support": 0.02}}`).
struct Config {
    phases::Tolerances tolerances;
    rules::MiningConfig mining;
    detectors::DetectorConfig detectors;
    ensemble::WindowConfig window;
    std::uint64_t seed = 1;
};

std::vector<std::string> config_keys();

/// `value` is JSON text; bare words are taken as strings. Throws
/// Error(InvalidConfig) for unknown keys, wrong types and out-of-range values.
void apply_setting(Config& config, std::string_view key, std::string_view value);
/// `key=value`
void apply_override(Config& config, std::string_view assignment);
Config parse_config(std::string_view json_text);
/// Flat document listing every key with its current value.
std::string write_config(const Config& config);

/// Detector settings with the run seed applied.
detectors::DetectorConfig detector_config(const Config& config);

}  // namespace droneguard
