#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "droneguard/phases.hpp"
#include "droneguard/telemetry.hpp"

namespace droneguard::rules {

using phases::MissionPhase;
using telemetry::Field;

// ---------------------------------------------------------------------------
// Transactions and frequent itemsets

enum class ItemKind { RangeBin, Categorical };

/// One discretized feature value. Categorical items keep the code in both
/// bounds.
struct Item {
    Field feature = Field::Roll;
    ItemKind kind = ItemKind::RangeBin;
    double lower = 0.0;
    double upper = 0.0;

    auto operator<=>(const Item&) const = default;
};

std::string format_item(const Item& item);

/// Sorted by feature; at most one item per feature.
using Transaction = std::vector<Item>;

struct FeatureEnvelope {
    double min = 0.0;
    double max = 0.0;
};

struct FeatureSelection {
    std::vector<Field> numeric{Field::RelAlt, Field::Roll, Field::Pitch,
                               Field::Throttle, Field::Groundspeed, Field::Climb};
    std::vector<Field> categorical{Field::Mode, Field::BaroStatus, Field::GpsFix};
};

struct Discretized {
    std::array<std::vector<Transaction>, phases::kPhaseCount> transactions;
    std::map<std::pair<MissionPhase, Field>, FeatureEnvelope> envelopes;
};

/// Equal-width binning over each phase's observed range. Throws
/// Error(EmptyCorpus) when the corpus holds no records.
Discretized discretize(std::span<const phases::PhaseAnnotatedLog> logs, const FeatureSelection& features = {},
                       int bins = 4);

/// Frequent itemset over integer item ids; `items` is sorted.
struct IdItemset {
    std::vector<int> items;
    std::size_t count = 0;
    double support = 0.0;

    bool operator==(const IdItemset&) const = default;
};

/// Level-wise Apriori. Keeps every itemset whose support (count / number of
/// transactions) is >= min_support. `max_len` of 0 means unbounded. Output is
/// ordered by (size, items). Throws Error(InvalidSupport) unless
/// 0 < min_support <= 1.
std::vector<IdItemset> apriori(std::span<const std::vector<int>> transactions, double min_support,
                               std::size_t max_len = 0);

struct Itemset {
    std::vector<Item> items;
    std::size_t count = 0;
    double support = 0.0;
};

std::vector<Itemset> mine_frequent(std::span<const Transaction> transactions, double min_support,
                                   std::size_t max_len = 0);

using PhaseItemsets = std::array<std::vector<Itemset>, phases::kPhaseCount>;

// ---------------------------------------------------------------------------
// Rules

enum class RuleSource { Mined, Domain };

struct RangeRule {
    Field feature = Field::Roll;
    std::optional<MissionPhase> phase;  ///< nullopt: universal
    double lower = 0.0;
    double upper = 0.0;
    double holding_fraction = 1.0;  ///< before any widening
    double support = 0.0;
    RuleSource source = RuleSource::Mined;
    bool widened = false;
    std::string description;

    bool covers(MissionPhase p) const { return !phase || *phase == p; }
};

std::string describe_rule(const RangeRule& rule);

struct LatencyRule {
    std::int64_t max_latency_ms = 2000;
};

struct RuleSet {
    std::vector<RangeRule> range_rules;  ///< sorted by (scope, feature)
    std::optional<LatencyRule> latency_rule;
    std::vector<std::string> provenance;
    double min_support = 0.0;
    double holding_threshold = 0.99;
    double widen_budget = 0.01;
};

struct NearMiss {
    Field feature = Field::Roll;
    MissionPhase phase = MissionPhase::Initialisation;
    double observed = 0.0;
    double lower = 0.0;  ///< bound before widening
    double upper = 0.0;
};

struct DroppedCandidate {
    Field feature = Field::Roll;
    MissionPhase phase = MissionPhase::Initialisation;
    double holding_fraction = 0.0;
    double max_excursion = 0.0;
};

/// Everything derive_rules considered but did not turn into a plain rule.
struct MiningDiagnostics {
    std::vector<NearMiss> near_misses;
    std::vector<DroppedCandidate> dropped;
    std::vector<std::pair<MissionPhase, Itemset>> multi_feature;
};

struct DeriveOptions {
    double holding_threshold = 0.99;
    double widen_budget = 0.01;
};

/// Turns frequent single-feature items into range rules. For each (phase,
/// feature) the candidate envelope is the observed min/max over records
/// covered by a frequent item; records outside it are the minority that is
/// either absorbed by widening or causes the candidate to be dropped.
RuleSet derive_rules(const PhaseItemsets& itemsets, std::span<const phases::PhaseAnnotatedLog> logs,
                     const DeriveOptions& options = {}, MiningDiagnostics* diagnostics = nullptr);

struct MiningConfig {
    FeatureSelection features;
    int bins = 4;
    double min_support = 0.01;
    std::size_t max_itemset_len = 3;
    double holding_threshold = 0.99;
    double widen_budget = 0.01;
    std::int64_t max_latency_ms = 2000;
};

/// discretize, then Apriori per phase, then derive_rules, plus the latency rule.
RuleSet mine_rules(std::span<const phases::PhaseAnnotatedLog> logs, const MiningConfig& config,
                   MiningDiagnostics* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Checking

enum class ViolationKind { Range, Latency, LostCommand };

struct Violation {
    ViolationKind kind = ViolationKind::Range;
    std::size_t record_index = 0;
    std::int64_t cmd_id = 0;
    std::string rule;  ///< description of the violated rule
    double observed = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::string description;
};

std::vector<Violation> check_record(const RuleSet& rules, const telemetry::LogRecord& record, MissionPhase phase,
                                    std::size_t record_index = 0);

inline constexpr std::int64_t kNoDeadline = std::numeric_limits<std::int64_t>::max();

/// A command breaks the rule when it took longer than the limit to enact, or
/// when it is still unacknowledged more than the limit after issue at `now_ms`.
std::vector<Violation> check_latency(const LatencyRule& rule, std::span<const telemetry::CommandEvent> commands,
                                     std::int64_t now_ms = kNoDeadline);

std::string write_ruleset(const RuleSet& rules);
/// Throws Error(InvalidDocument) on malformed input.
RuleSet parse_ruleset(std::string_view json_text);

}  // namespace droneguard::rules
