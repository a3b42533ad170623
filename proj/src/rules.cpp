#include "droneguard/rules.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "droneguard/error.hpp"

namespace droneguard::rules {

using phases::PhaseAnnotatedLog;
using telemetry::LogRecord;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string_view unit_of(Field f) {
    switch (f) {
        case Field::RelAlt: return " m";
        case Field::Roll:
        case Field::Pitch:
        case Field::Yaw: return " rad";
        case Field::Throttle: return " %";
        case Field::Groundspeed:
        case Field::Climb: return " m/s";
        default: return "";
    }
}

std::string value_text(Field f, double v) {
    if (f == Field::Mode) {
        const auto code = static_cast<int>(std::lround(v));
        if (code >= 0 && code <= 2) return std::string(telemetry::mode_name(static_cast<telemetry::FlightMode>(code)));
    }
    return num(v);
}

std::size_t phase_slot(MissionPhase p) { return static_cast<std::size_t>(p); }

}  // namespace

std::string format_item(const Item& item) {
    const std::string name(telemetry::field_name(item.feature));
    if (item.kind == ItemKind::Categorical) return name + "=" + value_text(item.feature, item.lower);
    return name + "[" + num(item.lower) + "," + num(item.upper) + "]";
}

Discretized discretize(std::span<const PhaseAnnotatedLog> logs, const FeatureSelection& features, int bins) {
    if (bins < 1) throw Error(Errc::InvalidParams, "bin count must be >= 1");
    std::size_t total = 0;
    for (const auto& l : logs) total += l.log.records.size();
    if (total == 0) throw Error(Errc::EmptyCorpus, "training corpus has no records");

    Discretized out;
    for (const auto& l : logs) {
        for (std::size_t i = 0; i < l.log.records.size(); ++i) {
            for (Field f : features.numeric) {
                const double v = telemetry::field_value(l.log.records[i], f);
                auto [it, fresh] = out.envelopes.try_emplace({l.phase_of[i], f}, FeatureEnvelope{v, v});
                if (!fresh) {
                    it->second.min = std::min(it->second.min, v);
                    it->second.max = std::max(it->second.max, v);
                }
            }
        }
    }

    for (const auto& l : logs) {
        for (std::size_t i = 0; i < l.log.records.size(); ++i) {
            const auto& r = l.log.records[i];
            const MissionPhase p = l.phase_of[i];
            Transaction t;
            for (Field f : features.numeric) {
                const auto env = out.envelopes.at({p, f});
                const double v = telemetry::field_value(r, f);
                const double width = (env.max - env.min) / bins;
                Item item{f, ItemKind::RangeBin, env.min, env.max};
                if (width > 0.0) {
                    const int b = std::clamp(static_cast<int>((v - env.min) / width), 0, bins - 1);
                    item.lower = env.min + b * width;
                    item.upper = b == bins - 1 ? env.max : env.min + (b + 1) * width;
                }
                t.push_back(item);
            }
            for (Field f : features.categorical) {
                const double v = telemetry::field_value(r, f);
                t.push_back({f, ItemKind::Categorical, v, v});
            }
            std::sort(t.begin(), t.end());
            out.transactions[phase_slot(p)].push_back(std::move(t));
        }
    }
    return out;
}

std::vector<IdItemset> apriori(std::span<const std::vector<int>> transactions, double min_support,
                               std::size_t max_len) {
    if (!(min_support > 0.0 && min_support <= 1.0)) {
        throw Error(Errc::InvalidSupport, "min_support must lie in (0, 1], got " + num(min_support));
    }
    std::vector<IdItemset> out;
    const std::size_t n = transactions.size();
    if (n == 0) return out;
    auto frequent = [&](std::size_t count) { return static_cast<double>(count) / static_cast<double>(n) >= min_support; };

    std::map<int, std::size_t> single;
    for (const auto& t : transactions) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i == 0 || t[i] != t[i - 1]) ++single[t[i]];
        }
    }
    std::vector<std::vector<int>> level;
    for (const auto& [item, count] : single) {
        if (frequent(count)) {
            level.push_back({item});
            out.push_back({{item}, count, static_cast<double>(count) / static_cast<double>(n)});
        }
    }

    for (std::size_t k = 2; !level.empty() && (max_len == 0 || k <= max_len); ++k) {
        const std::set<std::vector<int>> previous(level.begin(), level.end());
        std::vector<std::vector<int>> candidates;
        for (std::size_t a = 0; a < level.size(); ++a) {
            for (std::size_t b = a + 1; b < level.size(); ++b) {
                if (!std::equal(level[a].begin(), level[a].end() - 1, level[b].begin())) break;
                std::vector<int> c = level[a];
                c.push_back(level[b].back());
                bool closed = true;
                for (std::size_t drop = 0; drop + 2 < c.size() && closed; ++drop) {
                    std::vector<int> sub;
                    sub.reserve(c.size() - 1);
                    for (std::size_t j = 0; j < c.size(); ++j) {
                        if (j != drop) sub.push_back(c[j]);
                    }
                    closed = previous.contains(sub);
                }
                if (closed) candidates.push_back(std::move(c));
            }
        }
        std::vector<std::size_t> counts(candidates.size(), 0);
        for (const auto& t : transactions) {
            if (t.size() < k) continue;
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                if (std::includes(t.begin(), t.end(), candidates[c].begin(), candidates[c].end())) ++counts[c];
            }
        }
        level.clear();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (frequent(counts[c])) {
                out.push_back({candidates[c], counts[c], static_cast<double>(counts[c]) / static_cast<double>(n)});
                level.push_back(std::move(candidates[c]));
            }
        }
    }
    return out;
}

std::vector<Itemset> mine_frequent(std::span<const Transaction> transactions, double min_support,
                                   std::size_t max_len) {
    std::map<Item, int> ids;
    for (const auto& t : transactions) {
        for (const auto& item : t) ids.try_emplace(item, 0);
    }
    std::vector<Item> by_id;
    by_id.reserve(ids.size());
    for (auto& [item, id] : ids) {
        id = static_cast<int>(by_id.size());
        by_id.push_back(item);
    }
    std::vector<std::vector<int>> encoded;
    encoded.reserve(transactions.size());
    for (const auto& t : transactions) {
        std::vector<int> e;
        e.reserve(t.size());
        for (const auto& item : t) e.push_back(ids.at(item));
        std::sort(e.begin(), e.end());
        e.erase(std::unique(e.begin(), e.end()), e.end());
        encoded.push_back(std::move(e));
    }
    std::vector<Itemset> out;
    for (auto& s : apriori(encoded, min_support, max_len)) {
        Itemset is;
        is.count = s.count;
        is.support = s.support;
        for (int id : s.items) is.items.push_back(by_id[static_cast<std::size_t>(id)]);
        out.push_back(std::move(is));
    }
    return out;
}

std::string describe_rule(const RangeRule& rule) {
    const std::string feature(telemetry::field_name(rule.feature));
    std::string scope = rule.phase ? "During " + std::string(phases::phase_name(*rule.phase)) + ", "
                                   : "At all times, ";
    std::string body;
    const auto unit = unit_of(rule.feature);
    if (rule.lower == rule.upper) {
        body = feature + " equals " + value_text(rule.feature, rule.lower) + std::string(unit);
    } else if (telemetry::is_categorical(rule.feature)) {
        body = feature + " is between " + value_text(rule.feature, rule.lower) + " and " +
               value_text(rule.feature, rule.upper);
    } else {
        body = feature + " stays between " + num(rule.lower) + " and " + num(rule.upper) + std::string(unit);
    }
    return scope + body + ".";
}

RuleSet derive_rules(const PhaseItemsets& itemsets, std::span<const PhaseAnnotatedLog> logs,
                     const DeriveOptions& options, MiningDiagnostics* diagnostics) {
    RuleSet out;
    out.holding_threshold = options.holding_threshold;
    out.widen_budget = options.widen_budget;

    std::vector<RangeRule> per_phase;
    for (MissionPhase p : phases::kAllPhases) {
        // Frequent single items grouped by feature; longer itemsets only go to diagnostics.
        std::map<Field, std::vector<Item>> frequent_items;
        for (const auto& is : itemsets[phase_slot(p)]) {
            if (is.items.size() == 1) {
                frequent_items[is.items.front().feature].push_back(is.items.front());
            } else if (diagnostics) {
                diagnostics->multi_feature.emplace_back(p, is);
            }
        }
        for (const auto& [feature, items] : frequent_items) {
            std::vector<double> values;
            for (const auto& l : logs) {
                for (std::size_t i = 0; i < l.log.records.size(); ++i) {
                    if (l.phase_of[i] == p) values.push_back(telemetry::field_value(l.log.records[i], feature));
                }
            }
            if (values.empty()) continue;

            auto covered = [&items](double v) {
                return std::any_of(items.begin(), items.end(),
                                   [v](const Item& it) { return v >= it.lower && v <= it.upper; });
            };
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            std::size_t retained = 0;
            for (double v : values) {
                if (!covered(v)) continue;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                ++retained;
            }
            if (retained == 0) continue;

            std::vector<double> outside;
            for (double v : values) {
                if (v < lo || v > hi) outside.push_back(v);
            }
            const auto n = static_cast<double>(values.size());
            RangeRule rule;
            rule.feature = feature;
            rule.phase = p;
            rule.lower = lo;
            rule.upper = hi;
            rule.support = static_cast<double>(retained) / n;
            rule.holding_fraction = 1.0 - static_cast<double>(outside.size()) / n;

            if (!outside.empty()) {
                double max_excursion = 0.0;
                for (double v : outside) max_excursion = std::max(max_excursion, v < lo ? lo - v : v - hi);
                const bool minority =
                    static_cast<double>(outside.size()) <= (1.0 - options.holding_threshold) * n + 1e-9;
                const bool negligible = max_excursion <= options.widen_budget * (hi - lo);
                if (!minority || !negligible) {
                    if (diagnostics) diagnostics->dropped.push_back({feature, p, rule.holding_fraction, max_excursion});
                    continue;
                }
                for (double v : outside) {
                    if (diagnostics) diagnostics->near_misses.push_back({feature, p, v, lo, hi});
                    rule.lower = std::min(rule.lower, v);
                    rule.upper = std::max(rule.upper, v);
                }
                rule.widened = true;
            }
            per_phase.push_back(std::move(rule));
        }
    }

    // A rule identical in every phase is promoted to a universal one.
    std::map<Field, std::vector<const RangeRule*>> by_feature;
    for (const auto& r : per_phase) by_feature[r.feature].push_back(&r);
    std::set<Field> universal;
    for (const auto& [feature, list] : by_feature) {
        if (list.size() != phases::kPhaseCount) continue;
        const bool same = std::all_of(list.begin(), list.end(), [&](const RangeRule* r) {
            return r->lower == list.front()->lower && r->upper == list.front()->upper && !r->widened;
        });
        if (!same) continue;
        RangeRule u = *list.front();
        u.phase.reset();
        for (const auto* r : list) {
            u.holding_fraction = std::min(u.holding_fraction, r->holding_fraction);
            u.support = std::min(u.support, r->support);
        }
        out.range_rules.push_back(u);
        universal.insert(feature);
    }
    for (auto& r : per_phase) {
        if (!universal.contains(r.feature)) out.range_rules.push_back(std::move(r));
    }
    for (auto& r : out.range_rules) r.description = describe_rule(r);
    std::stable_sort(out.range_rules.begin(), out.range_rules.end(), [](const RangeRule& a, const RangeRule& b) {
        const int sa = a.phase ? static_cast<int>(*a.phase) + 1 : 0;
        const int sb = b.phase ? static_cast<int>(*b.phase) + 1 : 0;
        return std::pair(sa, a.feature) < std::pair(sb, b.feature);
    });
    return out;
}

RuleSet mine_rules(std::span<const PhaseAnnotatedLog> logs, const MiningConfig& config,
                   MiningDiagnostics* diagnostics) {
    const auto disc = discretize(logs, config.features, config.bins);
    PhaseItemsets itemsets;
    for (std::size_t p = 0; p < phases::kPhaseCount; ++p) {
        itemsets[p] = mine_frequent(disc.transactions[p], config.min_support, config.max_itemset_len);
    }
    RuleSet rules = derive_rules(itemsets, logs, {config.holding_threshold, config.widen_budget}, diagnostics);
    rules.min_support = config.min_support;
    rules.latency_rule = LatencyRule{config.max_latency_ms};
    return rules;
}

std::vector<Violation> check_record(const RuleSet& rules, const LogRecord& record, MissionPhase phase,
                                    std::size_t record_index) {
    std::vector<Violation> out;
    for (const auto& rule : rules.range_rules) {
        if (!rule.covers(phase)) continue;
        const double v = telemetry::field_value(record, rule.feature);
        if (v >= rule.lower && v <= rule.upper) continue;
        Violation viol;
        viol.kind = ViolationKind::Range;
        viol.record_index = record_index;
        viol.rule = rule.description;
        viol.observed = v;
        viol.lower = rule.lower;
        viol.upper = rule.upper;
        const bool above = v > rule.upper;
        viol.description = std::string(phases::phase_name(phase)) + ": " +
                           std::string(telemetry::field_name(rule.feature)) + " = " +
                           value_text(rule.feature, v) + (above ? " is above " : " is below ") +
                           (above ? value_text(rule.feature, rule.upper) : value_text(rule.feature, rule.lower)) +
                           " (rule: " + rule.description + ")";
        out.push_back(std::move(viol));
    }
    return out;
}

std::vector<Violation> check_latency(const LatencyRule& rule, std::span<const telemetry::CommandEvent> commands,
                                     std::int64_t now_ms) {
    std::vector<Violation> out;
    const std::string desc = "Commands are enacted within " + std::to_string(rule.max_latency_ms) + " ms of issue.";
    for (const auto& c : commands) {
        Violation v;
        v.cmd_id = c.cmd_id;
        v.rule = desc;
        v.upper = static_cast<double>(rule.max_latency_ms);
        if (c.enact_ms) {
            const std::int64_t latency = *c.enact_ms - c.issue_ms;
            if (latency <= rule.max_latency_ms) continue;
            v.kind = ViolationKind::Latency;
            v.observed = static_cast<double>(latency);
            v.description = "command " + std::to_string(c.cmd_id) + " took " + std::to_string(latency) +
                            " ms to enact, over the " + std::to_string(rule.max_latency_ms) + " ms limit";
        } else {
            if (now_ms != kNoDeadline && now_ms - c.issue_ms <= rule.max_latency_ms) continue;
            v.kind = ViolationKind::LostCommand;
            v.observed = now_ms == kNoDeadline ? std::numeric_limits<double>::infinity()
                                               : static_cast<double>(now_ms - c.issue_ms);
            v.description = "command " + std::to_string(c.cmd_id) + " issued at " + std::to_string(c.issue_ms) +
                            " ms was never enacted (lost command)";
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::string write_ruleset(const RuleSet& rules) {
    nlohmann::json j;
    j["min_support"] = rules.min_support;
    j["holding_threshold"] = rules.holding_threshold;
    j["widen_budget"] = rules.widen_budget;
    j["provenance"] = rules.provenance;
    j["rules"] = nlohmann::json::array();
    for (const auto& r : rules.range_rules) {
        j["rules"].push_back({
            {"feature", telemetry::field_name(r.feature)},
            {"scope", r.phase ? std::string(phases::phase_name(*r.phase)) : std::string("UNIVERSAL")},
            {"lower", r.lower},
            {"upper", r.upper},
            {"holding_fraction", r.holding_fraction},
            {"support", r.support},
            {"source", r.source == RuleSource::Mined ? "MINED" : "DOMAIN"},
            {"widened", r.widened},
            {"description", r.description},
        });
    }
    if (rules.latency_rule) j["latency_rule"] = {{"max_latency_ms", rules.latency_rule->max_latency_ms}};
    return j.dump(2) + "\n";
}

RuleSet parse_ruleset(std::string_view json_text) {
    try {
        const auto j = nlohmann::json::parse(json_text);
        RuleSet out;
        out.min_support = j.at("min_support").get<double>();
        out.holding_threshold = j.at("holding_threshold").get<double>();
        out.widen_budget = j.value("widen_budget", 0.01);
        if (j.contains("provenance")) out.provenance = j.at("provenance").get<std::vector<std::string>>();
        for (const auto& jr : j.at("rules")) {
            RangeRule r;
            const auto fname = jr.at("feature").get<std::string>();
            const auto field = telemetry::field_from_name(fname);
            if (!field) throw Error(Errc::InvalidDocument, "unknown rule feature '" + fname + "'");
            r.feature = *field;
            const auto scope = jr.at("scope").get<std::string>();
            if (scope != "UNIVERSAL") {
                r.phase = phases::phase_from_name(scope);
                if (!r.phase) throw Error(Errc::InvalidDocument, "unknown rule scope '" + scope + "'");
            }
            r.lower = jr.at("lower").get<double>();
            r.upper = jr.at("upper").get<double>();
            if (!(r.lower <= r.upper)) throw Error(Errc::InvalidDocument, "rule lower bound exceeds upper bound");
            r.holding_fraction = jr.value("holding_fraction", 1.0);
            r.support = jr.value("support", 0.0);
            const auto source = jr.value("source", std::string("MINED"));
            if (source != "MINED" && source != "DOMAIN") {
                throw Error(Errc::InvalidDocument, "unknown rule source '" + source + "'");
            }
            r.source = source == "MINED" ? RuleSource::Mined : RuleSource::Domain;
            r.widened = jr.value("widened", false);
            r.description = jr.contains("description") ? jr.at("description").get<std::string>() : describe_rule(r);
            out.range_rules.push_back(std::move(r));
        }
        if (j.contains("latency_rule") && !j.at("latency_rule").is_null()) {
            LatencyRule lr{j.at("latency_rule").at("max_latency_ms").get<std::int64_t>()};
            if (lr.max_latency_ms <= 0) throw Error(Errc::InvalidDocument, "max_latency_ms must be positive");
            out.latency_rule = lr;
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidDocument, std::string("ruleset: ") + e.what());
    }
}

}  // namespace droneguard::rules
