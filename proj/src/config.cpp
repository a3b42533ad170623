#include "droneguard/config.hpp"

#include <functional>
#include <map>

#include "json.hpp"

#include "droneguard/error.hpp"

namespace droneguard {

namespace {

using nlohmann::json;

struct Key {
    std::function<void(Config&, const json&)> set;
    std::function<json(const Config&)> get;
};

[[noreturn]] void bad(std::string_view key, const std::string& why) {
    throw Error(Errc::InvalidConfig, std::string(key) + ": " + why);
}

double number(std::string_view key, const json& v) {
    if (!v.is_number()) bad(key, "expected a number");
    return v.get<double>();
}

std::size_t count(std::string_view key, const json& v, std::size_t min) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) bad(key, "expected an integer");
    const auto n = v.get<std::int64_t>();
    if (n < static_cast<std::int64_t>(min)) bad(key, "must be >= " + std::to_string(min));
    return static_cast<std::size_t>(n);
}

double fraction(std::string_view key, const json& v, bool allow_zero) {
    const double x = number(key, v);
    if (!(allow_zero ? x >= 0.0 : x > 0.0) || x > 1.0) bad(key, allow_zero ? "must lie in [0, 1]" : "must lie in (0, 1]");
    return x;
}

double positive(std::string_view key, const json& v, bool allow_zero) {
    const double x = number(key, v);
    if (!(allow_zero ? x >= 0.0 : x > 0.0)) bad(key, allow_zero ? "must be >= 0" : "must be > 0");
    return x;
}

double pct(std::string_view key, const json& v) {
    const double x = number(key, v);
    if (!(x >= 0.0 && x <= 100.0)) bad(key, "must lie in [0, 100]");
    return x;
}

std::vector<telemetry::Field> fields(std::string_view key, const json& v) {
    std::vector<std::string> names;
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        std::size_t start = 0;
        while (start <= s.size()) {
            const auto comma = s.find(',', start);
            const auto part = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!part.empty()) names.push_back(part);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    } else if (v.is_array()) {
        for (const auto& e : v) {
            if (!e.is_string()) bad(key, "expected feature names");
            names.push_back(e.get<std::string>());
        }
    } else {
        bad(key, "expected a list of feature names");
    }
    std::vector<telemetry::Field> out;
    for (const auto& n : names) {
        const auto f = telemetry::field_from_name(n);
        if (!f || *f == telemetry::Field::Lat || *f == telemetry::Field::Lon) bad(key, "unknown feature '" + n + "'");
        out.push_back(*f);
    }
    if (out.empty()) bad(key, "feature list is empty");
    return out;
}

json field_names(const std::vector<telemetry::Field>& fs) {
    json a = json::array();
    for (auto f : fs) a.push_back(std::string(telemetry::field_name(f)));
    return a;
}

const std::map<std::string, Key, std::less<>>& registry() {
    static const std::map<std::string, Key, std::less<>> keys = [] {
        std::map<std::string, Key, std::less<>> k;
        auto add = [&k](std::string name, auto set, auto get) { k.emplace(std::move(name), Key{set, get}); };
        add("phase.alt_tol_m", [](Config& c, const json& v) { c.tolerances.alt_tol_m = positive("phase.alt_tol_m", v, true); },
            [](const Config& c) { return json(c.tolerances.alt_tol_m); });
        add("phase.pos_tol_m", [](Config& c, const json& v) { c.tolerances.pos_tol_m = positive("phase.pos_tol_m", v, true); },
            [](const Config& c) { return json(c.tolerances.pos_tol_m); });

        add("rules.min_support", [](Config& c, const json& v) { c.mining.min_support = fraction("rules.min_support", v, false); },
            [](const Config& c) { return json(c.mining.min_support); });
        add("rules.holding_threshold",
            [](Config& c, const json& v) { c.mining.holding_threshold = fraction("rules.holding_threshold", v, false); },
            [](const Config& c) { return json(c.mining.holding_threshold); });
        add("rules.widen_budget", [](Config& c, const json& v) { c.mining.widen_budget = positive("rules.widen_budget", v, true); },
            [](const Config& c) { return json(c.mining.widen_budget); });
        add("rules.bins", [](Config& c, const json& v) { c.mining.bins = static_cast<int>(count("rules.bins", v, 1)); },
            [](const Config& c) { return json(c.mining.bins); });
        add("rules.max_itemset_len",
            [](Config& c, const json& v) { c.mining.max_itemset_len = count("rules.max_itemset_len", v, 0); },
            [](const Config& c) { return json(c.mining.max_itemset_len); });
        add("rules.max_latency_ms",
            [](Config& c, const json& v) {
                c.mining.max_latency_ms = static_cast<std::int64_t>(count("rules.max_latency_ms", v, 1));
            },
            [](const Config& c) { return json(c.mining.max_latency_ms); });
        add("rules.numeric_features",
            [](Config& c, const json& v) { c.mining.features.numeric = fields("rules.numeric_features", v); },
            [](const Config& c) { return field_names(c.mining.features.numeric); });
        add("rules.categorical_features",
            [](Config& c, const json& v) { c.mining.features.categorical = fields("rules.categorical_features", v); },
            [](const Config& c) { return field_names(c.mining.features.categorical); });

        add("detectors.features", [](Config& c, const json& v) { c.detectors.features = fields("detectors.features", v); },
            [](const Config& c) { return field_names(c.detectors.features); });
        add("detectors.kmeans_k", [](Config& c, const json& v) { c.detectors.kmeans_k = count("detectors.kmeans_k", v, 1); },
            [](const Config& c) { return json(c.detectors.kmeans_k); });
        add("detectors.kmeans_percentile",
            [](Config& c, const json& v) { c.detectors.kmeans_percentile = pct("detectors.kmeans_percentile", v); },
            [](const Config& c) { return json(c.detectors.kmeans_percentile); });
        add("detectors.dbscan_eps",
            [](Config& c, const json& v) { c.detectors.dbscan_eps = positive("detectors.dbscan_eps", v, true); },
            [](const Config& c) { return json(c.detectors.dbscan_eps); });
        add("detectors.dbscan_eps_percentile",
            [](Config& c, const json& v) { c.detectors.dbscan_eps_percentile = pct("detectors.dbscan_eps_percentile", v); },
            [](const Config& c) { return json(c.detectors.dbscan_eps_percentile); });
        add("detectors.dbscan_min_pts",
            [](Config& c, const json& v) { c.detectors.dbscan_min_pts = count("detectors.dbscan_min_pts", v, 1); },
            [](const Config& c) { return json(c.detectors.dbscan_min_pts); });
        add("detectors.optics_min_pts",
            [](Config& c, const json& v) { c.detectors.optics_min_pts = count("detectors.optics_min_pts", v, 1); },
            [](const Config& c) { return json(c.detectors.optics_min_pts); });
        add("detectors.optics_percentile",
            [](Config& c, const json& v) { c.detectors.optics_percentile = pct("detectors.optics_percentile", v); },
            [](const Config& c) { return json(c.detectors.optics_percentile); });
        add("detectors.lof_k", [](Config& c, const json& v) { c.detectors.lof_k = count("detectors.lof_k", v, 1); },
            [](const Config& c) { return json(c.detectors.lof_k); });
        add("detectors.lof_threshold",
            [](Config& c, const json& v) { c.detectors.lof_threshold = positive("detectors.lof_threshold", v, false); },
            [](const Config& c) { return json(c.detectors.lof_threshold); });
        add("detectors.nu", [](Config& c, const json& v) { c.detectors.nu = fraction("detectors.nu", v, false); },
            [](const Config& c) { return json(c.detectors.nu); });
        add("detectors.gamma", [](Config& c, const json& v) { c.detectors.gamma = positive("detectors.gamma", v, true); },
            [](const Config& c) { return json(c.detectors.gamma); });
        add("detectors.max_train",
            [](Config& c, const json& v) { c.detectors.max_train = count("detectors.max_train", v, 2); },
            [](const Config& c) { return json(c.detectors.max_train); });

        add("window.len", [](Config& c, const json& v) { c.window.window_len = count("window.len", v, 1); },
            [](const Config& c) { return json(c.window.window_len); });
        add("window.alert_fraction",
            [](Config& c, const json& v) { c.window.alert_fraction = fraction("window.alert_fraction", v, true); },
            [](const Config& c) { return json(c.window.alert_fraction); });
        add("window.sustained_run",
            [](Config& c, const json& v) { c.window.sustained_run = count("window.sustained_run", v, 1); },
            [](const Config& c) { return json(c.window.sustained_run); });

        add("seed",
            [](Config& c, const json& v) {
                if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                    bad("seed", "expected a non-negative integer");
                }
                c.seed = v.get<std::uint64_t>();
            },
            [](const Config& c) { return json(c.seed); });
        return k;
    }();
    return keys;
}

void apply_json(Config& config, std::string_view key, const json& value) {
    const auto it = registry().find(key);
    if (it == registry().end()) throw Error(Errc::InvalidConfig, "unknown key '" + std::string(key) + "'");
    it->second.set(config, value);
}

void apply_tree(Config& config, const std::string& prefix, const json& node) {
    for (const auto& [name, value] : node.items()) {
        const std::string key = prefix.empty() ? name : prefix + "." + name;
        if (value.is_object()) {
            apply_tree(config, key, value);
        } else {
            apply_json(config, key, value);
        }
    }
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : registry()) out.push_back(k);
    return out;
}

void apply_setting(Config& config, std::string_view key, std::string_view value) {
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = std::string(value);
    apply_json(config, key, v);
}

void apply_override(Config& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error(Errc::InvalidConfig, "override must look like key=value, got '" + std::string(assignment) + "'");
    }
    apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

Config parse_config(std::string_view json_text) {
    const json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw Error(Errc::InvalidConfig, "config must be a JSON object");
    Config c;
    apply_tree(c, "", doc);
    return c;
}

std::string write_config(const Config& config) {
    json j = json::object();
    for (const auto& [k, key] : registry()) j[k] = key.get(config);
    return j.dump(2) + "\n";
}

detectors::DetectorConfig detector_config(const Config& config) {
    auto d = config.detectors;
    d.seed = config.seed;
    return d;
}

}  // namespace droneguard
