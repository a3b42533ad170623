#pragma once

// Brute-force reference implementations. They share no code with the
// library: quadratic scans, full sorts, exhaustive enumeration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

using Point = std::vector<double>;
using Data = std::vector<Point>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double dist(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

struct Frequent {
    std::vector<int> items;
    std::size_t count = 0;
};

/// Every subset of the item universe, counted against every transaction.
inline std::vector<Frequent> enumerate_itemsets(const std::vector<std::vector<int>>& tx, double min_support,
                                                std::size_t max_len) {
    std::vector<int> universe;
    for (const auto& t : tx) universe.insert(universe.end(), t.begin(), t.end());
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
    std::vector<Frequent> out;
    if (tx.empty()) return out;
    const std::size_t u = universe.size();
    for (unsigned long mask = 1; mask < (1UL << u); ++mask) {
        std::vector<int> items;
        for (std::size_t b = 0; b < u; ++b) {
            if (mask & (1UL << b)) items.push_back(universe[b]);
        }
        if (max_len != 0 && items.size() > max_len) continue;
        std::size_t count = 0;
        for (const auto& t : tx) {
            bool all = true;
            for (int it : items) all = all && std::find(t.begin(), t.end(), it) != t.end();
            if (all) ++count;
        }
        if (static_cast<double>(count) / static_cast<double>(tx.size()) >= min_support) out.push_back({items, count});
    }
    std::sort(out.begin(), out.end(), [](const Frequent& a, const Frequent& b) {
        return a.items.size() != b.items.size() ? a.items.size() < b.items.size() : a.items < b.items;
    });
    return out;
}

/// DBSCAN vote: a training point is core when at least min_pts points
/// (itself included) lie within eps; x is normal when it is within eps of a core.
inline bool dbscan_anomaly(const Data& train, double eps, std::size_t min_pts, const Point& x) {
    for (const auto& p : train) {
        std::size_t n = 0;
        for (const auto& q : train) n += dist(p, q) <= eps ? 1 : 0;
        if (n >= min_pts && dist(p, x) <= eps) return false;
    }
    return true;
}

/// OPTICS reachabilities with eps = infinity. The next point is found by a
/// linear scan for the smallest (reachability, index) among unprocessed
/// points; when none is reachable the lowest unprocessed index starts anew.
inline std::vector<double> optics_reachability(const Data& pts, std::size_t min_pts) {
    const std::size_t n = pts.size();
    std::vector<double> core(n, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < n; ++j) row.push_back(dist(pts[i], pts[j]));
        std::sort(row.begin(), row.end());
        if (min_pts <= n) core[i] = row[min_pts - 1];
    }
    std::vector<double> reach(n, kInf);
    std::vector<bool> done(n, false);
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t p = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (done[i] || !std::isfinite(reach[i])) continue;
            if (p == n || reach[i] < reach[p]) p = i;
        }
        if (p == n) {
            for (std::size_t i = 0; i < n && p == n; ++i) {
                if (!done[i]) p = i;
            }
        }
        done[p] = true;
        if (!std::isfinite(core[p])) continue;
        for (std::size_t o = 0; o < n; ++o) {
            if (!done[o]) reach[o] = std::min(reach[o], std::max(core[p], dist(pts[p], pts[o])));
        }
    }
    return reach;
}

inline double optics_threshold(const Data& train, std::size_t min_pts, double q) {
    std::vector<double> finite;
    for (double r : optics_reachability(train, min_pts)) {
        if (std::isfinite(r)) finite.push_back(r);
    }
    return percentile(finite, q);
}

inline bool optics_anomaly(const Data& train, std::size_t min_pts, double threshold, const Point& x) {
    Data aug = train;
    aug.push_back(x);
    const double r = optics_reachability(aug, min_pts).back();
    return !std::isfinite(r) || r > threshold;
}

/// The k nearest training indices by (distance, index), excluding `self`.
inline std::vector<std::size_t> knn(const Data& train, const Point& x, std::size_t k, std::size_t self) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < train.size(); ++j) {
        if (j != self) all.emplace_back(dist(train[j], x), j);
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
    return out;
}

/// Local outlier factor of x against the training set; lrd = 1 / (mean
/// reach-dist + 1e-10) so duplicate points stay finite.
inline double lof(const Data& train, std::size_t k, const Point& x) {
    const std::size_t n = train.size();
    std::vector<std::vector<std::size_t>> nbr(n);
    std::vector<double> kdist(n);
    for (std::size_t i = 0; i < n; ++i) {
        nbr[i] = knn(train, train[i], k, i);
        kdist[i] = dist(train[i], train[nbr[i].back()]);
    }
    auto lrd = [&](const Point& p, const std::vector<std::size_t>& nb) {
        double s = 0.0;
        for (auto o : nb) s += std::max(kdist[o], dist(p, train[o]));
        return 1.0 / (s / static_cast<double>(nb.size()) + 1e-10);
    };
    const auto nx = knn(train, x, k, n);
    double s = 0.0;
    for (auto o : nx) s += lrd(train[o], nbr[o]);
    return s / static_cast<double>(k) / lrd(x, nx);
}

}  // namespace oracle
