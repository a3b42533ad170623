#include "droneguard/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

#include "droneguard/error.hpp"

namespace droneguard::detectors {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_dims(const Dataset& data, std::string_view what) {
    if (data.empty()) return;
    const auto d = data.front().size();
    for (const auto& p : data) {
        if (p.size() != d) throw Error(Errc::DimensionMismatch, std::string(what) + ": ragged training data");
        for (double v : p) {
            if (!std::isfinite(v)) throw Error(Errc::InvalidParams, std::string(what) + ": non-finite feature value");
        }
    }
}

void require_dim(std::size_t expected, std::span<const double> x) {
    if (x.size() != expected) {
        throw Error(Errc::DimensionMismatch,
                    "expected " + std::to_string(expected) + " features, got " + std::to_string(x.size()));
    }
}

double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::exp(-gamma * s);
}

}  // namespace

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// --- k-means ---------------------------------------------------------------

KMeansModel fit_kmeans(const Dataset& train, std::size_t k, std::uint64_t seed, double threshold_percentile,
                       std::size_t max_iter) {
    if (k == 0 || train.size() < k) {
        throw Error(Errc::TooFewPoints, "k-means needs 1 <= k <= |train| (k=" + std::to_string(k) +
                                            ", |train|=" + std::to_string(train.size()) + ")");
    }
    require_dims(train, "k-means");
    const std::size_t n = train.size();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    KMeansModel m;
    std::vector<bool> chosen(n, false);
    std::size_t first = static_cast<std::size_t>(unit(rng) * static_cast<double>(n));
    first = std::min(first, n - 1);
    m.centroids.push_back(train[first]);
    chosen[first] = true;
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = distance(train[i], m.centroids.front());
        d2[i] = d * d;
    }
    while (m.centroids.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (d2[i] > 0.0 && acc >= target) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {
                for (std::size_t i = n; i-- > 0;) {
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            // Every remaining point coincides with a centroid: take the next unused one.
            const auto offset = static_cast<std::size_t>(unit(rng) * static_cast<double>(n));
            for (std::size_t s = 0; s < n; ++s) {
                const auto i = (offset + s) % n;
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
            }
        }
        chosen[pick] = true;
        m.centroids.push_back(train[pick]);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = distance(train[i], m.centroids.back());
            d2[i] = std::min(d2[i], d * d);
        }
    }

    const std::size_t dim = train.front().size();
    std::vector<std::size_t> assign(n, k);
    for (std::size_t it = 0; it < max_iter; ++it) {
        bool changed = false;
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = kInf;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = distance(train[i], m.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) changed = true;
            assign[i] = best;
            sse += best_d * best_d;
        }
        m.sse_history.push_back(sse);
        m.iterations = it + 1;
        if (!changed) break;
        Dataset sums(k, Point(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < dim; ++j) sums[assign[i]][j] += train[i][j];
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // an empty cluster keeps its centroid
            for (std::size_t j = 0; j < dim; ++j) m.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
    }

    std::vector<double> dists;
    dists.reserve(n);
    for (const auto& p : train) dists.push_back(nearest_centroid_distance(m, p));
    m.distance_threshold = percentile(std::move(dists), threshold_percentile);
    return m;
}

double nearest_centroid_distance(const KMeansModel& model, std::span<const double> x) {
    double best = kInf;
    for (const auto& c : model.centroids) best = std::min(best, distance(c, x));
    return best;
}

Vote predict_kmeans(const KMeansModel& model, std::span<const double> x) {
    require_dim(model.centroids.front().size(), x);
    return nearest_centroid_distance(model, x) > model.distance_threshold ? Vote::Anomaly : Vote::Normal;
}

// --- DBSCAN ----------------------------------------------------------------

double knn_distance_percentile(const Dataset& train, std::size_t k, double q) {
    if (k == 0 || train.size() <= k) throw Error(Errc::TooFewPoints, "need more than k points for k-NN distances");
    std::vector<double> kd;
    kd.reserve(train.size());
    std::vector<double> row;
    for (std::size_t i = 0; i < train.size(); ++i) {
        row.clear();
        for (std::size_t j = 0; j < train.size(); ++j) {
            if (j != i) row.push_back(distance(train[i], train[j]));
        }
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
        kd.push_back(row[k - 1]);
    }
    return percentile(std::move(kd), q);
}

DbscanModel fit_dbscan(const Dataset& train, double eps, std::size_t min_pts) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(Errc::InvalidParams, "DBSCAN eps must be positive");
    if (min_pts < 1) throw Error(Errc::InvalidParams, "DBSCAN min_pts must be >= 1");
    if (train.empty()) throw Error(Errc::TooFewPoints, "DBSCAN needs training data");
    require_dims(train, "DBSCAN");
    DbscanModel m{eps, min_pts, {}};
    for (const auto& p : train) {
        std::size_t neighbors = 0;
        for (const auto& q : train) {
            if (distance(p, q) <= eps) ++neighbors;
        }
        if (neighbors >= min_pts) m.core_points.push_back(p);
    }
    return m;
}

Vote predict_dbscan(const DbscanModel& model, std::span<const double> x) {
    if (!model.core_points.empty()) require_dim(model.core_points.front().size(), x);
    for (const auto& c : model.core_points) {
        if (distance(c, x) <= model.eps) return Vote::Normal;
    }
    return Vote::Anomaly;
}

// --- OPTICS ----------------------------------------------------------------

OpticsOrdering optics_order(const Dataset& points, std::size_t min_pts) {
    const std::size_t n = points.size();
    OpticsOrdering out;
    out.reachability.assign(n, kInf);
    out.core_distance.assign(n, kInf);
    out.order.reserve(n);
    if (n == 0) return out;

    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row[j] = distance(points[i], points[j]);
        if (min_pts <= n) {
            std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(min_pts - 1), row.end());
            out.core_distance[i] = row[min_pts - 1];
        }
    }

    std::vector<bool> processed(n, false);
    std::set<std::pair<double, std::size_t>> seeds;
    auto expand = [&](std::size_t p) {
        processed[p] = true;
        out.order.push_back(p);
        const double core = out.core_distance[p];
        if (!std::isfinite(core)) return;
        for (std::size_t o = 0; o < n; ++o) {
            if (processed[o]) continue;
            const double r = std::max(core, distance(points[p], points[o]));
            if (r < out.reachability[o]) {
                if (std::isfinite(out.reachability[o])) seeds.erase({out.reachability[o], o});
                out.reachability[o] = r;
                seeds.insert({r, o});
            }
        }
    };
    for (std::size_t start = 0; start < n; ++start) {
        if (processed[start]) continue;
        expand(start);
        while (!seeds.empty()) {
            const auto [r, q] = *seeds.begin();
            seeds.erase(seeds.begin());
            expand(q);
        }
    }
    return out;
}

OpticsModel fit_optics(const Dataset& train, std::size_t min_pts, double threshold_percentile) {
    if (min_pts < 1 || min_pts >= train.size()) {
        throw Error(Errc::InvalidParams, "OPTICS needs 1 <= min_pts < |train|");
    }
    require_dims(train, "OPTICS");
    OpticsModel m{train, min_pts, 0.0, {}, {}};
    prepare_optics(m);
    const auto ord = optics_order(train, min_pts);
    std::vector<double> finite;
    for (double r : ord.reachability) {
        if (std::isfinite(r)) finite.push_back(r);
    }
    m.reach_threshold = percentile(std::move(finite), threshold_percentile);
    return m;
}

void prepare_optics(OpticsModel& model) {
    const std::size_t n = model.train.size();
    const std::size_t m = model.min_pts;
    model.pairwise.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            model.pairwise[i * n + j] = model.pairwise[j * n + i] = distance(model.train[i], model.train[j]);
        }
    }
    model.nearest.assign(n * m, 0.0);
    std::vector<double> row;
    for (std::size_t i = 0; i < n && m <= n; ++i) {
        row.assign(model.pairwise.begin() + static_cast<std::ptrdiff_t>(i * n),
                   model.pairwise.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(m), row.end());
        std::copy_n(row.begin(), m, model.nearest.begin() + static_cast<std::ptrdiff_t>(i * m));
    }
}

double optics_reachability(const OpticsModel& model, std::span<const double> x) {
    require_dim(model.train.front().size(), x);
    const std::size_t n = model.train.size();
    const std::size_t m = model.min_pts;
    if (model.pairwise.size() != n * n || model.nearest.size() != n * m || m > n) {
        Dataset augmented = model.train;
        augmented.emplace_back(x.begin(), x.end());
        return optics_order(augmented, m).reachability.back();
    }

    // Same ordering as optics_order on train + {x}, with x at index n, reusing
    // the cached training geometry.
    const std::size_t total = n + 1;
    std::vector<double> dx(n);
    for (std::size_t i = 0; i < n; ++i) dx[i] = distance(model.train[i], x);
    std::vector<double> core(total);
    for (std::size_t i = 0; i < n; ++i) {
        const double* s = &model.nearest[i * m];
        // m-th smallest of the old distances plus d(i, x)
        core[i] = dx[i] < s[m - 1] ? (m >= 2 ? std::max(dx[i], s[m - 2]) : 0.0) : s[m - 1];
    }
    {
        std::vector<double> row(dx);
        row.push_back(0.0);
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(m - 1), row.end());
        core[n] = row[m - 1];
    }
    auto dist = [&](std::size_t a, std::size_t b) {
        if (a == n) return dx[b];
        if (b == n) return dx[a];
        return model.pairwise[a * n + b];
    };

    std::vector<double> reach(total, kInf);
    std::vector<bool> processed(total, false);
    std::set<std::pair<double, std::size_t>> seeds;
    auto expand = [&](std::size_t p) {
        processed[p] = true;
        for (std::size_t o = 0; o < total; ++o) {
            if (processed[o]) continue;
            const double r = std::max(core[p], dist(p, o));
            if (r < reach[o]) {
                if (std::isfinite(reach[o])) seeds.erase({reach[o], o});
                reach[o] = r;
                seeds.insert({r, o});
            }
        }
    };
    for (std::size_t start = 0; start < total && !processed[n]; ++start) {
        if (processed[start]) continue;
        expand(start);
        while (!seeds.empty() && !processed[n]) {
            const auto q = seeds.begin()->second;
            seeds.erase(seeds.begin());
            expand(q);
        }
    }
    return reach[n];
}

Vote predict_optics(const OpticsModel& model, std::span<const double> x) {
    const double r = optics_reachability(model, x);
    return !std::isfinite(r) || r > model.reach_threshold ? Vote::Anomaly : Vote::Normal;
}

// --- LOF -------------------------------------------------------------------

namespace {

/// Indices of the k nearest training points to x by (distance, index),
/// skipping `self` when it is a training index.
std::vector<std::pair<double, std::size_t>> k_nearest(const Dataset& train, std::span<const double> x, std::size_t k,
                                                      std::size_t self) {
    std::vector<std::pair<double, std::size_t>> all;
    all.reserve(train.size());
    for (std::size_t j = 0; j < train.size(); ++j) {
        if (j != self) all.emplace_back(distance(train[j], x), j);
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    all.resize(k);
    return all;
}

double lrd_from(const std::vector<std::pair<double, std::size_t>>& nn, const std::vector<double>& k_distance) {
    double sum = 0.0;
    for (const auto& [d, o] : nn) sum += std::max(k_distance[o], d);
    return 1.0 / (sum / static_cast<double>(nn.size()) + 1e-10);
}

}  // namespace

LofModel fit_lof(const Dataset& train, std::size_t k, double threshold) {
    if (k < 1 || k >= train.size()) throw Error(Errc::InvalidParams, "LOF needs 1 <= k < |train|");
    require_dims(train, "LOF");
    LofModel m{train, k, threshold, {}, {}};
    const std::size_t n = train.size();
    std::vector<std::vector<std::pair<double, std::size_t>>> nn(n);
    m.k_distance.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        nn[i] = k_nearest(train, train[i], k, i);
        m.k_distance[i] = nn[i].back().first;
    }
    m.lrd.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.lrd[i] = lrd_from(nn[i], m.k_distance);
    return m;
}

double lof_score(const LofModel& model, std::span<const double> x) {
    require_dim(model.train.front().size(), x);
    const auto nn = k_nearest(model.train, x, model.k, model.train.size());
    const double own = lrd_from(nn, model.k_distance);
    double sum = 0.0;
    for (const auto& [d, o] : nn) sum += model.lrd[o];
    return sum / static_cast<double>(nn.size()) / own;
}

Vote predict_lof(const LofModel& model, std::span<const double> x) {
    return lof_score(model, x) > model.threshold ? Vote::Anomaly : Vote::Normal;
}

// --- one-class SVM ---------------------------------------------------------

double default_gamma(const Dataset& train) {
    if (train.empty() || train.front().empty()) return 1.0;
    const std::size_t d = train.front().size();
    const auto n = static_cast<double>(train.size());
    double var_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& p : train) mean += p[j];
        mean /= n;
        double var = 0.0;
        for (const auto& p : train) var += (p[j] - mean) * (p[j] - mean);
        var_sum += var / n;
    }
    const double mean_var = var_sum / static_cast<double>(d);
    return mean_var > 0.0 ? 1.0 / (static_cast<double>(d) * mean_var) : 1.0;
}

OcsvmModel fit_ocsvm(const Dataset& train, double nu, double gamma, std::uint64_t seed, double tol,
                     std::size_t max_iter) {
    if (!(nu > 0.0 && nu <= 1.0)) throw Error(Errc::InvalidParams, "nu must lie in (0, 1]");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error(Errc::InvalidParams, "gamma must be positive");
    if (train.empty()) throw Error(Errc::TooFewPoints, "one-class SVM needs training data");
    require_dims(train, "one-class SVM");

    const std::size_t n = train.size();
    const double c = 1.0 / (nu * static_cast<double>(n));
    std::vector<double> kernel(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        kernel[i * n + i] = 1.0;
        for (std::size_t j = 0; j < i; ++j) kernel[i * n + j] = kernel[j * n + i] = rbf(train[i], train[j], gamma);
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> alpha(n, 0.0);
    const auto full = std::min(n, static_cast<std::size_t>(std::floor(nu * static_cast<double>(n) + 1e-9)));
    for (std::size_t i = 0; i < full; ++i) alpha[perm[i]] = c;
    const double rest = 1.0 - static_cast<double>(full) * c;
    if (full < n && rest > 0.0) alpha[perm[full]] = rest;

    std::vector<double> grad(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) grad[j] += alpha[i] * kernel[i * n + j];
    }

    OcsvmModel m;
    m.gamma = gamma;
    m.nu = nu;
    std::size_t it = 0;
    double gap = kInf;
    for (; it < max_iter; ++it) {
        std::size_t up = n;
        std::size_t low = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (alpha[t] < c && (up == n || grad[t] < grad[up])) up = t;
            if (alpha[t] > 0.0 && (low == n || grad[t] > grad[low])) low = t;
        }
        if (up == n || low == n) {
            gap = 0.0;
            break;
        }
        gap = grad[low] - grad[up];
        if (gap <= tol) break;
        const double quad = std::max(kernel[up * n + up] + kernel[low * n + low] - 2.0 * kernel[up * n + low], 1e-12);
        double delta = gap / quad;
        const double room_up = c - alpha[up];
        const double room_low = alpha[low];
        if (delta >= room_up) {
            delta = room_up;
        }
        if (delta >= room_low) {
            delta = room_low;
        }
        alpha[up] = delta == room_up ? c : alpha[up] + delta;
        alpha[low] = delta == room_low ? 0.0 : alpha[low] - delta;
        for (std::size_t t = 0; t < n; ++t) grad[t] += delta * (kernel[up * n + t] - kernel[low * n + t]);
    }
    if (gap > tol) throw Error(Errc::NoConvergence, "SMO did not reach the KKT tolerance");
    m.iterations = it;
    m.kkt_residual = std::max(gap, 0.0);

    // Scores recomputed the way ocsvm_decision sums them, so a training point
    // gets bit-identically the decision value used here. rho is the smallest
    // score among points below the box bound: every such point then scores
    // >= 0 and only bounded ones (at most nu*n) can fall outside.
    std::vector<double> score(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            if (alpha[t] > 0.0) s += alpha[t] * rbf(train[t], train[j], gamma);
        }
        score[j] = s;
    }
    double below = kInf;
    double bounded = -kInf;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] < c) below = std::min(below, score[t]);
        else bounded = std::max(bounded, score[t]);
    }
    m.rho = std::isfinite(below) ? below : bounded;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            m.support_vectors.push_back(train[t]);
            m.alpha.push_back(alpha[t]);
        }
    }
    return m;
}

double ocsvm_decision(const OcsvmModel& model, std::span<const double> x) {
    require_dim(model.support_vectors.front().size(), x);
    double s = 0.0;
    for (std::size_t i = 0; i < model.alpha.size(); ++i) s += model.alpha[i] * rbf(model.support_vectors[i], x, model.gamma);
    return s - model.rho;
}

Vote predict_ocsvm(const OcsvmModel& model, std::span<const double> x) {
    return ocsvm_decision(model, x) < 0.0 ? Vote::Anomaly : Vote::Normal;
}

// --- bundle ----------------------------------------------------------------

std::string_view detector_tag(Detector d) noexcept {
    switch (d) {
        case Detector::KMeans: return "KM";
        case Detector::Dbscan: return "DB";
        case Detector::Optics: return "OP";
        case Detector::Lof: return "LOF";
        case Detector::Svm: return "SVM";
    }
    return "?";
}

Point feature_vector(const telemetry::LogRecord& record, std::span<const telemetry::Field> features) {
    Point p;
    p.reserve(features.size());
    for (auto f : features) p.push_back(telemetry::field_value(record, f));
    return p;
}

Dataset training_sample(const Dataset& corpus, std::size_t max_train, std::uint64_t seed,
                        std::span<const std::size_t> strata) {
    if (corpus.size() <= max_train) return corpus;
    if (!strata.empty() && strata.size() != corpus.size()) {
        throw Error(Errc::DimensionMismatch, "strata labels do not match the corpus");
    }
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::vector<std::size_t> idx;
    if (strata.empty()) {
        idx.resize(corpus.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(max_train);
    } else {
        std::map<std::size_t, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < corpus.size(); ++i) groups[strata[i]].push_back(i);
        std::vector<std::vector<std::size_t>*> by_size;
        for (auto& [label, members] : groups) by_size.push_back(&members);
        std::stable_sort(by_size.begin(), by_size.end(), [](auto* a, auto* b) { return a->size() < b->size(); });
        // Equal shares; what a small stratum cannot use goes to the rest.
        std::size_t remaining = max_train;
        for (std::size_t g = 0; g < by_size.size(); ++g) {
            auto& members = *by_size[g];
            const std::size_t take = std::min(members.size(), remaining / (by_size.size() - g));
            std::shuffle(members.begin(), members.end(), rng);
            idx.insert(idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
            remaining -= take;
        }
    }
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(corpus[i]);
    return out;
}

ModelBundle fit_bundle(const Dataset& corpus, const DetectorConfig& config, std::span<const std::size_t> strata) {
    if (config.features.empty()) throw Error(Errc::InvalidParams, "detector feature list is empty");
    if (config.max_train < 2) throw Error(Errc::InvalidParams, "detectors.max_train must be >= 2");
    require_dims(corpus, "detectors");
    if (!corpus.empty() && corpus.front().size() != config.features.size()) {
        throw Error(Errc::DimensionMismatch, "corpus dimension differs from the feature list");
    }
    ModelBundle b;
    b.config = config;
    b.corpus_size = corpus.size();
    const Dataset train = training_sample(corpus, config.max_train, config.seed, strata);
    if (train.size() <= std::max({config.kmeans_k, config.optics_min_pts, config.lof_k, std::size_t{4}})) {
        throw Error(Errc::TooFewPoints, "training corpus has only " + std::to_string(train.size()) + " points");
    }
    if (b.config.dbscan_eps <= 0.0) {
        b.config.dbscan_eps = knn_distance_percentile(train, 4, config.dbscan_eps_percentile);
    }
    if (b.config.gamma <= 0.0) b.config.gamma = default_gamma(train);

    b.kmeans = fit_kmeans(train, config.kmeans_k, config.seed, config.kmeans_percentile);
    b.dbscan = fit_dbscan(train, b.config.dbscan_eps, config.dbscan_min_pts);
    b.optics = fit_optics(train, config.optics_min_pts, config.optics_percentile);
    b.lof = fit_lof(train, config.lof_k, config.lof_threshold);
    b.svm = fit_ocsvm(train, config.nu, b.config.gamma, config.seed);
    return b;
}

std::array<Vote, 5> predict_all(const ModelBundle& bundle, std::span<const double> x, bool include_optics) {
    require_dim(bundle.config.features.size(), x);
    return {predict_kmeans(bundle.kmeans, x), predict_dbscan(bundle.dbscan, x),
            include_optics ? predict_optics(bundle.optics, x) : Vote::Normal, predict_lof(bundle.lof, x),
            predict_ocsvm(bundle.svm, x)};
}

namespace {

using nlohmann::json;

json points_json(const Dataset& d) { return d; }

Dataset points_from(const json& j) { return j.get<Dataset>(); }

}  // namespace

std::string write_bundle(const ModelBundle& b) {
    json j;
    j["format"] = "droneguard-models";
    j["version"] = b.version;
    std::vector<std::string> names;
    for (auto f : b.config.features) names.emplace_back(telemetry::field_name(f));
    j["features"] = names;
    j["corpus_size"] = b.corpus_size;
    j["provenance"] = b.provenance;
    const auto& c = b.config;
    j["params"] = {{"kmeans_k", c.kmeans_k},
                   {"kmeans_percentile", c.kmeans_percentile},
                   {"dbscan_eps", c.dbscan_eps},
                   {"dbscan_eps_percentile", c.dbscan_eps_percentile},
                   {"dbscan_min_pts", c.dbscan_min_pts},
                   {"optics_min_pts", c.optics_min_pts},
                   {"optics_percentile", c.optics_percentile},
                   {"lof_k", c.lof_k},
                   {"lof_threshold", c.lof_threshold},
                   {"nu", c.nu},
                   {"gamma", c.gamma},
                   {"max_train", c.max_train},
                   {"seed", c.seed}};
    j["kmeans"] = {{"centroids", points_json(b.kmeans.centroids)},
                   {"distance_threshold", b.kmeans.distance_threshold},
                   {"iterations", b.kmeans.iterations}};
    j["dbscan"] = {{"eps", b.dbscan.eps}, {"min_pts", b.dbscan.min_pts}, {"core_points", points_json(b.dbscan.core_points)}};
    j["optics"] = {{"min_pts", b.optics.min_pts},
                   {"reach_threshold", b.optics.reach_threshold},
                   {"train", points_json(b.optics.train)}};
    j["lof"] = {{"k", b.lof.k},
                {"threshold", b.lof.threshold},
                {"train", points_json(b.lof.train)},
                {"k_distance", b.lof.k_distance},
                {"lrd", b.lof.lrd}};
    j["svm"] = {{"support_vectors", points_json(b.svm.support_vectors)},
                {"alpha", b.svm.alpha},
                {"rho", b.svm.rho},
                {"gamma", b.svm.gamma},
                {"nu", b.svm.nu},
                {"kkt_residual", b.svm.kkt_residual},
                {"iterations", b.svm.iterations}};
    return j.dump() + "\n";
}

ModelBundle parse_bundle(std::string_view json_text) {
    try {
        const auto j = json::parse(json_text);
        if (j.value("format", std::string()) != "droneguard-models") {
            throw Error(Errc::InvalidDocument, "not a model bundle");
        }
        ModelBundle b;
        b.version = j.at("version").get<int>();
        if (b.version != kBundleVersion) {
            throw Error(Errc::InvalidDocument, "unsupported bundle version " + std::to_string(b.version));
        }
        auto& c = b.config;
        c.features.clear();
        for (const auto& name : j.at("features").get<std::vector<std::string>>()) {
            const auto f = telemetry::field_from_name(name);
            if (!f) throw Error(Errc::InvalidDocument, "unknown feature '" + name + "' in bundle");
            c.features.push_back(*f);
        }
        b.corpus_size = j.at("corpus_size").get<std::size_t>();
        b.provenance = j.value("provenance", std::vector<std::string>{});
        const auto& p = j.at("params");
        c.kmeans_k = p.at("kmeans_k").get<std::size_t>();
        c.kmeans_percentile = p.at("kmeans_percentile").get<double>();
        c.dbscan_eps = p.at("dbscan_eps").get<double>();
        c.dbscan_eps_percentile = p.at("dbscan_eps_percentile").get<double>();
        c.dbscan_min_pts = p.at("dbscan_min_pts").get<std::size_t>();
        c.optics_min_pts = p.at("optics_min_pts").get<std::size_t>();
        c.optics_percentile = p.at("optics_percentile").get<double>();
        c.lof_k = p.at("lof_k").get<std::size_t>();
        c.lof_threshold = p.at("lof_threshold").get<double>();
        c.nu = p.at("nu").get<double>();
        c.gamma = p.at("gamma").get<double>();
        c.max_train = p.at("max_train").get<std::size_t>();
        c.seed = p.at("seed").get<std::uint64_t>();

        const auto& km = j.at("kmeans");
        b.kmeans.centroids = points_from(km.at("centroids"));
        b.kmeans.distance_threshold = km.at("distance_threshold").get<double>();
        b.kmeans.iterations = km.at("iterations").get<std::size_t>();
        const auto& db = j.at("dbscan");
        b.dbscan.eps = db.at("eps").get<double>();
        b.dbscan.min_pts = db.at("min_pts").get<std::size_t>();
        b.dbscan.core_points = points_from(db.at("core_points"));
        const auto& op = j.at("optics");
        b.optics.min_pts = op.at("min_pts").get<std::size_t>();
        b.optics.reach_threshold = op.at("reach_threshold").get<double>();
        b.optics.train = points_from(op.at("train"));
        if (b.optics.min_pts < 1 || b.optics.min_pts >= b.optics.train.size()) {
            throw Error(Errc::InvalidDocument, "optics.min_pts must be below the training size");
        }
        const auto& lof = j.at("lof");
        b.lof.k = lof.at("k").get<std::size_t>();
        b.lof.threshold = lof.at("threshold").get<double>();
        b.lof.train = points_from(lof.at("train"));
        b.lof.k_distance = lof.at("k_distance").get<std::vector<double>>();
        b.lof.lrd = lof.at("lrd").get<std::vector<double>>();
        const auto& svm = j.at("svm");
        b.svm.support_vectors = points_from(svm.at("support_vectors"));
        b.svm.alpha = svm.at("alpha").get<std::vector<double>>();
        b.svm.rho = svm.at("rho").get<double>();
        b.svm.gamma = svm.at("gamma").get<double>();
        b.svm.nu = svm.at("nu").get<double>();
        b.svm.kkt_residual = svm.at("kkt_residual").get<double>();
        b.svm.iterations = svm.at("iterations").get<std::size_t>();

        const std::size_t d = c.features.size();
        auto check = [d](const Dataset& ds, std::string_view what) {
            if (ds.empty()) throw Error(Errc::InvalidDocument, std::string(what) + " is empty");
            for (const auto& pt : ds) {
                if (pt.size() != d) throw Error(Errc::InvalidDocument, std::string(what) + " has the wrong dimension");
            }
        };
        check(b.kmeans.centroids, "kmeans.centroids");
        check(b.optics.train, "optics.train");
        check(b.lof.train, "lof.train");
        check(b.svm.support_vectors, "svm.support_vectors");
        for (const auto& pt : b.dbscan.core_points) {
            if (pt.size() != d) throw Error(Errc::InvalidDocument, "dbscan.core_points has the wrong dimension");
        }
        if (b.lof.k_distance.size() != b.lof.train.size() || b.lof.lrd.size() != b.lof.train.size() ||
            b.lof.k == 0 || b.lof.k >= b.lof.train.size()) {
            throw Error(Errc::InvalidDocument, "lof tables do not match its training set");
        }
        if (b.svm.alpha.size() != b.svm.support_vectors.size()) {
            throw Error(Errc::InvalidDocument, "svm alpha count differs from support vector count");
        }
        prepare_optics(b.optics);
        return b;
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidDocument, std::string("model bundle: ") + e.what());
    }
}

}  // namespace droneguard::detectors
