#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"

#include "droneguard/detectors.hpp"

using namespace droneguard;
using namespace droneguard::detectors;

namespace {

Dataset gaussian(std::mt19937_64& rng, std::size_t n, std::size_t d, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Dataset out(n, Point(d));
    for (auto& p : out) {
        for (auto& v : p) v = g(rng);
    }
    return out;
}

/// Random instance with duplicates and lattice points so ties get exercised.
Dataset tricky(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    Dataset out = gaussian(rng, n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (i % 7 == 3) out[i] = out[i / 2];
        if (i % 11 == 5) {
            for (auto& v : out[i]) v = std::round(v);
        }
    }
    return out;
}

Dataset queries(std::mt19937_64& rng, const Dataset& train, std::size_t n) {
    Dataset q = gaussian(rng, n, train.front().size(), 1.5);
    q.push_back(train[rng() % train.size()]);
    Point far(train.front().size(), 100.0);
    q.push_back(far);
    return q;
}

}  // namespace

TEST_CASE("percentile interpolates between ranks") {
    CHECK(percentile({1, 2, 3, 4, 5}, 50) == 3.0);
    CHECK(percentile({1, 2, 3, 4}, 50) == 2.5);
    CHECK(percentile({5, 1, 3}, 100) == 5.0);
    CHECK(percentile({5, 1, 3}, 0) == 1.0);
    CHECK(percentile({0, 10}, 99) == doctest::Approx(9.9));
}

TEST_CASE("k-means") {
    SUBCASE("single centroid is the mean") {
        const Dataset train{{0, 0}, {0.1, 0}, {-0.1, 0}};
        const auto m = fit_kmeans(train, 1, 1);
        REQUIRE(m.centroids.size() == 1);
        CHECK(m.centroids[0][0] == doctest::Approx(0.0));
        CHECK(m.centroids[0][1] == doctest::Approx(0.0));
    }
    SUBCASE("k equal to |train|") {
        const Dataset train{{0, 0}, {1, 0}, {0, 3}, {5, 5}};
        const auto m = fit_kmeans(train, 4, 9);
        CHECK(m.sse_history.back() == 0.0);
        for (const auto& p : train) CHECK(nearest_centroid_distance(m, p) == 0.0);
    }
    SUBCASE("errors") {
        const Dataset train{{0, 0}, {1, 1}};
        CHECK_ERRC(fit_kmeans(train, 0, 1), Errc::TooFewPoints);
        CHECK_ERRC(fit_kmeans(train, 3, 1), Errc::TooFewPoints);
    }
    SUBCASE("prediction") {
        KMeansModel m;
        m.centroids = {{0, 0}};
        m.distance_threshold = 1.0;
        CHECK(predict_kmeans(m, Point{5, 5}) == Vote::Anomaly);
        CHECK(predict_kmeans(m, Point{0.05, 0}) == Vote::Normal);
        CHECK_ERRC(predict_kmeans(m, Point{1, 2, 3}), Errc::DimensionMismatch);
    }
    SUBCASE("SSE never increases and the threshold is a training percentile") {
        std::mt19937_64 rng(3);
        for (int t = 0; t < 10; ++t) {
            const auto train = gaussian(rng, 120, 3);
            const auto m = fit_kmeans(train, 5, static_cast<std::uint64_t>(t));
            for (std::size_t i = 1; i < m.sse_history.size(); ++i) {
                CHECK(m.sse_history[i] <= m.sse_history[i - 1] + 1e-9);
            }
            std::vector<double> d;
            for (const auto& p : train) {
                double best = oracle::kInf;
                for (const auto& c : m.centroids) best = std::min(best, oracle::dist(p, c));
                d.push_back(best);
            }
            CHECK(m.distance_threshold == doctest::Approx(oracle::percentile(d, 99.5)));
            // deterministic in the seed
            CHECK(fit_kmeans(train, 5, static_cast<std::uint64_t>(t)).centroids == m.centroids);
        }
    }
}

TEST_CASE("DBSCAN") {
    const Dataset train{{0, 0}, {0.2, 0}, {5, 5}};
    const auto m = fit_dbscan(train, 0.5, 2);
    CHECK(m.core_points == Dataset{{0, 0}, {0.2, 0}});
    CHECK(predict_dbscan(m, Point{0.1, 0}) == Vote::Normal);
    CHECK(predict_dbscan(m, Point{10, 10}) == Vote::Anomaly);
    CHECK(predict_dbscan(m, Point{5, 5}) == Vote::Anomaly);
    CHECK_ERRC(fit_dbscan(train, 0.0, 2), Errc::InvalidParams);
    CHECK_ERRC(fit_dbscan(train, 0.5, 0), Errc::InvalidParams);

    std::mt19937_64 rng(11);
    for (int t = 0; t < 15; ++t) {
        const auto train2 = tricky(rng, 20 + rng() % 100, 2 + rng() % 3);
        const double eps = knn_distance_percentile(train2, 4, 90.0);
        const auto model = fit_dbscan(train2, eps, 5);
        for (const auto& x : queries(rng, train2, 15)) {
            CHECK((predict_dbscan(model, x) == Vote::Anomaly) == oracle::dbscan_anomaly(train2, eps, 5, x));
        }
    }
}

TEST_CASE("OPTICS") {
    std::mt19937_64 rng(12);
    SUBCASE("ordering matches the linear-scan reference") {
        for (int t = 0; t < 15; ++t) {
            const auto pts = tricky(rng, 10 + rng() % 80, 2 + rng() % 3);
            const auto got = optics_order(pts, 5).reachability;
            const auto want = oracle::optics_reachability(pts, 5);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
        }
    }
    SUBCASE("votes match the reference on the augmented set") {
        for (int t = 0; t < 10; ++t) {
            const auto train = tricky(rng, 20 + rng() % 80, 2 + rng() % 3);
            const auto m = fit_optics(train, 5);
            CHECK(m.reach_threshold == oracle::optics_threshold(train, 5, 99.0));
            for (const auto& x : queries(rng, train, 10)) {
                CHECK((predict_optics(m, x) == Vote::Anomaly) == oracle::optics_anomaly(train, 5, m.reach_threshold, x));
            }
        }
    }
    SUBCASE("cached geometry gives the same answer as a full rerun") {
        const auto train = tricky(rng, 150, 4);
        auto m = fit_optics(train, 5);
        auto bare = m;
        bare.pairwise.clear();
        bare.nearest.clear();
        for (const auto& x : queries(rng, train, 20)) CHECK(optics_reachability(m, x) == optics_reachability(bare, x));
    }
    SUBCASE("far point and interior point") {
        const auto train = gaussian(rng, 60, 2);
        const auto m = fit_optics(train, 5);
        CHECK(predict_optics(m, Point{100, 0}) == Vote::Anomaly);
        // an interior point: the training point closest to the centroid
        const auto interior = *std::min_element(train.begin(), train.end(), [](const Point& a, const Point& b) {
            return a[0] * a[0] + a[1] * a[1] < b[0] * b[0] + b[1] * b[1];
        });
        CHECK(predict_optics(m, interior) == Vote::Normal);
        CHECK_ERRC(fit_optics(train, 60), Errc::InvalidParams);
    }
}

TEST_CASE("LOF") {
    SUBCASE("grid center is an inlier") {
        Dataset grid;
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j) grid.push_back({static_cast<double>(i), static_cast<double>(j)});
        }
        const auto m = fit_lof(grid, 4);
        CHECK(lof_score(m, Point{2, 2}) == doctest::Approx(1.0).epsilon(0.05));
        CHECK(predict_lof(m, Point{2, 2}) == Vote::Normal);
        CHECK(lof_score(m, Point{100, 100}) > 10.0);
        CHECK(predict_lof(m, Point{100, 100}) == Vote::Anomaly);
        CHECK_ERRC(fit_lof(grid, 25), Errc::InvalidParams);
        CHECK_ERRC(fit_lof(grid, 0), Errc::InvalidParams);
    }
    SUBCASE("scores match the brute-force definition") {
        std::mt19937_64 rng(13);
        for (int t = 0; t < 15; ++t) {
            const auto train = tricky(rng, 25 + rng() % 80, 2 + rng() % 3);
            const std::size_t k = 1 + rng() % 20;
            const auto m = fit_lof(train, k);
            for (const auto& x : queries(rng, train, 10)) {
                const double want = oracle::lof(train, k, x);
                CHECK(std::fabs(lof_score(m, x) - want) <= 1e-9 * std::max(1.0, std::fabs(want)));
            }
        }
    }
}

TEST_CASE("one-class SVM") {
    SUBCASE("identical training points") {
        const Dataset train(10, Point{1.0, 2.0});
        const auto m = fit_ocsvm(train, 0.1, 0.5);
        CHECK(predict_ocsvm(m, Point{1.0, 2.0}) == Vote::Normal);
    }
    SUBCASE("far away point") {
        std::mt19937_64 rng(4);
        const auto train = gaussian(rng, 80, 2);
        const auto m = fit_ocsvm(train, 0.05, default_gamma(train));
        CHECK(predict_ocsvm(m, Point{50, 50}) == Vote::Anomaly);
        CHECK(ocsvm_decision(m, Point{50, 50}) == doctest::Approx(-m.rho));
    }
    SUBCASE("KKT conditions and the nu property") {
        std::mt19937_64 rng(5);
        for (double nu : {0.05, 0.1, 0.3}) {
            const auto train = gaussian(rng, 200, 3);
            const double gamma = default_gamma(train);
            const auto m = fit_ocsvm(train, nu, gamma, 17);
            const double c = 1.0 / (nu * static_cast<double>(train.size()));

            // Rebuild the full alpha vector and check feasibility.
            std::vector<double> alpha(train.size(), 0.0);
            for (std::size_t s = 0; s < m.support_vectors.size(); ++s) {
                const auto it = std::find(train.begin(), train.end(), m.support_vectors[s]);
                REQUIRE(it != train.end());
                alpha[static_cast<std::size_t>(it - train.begin())] = m.alpha[s];
            }
            double sum = 0.0;
            for (double a : alpha) {
                CHECK(a >= 0.0);
                CHECK(a <= c + 1e-15);
                sum += a;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

            // Gradient of 1/2 a'Ka recomputed from scratch.
            double up = oracle::kInf;
            double low = -oracle::kInf;
            std::size_t outliers = 0;
            for (std::size_t i = 0; i < train.size(); ++i) {
                double g = 0.0;
                for (std::size_t j = 0; j < train.size(); ++j) {
                    const double d = oracle::dist(train[i], train[j]);
                    g += alpha[j] * std::exp(-gamma * d * d);
                }
                if (alpha[i] < c) up = std::min(up, g);
                if (alpha[i] > 0.0) low = std::max(low, g);
                outliers += predict_ocsvm(m, train[i]) == Vote::Anomaly ? 1 : 0;
            }
            CHECK(low - up <= 1e-6 + 1e-12);
            CHECK(m.kkt_residual <= 1e-6);
            CHECK(static_cast<double>(outliers) / static_cast<double>(train.size()) <= nu + 0.02);
        }
    }
    SUBCASE("errors") {
        const Dataset train{{0, 0}, {1, 1}};
        CHECK_ERRC(fit_ocsvm(train, 0.0, 1.0), Errc::InvalidParams);
        CHECK_ERRC(fit_ocsvm(train, 1.2, 1.0), Errc::InvalidParams);
        CHECK_ERRC(fit_ocsvm(train, 0.5, 0.0), Errc::InvalidParams);
        std::mt19937_64 rng(6);
        const auto big = gaussian(rng, 100, 2);
        CHECK_ERRC(fit_ocsvm(big, 0.05, 1.0, 0, 1e-6, 1), Errc::NoConvergence);
    }
    SUBCASE("default gamma") {
        const Dataset train{{0, 0}, {2, 0}, {0, 4}, {2, 4}};
        // variances 1 and 4, mean 2.5, d = 2
        CHECK(default_gamma(train) == doctest::Approx(1.0 / 5.0));
        CHECK(default_gamma(Dataset(3, Point{1, 1})) == 1.0);
    }
}

TEST_CASE("bundle") {
    std::mt19937_64 rng(8);
    const auto corpus = gaussian(rng, 600, 6);
    DetectorConfig cfg;
    const auto b = fit_bundle(corpus, cfg);
    CHECK(b.corpus_size == 600);
    CHECK(b.optics.train.size() == cfg.max_train);
    CHECK(b.config.dbscan_eps > 0.0);
    CHECK(b.config.gamma > 0.0);

    const auto text = write_bundle(b);
    CHECK(write_bundle(fit_bundle(corpus, cfg)) == text);
    const auto back = parse_bundle(text);
    CHECK(write_bundle(back) == text);
    for (const auto& x : queries(rng, corpus, 20)) CHECK(predict_all(back, x) == predict_all(b, x));

    const auto votes = predict_all(b, Point(6, 100.0), false);
    CHECK(votes[static_cast<std::size_t>(Detector::Optics)] == Vote::Normal);
    CHECK(votes[static_cast<std::size_t>(Detector::KMeans)] == Vote::Anomaly);

    CHECK_ERRC(parse_bundle("{\"format\": \"droneguard-models\", \"version\": 99}"), Errc::InvalidDocument);
    CHECK_ERRC(parse_bundle("not json"), Errc::InvalidDocument);
    CHECK_ERRC(fit_bundle(gaussian(rng, 10, 6), cfg), Errc::TooFewPoints);
}

TEST_CASE("training sample keeps corpus order") {
    Dataset corpus;
    for (int i = 0; i < 1000; ++i) corpus.push_back({static_cast<double>(i)});
    const auto s = training_sample(corpus, 100, 3);
    REQUIRE(s.size() == 100);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    CHECK(training_sample(corpus, 100, 3) == s);
    CHECK(training_sample(corpus, 2000, 3) == corpus);
}

TEST_CASE("stratified training sample") {
    // strata sizes 10, 90, 900; the point value encodes its stratum
    Dataset corpus;
    std::vector<std::size_t> strata;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t label = i < 10 ? 0 : (i < 100 ? 1 : 2);
        corpus.push_back({static_cast<double>(label), static_cast<double>(i)});
        strata.push_back(label);
    }
    const auto s = training_sample(corpus, 150, 4, strata);
    REQUIRE(s.size() == 150);
    std::array<int, 3> counts{};
    for (const auto& p : s) ++counts[static_cast<std::size_t>(p[0])];
    CHECK(counts[0] == 10);  // all of the small stratum
    CHECK(counts[1] == 70);  // leftover split evenly
    CHECK(counts[2] == 70);
    CHECK(std::is_sorted(s.begin(), s.end(), [](const Point& a, const Point& b) { return a[1] < b[1]; }));
    CHECK(training_sample(corpus, 150, 4, strata) == s);
    strata.pop_back();
    CHECK_ERRC(training_sample(corpus, 150, 4, strata), Errc::DimensionMismatch);
}

TEST_CASE("predictions are pure") {
    std::mt19937_64 rng(10);
    const auto corpus = gaussian(rng, 300, 3);
    DetectorConfig cfg;
    cfg.features.resize(3);
    const auto b = fit_bundle(corpus, cfg);
    for (const auto& x : queries(rng, corpus, 10)) CHECK(predict_all(b, x) == predict_all(b, x));
}
