#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "droneguard/telemetry.hpp"

namespace droneguard::detectors {

using Point = std::vector<double>;
using Dataset = std::vector<Point>;

enum class Vote { Normal, Anomaly };

double distance(std::span<const double> a, std::span<const double> b);
/// Linear interpolation between closest ranks; q in [0, 100].
double percentile(std::vector<double> values, double q);

// --- k-means ---------------------------------------------------------------

struct KMeansModel {
    Dataset centroids;
    double distance_threshold = 0.0;
    std::size_t iterations = 0;
    std::vector<double> sse_history;  ///< SSE after each assignment step
};

/// k-means++ seeding, then Lloyd iterations until the assignment stops
/// changing or `max_iter` is hit. The threshold is the given percentile of
/// training nearest-centroid distances.
KMeansModel fit_kmeans(const Dataset& train, std::size_t k, std::uint64_t seed, double threshold_percentile = 99.5,
                       std::size_t max_iter = 300);
double nearest_centroid_distance(const KMeansModel& model, std::span<const double> x);
Vote predict_kmeans(const KMeansModel& model, std::span<const double> x);

// --- DBSCAN ----------------------------------------------------------------

struct DbscanModel {
    double eps = 0.0;
    std::size_t min_pts = 5;
    Dataset core_points;
};

/// Given percentile of the distances to each point's k-th nearest neighbor
/// (not counting itself).
double knn_distance_percentile(const Dataset& train, std::size_t k, double q);
DbscanModel fit_dbscan(const Dataset& train, double eps, std::size_t min_pts);
Vote predict_dbscan(const DbscanModel& model, std::span<const double> x);

// --- OPTICS ----------------------------------------------------------------

struct OpticsOrdering {
    std::vector<std::size_t> order;
    std::vector<double> reachability;   ///< per point index; +inf when undefined
    std::vector<double> core_distance;  ///< per point index
};

/// Standard OPTICS with unbounded eps. The seed list is processed by
/// (reachability, index); a new cluster starts at the lowest unprocessed index.
OpticsOrdering optics_order(const Dataset& points, std::size_t min_pts);

struct OpticsModel {
    Dataset train;
    std::size_t min_pts = 5;
    double reach_threshold = 0.0;
    // Derived from `train` and not serialized: pairwise distances and each
    // point's min_pts smallest distances (itself included), ascending. They
    // let a prediction rerun the ordering without recomputing the training
    // geometry.
    std::vector<double> pairwise;
    std::vector<double> nearest;
};

OpticsModel fit_optics(const Dataset& train, std::size_t min_pts, double threshold_percentile = 99.0);
/// Fills the derived tables of a model whose train/min_pts are set.
void prepare_optics(OpticsModel& model);
/// Appends x to the training data, reruns the ordering and returns x's
/// reachability distance.
double optics_reachability(const OpticsModel& model, std::span<const double> x);
Vote predict_optics(const OpticsModel& model, std::span<const double> x);

// --- LOF -------------------------------------------------------------------

struct LofModel {
    Dataset train;
    std::size_t k = 20;
    double threshold = 1.5;
    std::vector<double> k_distance;
    std::vector<double> lrd;
};

/// Neighborhoods hold exactly k points, ties broken by training index.
LofModel fit_lof(const Dataset& train, std::size_t k, double threshold = 1.5);
double lof_score(const LofModel& model, std::span<const double> x);
Vote predict_lof(const LofModel& model, std::span<const double> x);

// --- one-class SVM ---------------------------------------------------------

struct OcsvmModel {
    Dataset support_vectors;
    std::vector<double> alpha;
    double rho = 0.0;
    double gamma = 0.0;
    double nu = 0.05;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
};

/// 1 / (d * mean per-feature variance); 1 when the data has no spread.
double default_gamma(const Dataset& train);
/// RBF one-class SVM dual: min 1/2 a'Ka with 0 <= a_i <= 1/(nu n), sum a = 1,
/// solved by maximal-violating-pair SMO to the given KKT tolerance.
OcsvmModel fit_ocsvm(const Dataset& train, double nu, double gamma, std::uint64_t seed = 0, double tol = 1e-6,
                     std::size_t max_iter = 2'000'000);
double ocsvm_decision(const OcsvmModel& model, std::span<const double> x);
Vote predict_ocsvm(const OcsvmModel& model, std::span<const double> x);

// --- bundle ----------------------------------------------------------------

inline constexpr int kBundleVersion = 1;

enum class Detector { KMeans = 0, Dbscan = 1, Optics = 2, Lof = 3, Svm = 4 };
inline constexpr std::array<Detector, 5> kAllDetectors = {Detector::KMeans, Detector::Dbscan, Detector::Optics,
                                                          Detector::Lof, Detector::Svm};
std::string_view detector_tag(Detector d) noexcept;  ///< KM, DB, OP, LOF, SVM

struct DetectorConfig {
    // Heading is left out: it follows the mission geometry, not vehicle health.
    std::vector<telemetry::Field> features{telemetry::Field::RelAlt,      telemetry::Field::Roll,
                                           telemetry::Field::Pitch,       telemetry::Field::Throttle,
                                           telemetry::Field::Groundspeed, telemetry::Field::Climb};
    std::size_t kmeans_k = 5;
    double kmeans_percentile = 99.5;
    double dbscan_eps = 0.0;  ///< 0: derived from the training data
    double dbscan_eps_percentile = 90.0;
    std::size_t dbscan_min_pts = 5;
    std::size_t optics_min_pts = 5;
    double optics_percentile = 99.0;
    std::size_t lof_k = 20;
    double lof_threshold = 1.5;
    double nu = 0.05;
    double gamma = 0.0;  ///< 0: derived from the training data
    std::size_t max_train = 450;
    std::uint64_t seed = 1;
};

struct ModelBundle {
    int version = kBundleVersion;
    DetectorConfig config;  ///< with derived eps/gamma filled in
    std::size_t corpus_size = 0;
    std::vector<std::string> provenance;
    KMeansModel kmeans;
    DbscanModel dbscan;
    OpticsModel optics;
    LofModel lof;
    OcsvmModel svm;
};

Point feature_vector(const telemetry::LogRecord& record, std::span<const telemetry::Field> features);

/// Seeded sample without replacement of at most `max_train` points, kept in
/// corpus order. With per-point `strata` labels every stratum gets an equal
/// share (or all of its points when it has fewer), so short flight phases
/// are not crowded out by long ones.
Dataset training_sample(const Dataset& corpus, std::size_t max_train, std::uint64_t seed,
                        std::span<const std::size_t> strata = {});

ModelBundle fit_bundle(const Dataset& corpus, const DetectorConfig& config,
                       std::span<const std::size_t> strata = {});

/// Votes in kAllDetectors order. With `include_optics` false the OPTICS slot
/// is reported Normal without running the refit.
std::array<Vote, 5> predict_all(const ModelBundle& bundle, std::span<const double> x, bool include_optics = true);

std::string write_bundle(const ModelBundle& bundle);
/// Throws Error(InvalidDocument) on malformed or wrong-version input.
ModelBundle parse_bundle(std::string_view json_text);

}  // namespace droneguard::detectors
