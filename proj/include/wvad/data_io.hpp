#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "wvad/errors.hpp"

namespace wvad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct RawData {
    Matrix x;                 // N x D feature values
    std::vector<int> labels;  // 0/1 ground truth
};

// Plain numeric CSV; label_col < 0 means the last column. header=true skips
// the first line.
RawData load_csv(const std::string& path, int label_col = -1, bool header = false);

struct StandardizeStats {
    Vector mean;                        // D
    Vector std;                         // D, set to 1 for constant columns
    std::vector<int> constant_columns;  // indices flagged during standardize
};

// Per-column z-scoring with population (n) statistics over all rows
// (transductive protocol). Constant columns come out as zeros and are
// flagged in stats and the optional warning list.
Matrix standardize(const Matrix& raw, StandardizeStats& stats,
                   std::vector<std::string>* warnings = nullptr);

struct LabeledDataset {
    Matrix x;                // (N+M) x D, standardized
    std::vector<int> weak;   // 1 = labeled anomaly, 0 = unlabeled pool
    std::vector<int> truth;  // ground truth, for evaluation only
    StandardizeStats stats;

    // provenance
    std::string source;
    double label_ratio = 0.0;
    std::uint64_t split_seed = 0;

    Eigen::Index rows() const { return x.rows(); }
    Eigen::Index dims() const { return x.cols(); }
    std::size_t weak_count() const;
    std::size_t anomaly_count() const;
};

// Number of anomalies that get a weak label: round-half-up of
// ratio * anomaly count. Exposed for tests.
std::size_t weak_label_count(std::size_t anomalies, double label_ratio);

// Marks a uniformly random subset of the true anomalies as weakly labeled.
// ratio must lie in (0, 1); a subset that rounds to zero is an error.
LabeledDataset split_weak_labels(Matrix x_std, std::vector<int> truth, StandardizeStats stats,
                                 double label_ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

enum class AnomalyPlacement { BetweenClusters, GlobalOutskirts };

struct SyntheticCluster {
    Vector mean;         // length dim
    double scale = 1.0;  // isotropic standard deviation
    int size = 100;      // >= 2
};

struct SyntheticSpec {
    int dim = 2;
    std::vector<SyntheticCluster> clusters;
    AnomalyPlacement placement = AnomalyPlacement::BetweenClusters;
    int anomaly_count = 20;
    double anomaly_jitter = 0.1;  // noise scale relative to mean cluster scale
    double label_ratio = 0.1;
    std::uint64_t seed = 0;
};

// Two clusters at +-offset along the first axis; the common small-scale
// fixture used by tests and the synthetic benchmark.
SyntheticSpec two_cluster_spec(int dim, double offset, double scale, int cluster_size,
                               int anomaly_count, std::uint64_t seed);

// Gaussian clusters as normal data plus anomalies placed per spec.placement:
// BetweenClusters puts them near the midpoint of a random cluster pair
// (local anomalies), GlobalOutskirts far outside every cluster. Rows come
// out standardized and weak-labeled.
LabeledDataset make_synthetic(const SyntheticSpec& spec);

// Flat key-value serialization of SyntheticSpec (one "key = value" per
// line, '#' comments).
SyntheticSpec load_synthetic_spec(const std::string& path);
void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path);

// ---------------------------------------------------------------------------
// Dataset cache
// ---------------------------------------------------------------------------

// CSV (features + weak + truth per row, %.17g) plus a JSON stats/provenance
// sidecar at path + ".meta"; round-trips bit-exactly.
void save_dataset_cache(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset_cache(const std::string& path);

}  // namespace wvad
