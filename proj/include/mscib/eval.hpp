#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mscib/dataset.hpp"
#include "mscib/model.hpp"

namespace mscib {

struct KMeansOptions {
  int restarts = 10;
  int max_iters = 300;
  double tol = 1e-4;
};

struct KMeansResult {
  Labels labels;
  double inertia = 0.0;
  /// Final inertia of every restart, in order.
  std::vector<double> restart_inertias;
};

/// k-means++ seeding and Lloyd iterations until the largest centroid shift
/// drops below `tol`; keeps the lowest-inertia restart. Empty clusters are
/// re-seeded at the point farthest from its centroid.
KMeansResult kmeans(const Matrix& points, int k, const KMeansOptions& options, std::uint64_t seed);

/// One restart. When `trace` is set it receives the inertia after every assignment step.
KMeansResult kmeans_single(const Matrix& points, int k, int max_iters, double tol, Rng& rng,
                           std::vector<double>* trace = nullptr);

/// Fraction of samples matched under the optimal cluster-to-class assignment.
double clustering_accuracy(std::span<const int> truth, std::span<const int> pred);

/// Mutual information normalised by the arithmetic mean of the two entropies.
double nmi(std::span<const int> truth, std::span<const int> pred);

/// Adjusted Rand index from the contingency table.
double ari(std::span<const int> truth, std::span<const int> pred);

/// Minimum-cost perfect assignment on a square cost matrix; returns the column
/// assigned to each row.
std::vector<int> hungarian(const Matrix& cost);

struct ClusterReport {
  Labels labels;  // labels of the lowest-inertia run
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  double inertia = 0.0;  // mean over runs
  int runs = 0;
};

/// `runs` independent k-means executions (seeds derived from `seed`); the report
/// holds the mean of each metric.
ClusterReport evaluate_representation(const Matrix& points, std::span<const int> truth, int k,
                                      int runs = 10, std::uint64_t seed = 0,
                                      const KMeansOptions& options = {});

using AblationTable = std::vector<std::pair<std::string, ClusterReport>>;

/// Reports for X^(1..M), Z^(1..M) (posterior means) and Z, in that order.
AblationTable ablation_eval(const MscibModel& model, const MultiViewDataset& ds, int k,
                            int runs = 10, std::uint64_t seed = 0,
                            const KMeansOptions& options = {});

std::string raw_view_name(std::size_t m);
std::string view_code_name(std::size_t m);

}  // namespace mscib
