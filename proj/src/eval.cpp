#include "mscib/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mscib/error.hpp"

namespace mscib {

// ---------------------------------------------------------------------------
// k-means

namespace {

double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

Matrix plus_plus_seed(const Matrix& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Matrix c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = sq_dist(x, i, c, 0);
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    c.row(j) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), sq_dist(x, i, c, j));
  }
  return c;
}

/// Assigns every point to its nearest centroid; returns the inertia.
double assign(const Matrix& x, const Matrix& c, Labels& labels, Eigen::VectorXd& best) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double bd = std::numeric_limits<double>::infinity();
    int bj = 0;
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = sq_dist(x, i, c, j);
      if (d < bd) {
        bd = d;
        bj = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = bj;
    best(i) = bd;
    inertia += bd;
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans_single(const Matrix& x, int k, int max_iters, double tol, Rng& rng,
                           std::vector<double>* trace) {
  const Eigen::Index n = x.rows();
  if (k < 1 || n < k) throw InvalidArgument("kmeans: need N >= K >= 1");
  Matrix c = plus_plus_seed(x, k, rng);
  Labels labels(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd best(n);
  double inertia = 0.0;
  for (int it = 0; it < std::max(1, max_iters); ++it) {
    inertia = assign(x, c, labels, best);
    if (trace) trace->push_back(inertia);
    Matrix next = Matrix::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(labels[i]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[i])];
    }
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        next.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      // Empty cluster: move it to the point farthest from its current centroid.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!taken[static_cast<std::size_t>(i)] && best(i) > far_d) {
          far_d = best(i);
          far = i;
        }
      taken[static_cast<std::size_t>(far)] = true;
      best(far) = 0.0;
      next.row(j) = x.row(far);
    }
    const double shift = (next - c).rowwise().norm().maxCoeff();
    c = std::move(next);
    if (shift < tol) break;
  }
  inertia = assign(x, c, labels, best);
  if (trace) trace->push_back(inertia);
  return {std::move(labels), inertia, {inertia}};
}

KMeansResult kmeans(const Matrix& points, int k, const KMeansOptions& options, std::uint64_t seed) {
  if (k < 1 || points.rows() < k) throw InvalidArgument("kmeans: need N >= K >= 1");
  if (options.restarts < 1) throw InvalidArgument("kmeans: restarts must be >= 1");
  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    auto res = kmeans_single(points, k, options.max_iters, options.tol, rng);
    best.restart_inertias.push_back(res.inertia);
    if (res.inertia < best.inertia) {
      best.inertia = res.inertia;
      best.labels = std::move(res.labels);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

struct Contingency {
  Matrix table;  // rows: truth classes, cols: predicted clusters
  double n = 0.0;
};

Contingency contingency(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size())
    throw InvalidArgument("label vectors differ in length (" + std::to_string(truth.size()) + " vs " +
                          std::to_string(pred.size()) + ")");
  std::map<int, Eigen::Index> ti, pi;
  for (int t : truth) ti.emplace(t, 0);
  for (int p : pred) pi.emplace(p, 0);
  Eigen::Index idx = 0;
  for (auto& [_, v] : ti) v = idx++;
  idx = 0;
  for (auto& [_, v] : pi) v = idx++;
  Contingency c{Matrix::Zero(static_cast<Eigen::Index>(ti.size()), static_cast<Eigen::Index>(pi.size())),
                static_cast<double>(truth.size())};
  for (std::size_t i = 0; i < truth.size(); ++i) c.table(ti[truth[i]], pi[pred[i]]) += 1.0;
  return c;
}

double entropy(const Eigen::VectorXd& counts, double n) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < counts.size(); ++i)
    if (counts(i) > 0.0) h -= counts(i) / n * std::log(counts(i) / n);
  return h;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

std::vector<int> hungarian(const Matrix& cost) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw InvalidArgument("hungarian: cost matrix must be square");
  // Potentials-based O(n^3) assignment (1-based internally).
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1), v = Eigen::VectorXd::Zero(n + 1);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    Eigen::VectorXd minv = Eigen::VectorXd::Constant(n + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u(i0) - v(j);
        if (cur < minv(j)) {
          minv(j) = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv(j) < delta) {
          delta = minv(j);
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u(p[static_cast<std::size_t>(j)]) += delta;
          v(j) -= delta;
        } else {
          minv(j) -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (Eigen::Index j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] > 0)
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = static_cast<int>(j - 1);
  return row_to_col;
}

double clustering_accuracy(std::span<const int> truth, std::span<const int> pred) {
  const Contingency c = contingency(truth, pred);
  if (c.n == 0.0) return 1.0;
  const Eigen::Index size = std::max(c.table.rows(), c.table.cols());
  Matrix square = Matrix::Zero(size, size);
  square.topLeftCorner(c.table.rows(), c.table.cols()) = c.table;
  const auto match = hungarian(-square);
  double hits = 0.0;
  for (Eigen::Index r = 0; r < size; ++r) hits += square(r, match[static_cast<std::size_t>(r)]);
  return hits / c.n;
}

double nmi(std::span<const int> truth, std::span<const int> pred) {
  const Contingency c = contingency(truth, pred);
  if (c.n == 0.0) return 1.0;
  const Eigen::VectorXd a = c.table.rowwise().sum();
  const Eigen::VectorXd b = c.table.colwise().sum().transpose();
  const double ha = entropy(a, c.n);
  const double hb = entropy(b, c.n);
  if (ha + hb == 0.0) return 1.0;  // both partitions are a single cluster
  double mi = 0.0;
  for (Eigen::Index i = 0; i < c.table.rows(); ++i)
    for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
      const double nij = c.table(i, j);
      if (nij > 0.0) mi += nij / c.n * std::log(c.n * nij / (a(i) * b(j)));
    }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double ari(std::span<const int> truth, std::span<const int> pred) {
  const Contingency c = contingency(truth, pred);
  double index = 0.0;
  for (Eigen::Index k = 0; k < c.table.size(); ++k) index += choose2(c.table.data()[k]);
  double sa = 0.0, sb = 0.0;
  const Eigen::VectorXd a = c.table.rowwise().sum();
  const Eigen::VectorXd b = c.table.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < a.size(); ++i) sa += choose2(a(i));
  for (Eigen::Index j = 0; j < b.size(); ++j) sb += choose2(b(j));
  const double pairs = choose2(c.n);
  if (pairs == 0.0) return 1.0;
  const double expected = sa * sb / pairs;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------

ClusterReport evaluate_representation(const Matrix& points, std::span<const int> truth, int k,
                                      int runs, std::uint64_t seed, const KMeansOptions& options) {
  if (runs < 1) throw InvalidArgument("evaluate_representation: runs must be >= 1");
  if (static_cast<Eigen::Index>(truth.size()) != points.rows())
    throw InvalidArgument("evaluate_representation: label count does not match point count");
  ClusterReport report;
  report.runs = runs;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < runs; ++r) {
    auto res = kmeans(points, k, options, Rng::derive(seed, static_cast<std::uint64_t>(r)));
    report.acc += clustering_accuracy(truth, res.labels);
    report.nmi += nmi(truth, res.labels);
    report.ari += ari(truth, res.labels);
    report.inertia += res.inertia;
    if (res.inertia < best_inertia) {
      best_inertia = res.inertia;
      report.labels = std::move(res.labels);
    }
  }
  const double inv = 1.0 / runs;
  report.acc *= inv;
  report.nmi *= inv;
  report.ari *= inv;
  report.inertia *= inv;
  return report;
}

std::string raw_view_name(std::size_t m) { return "X^(" + std::to_string(m + 1) + ")"; }
std::string view_code_name(std::size_t m) { return "Z^(" + std::to_string(m + 1) + ")"; }

AblationTable ablation_eval(const MscibModel& model, const MultiViewDataset& ds, int k, int runs,
                            std::uint64_t seed, const KMeansOptions& options) {
  if (!ds.has_labels()) throw DataError("labels are required for evaluation");
  if (model.n_views() != ds.n_views())
    throw InvalidArgument("ablation_eval: model has " + std::to_string(model.n_views()) +
                          " views, dataset has " + std::to_string(ds.n_views()));
  const auto& truth = *ds.labels();
  AblationTable table;
  for (std::size_t m = 0; m < ds.n_views(); ++m)
    table.emplace_back(raw_view_name(m), evaluate_representation(ds.view(m), truth, k, runs, seed, options));
  for (std::size_t m = 0; m < ds.n_views(); ++m)
    table.emplace_back(view_code_name(m), evaluate_representation(view_embedding(model, m, ds.view(m)),
                                                                  truth, k, runs, seed, options));
  table.emplace_back("Z", evaluate_representation(model.z, truth, k, runs, seed, options));
  return table;
}

}  // namespace mscib
