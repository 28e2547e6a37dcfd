#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mscib/error.hpp"
#include "mscib/eval.hpp"

using namespace mscib;

namespace {

// Brute force over every relabelling of the predicted clusters.
double brute_acc(const Labels& truth, const Labels& pred) {
  const int k = std::max(*std::max_element(truth.begin(), truth.end()),
                         *std::max_element(pred.begin(), pred.end())) + 1;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += perm[pred[i]] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / truth.size();
}

double entropy_of(const std::map<int, double>& counts, double n) {
  double h = 0.0;
  for (const auto& [_, c] : counts) h -= c / n * std::log(c / n);
  return h;
}

double brute_nmi(const Labels& u, const Labels& v) {
  const double n = static_cast<double>(u.size());
  std::map<int, double> cu, cv;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cu[u[i]] += 1;
    cv[v[i]] += 1;
    joint[{u[i], v[i]}] += 1;
  }
  double mi = 0.0;
  for (const auto& [key, c] : joint) mi += c / n * std::log(c * n / (cu[key.first] * cv[key.second]));
  const double hu = entropy_of(cu, n), hv = entropy_of(cv, n);
  if (hu == 0.0 && hv == 0.0) return 1.0;
  return mi / (0.5 * (hu + hv));
}

// Pair-counting form: a = together in both, d = apart in both.
double brute_ari(const Labels& u, const Labels& v) {
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = i + 1; j < u.size(); ++j) {
      const bool su = u[i] == u[j], sv = v[i] == v[j];
      if (su && sv) ++a;
      else if (su) ++b;
      else if (sv) ++c;
      else ++d;
    }
  const double den = (a + b) * (b + d) + (a + c) * (c + d);
  if (den == 0.0) return 1.0;
  return 2.0 * (a * d - b * c) / den;
}

Labels random_labels(Rng& rng, std::size_t n, int k) {
  Labels l(n);
  for (auto& x : l) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  return l;
}

Matrix blobs(Rng& rng, const std::vector<std::vector<double>>& centres, int per, double noise,
             Labels* truth) {
  const auto dim = static_cast<Eigen::Index>(centres.front().size());
  Matrix x(static_cast<Eigen::Index>(centres.size()) * per, dim);
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < centres.size(); ++c)
    for (int i = 0; i < per; ++i, ++r) {
      for (Eigen::Index j = 0; j < dim; ++j) x(r, j) = centres[c][j] + noise * rng.normal();
      if (truth) truth->push_back(static_cast<int>(c));
    }
  return x;
}

}  // namespace

TEST_CASE("metric examples") {
  const Labels truth{0, 0, 1, 1};
  CHECK(clustering_accuracy(truth, Labels{1, 1, 0, 0}) == 1.0);
  CHECK(clustering_accuracy(truth, Labels{0, 1, 0, 1}) == 0.5);
  CHECK(nmi(truth, truth) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(nmi(truth, Labels{0, 1, 0, 1})) < 1e-15);
  CHECK(ari(truth, truth) == 1.0);
  // Index 0, expected 2/3, max 2: (0 - 2/3) / (2 - 2/3).
  CHECK(ari(truth, Labels{0, 1, 0, 1}) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(brute_ari(truth, Labels{0, 1, 0, 1}) == -0.5);
  CHECK(ari(Labels{0, 0, 1, 1, 2, 2}, Labels(6, 0)) == 0.0);
  CHECK(nmi(Labels(5, 0), Labels(5, 3)) == 1.0);
  CHECK(nmi(Labels(4, 0), truth) == 0.0);
  CHECK_THROWS_AS(clustering_accuracy(truth, Labels{0}), InvalidArgument);
  CHECK_THROWS_AS(nmi(truth, Labels{0}), InvalidArgument);
  CHECK_THROWS_AS(ari(truth, Labels{0}), InvalidArgument);
}

TEST_CASE("metrics match brute-force oracles on small instances") {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.below(11);
    const Labels u = random_labels(rng, n, 1 + static_cast<int>(rng.below(3)));
    const Labels v = random_labels(rng, n, 1 + static_cast<int>(rng.below(3)));
    CHECK(clustering_accuracy(u, v) == doctest::Approx(brute_acc(u, v)).epsilon(1e-12));
    CHECK(std::abs(nmi(u, v) - brute_nmi(u, v)) <= 1e-12);
    CHECK(std::abs(ari(u, v) - brute_ari(u, v)) <= 1e-12);
  }
}

TEST_CASE("property: metrics are permutation invariant and bounded") {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));
    const Labels u = random_labels(rng, 30, k), v = random_labels(rng, 30, k);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    Labels w = v;
    for (auto& x : w) x = perm[x];
    CHECK(clustering_accuracy(u, w) == doctest::Approx(clustering_accuracy(u, v)).epsilon(1e-12));
    CHECK(nmi(u, w) == doctest::Approx(nmi(u, v)).epsilon(1e-12));
    CHECK(ari(u, w) == doctest::Approx(ari(u, v)).epsilon(1e-12));
    CHECK(clustering_accuracy(w, u) == clustering_accuracy(u, v));
    const double n = nmi(u, v);
    CHECK(n >= -1e-15);
    CHECK(n <= 1.0 + 1e-12);
    CHECK(ari(u, v) <= 1.0);
  }
  // Balanced predictions: ACC >= 1/K.
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));
    Labels pred(static_cast<std::size_t>(12 * k));
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = static_cast<int>(i % static_cast<std::size_t>(k));
    const Labels truth = random_labels(rng, pred.size(), k);
    CHECK(clustering_accuracy(truth, pred) >= 1.0 / k - 1e-12);
  }
}

TEST_CASE("hungarian finds the minimum-cost assignment") {
  Matrix cost(3, 3);
  cost << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const auto a = hungarian(cost);
  double total = 0.0;
  for (int r = 0; r < 3; ++r) total += cost(r, a[static_cast<std::size_t>(r)]);
  CHECK(total == 5.0);

  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const Matrix c = rng.normal_matrix(n, n);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) s += c(r, perm[r]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto got = hungarian(c);
    double s = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) s += c(r, got[r]);
    CHECK(s == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("kmeans on separable data") {
  Rng rng(1);
  Labels truth;
  const Matrix x = blobs(rng, {{0, 0}, {50, 50}}, 20, 0.5, &truth);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto res = kmeans(x, 2, {}, seed);
    CHECK(clustering_accuracy(truth, res.labels) == 1.0);
  }
  const auto report = evaluate_representation(x, truth, 2, 10, 4);
  CHECK(report.acc == 1.0);
  CHECK(report.nmi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.ari == 1.0);
  CHECK(report.runs == 10);
}

TEST_CASE("kmeans with a single cluster") {
  Rng rng(5);
  const Matrix x = rng.normal_matrix(17, 3);
  const auto res = kmeans(x, 1, {}, 0);
  CHECK(std::all_of(res.labels.begin(), res.labels.end(), [](int l) { return l == 0; }));
  const double total = (x.rowwise() - x.colwise().mean()).squaredNorm();
  CHECK(res.inertia == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("kmeans argument checks") {
  CHECK_THROWS_AS(kmeans(Matrix::Zero(2, 2), 3, {}, 0), InvalidArgument);
  CHECK_THROWS_AS(kmeans(Matrix::Zero(2, 2), 0, {}, 0), InvalidArgument);
}

TEST_CASE("lloyd iterations never increase inertia") {
  Rng data(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix x = data.normal_matrix(60, 4);
    Rng rng(static_cast<std::uint64_t>(trial));
    std::vector<double> trace;
    kmeans_single(x, 5, 300, 0.0, rng, &trace);
    REQUIRE(!trace.empty());
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] * (1 + 1e-12));
  }
}

TEST_CASE("best restart has the lowest inertia") {
  Rng data(6);
  const Matrix x = data.normal_matrix(80, 2);
  KMeansOptions opts;
  opts.restarts = 8;
  const auto res = kmeans(x, 6, opts, 3);
  REQUIRE(res.restart_inertias.size() == 8);
  for (double r : res.restart_inertias) CHECK(res.inertia <= r);
}

TEST_CASE("empty clusters are re-seeded") {
  // Duplicate points force collisions during seeding.
  Matrix x(6, 1);
  x << 0, 0, 0, 0, 0, 10;
  const auto res = kmeans(x, 3, {}, 1);
  std::vector<int> seen(3, 0);
  for (int l : res.labels) {
    CHECK(l >= 0);
    CHECK(l < 3);
    seen[static_cast<std::size_t>(l)] = 1;
  }
  CHECK(std::accumulate(seen.begin(), seen.end(), 0) >= 2);
}

TEST_CASE("evaluate_representation") {
  Rng rng(12);
  Labels truth;
  const Matrix x = blobs(rng, {{0, 0}, {2, 0}, {0, 2}}, 15, 1.0, &truth);

  const auto single = evaluate_representation(x, truth, 3, 1, 99);
  const auto direct = kmeans(x, 3, {}, Rng::derive(99, 0));
  CHECK(single.labels == direct.labels);
  CHECK(single.acc == clustering_accuracy(truth, direct.labels));
  CHECK(single.nmi == nmi(truth, direct.labels));
  CHECK(single.ari == ari(truth, direct.labels));

  const auto a = evaluate_representation(x, truth, 3, 10, 7);
  const auto b = evaluate_representation(x, truth, 3, 10, 7);
  CHECK(a.acc == b.acc);
  CHECK(a.nmi == b.nmi);
  CHECK(a.ari == b.ari);
  CHECK(a.labels == b.labels);
  CHECK_THROWS_AS(evaluate_representation(x, Labels{0, 1}, 3), InvalidArgument);
}

TEST_CASE("ablation_eval covers every representation") {
  SyntheticSpec spec;
  spec.n_samples = 60;
  spec.view_dims = {5, 7};
  spec.latent_dim = 4;
  const auto ds = generate_synthetic(spec);
  ModelDims dims;
  dims.view_dims = {5, 7};
  dims.n_samples = 60;
  dims.latent_dim = 3;
  dims.consistent_dim = 3;
  dims.n_clusters = 3;
  dims.hidden = {8};
  dims.head_hidden = {4};
  const auto model = init_model(dims, 0);
  const auto table = ablation_eval(model, ds, 3, 2, 0);
  REQUIRE(table.size() == 5);
  CHECK(table[0].first == "X^(1)");
  CHECK(table[1].first == "X^(2)");
  CHECK(table[2].first == "Z^(1)");
  CHECK(table[3].first == "Z^(2)");
  CHECK(table[4].first == "Z");
  for (const auto& [name, r] : table) {
    CHECK(r.labels.size() == 60);
    CHECK(r.acc >= 0.0);
    CHECK(r.acc <= 1.0);
  }
  const MultiViewDataset unlabeled(ds.views());
  CHECK_THROWS_AS(ablation_eval(model, unlabeled, 3), DataError);
}
