#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mscib/error.hpp"
#include "mscib/losses.hpp"

using namespace mscib;

namespace {

// ---------------------------------------------------------------------------
// Straight-line reference implementations (plain loops, no Eigen algebra).

double ref_cos(const Matrix& a, Eigen::Index ja, const Matrix& b, Eigen::Index jb) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    dot += a(i, ja) * b(i, jb);
    na += a(i, ja) * a(i, ja);
    nb += b(i, jb) * b(i, jb);
  }
  return dot / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
}

double ref_pair(const Matrix& qm, const Matrix& qn, double tau) {
  const auto k = qm.cols();
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double num = std::exp(ref_cos(qm, j, qn, j) / tau);
    double den = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      den += std::exp(ref_cos(qm, j, qm, c) / tau);
      den += std::exp(ref_cos(qm, j, qn, c) / tau);
    }
    den -= std::exp(1.0 / tau);
    total += std::log(num / den);
  }
  return -total / static_cast<double>(k);
}

double ref_consistent_den(const Matrix& qm, const Matrix& qc, double tau, Eigen::Index j) {
  double den = 0.0;
  for (Eigen::Index c = 0; c < qm.cols(); ++c) den += std::exp(ref_cos(qc, j, qm, c) / tau);
  return den - std::exp(1.0 / tau);
}

// The single-view denominator can be <= 0; callers check ref_consistent_ok first.
bool ref_consistent_ok(const Matrix& qm, const Matrix& qc, double tau) {
  for (Eigen::Index j = 0; j < qm.cols(); ++j)
    if (!(ref_consistent_den(qm, qc, tau, j) > 0.0)) return false;
  return true;
}

double ref_consistent(const Matrix& qm, const Matrix& qc, double tau) {
  const auto k = qm.cols();
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double num = std::exp(ref_cos(qm, j, qc, j) / tau);
    total += std::log(num / ref_consistent_den(qm, qc, tau, j));
  }
  return -total / static_cast<double>(k);
}

double ref_reg(const std::vector<Matrix>& qs) {
  double total = 0.0;
  for (const auto& q : qs)
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      double p = 0.0;
      for (Eigen::Index i = 0; i < q.rows(); ++i) p += q(i, j);
      p /= static_cast<double>(q.rows());
      if (p > 0.0) total += p * std::log(p);
    }
  return total;
}

double ref_semantic(const std::vector<Matrix>& qs, const Matrix& qc, double tau) {
  double s = 0.0;
  for (std::size_t m = 0; m < qs.size(); ++m) {
    for (std::size_t n = 0; n < qs.size(); ++n)
      if (n != m) s += ref_pair(qs[m], qs[n], tau);
    s += ref_consistent(qs[m], qc, tau);
  }
  return 0.5 * s + ref_reg(qs);
}

// Loop forward pass of an Mlp, independent of the Eigen implementation.
std::vector<double> ref_forward(const Mlp& net, std::vector<double> v) {
  for (const auto& layer : net.layers()) {
    std::vector<double> out(static_cast<std::size_t>(layer.weight.cols()));
    for (Eigen::Index o = 0; o < layer.weight.cols(); ++o) {
      double s = layer.bias(0, o);
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) s += v[i] * layer.weight(i, o);
      out[o] = s;
    }
    if (layer.activation == Activation::kRelu)
      for (auto& x : out) x = std::max(0.0, x);
    v = out;
  }
  return v;
}

Matrix random_stochastic(Rng& rng, Eigen::Index n, Eigen::Index k, double spread = 2.0) {
  return softmax_rows(spread * rng.normal_matrix(n, k));
}

ModelDims tiny_dims(Eigen::Index d = 4, Eigen::Index dc = 4) {
  ModelDims dims;
  dims.view_dims = {5, 3};
  dims.n_samples = 6;
  dims.latent_dim = d;
  dims.consistent_dim = dc;
  dims.n_clusters = 3;
  dims.hidden = {6};
  dims.head_hidden = {5};
  return dims;
}

BatchData random_batch(const MscibModel& model, Rng& rng, Batch indices) {
  BatchData b;
  b.indices = std::move(indices);
  for (std::size_t m = 0; m < model.n_views(); ++m)
    b.x.push_back(rng.normal_matrix(static_cast<Eigen::Index>(b.indices.size()), model.view_dim(m)));
  return b;
}

Matrix column(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m.transpose();
}

}  // namespace

TEST_CASE("loss config validation") {
  LossConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda2 = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.beta = std::nan("");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("reconstruction loss") {
  Matrix x(1, 2), xh(1, 2);
  x << 1.0, 0.0;
  xh << 0.0, 0.0;
  CHECK(reconstruction_loss(std::vector{x}, std::vector{xh}) == 1.0);
  CHECK(reconstruction_loss(std::vector{x, xh}, std::vector{x, xh}) == 0.0);

  Rng rng(1);
  const Matrix a = rng.normal_matrix(5, 3), b = rng.normal_matrix(5, 3);
  Matrix a2(10, 3), b2(10, 3);
  a2 << a, a;
  b2 << b, b;
  CHECK(reconstruction_loss(std::vector{a2}, std::vector{b2}) ==
        doctest::Approx(reconstruction_loss(std::vector{a}, std::vector{b})).epsilon(1e-14));
  CHECK_THROWS_AS(reconstruction_loss(std::vector{a}, std::vector{x}), InvalidArgument);
}

TEST_CASE("gaussian kl closed form") {
  CHECK(gaussian_kl(Matrix::Zero(3, 4), Matrix::Ones(3, 4)) == 0.0);
  CHECK(gaussian_kl(Matrix::Ones(1, 1), Matrix::Ones(1, 1)) == 0.5);
  CHECK_THROWS_AS(gaussian_kl(Matrix::Zero(1, 1), Matrix::Zero(1, 1)), InvalidArgument);
}

TEST_CASE("gaussian kl matches a Monte-Carlo estimate") {
  Rng rng(2024);
  for (int trial = 0; trial < 3; ++trial) {
    const Matrix mu = rng.normal_matrix(1, 3);
    const Matrix sigma = (0.5 * rng.normal_matrix(1, 3)).array().exp().matrix();
    const double kl = gaussian_kl(mu, sigma);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < n; ++s) {
      double log_ratio = 0.0;
      for (Eigen::Index j = 0; j < 3; ++j) {
        const double e = rng.normal();
        const double z = mu(0, j) + sigma(0, j) * e;
        // log p(z) - log q(z), shared 2*pi constants cancel.
        log_ratio += -0.5 * e * e - std::log(sigma(0, j)) + 0.5 * z * z;
      }
      sum += log_ratio;
      sum_sq += log_ratio * log_ratio;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq / n - mean * mean) / n);
    CHECK(std::abs(mean - kl) <= 3.0 * se);
  }
}

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity(column({1, 0}), column({1, 0})) == 1.0);
  CHECK(cosine_similarity(column({1, 0}), column({0, 1})) == 0.0);
  CHECK(cosine_similarity(column({1, 2}), column({2, 4})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(column({0, 0}), column({1, 1})) == 0.0);
}

TEST_CASE("pair contrastive examples") {
  const Matrix eye = Matrix::Identity(2, 2);
  const double expected = -std::log(std::numbers::e / (std::numbers::e + 2.0));
  CHECK(pair_contrastive(eye, eye, 1.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));
  CHECK_THROWS_AS(pair_contrastive(Matrix::Ones(3, 1), Matrix::Ones(3, 1), 1.0), InvalidArgument);
}

TEST_CASE("consistent contrastive examples") {
  const Matrix eye = Matrix::Identity(2, 2);
  CHECK(consistent_contrastive(eye, eye, 1.0) == doctest::Approx(-1.0).epsilon(1e-14));

  // Every column orthogonal to every other column: each cosine is 0, so the
  // numerator is 1 and the denominator K - e^{1/tau}.
  Matrix qm = Matrix::Zero(8, 4), qc = Matrix::Zero(8, 4);
  for (Eigen::Index j = 0; j < 4; ++j) {
    qm(j, j) = 1.0;
    qc(4 + j, j) = 1.0;
  }
  const double orth = std::log(4.0 - std::numbers::e);
  CHECK(consistent_contrastive(qm, qc, 1.0) == doctest::Approx(orth).epsilon(1e-14));
  CHECK(ref_consistent(qm, qc, 1.0) == doctest::Approx(orth).epsilon(1e-14));

  // Large temperature: all exponentials tend to one.
  Rng rng(6);
  const Matrix a = random_stochastic(rng, 7, 4), c = random_stochastic(rng, 7, 4);
  CHECK(consistent_contrastive(a, c, 1e6) == doctest::Approx(std::log(3.0)).epsilon(1e-5));

  // K = 2 with orthogonal columns leaves a non-positive denominator.
  Matrix q2 = Matrix::Zero(4, 2), c2 = Matrix::Zero(4, 2);
  q2(0, 0) = q2(1, 1) = 1.0;
  c2(2, 0) = c2(3, 1) = 1.0;
  CHECK_THROWS_AS(consistent_contrastive(q2, c2, 1.0), NumericError);
}

TEST_CASE("contrastive terms match the loop reference") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 2 + static_cast<Eigen::Index>(rng.below(8));
    const auto k = 3 + static_cast<Eigen::Index>(rng.below(4));
    const double tau = rng.uniform(0.3, 2.0);
    const Matrix a = random_stochastic(rng, n, k), b = random_stochastic(rng, n, k);
    CHECK(pair_contrastive(a, b, tau) == doctest::Approx(ref_pair(a, b, tau)).epsilon(1e-12));
    if (ref_consistent_ok(a, b, tau))
      CHECK(consistent_contrastive(a, b, tau) ==
            doctest::Approx(ref_consistent(a, b, tau)).epsilon(1e-12));
    else
      CHECK_THROWS_AS(consistent_contrastive(a, b, tau), NumericError);
  }
}

TEST_CASE("entropy regularizer") {
  const Matrix uniform = Matrix::Constant(5, 4, 0.25);
  CHECK(entropy_regularizer(std::vector{uniform, uniform, uniform}) ==
        doctest::Approx(-3.0 * std::log(4.0)).epsilon(1e-14));
  Matrix onehot = Matrix::Zero(5, 4);
  onehot.col(2).setOnes();
  CHECK(entropy_regularizer(std::vector{onehot, onehot}) == 0.0);
}

TEST_CASE("semantic loss") {
  Rng rng(31);
  SUBCASE("matches the loop reference") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Matrix> qs;
      const auto m = 1 + rng.below(3);
      for (std::size_t v = 0; v < m; ++v) qs.push_back(random_stochastic(rng, 6, 3));
      const Matrix qc = random_stochastic(rng, 6, 3);
      bool ok = true;
      for (const auto& q : qs) ok = ok && ref_consistent_ok(q, qc, 0.7);
      if (!ok) {
        CHECK_THROWS_AS(semantic_loss(qs, qc, 0.7), NumericError);
        continue;
      }
      CHECK(semantic_loss(qs, qc, 0.7) == doctest::Approx(ref_semantic(qs, qc, 0.7)).epsilon(1e-12));
    }
  }
  SUBCASE("two views average both pair directions") {
    const Matrix a = random_stochastic(rng, 6, 3), b = random_stochastic(rng, 6, 3);
    const Matrix c = random_stochastic(rng, 6, 3);
    const double expected = 0.5 * (pair_contrastive(a, b, 1.0) + pair_contrastive(b, a, 1.0) +
                                   consistent_contrastive(a, c, 1.0) + consistent_contrastive(b, c, 1.0)) +
                            entropy_regularizer(std::vector{a, b});
    CHECK(semantic_loss(std::vector{a, b}, c, 1.0) == doctest::Approx(expected).epsilon(1e-13));
  }
  SUBCASE("one view keeps only the consistent and regulariser parts") {
    const Matrix a = random_stochastic(rng, 6, 3), c = random_stochastic(rng, 6, 3);
    CHECK(semantic_loss(std::vector{a}, c, 1.0) ==
          doctest::Approx(0.5 * consistent_contrastive(a, c, 1.0) + entropy_regularizer(std::vector{a}))
              .epsilon(1e-13));
  }
}

TEST_CASE("property: loss invariants over random instances") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 2 + static_cast<Eigen::Index>(rng.below(10));
    const auto k = 2 + static_cast<Eigen::Index>(rng.below(5));
    const double tau = rng.uniform(0.2, 3.0);
    const Matrix a = random_stochastic(rng, n, k, 3.0), b = random_stochastic(rng, n, k, 3.0);

    const double pair = pair_contrastive(a, b, tau);
    CHECK(pair >= -1e-12);

    Matrix scaled = a;
    for (Eigen::Index j = 0; j < k; ++j) scaled.col(j) *= rng.uniform(0.1, 10.0);
    CHECK(pair_contrastive(scaled, b, tau) == doctest::Approx(pair).epsilon(1e-10));
    CHECK(pair_contrastive(3.0 * a, b, tau) == doctest::Approx(pair).epsilon(1e-10));
    if (ref_consistent_ok(a, b, tau)) {
      const double cons = consistent_contrastive(a, b, tau);
      CHECK(consistent_contrastive(scaled, b, tau) == doctest::Approx(cons).epsilon(1e-10));
    }

    const double reg = entropy_regularizer(std::vector{a, b});
    CHECK(reg <= 1e-15);
    CHECK(reg >= -2.0 * std::log(static_cast<double>(k)) - 1e-12);

    const Matrix mu = rng.normal_matrix(n, 3);
    const Matrix sigma = (rng.normal_matrix(n, 3)).array().exp().matrix();
    CHECK(gaussian_kl(mu, sigma) >= 0.0);
  }
}

TEST_CASE("ib loss matches a loop reference") {
  const auto dims = tiny_dims(3, 3);
  auto model = init_model(dims, 17);
  Rng data(5);
  for (auto& v : model.views)
    for (auto& l : v.encoder.logvar_net.layers()) l.bias = 0.3 * data.normal_matrix(1, l.bias.cols());
  const auto batch = random_batch(model, data, {4, 0, 2, 5});
  LossConfig config;
  config.beta = 0.37;
  config.gamma_scale = 0.2;

  const std::uint64_t seed = 123;
  Rng rng(seed);
  const double got = ib_loss(model, batch, config, &rng);

  // Replay the same noise: eps for every view, then gamma for every view.
  Rng replay(seed);
  const auto b = static_cast<Eigen::Index>(batch.indices.size());
  std::vector<Matrix> eps, gamma;
  for (std::size_t m = 0; m < 2; ++m) eps.push_back(replay.normal_matrix(b, 3));
  for (std::size_t m = 0; m < 2; ++m) gamma.push_back(replay.normal_matrix(b, 3));

  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i)
    for (std::size_t m = 0; m < 2; ++m) {
      std::vector<double> x(static_cast<std::size_t>(batch.x[m].cols()));
      for (Eigen::Index c = 0; c < batch.x[m].cols(); ++c) x[c] = batch.x[m](i, c);
      const auto mu = ref_forward(model.views[m].encoder.mu_net, x);
      const auto lv = ref_forward(model.views[m].encoder.logvar_net, x);
      std::vector<double> noisy(3);
      double kl = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        const double s = std::exp(0.5 * std::clamp(lv[j], -10.0, 10.0));
        const double z = mu[j] + s * eps[m](i, j);
        noisy[j] = z + config.gamma_scale * gamma[m](i, j);
        kl += 0.5 * (mu[j] * mu[j] + s * s - 1.0 - 2.0 * std::log(s));
      }
      const auto zhat = ref_forward(model.fusion, noisy);
      double sq = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        const double r = model.z(batch.indices[i], j) - zhat[j];
        sq += r * r;
      }
      total += 0.5 * sq + config.beta * kl;
    }
  CHECK(got == doctest::Approx(total / b).epsilon(1e-12));

  config.beta = 0.0;
  Rng r2(seed);
  LossOptions fit_only;
  fit_only.terms = {false, true, false, false, false, false};
  Rng r3(seed);
  CHECK(ib_loss(model, batch, config, &r2) ==
        total_loss(model, batch, config, &r3, nullptr, fit_only).ib);

  Batch bad{0, 6};
  CHECK_THROWS_AS(ib_loss(model, random_batch(model, data, bad), config, nullptr), InvalidArgument);
}

TEST_CASE("total loss composition") {
  auto model = init_model(tiny_dims(), 3);
  Rng data(7);
  const auto batch = random_batch(model, data, {0, 1, 2, 3, 4, 5});

  SUBCASE("decomposes exactly") {
    LossConfig config;
    config.lambda1 = 0.8;
    config.lambda2 = 2.5;
    Rng rng(1);
    const auto l = total_loss(model, batch, config, &rng);
    CHECK(std::abs(l.total - (l.rec + 0.8 * l.ib + 2.5 * l.sem)) <= 1e-12);
  }
  SUBCASE("zero weights leave the reconstruction") {
    LossConfig config;
    config.lambda1 = config.lambda2 = 0.0;
    Rng rng(1);
    const auto l = total_loss(model, batch, config, &rng);
    CHECK(l.total == l.rec);
  }
  SUBCASE("a perfect model leaves only the semantic part") {
    auto dims = tiny_dims();
    dims.view_dims = {4, 4};
    auto perfect = init_model(dims, 2);
    const Layer identity{Matrix::Identity(4, 4), Matrix::Zero(1, 4), Activation::kIdentity};
    for (auto& v : perfect.views) {
      v.encoder.mu_net = Mlp({identity});
      v.decoder = Mlp({identity});
    }
    perfect.fusion = Mlp({identity});
    BatchData same;
    same.indices = {0, 1, 2, 3, 4, 5};
    const Matrix x = data.normal_matrix(6, 4);
    same.x = {x, x};
    perfect.z = x;
    LossConfig config;
    config.beta = 0.0;
    config.lambda2 = 1.7;
    const auto l = total_loss(perfect, same, config, nullptr);
    CHECK(l.rec == 0.0);
    CHECK(l.ib == 0.0);
    CHECK(l.total == doctest::Approx(1.7 * l.sem).epsilon(1e-15));
  }
  SUBCASE("same rng seed gives the same value") {
    Rng a(4), b(4);
    CHECK(total_loss(model, batch, {}, &a).total == total_loss(model, batch, {}, &b).total);
  }
  SUBCASE("non-finite inputs raise a numeric error naming the breakdown") {
    BatchData bad = batch;
    bad.x[0](0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(total_loss(model, bad, {}, nullptr), NumericError);
  }
}

TEST_CASE("zero lambda2 gives zero semantic-head gradients") {
  auto model = init_model(tiny_dims(), 8);
  Rng data(3);
  const auto batch = random_batch(model, data, {0, 1, 2, 3});
  LossConfig config;
  config.lambda2 = 0.0;
  auto grad = model.zeros_like();
  Rng rng(2);
  total_loss(model, batch, config, &rng, &grad);
  for (const auto& v : grad.views)
    for (const auto& l : v.semantic_head.layers()) CHECK(l.weight.isZero());
  for (const auto& l : grad.consistent_head.layers()) CHECK(l.weight.isZero());
  // Rows of Z outside the batch never receive gradient.
  CHECK(grad.z.row(4).isZero());
  CHECK(grad.z.row(5).isZero());
}

namespace {

GradientReport check_loss_gradient(const TermMask& mask, const LossConfig& config,
                                   std::uint64_t seed) {
  auto model = init_model(tiny_dims(), seed);
  Rng data(seed + 1);
  // Non-zero biases keep ReLUs away from exact zero and exercise the bias paths.
  for (auto t : model.tensors())
    if (t.name.ends_with(".bias")) *t.value = 0.1 * data.normal_matrix(1, t.value->cols());
  model.z *= 30.0;
  const auto batch = random_batch(model, data, {1, 3, 4, 0, 3});

  LossOptions options;
  options.terms = mask;
  auto objective = [&] {
    Probe p;
    options.kink_pattern = &p.pattern;
    Rng rng(77);
    p.value = total_loss(model, batch, config, &rng, nullptr, options).total;
    return p;
  };
  auto grad = model.zeros_like();
  {
    Rng rng(77);
    LossOptions plain;
    plain.terms = mask;
    total_loss(model, batch, config, &rng, &grad, plain);
  }
  const auto params = model.tensors();
  std::vector<Matrix> analytic;
  for (auto t : grad.tensors()) analytic.push_back(*t.value);
  return check_gradients(objective, params, analytic, 1e-5, 1e-4);
}

void report_failures(const GradientReport& r) {
  for (const auto& t : r.tensors)
    if (t.failed > 0) MESSAGE(t.name << " failed " << t.failed << " max rel err " << t.max_rel_error);
}

}  // namespace

TEST_CASE("analytic gradients match finite differences per term") {
  LossConfig config;
  config.lambda1 = 0.9;
  config.lambda2 = 1.3;
  config.beta = 0.2;
  config.tau = 0.8;
  config.gamma_scale = 0.1;

  struct Case {
    const char* name;
    TermMask mask;
  };
  const Case cases[] = {
      {"reconstruction", {true, false, false, false, false, false}},
      {"ib fit", {false, true, false, false, false, false}},
      {"ib kl", {false, false, true, false, false, false}},
      {"pair contrastive", {false, false, false, true, false, false}},
      {"consistent contrastive", {false, false, false, false, true, false}},
      {"entropy regularizer", {false, false, false, false, false, true}},
      {"total", {}},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed : {1u, 2u}) {
      CAPTURE(c.name);
      CAPTURE(seed);
      const auto report = check_loss_gradient(c.mask, config, seed);
      report_failures(report);
      CHECK(report.passed);
      CHECK(report.max_rel_error() <= 1e-4);
    }
  }
}

TEST_CASE("term-level gradients match finite differences") {
  Rng rng(41);
  Matrix a = random_stochastic(rng, 5, 3), b = random_stochastic(rng, 5, 3);
  Matrix c = random_stochastic(rng, 5, 3);
  std::vector<TensorRef> params{{"a", &a}, {"b", &b}, {"c", &c}};

  SUBCASE("semantic") {
    const auto g = semantic_loss_grad(std::vector{a, b}, c, 0.6);
    std::vector<Matrix> analytic{g.d_views[0], g.d_views[1], g.d_consistent};
    auto f = [&] { return Probe{semantic_loss(std::vector{a, b}, c, 0.6), {}}; };
    CHECK(check_gradients(f, params, analytic, 1e-5, 1e-4).passed);
  }
  SUBCASE("kl") {
    Matrix mu = rng.normal_matrix(4, 3);
    Matrix sigma = rng.normal_matrix(4, 3).array().exp().matrix();
    const auto g = gaussian_kl_grad(mu, sigma);
    std::vector<TensorRef> p{{"mu", &mu}, {"sigma", &sigma}};
    std::vector<Matrix> analytic{g.d_mu, g.d_sigma};
    auto f = [&] { return Probe{gaussian_kl(mu, sigma), {}}; };
    CHECK(check_gradients(f, p, analytic, 1e-5, 1e-4).passed);
  }
}
