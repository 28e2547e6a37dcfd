#include "mscib/losses.hpp"

#include <cmath>

#include "mscib/error.hpp"

namespace mscib {

void LossConfig::validate() const {
  auto finite_nonneg = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError(std::string("loss.") + name + " must be finite and >= 0");
  };
  finite_nonneg(lambda1, "lambda1");
  finite_nonneg(lambda2, "lambda2");
  finite_nonneg(beta, "beta");
  finite_nonneg(gamma_scale, "gamma_scale");
  if (!std::isfinite(tau) || !(tau > 0.0)) throw ConfigError("loss.tau must be finite and > 0");
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
}

void require_contrastive_args(const Matrix& a, const Matrix& b, double tau, const char* what) {
  require_same_shape(a, b, what);
  if (a.cols() < 2) throw InvalidArgument(std::string(what) + ": needs K >= 2 clusters");
  if (!(tau > 0.0)) throw InvalidArgument(std::string(what) + ": tau must be > 0");
}

struct UnitColumns {
  Matrix u;
  Eigen::RowVectorXd norm;  // raw column norms
};

UnitColumns unit_columns(const Matrix& q) {
  UnitColumns c{Matrix(q.rows(), q.cols()), q.colwise().norm()};
  for (Eigen::Index j = 0; j < q.cols(); ++j) c.u.col(j) = q.col(j) / std::max(c.norm(j), kNormFloor);
  return c;
}

/// Backpropagates through column normalisation.
Matrix unit_columns_backward(const UnitColumns& c, const Matrix& d_u) {
  Matrix d_q(d_u.rows(), d_u.cols());
  for (Eigen::Index j = 0; j < d_u.cols(); ++j) {
    if (c.norm(j) > kNormFloor) {
      const double proj = c.u.col(j).dot(d_u.col(j));
      d_q.col(j) = (d_u.col(j) - proj * c.u.col(j)) / c.norm(j);
    } else {
      d_q.col(j) = d_u.col(j) / kNormFloor;
    }
  }
  return d_q;
}

}  // namespace

// ---------------------------------------------------------------------------

double reconstruction_loss(std::span<const Matrix> x, std::span<const Matrix> x_hat) {
  if (x.size() != x_hat.size()) throw InvalidArgument("reconstruction_loss: view count mismatch");
  double total = 0.0;
  for (std::size_t m = 0; m < x.size(); ++m) {
    require_same_shape(x[m], x_hat[m], "reconstruction_loss");
    if (x[m].rows() == 0) continue;
    total += (x[m] - x_hat[m]).squaredNorm() / static_cast<double>(x[m].rows());
  }
  return total;
}

std::vector<Matrix> reconstruction_loss_grad(std::span<const Matrix> x,
                                             std::span<const Matrix> x_hat) {
  if (x.size() != x_hat.size()) throw InvalidArgument("reconstruction_loss: view count mismatch");
  std::vector<Matrix> grads;
  for (std::size_t m = 0; m < x.size(); ++m) {
    require_same_shape(x[m], x_hat[m], "reconstruction_loss");
    const double n = std::max<double>(1.0, static_cast<double>(x[m].rows()));
    grads.push_back(2.0 * (x_hat[m] - x[m]) / n);
  }
  return grads;
}

double gaussian_kl(const Matrix& mu, const Matrix& sigma) { return gaussian_kl_grad(mu, sigma).value; }

KlGrad gaussian_kl_grad(const Matrix& mu, const Matrix& sigma) {
  require_same_shape(mu, sigma, "gaussian_kl");
  if (sigma.size() > 0 && !(sigma.minCoeff() > 0.0))
    throw InvalidArgument("gaussian_kl: sigma must be positive");
  const double n = std::max<double>(1.0, static_cast<double>(mu.rows()));
  const auto s2 = sigma.array().square();
  const double sum = 0.5 * (mu.array().square() + s2 - 1.0 - 2.0 * sigma.array().log()).sum();
  return {sum / n, mu / n, ((sigma.array() - sigma.array().inverse()) / n).matrix()};
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  return a.dot(b) / (std::max(a.norm(), kNormFloor) * std::max(b.norm(), kNormFloor));
}

// The contrastive terms are evaluated with every exponent shifted by -1/tau
// (cosines are <= 1), which keeps small temperatures from overflowing.

double pair_contrastive(const Matrix& q_m, const Matrix& q_n, double tau) {
  return pair_contrastive_grad(q_m, q_n, tau).value;
}

PairGrad pair_contrastive_grad(const Matrix& q_m, const Matrix& q_n, double tau) {
  require_contrastive_args(q_m, q_n, tau, "pair_contrastive");
  const Eigen::Index k = q_m.cols();
  const double kd = static_cast<double>(k);
  const UnitColumns um = unit_columns(q_m);
  const UnitColumns un = unit_columns(q_n);
  const Matrix s_mm = um.u.transpose() * um.u;
  const Matrix s_mn = um.u.transpose() * un.u;
  const Matrix e_mm = ((s_mm.array() - 1.0) / tau).exp();
  const Matrix e_mn = ((s_mn.array() - 1.0) / tau).exp();
  const Eigen::VectorXd den = e_mm.rowwise().sum() + e_mn.rowwise().sum() - Eigen::VectorXd::Ones(k);

  double value = 0.0;
  Matrix g_mm(k, k), g_mn(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(den(j) > 0.0))
      throw NumericError("pair_contrastive", "non-positive denominator for cluster " + std::to_string(j));
    value -= (s_mn(j, j) - 1.0) / tau - std::log(den(j));
    g_mm.row(j) = e_mm.row(j) / (tau * den(j) * kd);
    g_mn.row(j) = e_mn.row(j) / (tau * den(j) * kd);
    g_mn(j, j) -= 1.0 / (kd * tau);
  }
  value /= kd;
  const Matrix d_um = um.u * (g_mm + g_mm.transpose()) + un.u * g_mn.transpose();
  const Matrix d_un = um.u * g_mn;
  return {value, unit_columns_backward(um, d_um), unit_columns_backward(un, d_un)};
}

double consistent_contrastive(const Matrix& q_m, const Matrix& q_c, double tau) {
  return consistent_contrastive_grad(q_m, q_c, tau).value;
}

PairGrad consistent_contrastive_grad(const Matrix& q_m, const Matrix& q_c, double tau) {
  require_contrastive_args(q_m, q_c, tau, "consistent_contrastive");
  const Eigen::Index k = q_m.cols();
  const double kd = static_cast<double>(k);
  const UnitColumns um = unit_columns(q_m);
  const UnitColumns uc = unit_columns(q_c);
  // s(k, j) = d(q_m_k, q_c_j)
  const Matrix s = um.u.transpose() * uc.u;
  const Matrix e = ((s.array() - 1.0) / tau).exp();
  const Eigen::RowVectorXd den = e.colwise().sum() - Eigen::RowVectorXd::Ones(k);

  double value = 0.0;
  Matrix g(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(den(j) > 0.0))
      throw NumericError("consistent_contrastive",
                         "non-positive denominator for cluster " + std::to_string(j));
    value -= (s(j, j) - 1.0) / tau - std::log(den(j));
    g.col(j) = e.col(j) / (tau * den(j) * kd);
    g(j, j) -= 1.0 / (kd * tau);
  }
  value /= kd;
  return {value, unit_columns_backward(um, uc.u * g.transpose()), unit_columns_backward(uc, um.u * g)};
}

double entropy_regularizer(std::span<const Matrix> q) {
  double total = 0.0;
  for (const auto& qm : q) {
    if (qm.rows() == 0) continue;
    const Eigen::RowVectorXd p = qm.colwise().mean();
    for (Eigen::Index j = 0; j < p.size(); ++j)
      if (p(j) > 0.0) total += p(j) * std::log(p(j));
  }
  return total;
}

std::vector<Matrix> entropy_regularizer_grad(std::span<const Matrix> q) {
  std::vector<Matrix> grads;
  for (const auto& qm : q) {
    Matrix g = Matrix::Zero(qm.rows(), qm.cols());
    if (qm.rows() > 0) {
      const double n = static_cast<double>(qm.rows());
      const Eigen::RowVectorXd p = qm.colwise().mean();
      for (Eigen::Index j = 0; j < p.size(); ++j)
        if (p(j) > 0.0) g.col(j).setConstant((std::log(p(j)) + 1.0) / n);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double semantic_loss(std::span<const Matrix> q_views, const Matrix& q_c, double tau) {
  return semantic_loss_grad(q_views, q_c, tau).value;
}

SemanticGrad semantic_loss_grad(std::span<const Matrix> q_views, const Matrix& q_c, double tau,
                                bool pair, bool consistent, bool reg) {
  SemanticGrad out{0.0, 0.0, {}, Matrix::Zero(q_c.rows(), q_c.cols())};
  for (const auto& q : q_views) {
    require_same_shape(q, q_c, "semantic_loss");
    out.d_views.push_back(Matrix::Zero(q.rows(), q.cols()));
  }
  double contrast = 0.0;
  for (std::size_t m = 0; m < q_views.size(); ++m) {
    for (std::size_t n = 0; pair && n < q_views.size(); ++n) {
      if (n == m) continue;
      auto pg = pair_contrastive_grad(q_views[m], q_views[n], tau);
      contrast += pg.value;
      out.d_views[m] += 0.5 * pg.d_first;
      out.d_views[n] += 0.5 * pg.d_second;
    }
    if (!consistent) continue;
    auto cg = consistent_contrastive_grad(q_views[m], q_c, tau);
    contrast += cg.value;
    out.d_views[m] += 0.5 * cg.d_first;
    out.d_consistent += 0.5 * cg.d_second;
  }
  if (reg) {
    out.reg = entropy_regularizer(q_views);
    const auto reg_grads = entropy_regularizer_grad(q_views);
    for (std::size_t m = 0; m < q_views.size(); ++m) out.d_views[m] += reg_grads[m];
  }
  out.value = 0.5 * contrast + out.reg;
  return out;
}

// ---------------------------------------------------------------------------

BatchData make_batch(const MultiViewDataset& ds, const Batch& indices) {
  BatchData b;
  b.indices = indices;
  for (const auto& v : ds.views()) b.x.push_back(gather_rows(v, indices));
  return b;
}

BatchData full_batch(const MultiViewDataset& ds) {
  BatchData b;
  b.indices.resize(static_cast<std::size_t>(ds.n_samples()));
  for (Eigen::Index i = 0; i < ds.n_samples(); ++i) b.indices[static_cast<std::size_t>(i)] = i;
  b.x = ds.views();
  return b;
}

namespace {

struct ViewPass {
  EncoderCache enc;
  ViewEncoding code;
  MlpCache dec;
  Matrix x_hat;
  MlpCache fuse;
  Matrix z_hat;
  MlpCache sem;
  Matrix q;
};

void ensure_finite(const LossBreakdown& l) {
  const char* term = !std::isfinite(l.rec) ? "rec"
                     : !std::isfinite(l.ib) ? "ib"
                     : !std::isfinite(l.sem) ? "sem"
                     : !std::isfinite(l.total) ? "total"
                                                 : nullptr;
  if (term == nullptr) return;
  throw NumericError(term, "rec=" + std::to_string(l.rec) + " ib=" + std::to_string(l.ib) +
                               " sem=" + std::to_string(l.sem) + " reg=" + std::to_string(l.reg) +
                               " total=" + std::to_string(l.total));
}

void append_clamp_pattern(const Matrix& logvar_raw, std::vector<std::uint8_t>& pattern) {
  for (Eigen::Index k = 0; k < logvar_raw.size(); ++k) {
    const double v = logvar_raw.data()[k];
    pattern.push_back(v > kLogvarClamp ? 2 : (v < -kLogvarClamp ? 0 : 1));
  }
}

}  // namespace

LossBreakdown total_loss(const MscibModel& model, const BatchData& batch, const LossConfig& config,
                         Rng* rng, MscibModel* grad, const LossOptions& options) {
  const std::size_t n_views = model.n_views();
  if (batch.x.size() != n_views)
    throw InvalidArgument("total_loss: batch has " + std::to_string(batch.x.size()) +
                          " views, model has " + std::to_string(n_views));
  const auto& terms = options.terms;
  const Eigen::Index b = static_cast<Eigen::Index>(batch.indices.size());
  for (const auto& x : batch.x)
    if (x.rows() != b) throw InvalidArgument("total_loss: view rows do not match batch indices");
  for (auto i : batch.indices)
    if (i < 0 || i >= model.z.rows())
      throw InvalidArgument("total_loss: sample index " + std::to_string(i) + " out of range for Z");
  const double inv_b = 1.0 / std::max<double>(1.0, static_cast<double>(b));

  const bool need_ib = terms.ib_fit || terms.ib_kl;
  const bool need_sem = terms.pair || terms.consistent || terms.reg;

  // Forward.
  std::vector<ViewPass> passes(n_views);
  for (std::size_t m = 0; m < n_views; ++m)
    passes[m].code = encode_view(model, m, batch.x[m], rng, &passes[m].enc);
  const Matrix z_rows = gather_rows(model.z, batch.indices);

  LossBreakdown out;
  std::vector<Matrix> x_hat(n_views);
  for (std::size_t m = 0; m < n_views; ++m) {
    passes[m].x_hat = decode_view(model, m, passes[m].code.z, &passes[m].dec);
    x_hat[m] = passes[m].x_hat;
  }
  if (terms.rec) out.rec = reconstruction_loss(batch.x, x_hat);

  double ib_fit = 0.0;
  double ib_kl = 0.0;
  if (need_ib) {
    for (std::size_t m = 0; m < n_views; ++m) {
      auto& p = passes[m];
      p.z_hat = fuse_predict(model, p.code.z, config.gamma_scale, rng, &p.fuse);
      if (terms.ib_fit) ib_fit += 0.5 * (z_rows - p.z_hat).squaredNorm() * inv_b;
      if (terms.ib_kl) ib_kl += gaussian_kl(p.code.mu, p.code.sigma);
    }
    out.ib = ib_fit + config.beta * ib_kl;
  }

  Matrix q_c;
  MlpCache q_c_cache;
  SemanticGrad sem_grad;
  std::vector<Matrix> q_views;
  if (need_sem) {
    for (std::size_t m = 0; m < n_views; ++m) {
      passes[m].q = semantic_labels(model, Head::view(m), passes[m].code.z, &passes[m].sem);
      q_views.push_back(passes[m].q);
    }
    q_c = semantic_labels(model, Head::consistent(), z_rows, &q_c_cache);
    sem_grad = semantic_loss_grad(q_views, q_c, config.tau, terms.pair, terms.consistent, terms.reg);
    out.reg = sem_grad.reg;
    out.sem = sem_grad.value;
  }

  out.total = out.rec + config.lambda1 * out.ib + config.lambda2 * out.sem;
  ensure_finite(out);

  if (options.kink_pattern) {
    auto& pattern = *options.kink_pattern;
    pattern.clear();
    for (std::size_t m = 0; m < n_views; ++m) {
      const auto& p = passes[m];
      const auto& v = model.views[m];
      Mlp::append_kink_pattern(p.enc.mu, v.encoder.mu_net, pattern);
      Mlp::append_kink_pattern(p.enc.logvar, v.encoder.logvar_net, pattern);
      append_clamp_pattern(p.enc.logvar_raw, pattern);
      Mlp::append_kink_pattern(p.dec, v.decoder, pattern);
      if (need_ib) Mlp::append_kink_pattern(p.fuse, model.fusion, pattern);
      if (need_sem) Mlp::append_kink_pattern(p.sem, v.semantic_head, pattern);
    }
    if (need_sem) Mlp::append_kink_pattern(q_c_cache, model.consistent_head, pattern);
  }

  if (grad == nullptr) return out;

  // Backward.
  const double w_ib = config.lambda1;
  const double w_sem = config.lambda2;
  Matrix d_z_rows = Matrix::Zero(b, model.z.cols());
  const auto rec_grads = terms.rec ? reconstruction_loss_grad(batch.x, x_hat) : std::vector<Matrix>{};
  for (std::size_t m = 0; m < n_views; ++m) {
    auto& p = passes[m];
    auto& g = grad->views[m];
    const auto& v = model.views[m];
    Matrix d_code = Matrix::Zero(b, p.code.z.cols());
    Matrix d_mu = Matrix::Zero(b, p.code.mu.cols());
    Matrix d_sigma = Matrix::Zero(b, p.code.sigma.cols());

    if (terms.rec) d_code += v.decoder.backward(p.dec, rec_grads[m], g.decoder);
    if (terms.ib_fit && w_ib != 0.0) {
      const Matrix resid = (p.z_hat - z_rows) * inv_b;
      d_z_rows -= w_ib * resid;
      d_code += model.fusion.backward(p.fuse, w_ib * resid, grad->fusion);
    }
    if (terms.ib_kl && w_ib != 0.0 && config.beta != 0.0) {
      const auto kg = gaussian_kl_grad(p.code.mu, p.code.sigma);
      d_mu += w_ib * config.beta * kg.d_mu;
      d_sigma += w_ib * config.beta * kg.d_sigma;
    }
    if (need_sem && w_sem != 0.0)
      d_code += v.semantic_head.backward(p.sem, w_sem * sem_grad.d_views[m], g.semantic_head);

    d_mu += d_code;
    d_sigma += d_code.cwiseProduct(p.code.epsilon);
    // sigma = exp(clamp(lv) / 2): zero derivative outside the clamp window.
    const Matrix& lv = p.enc.logvar_raw;
    const Matrix d_lv = (lv.array().abs() < kLogvarClamp)
                            .select(0.5 * d_sigma.array() * p.code.sigma.array(), 0.0);
    v.encoder.mu_net.backward(p.enc.mu, d_mu, g.encoder.mu_net);
    v.encoder.logvar_net.backward(p.enc.logvar, d_lv, g.encoder.logvar_net);
  }
  if (need_sem && w_sem != 0.0)
    d_z_rows += model.consistent_head.backward(q_c_cache, w_sem * sem_grad.d_consistent,
                                               grad->consistent_head);
  for (Eigen::Index r = 0; r < b; ++r) grad->z.row(batch.indices[r]) += d_z_rows.row(r);
  return out;
}

double ib_loss(const MscibModel& model, const BatchData& batch, const LossConfig& config, Rng* rng) {
  LossOptions options;
  options.terms = {false, true, true, false, false, false};
  return total_loss(model, batch, config, rng, nullptr, options).ib;
}

}  // namespace mscib
