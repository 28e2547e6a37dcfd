#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mscib/dataset.hpp"
#include "mscib/model.hpp"

namespace mscib {

struct LossConfig {
  double lambda1 = 1.0;      // weight of the information-bottleneck term
  double lambda2 = 1.0;      // weight of the semantic-consistency term
  double beta = 1e-3;        // KL trade-off inside the bottleneck term
  double tau = 1.0;          // contrastive temperature
  double gamma_scale = 0.1;  // additive noise scale before the fusion net

  /// Throws ConfigError on negative weights, non-positive tau or non-finite values.
  void validate() const;
};

struct LossBreakdown {
  double rec = 0.0;
  double ib = 0.0;
  double sem = 0.0;  // includes reg
  double reg = 0.0;
  double total = 0.0;
};

constexpr double kNormFloor = 1e-12;

// ---------------------------------------------------------------------------
// Individual terms. The *_grad variants return the value together with the
// gradient with respect to every matrix argument.

double reconstruction_loss(std::span<const Matrix> x, std::span<const Matrix> x_hat);
/// Gradient with respect to each x_hat.
std::vector<Matrix> reconstruction_loss_grad(std::span<const Matrix> x,
                                             std::span<const Matrix> x_hat);

/// Mean over rows of KL(N(mu, sigma^2) || N(0, I)).
double gaussian_kl(const Matrix& mu, const Matrix& sigma);

struct KlGrad {
  double value;
  Matrix d_mu;
  Matrix d_sigma;
};
KlGrad gaussian_kl_grad(const Matrix& mu, const Matrix& sigma);

/// Cosine similarity with both norms floored at kNormFloor.
double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

struct PairGrad {
  double value;
  Matrix d_first;
  Matrix d_second;
};

/// Cluster-level contrast between two views' assignment matrices (columns are
/// the contrasted vectors). Requires K >= 2.
double pair_contrastive(const Matrix& q_m, const Matrix& q_n, double tau);
PairGrad pair_contrastive_grad(const Matrix& q_m, const Matrix& q_n, double tau);

/// Contrast between a view's assignments and the consistent assignments, with
/// the single-view denominator sum_k exp(d(q_c_j, q_m_k)/tau) - exp(1/tau).
/// Throws NumericError when that denominator is not positive.
double consistent_contrastive(const Matrix& q_m, const Matrix& q_c, double tau);
PairGrad consistent_contrastive_grad(const Matrix& q_m, const Matrix& q_c, double tau);

/// sum_m sum_j p_j log p_j over the column means p of each Q.
double entropy_regularizer(std::span<const Matrix> q);
std::vector<Matrix> entropy_regularizer_grad(std::span<const Matrix> q);

struct SemanticGrad {
  double value;
  double reg;
  std::vector<Matrix> d_views;
  Matrix d_consistent;
};

/// 1/2 * sum_m (sum_{n != m} pair(m, n) + consistent(m, c)) + entropy regularizer.
double semantic_loss(std::span<const Matrix> q_views, const Matrix& q_c, double tau);
/// The flags switch off the pair, consistent and regularizer parts respectively.
SemanticGrad semantic_loss_grad(std::span<const Matrix> q_views, const Matrix& q_c, double tau,
                                bool pair = true, bool consistent = true, bool reg = true);

// ---------------------------------------------------------------------------
// Model-level losses

/// Minibatch: per-view rows plus the global sample indices used for Z lookups.
struct BatchData {
  std::vector<Matrix> x;
  Batch indices;
};

BatchData make_batch(const MultiViewDataset& ds, const Batch& indices);
BatchData full_batch(const MultiViewDataset& ds);

/// Switches individual terms off; used by the gradient checks to isolate terms.
struct TermMask {
  bool rec = true;
  bool ib_fit = true;   // 1/2 ||Z_i - f_con(z_i + noise)||^2
  bool ib_kl = true;    // beta * KL
  bool pair = true;
  bool consistent = true;
  bool reg = true;
};

struct LossOptions {
  TermMask terms;
  /// Receives the ReLU/clamp branch signature of the forward pass when set.
  std::vector<std::uint8_t>* kink_pattern = nullptr;
};

/// rec + lambda1 * ib + lambda2 * sem on one shared forward pass. Noise draws
/// (eps per view, then gamma per view) come from `rng`; a null rng evaluates
/// with eps = gamma = 0. When `grad` is non-null it must be shaped like
/// `model` and receives the accumulated gradient of `total`.
LossBreakdown total_loss(const MscibModel& model, const BatchData& batch, const LossConfig& config,
                         Rng* rng, MscibModel* grad = nullptr, const LossOptions& options = {});

/// The information-bottleneck term alone on a fresh forward pass.
double ib_loss(const MscibModel& model, const BatchData& batch, const LossConfig& config, Rng* rng);

}  // namespace mscib
