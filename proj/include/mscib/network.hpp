#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mscib/random.hpp"

namespace mscib {

using Matrix = Eigen::MatrixXd;

enum class Activation { kIdentity, kRelu, kSoftmaxRows };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Affine map followed by an activation. `weight` is in_dim x out_dim; `bias` is 1 x out_dim.
struct Layer {
  Matrix weight;
  Matrix bias;
  Activation activation = Activation::kIdentity;
};

/// A named view of one parameter tensor.
struct TensorRef {
  std::string name;
  Matrix* value;
};

/// Intermediates of one forward pass, consumed by `Mlp::backward`.
struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // affine output of each layer
  std::vector<Matrix> outputs; // activation output of each layer
};

/// Row-wise softmax with max-subtraction.
Matrix softmax_rows(const Matrix& logits);

/// Fully connected network applied row-wise to a batch.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  /// `widths` = {in, hidden..., out}. Hidden layers use `hidden`, the last layer
  /// uses `output`. Weights are Glorot-uniform, biases zero.
  static Mlp create(std::span<const Eigen::Index> widths, Activation hidden, Activation output,
                    Rng& rng);

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t depth() const noexcept { return layers_.size(); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, MlpCache& cache) const;

  /// Accumulates parameter gradients into `grad` (shaped like *this) and returns
  /// the gradient with respect to the input.
  Matrix backward(const MlpCache& cache, const Matrix& grad_out, Mlp& grad) const;

  /// Same architecture, all parameters zero.
  Mlp zeros_like() const;

  void collect(const std::string& prefix, std::vector<TensorRef>& out);

  /// Appends the ReLU on/off pattern of a cached pass to `pattern`.
  static void append_kink_pattern(const MlpCache& cache, const Mlp& net,
                                  std::vector<std::uint8_t>& pattern);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<Layer> layers_;
};

struct ValueGrad {
  double value;
  Matrix grad;
};

/// 1/2 * squared Frobenius norm and its gradient.
ValueGrad half_squared_norm(const Matrix& x);

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::string> names;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  /// Zero moments shaped like `params`.
  static AdamState for_params(std::span<const TensorRef> params, AdamOptions options);
};

/// One parameter/gradient pair. When `rows` is set only those rows are updated
/// (their moments included); the rest of the tensor and its moments are left alone.
struct ParamGrad {
  Matrix* param;
  const Matrix* grad;
  const std::vector<Eigen::Index>* rows = nullptr;
};

/// Bias-corrected Adam update; increments the step counter once.
void adam_step(AdamState& state, std::span<const ParamGrad> updates);

// ---------------------------------------------------------------------------
// Finite-difference verification

/// Objective value plus a signature of its non-differentiable branch choices
/// (ReLU on/off, clamps). A coordinate whose perturbation changes the
/// signature straddles a kink and is excluded from the check.
struct Probe {
  double value = 0.0;
  std::vector<std::uint8_t> pattern;
};

using Objective = std::function<Probe()>;

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::size_t failed = 0;
};

struct GradientReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 0.0;
  bool passed = true;

  double max_rel_error() const;
  std::size_t excluded() const;
};

/// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

/// Central differences (f(x+h) - f(x-h)) / 2h on up to `max_coords` sampled
/// coordinates per tensor (all coordinates when the tensor is smaller). The
/// objective is re-evaluated against the perturbed tensors in place; every
/// tensor is restored exactly afterwards.
GradientReport check_gradients(const Objective& objective, std::span<const TensorRef> params,
                               std::span<const Matrix> analytic, double h, double tol,
                               std::size_t max_coords = 64, std::uint64_t seed = 0);

}  // namespace mscib
