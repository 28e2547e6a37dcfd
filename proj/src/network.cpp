#include "mscib/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mscib/error.hpp"

namespace mscib {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSoftmaxRows: return "softmax";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "softmax") return Activation::kSoftmaxRows;
  throw InvalidArgument("unknown activation '" + name + "'");
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

namespace {

Matrix activate(const Matrix& pre, Activation a) {
  switch (a) {
    case Activation::kIdentity: return pre;
    case Activation::kRelu: return pre.cwiseMax(0.0);
    case Activation::kSoftmaxRows: return softmax_rows(pre);
  }
  return pre;
}

Matrix activation_backward(const Matrix& pre, const Matrix& out, const Matrix& grad_out,
                           Activation a) {
  switch (a) {
    case Activation::kIdentity: return grad_out;
    case Activation::kRelu: return (pre.array() > 0.0).select(grad_out, 0.0);
    case Activation::kSoftmaxRows: {
      const Eigen::VectorXd dot = (grad_out.array() * out.array()).rowwise().sum();
      return out.array() * (grad_out.colwise() - dot).array();
    }
  }
  return grad_out;
}

}  // namespace

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("Mlp needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols())
      throw InvalidArgument("Mlp layer " + std::to_string(l) + ": bias must be 1 x out_dim");
    if (l > 0 && layers_[l - 1].weight.cols() != layer.weight.rows())
      throw InvalidArgument("Mlp layer " + std::to_string(l) + ": dimensions do not chain");
  }
}

Mlp Mlp::create(std::span<const Eigen::Index> widths, Activation hidden, Activation output,
                Rng& rng) {
  if (widths.size() < 2) throw InvalidArgument("Mlp::create needs at least input and output width");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Eigen::Index fan_in = widths[l];
    const Eigen::Index fan_out = widths[l + 1];
    if (fan_in < 1 || fan_out < 1) throw InvalidArgument("Mlp::create: widths must be >= 1");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Layer layer;
    layer.weight.resize(fan_in, fan_out);
    for (Eigen::Index i = 0; i < fan_in; ++i)
      for (Eigen::Index j = 0; j < fan_out; ++j) layer.weight(i, j) = rng.uniform(-limit, limit);
    layer.bias = Matrix::Zero(1, fan_out);
    layer.activation = (l + 2 == widths.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

Eigen::Index Mlp::in_dim() const { return layers_.front().weight.rows(); }
Eigen::Index Mlp::out_dim() const { return layers_.back().weight.cols(); }

Matrix Mlp::forward(const Matrix& x) const {
  MlpCache unused;
  return forward(x, unused);
}

Matrix Mlp::forward(const Matrix& x, MlpCache& cache) const {
  if (x.cols() != in_dim())
    throw InvalidArgument("Mlp::forward: input width " + std::to_string(x.cols()) +
                          " != expected " + std::to_string(in_dim()));
  cache.inputs.clear();
  cache.pre.clear();
  cache.outputs.clear();
  Matrix h = x;
  for (const auto& layer : layers_) {
    cache.inputs.push_back(h);
    Matrix pre = h * layer.weight;
    pre.rowwise() += layer.bias.row(0);
    h = activate(pre, layer.activation);
    cache.pre.push_back(std::move(pre));
    cache.outputs.push_back(h);
  }
  return h;
}

Matrix Mlp::backward(const MlpCache& cache, const Matrix& grad_out, Mlp& grad) const {
  Matrix g = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Matrix dpre = activation_backward(cache.pre[l], cache.outputs[l], g, layer.activation);
    grad.layers_[l].weight.noalias() += cache.inputs[l].transpose() * dpre;
    grad.layers_[l].bias += dpre.colwise().sum();
    g = dpre * layer.weight.transpose();
  }
  return g;
}

Mlp Mlp::zeros_like() const {
  Mlp z = *this;
  for (auto& layer : z.layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  return z;
}

void Mlp::collect(const std::string& prefix, std::vector<TensorRef>& out) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    out.push_back({base + ".weight", &layers_[l].weight});
    out.push_back({base + ".bias", &layers_[l].bias});
  }
}

void Mlp::append_kink_pattern(const MlpCache& cache, const Mlp& net,
                              std::vector<std::uint8_t>& pattern) {
  for (std::size_t l = 0; l < net.layers_.size() && l < cache.pre.size(); ++l) {
    if (net.layers_[l].activation != Activation::kRelu) continue;
    const Matrix& pre = cache.pre[l];
    for (Eigen::Index k = 0; k < pre.size(); ++k) pattern.push_back(pre.data()[k] > 0.0 ? 1 : 0);
  }
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const auto& x = a.layers_[l];
    const auto& y = b.layers_[l];
    if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
        x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias)
      return false;
  }
  return true;
}

ValueGrad half_squared_norm(const Matrix& x) { return {0.5 * x.squaredNorm(), x}; }

// ---------------------------------------------------------------------------

AdamState AdamState::for_params(std::span<const TensorRef> params, AdamOptions options) {
  AdamState s;
  s.options = options;
  for (const auto& p : params) {
    s.names.push_back(p.name);
    s.first_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    s.second_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  return s;
}

void adam_step(AdamState& state, std::span<const ParamGrad> updates) {
  if (updates.size() != state.first_moment.size())
    throw InvalidArgument("adam_step: " + std::to_string(updates.size()) +
                          " tensors given, state tracks " +
                          std::to_string(state.first_moment.size()));
  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);

  for (std::size_t k = 0; k < updates.size(); ++k) {
    const auto& u = updates[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    if (u.param->rows() != u.grad->rows() || u.param->cols() != u.grad->cols() ||
        m.rows() != u.param->rows() || m.cols() != u.param->cols())
      throw InvalidArgument("adam_step: shape mismatch for tensor '" + state.names[k] + "'");
    if (u.rows == nullptr) {
      const Matrix& g = *u.grad;
      m = o.beta1 * m + (1.0 - o.beta1) * g;
      v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
      u.param->array() -= o.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + o.eps);
      continue;
    }
    for (Eigen::Index r : *u.rows) {
      Eigen::RowVectorXd mr = m.row(r);
      Eigen::RowVectorXd vr = v.row(r);
      Eigen::RowVectorXd pr = u.param->row(r);
      const Eigen::RowVectorXd gr = u.grad->row(r);
      mr = o.beta1 * mr + (1.0 - o.beta1) * gr;
      vr = o.beta2 * vr + (1.0 - o.beta2) * gr.cwiseProduct(gr);
      pr.array() -= o.lr * (mr.array() / bc1) / ((vr.array() / bc2).sqrt() + o.eps);
      m.row(r) = mr;
      v.row(r) = vr;
      u.param->row(r) = pr;
    }
  }
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double GradientReport::max_rel_error() const {
  double e = 0.0;
  for (const auto& t : tensors) e = std::max(e, t.max_rel_error);
  return e;
}

std::size_t GradientReport::excluded() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.excluded;
  return n;
}

GradientReport check_gradients(const Objective& objective, std::span<const TensorRef> params,
                               std::span<const Matrix> analytic, double h, double tol,
                               std::size_t max_coords, std::uint64_t seed) {
  if (params.size() != analytic.size())
    throw InvalidArgument("check_gradients: one analytic gradient per tensor required");
  GradientReport report;
  report.tolerance = tol;
  const Probe base = objective();
  Rng rng(seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k].value;
    const Matrix& a = analytic[k];
    if (a.rows() != p.rows() || a.cols() != p.cols())
      throw InvalidArgument("check_gradients: gradient shape mismatch for '" + params[k].name + "'");
    TensorCheck check{params[k].name};
    const auto size = static_cast<std::size_t>(p.size());
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (size > max_coords) {
      for (std::size_t i = 0; i < max_coords; ++i)
        std::swap(coords[i], coords[i + rng.below(size - i)]);
      coords.resize(max_coords);
    }
    for (std::size_t c : coords) {
      double& x = p.data()[c];
      const double saved = x;
      x = saved + h;
      const Probe plus = objective();
      x = saved - h;
      const Probe minus = objective();
      x = saved;
      if (plus.pattern != base.pattern || minus.pattern != base.pattern) {
        ++check.excluded;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * h);
      const double err = relative_error(a.data()[c], numeric);
      ++check.checked;
      check.max_rel_error = std::max(check.max_rel_error, err);
      if (!(err <= tol)) ++check.failed;
    }
    if (check.failed > 0) report.passed = false;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

}  // namespace mscib
