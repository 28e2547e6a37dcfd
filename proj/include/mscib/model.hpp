#pragma once

#include <cstdint>
#include <vector>

#include "mscib/archive.hpp"
#include "mscib/dataset.hpp"
#include "mscib/network.hpp"

namespace mscib {

/// Architecture of an MSCIB model. Hidden widths are shared by every view.
struct ModelDims {
  std::vector<Eigen::Index> view_dims;
  Eigen::Index n_samples = 0;
  Eigen::Index latent_dim = 64;      // d, width of each within-view code
  Eigen::Index consistent_dim = 64;  // d_c, width of the consistent representation Z
  int n_clusters = 0;                // K
  std::vector<Eigen::Index> hidden{256, 256};   // encoders and decoders
  std::vector<Eigen::Index> head_hidden{64};    // semantic heads and fusion net
};

constexpr double kLogvarClamp = 10.0;

/// Variational encoder: separate mean and log-variance heads.
struct ViewEncoder {
  Mlp mu_net;
  Mlp logvar_net;
};

/// Everything owned by one view.
struct ViewBranch {
  ViewEncoder encoder;
  Mlp decoder;
  Mlp semantic_head;
};

/// Per-view encoders/decoders/semantic heads, the fusion network, the
/// consistent semantic head and the trainable consistent matrix Z.
///
/// The same type doubles as the gradient container (see zeros_like).
struct MscibModel {
  std::vector<ViewBranch> views;
  Mlp fusion;
  Mlp consistent_head;
  Matrix z;

  std::size_t n_views() const noexcept { return views.size(); }
  Eigen::Index latent_dim() const { return fusion.in_dim(); }
  Eigen::Index consistent_dim() const { return z.cols(); }
  int n_clusters() const { return static_cast<int>(consistent_head.out_dim()); }
  Eigen::Index n_samples() const { return z.rows(); }
  Eigen::Index view_dim(std::size_t m) const { return views.at(m).encoder.mu_net.in_dim(); }

  MscibModel zeros_like() const;

  /// Every parameter tensor with a stable dotted name; Z is named "z".
  std::vector<TensorRef> tensors();
  /// Encoder and decoder tensors only (the pretraining set).
  std::vector<TensorRef> autoencoder_tensors();

  void write(Archive& archive, const std::string& prefix = "model") const;
  static MscibModel read(const Archive& archive, const std::string& prefix = "model");

  friend bool operator==(const MscibModel& a, const MscibModel& b);
};

/// Builds every network with Glorot-uniform weights; Z ~ 0.01 * N(0, I).
MscibModel init_model(const ModelDims& dims, std::uint64_t seed);

struct ViewEncoding {
  Matrix mu;
  Matrix sigma;
  Matrix z;
  Matrix epsilon;
};

struct EncoderCache {
  MlpCache mu;
  MlpCache logvar;
  Matrix logvar_raw;
};

/// mu = mu_net(x), sigma = exp(clamp(logvar_net(x)) / 2), z = mu + sigma * eps.
/// With `rng == nullptr` eps = 0 and z = mu (deterministic evaluation).
ViewEncoding encode_view(const MscibModel& model, std::size_t m, const Matrix& x, Rng* rng,
                         EncoderCache* cache = nullptr);

Matrix decode_view(const MscibModel& model, std::size_t m, const Matrix& z_m,
                   MlpCache* cache = nullptr);

/// Selects which semantic head to apply.
struct Head {
  static Head view(std::size_t m) { return {m, false}; }
  static Head consistent() { return {0, true}; }
  std::size_t index = 0;
  bool is_consistent = false;
};

/// Row-stochastic soft assignments, batch x K.
Matrix semantic_labels(const MscibModel& model, Head head, const Matrix& input,
                       MlpCache* cache = nullptr);

/// f_con(z_m + gamma_scale * gamma) with gamma ~ N(0, I). A zero scale or a null
/// rng gives the noiseless prediction.
Matrix fuse_predict(const MscibModel& model, const Matrix& z_m, double gamma_scale, Rng* rng,
                    MlpCache* cache = nullptr);

/// Deterministic (posterior mean) within-view representation for every sample.
Matrix view_embedding(const MscibModel& model, std::size_t m, const Matrix& x);

}  // namespace mscib
