#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mscib {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

/// M feature matrices over the same N samples, plus optional 0-based labels.
///
/// Immutable once constructed; the constructor validates every invariant.
class MultiViewDataset {
 public:
  MultiViewDataset(std::vector<Matrix> views, std::optional<Labels> labels = std::nullopt);

  const std::vector<Matrix>& views() const noexcept { return views_; }
  const Matrix& view(std::size_t m) const { return views_.at(m); }
  const std::optional<Labels>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return labels_.has_value(); }

  Eigen::Index n_samples() const noexcept { return views_.front().rows(); }
  std::size_t n_views() const noexcept { return views_.size(); }
  std::vector<Eigen::Index> dims() const;
  /// Number of classes in the label vector (0 when unlabeled).
  int n_classes() const noexcept { return n_classes_; }

  /// Column-wise concatenation of all views.
  Matrix concatenated() const;

 private:
  std::vector<Matrix> views_;
  std::optional<Labels> labels_;
  int n_classes_ = 0;
};

struct SyntheticSpec {
  Eigen::Index n_samples = 300;
  int n_clusters = 3;
  Eigen::Index latent_dim = 10;
  std::vector<Eigen::Index> view_dims{20, 30};
  double cluster_separation = 10.0;
  std::vector<double> noise_sigmas{0.1, 0.5};
  std::uint64_t seed = 0;
  /// Use the identity as the projection for every view (requires view dim == latent_dim).
  bool identity_projection = false;
};

struct SyntheticData {
  MultiViewDataset dataset;
  Matrix latent;
};

SyntheticData generate_synthetic_with_latent(const SyntheticSpec& spec);
MultiViewDataset generate_synthetic(const SyntheticSpec& spec);

/// Reads a `view.N = path` / `labels = path` manifest. Relative paths resolve
/// against the manifest's directory. Arbitrary label values are remapped to 0..K-1
/// in order of first appearance after sorting.
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);

Matrix read_matrix(const std::filesystem::path& path);
Labels read_labels(const std::filesystem::path& path);
/// Writes comma-separated rows with round-trip (17 significant digit) precision.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
void write_labels(const std::filesystem::path& path, std::span<const int> labels);

/// Writes `view_1.csv`, ..., `labels.txt`, `manifest.txt` into `dir`.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const MultiViewDataset& ds);

enum class Normalization { kMinMax, kZScore, kNone };

Normalization parse_normalization(const std::string& name);
std::string to_string(Normalization mode);

MultiViewDataset normalize_views(const MultiViewDataset& ds, Normalization mode);

using Batch = std::vector<Eigen::Index>;

/// Permutation of [0, n) split into consecutive chunks; the permutation is a
/// pure function of (seed, epoch).
std::vector<Batch> minibatch_indices(Eigen::Index n, Eigen::Index batch_size, std::uint64_t seed,
                                     std::uint64_t epoch = 0);

/// Rows of `m` at `idx`, in order.
Matrix gather_rows(const Matrix& m, std::span<const Eigen::Index> idx);

}  // namespace mscib
