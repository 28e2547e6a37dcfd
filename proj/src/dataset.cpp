#include "mscib/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/QR>

#include "mscib/error.hpp"
#include "mscib/keyvalue.hpp"
#include "mscib/random.hpp"

namespace mscib {

MultiViewDataset::MultiViewDataset(std::vector<Matrix> views, std::optional<Labels> labels)
    : views_(std::move(views)), labels_(std::move(labels)) {
  if (views_.size() < 2) throw DataError("a multi-view dataset needs at least 2 views");
  const Eigen::Index n = views_.front().rows();
  if (n < 1) throw DataError("dataset has no samples");
  for (std::size_t m = 0; m < views_.size(); ++m) {
    if (views_[m].rows() != n)
      throw RowMismatchError("view " + std::to_string(m + 1) + " has " +
                             std::to_string(views_[m].rows()) + " rows, expected " +
                             std::to_string(n));
    if (views_[m].cols() < 1) throw DataError("view " + std::to_string(m + 1) + " has no features");
    if (!views_[m].allFinite())
      throw NonNumericError("view " + std::to_string(m + 1) + " contains non-finite values");
  }
  if (labels_) {
    if (static_cast<Eigen::Index>(labels_->size()) != n)
      throw RowMismatchError("labels have " + std::to_string(labels_->size()) +
                             " entries, expected " + std::to_string(n));
    const auto [lo, hi] = std::minmax_element(labels_->begin(), labels_->end());
    if (*lo < 0) throw DataError("labels must be non-negative");
    n_classes_ = *hi + 1;
    std::vector<bool> seen(n_classes_, false);
    for (int l : *labels_) seen[l] = true;
    for (int k = 0; k < n_classes_; ++k)
      if (!seen[k]) throw DataError("class " + std::to_string(k) + " has no members");
  }
}

std::vector<Eigen::Index> MultiViewDataset::dims() const {
  std::vector<Eigen::Index> d;
  for (const auto& v : views_) d.push_back(v.cols());
  return d;
}

Matrix MultiViewDataset::concatenated() const {
  Eigen::Index total = 0;
  for (const auto& v : views_) total += v.cols();
  Matrix out(n_samples(), total);
  Eigen::Index col = 0;
  for (const auto& v : views_) {
    out.middleCols(col, v.cols()) = v;
    col += v.cols();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

Matrix cluster_means(const SyntheticSpec& spec, Rng& rng) {
  const int k = spec.n_clusters;
  const Eigen::Index dim = spec.latent_dim;
  Matrix means(k, dim);
  if (k <= dim) {
    // Orthonormal directions scaled so every pair sits at exactly `separation`.
    const Matrix g = rng.normal_matrix(dim, dim);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    const double radius = spec.cluster_separation / std::sqrt(2.0);
    for (int c = 0; c < k; ++c) means.row(c) = radius * q.col(c).transpose();
  } else {
    means = rng.normal_matrix(k, dim);
    double min_dist = std::numeric_limits<double>::infinity();
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b)
        min_dist = std::min(min_dist, (means.row(a) - means.row(b)).norm());
    if (min_dist <= 0.0) throw InvalidArgument("degenerate synthetic cluster means");
    means *= spec.cluster_separation / min_dist;
  }
  return means;
}

void validate(const SyntheticSpec& spec) {
  if (spec.n_samples < 1) throw InvalidArgument("synthetic: n_samples must be >= 1");
  if (spec.n_clusters < 1) throw InvalidArgument("synthetic: n_clusters must be >= 1");
  if (spec.n_clusters > spec.n_samples)
    throw InvalidArgument("synthetic: n_clusters exceeds n_samples");
  if (spec.latent_dim < 1) throw InvalidArgument("synthetic: latent_dim must be >= 1");
  if (spec.view_dims.size() < 2) throw InvalidArgument("synthetic: need at least 2 views");
  if (spec.noise_sigmas.size() != spec.view_dims.size())
    throw InvalidArgument("synthetic: one noise sigma per view required");
  if (!(spec.cluster_separation > 0.0))
    throw InvalidArgument("synthetic: cluster_separation must be positive");
  for (double s : spec.noise_sigmas)
    if (!(s >= 0.0) || !std::isfinite(s))
      throw InvalidArgument("synthetic: noise sigmas must be finite and >= 0");
  for (auto d : spec.view_dims) {
    if (d < 1) throw InvalidArgument("synthetic: view dims must be >= 1");
    if (spec.identity_projection && d != spec.latent_dim)
      throw InvalidArgument("synthetic: identity projection needs view dim == latent_dim");
  }
}

}  // namespace

SyntheticData generate_synthetic_with_latent(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  const Eigen::Index n = spec.n_samples;
  const Matrix means = cluster_means(spec, rng);

  Labels labels(n);
  for (Eigen::Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i % spec.n_clusters);
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(labels[i], labels[rng.below(static_cast<std::uint64_t>(i + 1))]);

  Matrix latent = rng.normal_matrix(n, spec.latent_dim);
  for (Eigen::Index i = 0; i < n; ++i) latent.row(i) += means.row(labels[i]);

  std::vector<Matrix> views;
  for (std::size_t m = 0; m < spec.view_dims.size(); ++m) {
    const Eigen::Index dm = spec.view_dims[m];
    Matrix proj = spec.identity_projection
                      ? Matrix(Matrix::Identity(spec.latent_dim, dm))
                      : Matrix(rng.normal_matrix(spec.latent_dim, dm) /
                               std::sqrt(static_cast<double>(spec.latent_dim)));
    Matrix v = latent * proj;
    if (spec.noise_sigmas[m] > 0.0) v += spec.noise_sigmas[m] * rng.normal_matrix(n, dm);
    views.push_back(std::move(v));
  }
  return {MultiViewDataset(std::move(views), std::move(labels)), std::move(latent)};
}

MultiViewDataset generate_synthetic(const SyntheticSpec& spec) {
  return generate_synthetic_with_latent(spec).dataset;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

Matrix read_matrix(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    std::vector<double> row;
    for (const auto& raw : split_commas(line)) {
      const std::string_view cell = strip(raw);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
          !std::isfinite(value))
        throw NonNumericError(path.string() + ":" + std::to_string(lineno) +
                              ": non-numeric cell '" + std::string(cell) + "'");
      row.push_back(value);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty matrix file");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

Labels read_labels(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<long long> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view cell = strip(line);
    if (cell.empty()) continue;
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size())
      throw NonNumericError(path.string() + ":" + std::to_string(lineno) + ": non-integer label '" +
                            std::string(cell) + "'");
    raw.push_back(v);
  }
  const std::set<long long> alphabet(raw.begin(), raw.end());
  std::map<long long, int> remap;
  for (long long v : alphabet) remap.emplace(v, static_cast<int>(remap.size()));
  Labels out;
  out.reserve(raw.size());
  for (long long v : raw) out.push_back(remap.at(v));
  return out;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j));
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (int l : labels) out << l << '\n';
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, const MultiViewDataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
  KeyValues manifest;
  for (std::size_t m = 0; m < ds.n_views(); ++m) {
    const std::string name = "view_" + std::to_string(m + 1) + ".csv";
    write_matrix(dir / name, ds.view(m));
    manifest["view." + std::to_string(m + 1)] = name;
  }
  if (ds.labels()) {
    write_labels(dir / "labels.txt", *ds.labels());
    manifest["labels"] = "labels.txt";
  }
  const auto path = dir / "manifest.txt";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << format_key_values(manifest);
  return path;
}

MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  const KeyValues kv = read_key_values(manifest_path);
  const auto base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  std::map<int, std::filesystem::path> view_paths;
  std::optional<std::filesystem::path> labels_path;
  for (const auto& [key, value] : kv) {
    if (key == "labels") {
      labels_path = resolve(value);
    } else if (key.rfind("view.", 0) == 0) {
      int idx = 0;
      const auto suffix = std::string_view(key).substr(5);
      const auto [ptr, ec] = std::from_chars(suffix.data(), suffix.data() + suffix.size(), idx);
      if (ec != std::errc() || ptr != suffix.data() + suffix.size() || idx < 1)
        throw DataError("manifest: bad view key '" + key + "'");
      view_paths[idx] = resolve(value);
    } else {
      throw DataError("manifest: unknown key '" + key + "'");
    }
  }
  int expected = 1;
  for (const auto& [idx, _] : view_paths)
    if (idx != expected++) throw DataError("manifest: view indices must be 1..M without gaps");

  std::vector<Matrix> views;
  for (const auto& [idx, path] : view_paths) views.push_back(read_matrix(path));
  std::optional<Labels> labels;
  if (labels_path) labels = read_labels(*labels_path);
  return MultiViewDataset(std::move(views), std::move(labels));
}

// ---------------------------------------------------------------------------
// Normalization and batching

Normalization parse_normalization(const std::string& name) {
  if (name == "min-max" || name == "minmax") return Normalization::kMinMax;
  if (name == "z-score" || name == "zscore") return Normalization::kZScore;
  if (name == "none") return Normalization::kNone;
  throw ConfigError("unknown normalization '" + name + "' (expected min-max, z-score, none)");
}

std::string to_string(Normalization mode) {
  switch (mode) {
    case Normalization::kMinMax: return "min-max";
    case Normalization::kZScore: return "z-score";
    case Normalization::kNone: return "none";
  }
  return "none";
}

MultiViewDataset normalize_views(const MultiViewDataset& ds, Normalization mode) {
  std::vector<Matrix> views = ds.views();
  if (mode == Normalization::kNone) return MultiViewDataset(std::move(views), ds.labels());
  for (auto& v : views) {
    const double n = static_cast<double>(v.rows());
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      auto col = v.col(j);
      if (mode == Normalization::kMinMax) {
        const double lo = col.minCoeff();
        const double range = col.maxCoeff() - lo;
        if (range > 0.0)
          col = (col.array() - lo) / range;
        else
          col.setZero();
      } else {
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / n;
        if (var > 0.0)
          col = (col.array() - mean) / std::sqrt(var);
        else
          col.setZero();
      }
    }
  }
  return MultiViewDataset(std::move(views), ds.labels());
}

std::vector<Batch> minibatch_indices(Eigen::Index n, Eigen::Index batch_size, std::uint64_t seed,
                                     std::uint64_t epoch) {
  if (n < 1) throw InvalidArgument("minibatch_indices: n must be >= 1");
  if (batch_size < 1 || batch_size > n)
    throw InvalidArgument("minibatch_indices: batch_size must be in [1, n]");
  Batch perm(n);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(Rng::derive(seed, epoch));
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  std::vector<Batch> batches;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

Matrix gather_rows(const Matrix& m, std::span<const Eigen::Index> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= m.rows()) throw InvalidArgument("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  }
  return out;
}

}  // namespace mscib
