#include "mscib/model.hpp"

#include <sstream>

#include "mscib/error.hpp"

namespace mscib {
namespace {

std::vector<Eigen::Index> widths(Eigen::Index in, const std::vector<Eigen::Index>& hidden,
                                 Eigen::Index out) {
  std::vector<Eigen::Index> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

std::string view_prefix(std::size_t m) { return "view" + std::to_string(m); }

void write_mlp(Archive& a, const std::string& name, const Mlp& net) {
  std::string acts;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    const std::string base = name + ".layer" + std::to_string(l);
    a.tensors[base + ".weight"] = layer.weight;
    a.tensors[base + ".bias"] = layer.bias;
    if (l) acts += ',';
    acts += to_string(layer.activation);
  }
  a.strings[name + ".activations"] = acts;
}

Mlp read_mlp(const Archive& a, const std::string& name) {
  std::istringstream acts(a.string(name + ".activations"));
  std::vector<Layer> layers;
  std::string act;
  while (std::getline(acts, act, ',')) {
    const std::string base = name + ".layer" + std::to_string(layers.size());
    layers.push_back({a.tensor(base + ".weight"), a.tensor(base + ".bias"), parse_activation(act)});
  }
  return Mlp(std::move(layers));
}

void check_width(const Matrix& x, Eigen::Index expected, const std::string& what) {
  if (x.cols() != expected)
    throw InvalidArgument(what + ": input width " + std::to_string(x.cols()) + " != expected " +
                          std::to_string(expected));
}

}  // namespace

MscibModel MscibModel::zeros_like() const {
  MscibModel g;
  for (const auto& v : views)
    g.views.push_back({{v.encoder.mu_net.zeros_like(), v.encoder.logvar_net.zeros_like()},
                       v.decoder.zeros_like(),
                       v.semantic_head.zeros_like()});
  g.fusion = fusion.zeros_like();
  g.consistent_head = consistent_head.zeros_like();
  g.z = Matrix::Zero(z.rows(), z.cols());
  return g;
}

std::vector<TensorRef> MscibModel::tensors() {
  std::vector<TensorRef> out = autoencoder_tensors();
  for (std::size_t m = 0; m < views.size(); ++m)
    views[m].semantic_head.collect(view_prefix(m) + ".semantic", out);
  fusion.collect("fusion", out);
  consistent_head.collect("consistent_head", out);
  out.push_back({"z", &z});
  return out;
}

std::vector<TensorRef> MscibModel::autoencoder_tensors() {
  std::vector<TensorRef> out;
  for (std::size_t m = 0; m < views.size(); ++m) {
    views[m].encoder.mu_net.collect(view_prefix(m) + ".enc_mu", out);
    views[m].encoder.logvar_net.collect(view_prefix(m) + ".enc_logvar", out);
    views[m].decoder.collect(view_prefix(m) + ".decoder", out);
  }
  return out;
}

void MscibModel::write(Archive& a, const std::string& prefix) const {
  a.integers[prefix + ".n_views"] = static_cast<std::int64_t>(views.size());
  for (std::size_t m = 0; m < views.size(); ++m) {
    const std::string base = prefix + "." + view_prefix(m);
    write_mlp(a, base + ".enc_mu", views[m].encoder.mu_net);
    write_mlp(a, base + ".enc_logvar", views[m].encoder.logvar_net);
    write_mlp(a, base + ".decoder", views[m].decoder);
    write_mlp(a, base + ".semantic", views[m].semantic_head);
  }
  write_mlp(a, prefix + ".fusion", fusion);
  write_mlp(a, prefix + ".consistent_head", consistent_head);
  a.tensors[prefix + ".z"] = z;
}

MscibModel MscibModel::read(const Archive& a, const std::string& prefix) {
  MscibModel model;
  const auto n_views = a.integer(prefix + ".n_views");
  if (n_views < 1) throw FormatError("checkpoint has no views", 0);
  for (std::int64_t m = 0; m < n_views; ++m) {
    const std::string base = prefix + "." + view_prefix(static_cast<std::size_t>(m));
    model.views.push_back({{read_mlp(a, base + ".enc_mu"), read_mlp(a, base + ".enc_logvar")},
                           read_mlp(a, base + ".decoder"),
                           read_mlp(a, base + ".semantic")});
  }
  model.fusion = read_mlp(a, prefix + ".fusion");
  model.consistent_head = read_mlp(a, prefix + ".consistent_head");
  model.z = a.tensor(prefix + ".z");
  return model;
}

bool operator==(const MscibModel& a, const MscibModel& b) {
  if (a.views.size() != b.views.size()) return false;
  for (std::size_t m = 0; m < a.views.size(); ++m) {
    const auto& x = a.views[m];
    const auto& y = b.views[m];
    if (!(x.encoder.mu_net == y.encoder.mu_net) || !(x.encoder.logvar_net == y.encoder.logvar_net) ||
        !(x.decoder == y.decoder) || !(x.semantic_head == y.semantic_head))
      return false;
  }
  return a.fusion == b.fusion && a.consistent_head == b.consistent_head &&
         a.z.rows() == b.z.rows() && a.z.cols() == b.z.cols() && a.z == b.z;
}

MscibModel init_model(const ModelDims& dims, std::uint64_t seed) {
  if (dims.latent_dim < 1 || dims.consistent_dim < 1 || dims.n_clusters < 1)
    throw InvalidArgument("init_model: d, d_c and K must be >= 1");
  if (dims.view_dims.empty()) throw InvalidArgument("init_model: no views");
  if (dims.n_samples < 1) throw InvalidArgument("init_model: n_samples must be >= 1");
  Rng rng(seed);
  const auto d = dims.latent_dim;
  const auto k = static_cast<Eigen::Index>(dims.n_clusters);
  MscibModel model;
  for (const auto dm : dims.view_dims) {
    ViewBranch b;
    b.encoder.mu_net =
        Mlp::create(widths(dm, dims.hidden, d), Activation::kRelu, Activation::kIdentity, rng);
    b.encoder.logvar_net =
        Mlp::create(widths(dm, dims.hidden, d), Activation::kRelu, Activation::kIdentity, rng);
    std::vector<Eigen::Index> dec_hidden(dims.hidden.rbegin(), dims.hidden.rend());
    b.decoder = Mlp::create(widths(d, dec_hidden, dm), Activation::kRelu, Activation::kIdentity, rng);
    b.semantic_head =
        Mlp::create(widths(d, dims.head_hidden, k), Activation::kRelu, Activation::kSoftmaxRows, rng);
    model.views.push_back(std::move(b));
  }
  model.fusion = Mlp::create(widths(d, dims.head_hidden, dims.consistent_dim), Activation::kRelu,
                             Activation::kIdentity, rng);
  model.consistent_head = Mlp::create(widths(dims.consistent_dim, dims.head_hidden, k),
                                      Activation::kRelu, Activation::kSoftmaxRows, rng);
  model.z = 0.01 * rng.normal_matrix(dims.n_samples, dims.consistent_dim);
  return model;
}

ViewEncoding encode_view(const MscibModel& model, std::size_t m, const Matrix& x, Rng* rng,
                         EncoderCache* cache) {
  if (m >= model.n_views()) throw InvalidArgument("encode_view: view index out of range");
  const auto& enc = model.views[m].encoder;
  check_width(x, enc.mu_net.in_dim(), "encode_view");
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  ViewEncoding out;
  out.mu = enc.mu_net.forward(x, c.mu);
  c.logvar_raw = enc.logvar_net.forward(x, c.logvar);
  out.sigma = (0.5 * c.logvar_raw.array().min(kLogvarClamp).max(-kLogvarClamp)).exp();
  out.epsilon = rng ? rng->normal_matrix(x.rows(), out.mu.cols())
                    : Matrix(Matrix::Zero(x.rows(), out.mu.cols()));
  out.z = out.mu.array() + out.sigma.array() * out.epsilon.array();
  return out;
}

Matrix decode_view(const MscibModel& model, std::size_t m, const Matrix& z_m, MlpCache* cache) {
  if (m >= model.n_views()) throw InvalidArgument("decode_view: view index out of range");
  const auto& dec = model.views[m].decoder;
  check_width(z_m, dec.in_dim(), "decode_view");
  MlpCache local;
  return dec.forward(z_m, cache ? *cache : local);
}

Matrix semantic_labels(const MscibModel& model, Head head, const Matrix& input, MlpCache* cache) {
  if (!head.is_consistent && head.index >= model.n_views())
    throw InvalidArgument("semantic_labels: view index out of range");
  const Mlp& net = head.is_consistent ? model.consistent_head : model.views[head.index].semantic_head;
  check_width(input, net.in_dim(), "semantic_labels");
  MlpCache local;
  return net.forward(input, cache ? *cache : local);
}

Matrix fuse_predict(const MscibModel& model, const Matrix& z_m, double gamma_scale, Rng* rng,
                    MlpCache* cache) {
  check_width(z_m, model.fusion.in_dim(), "fuse_predict");
  MlpCache local;
  if (gamma_scale == 0.0 || rng == nullptr) return model.fusion.forward(z_m, cache ? *cache : local);
  const Matrix noisy = z_m + gamma_scale * rng->normal_matrix(z_m.rows(), z_m.cols());
  return model.fusion.forward(noisy, cache ? *cache : local);
}

Matrix view_embedding(const MscibModel& model, std::size_t m, const Matrix& x) {
  return encode_view(model, m, x, nullptr).mu;
}

}  // namespace mscib
