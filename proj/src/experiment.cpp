#include "mscib/experiment.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mscib/archive.hpp"
#include "mscib/error.hpp"

namespace mscib {
namespace {

constexpr std::uint64_t kInitStream = 100;
constexpr std::uint64_t kEvalStream = 200;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

/// Typed access to the key-value map that remembers which keys were consumed.
class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  bool has_section(const std::string& section) const {
    for (const auto& [k, _] : kv_)
      if (k.rfind(section + ".", 0) == 0) return true;
    return false;
  }

  const std::string& raw(const std::string& key) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing key '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  template <typename T>
  T get(const std::string& key) {
    return parse<T>(key, raw(key));
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }

  template <typename T>
  std::vector<T> list(const std::string& key) {
    std::vector<T> out;
    std::istringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) throw ConfigError("empty list element in '" + key + "'");
      out.push_back(parse<T>(key, item.substr(b, e - b + 1)));
    }
    if (out.empty()) throw ConfigError("empty list for '" + key + "'");
    return out;
  }

  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) {
    return has(key) ? list<T>(key) : fallback;
  }

  void reject_unknown() const {
    for (const auto& [k, _] : kv_)
      if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

 private:
  template <typename T>
  static T parse(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("key '" + key + "': expected true/false, got '" + text + "'");
    } else {
      T value{};
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
      return value;
    }
  }

  const KeyValues& kv_;
  std::set<std::string> used_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

int resolve_clusters(const ExperimentConfig& config, const MultiViewDataset& ds) {
  if (config.clusters > 0) return config.clusters;
  if (ds.has_labels()) return ds.n_classes();
  throw ConfigError("missing key 'model.clusters' (required when the dataset has no labels)");
}

void check_compatible(const MscibModel& model, const MultiViewDataset& ds) {
  if (model.n_views() != ds.n_views())
    throw DataError("checkpoint has " + std::to_string(model.n_views()) + " views, dataset has " +
                    std::to_string(ds.n_views()));
  for (std::size_t m = 0; m < ds.n_views(); ++m)
    if (model.view_dim(m) != ds.view(m).cols())
      throw DataError("view " + std::to_string(m + 1) + ": checkpoint expects " +
                      std::to_string(model.view_dim(m)) + " features, dataset has " +
                      std::to_string(ds.view(m).cols()));
  if (model.n_samples() != ds.n_samples())
    throw DataError("checkpoint Z has " + std::to_string(model.n_samples()) + " rows, dataset has " +
                    std::to_string(ds.n_samples()) + " samples");
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

ExperimentConfig parse_experiment_config(const KeyValues& kv, const std::filesystem::path& base_dir) {
  Reader r(kv);
  ExperimentConfig c;
  c.set_seed(r.get<std::uint64_t>("seed", 0));

  if (r.has("data.manifest")) {
    const std::filesystem::path p(r.raw("data.manifest"));
    c.manifest = p.is_absolute() ? p : base_dir / p;
  }
  c.normalization = parse_normalization(r.get<std::string>("data.normalization", "min-max"));

  if (r.has_section("synthetic")) {
    SyntheticSpec s;
    s.n_samples = r.get<Eigen::Index>("synthetic.n_samples");
    s.n_clusters = r.get<int>("synthetic.n_clusters");
    s.view_dims = r.list<Eigen::Index>("synthetic.view_dims");
    s.latent_dim = r.get<Eigen::Index>("synthetic.latent_dim", s.latent_dim);
    s.cluster_separation = r.get<double>("synthetic.separation", s.cluster_separation);
    s.noise_sigmas = r.list<double>("synthetic.noise", std::vector<double>(s.view_dims.size(), 0.1));
    s.seed = r.get<std::uint64_t>("synthetic.seed", c.seed);
    s.identity_projection = r.get<bool>("synthetic.identity_projection", false);
    c.synthetic = s;
  }

  c.latent_dim = r.get<Eigen::Index>("model.latent_dim", c.latent_dim);
  c.consistent_dim = r.get<Eigen::Index>("model.consistent_dim", c.consistent_dim);
  c.hidden = r.list<Eigen::Index>("model.hidden", c.hidden);
  c.head_hidden = r.list<Eigen::Index>("model.head_hidden", c.head_hidden);
  c.clusters = r.get<int>("model.clusters", 0);
  if (c.latent_dim < 1 || c.consistent_dim < 1) throw ConfigError("model dims must be >= 1");
  for (auto w : c.hidden)
    if (w < 1) throw ConfigError("model.hidden widths must be >= 1");
  for (auto w : c.head_hidden)
    if (w < 1) throw ConfigError("model.head_hidden widths must be >= 1");
  if (c.clusters < 0) throw ConfigError("model.clusters must be >= 0");

  auto& l = c.train.loss;
  l.lambda1 = r.get<double>("loss.lambda1", l.lambda1);
  l.lambda2 = r.get<double>("loss.lambda2", l.lambda2);
  l.beta = r.get<double>("loss.beta", l.beta);
  l.tau = r.get<double>("loss.tau", l.tau);
  l.gamma_scale = r.get<double>("loss.gamma_scale", l.gamma_scale);

  auto& t = c.train;
  t.pretrain_epochs = r.get<int>("train.pretrain_epochs", t.pretrain_epochs);
  t.train_epochs = r.get<int>("train.epochs", t.train_epochs);
  t.batch_size = r.get<Eigen::Index>("train.batch_size", t.batch_size);
  t.pretrain_lr = r.get<double>("train.pretrain_lr", t.pretrain_lr);
  t.lr = r.get<double>("train.lr", t.lr);
  t.eval_every = r.get<int>("train.eval_every", t.eval_every);
  t.eval_runs = r.get<int>("train.eval_runs", t.eval_runs);
  t.convergence_window = r.get<int>("train.convergence_window", t.convergence_window);
  t.convergence_threshold = r.get<double>("train.convergence_threshold", t.convergence_threshold);

  c.eval_runs = r.get<int>("eval.runs", c.eval_runs);
  c.kmeans.restarts = r.get<int>("eval.restarts", c.kmeans.restarts);
  c.kmeans.max_iters = r.get<int>("eval.max_iters", c.kmeans.max_iters);
  c.kmeans.tol = r.get<double>("eval.tol", c.kmeans.tol);
  if (c.eval_runs < 1 || c.kmeans.restarts < 1 || c.kmeans.max_iters < 1)
    throw ConfigError("eval.runs, eval.restarts and eval.max_iters must be >= 1");

  if (r.has("output.dir")) {
    const std::filesystem::path p(r.raw("output.dir"));
    c.out_dir = p.is_absolute() ? p : base_dir / p;
  }
  r.reject_unknown();
  c.train.validate();
  return c;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_key_values(path), path.parent_path());
}

KeyValues resolved_config(const ExperimentConfig& c) {
  KeyValues kv;
  kv["seed"] = std::to_string(c.seed);
  if (c.manifest) kv["data.manifest"] = std::filesystem::absolute(*c.manifest).lexically_normal().string();
  kv["data.normalization"] = to_string(c.normalization);
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    kv["synthetic.n_samples"] = std::to_string(s.n_samples);
    kv["synthetic.n_clusters"] = std::to_string(s.n_clusters);
    kv["synthetic.view_dims"] = join(s.view_dims);
    kv["synthetic.latent_dim"] = std::to_string(s.latent_dim);
    kv["synthetic.separation"] = format_double(s.cluster_separation);
    kv["synthetic.noise"] = join(s.noise_sigmas);
    kv["synthetic.seed"] = std::to_string(s.seed);
    kv["synthetic.identity_projection"] = s.identity_projection ? "true" : "false";
  }
  kv["model.latent_dim"] = std::to_string(c.latent_dim);
  kv["model.consistent_dim"] = std::to_string(c.consistent_dim);
  kv["model.hidden"] = join(c.hidden);
  kv["model.head_hidden"] = join(c.head_hidden);
  kv["model.clusters"] = std::to_string(c.clusters);
  const auto& l = c.train.loss;
  kv["loss.lambda1"] = format_double(l.lambda1);
  kv["loss.lambda2"] = format_double(l.lambda2);
  kv["loss.beta"] = format_double(l.beta);
  kv["loss.tau"] = format_double(l.tau);
  kv["loss.gamma_scale"] = format_double(l.gamma_scale);
  const auto& t = c.train;
  kv["train.pretrain_epochs"] = std::to_string(t.pretrain_epochs);
  kv["train.epochs"] = std::to_string(t.train_epochs);
  kv["train.batch_size"] = std::to_string(t.batch_size);
  kv["train.pretrain_lr"] = format_double(t.pretrain_lr);
  kv["train.lr"] = format_double(t.lr);
  kv["train.eval_every"] = std::to_string(t.eval_every);
  kv["train.eval_runs"] = std::to_string(t.eval_runs);
  kv["train.convergence_window"] = std::to_string(t.convergence_window);
  kv["train.convergence_threshold"] = format_double(t.convergence_threshold);
  kv["eval.runs"] = std::to_string(c.eval_runs);
  kv["eval.restarts"] = std::to_string(c.kmeans.restarts);
  kv["eval.max_iters"] = std::to_string(c.kmeans.max_iters);
  kv["eval.tol"] = format_double(c.kmeans.tol);
  kv["output.dir"] = std::filesystem::absolute(c.out_dir).lexically_normal().string();
  return kv;
}

std::string config_hash(const ExperimentConfig& config) {
  KeyValues kv = resolved_config(config);
  kv.erase("output.dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(format_key_values(kv))));
  return buf;
}

MultiViewDataset experiment_dataset(const ExperimentConfig& config) {
  if (config.manifest) return normalize_views(load_dataset(*config.manifest), config.normalization);
  if (config.synthetic) return normalize_views(generate_synthetic(*config.synthetic), config.normalization);
  throw ConfigError("missing key 'data.manifest' (or a 'synthetic' section)");
}

ModelDims experiment_model_dims(const ExperimentConfig& config, const MultiViewDataset& ds) {
  ModelDims dims;
  dims.view_dims = ds.dims();
  dims.n_samples = ds.n_samples();
  dims.latent_dim = config.latent_dim;
  dims.consistent_dim = config.consistent_dim;
  dims.n_clusters = resolve_clusters(config, ds);
  dims.hidden = config.hidden;
  dims.head_hidden = config.head_hidden;
  return dims;
}

std::string metrics_json(const AblationTable& table, const ExperimentConfig& config, int pretrain_epochs,
                         int train_epochs, bool early_stopped) {
  nlohmann::ordered_json j;
  for (const auto& [name, r] : table)
    j[name] = {{"acc", r.acc}, {"nmi", r.nmi}, {"ari", r.ari}, {"inertia", r.inertia}, {"runs", r.runs}};
  const auto& l = config.train.loss;
  const bool ae_only = l.lambda1 == 0.0 && l.lambda2 == 0.0;
  j["metadata"] = {{"config_hash", config_hash(config)},
                   {"seed", config.seed},
                   {"mode", ae_only ? "autoencoder-only" : "mscib"},
                   {"pretrain_epochs", pretrain_epochs},
                   {"train_epochs", train_epochs},
                   {"early_stopped", early_stopped}};
  return j.dump(2) + "\n";
}

std::string history_line(const EpochRecord& r) {
  std::string line = std::to_string(r.epoch);
  for (double v : {r.loss.rec, r.loss.ib, r.loss.sem, r.loss.total}) line += "," + format_double(v);
  if (r.eval)
    for (double v : {r.eval->acc, r.eval->nmi, r.eval->ari}) line += "," + format_double(v);
  return line;
}

std::filesystem::path cmd_generate(const ExperimentConfig& config) {
  if (!config.synthetic) throw ConfigError("missing section 'synthetic' (e.g. key 'synthetic.n_samples')");
  const auto ds = generate_synthetic(*config.synthetic);
  return write_dataset(config.out_dir, ds);
}

TrainArtifacts cmd_train(const ExperimentConfig& config, std::ostream* log) {
  const MultiViewDataset ds = experiment_dataset(config);
  const ModelDims dims = experiment_model_dims(config, ds);
  ensure_dir(config.out_dir);
  write_text(config.out_dir / "config.resolved.txt", format_key_values(resolved_config(config)));

  Trainer trainer(init_model(dims, Rng::derive(config.seed, kInitStream)), config.train);
  trainer.pretrain(ds);

  TrainArtifacts art;
  art.history = config.out_dir / "history.csv";
  std::ofstream hist(art.history);
  if (!hist) throw DataError("cannot write '" + art.history.string() + "'");
  hist << "epoch,rec,ib,sem,total,acc,nmi,ari\n";
  trainer.train(ds, std::nullopt, [&](const EpochRecord& r) {
    const std::string line = history_line(r);
    hist << line << '\n';
    if (log) *log << line << '\n';
  });
  hist.close();

  art.checkpoint = config.out_dir / "checkpoint.bin";
  trainer.save(art.checkpoint);
  art.train_history = trainer.history();
  if (ds.has_labels()) {
    art.table = ablation_eval(trainer.model(), ds, dims.n_clusters, config.eval_runs,
                              Rng::derive(config.seed, kEvalStream), config.kmeans);
    art.metrics = config.out_dir / "metrics.json";
    write_text(*art.metrics, metrics_json(*art.table, config, trainer.pretrain_epochs_done(),
                                          trainer.train_epochs_done(), trainer.history().converged));
  }
  return art;
}

std::filesystem::path cmd_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint) {
  const MultiViewDataset ds = experiment_dataset(config);
  if (!ds.has_labels()) throw DataError("labels are required for eval");
  const Archive archive = Archive::load(checkpoint);
  const MscibModel model = MscibModel::read(archive, "model");
  check_compatible(model, ds);
  const int k = config.clusters > 0 ? config.clusters : model.n_clusters();
  const auto table = ablation_eval(model, ds, k, config.eval_runs, Rng::derive(config.seed, kEvalStream),
                                   config.kmeans);
  const auto epochs = [&](const char* key) {
    const auto it = archive.integers.find(key);
    return it == archive.integers.end() ? 0 : static_cast<int>(it->second);
  };
  const auto conv = archive.integers.find("converged");
  ensure_dir(config.out_dir);
  const auto path = config.out_dir / "eval_metrics.json";
  write_text(path, metrics_json(table, config, epochs("pretrain_epochs_done"), epochs("train_epochs_done"),
                                conv != archive.integers.end() && conv->second != 0));
  return path;
}

std::filesystem::path cmd_embed(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                                const std::string& which) {
  const MscibModel model = load_model(checkpoint);
  Matrix embedding;
  std::string stem;
  if (which == "Z") {
    embedding = model.z;
    stem = "Z";
  } else {
    std::size_t m = 0;
    bool ok = which.size() > 4 && which.rfind("Z^(", 0) == 0 && which.back() == ')';
    if (ok) {
      const auto digits = std::string_view(which).substr(3, which.size() - 4);
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), m);
      ok = ec == std::errc() && ptr == digits.data() + digits.size() && m >= 1 && m <= model.n_views();
    }
    if (!ok)
      throw ConfigError("unknown representation '" + which + "' (expected Z or Z^(1.." +
                        std::to_string(model.n_views()) + "))");
    const MultiViewDataset ds = experiment_dataset(config);
    check_compatible(model, ds);
    embedding = view_embedding(model, m - 1, ds.view(m - 1));
    stem = "Z" + std::to_string(m);
  }
  ensure_dir(config.out_dir);
  const auto path = config.out_dir / ("embedding_" + stem + ".csv");
  write_matrix(path, embedding);
  return path;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const FormatError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

}  // namespace mscib
