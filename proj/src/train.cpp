#include "mscib/train.hpp"

#include <cmath>

#include "mscib/error.hpp"

namespace mscib {

void TrainConfig::validate() const {
  if (pretrain_epochs < 0 || train_epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(pretrain_lr >= 0.0) || !(lr >= 0.0)) throw ConfigError("train: learning rates must be >= 0");
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (eval_runs < 1) throw ConfigError("train.eval_runs must be >= 1");
  if (convergence_window < 1) throw ConfigError("train.convergence_window must be >= 1");
  loss.validate();
}

namespace {

constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kPretrainBatchStream = 2;
constexpr std::uint64_t kTrainBatchStream = 3;
constexpr std::uint64_t kEvalStream = 4;

LossOptions reconstruction_only() {
  LossOptions o;
  o.terms = {true, false, false, false, false, false};
  return o;
}

std::vector<ParamGrad> pair_up(std::vector<TensorRef>& params, std::vector<TensorRef>& grads) {
  std::vector<ParamGrad> out;
  for (std::size_t k = 0; k < params.size(); ++k) out.push_back({params[k].value, grads[k].value});
  return out;
}

void clear(MscibModel& grad) {
  for (auto& t : grad.tensors()) t.value->setZero();
}

void accumulate(LossBreakdown& acc, const LossBreakdown& l, double w) {
  acc.rec += w * l.rec;
  acc.ib += w * l.ib;
  acc.sem += w * l.sem;
  acc.reg += w * l.reg;
  acc.total += w * l.total;
}

[[noreturn]] void rethrow_with_position(const NumericError& e, const char* phase, int epoch) {
  throw NumericError(e.term(), std::string(phase) + " epoch " + std::to_string(epoch) + ": " + e.what());
}

void write_adam(Archive& a, const std::string& prefix, const AdamState& s) {
  a.integers[prefix + ".step"] = s.step;
  Matrix opts(1, 4);
  opts << s.options.lr, s.options.beta1, s.options.beta2, s.options.eps;
  a.tensors[prefix + ".options"] = opts;
  a.integers[prefix + ".count"] = static_cast<std::int64_t>(s.names.size());
  for (std::size_t k = 0; k < s.names.size(); ++k) {
    a.strings[prefix + ".name." + std::to_string(k)] = s.names[k];
    a.tensors[prefix + ".m." + s.names[k]] = s.first_moment[k];
    a.tensors[prefix + ".v." + s.names[k]] = s.second_moment[k];
  }
}

AdamState read_adam(const Archive& a, const std::string& prefix) {
  AdamState s;
  s.step = a.integer(prefix + ".step");
  const Matrix& opts = a.tensor(prefix + ".options");
  if (opts.size() != 4) throw FormatError("bad optimiser options record", 0);
  s.options = {opts(0), opts(1), opts(2), opts(3)};
  const auto count = a.integer(prefix + ".count");
  for (std::int64_t k = 0; k < count; ++k) {
    const std::string& name = a.string(prefix + ".name." + std::to_string(k));
    s.names.push_back(name);
    s.first_moment.push_back(a.tensor(prefix + ".m." + name));
    s.second_moment.push_back(a.tensor(prefix + ".v." + name));
  }
  return s;
}

}  // namespace

Trainer::Trainer(MscibModel model, TrainConfig config)
    : model_(std::move(model)), config_(std::move(config)), rng_(Rng::derive(config_.seed, kNoiseStream)) {
  config_.validate();
  pretrain_opt_ = AdamState::for_params(model_.autoencoder_tensors(), {config_.pretrain_lr});
  main_opt_ = AdamState::for_params(model_.tensors(), {config_.lr});
}

void Trainer::pretrain(const MultiViewDataset& ds) {
  const Eigen::Index n = ds.n_samples();
  const Eigen::Index bs = std::min(config_.batch_size, n);
  const LossOptions options = reconstruction_only();
  MscibModel grad = model_.zeros_like();
  while (pretrain_done_ < config_.pretrain_epochs) {
    const int epoch = pretrain_done_ + 1;
    double rec = 0.0;
    try {
      for (const auto& idx : minibatch_indices(n, bs, Rng::derive(config_.seed, kPretrainBatchStream),
                                               static_cast<std::uint64_t>(epoch))) {
        const BatchData batch = make_batch(ds, idx);
        clear(grad);
        const auto loss = total_loss(model_, batch, config_.loss, &rng_, &grad, options);
        rec += loss.rec * static_cast<double>(idx.size());
        auto params = model_.autoencoder_tensors();
        auto grads = grad.autoencoder_tensors();
        const auto updates = pair_up(params, grads);
        adam_step(pretrain_opt_, updates);
      }
    } catch (const NumericError& e) {
      rethrow_with_position(e, "pretrain", epoch);
    }
    history_.pretrain_rec.push_back(rec / static_cast<double>(n));
    pretrain_done_ = epoch;
  }
}

void Trainer::train(const MultiViewDataset& ds, std::optional<int> stop_after,
                    const EpochCallback& on_epoch) {
  if (model_.n_samples() != ds.n_samples())
    throw InvalidArgument("train: Z has " + std::to_string(model_.n_samples()) +
                          " rows, dataset has " + std::to_string(ds.n_samples()) + " samples");
  const Eigen::Index n = ds.n_samples();
  const Eigen::Index bs = std::min(config_.batch_size, n);
  const int last = std::min(config_.train_epochs, stop_after.value_or(config_.train_epochs));
  MscibModel grad = model_.zeros_like();
  while (train_done_ < last && !history_.converged) {
    const int epoch = train_done_ + 1;
    EpochRecord record;
    record.epoch = epoch;
    try {
      for (const auto& idx : minibatch_indices(n, bs, Rng::derive(config_.seed, kTrainBatchStream),
                                               static_cast<std::uint64_t>(epoch))) {
        const BatchData batch = make_batch(ds, idx);
        clear(grad);
        const auto loss = total_loss(model_, batch, config_.loss, &rng_, &grad);
        accumulate(record.loss, loss, static_cast<double>(idx.size()) / static_cast<double>(n));
        auto params = model_.tensors();
        auto grads = grad.tensors();
        auto updates = pair_up(params, grads);
        // Z is the last tensor; only the rows of this batch move.
        updates.back().rows = &idx;
        adam_step(main_opt_, updates);
      }
    } catch (const NumericError& e) {
      rethrow_with_position(e, "train", epoch);
    }

    const bool final_epoch = epoch == config_.train_epochs;
    if (ds.has_labels() && config_.eval_every > 0 && (epoch % config_.eval_every == 0 || final_epoch))
      record.eval = evaluate_representation(model_.z, *ds.labels(), model_.n_clusters(), config_.eval_runs,
                                            Rng::derive(config_.seed, kEvalStream));
    history_.epochs.push_back(record);
    train_done_ = epoch;

    const int w = config_.convergence_window;
    if (static_cast<int>(history_.epochs.size()) > w) {
      const double now = history_.epochs.back().loss.total;
      const double then = history_.epochs[history_.epochs.size() - 1 - w].loss.total;
      if (std::abs(now - then) / std::max(std::abs(then), 1e-12) < config_.convergence_threshold)
        history_.converged = true;
    }
    if (on_epoch) on_epoch(history_.epochs.back());
  }
}

Archive Trainer::to_archive() const {
  Archive a;
  model_.write(a, "model");
  write_adam(a, "pretrain_opt", pretrain_opt_);
  write_adam(a, "main_opt", main_opt_);
  a.strings["rng"] = rng_.state();
  a.integers["pretrain_epochs_done"] = pretrain_done_;
  a.integers["train_epochs_done"] = train_done_;
  a.integers["converged"] = history_.converged ? 1 : 0;
  Matrix pre(1, static_cast<Eigen::Index>(history_.pretrain_rec.size()));
  for (std::size_t e = 0; e < history_.pretrain_rec.size(); ++e) pre(0, static_cast<Eigen::Index>(e)) = history_.pretrain_rec[e];
  a.tensors["history.pretrain_rec"] = pre;
  // Columns: epoch, rec, ib, sem, reg, total, has_eval, acc, nmi, ari, inertia.
  Matrix h(static_cast<Eigen::Index>(history_.epochs.size()), 11);
  for (std::size_t e = 0; e < history_.epochs.size(); ++e) {
    const auto& r = history_.epochs[e];
    const auto i = static_cast<Eigen::Index>(e);
    h.row(i) << r.epoch, r.loss.rec, r.loss.ib, r.loss.sem, r.loss.reg, r.loss.total, r.eval ? 1.0 : 0.0,
        r.eval ? r.eval->acc : 0.0, r.eval ? r.eval->nmi : 0.0, r.eval ? r.eval->ari : 0.0,
        r.eval ? r.eval->inertia : 0.0;
  }
  a.tensors["history.epochs"] = h;
  return a;
}

Trainer Trainer::from_archive(const Archive& a, TrainConfig config) {
  Trainer t(MscibModel::read(a, "model"), std::move(config));
  t.pretrain_opt_ = read_adam(a, "pretrain_opt");
  t.main_opt_ = read_adam(a, "main_opt");
  t.pretrain_opt_.options.lr = t.config_.pretrain_lr;
  t.main_opt_.options.lr = t.config_.lr;
  t.rng_.set_state(a.string("rng"));
  t.pretrain_done_ = static_cast<int>(a.integer("pretrain_epochs_done"));
  t.train_done_ = static_cast<int>(a.integer("train_epochs_done"));
  t.history_.converged = a.integer("converged") != 0;
  const Matrix& pre = a.tensor("history.pretrain_rec");
  for (Eigen::Index e = 0; e < pre.size(); ++e) t.history_.pretrain_rec.push_back(pre(e));
  const Matrix& h = a.tensor("history.epochs");
  if (h.rows() > 0 && h.cols() != 11) throw FormatError("bad history record", 0);
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    EpochRecord r;
    r.epoch = static_cast<int>(h(i, 0));
    r.loss = {h(i, 1), h(i, 2), h(i, 3), h(i, 4), h(i, 5)};
    if (h(i, 6) != 0.0) {
      ClusterReport c;
      c.acc = h(i, 7);
      c.nmi = h(i, 8);
      c.ari = h(i, 9);
      c.inertia = h(i, 10);
      c.runs = t.config_.eval_runs;
      r.eval = c;
    }
    t.history_.epochs.push_back(r);
  }
  return t;
}

void Trainer::save(const std::filesystem::path& path) const { to_archive().save(path); }

Trainer Trainer::load(const std::filesystem::path& path, TrainConfig config) {
  return from_archive(Archive::load(path), std::move(config));
}

MscibModel pretrain(MscibModel model, const MultiViewDataset& ds, const TrainConfig& config) {
  Trainer t(std::move(model), config);
  t.pretrain(ds);
  return t.model();
}

std::pair<MscibModel, TrainHistory> train(MscibModel model, const MultiViewDataset& ds,
                                          const TrainConfig& config) {
  TrainConfig c = config;
  c.pretrain_epochs = 0;
  Trainer t(std::move(model), c);
  t.train(ds);
  return {t.model(), t.history()};
}

void save_model(const MscibModel& model, const std::filesystem::path& path) {
  Archive a;
  model.write(a, "model");
  a.save(path);
}

MscibModel load_model(const std::filesystem::path& path) {
  return MscibModel::read(Archive::load(path), "model");
}

}  // namespace mscib
