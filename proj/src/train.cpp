// SPDX-License-Identifier: Apache-2.0
#include "gridcast/train.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "gridcast/error.hpp"
#include "gridcast/rng.hpp"

namespace gridcast {

namespace {

constexpr double kProbClamp = 1e-7;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<Tensor> zero_like(const std::vector<const Tensor*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Tensor* p : params) out.emplace_back(p->shape(), 0.0);
  return out;
}

struct SampleResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

SampleResult sample_gradient(const Network& net, const SupervisedSet& set, std::size_t index,
                             std::uint64_t seed, std::size_t epoch) {
  Rng rng(derive_seed(seed, epoch, index));
  NetworkTape tape;
  Tensor pred = net.forward(set.inputs[index], true, rng, &tape);
  LossValue l = loss(net.config().head, pred, Tensor::vector({set.targets[index]}));
  return {l.value, net.backward(tape, l.grad)};
}

void check_indices(const SupervisedSet& set, std::span<const std::size_t> indices) {
  if (set.inputs.size() != set.targets.size()) throw DimensionError("inputs and targets differ in length");
  for (std::size_t i : indices)
    if (i >= set.size()) throw DimensionError("sample index " + std::to_string(i) + " out of range");
}

void check_set(const SupervisedSet& set, const NetworkConfig& cfg, const char* name) {
  if (set.size() == 0) throw DataError(std::string(name) + " set is empty");
  if (set.inputs.size() != set.targets.size()) throw DimensionError(std::string(name) + " inputs and targets differ");
  for (const Tensor& x : set.inputs)
    if (x.rank() != 2 || x.rows() != cfg.window || x.cols() != cfg.features)
      throw DimensionError(std::string(name) + " window has shape " + shape_string(x.shape()) +
                           ", network expects [" + std::to_string(cfg.window) + " x " +
                           std::to_string(cfg.features) + "]");
}

}  // namespace

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (max_epochs == 0) v.push_back("max_epochs must be >= 1");
  if (early_stop_patience == 0) v.push_back("early_stop_patience must be >= 1");
  if (lr_patience == 0) v.push_back("lr_patience must be >= 1");
  if (batch_size == 0) v.push_back("batch_size must be >= 1");
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) v.push_back("initial_lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) v.push_back("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) v.push_back("beta2 must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) v.push_back("adam_epsilon must be positive");
  if (!(improvement_threshold >= 0.0)) v.push_back("improvement_threshold must be >= 0");
  return v;
}

void TrainConfig::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& s : v) msg += " " + s + ";";
  throw ParameterError(msg);
}

LossValue loss(Head head, const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "loss");
  if (pred.empty()) throw DimensionError("loss of an empty prediction");
  const double n = static_cast<double>(pred.size());
  LossValue out{0.0, Tensor(pred.shape(), 0.0)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], t = target[i];
    if (head == Head::regression) {
      const double d = p - t;
      out.value += d * d / n;
      out.grad[i] = 2.0 * d / n;
    } else {
      if (t != 0.0 && t != 1.0) throw ParameterError("classification target must be 0 or 1");
      const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      out.value += -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc)) / n;
      out.grad[i] = (-t / pc + (1.0 - t) / (1.0 - pc)) / n;
    }
  }
  return out;
}

AdamMoments zero_moments(const std::vector<Tensor*>& params) {
  AdamMoments m;
  for (const Tensor* p : params) {
    m.first.emplace_back(p->shape(), 0.0);
    m.second.emplace_back(p->shape(), 0.0);
  }
  return m;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamMoments& moments,
               double lr, std::size_t t, double beta1, double beta2, double epsilon) {
  if (t == 0) throw ParameterError("adam step counter starts at 1");
  if (grads.size() != params.size() || moments.first.size() != params.size() ||
      moments.second.size() != params.size())
    throw DimensionError("adam: parameter, gradient and moment lists differ in length");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    require_same_shape(p, grads[k], "adam gradient");
    Tensor& m = moments.first[k];
    Tensor& v = moments.second[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads[k][i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
    }
  }
}

LrSchedule::LrSchedule(double initial_lr, std::size_t lr_patience, std::size_t stop_patience, double threshold)
    : lr_(initial_lr),
      lr_patience_(lr_patience),
      stop_patience_(stop_patience),
      threshold_(threshold),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(initial_lr > 0.0)) throw ParameterError("initial learning rate must be positive");
  if (lr_patience == 0 || stop_patience == 0) throw ParameterError("patience values must be >= 1");
}

LrSchedule::Decision LrSchedule::update(double val_loss) {
  Decision d;
  if (val_loss < best_ - threshold_) {
    best_ = val_loss;
    since_best_ = 0;
    since_lr_change_ = 0;
    d.improved = true;
    return d;
  }
  ++since_best_;
  ++since_lr_change_;
  if (since_best_ >= stop_patience_) {
    d.stop = true;
    return d;
  }
  if (since_lr_change_ >= lr_patience_) {
    lr_ /= kLrReduceFactor;
    since_lr_change_ = 0;
    d.reduced = true;
  }
  return d;
}

std::string to_string(StopReason reason) {
  return reason == StopReason::early_stop ? "early_stop" : "max_epochs";
}

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : epochs)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
        << format_double(e.lr) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

BatchGradient batch_gradient_serial(const Network& net, const SupervisedSet& set,
                                    std::span<const std::size_t> indices, std::uint64_t seed,
                                    std::size_t epoch) {
  check_indices(set, indices);
  BatchGradient out{0.0, zero_like(net.parameters())};
  for (std::size_t i : indices) {
    SampleResult r = sample_gradient(net, set, i, seed, epoch);
    out.loss_sum += r.loss;
    for (std::size_t k = 0; k < r.grads.size(); ++k) axpy(out.grad_sum[k], 1.0, r.grads[k]);
  }
  return out;
}

BatchGradient batch_gradient_parallel(const Network& net, const SupervisedSet& set,
                                      std::span<const std::size_t> indices, std::uint64_t seed,
                                      std::size_t epoch) {
  check_indices(set, indices);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(indices.size());
  std::vector<SampleResult> results(indices.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    try {
      results[s] = sample_gradient(net, set, indices[s], seed, epoch);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  // Reduce in sample order so the sums match the serial version exactly.
  BatchGradient out{0.0, zero_like(net.parameters())};
  for (const SampleResult& r : results) {
    out.loss_sum += r.loss;
    for (std::size_t k = 0; k < r.grads.size(); ++k) axpy(out.grad_sum[k], 1.0, r.grads[k]);
  }
  return out;
}

std::vector<double> predict_all_serial(const Network& net, const std::vector<Tensor>& inputs) {
  std::vector<double> out;
  out.reserve(inputs.size());
  for (const Tensor& x : inputs) out.push_back(net.predict(x));
  return out;
}

std::vector<double> predict_all(const Network& net, const std::vector<Tensor>& inputs) {
  std::vector<double> out(inputs.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(inputs.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = net.predict(inputs[i]);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double evaluate_loss(const Network& net, const SupervisedSet& set) {
  if (set.size() == 0) throw DataError("cannot evaluate loss on an empty set");
  const std::vector<double> preds = predict_all(net, set.inputs);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    total += loss(net.config().head, Tensor::vector({preds[i]}), Tensor::vector({set.targets[i]})).value;
  return total / static_cast<double>(preds.size());
}

FitResult fit(Network net, const SupervisedSet& train, const SupervisedSet& val, const TrainConfig& config) {
  config.validate();
  check_set(train, net.config(), "training");
  check_set(val, net.config(), "validation");

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  LrSchedule schedule(config.initial_lr, config.lr_patience, config.early_stop_patience,
                      config.improvement_threshold);
  AdamMoments moments = zero_moments(net.parameters());
  std::size_t step = 0;
  Network best = net;

  FitResult result;
  TrainLog& log = result.log;
  log.stop = StopReason::max_epochs;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(config.seed, epoch, 0x5348u));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    const double lr = schedule.lr();
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      BatchGradient g = batch_gradient_parallel(net, train, batch, config.seed, epoch);
      loss_sum += g.loss_sum;
      if (config.freeze_parameters) continue;
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (Tensor& t : g.grad_sum) t = scale(t, inv);
      adam_step(net.parameters(), g.grad_sum, moments, lr, ++step, config.beta1, config.beta2,
                config.adam_epsilon);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = evaluate_loss(net, val);
    rec.lr = lr;
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch));

    const LrSchedule::Decision d = schedule.update(rec.val_loss);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    if (d.improved) {
      best.copy_parameters_from(net);
      log.best_epoch = epoch;
      log.best_val_loss = rec.val_loss;
    }
    if (d.stop) {
      log.stop = StopReason::early_stop;
      break;
    }
  }

  net.copy_parameters_from(best);
  result.network = std::move(net);
  return result;
}

}  // namespace gridcast
