// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridcast/data.hpp"
#include "gridcast/network.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

struct TrainConfig {
  std::size_t max_epochs = 10000;
  std::size_t early_stop_patience = 300;
  double initial_lr = 1e-3;
  std::size_t lr_patience = 100;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  // Validation losses must drop by more than this to count as improvement.
  double improvement_threshold = 1e-9;
  // Run the full loop but never apply updates (exercises the schedule).
  bool freeze_parameters = false;

  std::vector<std::string> violations() const;
  void validate() const;
};

// Each learning-rate reduction divides by exactly this factor.
inline constexpr double kLrReduceFactor = 3.0;

struct LossValue {
  double value = 0.0;
  Tensor grad;  // d value / d pred
};

// Regression: mean squared error. Classification: binary cross-entropy
// with predictions clamped to [1e-7, 1 - 1e-7]; the gradient is evaluated
// at the clamped prediction.
LossValue loss(Head head, const Tensor& pred, const Tensor& target);

struct AdamMoments {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
};

AdamMoments zero_moments(const std::vector<Tensor*>& params);

// One bias-corrected Adam update at step t >= 1.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamMoments& moments,
               double lr, std::size_t t, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

/// Plateau schedule: divide the rate by 3 after `lr_patience` epochs
/// without improvement, stop after `stop_patience` such epochs.
class LrSchedule {
 public:
  struct Decision {
    bool improved = false;
    bool reduced = false;
    bool stop = false;
  };

  LrSchedule(double initial_lr, std::size_t lr_patience, std::size_t stop_patience, double threshold = 1e-9);

  // Call once per epoch with that epoch's validation loss.
  Decision update(double val_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t epochs_since_best() const { return since_best_; }

 private:
  double lr_;
  std::size_t lr_patience_;
  std::size_t stop_patience_;
  double threshold_;
  double best_;
  std::size_t since_best_ = 0;
  std::size_t since_lr_change_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate used during this epoch
  double wall_seconds = 0.0;
};

enum class StopReason { early_stop, max_epochs };

std::string to_string(StopReason reason);

struct TrainLog {
  std::vector<EpochRecord> epochs;
  StopReason stop = StopReason::max_epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;

  // epoch,train_loss,val_loss,lr (wall time is omitted so reruns compare equal)
  void write_csv(const std::string& path) const;
};

// Sum of per-sample losses and gradients over `indices`. Sample k uses a
// dropout stream seeded with derive_seed(seed, epoch, indices[k]), so both
// versions return bit-identical results regardless of thread count.
struct BatchGradient {
  double loss_sum = 0.0;
  std::vector<Tensor> grad_sum;
};

BatchGradient batch_gradient_serial(const Network& net, const SupervisedSet& set,
                                    std::span<const std::size_t> indices, std::uint64_t seed,
                                    std::size_t epoch);
BatchGradient batch_gradient_parallel(const Network& net, const SupervisedSet& set,
                                      std::span<const std::size_t> indices, std::uint64_t seed,
                                      std::size_t epoch);

// Inference outputs for every input, in order.
std::vector<double> predict_all_serial(const Network& net, const std::vector<Tensor>& inputs);
std::vector<double> predict_all(const Network& net, const std::vector<Tensor>& inputs);

// Mean inference loss over a set.
double evaluate_loss(const Network& net, const SupervisedSet& set);

struct FitResult {
  Network network;  // parameters of the best validation epoch
  TrainLog log;
};

FitResult fit(Network net, const SupervisedSet& train, const SupervisedSet& val, const TrainConfig& config);

}  // namespace gridcast
