// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gridcast/layers.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

enum class Head { regression, classification };

std::string to_string(Head head);
Head head_from_string(const std::string& name);

struct NetworkConfig {
  std::size_t window = 8;
  std::size_t features = 13;
  std::size_t blocks = 2;
  std::size_t conv_filters = 16;
  std::size_t kernel = 3;
  std::size_t gru_units = 16;
  std::size_t attn_dim = 16;
  std::size_t mlp_hidden = 32;
  double dropout_rate = 0.2;
  Head head = Head::regression;
  Activation conv_activation = Activation::relu;

  // Empty when the configuration is usable.
  std::vector<std::string> violations() const;
  // Throws ParameterError listing every violation.
  void validate() const;

  std::size_t merged_width() const { return conv_filters + gru_units; }

  bool operator==(const NetworkConfig&) const = default;
};

// One repetition of [conv || attention(gru)] -> concat -> layer norm.
struct Block {
  Conv1d conv;
  Gru gru;
  Attention attention;
  LayerNorm norm;
};

// Intermediates of one differentiable forward pass.
struct NetworkTape {
  struct BlockTape {
    Conv1d::Cache conv;
    Gru::Cache gru;
    Attention::Cache attention;
    LayerNorm::Cache norm;
  };
  bool valid = false;
  std::vector<BlockTape> blocks;
  Dense::Cache hidden;
  Tensor dropout_mask;
  Dense::Cache output;
};

// Concatenate two [T x a] and [T x b] matrices along features.
Tensor concat_features(const Tensor& left, const Tensor& right);

/// The CNN-GRU-attention network with its MLP head.
///
/// Each block runs a Conv1d branch on the block input and a GRU followed by
/// self-attention on the same input, concatenates both along features and
/// layer-normalizes the result. After the last block the final timestep is
/// fed through dense(relu) -> dropout -> dense, with a linear output for
/// regression and a sigmoid output for classification.
class Network {
 public:
  Network() = default;

  static Network build(const NetworkConfig& config, Rng& rng);

  const NetworkConfig& config() const { return config_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& blocks() { return blocks_; }
  Dense& hidden() { return hidden_; }
  Dense& output() { return output_; }
  const Dense& hidden() const { return hidden_; }
  const Dense& output() const { return output_; }

  // x is [window x features]; result has shape [1]. When `tape` is given
  // the intermediates needed by backward() are recorded there.
  Tensor forward(const Tensor& x, bool training, Rng& rng, NetworkTape* tape = nullptr) const;
  // Inference pass; safe to call concurrently.
  double predict(const Tensor& x) const;

  // Gradients for every parameter, in parameters() order.
  std::vector<Tensor> backward(const NetworkTape& tape, const Tensor& loss_grad) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  void copy_parameters_from(const Network& other);

 private:
  NetworkConfig config_;
  std::vector<Block> blocks_;
  Dense hidden_;
  Dense output_;
};

// Forward + backward convenience wrapper.
std::vector<Tensor> network_backward(const Network& net, const NetworkTape& tape, const Tensor& loss_grad);

/// Self-describing text model file: config, free-form metadata, every
/// parameter tensor and optional named extra tensors. Values are stored as
/// hexadecimal floats so a round trip is bit-exact.
struct ModelFile {
  Network network;
  std::map<std::string, std::string> metadata;
  std::map<std::string, Tensor> extras;
};

void save_model(const std::string& path, const ModelFile& model);
ModelFile load_model(const std::string& path);

}  // namespace gridcast
