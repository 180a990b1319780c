// SPDX-License-Identifier: Apache-2.0
#pragma once

// Conv1d, GRU, attention, dense, dropout and layer normalization, each with
// an explicit forward pass and an analytic backward pass.
//
// Layers are plain parameter holders. A forward call that should be
// differentiated writes its intermediates into a layer-specific Cache owned
// by the caller, which lets several threads share one set of parameters.
// LayerState bundles a layer with its own cache for single-owner use.

#include <cstddef>
#include <vector>

#include "gridcast/rng.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

struct LayerGrads {
  Tensor input;
  // Same order and shapes as the layer's parameters().
  std::vector<Tensor> params;
};

// Glorot/Xavier uniform initialization.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------- Conv1d

struct Conv1dParams {
  Tensor kernels;  // [out_ch x in_ch x k], k odd
  Tensor bias;     // [out_ch]

  std::size_t out_channels() const { return kernels.extent(0); }
  std::size_t in_channels() const { return kernels.extent(1); }
  std::size_t kernel_size() const { return kernels.extent(2); }
};

void validate(const Conv1dParams& p);

// Stride-1 convolution with symmetric zero padding; output keeps the input
// length. x is [T x in_ch], result [T x out_ch].
Tensor conv1d_apply(const Conv1dParams& p, const Tensor& x);

class Conv1d {
 public:
  struct Cache {
    bool valid = false;
    Tensor input;
    Tensor output;
  };

  Conv1d() = default;
  Conv1d(Conv1dParams params, Activation activation = Activation::identity);
  static Conv1d init(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                     Activation activation, Rng& rng);

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  LayerGrads backward(const Cache& cache, const Tensor& upstream) const;

  std::vector<Tensor*> parameters() { return {&params.kernels, &params.bias}; }
  std::vector<const Tensor*> parameters() const { return {&params.kernels, &params.bias}; }

  Conv1dParams params;
  Activation activation = Activation::identity;
};

// ---------------------------------------------------------------- GRU

// Separate input (w_*) and recurrent (u_*) matrices for the reset, update
// and candidate paths.
struct GruParams {
  Tensor w_reset, w_update, w_candidate;  // [in x hidden]
  Tensor u_reset, u_update, u_candidate;  // [hidden x hidden]
  Tensor b_reset, b_update, b_candidate;  // [hidden]

  std::size_t input_size() const { return w_reset.extent(0); }
  std::size_t hidden_size() const { return w_reset.extent(1); }
};

void validate(const GruParams& p);

// r = sig(x W_r + h U_r + b_r), z = sig(x W_z + h U_z + b_z),
// c = tanh(x W + (r * h) U + b), h' = (1 - z) * h + z * c.
// Returns every hidden state, [T x hidden].
Tensor gru_apply(const GruParams& p, const Tensor& x, const Tensor& h0);

class Gru {
 public:
  struct Cache {
    bool valid = false;
    Tensor input;       // [T x in]
    Tensor prev;        // h_{t-1} per step, [T x hidden]
    Tensor reset;       // r_t
    Tensor update;      // z_t
    Tensor candidate;   // tanh(...)
    Tensor gated_prev;  // r_t * h_{t-1}
  };

  Gru() = default;
  explicit Gru(GruParams params);
  static Gru init(std::size_t input, std::size_t hidden, Rng& rng);

  // h0 defaults to zeros.
  Tensor forward(const Tensor& x, Cache* cache = nullptr, const Tensor* h0 = nullptr) const;
  // Full backpropagation through time over all cached steps.
  LayerGrads backward(const Cache& cache, const Tensor& upstream) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  GruParams params;
};

// ---------------------------------------------------------------- Attention

struct AttentionParams {
  Tensor key_weight;    // [d x d_attn]
  Tensor query_weight;  // [d x d_attn]
};

void validate(const AttentionParams& p);

// Row-stochastic weights alpha[t, i] = softmax_i(q_t . k_i / sqrt(d_attn)).
Tensor attention_weights(const AttentionParams& p, const Tensor& x);
// output_t = sum_i alpha[t, i] x_i; the values are the unprojected inputs.
Tensor attention_apply(const AttentionParams& p, const Tensor& x);

class Attention {
 public:
  struct Cache {
    bool valid = false;
    Tensor input;
    Tensor keys;
    Tensor queries;
    Tensor weights;
  };

  Attention() = default;
  explicit Attention(AttentionParams params);
  static Attention init(std::size_t width, std::size_t attn_dim, Rng& rng);

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  LayerGrads backward(const Cache& cache, const Tensor& upstream) const;

  std::vector<Tensor*> parameters() { return {&params.key_weight, &params.query_weight}; }
  std::vector<const Tensor*> parameters() const { return {&params.key_weight, &params.query_weight}; }

  AttentionParams params;
};

// ---------------------------------------------------------------- Dense

struct DenseParams {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
  Activation activation = Activation::identity;
};

void validate(const DenseParams& p);

Tensor dense_apply(const DenseParams& p, const Tensor& x);

class Dense {
 public:
  struct Cache {
    bool valid = false;
    Tensor input;
    Tensor output;
  };

  Dense() = default;
  explicit Dense(DenseParams params);
  static Dense init(std::size_t in, std::size_t out, Activation activation, Rng& rng);

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  LayerGrads backward(const Cache& cache, const Tensor& upstream) const;

  std::vector<Tensor*> parameters() { return {&params.weight, &params.bias}; }
  std::vector<const Tensor*> parameters() const { return {&params.weight, &params.bias}; }

  DenseParams params;
};

// ---------------------------------------------------------------- Dropout

// Inverted dropout: in training each element is zeroed with probability
// `rate` and survivors are scaled by 1 / (1 - rate); inference is identity.
// When `mask` is non-null it receives the multiplier applied to each element.
Tensor dropout_apply(const Tensor& x, double rate, bool training, Rng& rng, Tensor* mask = nullptr);
Tensor dropout_backward(const Tensor& mask, const Tensor& upstream);

// ---------------------------------------------------------------- LayerNorm

struct LayerNormParams {
  Tensor gain;   // [d]
  Tensor shift;  // [d]
  double epsilon = 1e-5;
};

void validate(const LayerNormParams& p);

// Per row: (x - mean) / sqrt(population variance + epsilon), then gain and shift.
Tensor layernorm_apply(const LayerNormParams& p, const Tensor& x);

class LayerNorm {
 public:
  struct Cache {
    bool valid = false;
    Tensor normalized;  // x_hat
    Tensor inv_std;     // [rows]
  };

  LayerNorm() = default;
  explicit LayerNorm(LayerNormParams params);
  static LayerNorm init(std::size_t width, double epsilon = 1e-5);

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  LayerGrads backward(const Cache& cache, const Tensor& upstream) const;

  std::vector<Tensor*> parameters() { return {&params.gain, &params.shift}; }
  std::vector<const Tensor*> parameters() const { return {&params.gain, &params.shift}; }

  LayerNormParams params;
};

// ---------------------------------------------------------------- LayerState

/// A layer together with the activations of its most recent forward call.
template <typename Layer>
class LayerState {
 public:
  explicit LayerState(Layer layer) : layer_(std::move(layer)) {}

  Tensor forward(const Tensor& x) {
    cache_ = {};
    return layer_.forward(x, &cache_);
  }
  LayerGrads backward(const Tensor& upstream) const { return layer_.backward(cache_, upstream); }

  Layer& layer() { return layer_; }
  const Layer& layer() const { return layer_; }

 private:
  Layer layer_;
  typename Layer::Cache cache_;
};

}  // namespace gridcast
