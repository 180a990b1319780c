// SPDX-License-Identifier: Apache-2.0
#include "gridcast/layers.hpp"

#include <cmath>
#include <string>

#include "gridcast/error.hpp"

namespace gridcast {

namespace {

void require_valid(bool valid, const char* layer) {
  if (!valid) throw StateError(std::string(layer) + ": backward called without a prior forward");
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected)
    throw DimensionError(std::string(what) + ": expected " + shape_string(expected) + ", got " +
                         shape_string(t.shape()));
}

void require_width(const Tensor& x, std::size_t width, const char* layer) {
  if (x.rank() != 2 || x.cols() != width || x.rows() == 0)
    throw DimensionError(std::string(layer) + ": input " + shape_string(x.shape()) +
                         " does not have " + std::to_string(width) + " columns");
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// out[j] += sum_i v[i] * m[i, j] for m [rows x cols]
void vec_mat_acc(const double* v, const Tensor& m, double* out) {
  const std::size_t rows = m.extent(0), cols = m.extent(1);
  const double* data = m.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double vi = v[i];
    const double* mrow = data + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += vi * mrow[j];
  }
}

// out[i] += sum_j v[j] * m[i, j]  (v times m transposed)
void vec_mat_t_acc(const double* v, const Tensor& m, double* out) {
  const std::size_t rows = m.extent(0), cols = m.extent(1);
  const double* data = m.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* mrow = data + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += v[j] * mrow[j];
    out[i] += acc;
  }
}

}  // namespace

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

// ---------------------------------------------------------------- Conv1d

void validate(const Conv1dParams& p) {
  if (p.kernels.rank() != 3) throw DimensionError("conv1d: kernels must be [out x in x k]");
  if (p.kernel_size() % 2 == 0) throw ParameterError("conv1d: kernel size must be odd");
  if (p.out_channels() == 0 || p.in_channels() == 0)
    throw ParameterError("conv1d: channel counts must be positive");
  require_shape(p.bias, {p.out_channels()}, "conv1d bias");
}

Tensor conv1d_apply(const Conv1dParams& p, const Tensor& x) {
  validate(p);
  const std::size_t in = p.in_channels(), out = p.out_channels(), k = p.kernel_size();
  require_width(x, in, "conv1d");
  const std::size_t steps = x.rows();
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor y({steps, out});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = p.bias[o];
      for (std::size_t j = 0; j < k; ++j) {
        const auto s = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(steps)) continue;
        const double* xrow = x.data() + static_cast<std::size_t>(s) * in;
        for (std::size_t i = 0; i < in; ++i) acc += p.kernels(o, i, j) * xrow[i];
      }
      y(t, o) = acc;
    }
  }
  return y;
}

Conv1d::Conv1d(Conv1dParams p, Activation act) : params(std::move(p)), activation(act) { validate(params); }

Conv1d Conv1d::init(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Activation act, Rng& rng) {
  if (in_ch == 0 || out_ch == 0) throw ParameterError("conv1d: channel counts must be positive");
  if (kernel % 2 == 0) throw ParameterError("conv1d: kernel size must be odd");
  Conv1dParams p{glorot_uniform({out_ch, in_ch, kernel}, in_ch * kernel, out_ch * kernel, rng),
                 Tensor({out_ch})};
  return Conv1d(std::move(p), act);
}

Tensor Conv1d::forward(const Tensor& x, Cache* cache) const {
  Tensor y = activate(conv1d_apply(params, x), activation);
  if (cache) *cache = {true, x, y};
  return y;
}

LayerGrads Conv1d::backward(const Cache& cache, const Tensor& upstream) const {
  require_valid(cache.valid, "conv1d");
  require_same_shape(upstream, cache.output, "conv1d backward");
  const Tensor dz = hadamard(upstream, activation_grad_from_output(cache.output, activation));
  const Tensor& x = cache.input;
  const std::size_t in = params.in_channels(), out = params.out_channels(), k = params.kernel_size();
  const std::size_t steps = x.rows();
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);

  Tensor dx({steps, in});
  Tensor dw(params.kernels.shape());
  Tensor db = column_sums(dz);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dz(t, o);
      if (g == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) {
        const auto s = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(steps)) continue;
        const auto su = static_cast<std::size_t>(s);
        for (std::size_t i = 0; i < in; ++i) {
          dw(o, i, j) += g * x(su, i);
          dx(su, i) += g * params.kernels(o, i, j);
        }
      }
    }
  }
  return {std::move(dx), {std::move(dw), std::move(db)}};
}

// ---------------------------------------------------------------- GRU

void validate(const GruParams& p) {
  if (p.w_reset.rank() != 2) throw DimensionError("gru: input weights must be matrices");
  const std::size_t in = p.input_size(), h = p.hidden_size();
  if (in == 0 || h == 0) throw ParameterError("gru: sizes must be positive");
  for (const Tensor* w : {&p.w_reset, &p.w_update, &p.w_candidate}) require_shape(*w, {in, h}, "gru input weight");
  for (const Tensor* u : {&p.u_reset, &p.u_update, &p.u_candidate}) require_shape(*u, {h, h}, "gru recurrent weight");
  for (const Tensor* b : {&p.b_reset, &p.b_update, &p.b_candidate}) require_shape(*b, {h}, "gru bias");
}

Tensor gru_apply(const GruParams& p, const Tensor& x, const Tensor& h0) {
  return Gru(p).forward(x, nullptr, &h0);
}

Gru::Gru(GruParams p) : params(std::move(p)) { validate(params); }

Gru Gru::init(std::size_t input, std::size_t hidden, Rng& rng) {
  if (input == 0 || hidden == 0) throw ParameterError("gru: sizes must be positive");
  GruParams p;
  p.w_reset = glorot_uniform({input, hidden}, input, hidden, rng);
  p.w_update = glorot_uniform({input, hidden}, input, hidden, rng);
  p.w_candidate = glorot_uniform({input, hidden}, input, hidden, rng);
  p.u_reset = glorot_uniform({hidden, hidden}, hidden, hidden, rng);
  p.u_update = glorot_uniform({hidden, hidden}, hidden, hidden, rng);
  p.u_candidate = glorot_uniform({hidden, hidden}, hidden, hidden, rng);
  p.b_reset = Tensor({hidden});
  p.b_update = Tensor({hidden});
  p.b_candidate = Tensor({hidden});
  return Gru(std::move(p));
}

std::vector<Tensor*> Gru::parameters() {
  auto& p = params;
  return {&p.w_reset, &p.w_update, &p.w_candidate, &p.u_reset, &p.u_update,
          &p.u_candidate, &p.b_reset, &p.b_update, &p.b_candidate};
}

std::vector<const Tensor*> Gru::parameters() const {
  const auto& p = params;
  return {&p.w_reset, &p.w_update, &p.w_candidate, &p.u_reset, &p.u_update,
          &p.u_candidate, &p.b_reset, &p.b_update, &p.b_candidate};
}

Tensor Gru::forward(const Tensor& x, Cache* cache, const Tensor* h0) const {
  const std::size_t in = params.input_size(), hidden = params.hidden_size();
  require_width(x, in, "gru");
  if (h0) require_shape(*h0, {hidden}, "gru initial state");
  const std::size_t steps = x.rows();

  // Input projections for all steps at once.
  const Tensor xr = add_row_bias(matmul(x, params.w_reset), params.b_reset);
  const Tensor xz = add_row_bias(matmul(x, params.w_update), params.b_update);
  const Tensor xc = add_row_bias(matmul(x, params.w_candidate), params.b_candidate);

  Tensor states({steps, hidden});
  Tensor prev({steps, hidden}), reset({steps, hidden}), update({steps, hidden});
  Tensor candidate({steps, hidden}), gated({steps, hidden});
  std::vector<double> h(hidden, 0.0);
  if (h0) h.assign(h0->values().begin(), h0->values().end());
  std::vector<double> ar(hidden), az(hidden), ac(hidden), rh(hidden);

  for (std::size_t t = 0; t < steps; ++t) {
    std::copy(h.begin(), h.end(), prev.row(t).begin());
    std::copy(xr.row(t).begin(), xr.row(t).end(), ar.begin());
    std::copy(xz.row(t).begin(), xz.row(t).end(), az.begin());
    vec_mat_acc(h.data(), params.u_reset, ar.data());
    vec_mat_acc(h.data(), params.u_update, az.data());
    auto r = reset.row(t);
    auto z = update.row(t);
    for (std::size_t j = 0; j < hidden; ++j) {
      r[j] = sigmoid(ar[j]);
      z[j] = sigmoid(az[j]);
      rh[j] = r[j] * h[j];
    }
    std::copy(rh.begin(), rh.end(), gated.row(t).begin());
    std::copy(xc.row(t).begin(), xc.row(t).end(), ac.begin());
    vec_mat_acc(rh.data(), params.u_candidate, ac.data());
    auto c = candidate.row(t);
    auto out = states.row(t);
    for (std::size_t j = 0; j < hidden; ++j) {
      c[j] = std::tanh(ac[j]);
      h[j] = (1.0 - z[j]) * h[j] + z[j] * c[j];
      out[j] = h[j];
    }
  }
  if (cache) {
    cache->valid = true;
    cache->input = x;
    cache->prev = std::move(prev);
    cache->reset = std::move(reset);
    cache->update = std::move(update);
    cache->candidate = std::move(candidate);
    cache->gated_prev = std::move(gated);
  }
  return states;
}

LayerGrads Gru::backward(const Cache& cache, const Tensor& upstream) const {
  require_valid(cache.valid, "gru");
  require_same_shape(upstream, cache.prev, "gru backward");
  const std::size_t hidden = params.hidden_size();
  const std::size_t steps = cache.input.rows();

  // Pre-activation gradients of the three paths, one row per step.
  Tensor dar({steps, hidden}), daz({steps, hidden}), dac({steps, hidden});
  std::vector<double> carry(hidden, 0.0), dh(hidden), dprev(hidden), drh(hidden);

  for (std::size_t step = steps; step-- > 0;) {
    const auto up = upstream.row(step);
    const auto hp = cache.prev.row(step);
    const auto r = cache.reset.row(step);
    const auto z = cache.update.row(step);
    const auto c = cache.candidate.row(step);
    auto gr = dar.row(step);
    auto gz = daz.row(step);
    auto gc = dac.row(step);
    for (std::size_t j = 0; j < hidden; ++j) {
      dh[j] = up[j] + carry[j];
      dprev[j] = dh[j] * (1.0 - z[j]);
      gc[j] = dh[j] * z[j] * (1.0 - c[j] * c[j]);
      gz[j] = dh[j] * (c[j] - hp[j]) * z[j] * (1.0 - z[j]);
      drh[j] = 0.0;
    }
    vec_mat_t_acc(gc.data(), params.u_candidate, drh.data());
    for (std::size_t j = 0; j < hidden; ++j) {
      gr[j] = drh[j] * hp[j] * r[j] * (1.0 - r[j]);
      dprev[j] += drh[j] * r[j];
    }
    vec_mat_t_acc(gz.data(), params.u_update, dprev.data());
    vec_mat_t_acc(gr.data(), params.u_reset, dprev.data());
    carry = dprev;
  }

  const Tensor& x = cache.input;
  Tensor dx = matmul_nt(dar, params.w_reset);
  axpy(dx, 1.0, matmul_nt(daz, params.w_update));
  axpy(dx, 1.0, matmul_nt(dac, params.w_candidate));

  std::vector<Tensor> grads;
  grads.reserve(9);
  grads.push_back(matmul_tn(x, dar));
  grads.push_back(matmul_tn(x, daz));
  grads.push_back(matmul_tn(x, dac));
  grads.push_back(matmul_tn(cache.prev, dar));
  grads.push_back(matmul_tn(cache.prev, daz));
  grads.push_back(matmul_tn(cache.gated_prev, dac));
  grads.push_back(column_sums(dar));
  grads.push_back(column_sums(daz));
  grads.push_back(column_sums(dac));
  return {std::move(dx), std::move(grads)};
}

// ---------------------------------------------------------------- Attention

void validate(const AttentionParams& p) {
  if (p.key_weight.rank() != 2 || p.query_weight.rank() != 2)
    throw DimensionError("attention: projections must be matrices");
  if (p.key_weight.shape() != p.query_weight.shape())
    throw DimensionError("attention: key " + shape_string(p.key_weight.shape()) + " and query " +
                         shape_string(p.query_weight.shape()) + " projections differ");
  if (p.key_weight.cols() == 0) throw ParameterError("attention: width must be positive");
}

Tensor attention_weights(const AttentionParams& p, const Tensor& x) {
  validate(p);
  require_width(x, p.key_weight.rows(), "attention");
  const Tensor keys = matmul(x, p.key_weight);
  const Tensor queries = matmul(x, p.query_weight);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(p.key_weight.cols()));
  return softmax_rows(scale(matmul_nt(queries, keys), inv_scale));
}

Tensor attention_apply(const AttentionParams& p, const Tensor& x) {
  return matmul(attention_weights(p, x), x);
}

Attention::Attention(AttentionParams p) : params(std::move(p)) { validate(params); }

Attention Attention::init(std::size_t width, std::size_t attn_dim, Rng& rng) {
  if (width == 0 || attn_dim == 0) throw ParameterError("attention: sizes must be positive");
  AttentionParams p{glorot_uniform({width, attn_dim}, width, attn_dim, rng),
                    glorot_uniform({width, attn_dim}, width, attn_dim, rng)};
  return Attention(std::move(p));
}

Tensor Attention::forward(const Tensor& x, Cache* cache) const {
  require_width(x, params.key_weight.rows(), "attention");
  Tensor keys = matmul(x, params.key_weight);
  Tensor queries = matmul(x, params.query_weight);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(params.key_weight.cols()));
  Tensor weights = softmax_rows(scale(matmul_nt(queries, keys), inv_scale));
  Tensor out = matmul(weights, x);
  if (cache) *cache = {true, x, std::move(keys), std::move(queries), std::move(weights)};
  return out;
}

LayerGrads Attention::backward(const Cache& cache, const Tensor& upstream) const {
  require_valid(cache.valid, "attention");
  require_same_shape(upstream, cache.input, "attention backward");
  const Tensor& x = cache.input;
  const Tensor& a = cache.weights;
  const std::size_t steps = x.rows();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(params.key_weight.cols()));

  Tensor dx = matmul_tn(a, upstream);       // value path
  const Tensor da = matmul_nt(upstream, x);  // [T x T]
  Tensor ds({steps, steps});
  for (std::size_t t = 0; t < steps; ++t) {
    double dot = 0.0;
    for (std::size_t i = 0; i < steps; ++i) dot += da(t, i) * a(t, i);
    for (std::size_t i = 0; i < steps; ++i) ds(t, i) = a(t, i) * (da(t, i) - dot) * inv_scale;
  }
  const Tensor dq = matmul(ds, cache.keys);
  const Tensor dk = matmul_tn(ds, cache.queries);
  axpy(dx, 1.0, matmul_nt(dq, params.query_weight));
  axpy(dx, 1.0, matmul_nt(dk, params.key_weight));
  return {std::move(dx), {matmul_tn(x, dk), matmul_tn(x, dq)}};
}

// ---------------------------------------------------------------- Dense

void validate(const DenseParams& p) {
  if (p.weight.rank() != 2) throw DimensionError("dense: weight must be a matrix");
  require_shape(p.bias, {p.weight.cols()}, "dense bias");
}

Tensor dense_apply(const DenseParams& p, const Tensor& x) {
  validate(p);
  if (x.cols() != p.weight.rows())
    throw DimensionError("dense: input " + shape_string(x.shape()) + " vs weight " +
                         shape_string(p.weight.shape()));
  return activate(add_row_bias(matmul(x, p.weight), p.bias), p.activation);
}

Dense::Dense(DenseParams p) : params(std::move(p)) { validate(params); }

Dense Dense::init(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  if (in == 0 || out == 0) throw ParameterError("dense: sizes must be positive");
  return Dense(DenseParams{glorot_uniform({in, out}, in, out, rng), Tensor({out}), act});
}

Tensor Dense::forward(const Tensor& x, Cache* cache) const {
  const Tensor rows = x.rank() == 1 ? x.reshaped({1, x.size()}) : x;
  Tensor y = dense_apply(params, rows);
  if (cache) *cache = {true, rows, y};
  return y;
}

LayerGrads Dense::backward(const Cache& cache, const Tensor& upstream) const {
  require_valid(cache.valid, "dense");
  require_same_shape(upstream, cache.output, "dense backward");
  const Tensor dz = hadamard(upstream, activation_grad_from_output(cache.output, params.activation));
  return {matmul_nt(dz, params.weight), {matmul_tn(cache.input, dz), column_sums(dz)}};
}

// ---------------------------------------------------------------- Dropout

Tensor dropout_apply(const Tensor& x, double rate, bool training, Rng& rng, Tensor* mask) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) {
    if (mask) *mask = Tensor(x.shape(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor m(x.shape());
  for (auto& v : m.values()) v = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = hadamard(x, m);
  if (mask) *mask = std::move(m);
  return out;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& upstream) { return hadamard(upstream, mask); }

// ---------------------------------------------------------------- LayerNorm

void validate(const LayerNormParams& p) {
  if (!(p.epsilon > 0.0)) throw ParameterError("layernorm: epsilon must be positive");
  if (p.gain.rank() != 1 || p.gain.size() == 0) throw DimensionError("layernorm: gain must be a non-empty vector");
  require_shape(p.shift, p.gain.shape(), "layernorm shift");
}

Tensor layernorm_apply(const LayerNormParams& p, const Tensor& x) { return LayerNorm(p).forward(x); }

LayerNorm::LayerNorm(LayerNormParams p) : params(std::move(p)) { validate(params); }

LayerNorm LayerNorm::init(std::size_t width, double epsilon) {
  return LayerNorm(LayerNormParams{Tensor({width}, 1.0), Tensor({width}), epsilon});
}

Tensor LayerNorm::forward(const Tensor& x, Cache* cache) const {
  const std::size_t d = params.gain.size();
  require_width(x, d, "layernorm");
  const std::size_t n = x.rows();
  Tensor normalized({n, d});
  Tensor inv_std({n});
  Tensor y({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + params.epsilon);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * inv;
      normalized(i, j) = xh;
      y(i, j) = params.gain[j] * xh + params.shift[j];
    }
  }
  if (cache) *cache = {true, std::move(normalized), std::move(inv_std)};
  return y;
}

LayerGrads LayerNorm::backward(const Cache& cache, const Tensor& upstream) const {
  require_valid(cache.valid, "layernorm");
  require_same_shape(upstream, cache.normalized, "layernorm backward");
  const std::size_t n = upstream.rows(), d = upstream.cols();
  Tensor dx({n, d});
  Tensor dgain({d}), dshift({d});
  std::vector<double> dxh(d);
  for (std::size_t i = 0; i < n; ++i) {
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = upstream(i, j);
      const double xh = cache.normalized(i, j);
      dgain[j] += g * xh;
      dshift[j] += g;
      dxh[j] = g * params.gain[j];
      sum_dxh += dxh[j];
      sum_dxh_xh += dxh[j] * xh;
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) = cache.inv_std[i] * (dxh[j] - inv_d * sum_dxh - cache.normalized(i, j) * inv_d * sum_dxh_xh);
  }
  return {std::move(dx), {std::move(dgain), std::move(dshift)}};
}

}  // namespace gridcast
