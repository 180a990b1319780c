// SPDX-License-Identifier: Apache-2.0
#include "gridcast/network.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gridcast/error.hpp"

namespace gridcast {

std::string to_string(Head head) { return head == Head::regression ? "regression" : "classification"; }

Head head_from_string(const std::string& name) {
  if (name == "regression") return Head::regression;
  if (name == "classification") return Head::classification;
  throw ParameterError("unknown head/task '" + name + "' (expected regression or classification)");
}

std::vector<std::string> NetworkConfig::violations() const {
  std::vector<std::string> out;
  auto positive = [&out](std::size_t v, const char* name) {
    if (v == 0) out.push_back(std::string(name) + " must be >= 1");
  };
  positive(window, "window");
  positive(features, "features");
  positive(blocks, "blocks");
  positive(conv_filters, "conv_filters");
  positive(kernel, "kernel");
  positive(gru_units, "gru_units");
  positive(attn_dim, "attn_dim");
  positive(mlp_hidden, "mlp_hidden");
  if (kernel % 2 == 0) out.push_back("kernel must be odd");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) out.push_back("dropout_rate must lie in [0, 1)");
  return out;
}

void NetworkConfig::validate() const {
  const auto problems = violations();
  if (problems.empty()) return;
  std::string msg = "invalid network config:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw ParameterError(msg);
}

Tensor concat_features(const Tensor& left, const Tensor& right) {
  if (left.rows() != right.rows())
    throw DimensionError("concat_features: " + shape_string(left.shape()) + " vs " + shape_string(right.shape()));
  const std::size_t n = left.rows(), a = left.cols(), b = right.cols();
  Tensor out({n, a + b});
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.row(i);
    std::copy(left.row(i).begin(), left.row(i).end(), dst.begin());
    std::copy(right.row(i).begin(), right.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a));
  }
  return out;
}

namespace {

std::pair<Tensor, Tensor> split_features(const Tensor& x, std::size_t left_width) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor left({n, left_width}), right({n, d - left_width});
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = x.row(i);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(left_width), left.row(i).begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(left_width), src.end(), right.row(i).begin());
  }
  return {std::move(left), std::move(right)};
}

}  // namespace

Network Network::build(const NetworkConfig& config, Rng& rng) {
  config.validate();
  Network net;
  net.config_ = config;
  std::size_t width = config.features;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    Block block;
    block.conv = Conv1d::init(width, config.conv_filters, config.kernel, config.conv_activation, rng);
    block.gru = Gru::init(width, config.gru_units, rng);
    block.attention = Attention::init(config.gru_units, config.attn_dim, rng);
    block.norm = LayerNorm::init(config.merged_width());
    net.blocks_.push_back(std::move(block));
    width = config.merged_width();
  }
  net.hidden_ = Dense::init(width, config.mlp_hidden, Activation::relu, rng);
  net.output_ = Dense::init(config.mlp_hidden, 1,
                            config.head == Head::regression ? Activation::identity : Activation::sigmoid, rng);
  return net;
}

Tensor Network::forward(const Tensor& x, bool training, Rng& rng, NetworkTape* tape) const {
  if (x.rank() != 2 || x.rows() != config_.window || x.cols() != config_.features)
    throw DimensionError("network input " + shape_string(x.shape()) + " does not match [" +
                         std::to_string(config_.window) + "x" + std::to_string(config_.features) + "]");
  if (tape) {
    *tape = {};
    tape->blocks.resize(blocks_.size());
  }
  Tensor h = x;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& block = blocks_[b];
    NetworkTape::BlockTape* bt = tape ? &tape->blocks[b] : nullptr;
    const Tensor conv = block.conv.forward(h, bt ? &bt->conv : nullptr);
    const Tensor seq = block.gru.forward(h, bt ? &bt->gru : nullptr);
    const Tensor attended = block.attention.forward(seq, bt ? &bt->attention : nullptr);
    h = block.norm.forward(concat_features(conv, attended), bt ? &bt->norm : nullptr);
  }
  const std::size_t last = h.rows() - 1;
  const Tensor summary({1, h.cols()}, std::vector<double>(h.row(last).begin(), h.row(last).end()));
  Tensor hidden = hidden_.forward(summary, tape ? &tape->hidden : nullptr);
  hidden = dropout_apply(hidden, config_.dropout_rate, training, rng, tape ? &tape->dropout_mask : nullptr);
  const Tensor out = output_.forward(hidden, tape ? &tape->output : nullptr);
  if (tape) tape->valid = true;
  return out.reshaped({1});
}

double Network::predict(const Tensor& x) const {
  Rng unused(0);
  return forward(x, false, unused)[0];
}

std::vector<Tensor> Network::backward(const NetworkTape& tape, const Tensor& loss_grad) const {
  if (!tape.valid) throw StateError("network backward called without a recorded forward pass");
  if (loss_grad.size() != 1)
    throw DimensionError("network backward: loss gradient must have one element, got " +
                         shape_string(loss_grad.shape()));

  std::vector<std::vector<Tensor>> block_grads(blocks_.size());
  const LayerGrads out_g = output_.backward(tape.output, loss_grad.reshaped({1, 1}));
  const LayerGrads hid_g = hidden_.backward(tape.hidden, dropout_backward(tape.dropout_mask, out_g.input));

  const std::size_t steps = config_.window;
  const std::size_t width = config_.merged_width();
  Tensor upstream({steps, width});
  std::copy(hid_g.input.values().begin(), hid_g.input.values().end(), upstream.row(steps - 1).begin());

  for (std::size_t b = blocks_.size(); b-- > 0;) {
    const Block& block = blocks_[b];
    const auto& bt = tape.blocks[b];
    LayerGrads norm_g = block.norm.backward(bt.norm, upstream);
    auto [d_conv, d_attended] = split_features(norm_g.input, config_.conv_filters);
    LayerGrads attn_g = block.attention.backward(bt.attention, d_attended);
    LayerGrads gru_g = block.gru.backward(bt.gru, attn_g.input);
    LayerGrads conv_g = block.conv.backward(bt.conv, d_conv);
    upstream = add(conv_g.input, gru_g.input);

    auto& g = block_grads[b];
    for (auto* list : {&conv_g.params, &gru_g.params, &attn_g.params, &norm_g.params})
      for (auto& t : *list) g.push_back(std::move(t));
  }

  std::vector<Tensor> grads;
  for (auto& g : block_grads)
    for (auto& t : g) grads.push_back(std::move(t));
  for (const auto* list : {&hid_g.params, &out_g.params})
    for (const auto& t : *list) grads.push_back(t);
  return grads;
}

std::vector<Tensor> network_backward(const Network& net, const NetworkTape& tape, const Tensor& loss_grad) {
  return net.backward(tape, loss_grad);
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& block : blocks_) {
    for (Tensor* t : block.conv.parameters()) out.push_back(t);
    for (Tensor* t : block.gru.parameters()) out.push_back(t);
    for (Tensor* t : block.attention.parameters()) out.push_back(t);
    for (Tensor* t : block.norm.parameters()) out.push_back(t);
  }
  for (Tensor* t : hidden_.parameters()) out.push_back(t);
  for (Tensor* t : output_.parameters()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<Network*>(this)->parameters()) out.push_back(t);
  return out;
}

std::vector<std::string> Network::parameter_names() const {
  static const char* kBlockNames[] = {"conv.kernels", "conv.bias",  "gru.w_reset",      "gru.w_update",
                                      "gru.w_candidate", "gru.u_reset", "gru.u_update", "gru.u_candidate",
                                      "gru.b_reset", "gru.b_update", "gru.b_candidate", "attention.key",
                                      "attention.query", "norm.gain", "norm.shift"};
  std::vector<std::string> names;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    for (const char* n : kBlockNames) names.push_back("block" + std::to_string(b) + "." + n);
  for (const char* n : {"head.hidden.weight", "head.hidden.bias", "head.output.weight", "head.output.bias"})
    names.emplace_back(n);
  return names;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

void Network::copy_parameters_from(const Network& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw DimensionError("copy_parameters_from: architectures differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require_same_shape(*dst[i], *src[i], "copy_parameters_from");
    *dst[i] = *src[i];
  }
}

// ---------------------------------------------------------------- model file

namespace {

constexpr const char* kMagic = "gridcast-model";
constexpr int kVersion = 1;

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

void write_tensor(std::ostream& out, const std::string& kind, const std::string& name, const Tensor& t) {
  out << kind << ' ' << name << ' ' << t.rank();
  for (std::size_t d : t.shape()) out << ' ' << d;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << hex(t[i]);
  out << '\n';
}

Tensor read_tensor_body(std::istream& header, std::istream& in, const std::string& name) {
  std::size_t rank = 0;
  header >> rank;
  Shape shape(rank);
  for (auto& d : shape) header >> d;
  if (!header || rank == 0 || rank > 3) throw DataError("model file: bad shape header for " + name);
  Tensor t(shape);
  std::string line;
  std::getline(in, line);
  std::istringstream values(line);
  std::string token;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(values >> token)) throw DataError("model file: tensor " + name + " is truncated");
    char* end = nullptr;
    t[i] = std::strtod(token.c_str(), &end);
    if (end == token.c_str()) throw DataError("model file: bad value '" + token + "' in " + name);
  }
  return t;
}

}  // namespace

void save_model(const std::string& path, const ModelFile& model) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path);
  const auto& c = model.network.config();
  out << kMagic << ' ' << kVersion << '\n';
  out << "config window " << c.window << '\n'
      << "config features " << c.features << '\n'
      << "config blocks " << c.blocks << '\n'
      << "config conv_filters " << c.conv_filters << '\n'
      << "config kernel " << c.kernel << '\n'
      << "config gru_units " << c.gru_units << '\n'
      << "config attn_dim " << c.attn_dim << '\n'
      << "config mlp_hidden " << c.mlp_hidden << '\n'
      << "config dropout_rate " << hex(c.dropout_rate) << '\n'
      << "config head " << to_string(c.head) << '\n'
      << "config conv_activation " << to_string(c.conv_activation) << '\n';
  for (const auto& [key, value] : model.metadata) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos)
      throw ParameterError("model metadata '" + key + "' must be a single token key and one-line value");
    out << "meta " << key << ' ' << value << '\n';
  }
  const auto names = model.network.parameter_names();
  const auto params = model.network.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) write_tensor(out, "param", names[i], *params[i]);
  for (const auto& [name, t] : model.extras) write_tensor(out, "extra", name, t);
  out << "end\n";
  if (!out) throw IoError("failed while writing model file " + path);
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path);
  std::string line;
  std::getline(in, line);
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic || version != kVersion) throw DataError(path + " is not a gridcast model file");
  }
  NetworkConfig config;
  ModelFile model;
  std::map<std::string, Tensor> params;
  bool ended = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind, key;
    ls >> kind >> key;
    if (kind == "end") {
      ended = true;
      break;
    }
    if (kind == "config") {
      std::string value;
      ls >> value;
      if (key == "window") config.window = std::stoul(value);
      else if (key == "features") config.features = std::stoul(value);
      else if (key == "blocks") config.blocks = std::stoul(value);
      else if (key == "conv_filters") config.conv_filters = std::stoul(value);
      else if (key == "kernel") config.kernel = std::stoul(value);
      else if (key == "gru_units") config.gru_units = std::stoul(value);
      else if (key == "attn_dim") config.attn_dim = std::stoul(value);
      else if (key == "mlp_hidden") config.mlp_hidden = std::stoul(value);
      else if (key == "dropout_rate") config.dropout_rate = std::strtod(value.c_str(), nullptr);
      else if (key == "head") config.head = head_from_string(value);
      else if (key == "conv_activation") config.conv_activation = activation_from_string(value);
      else throw DataError("model file: unknown config key '" + key + "'");
    } else if (kind == "meta") {
      std::string value;
      std::getline(ls >> std::ws, value);
      model.metadata[key] = value;
    } else if (kind == "param") {
      params[key] = read_tensor_body(ls, in, key);
    } else if (kind == "extra") {
      model.extras[key] = read_tensor_body(ls, in, key);
    } else if (!kind.empty()) {
      throw DataError("model file: unexpected record '" + kind + "'");
    }
  }
  if (!ended) throw DataError("model file " + path + " is truncated");

  Rng rng(0);
  model.network = Network::build(config, rng);
  const auto names = model.network.parameter_names();
  auto slots = model.network.parameters();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto it = params.find(names[i]);
    if (it == params.end()) throw DataError("model file: missing parameter " + names[i]);
    require_same_shape(*slots[i], it->second, names[i].c_str());
    *slots[i] = it->second;
  }
  return model;
}

}  // namespace gridcast
