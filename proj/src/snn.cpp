#include "pdr/snn.hpp"

#include <cmath>
#include <cstddef>

namespace pdr::snn {

std::string to_string(LayerMode m) {
  switch (m) {
    case LayerMode::Linear: return "linear";
    case LayerMode::Relu: return "relu";
    case LayerMode::ResNet: return "resnet";
  }
  throw ConfigError("unknown layer mode");
}

std::string to_string(OutputTransform t) {
  switch (t) {
    case OutputTransform::Identity: return "identity";
    case OutputTransform::Abs: return "abs";
    case OutputTransform::Softplus: return "softplus";
  }
  throw ConfigError("unknown output transform");
}

LayerMode layer_mode_from_string(const std::string& s) {
  if (s == "linear") return LayerMode::Linear;
  if (s == "relu") return LayerMode::Relu;
  if (s == "resnet") return LayerMode::ResNet;
  throw ConfigError("unknown layer mode: " + s);
}

OutputTransform output_transform_from_string(const std::string& s) {
  if (s == "identity") return OutputTransform::Identity;
  if (s == "abs") return OutputTransform::Abs;
  if (s == "softplus") return OutputTransform::Softplus;
  throw ConfigError("unknown output transform: " + s);
}

int SnnSpec::layer_in(int k) const {
  return k == 0 ? input_dim : hidden_widths[static_cast<std::size_t>(k) - 1];
}

int SnnSpec::layer_out(int k) const {
  return k < static_cast<int>(hidden_widths.size()) ? hidden_widths[static_cast<std::size_t>(k)]
                                                    : output_dim;
}

void SnnSpec::validate() const {
  if (input_dim < 1) throw ConfigError("snn: input_dim must be >= 1");
  if (output_dim < 1) throw ConfigError("snn: output_dim must be >= 1");
  if (hidden_widths.empty()) throw ConfigError("snn: hidden_widths must be nonempty");
  for (int w : hidden_widths)
    if (w < 1) throw ConfigError("snn: hidden widths must be >= 1");
  if (modes.size() != hidden_widths.size())
    throw ConfigError("snn: need one propagation mode per hidden layer");
  for (std::size_t k = 0; k < modes.size(); ++k) {
    if (modes[k] == LayerMode::ResNet && layer_in(static_cast<int>(k)) != layer_out(static_cast<int>(k)))
      throw ConfigError("snn: resnet layers require equal consecutive widths");
  }
  if (!(init_weight_mean_std > 0.0))
    throw ConfigError("snn: init_weight_mean_std must be > 0 (sigma is positive)");
  if (!output_transform.empty() &&
      output_transform.size() != static_cast<std::size_t>(output_dim))
    throw ConfigError("snn: output_transform needs one entry per output coordinate");
  if (init_bias.kind == InitDescriptor::Kind::Normal && init_bias.stddev < 0.0)
    throw ConfigError("snn: bias stddev must be >= 0");
}

SnnState init(const SnnSpec& spec, std::uint64_t seed) {
  spec.validate();
  SnnState state;
  state.spec = spec;
  RngStream rng(seed);
  const double log_sigma = std::log(spec.init_weight_mean_std);
  for (int k = 0; k < spec.num_layers(); ++k) {
    const int out = spec.layer_out(k);
    const int in = spec.layer_in(k);
    LayerParams layer;
    layer.a = Array::mat(out, in);
    layer.s = Array::mat(out, in, log_sigma);
    layer.b = Array::vec(out);
    for (std::size_t i = 0; i < layer.a.size(); ++i)
      layer.a[i] = rng.normal(0.0, spec.init_weight_mean_std);
    if (spec.init_bias.kind == InitDescriptor::Kind::Constant) {
      for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] = spec.init_bias.value;
    } else if (spec.init_bias.stddev == 0.0) {
      for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] = spec.init_bias.mean;
    } else {
      for (std::size_t i = 0; i < layer.b.size(); ++i)
        layer.b[i] = rng.normal(spec.init_bias.mean, spec.init_bias.stddev);
    }
    state.layers.push_back(std::move(layer));
  }
  return state;
}

TapedSnn make_taped(ad::Tape& tape, const SnnState& state) {
  TapedSnn net;
  net.spec = &state.spec;
  for (const LayerParams& layer : state.layers) {
    TapedLayer tl;
    tl.a = tape.leaf(layer.a);
    tl.s = tape.leaf(layer.s);
    tl.b = tape.leaf(layer.b);
    tl.sigma = ad::exp(tl.s);
    net.layers.push_back(tl);
  }
  return net;
}

namespace {

Array draw_eps(int out, int in, RngStream& rng) {
  Array eps = Array::mat(out, in);
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  return eps;
}

// softplus(x) = relu(x) + log(1 + exp(-|x|)), stable for large |x|
ad::Var softplus(ad::Tape& tape, const ad::Var& x) {
  const ad::Var ones = tape.constant([&] {
    Array o = x.value().zeros_like();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0;
    return o;
  }());
  return ad::add(ad::relu(x), ad::log(ad::add(ones, ad::exp(ad::scale(ad::abs(x), -1.0)))));
}

ad::Var apply_transform(ad::Tape& tape, const ad::Var& x, OutputTransform t) {
  switch (t) {
    case OutputTransform::Identity: return x;
    case OutputTransform::Abs: return ad::abs(x);
    case OutputTransform::Softplus: return softplus(tape, x);
  }
  throw ConfigError("unknown output transform");
}

bool all_identity(const SnnSpec& spec) {
  for (int i = 0; i < spec.output_dim; ++i)
    if (spec.transform_of(i) != OutputTransform::Identity) return false;
  return true;
}

// Raw network pass without the output transform.
ad::Var forward_core(ad::Tape& tape, const TapedSnn& net, const ad::Var& input, RngStream& rng) {
  const SnnSpec& spec = *net.spec;
  ad::Var z = input;
  for (int k = 0; k < spec.num_layers(); ++k) {
    const TapedLayer& layer = net.layers[static_cast<std::size_t>(k)];
    const ad::Var eps = tape.constant(draw_eps(spec.layer_out(k), spec.layer_in(k), rng));
    const ad::Var w = ad::add(layer.a, ad::mul(layer.sigma, eps));
    const ad::Var pre = ad::add(ad::matvec(w, z), layer.b);
    if (k == spec.num_layers() - 1) {
      z = pre;  // output layer is linear
    } else {
      switch (spec.modes[static_cast<std::size_t>(k)]) {
        case LayerMode::Linear: z = pre; break;
        case LayerMode::Relu: z = ad::relu(pre); break;
        case LayerMode::ResNet: z = ad::add(z, ad::relu(pre)); break;
      }
    }
  }
  return z;
}

ad::Var transform_vector(ad::Tape& tape, const ad::Var& z, const SnnSpec& spec) {
  if (all_identity(spec)) return z;
  ad::Var out;
  for (int i = 0; i < spec.output_dim; ++i) {
    const ad::Var coord = apply_transform(tape, ad::gather(z, {i}), spec.transform_of(i));
    out = i == 0 ? coord : ad::concat(out, coord);
  }
  return out;
}

}  // namespace

ad::Var sample_forward(ad::Tape& tape, const TapedSnn& net, const Array& input, RngStream& rng) {
  const SnnSpec& spec = *net.spec;
  if (input.rank() != 1 || static_cast<int>(input.rows()) != spec.input_dim)
    throw ShapeError("snn: input must be a vector of length input_dim");
  const ad::Var z = forward_core(tape, net, tape.constant(input), rng);
  return transform_vector(tape, z, spec);
}

ad::Var sample_batch_cols(ad::Tape& tape, const TapedSnn& net, const Array& input, int n,
                          RngStream& rng) {
  const SnnSpec& spec = *net.spec;
  if (n < 1) throw ShapeError("snn: batch size must be >= 1");
  if (input.rank() != 1 || static_cast<int>(input.rows()) != spec.input_dim)
    throw ShapeError("snn: input must be a vector of length input_dim");
  const ad::Var in_const = tape.constant(input);
  std::vector<ad::Var> cols;
  cols.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) cols.push_back(forward_core(tape, net, in_const, rng));
  ad::Var stacked = ad::stack_cols(cols);
  if (all_identity(spec)) return stacked;
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<std::size_t>(spec.output_dim));
  for (int i = 0; i < spec.output_dim; ++i)
    rows.push_back(apply_transform(tape, ad::gather(stacked, {i}), spec.transform_of(i)));
  return ad::stack_rows(rows);
}

namespace {

double plain_transform(double x, OutputTransform t) {
  switch (t) {
    case OutputTransform::Identity: return x;
    case OutputTransform::Abs: return std::abs(x);
    case OutputTransform::Softplus:
      return (x > 0.0 ? x : 0.0) + std::log(1.0 + std::exp(-std::abs(x)));
  }
  throw ConfigError("unknown output transform");
}

std::vector<double> forward_plain(const SnnState& state, const Array& input, RngStream* rng) {
  const SnnSpec& spec = state.spec;
  std::vector<double> z(input.data(), input.data() + input.size());
  for (int k = 0; k < spec.num_layers(); ++k) {
    const LayerParams& layer = state.layers[static_cast<std::size_t>(k)];
    const int out = spec.layer_out(k);
    const int in = spec.layer_in(k);
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    if (rng != nullptr) {
      // Mirrors the taped path exactly: sigma = exp(s), w = a + sigma * eps,
      // drawing eps in row-major order.
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = layer.a[i] + std::exp(layer.s[i]) * rng->normal();
    } else {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = layer.a[i];
    }
    std::vector<double> next(static_cast<std::size_t>(out));
    for (int i = 0; i < out; ++i) {
      double acc = 0.0;
      const double* wi = w.data() + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) acc += wi[j] * z[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = acc + layer.b[static_cast<std::size_t>(i)];
    }
    if (k == spec.num_layers() - 1) {
      z = std::move(next);
    } else {
      switch (spec.modes[static_cast<std::size_t>(k)]) {
        case LayerMode::Linear:
          z = std::move(next);
          break;
        case LayerMode::Relu:
          for (double& x : next) x = x > 0.0 ? x : 0.0;
          z = std::move(next);
          break;
        case LayerMode::ResNet:
          for (int i = 0; i < out; ++i) {
            const double r = next[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(i)] += r > 0.0 ? r : 0.0;
          }
          break;
      }
    }
  }
  for (int i = 0; i < spec.output_dim; ++i)
    z[static_cast<std::size_t>(i)] = plain_transform(z[static_cast<std::size_t>(i)], spec.transform_of(i));
  return z;
}

}  // namespace

std::vector<double> sample_forward_plain(const SnnState& state, const Array& input,
                                         RngStream& rng) {
  if (input.rank() != 1 || static_cast<int>(input.rows()) != state.spec.input_dim)
    throw ShapeError("snn: input must be a vector of length input_dim");
  return forward_plain(state, input, &rng);
}

std::vector<double> sample_batch_plain(const SnnState& state, const Array& input, int n,
                                       RngStream& rng) {
  if (n < 1) throw ShapeError("snn: batch size must be >= 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) * state.spec.output_dim);
  for (int j = 0; j < n; ++j) {
    const std::vector<double> s = sample_forward_plain(state, input, rng);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<double> deterministic_forward(const SnnState& state, const Array& input) {
  if (input.rank() != 1 || static_cast<int>(input.rows()) != state.spec.input_dim)
    throw ShapeError("snn: input must be a vector of length input_dim");
  return forward_plain(state, input, nullptr);
}

namespace {

nlohmann::json mat_to_json(const Array& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Array mat_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("snn: matrix json must be a nonempty array");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Array m = Array::mat(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw ConfigError("snn: ragged matrix json");
    for (std::size_t c = 0; c < cols; ++c) m.at(i, c) = j[i][c].get<double>();
  }
  return m;
}

nlohmann::json vec_to_json(const Array& v) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Array vec_from_json(const nlohmann::json& j) {
  Array v = Array::vec(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

nlohmann::json descriptor_to_json(const InitDescriptor& d) {
  if (d.kind == InitDescriptor::Kind::Constant)
    return {{"kind", "constant"}, {"value", d.value}};
  return {{"kind", "normal"}, {"mean", d.mean}, {"stddev", d.stddev}};
}

InitDescriptor descriptor_from_json(const nlohmann::json& j) {
  if (j.is_number()) return InitDescriptor::constant(j.get<double>());
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return InitDescriptor::constant(j.at("value").get<double>());
  if (kind == "normal")
    return InitDescriptor::normal(j.at("mean").get<double>(), j.at("stddev").get<double>());
  throw ConfigError("snn: unknown init descriptor kind: " + kind);
}

}  // namespace

nlohmann::json spec_to_json(const SnnSpec& spec) {
  nlohmann::json modes = nlohmann::json::array();
  for (LayerMode m : spec.modes) modes.push_back(to_string(m));
  nlohmann::json transforms = nlohmann::json::array();
  for (OutputTransform t : spec.output_transform) transforms.push_back(to_string(t));
  return {{"input_dim", spec.input_dim},
          {"output_dim", spec.output_dim},
          {"hidden_widths", spec.hidden_widths},
          {"modes", std::move(modes)},
          {"init_bias", descriptor_to_json(spec.init_bias)},
          {"init_weight_mean_std", spec.init_weight_mean_std},
          {"output_transform", std::move(transforms)}};
}

SnnSpec spec_from_json(const nlohmann::json& j) {
  SnnSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  for (const auto& m : j.at("modes")) spec.modes.push_back(layer_mode_from_string(m.get<std::string>()));
  spec.init_bias = descriptor_from_json(j.at("init_bias"));
  spec.init_weight_mean_std = j.at("init_weight_mean_std").get<double>();
  if (j.contains("output_transform"))
    for (const auto& t : j.at("output_transform"))
      spec.output_transform.push_back(output_transform_from_string(t.get<std::string>()));
  spec.validate();
  return spec;
}

nlohmann::json state_to_json(const SnnState& state) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerParams& layer : state.layers)
    layers.push_back({{"a", mat_to_json(layer.a)},
                      {"s", mat_to_json(layer.s)},
                      {"b", vec_to_json(layer.b)}});
  return {{"spec", spec_to_json(state.spec)}, {"layers", std::move(layers)}};
}

SnnState state_from_json(const nlohmann::json& j) {
  SnnState state;
  state.spec = spec_from_json(j.at("spec"));
  for (const auto& layer_json : j.at("layers")) {
    LayerParams layer;
    layer.a = mat_from_json(layer_json.at("a"));
    layer.s = mat_from_json(layer_json.at("s"));
    layer.b = vec_from_json(layer_json.at("b"));
    state.layers.push_back(std::move(layer));
  }
  if (state.layers.size() != static_cast<std::size_t>(state.spec.num_layers()))
    throw ConfigError("snn: checkpoint layer count does not match the spec");
  for (int k = 0; k < state.spec.num_layers(); ++k) {
    const LayerParams& layer = state.layers[static_cast<std::size_t>(k)];
    const auto out = static_cast<std::size_t>(state.spec.layer_out(k));
    const auto in = static_cast<std::size_t>(state.spec.layer_in(k));
    if (layer.a.rows() != out || layer.a.cols() != in || !layer.a.same_shape(layer.s) ||
        layer.b.size() != out)
      throw ConfigError("snn: checkpoint shapes do not match the spec");
  }
  return state;
}

}  // namespace pdr::snn
