#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/array.hpp"
#include "pdr/autodiff.hpp"
#include "pdr/errors.hpp"
#include "pdr/rng.hpp"

namespace pdr::snn {

enum class LayerMode { Linear, Relu, ResNet };
enum class OutputTransform { Identity, Abs, Softplus };

std::string to_string(LayerMode m);
std::string to_string(OutputTransform t);
LayerMode layer_mode_from_string(const std::string& s);
OutputTransform output_transform_from_string(const std::string& s);

// Initialization of a parameter block: constant fill or i.i.d. normal draws.
struct InitDescriptor {
  enum class Kind { Constant, Normal };
  Kind kind = Kind::Constant;
  double value = 0.0;  // Constant
  double mean = 0.0;   // Normal
  double stddev = 0.0;

  static InitDescriptor constant(double v) {
    InitDescriptor d;
    d.kind = Kind::Constant;
    d.value = v;
    return d;
  }
  static InitDescriptor normal(double mean, double stddev) {
    InitDescriptor d;
    d.kind = Kind::Normal;
    d.mean = mean;
    d.stddev = stddev;
    return d;
  }
};

struct SnnSpec {
  int input_dim = 1;
  int output_dim = 1;
  std::vector<int> hidden_widths;
  std::vector<LayerMode> modes;  // one per hidden layer; the output layer is linear
  InitDescriptor init_bias;
  // Weight means are drawn from N(0, init_weight_mean_std^2) and the initial
  // weight standard deviations equal the same scalar.
  double init_weight_mean_std = 0.01;
  std::vector<OutputTransform> output_transform;  // empty means identity everywhere

  int num_layers() const { return static_cast<int>(hidden_widths.size()) + 1; }
  int layer_in(int k) const;
  int layer_out(int k) const;
  OutputTransform transform_of(int coord) const {
    return output_transform.empty() ? OutputTransform::Identity
                                    : output_transform[static_cast<std::size_t>(coord)];
  }
  void validate() const;  // throws ConfigError
};

// Trainable parameters: per layer, weight means a, weight log-stds s
// (sigma = exp(s)) and deterministic biases b.
struct LayerParams {
  Array a, s, b;
};

struct SnnState {
  SnnSpec spec;
  std::vector<LayerParams> layers;
};

SnnState init(const SnnSpec& spec, std::uint64_t seed);

// Tape-registered view of a state. sigma is computed once so all samples of an
// epoch share it.
struct TapedLayer {
  ad::Var a, s, b, sigma;
};
struct TapedSnn {
  const SnnSpec* spec = nullptr;
  std::vector<TapedLayer> layers;
};

TapedSnn make_taped(ad::Tape& tape, const SnnState& state);

// One stochastic forward pass: resamples every weight via w = a + sigma * eps
// with eps ~ N(0,1) drawn from the stream, applies the per-layer propagation
// mode and the per-coordinate output transform. Returns the {l} sample.
ad::Var sample_forward(ad::Tape& tape, const TapedSnn& net, const Array& input, RngStream& rng);

// n independent samples on one tape, stacked as columns {l, n}.
ad::Var sample_batch_cols(ad::Tape& tape, const TapedSnn& net, const Array& input, int n,
                          RngStream& rng);

// Tape-free twins with bit-identical arithmetic (same draw order, same
// elementwise operations), used for evaluation-time sampling.
std::vector<double> sample_forward_plain(const SnnState& state, const Array& input,
                                         RngStream& rng);
// Row-major {n, l}.
std::vector<double> sample_batch_plain(const SnnState& state, const Array& input, int n,
                                       RngStream& rng);
// Forward pass with all weights fixed at their means (sigma ignored).
std::vector<double> deterministic_forward(const SnnState& state, const Array& input);

nlohmann::json spec_to_json(const SnnSpec& spec);
SnnSpec spec_from_json(const nlohmann::json& j);
nlohmann::json state_to_json(const SnnState& state);
SnnState state_from_json(const nlohmann::json& j);

}  // namespace pdr::snn
