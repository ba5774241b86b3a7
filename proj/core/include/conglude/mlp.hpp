#pragma once

#include <random>
#include <string>
#include <vector>

#include "conglude/autograd.hpp"

namespace conglude {

class ParamSet;

/// Layer widths, activation, and dropout of a fully connected block.
///
/// `dropout[i]` is applied to the input of layer i (so dropout[0] is input
/// dropout). The activation follows every layer except the last, which uses
/// `output_activation`.
struct MlpSpec {
  std::vector<std::size_t> widths;  // in, hidden..., out
  Activation activation = Activation::SiLU;
  Activation output_activation = Activation::Identity;
  std::vector<double> dropout;      // empty or one entry per layer
  double output_init_gain = 1.0;    // scales the init range of the last layer
};

class Mlp {
 public:
  Mlp() = default;

  // Registers `<prefix>.l<i>.weight` / `.bias` in `params`.
  Mlp(const MlpSpec& spec, const std::string& prefix, ParamSet& params, std::mt19937_64& rng);
  // Binds to parameters already present in `params`.
  Mlp(const MlpSpec& spec, const std::string& prefix, const ParamSet& params);

  Var forward(const Var& input, bool train = false, std::mt19937_64* rng = nullptr) const;

  // Continues a forward pass from the pre-activation output of layer 0.
  // Used when the first affine map was assembled from per-node partial
  // products (edge messages), so input dropout must be zero.
  Var forward_from_first(const Var& first_pre, bool train = false, std::mt19937_64* rng = nullptr) const;

  const MlpSpec& spec() const { return spec_; }
  std::size_t layers() const { return weights_.size(); }
  std::size_t input_width() const { return spec_.widths.front(); }
  std::size_t output_width() const { return spec_.widths.back(); }
  const Var& weight(std::size_t i) const { return weights_[i]; }
  const Var& bias(std::size_t i) const { return biases_[i]; }

 private:
  Var run_from(std::size_t layer, Var h, bool train, std::mt19937_64* rng) const;
  double dropout_at(std::size_t layer) const;

  MlpSpec spec_;
  std::vector<Var> weights_;  // [in, out]
  std::vector<Var> biases_;   // [1, out]
};

}  // namespace conglude
