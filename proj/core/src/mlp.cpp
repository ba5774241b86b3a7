#include "conglude/mlp.hpp"

#include <cmath>

#include "conglude/errors.hpp"
#include "conglude/params.hpp"

namespace conglude {

namespace {
void validate(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw ContractError("MLP needs at least input and output widths");
  const std::size_t layers = spec.widths.size() - 1;
  if (!spec.dropout.empty() && spec.dropout.size() != layers) {
    throw ContractError("MLP dropout list must have one rate per layer");
  }
  for (double r : spec.dropout) {
    if (r < 0.0 || r > 1.0) throw ContractError("MLP dropout rate outside [0,1]");
  }
}
}  // namespace

Mlp::Mlp(const MlpSpec& spec, const std::string& prefix, ParamSet& params, std::mt19937_64& rng)
    : spec_(spec) {
  validate(spec_);
  const std::size_t layers = spec_.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec_.widths[l], out = spec_.widths[l + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    if (l + 1 == layers) bound *= spec_.output_init_gain;
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w = Tensor::matrix(in, out);
    for (double& x : w.storage()) x = u(rng);
    Tensor b = Tensor::matrix(1, out);
    for (double& x : b.storage()) x = u(rng);
    const std::string base = prefix + ".l" + std::to_string(l);
    weights_.push_back(params.add(base + ".weight", std::move(w)));
    biases_.push_back(params.add(base + ".bias", std::move(b)));
  }
}

Mlp::Mlp(const MlpSpec& spec, const std::string& prefix, const ParamSet& params) : spec_(spec) {
  validate(spec_);
  const std::size_t layers = spec_.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    const Var& w = params.at(base + ".weight");
    const Var& b = params.at(base + ".bias");
    if (w.rows() != spec_.widths[l] || w.cols() != spec_.widths[l + 1] || b.cols() != spec_.widths[l + 1]) {
      throw ShapeError("parameter " + base + " does not match the MLP layout");
    }
    weights_.push_back(w);
    biases_.push_back(b);
  }
}

double Mlp::dropout_at(std::size_t layer) const {
  return spec_.dropout.empty() ? 0.0 : spec_.dropout[layer];
}

Var Mlp::forward(const Var& input, bool train, std::mt19937_64* rng) const {
  if (input.value().rank() != 2 || input.cols() != input_width()) {
    throw ShapeError("MLP input width " + input.value().shape_string() + " but layer expects " +
                     std::to_string(input_width()));
  }
  return run_from(0, input, train, rng);
}

Var Mlp::forward_from_first(const Var& first_pre, bool train, std::mt19937_64* rng) const {
  if (dropout_at(0) != 0.0) throw ContractError("forward_from_first requires zero input dropout");
  if (first_pre.value().rank() != 2 || first_pre.cols() != spec_.widths[1]) {
    throw ShapeError("MLP first-layer pre-activation has the wrong width");
  }
  const bool last = layers() == 1;
  Var h = activation(first_pre, last ? spec_.output_activation : spec_.activation);
  if (last) return h;
  return run_from(1, h, train, rng);
}

Var Mlp::run_from(std::size_t layer, Var h, bool train, std::mt19937_64* rng) const {
  for (std::size_t l = layer; l < layers(); ++l) {
    h = dropout(h, dropout_at(l), train, rng);
    h = linear(h, weights_[l], biases_[l]);
    h = activation(h, l + 1 == layers() ? spec_.output_activation : spec_.activation);
  }
  return h;
}

}  // namespace conglude
