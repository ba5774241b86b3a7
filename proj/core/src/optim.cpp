#include "conglude/optim.hpp"

#include <cmath>

#include "conglude/errors.hpp"

namespace conglude {

void AdamW::step(ParamSet& params, double lr, const std::function<bool(const std::string&)>& select) {
  if (!(lr > 0.0)) throw ContractError("AdamW learning rate must be positive");
  for (const auto& [name, v] : params.entries()) {
    if (!select(name) || !v.has_grad()) continue;
    if (!v.grad().all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  }
  const double b1 = options_.beta1, b2 = options_.beta2;
  for (const auto& [name, handle] : params.entries()) {
    if (!select(name)) continue;
    Var v = handle;  // shares the node
    Tensor& theta = v.mutable_value();
    auto& m = state_[name];
    if (m.first.empty()) {
      m.first = Tensor(theta.shape(), 0.0);
      m.second = Tensor(theta.shape(), 0.0);
    }
    ++m.updates;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(m.updates));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(m.updates));
    const double decay = 1.0 - lr * options_.weight_decay;
    const bool has_grad = v.has_grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has_grad ? v.grad()[i] : 0.0;
      m.first[i] = b1 * m.first[i] + (1.0 - b1) * g;
      m.second[i] = b2 * m.second[i] + (1.0 - b2) * g * g;
      const double mhat = m.first[i] / c1;
      const double vhat = m.second[i] / c2;
      theta[i] = theta[i] * decay - lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
  ++steps_;
}

void AdamW::step(ParamSet& params, double lr) {
  step(params, lr, [](const std::string&) { return true; });
}

const AdamW::Moments* AdamW::moments(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? nullptr : &it->second;
}

}  // namespace conglude
