#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "conglude/params.hpp"

namespace conglude {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam.
///
/// Moments are kept per parameter name and allocated on first update. Bias
/// correction uses the per-parameter update count, so parameters that are
/// skipped on some steps (frozen during ligand-based batches) see the same
/// correction as if they had been optimized alone.
class AdamW {
 public:
  struct Moments {
    Tensor first;
    Tensor second;
    std::uint64_t updates = 0;
  };

  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  // Updates every parameter accepted by `select` using its current gradient
  // (missing gradient = zero). Throws NumericError naming the first
  // parameter whose gradient is not finite; nothing is modified then.
  void step(ParamSet& params, double lr, const std::function<bool(const std::string&)>& select);
  void step(ParamSet& params, double lr);

  std::uint64_t step_count() const { return steps_; }
  const AdamWOptions& options() const { return options_; }
  const Moments* moments(const std::string& name) const;

 private:
  AdamWOptions options_;
  std::map<std::string, Moments> state_;
  std::uint64_t steps_ = 0;
};

}  // namespace conglude
