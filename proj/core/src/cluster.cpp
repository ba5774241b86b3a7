#include <cmath>
#include <limits>
#include <vector>

#include "conglude/encoder.hpp"
#include "conglude/errors.hpp"

namespace conglude::enc {

std::vector<std::size_t> dbscan(const Tensor& coords, double eps, std::size_t min_pts) {
  if (coords.rank() != 2) throw ShapeError("dbscan expects a point matrix");
  if (min_pts == 0) throw ContractError("dbscan min_pts must be >= 1");
  const std::size_t n = coords.rows(), dim = coords.cols();
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();

  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = coords(i, d) - coords(j, d);
        s += diff * diff;
      }
      if (std::sqrt(s) <= eps) out.push_back(j);  // includes i itself
    }
    return out;
  };

  std::vector<std::size_t> label(n, kUnset);
  std::vector<bool> noise(n, false);
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnset || noise[i]) continue;
    auto seeds = neighbours(i);
    if (seeds.size() < min_pts) {
      noise[i] = true;
      continue;
    }
    const std::size_t c = next++;
    label[i] = c;
    for (std::size_t q = 0; q < seeds.size(); ++q) {
      const std::size_t j = seeds[q];
      if (noise[j]) {
        noise[j] = false;
        label[j] = c;  // border point
      }
      if (label[j] != kUnset) continue;
      label[j] = c;
      auto more = neighbours(j);
      if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == kUnset) label[i] = next++;
  }
  // Renumber by lowest member index.
  std::vector<std::size_t> remap(next, kUnset);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (remap[label[i]] == kUnset) remap[label[i]] = k++;
    label[i] = remap[label[i]];
  }
  return label;
}

}  // namespace conglude::enc
