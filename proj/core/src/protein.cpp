#include "conglude/protein.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "conglude/errors.hpp"

namespace conglude::prot {

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

namespace {
Vec3 row3(const Tensor& t, std::size_t r) { return {t(r, 0), t(r, 1), t(r, 2)}; }

void require_coords(const Tensor& coords) {
  if (coords.rank() != 2 || coords.cols() != 3) throw ShapeError("coordinates must be S x 3");
}
}  // namespace

std::vector<Edge> build_knn_edges(const Tensor& coords, std::size_t k, double radius) {
  require_coords(coords);
  const std::size_t s = coords.rows();
  std::vector<Edge> edges;
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < s; ++i) {
    cand.clear();
    const Vec3 xi = row3(coords, i);
    for (std::size_t j = 0; j < s; ++j) {
      if (j == i) continue;
      const double d = distance(xi, row3(coords, j));
      if (d <= radius) cand.emplace_back(d, j);
    }
    const std::size_t take = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    for (std::size_t t = 0; t < take; ++t) edges.push_back(Edge{i, cand[t].second});
  }
  return edges;
}

ProteinGraph build_graph(const ProteinRecord& record, std::size_t k, double radius) {
  if (record.coords.empty()) throw ContractError("protein '" + record.id + "' has no residues");
  if (record.features.rank() != 2 || record.features.rows() != record.coords.size()) {
    throw ShapeError("protein '" + record.id + "': one feature row per residue required");
  }
  ProteinGraph g;
  g.id = record.id;
  g.coords = Tensor::matrix(record.coords.size(), 3);
  for (std::size_t i = 0; i < record.coords.size(); ++i)
    for (std::size_t d = 0; d < 3; ++d) g.coords(i, d) = record.coords[i][d];
  g.features = record.features;
  g.edges = build_knn_edges(g.coords, k, radius);
  return g;
}

BindingSiteAnnotation compute_site_center(const std::vector<Vec3>& ligand_atoms, const Tensor& coords,
                                          double cutoff) {
  require_coords(coords);
  if (ligand_atoms.empty()) throw ContractError("binding site needs at least one ligand atom");
  BindingSiteAnnotation site;
  site.ligand_atoms = ligand_atoms;
  site.labels.assign(coords.rows(), 0);
  Vec3 sum{0, 0, 0};
  std::size_t contacts = 0;
  for (std::size_t r = 0; r < coords.rows(); ++r) {
    const Vec3 x = row3(coords, r);
    const bool contact = std::any_of(ligand_atoms.begin(), ligand_atoms.end(),
                                     [&](const Vec3& a) { return distance(a, x) <= cutoff; });
    if (!contact) continue;
    site.labels[r] = 1;
    ++contacts;
    for (std::size_t d = 0; d < 3; ++d) sum[d] += x[d];
  }
  if (contacts == 0) throw NoContactResidues("no residue within " + std::to_string(cutoff) + " A of the ligand");
  for (std::size_t d = 0; d < 3; ++d) site.center[d] = sum[d] / static_cast<double>(contacts);
  return site;
}

std::vector<Vec3> fibonacci_sphere(std::size_t n) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double theta = golden_angle * static_cast<double>(i);
    pts.push_back({r * std::cos(theta), y, r * std::sin(theta)});
  }
  return pts;
}

VirtualNodeInit init_virtual_nodes(const ProteinGraph& g, std::size_t n, double margin) {
  if (n == 0) throw ContractError("at least one virtual node is required");
  const std::size_t s = g.residues();
  if (s == 0) throw ContractError("graph has no residues");
  VirtualNodeInit init;
  Vec3 c{0, 0, 0};
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t d = 0; d < 3; ++d) c[d] += g.coords(i, d);
  for (double& v : c) v /= static_cast<double>(s);
  double rmax = 0.0;
  for (std::size_t i = 0; i < s; ++i) rmax = std::max(rmax, distance(c, row3(g.coords, i)));
  init.sphere_center = c;
  init.sphere_radius = rmax + margin;
  init.coords = Tensor::matrix(n, 3);
  const auto dirs = fibonacci_sphere(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t d = 0; d < 3; ++d) init.coords(k, d) = c[d] + init.sphere_radius * dirs[k][d];

  const std::size_t e = g.features.cols();
  init.protein_feature = Tensor::matrix(1, e);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < e; ++j) init.protein_feature(0, j) += g.features(i, j);
  for (std::size_t j = 0; j < e; ++j) init.protein_feature(0, j) /= static_cast<double>(s);
  init.features = Tensor::matrix(n, e);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < e; ++j) init.features(k, j) = init.protein_feature(0, j);
  return init;
}

}  // namespace conglude::prot
