#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "conglude/tensor.hpp"

namespace conglude::prot {

using Vec3 = std::array<double, 3>;

double distance(const Vec3& a, const Vec3& b);

/// Directed residue edge: `target` aggregates the message sent by `source`
/// (source is one of target's nearest neighbours).
struct Edge {
  std::size_t target = 0;
  std::size_t source = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct SiteRecord {
  std::string ligand_id;
  std::vector<Vec3> ligand_atoms;
};

/// Protein as read from / written to the protein JSON file.
struct ProteinRecord {
  std::string id;
  std::vector<Vec3> coords;
  Tensor features;  // S x E_in
  std::vector<SiteRecord> sites;
};

struct ProteinGraph {
  std::string id;
  Tensor coords;    // S x 3, Angstrom
  Tensor features;  // S x E_in
  std::vector<Edge> edges;

  std::size_t residues() const { return coords.rows(); }
};

struct BindingSiteAnnotation {
  std::string ligand_id;
  std::vector<Vec3> ligand_atoms;
  Vec3 center{};
  std::vector<std::uint8_t> labels;  // one per residue
};

struct VirtualNodeInit {
  Tensor coords;            // N x 3
  Tensor features;          // N x E, every row equal to protein_feature
  Tensor protein_feature;   // 1 x E
  Vec3 sphere_center{};
  double sphere_radius = 0.0;
};

class NoContactResidues : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultNeighbours = 10;
inline constexpr double kDefaultEdgeRadius = 10.0;
inline constexpr double kDefaultContactCutoff = 4.0;

// For each residue, edges from its min(k, available) nearest residues within
// `radius` (inclusive); distance ties go to the lower index. Edges are
// grouped by target in ascending order.
std::vector<Edge> build_knn_edges(const Tensor& coords, std::size_t k = kDefaultNeighbours,
                                  double radius = kDefaultEdgeRadius);

ProteinGraph build_graph(const ProteinRecord& record, std::size_t k = kDefaultNeighbours,
                         double radius = kDefaultEdgeRadius);

// Residues within `cutoff` (inclusive) of any ligand atom are labelled 1;
// the site center is their mean coordinate.
BindingSiteAnnotation compute_site_center(const std::vector<Vec3>& ligand_atoms, const Tensor& coords,
                                          double cutoff = kDefaultContactCutoff);

std::vector<Vec3> fibonacci_sphere(std::size_t n);

// Pocket nodes on the sphere around the residue centroid with radius
// max(residue-centroid distance) + margin; features are the residue mean of
// `g.features`.
VirtualNodeInit init_virtual_nodes(const ProteinGraph& g, std::size_t n, double margin);

}  // namespace conglude::prot
