#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "conglude/autograd.hpp"
#include "conglude/mlp.hpp"
#include "conglude/params.hpp"
#include "conglude/protein.hpp"

namespace conglude::enc {

struct EncoderConfig {
  std::size_t residue_in = 64;     // E_in
  std::size_t hidden = 32;         // E
  std::size_t layers = 5;          // L
  std::size_t virtual_nodes = 8;   // N
  std::size_t contrast_dim = 256;  // D
  std::size_t ligand_in = 2058;    // W
  std::size_t ligand_hidden = 512;
  double ligand_input_dropout = 0.1;
  double ligand_hidden_dropout = 0.5;
  double sphere_margin = 2.0;
  double coord_eps = 1e-8;
  double cluster_eps = 4.0;
  std::size_t cluster_min_pts = 1;
  std::size_t knn_k = prot::kDefaultNeighbours;
  double knn_radius = prot::kDefaultEdgeRadius;
  double coord_init_gain = 0.01;   // init range of the last coordinate-MLP layer
};

/// Raw encoder outputs before clustering.
struct EncoderOutput {
  Var coords;          // S x 3
  Var features;        // S x E
  Var pocket_coords;   // N x 3
  Var pocket_features; // N x E
  Var protein;         // 1 x E
  Var segmentation;    // S x 1, in (0,1)
  Var confidence;      // N x 1, in (0,1)
};

/// Clustered pockets. Before projection embeddings/protein are E wide,
/// after projection D wide.
struct PocketSet {
  Var centers;                          // K x 3
  Var embeddings;                       // K x E | K x D
  Var confidence;                       // K x 1
  Var protein;                          // 1 x E | 1 x D
  std::vector<std::size_t> assignment;  // virtual node -> cluster

  std::size_t size() const { return centers.valid() ? centers.rows() : 0; }
};

/// DBSCAN over rows of `coords` (Euclidean, inclusive eps). Clusters are
/// numbered in order of their lowest member index. With min_pts = 1 this is
/// the connected components of the eps-neighbourhood graph. Points that end
/// up as noise (only possible for min_pts > 1) become singleton clusters.
std::vector<std::size_t> dbscan(const Tensor& coords, double eps, std::size_t min_pts);

// Geometric message block: message, coordinate, and feature-update MLPs.
struct GeometricBlock {
  Mlp edge;
  Mlp coord;
  Mlp node;
};

struct GlobalBlock {
  Mlp edge;
  Mlp node;
};

struct LayerBlocks {
  GeometricBlock residue_residue;  // step 1
  GeometricBlock residue_pocket;   // step 2
  GeometricBlock pocket_residue;   // step 3
  GlobalBlock residue_protein;     // step 4
  GlobalBlock protein_residue;     // step 5
};

/// Protein encoder (equivariant message passing with pocket and protein
/// virtual nodes), pocket heads, projections, and the ligand encoder.
class Model {
 public:
  Model(const EncoderConfig& cfg, std::uint64_t seed);
  explicit Model(const Checkpoint& ckpt);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  Checkpoint to_checkpoint() const;

  const EncoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  prot::ProteinGraph make_graph(const prot::ProteinRecord& record) const;
  prot::VirtualNodeInit make_init(const prot::ProteinGraph& g) const;

  EncoderOutput encode_protein(const prot::ProteinGraph& g, const prot::VirtualNodeInit& init) const;
  EncoderOutput encode_protein(const prot::ProteinGraph& g) const;

  Var confidence_head(const Var& pocket_features) const;
  PocketSet cluster_pockets(const EncoderOutput& out) const;
  PocketSet project(const PocketSet& pre) const;
  Var project_protein(const Var& protein) const;

  // [M x W] features -> [M x 2D] joint embeddings [m_p, m_b].
  Var encode_ligands(const Var& features, bool train = false, std::mt19937_64* rng = nullptr) const;

  // Parameters optimized on ligand-based batches; everything else is frozen
  // there.
  static bool ligand_batch_trainable(const std::string& name);

 private:
  void bind();
  void build(std::mt19937_64& rng);

  EncoderConfig cfg_;
  ParamSet params_;
  Mlp input_proj_;
  std::vector<LayerBlocks> layers_;
  Mlp seg_head_;
  Mlp conf_head_;
  Mlp pocket_proj_;
  Mlp protein_proj_;
  Mlp ligand_;
};

}  // namespace conglude::enc
