#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "conglude/autograd.hpp"
#include "conglude/encoder.hpp"
#include "conglude/protein.hpp"

namespace conglude::loss {

struct LossConfig {
  // Defaults correspond to D = 256.
  double tau_p2m = 1.0 / std::sqrt(512.0);
  double tau_m2p = 1.0 / 16.0;
  double tau_m2b = 1.0 / 16.0;
  double dice_eps = 1e-6;
  double conf_gamma = 4.0;
  double conf_floor = 0.001;

  bool enable_geometric = true;
  bool enable_p2m = true;
  bool enable_m2p = true;
  bool enable_m2b = true;
  bool enable_lb = true;

  double weight_bsc = 1.0;
  double weight_seg = 1.0;
  double weight_conf = 1.0;
  double weight_p2m = 1.0;
  double weight_m2p = 1.0;
  double weight_m2b = 1.0;
  double lb_scale = 6.0;

  // Temperatures derived from the contrastive dimension D.
  static LossConfig for_dim(std::size_t d);
  void validate() const;
};

Var zero_scalar();

// Mean over query rows i of -log softmax_j(cos(q_i, c_j) / tau)[positive_i].
Var info_nce_rows(const Var& queries, const Var& candidates, const std::vector<std::size_t>& positives, double tau);
// Single query [1 x d] against candidates [J x d].
Var info_nce(const Var& query, const Var& candidates, std::size_t positive, double tau);

// Index of the row of `centers` closest to z; ties go to the lower index.
std::size_t nearest_index(const Tensor& centers, const prot::Vec3& z);

Var loss_bsc(const Var& centers, const prot::Vec3& z);
Var loss_dice(const Var& pred, const std::vector<std::uint8_t>& labels, double eps);
double confidence_target(double dist, double gamma, double floor);
Var loss_confidence(const Var& pred, const std::vector<double>& targets);

/// Supervision for one protein in the geometric loss.
struct GeometricTarget {
  prot::Vec3 site_center{};                // site of the sample's ligand
  std::vector<prot::Vec3> all_centers;     // every annotated site of the protein
  std::vector<std::uint8_t> residue_labels;  // union over all sites
};

struct GeometricTerms {
  Var bsc, seg, conf, total;
};

// Evaluated on the raw (pre-clustering) virtual nodes.
GeometricTerms loss_geometric(const enc::EncoderOutput& out, const GeometricTarget& target, const LossConfig& cfg);

/// One structure-based sample after projection.
struct SbSample {
  Var protein;           // 1 x D
  Var pockets;           // K x D
  std::size_t positive;  // selected pocket
  Var ligand;            // 1 x 2D, [m_p, m_b]
};

struct ContrastiveTerms {
  Var p2m, m2p, m2b, total;
};

ContrastiveTerms loss_contrastive_sb(const std::vector<SbSample>& batch, const LossConfig& cfg);

// Mean binary cross-entropy of sigmoid(cos(p, m_p^m)) against labels.
Var loss_lb(const Var& protein, const Var& ligands, const std::vector<std::uint8_t>& labels);

}  // namespace conglude::loss
