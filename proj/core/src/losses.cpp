#include "conglude/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "conglude/errors.hpp"

namespace conglude::loss {

LossConfig LossConfig::for_dim(std::size_t d) {
  if (d == 0) throw ContractError("contrastive dimension must be positive");
  LossConfig c;
  c.tau_p2m = 1.0 / std::sqrt(2.0 * static_cast<double>(d));
  c.tau_m2p = 1.0 / std::sqrt(static_cast<double>(d));
  c.tau_m2b = c.tau_m2p;
  return c;
}

void LossConfig::validate() const {
  if (!(tau_p2m > 0) || !(tau_m2p > 0) || !(tau_m2b > 0)) throw ContractError("temperatures must be > 0");
  for (double w : {weight_bsc, weight_seg, weight_conf, weight_p2m, weight_m2p, weight_m2b, lb_scale}) {
    if (!(w >= 0)) throw ContractError("loss weights must be >= 0");
  }
  if (!(conf_gamma > 0)) throw ContractError("confidence gamma must be > 0");
}

Var zero_scalar() { return Var::constant(Tensor::scalar(0.0)); }

Var info_nce_rows(const Var& queries, const Var& candidates, const std::vector<std::size_t>& positives,
                  double tau) {
  if (!(tau > 0)) throw ContractError("info_nce: temperature must be > 0");
  if (queries.cols() != candidates.cols()) throw ShapeError("info_nce: query/candidate width mismatch");
  if (positives.size() != queries.rows()) throw ShapeError("info_nce: one positive per query required");
  if (queries.rows() == 0 || candidates.rows() == 0) throw ContractError("info_nce: empty input");
  for (std::size_t p : positives) {
    if (p >= candidates.rows()) throw ContractError("info_nce: positive index out of range");
  }
  Var sim = scale(matmul_bt(normalize_rows(queries), normalize_rows(candidates)), 1.0 / tau);
  std::vector<Var> terms;
  terms.reserve(positives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) {
    Var row = slice_rows(sim, i, i + 1);
    terms.push_back(sub(logsumexp_row(row), pick(row, 0, positives[i])));
  }
  return mean_all(concat_rows(terms));
}

Var info_nce(const Var& query, const Var& candidates, std::size_t positive, double tau) {
  if (query.rows() != 1) throw ShapeError("info_nce: query must be a single row");
  return info_nce_rows(query, candidates, {positive}, tau);
}

std::size_t nearest_index(const Tensor& centers, const prot::Vec3& z) {
  if (centers.rows() == 0) throw ContractError("nearest_index: no centers");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    double d = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double diff = centers(k, c) - z[c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

Var loss_bsc(const Var& centers, const prot::Vec3& z) {
  if (centers.cols() != 3) throw ShapeError("loss_bsc: centers must be K x 3");
  const std::size_t k = nearest_index(centers.value(), z);
  Var target = Var::constant(Tensor::row({z[0], z[1], z[2]}));
  return row_sq_norm(sub(slice_rows(centers, k, k + 1), target));
}

Var loss_dice(const Var& pred, const std::vector<std::uint8_t>& labels, double eps) {
  if (pred.cols() != 1 || pred.rows() != labels.size()) throw ShapeError("loss_dice: shape mismatch");
  Tensor z = Tensor::matrix(labels.size(), 1);
  double sum_z = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    z[i] = labels[i] ? 1.0 : 0.0;
    sum_z += z[i];
  }
  Var inter = sum_all(mul(pred, Var::constant(z)));
  // 1 - (2I + eps)/(S + Z + eps), rearranged so a perfect match gives exactly 0
  Var num = sub(add_scalar(sum_all(pred), sum_z), scale(inter, 2.0));
  Var den = add_scalar(sum_all(pred), sum_z + eps);
  return div_col(num, den);
}

double confidence_target(double dist, double gamma, double floor) {
  return dist <= gamma ? 1.0 - dist / (2.0 * gamma) : floor;
}

Var loss_confidence(const Var& pred, const std::vector<double>& targets) {
  if (pred.cols() != 1 || pred.rows() != targets.size()) throw ShapeError("loss_confidence: shape mismatch");
  Tensor t = Tensor::matrix(targets.size(), 1);
  for (std::size_t i = 0; i < targets.size(); ++i) t[i] = targets[i];
  return mean_all(square(sub(Var::constant(std::move(t)), pred)));
}

GeometricTerms loss_geometric(const enc::EncoderOutput& out, const GeometricTarget& target, const LossConfig& cfg) {
  GeometricTerms t{zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar()};
  if (!cfg.enable_geometric) return t;
  t.bsc = loss_bsc(out.pocket_coords, target.site_center);
  t.seg = loss_dice(out.segmentation, target.residue_labels, cfg.dice_eps);

  const auto& sites = target.all_centers.empty() ? std::vector<prot::Vec3>{target.site_center} : target.all_centers;
  const Tensor& z = out.pocket_coords.value();
  std::vector<double> targets(z.rows());
  for (std::size_t n = 0; n < z.rows(); ++n) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : sites) d = std::min(d, prot::distance({z(n, 0), z(n, 1), z(n, 2)}, s));
    targets[n] = confidence_target(d, cfg.conf_gamma, cfg.conf_floor);
  }
  t.conf = loss_confidence(out.confidence, targets);
  t.total = add(add(scale(t.bsc, cfg.weight_bsc), scale(t.seg, cfg.weight_seg)), scale(t.conf, cfg.weight_conf));
  return t;
}

ContrastiveTerms loss_contrastive_sb(const std::vector<SbSample>& batch, const LossConfig& cfg) {
  if (batch.empty()) throw ContractError("loss_contrastive_sb: empty batch");
  ContrastiveTerms t{zero_scalar(), zero_scalar(), zero_scalar(), zero_scalar()};
  const std::size_t j = batch.size();
  const std::size_t d = batch.front().protein.cols();
  for (const auto& s : batch) {
    if (s.protein.rows() != 1 || s.protein.cols() != d || s.pockets.cols() != d || s.ligand.rows() != 1 ||
        s.ligand.cols() != 2 * d) {
      throw ShapeError("loss_contrastive_sb: inconsistent sample shapes");
    }
    if (s.positive >= s.pockets.rows()) throw ContractError("loss_contrastive_sb: positive pocket out of range");
  }
  std::vector<std::size_t> diag(j);
  for (std::size_t i = 0; i < j; ++i) diag[i] = i;

  std::vector<Var> ligands, proteins;
  for (const auto& s : batch) {
    ligands.push_back(s.ligand);
    proteins.push_back(s.protein);
  }
  Var m = concat_rows(ligands);  // J x 2D

  if (cfg.enable_p2m) {
    std::vector<Var> anchors;
    for (const auto& s : batch) anchors.push_back(concat_cols({s.protein, slice_rows(s.pockets, s.positive, s.positive + 1)}));
    t.p2m = info_nce_rows(concat_rows(anchors), m, diag, cfg.tau_p2m);
  }
  if (cfg.enable_m2p) {
    t.m2p = info_nce_rows(slice_cols(m, 0, d), concat_rows(proteins), diag, cfg.tau_m2p);
  }
  if (cfg.enable_m2b) {
    std::vector<Var> terms;
    for (const auto& s : batch) terms.push_back(info_nce(slice_cols(s.ligand, d, 2 * d), s.pockets, s.positive, cfg.tau_m2b));
    t.m2b = mean_all(concat_rows(terms));
  }
  t.total = add(add(scale(t.p2m, cfg.weight_p2m), scale(t.m2p, cfg.weight_m2p)), scale(t.m2b, cfg.weight_m2b));
  return t;
}

Var loss_lb(const Var& protein, const Var& ligands, const std::vector<std::uint8_t>& labels) {
  if (protein.rows() != 1 || protein.cols() != ligands.cols()) throw ShapeError("loss_lb: width mismatch");
  if (ligands.rows() != labels.size() || labels.empty()) throw ShapeError("loss_lb: one label per ligand required");
  Var cos = matmul_bt(normalize_rows(ligands), normalize_rows(protein));  // M x 1
  Tensor sign = Tensor::matrix(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) sign[i] = labels[i] ? -1.0 : 1.0;
  // -log sigmoid(s) = softplus(-s); -log(1 - sigmoid(s)) = softplus(s)
  return mean_all(softplus(mul_col(cos, Var::constant(std::move(sign)))));
}

}  // namespace conglude::loss
