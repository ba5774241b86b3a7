#include "conglude/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conglude/errors.hpp"

namespace conglude::enc {

namespace {

MlpSpec edge_spec(std::size_t in, std::size_t e) {
  MlpSpec s;
  s.widths = {in, e, e};
  s.activation = Activation::SiLU;
  s.output_activation = Activation::SiLU;
  return s;
}

MlpSpec coord_spec(std::size_t e, double gain) {
  MlpSpec s;
  s.widths = {e, e, 1};
  s.activation = Activation::SiLU;
  s.output_init_gain = gain;
  return s;
}

MlpSpec node_spec(std::size_t e) {
  MlpSpec s;
  s.widths = {2 * e, e, e};
  s.activation = Activation::SiLU;
  return s;
}

MlpSpec head_spec(std::size_t e) {
  MlpSpec s;
  s.widths = {e, e, 1};
  s.activation = Activation::SiLU;
  s.output_activation = Activation::Sigmoid;
  return s;
}

MlpSpec linear_spec(std::size_t in, std::size_t out) {
  MlpSpec s;
  s.widths = {in, out};
  return s;
}

MlpSpec ligand_spec(const EncoderConfig& c) {
  MlpSpec s;
  s.widths = {c.ligand_in, c.ligand_hidden, 2 * c.contrast_dim};
  s.activation = Activation::GELU;
  s.dropout = {c.ligand_input_dropout, c.ligand_hidden_dropout};
  return s;
}

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

void check_finite(const Var& v, std::size_t layer, int step, const char* what) {
  if (!v.value().all_finite()) {
    throw NumericError("non-finite " + std::string(what) + " in layer " + std::to_string(layer) + " step " +
                       std::to_string(step));
  }
}

// First affine map of an edge MLP applied to [h_recv, h_send, d], assembled
// from per-node products so each node row is multiplied once.
Var edge_first(const Mlp& edge, const Var& h_recv, const Var& h_send, const Var& dist,
               const std::vector<std::size_t>& recv, const std::vector<std::size_t>& send) {
  const std::size_t e = h_recv.cols();
  const Var& w = edge.weight(0);
  Var a = gather_rows(matmul(h_recv, slice_rows(w, 0, e)), recv);
  Var b = gather_rows(matmul(h_send, slice_rows(w, e, 2 * e)), send);
  Var c = matmul(dist, slice_rows(w, 2 * e, 2 * e + 1));
  return add_row(add(add(a, b), c), edge.bias(0));
}

struct Geometric {
  Var x;
  Var h;
};

// One equivariant message-passing step from senders to receivers over the
// given (receiver, sender) pairs; messages are averaged per receiver.
Geometric geometric_step(const GeometricBlock& blk, const Var& x_recv, const Var& h_recv, const Var& x_send,
                         const Var& h_send, const std::vector<std::size_t>& recv,
                         const std::vector<std::size_t>& send, double eps) {
  const std::size_t n = x_recv.rows();
  if (recv.empty()) return {x_recv, h_recv};
  Var diff = sub(gather_rows(x_recv, recv), gather_rows(x_send, send));
  Var dist = row_norm(diff);
  Var msg = blk.edge.forward_from_first(edge_first(blk.edge, h_recv, h_send, dist, recv, send));
  Var agg = segment_mean(msg, recv, n);
  Var dir = div_col(diff, add_scalar(dist, eps));
  Var shift = segment_mean(mul_col(dir, blk.coord.forward(msg)), recv, n);
  return {add(x_recv, shift), add(h_recv, blk.node.forward(concat_cols({h_recv, agg})))};
}

}  // namespace

Model::Model(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.hidden == 0 || cfg_.virtual_nodes == 0 || cfg_.contrast_dim == 0 || cfg_.residue_in == 0 ||
      cfg_.ligand_in == 0 || cfg_.ligand_hidden == 0) {
    throw ContractError("encoder dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  build(rng);
}

void Model::build(std::mt19937_64& rng) {
  const std::size_t e = cfg_.hidden;
  input_proj_ = Mlp(linear_spec(cfg_.residue_in, e), "input", params_, rng);
  layers_.clear();
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = layer_prefix(l);
    auto geo = [&](const std::string& name) {
      return GeometricBlock{Mlp(edge_spec(2 * e + 1, e), p + "." + name + ".edge", params_, rng),
                            Mlp(coord_spec(e, cfg_.coord_init_gain), p + "." + name + ".coord", params_, rng),
                            Mlp(node_spec(e), p + "." + name + ".node", params_, rng)};
    };
    auto glob = [&](const std::string& name) {
      return GlobalBlock{Mlp(edge_spec(2 * e, e), p + "." + name + ".edge", params_, rng),
                         Mlp(node_spec(e), p + "." + name + ".node", params_, rng)};
    };
    LayerBlocks blk{geo("rr"), geo("rb"), geo("br"), glob("rp"), glob("pr")};
    layers_.push_back(std::move(blk));
  }
  seg_head_ = Mlp(head_spec(e), "seg_head", params_, rng);
  conf_head_ = Mlp(head_spec(e), "conf_head", params_, rng);
  pocket_proj_ = Mlp(linear_spec(e, cfg_.contrast_dim), "pocket_proj", params_, rng);
  protein_proj_ = Mlp(linear_spec(e, cfg_.contrast_dim), "protein_proj", params_, rng);
  ligand_ = Mlp(ligand_spec(cfg_), "ligand", params_, rng);
}

void Model::bind() {
  const std::size_t e = cfg_.hidden;
  input_proj_ = Mlp(linear_spec(cfg_.residue_in, e), "input", params_);
  layers_.clear();
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = layer_prefix(l);
    auto geo = [&](const std::string& name) {
      return GeometricBlock{Mlp(edge_spec(2 * e + 1, e), p + "." + name + ".edge", params_),
                            Mlp(coord_spec(e, cfg_.coord_init_gain), p + "." + name + ".coord", params_),
                            Mlp(node_spec(e), p + "." + name + ".node", params_)};
    };
    auto glob = [&](const std::string& name) {
      return GlobalBlock{Mlp(edge_spec(2 * e, e), p + "." + name + ".edge", params_),
                         Mlp(node_spec(e), p + "." + name + ".node", params_)};
    };
    LayerBlocks blk{geo("rr"), geo("rb"), geo("br"), glob("rp"), glob("pr")};
    layers_.push_back(std::move(blk));
  }
  seg_head_ = Mlp(head_spec(e), "seg_head", params_);
  conf_head_ = Mlp(head_spec(e), "conf_head", params_);
  pocket_proj_ = Mlp(linear_spec(e, cfg_.contrast_dim), "pocket_proj", params_);
  protein_proj_ = Mlp(linear_spec(e, cfg_.contrast_dim), "protein_proj", params_);
  ligand_ = Mlp(ligand_spec(cfg_), "ligand", params_);
}

Model::Model(const Checkpoint& ckpt) {
  const ParamSet& p = ckpt.params;
  auto shape_of = [&](const std::string& name) -> const Tensor& {
    if (!p.contains(name)) throw FormatError("checkpoint is missing parameter '" + name + "'");
    return p.at(name).value();
  };
  const Tensor& in = shape_of("input.l0.weight");
  cfg_.residue_in = in.rows();
  cfg_.hidden = in.cols();
  const Tensor& lig0 = shape_of("ligand.l0.weight");
  cfg_.ligand_in = lig0.rows();
  cfg_.ligand_hidden = lig0.cols();
  cfg_.contrast_dim = shape_of("pocket_proj.l0.weight").cols();
  std::size_t layers = 0;
  while (p.contains(layer_prefix(layers) + ".rr.edge.l0.weight")) ++layers;
  cfg_.layers = layers;

  auto meta = [&](const std::string& key, double fallback) {
    auto it = ckpt.meta.find(key);
    return it == ckpt.meta.end() ? fallback : it->second;
  };
  cfg_.virtual_nodes = static_cast<std::size_t>(meta("num_virtual_nodes", static_cast<double>(cfg_.virtual_nodes)));
  cfg_.sphere_margin = meta("sphere_margin", cfg_.sphere_margin);
  cfg_.coord_eps = meta("coord_eps", cfg_.coord_eps);
  cfg_.cluster_eps = meta("cluster_eps", cfg_.cluster_eps);
  cfg_.cluster_min_pts = static_cast<std::size_t>(meta("cluster_min_pts", 1.0));
  cfg_.knn_k = static_cast<std::size_t>(meta("knn_k", static_cast<double>(cfg_.knn_k)));
  cfg_.knn_radius = meta("knn_radius", cfg_.knn_radius);
  cfg_.ligand_input_dropout = meta("ligand_input_dropout", cfg_.ligand_input_dropout);
  cfg_.ligand_hidden_dropout = meta("ligand_hidden_dropout", cfg_.ligand_hidden_dropout);
  cfg_.coord_init_gain = meta("coord_init_gain", cfg_.coord_init_gain);
  if (cfg_.virtual_nodes == 0) throw FormatError("checkpoint declares zero virtual nodes");

  params_ = p.clone();
  try {
    bind();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint parameter shapes are inconsistent: ") + e.what());
  } catch (const ContractError& e) {
    // ParamSet::at reports absent names as a contract violation
    throw FormatError(std::string("checkpoint is missing a parameter: ") + e.what());
  }
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint c;
  c.params = params_.clone();
  c.meta["num_virtual_nodes"] = static_cast<double>(cfg_.virtual_nodes);
  c.meta["sphere_margin"] = cfg_.sphere_margin;
  c.meta["coord_eps"] = cfg_.coord_eps;
  c.meta["cluster_eps"] = cfg_.cluster_eps;
  c.meta["cluster_min_pts"] = static_cast<double>(cfg_.cluster_min_pts);
  c.meta["knn_k"] = static_cast<double>(cfg_.knn_k);
  c.meta["knn_radius"] = cfg_.knn_radius;
  c.meta["ligand_input_dropout"] = cfg_.ligand_input_dropout;
  c.meta["ligand_hidden_dropout"] = cfg_.ligand_hidden_dropout;
  c.meta["coord_init_gain"] = cfg_.coord_init_gain;
  return c;
}

prot::ProteinGraph Model::make_graph(const prot::ProteinRecord& record) const {
  if (record.features.cols() != cfg_.residue_in) {
    throw ShapeError("protein '" + record.id + "' has residue feature width " +
                     std::to_string(record.features.cols()) + ", model expects " + std::to_string(cfg_.residue_in));
  }
  return prot::build_graph(record, cfg_.knn_k, cfg_.knn_radius);
}

prot::VirtualNodeInit Model::make_init(const prot::ProteinGraph& g) const {
  return prot::init_virtual_nodes(g, cfg_.virtual_nodes, cfg_.sphere_margin);
}

EncoderOutput Model::encode_protein(const prot::ProteinGraph& g) const { return encode_protein(g, make_init(g)); }

EncoderOutput Model::encode_protein(const prot::ProteinGraph& g, const prot::VirtualNodeInit& init) const {
  const std::size_t s = g.residues();
  const std::size_t n = init.coords.rows();
  if (s == 0) throw ShapeError("protein '" + g.id + "' has no residues");
  if (g.features.cols() != cfg_.residue_in) {
    throw ShapeError("residue feature width " + std::to_string(g.features.cols()) + ", model expects " +
                     std::to_string(cfg_.residue_in));
  }
  if (n == 0 || init.coords.cols() != 3) throw ShapeError("virtual node coordinates must be N x 3");

  Var x = Var::constant(g.coords);
  Var h = input_proj_.forward(Var::constant(g.features));
  Var z = Var::constant(init.coords);
  Var b = broadcast_rows(mean_rows(h), n);
  Var p = mean_rows(h);

  std::vector<std::size_t> rr_recv, rr_send;
  rr_recv.reserve(g.edges.size());
  rr_send.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    rr_recv.push_back(e.target);
    rr_send.push_back(e.source);
  }
  // All (pocket, residue) pairs, grouped by pocket, and the transpose.
  std::vector<std::size_t> pb_pocket, pb_res, bp_res, bp_pocket;
  pb_pocket.reserve(n * s);
  pb_res.reserve(n * s);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < s; ++j) {
      pb_pocket.push_back(k);
      pb_res.push_back(j);
    }
  bp_res.reserve(n * s);
  bp_pocket.reserve(n * s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      bp_res.push_back(i);
      bp_pocket.push_back(k);
    }

  const double eps = cfg_.coord_eps;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerBlocks& blk = layers_[l];
    // 1. residues -> residues
    auto r1 = geometric_step(blk.residue_residue, x, h, x, h, rr_recv, rr_send, eps);
    x = r1.x;
    h = r1.h;
    check_finite(x, l, 1, "residue coordinates");
    check_finite(h, l, 1, "residue features");
    // 2. residues -> pocket nodes
    auto r2 = geometric_step(blk.residue_pocket, z, b, x, h, pb_pocket, pb_res, eps);
    z = r2.x;
    b = r2.h;
    check_finite(z, l, 2, "pocket coordinates");
    check_finite(b, l, 2, "pocket features");
    // 3. pocket nodes -> residues
    auto r3 = geometric_step(blk.pocket_residue, x, h, z, b, bp_res, bp_pocket, eps);
    x = r3.x;
    h = r3.h;
    check_finite(x, l, 3, "residue coordinates");
    check_finite(h, l, 3, "residue features");
    // 4. residues -> protein node
    Var msg4 = blk.residue_protein.edge.forward(concat_cols({broadcast_rows(p, s), h}));
    p = add(p, blk.residue_protein.node.forward(concat_cols({p, mean_rows(msg4)})));
    check_finite(p, l, 4, "protein feature");
    // 5. protein node -> residues
    Var msg5 = blk.protein_residue.edge.forward(concat_cols({h, broadcast_rows(p, s)}));
    h = add(h, blk.protein_residue.node.forward(concat_cols({h, msg5})));
    check_finite(h, l, 5, "residue features");
  }

  EncoderOutput out;
  out.coords = x;
  out.features = h;
  out.pocket_coords = z;
  out.pocket_features = b;
  out.protein = p;
  out.segmentation = seg_head_.forward(h);
  out.confidence = conf_head_.forward(b);
  return out;
}

Var Model::confidence_head(const Var& pocket_features) const { return conf_head_.forward(pocket_features); }

PocketSet Model::cluster_pockets(const EncoderOutput& out) const {
  PocketSet ps;
  ps.assignment = dbscan(out.pocket_coords.value(), cfg_.cluster_eps, cfg_.cluster_min_pts);
  std::size_t k = 0;
  for (std::size_t a : ps.assignment) k = std::max(k, a + 1);
  ps.centers = segment_mean(out.pocket_coords, ps.assignment, k);
  ps.embeddings = segment_mean(out.pocket_features, ps.assignment, k);
  ps.confidence = segment_mean(out.confidence, ps.assignment, k);
  ps.protein = out.protein;
  return ps;
}

PocketSet Model::project(const PocketSet& pre) const {
  PocketSet ps = pre;
  ps.embeddings = pocket_proj_.forward(pre.embeddings);
  ps.protein = protein_proj_.forward(pre.protein);
  return ps;
}

Var Model::project_protein(const Var& protein) const { return protein_proj_.forward(protein); }

Var Model::encode_ligands(const Var& features, bool train, std::mt19937_64* rng) const {
  if (features.cols() != cfg_.ligand_in) {
    throw ShapeError("ligand feature width " + std::to_string(features.cols()) + ", model expects " +
                     std::to_string(cfg_.ligand_in));
  }
  return ligand_.forward(features, train, rng);
}

bool Model::ligand_batch_trainable(const std::string& name) {
  return name.starts_with("protein_proj.") || name.starts_with("ligand.");
}

}  // namespace conglude::enc
