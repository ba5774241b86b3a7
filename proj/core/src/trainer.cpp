#include "conglude/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "conglude/errors.hpp"
#include "conglude/metrics.hpp"

namespace conglude::train {

void TrainConfig::validate() const {
  loss.validate();
  if (sb_batch_size == 0 || lb_proteins_per_batch == 0 || lb_active_cap == 0 || lb_actives_per_protein == 0) {
    throw ContractError("batch sizes and caps must be positive");
  }
  if (!(lr > 0) || !(min_lr > 0)) throw ContractError("learning rates must be positive");
  if (!(plateau_factor > 0 && plateau_factor < 1)) throw ContractError("plateau_factor must be in (0,1)");
  if (plateau_patience == 0 || early_stop_patience == 0) throw ContractError("patience must be positive");
  if (!(sb_probability >= 0 && sb_probability <= 1)) throw ContractError("sb_probability must be in [0,1]");
  if (max_epochs == 0) throw ContractError("max_epochs must be positive");
}

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "seed", "lr", "max_epochs", "max_steps", "sb_batch_size", "lb_proteins_per_batch", "lb_actives_per_protein",
      "lb_active_cap", "lb_inactives_per_active", "lb_loss_scale", "sb_probability", "plateau_factor",
      "plateau_patience", "min_lr", "early_stop_patience", "weight_decay", "adam_beta1", "adam_beta2", "adam_eps",
      "hidden_dim", "layers", "virtual_nodes", "contrast_dim", "ligand_hidden", "ligand_input_dropout",
      "ligand_hidden_dropout", "sphere_margin", "cluster_eps", "knn_k", "knn_radius", "coord_init_gain",
      "enable_geometric", "enable_p2m", "enable_m2p", "enable_m2b", "enable_lb", "tau_p2m", "tau_m2p", "tau_m2b",
      "dice_eps", "conf_gamma", "conf_floor", "weight_bsc", "weight_seg", "weight_conf", "weight_p2m",
      "weight_m2p", "weight_m2b",
      // data paths, resolved by the command line front end
      "proteins", "ligands", "activities", "val_proteins", "val_activities", "checkpoint", "log"};
  return keys;
}

TrainConfig config_from(const KeyValueConfig& kv) {
  kv.require_known(config_keys());
  TrainConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  c.lr = kv.get_double("lr", c.lr);
  c.max_epochs = kv.get_size("max_epochs", c.max_epochs);
  c.max_steps = kv.get_size("max_steps", c.max_steps);
  c.sb_batch_size = kv.get_size("sb_batch_size", c.sb_batch_size);
  c.lb_proteins_per_batch = kv.get_size("lb_proteins_per_batch", c.lb_proteins_per_batch);
  c.lb_actives_per_protein = kv.get_size("lb_actives_per_protein", c.lb_actives_per_protein);
  c.lb_active_cap = kv.get_size("lb_active_cap", c.lb_active_cap);
  c.lb_inactives_per_active = kv.get_size("lb_inactives_per_active", c.lb_inactives_per_active);
  c.sb_probability = kv.get_double("sb_probability", c.sb_probability);
  c.plateau_factor = kv.get_double("plateau_factor", c.plateau_factor);
  c.plateau_patience = kv.get_size("plateau_patience", c.plateau_patience);
  c.min_lr = kv.get_double("min_lr", c.min_lr);
  c.early_stop_patience = kv.get_size("early_stop_patience", c.early_stop_patience);
  c.adam.weight_decay = kv.get_double("weight_decay", c.adam.weight_decay);
  c.adam.beta1 = kv.get_double("adam_beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("adam_beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("adam_eps", c.adam.eps);

  auto& e = c.encoder;
  e.hidden = kv.get_size("hidden_dim", e.hidden);
  e.layers = kv.get_size("layers", e.layers);
  e.virtual_nodes = kv.get_size("virtual_nodes", e.virtual_nodes);
  e.contrast_dim = kv.get_size("contrast_dim", e.contrast_dim);
  e.ligand_hidden = kv.get_size("ligand_hidden", e.ligand_hidden);
  e.ligand_input_dropout = kv.get_double("ligand_input_dropout", e.ligand_input_dropout);
  e.ligand_hidden_dropout = kv.get_double("ligand_hidden_dropout", e.ligand_hidden_dropout);
  e.sphere_margin = kv.get_double("sphere_margin", e.sphere_margin);
  e.cluster_eps = kv.get_double("cluster_eps", e.cluster_eps);
  e.knn_k = kv.get_size("knn_k", e.knn_k);
  e.knn_radius = kv.get_double("knn_radius", e.knn_radius);
  e.coord_init_gain = kv.get_double("coord_init_gain", e.coord_init_gain);

  auto& l = c.loss;
  l = loss::LossConfig::for_dim(e.contrast_dim);
  l.tau_p2m = kv.get_double("tau_p2m", l.tau_p2m);
  l.tau_m2p = kv.get_double("tau_m2p", l.tau_m2p);
  l.tau_m2b = kv.get_double("tau_m2b", l.tau_m2b);
  l.dice_eps = kv.get_double("dice_eps", l.dice_eps);
  l.conf_gamma = kv.get_double("conf_gamma", l.conf_gamma);
  l.conf_floor = kv.get_double("conf_floor", l.conf_floor);
  l.enable_geometric = kv.get_bool("enable_geometric", l.enable_geometric);
  l.enable_p2m = kv.get_bool("enable_p2m", l.enable_p2m);
  l.enable_m2p = kv.get_bool("enable_m2p", l.enable_m2p);
  l.enable_m2b = kv.get_bool("enable_m2b", l.enable_m2b);
  l.enable_lb = kv.get_bool("enable_lb", l.enable_lb);
  l.weight_bsc = kv.get_double("weight_bsc", l.weight_bsc);
  l.weight_seg = kv.get_double("weight_seg", l.weight_seg);
  l.weight_conf = kv.get_double("weight_conf", l.weight_conf);
  l.weight_p2m = kv.get_double("weight_p2m", l.weight_p2m);
  l.weight_m2p = kv.get_double("weight_m2p", l.weight_m2p);
  l.weight_m2b = kv.get_double("weight_m2b", l.weight_m2b);
  l.lb_scale = kv.get_double("lb_loss_scale", l.lb_scale);
  c.validate();
  return c;
}

TrainData prepare_data(const enc::Model& model, const std::vector<prot::ProteinRecord>& proteins,
                       const std::vector<data::LigandRecord>& ligands,
                       const std::vector<data::ActivityRecord>& activities) {
  TrainData d;
  const std::size_t w = model.config().ligand_in;
  std::map<std::string, std::size_t> lig_index;
  d.ligand_features = Tensor::matrix(ligands.size(), w);
  for (std::size_t i = 0; i < ligands.size(); ++i) {
    if (ligands[i].features.size() != w) {
      throw ShapeError("ligand '" + ligands[i].id + "' has " + std::to_string(ligands[i].features.size()) +
                       " features, model expects " + std::to_string(w));
    }
    if (!lig_index.emplace(ligands[i].id, i).second) throw FormatError("duplicate ligand id '" + ligands[i].id + "'");
    d.ligand_ids.push_back(ligands[i].id);
    for (std::size_t k = 0; k < w; ++k) d.ligand_features(i, k) = ligands[i].features[k];
  }

  std::map<std::string, std::size_t> prot_index;
  for (const auto& rec : proteins) {
    if (!prot_index.emplace(rec.id, d.proteins.size()).second) throw FormatError("duplicate protein id '" + rec.id + "'");
    PreparedProtein pp;
    pp.id = rec.id;
    pp.graph = model.make_graph(rec);
    pp.init = model.make_init(pp.graph);
    pp.residue_labels.assign(pp.graph.residues(), 0);
    const std::size_t pi = d.proteins.size();
    for (std::size_t s = 0; s < rec.sites.size(); ++s) {
      const auto& site = rec.sites[s];
      prot::BindingSiteAnnotation ann;
      try {
        ann = prot::compute_site_center(site.ligand_atoms, pp.graph.coords);
      } catch (const prot::NoContactResidues&) {
        d.warnings.push_back("protein '" + rec.id + "': site of ligand '" + site.ligand_id +
                             "' has no contact residue, skipped");
        continue;
      }
      for (std::size_t i = 0; i < ann.labels.size(); ++i) pp.residue_labels[i] |= ann.labels[i];
      const std::size_t site_idx = pp.site_centers.size();
      pp.site_centers.push_back(ann.center);
      pp.site_ligands.push_back(site.ligand_id);
      auto it = lig_index.find(site.ligand_id);
      if (it == lig_index.end()) {
        d.warnings.push_back("protein '" + rec.id + "': ligand '" + site.ligand_id + "' not in ligand set");
        continue;
      }
      d.complexes.push_back({pi, site_idx, it->second});
    }
    d.proteins.push_back(std::move(pp));
  }

  std::map<std::size_t, LbProtein> lb;
  std::size_t unknown = 0;
  for (const auto& a : activities) {
    auto p = prot_index.find(a.protein_id);
    auto l = lig_index.find(a.ligand_id);
    if (p == prot_index.end() || l == lig_index.end()) {
      ++unknown;
      continue;
    }
    auto& entry = lb[p->second];
    entry.protein = p->second;
    (a.label ? entry.actives : entry.inactives).push_back(l->second);
  }
  if (unknown) d.warnings.push_back(std::to_string(unknown) + " activity rows reference unknown ids, skipped");
  for (auto& [pi, entry] : lb) {
    if (entry.actives.empty()) continue;  // a = 0: nothing to sample
    d.lb.push_back(std::move(entry));
  }
  return d;
}

std::vector<std::size_t> SbSampler::next(std::size_t batch_size, std::mt19937_64& rng) {
  if (n_ == 0) throw ContractError("no structure-based complexes to sample");
  if (pos_ >= order_.size()) {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }
  const std::size_t end = std::min(order_.size(), pos_ + batch_size);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return out;
}

namespace {

std::vector<std::size_t> draw_without_replacement(const std::vector<std::size_t>& pool, std::size_t k,
                                                  std::mt19937_64& rng) {
  std::vector<std::size_t> v = pool;
  k = std::min(k, v.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
  v.resize(k);
  return v;
}

Tensor gather_ligands(const Tensor& all, const std::vector<std::size_t>& rows) {
  Tensor t = Tensor::matrix(rows.size(), all.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < all.cols(); ++k) t(i, k) = all(rows[i], k);
  return t;
}

struct Encoded {
  enc::EncoderOutput out;
  enc::PocketSet pockets;  // projected
};

}  // namespace

LbBatch sample_lb_batch(const TrainData& data, std::mt19937_64& rng, const TrainConfig& cfg) {
  if (data.lb.empty()) throw ContractError("no ligand-based data to sample");
  LbBatch batch;
  std::uniform_int_distribution<std::size_t> pick(0, data.lb.size() - 1);
  for (std::size_t b = 0; b < cfg.lb_proteins_per_batch; ++b) {
    const LbProtein& entry = data.lb[pick(rng)];
    const std::size_t a = std::min({cfg.lb_actives_per_protein, cfg.lb_active_cap, entry.actives.size()});
    LbItem item;
    item.protein = entry.protein;
    for (std::size_t l : draw_without_replacement(entry.actives, a, rng)) {
      item.ligands.push_back(l);
      item.labels.push_back(1);
    }
    for (std::size_t l : draw_without_replacement(entry.inactives, cfg.lb_inactives_per_active * a, rng)) {
      item.ligands.push_back(l);
      item.labels.push_back(0);
    }
    batch.items.push_back(std::move(item));
  }
  return batch;
}

SbLoss sb_loss(const enc::Model& model, const TrainData& data, const std::vector<std::size_t>& batch,
               const loss::LossConfig& cfg, bool train, std::mt19937_64* rng) {
  if (batch.empty()) throw ContractError("empty structure-based batch");
  SbLoss result;
  result.scalars.structure_based = true;

  std::map<std::size_t, Encoded> cache;
  for (std::size_t c : batch) {
    const SbComplex& cx = data.complexes.at(c);
    if (cache.contains(cx.protein)) continue;
    const PreparedProtein& pp = data.proteins[cx.protein];
    Encoded e;
    e.out = model.encode_protein(pp.graph, pp.init);
    e.pockets = model.project(model.cluster_pockets(e.out));
    cache.emplace(cx.protein, std::move(e));
  }

  const double inv_j = 1.0 / static_cast<double>(batch.size());
  Var geo = loss::zero_scalar();
  if (cfg.enable_geometric) {
    std::vector<Var> terms;
    for (std::size_t c : batch) {
      const SbComplex& cx = data.complexes[c];
      const PreparedProtein& pp = data.proteins[cx.protein];
      loss::GeometricTarget target{pp.site_centers[cx.site], pp.site_centers, pp.residue_labels};
      auto t = loss::loss_geometric(cache.at(cx.protein).out, target, cfg);
      result.scalars.bsc += t.bsc.item() * inv_j;
      result.scalars.seg += t.seg.item() * inv_j;
      result.scalars.conf += t.conf.item() * inv_j;
      terms.push_back(t.total);
    }
    geo = mean_all(concat_rows(terms));
  }
  result.scalars.geometric = geo.item();

  Var con = loss::zero_scalar();
  if (cfg.enable_p2m || cfg.enable_m2p || cfg.enable_m2b) {
    std::vector<std::size_t> lig_rows;
    for (std::size_t c : batch) lig_rows.push_back(data.complexes[c].ligand);
    Var m = model.encode_ligands(Var::constant(gather_ligands(data.ligand_features, lig_rows)), train, rng);
    std::vector<loss::SbSample> samples;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const SbComplex& cx = data.complexes[batch[j]];
      const Encoded& e = cache.at(cx.protein);
      const std::size_t l = loss::nearest_index(e.pockets.centers.value(), data.proteins[cx.protein].site_centers[cx.site]);
      samples.push_back({e.pockets.protein, e.pockets.embeddings, l, slice_rows(m, j, j + 1)});
    }
    auto t = loss::loss_contrastive_sb(samples, cfg);
    result.scalars.p2m = t.p2m.item();
    result.scalars.m2p = t.m2p.item();
    result.scalars.m2b = t.m2b.item();
    con = t.total;
  }
  result.total = add(geo, con);
  result.scalars.total = result.total.item();
  return result;
}

LbLoss lb_loss(const enc::Model& model, const TrainData& data, const LbBatch& batch, const loss::LossConfig& cfg,
               bool train, std::mt19937_64* rng) {
  LbLoss result;
  result.scalars.structure_based = false;
  if (!cfg.enable_lb || batch.items.empty()) {
    result.total = loss::zero_scalar();
    return result;
  }
  const std::size_t d = model.config().contrast_dim;
  std::map<std::size_t, Tensor> protein_feature;
  {
    NoGradGuard guard;  // structure encoder is frozen on these batches
    for (const auto& item : batch.items) {
      if (protein_feature.contains(item.protein)) continue;
      const PreparedProtein& pp = data.proteins[item.protein];
      protein_feature.emplace(item.protein, model.encode_protein(pp.graph, pp.init).protein.value());
    }
  }
  std::vector<Var> terms;
  for (const auto& item : batch.items) {
    Var p = model.project_protein(Var::constant(protein_feature.at(item.protein)));
    Var m = model.encode_ligands(Var::constant(gather_ligands(data.ligand_features, item.ligands)), train, rng);
    terms.push_back(loss::loss_lb(p, slice_cols(m, 0, d), item.labels));
  }
  result.total = scale(mean_all(concat_rows(terms)), cfg.lb_scale);
  result.scalars.lb = result.total.item();
  result.scalars.total = result.scalars.lb;
  return result;
}

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what + " loss");
}

}  // namespace

StepScalars train_step_sb(enc::Model& model, AdamW& opt, double lr, const TrainData& data,
                          const std::vector<std::size_t>& batch, const loss::LossConfig& cfg, std::mt19937_64& rng) {
  model.params().zero_grad();
  auto l = sb_loss(model, data, batch, cfg, true, &rng);
  require_finite(l.scalars.total, "structure-based");
  backward(l.total);
  opt.step(model.params(), lr);
  return l.scalars;
}

StepScalars train_step_lb(enc::Model& model, AdamW& opt, double lr, const TrainData& data, const LbBatch& batch,
                          const loss::LossConfig& cfg, std::mt19937_64& rng) {
  model.params().zero_grad();
  auto l = lb_loss(model, data, batch, cfg, true, &rng);
  require_finite(l.scalars.total, "ligand-based");
  backward(l.total);
  opt.step(model.params(), lr, enc::Model::ligand_batch_trainable);
  return l.scalars;
}

double validation_metric(const enc::Model& model, const TrainData& data, const loss::LossConfig& cfg) {
  NoGradGuard guard;
  const std::size_t d = model.config().contrast_dim;
  double metric = 0.0;

  std::map<std::size_t, Tensor> protein_emb;
  auto embed = [&](std::size_t pi) -> const Tensor& {
    auto it = protein_emb.find(pi);
    if (it != protein_emb.end()) return it->second;
    const PreparedProtein& pp = data.proteins[pi];
    Tensor p = model.project_protein(model.encode_protein(pp.graph, pp.init).protein).value();
    return protein_emb.emplace(pi, std::move(p)).first->second;
  };
  auto cosine = [](const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb, std::size_t width) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < width; ++k) {
      dot += a(ra, k) * b(rb, k);
      na += a(ra, k) * a(ra, k);
      nb += b(rb, k) * b(rb, k);
    }
    return dot / std::max(std::sqrt(na * nb), 1e-300);
  };

  if (data.has_sb()) {
    std::vector<std::size_t> rows;
    for (const auto& c : data.complexes) rows.push_back(c.ligand);
    const Tensor m = model.encode_ligands(Var::constant(gather_ligands(data.ligand_features, rows))).value();
    const std::size_t j = data.complexes.size();
    double total = 0.0;
    for (std::size_t a = 0; a < j; ++a) {
      const Tensor& p = embed(data.complexes[a].protein);
      const double own = cosine(p, 0, m, a, d);
      std::size_t better = 0;
      for (std::size_t b = 0; b < j; ++b) {
        if (b != a && cosine(p, 0, m, b, d) > own) ++better;
      }
      total += j > 1 ? static_cast<double>(better) / static_cast<double>(j - 1) : 0.0;
    }
    metric += total / static_cast<double>(j);
  }
  if (cfg.enable_geometric) {
    // Fraction of annotated sites missed at DCC 4 A by the top-k pockets.
    std::vector<metrics::ProteinSites> sites;
    for (const auto& pp : data.proteins) {
      if (pp.site_centers.empty()) continue;
      metrics::ProteinSites ps;
      const auto pockets = model.cluster_pockets(model.encode_protein(pp.graph, pp.init));
      const Tensor& c = pockets.centers.value();
      for (std::size_t k = 0; k < c.rows(); ++k) {
        ps.predictions.push_back({{c(k, 0), c(k, 1), c(k, 2)}, pockets.confidence.value()(k, 0)});
      }
      for (const auto& z : pp.site_centers) ps.sites.push_back({z, {}});
      sites.push_back(std::move(ps));
    }
    if (!sites.empty()) metric += 1.0 - metrics::site_success_rates(sites).value();
  }
  if (data.has_lb() && cfg.enable_lb) {
    double total = 0.0;
    for (const auto& entry : data.lb) {
      std::vector<std::size_t> rows = entry.actives;
      rows.insert(rows.end(), entry.inactives.begin(), entry.inactives.end());
      std::vector<std::uint8_t> labels(entry.actives.size(), 1);
      labels.resize(rows.size(), 0);
      Var p = Var::constant(embed(entry.protein));
      Var m = model.encode_ligands(Var::constant(gather_ligands(data.ligand_features, rows)));
      total += loss::loss_lb(p, slice_cols(m, 0, d), labels).item();
    }
    metric += total / static_cast<double>(data.lb.size());
  }
  return metric;
}

std::string EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["steps"] = steps;
  j["sb_steps"] = sb_steps;
  j["lb_steps"] = lb_steps;
  j["lr"] = lr;
  j["loss"] = mean_loss;
  j["sb_loss"] = mean_sb;
  j["lb_loss"] = mean_lb;
  j["metric"] = metric;
  j["improved"] = improved;
  return j.dump();
}

FitResult fit(enc::Model& model, const TrainConfig& cfg, const TrainData& train, const TrainData* validation,
              const EpochCallback& on_epoch) {
  cfg.validate();
  const bool use_sb = train.has_sb();
  const bool use_lb = train.has_lb() && cfg.loss.enable_lb;
  if (!use_sb && !use_lb) throw ContractError("training data contains neither complexes nor usable activities");
  const TrainData& val = (validation && (validation->has_sb() || validation->has_lb())) ? *validation : train;

  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution coin(cfg.sb_probability);
  AdamW opt(cfg.adam);
  double lr = cfg.lr;
  SbSampler sampler(train.complexes.size());
  const std::size_t lb_steps_per_epoch =
      (train.lb.size() + cfg.lb_proteins_per_batch - 1) / cfg.lb_proteins_per_batch;

  FitResult result;
  result.best_metric = std::numeric_limits<double>::infinity();
  ParamSet best = model.params().clone();
  std::size_t since_best = 0, since_reduce = 0;

  try {
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.lr = lr;
      double sum = 0.0, sum_sb = 0.0, sum_lb = 0.0;
      bool out_of_steps = false;
      for (;;) {
        if (cfg.max_steps && result.total_steps >= cfg.max_steps) {
          out_of_steps = true;
          break;
        }
        const bool sb = use_sb && (!use_lb || coin(rng));
        StepScalars s;
        if (sb) {
          auto batch = sampler.next(cfg.sb_batch_size, rng);
          s = train_step_sb(model, opt, lr, train, batch, cfg.loss, rng);
          ++rec.sb_steps;
          sum_sb += s.total;
        } else {
          auto batch = sample_lb_batch(train, rng, cfg);
          s = train_step_lb(model, opt, lr, train, batch, cfg.loss, rng);
          ++rec.lb_steps;
          sum_lb += s.total;
        }
        sum += s.total;
        ++rec.steps;
        ++result.total_steps;
        result.steps.push_back(s);
        if (use_sb ? (sb && sampler.epoch_finished()) : rec.lb_steps >= lb_steps_per_epoch) break;
      }
      if (rec.steps == 0) break;
      rec.mean_loss = sum / static_cast<double>(rec.steps);
      rec.mean_sb = rec.sb_steps ? sum_sb / static_cast<double>(rec.sb_steps) : 0.0;
      rec.mean_lb = rec.lb_steps ? sum_lb / static_cast<double>(rec.lb_steps) : 0.0;
      rec.metric = validation_metric(model, val, cfg.loss);
      if (!std::isfinite(rec.metric)) throw NumericError("non-finite validation metric");
      rec.improved = rec.metric < result.best_metric;
      if (rec.improved) {
        result.best_metric = rec.metric;
        result.best_epoch = epoch;
        best.assign_from(model.params());
        since_best = 0;
        since_reduce = 0;
      } else {
        ++since_best;
        ++since_reduce;
      }
      result.epochs.push_back(rec);
      if (on_epoch) on_epoch(rec);
      if (since_reduce >= cfg.plateau_patience) {
        lr = std::max(lr * cfg.plateau_factor, cfg.min_lr);
        since_reduce = 0;
      }
      if (since_best >= cfg.early_stop_patience) {
        result.early_stopped = true;
        break;
      }
      if (out_of_steps) break;
    }
  } catch (const NumericError&) {
    model.params().assign_from(best);
    throw;
  }
  model.params().assign_from(best);
  return result;
}

}  // namespace conglude::train
