#include "conglude/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "conglude/errors.hpp"

namespace conglude::prot {

namespace {

std::string make_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%03zu", prefix, i);
  return buf;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v{n(rng), n(rng), n(rng)};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (len > 1e-9) return {v[0] / len, v[1] / len, v[2] / len};
  }
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 offset(const Vec3& c, const Vec3& dir, double r) {
  return {c[0] + r * dir[0], c[1] + r * dir[1], c[2] + r * dir[2]};
}

bool far_from_all(const Vec3& p, const std::vector<Vec3>& others, double min_dist) {
  for (const auto& o : others) {
    if (distance(p, o) < min_dist) return false;
  }
  return true;
}

}  // namespace

SynthDataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.n_proteins == 0 || cfg.n_sites == 0) throw ContractError("synth: need proteins and sites");
  const std::size_t total_sites = cfg.n_proteins * cfg.n_sites;
  if (cfg.n_ligands < total_sites) throw ContractError("synth: need at least one ligand per site");
  if (cfg.residues_per_protein < cfg.n_sites * cfg.lining_residues + 1) {
    throw ContractError("synth: too few residues for the requested sites");
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  SynthDataset ds;
  ds.ligand_map = Tensor::matrix(cfg.ligand_feature_dim, cfg.residue_feature_dim);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(cfg.residue_feature_dim));
  for (double& v : ds.ligand_map.storage()) v = gauss(rng) * map_scale;

  const double min_site_angle = cfg.n_sites <= 2 ? 120.0 : (cfg.n_sites <= 4 ? 90.0 : 45.0);
  const double site_radius = 0.7 * cfg.protein_radius;

  for (std::size_t p = 0; p < cfg.n_proteins; ++p) {
    ProteinRecord rec;
    rec.id = make_id('P', p);

    std::vector<Vec3> dirs;
    double angle = min_site_angle;
    while (dirs.size() < cfg.n_sites) {
      bool placed = false;
      for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
        const Vec3 d = random_unit(rng);
        bool ok = true;
        for (const auto& e : dirs) ok = ok && dot(d, e) <= std::cos(angle * std::numbers::pi / 180.0);
        if (ok) {
          dirs.push_back(d);
          placed = true;
        }
      }
      if (!placed) angle *= 0.8;
    }

    std::vector<Vec3> centers;
    for (const auto& d : dirs) centers.push_back(offset({0, 0, 0}, d, site_radius));

    std::vector<Vec3> residues;
    std::vector<int> owner;  // site index or -1
    for (std::size_t s = 0; s < cfg.n_sites; ++s) {
      std::size_t placed = 0;
      double spacing = 2.5;
      while (placed < cfg.lining_residues) {
        bool ok = false;
        for (int attempt = 0; attempt < 500 && !ok; ++attempt) {
          const double r = 3.2 + 0.3 * (unif(rng) + 1.0);
          const Vec3 x = offset(centers[s], random_unit(rng), r);
          if (far_from_all(x, residues, spacing)) {
            residues.push_back(x);
            owner.push_back(static_cast<int>(s));
            ok = true;
          }
        }
        if (ok) {
          ++placed;
        } else {
          spacing *= 0.9;
        }
      }
    }
    double spacing = 3.0;
    while (residues.size() < cfg.residues_per_protein) {
      bool ok = false;
      for (int attempt = 0; attempt < 2000 && !ok; ++attempt) {
        const Vec3 x{unif(rng) * cfg.protein_radius, unif(rng) * cfg.protein_radius,
                     unif(rng) * cfg.protein_radius};
        if (distance(x, {0, 0, 0}) > cfg.protein_radius) continue;
        if (!far_from_all(x, centers, 5.5)) continue;
        if (!far_from_all(x, residues, spacing)) continue;
        residues.push_back(x);
        owner.push_back(-1);
        ok = true;
      }
      if (!ok) spacing *= 0.9;
    }

    std::vector<std::vector<double>> signatures(cfg.n_sites, std::vector<double>(cfg.residue_feature_dim));
    for (auto& sig : signatures)
      for (double& v : sig) v = gauss(rng);

    rec.coords = residues;
    rec.features = Tensor::matrix(residues.size(), cfg.residue_feature_dim);
    for (std::size_t i = 0; i < residues.size(); ++i) {
      for (std::size_t k = 0; k < cfg.residue_feature_dim; ++k) {
        rec.features(i, k) = owner[i] < 0 ? 0.5 * gauss(rng)
                                          : signatures[static_cast<std::size_t>(owner[i])][k] + 0.2 * gauss(rng);
      }
    }
    for (std::size_t s = 0; s < cfg.n_sites; ++s) {
      SiteRecord site;
      site.ligand_atoms.push_back(centers[s]);
      for (int a = 0; a < 3; ++a) site.ligand_atoms.push_back(offset(centers[s], random_unit(rng), 1.2));
      rec.sites.push_back(std::move(site));
    }
    ds.site_signatures.push_back(std::move(signatures));
    ds.proteins.push_back(std::move(rec));
  }

  for (std::size_t l = 0; l < cfg.n_ligands; ++l) {
    const std::size_t flat = l % total_sites;
    const std::size_t p = flat / cfg.n_sites, s = flat % cfg.n_sites;
    data::LigandRecord lig;
    lig.id = make_id('L', l);
    const auto& sig = ds.site_signatures[p][s];
    lig.features.assign(cfg.ligand_feature_dim, 0.0);
    for (std::size_t r = 0; r < cfg.ligand_feature_dim; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < cfg.residue_feature_dim; ++k) acc += ds.ligand_map(r, k) * sig[k];
      lig.features[r] = acc + cfg.ligand_noise * gauss(rng);
    }
    if (l < total_sites) ds.proteins[p].sites[s].ligand_id = lig.id;
    ds.ligand_site.emplace_back(p, s);
    ds.ligands.push_back(std::move(lig));
  }

  for (std::size_t p = 0; p < cfg.n_proteins; ++p) {
    for (std::size_t l = 0; l < cfg.n_ligands; ++l) {
      ds.activities.push_back({ds.proteins[p].id, ds.ligands[l].id, ds.ligand_site[l].first == p ? 1 : 0});
    }
  }
  return ds;
}

}  // namespace conglude::prot
