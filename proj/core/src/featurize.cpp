#include <map>
#include <queue>

#include "conglude/errors.hpp"
#include "conglude/mol.hpp"

namespace conglude::mol {

namespace {

std::size_t components(std::size_t n, const std::vector<Bond>& bonds, std::size_t skip) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    if (b == skip) continue;
    adj[bonds[b].a].push_back(bonds[b].b);
    adj[bonds[b].b].push_back(bonds[b].a);
  }
  std::vector<bool> seen(n, false);
  std::size_t count = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++count;
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = true;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : adj[u]) {
        if (!seen[v]) {
          seen[v] = true;
          q.push(v);
        }
      }
    }
  }
  return count;
}

bool is_n_or_o(const Atom& a) { return a.atomic_number == 7 || a.atomic_number == 8; }

}  // namespace

const std::vector<std::string>& descriptor_names() {
  static const std::vector<std::string> names{
      "heavy_atoms", "bonds",    "ring_closures", "heteroatoms",    "aromatic_atoms",
      "formal_charge", "mol_weight", "hbond_donors", "hbond_acceptors", "rotatable_bonds"};
  return names;
}

std::vector<double> basic_descriptors(const MolGraph& m) {
  const std::size_t n = m.atoms.size();
  const std::size_t base_components = components(n, m.bonds, m.bonds.size());
  std::vector<std::size_t> degree(n, 0);
  for (const auto& b : m.bonds) {
    ++degree[b.a];
    ++degree[b.b];
  }

  double hetero = 0, aromatic = 0, charge = 0, donors = 0, acceptors = 0;
  // integer element counts first so the mass does not depend on atom order
  std::map<int, long> element_count;
  long hydrogens = 0;
  for (const auto& a : m.atoms) {
    if (a.atomic_number != 6 && a.atomic_number != 1) ++hetero;
    if (a.aromatic) ++aromatic;
    charge += a.formal_charge;
    ++element_count[a.atomic_number];
    hydrogens += a.hydrogens;
    if (is_n_or_o(a)) {
      ++acceptors;
      if (a.hydrogens > 0) ++donors;
    }
  }

  element_count[1] += hydrogens;
  double weight = 0;
  for (const auto& [z, count] : element_count) weight += static_cast<double>(count) * atomic_mass(z);

  double rotatable = 0;
  for (std::size_t b = 0; b < m.bonds.size(); ++b) {
    const Bond& bond = m.bonds[b];
    if (bond.order != BondOrder::Single) continue;
    if (degree[bond.a] < 2 || degree[bond.b] < 2) continue;
    const bool in_ring = components(n, m.bonds, b) == base_components;
    if (!in_ring) ++rotatable;
  }

  const double ring_closures =
      static_cast<double>(m.bonds.size()) - static_cast<double>(n) + static_cast<double>(base_components);
  return {static_cast<double>(n), static_cast<double>(m.bonds.size()), ring_closures, hetero, aromatic,
          charge, weight, donors, acceptors, rotatable};
}

LigandFeatures featurize_ligand(const MolGraph& m, const FeaturizerConfig& cfg) {
  if (!cfg.descriptor_mean.empty() && cfg.descriptor_mean.size() != kDescriptorCount) {
    throw ShapeError("descriptor mean must have " + std::to_string(kDescriptorCount) + " entries");
  }
  if (!cfg.descriptor_scale.empty() && cfg.descriptor_scale.size() != kDescriptorCount) {
    throw ShapeError("descriptor scale must have " + std::to_string(kDescriptorCount) + " entries");
  }
  if (cfg.expected_width != 0 && cfg.expected_width != cfg.width()) {
    throw ShapeError("ligand feature width " + std::to_string(cfg.width()) +
                     " does not match the encoder input width " + std::to_string(cfg.expected_width));
  }
  LigandFeatures f;
  f.fingerprint_width = cfg.fingerprint_width;
  const auto counts = morgan_counts(m, cfg.radius, cfg.fingerprint_width);
  f.values.assign(counts.begin(), counts.end());
  const auto desc = basic_descriptors(m);
  for (std::size_t i = 0; i < desc.size(); ++i) {
    const double mean = cfg.descriptor_mean.empty() ? 0.0 : cfg.descriptor_mean[i];
    const double scale = cfg.descriptor_scale.empty() ? 1.0 : cfg.descriptor_scale[i];
    if (!(scale > 0.0)) throw ContractError("descriptor scale must be positive");
    f.values.push_back((desc[i] - mean) / scale);
  }
  return f;
}

}  // namespace conglude::mol
