#pragma once

#include <cstdint>
#include <vector>

#include "conglude/io.hpp"
#include "conglude/protein.hpp"

namespace conglude::prot {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n_proteins = 16;
  std::size_t residues_per_protein = 32;
  std::size_t n_sites = 2;
  std::size_t n_ligands = 64;
  std::size_t residue_feature_dim = 64;
  std::size_t ligand_feature_dim = 32;
  double protein_radius = 9.0;     // residues fill a ball of this radius
  std::size_t lining_residues = 5; // per planted site
  double ligand_noise = 0.1;
};

/// Planted-pocket dataset.
///
/// Every site has a random signature vector. Residues lining the site carry
/// the signature in their features; background residues are low-amplitude
/// noise. Ligands are assigned round-robin to sites (the first ligand of each
/// site is its co-crystal ligand in `sites`) and their features are a fixed
/// random linear image of the site signature plus noise. A ligand is active
/// on exactly the protein that owns its site.
struct SynthDataset {
  std::vector<ProteinRecord> proteins;
  std::vector<data::LigandRecord> ligands;
  std::vector<data::ActivityRecord> activities;
  // Bookkeeping for probes and tests.
  std::vector<std::vector<std::vector<double>>> site_signatures;  // [protein][site]
  std::vector<std::pair<std::size_t, std::size_t>> ligand_site;    // ligand -> (protein, site)
  Tensor ligand_map;                                               // ligand_dim x residue_dim
};

SynthDataset synth_dataset(const SynthConfig& cfg);

}  // namespace conglude::prot
