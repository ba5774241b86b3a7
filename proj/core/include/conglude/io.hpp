#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "conglude/protein.hpp"

namespace conglude::data {

struct LigandSmiles {
  std::string id;
  std::string smiles;
};

struct LigandRecord {
  std::string id;
  std::vector<double> features;
};

/// One ligand-based label: does `ligand_id` act on `protein_id`.
struct ActivityRecord {
  std::string protein_id;
  std::string ligand_id;
  int label = 0;
  friend bool operator==(const ActivityRecord&, const ActivityRecord&) = default;
};

// Protein file: JSON array or JSON lines of
// {"id", "residues": [{"xyz": [x,y,z], "feat": [...]}],
//  "sites": [{"ligand_id", "ligand_atoms": [[x,y,z], ...]}]}.
std::vector<prot::ProteinRecord> read_proteins(const std::filesystem::path& path);
// Writes JSON lines, one protein per line, doubles in shortest round-trip form.
void write_proteins(const std::filesystem::path& path, const std::vector<prot::ProteinRecord>& proteins);
std::string protein_to_json_line(const prot::ProteinRecord& p);
prot::ProteinRecord protein_from_json(const std::string& text);

// Ligand file: "<id>\t<SMILES>" per line; blank lines and '#' comments skipped.
std::vector<LigandSmiles> read_ligand_smiles(const std::filesystem::path& path);

// Feature file: "<id> v1 v2 ... vW" (whitespace separated) per line.
std::vector<LigandRecord> read_ligand_features(const std::filesystem::path& path);
void write_ligand_features(const std::filesystem::path& path, const std::vector<LigandRecord>& ligands);

// Activity file: "<protein_id>\t<ligand_id>\t<0|1>" per line.
std::vector<ActivityRecord> read_activities(const std::filesystem::path& path);
void write_activities(const std::filesystem::path& path, const std::vector<ActivityRecord>& records);

std::string format_double(double v);

}  // namespace conglude::data
