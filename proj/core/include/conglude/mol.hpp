#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace conglude::mol {

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  std::string element;       // "C", "Cl", ...
  int atomic_number = 0;
  int formal_charge = 0;
  bool aromatic = false;
  int hydrogens = 0;         // explicit (bracket) or implied by valence
  bool bracket = false;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::Single;
};

/// Heavy-atom connectivity of one molecule.
struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;

  std::size_t degree(std::size_t atom) const;
  std::vector<std::vector<std::pair<std::size_t, BondOrder>>> adjacency() const;
};

enum class ParseErrorKind {
  Empty,
  UnexpectedCharacter,
  UnbalancedParenthesis,
  UnmatchedRingClosure,
  UnknownElement,
  ValenceOverflow,
  Unsupported,  // stereo, isotopes, dot-disconnected fragments, ...
  DuplicateBond,
};

std::string to_string(ParseErrorKind kind);

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::size_t offset, const std::string& detail);
  ParseErrorKind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  ParseErrorKind kind_;
  std::size_t offset_;
};

/// Parses the supported SMILES subset: organic-subset and bracket atoms,
/// branches, ring closures (digits and %nn), bond symbols - = # :, and
/// lowercase aromatic atoms. Implicit hydrogens follow standard valences.
MolGraph parse_smiles(std::string_view smiles);

// Element data lookups; atomic number 0 means unknown.
int atomic_number(std::string_view symbol);
double atomic_mass(int atomic_number);

/// ECFP-style count fingerprint folded to `width` bins (power of two).
///
/// Atom invariants and per-round identifiers are hashed with 64-bit FNV-1a
/// over little-endian byte encodings:
///   round 0: int32 (atomic number, heavy degree, formal charge,
///            hydrogen count, aromatic flag)
///   round r: int32 r, uint64 previous id, then for each neighbour sorted by
///            (bond code, neighbour id): int32 bond code, uint64 neighbour id
/// Bond codes: single 1, double 2, triple 3, aromatic 4. An environment
/// whose bond set equals one already emitted is dropped; among same-round
/// duplicates the smaller identifier is kept.
std::vector<std::uint32_t> morgan_counts(const MolGraph& m, int radius, std::size_t width);

// Raw (unfolded) identifiers that survive deduplication, in emission order
// sorted per round. Exposed for tests.
std::vector<std::uint64_t> morgan_identifiers(const MolGraph& m, int radius);

inline constexpr std::size_t kDescriptorCount = 10;

/// Fixed-order descriptor vector:
///  0 heavy atoms, 1 bonds, 2 ring closures (cyclomatic number),
///  3 heteroatoms, 4 aromatic atoms, 5 total formal charge,
///  6 molecular weight (with hydrogens), 7 H-bond donors (N/O with H),
///  8 H-bond acceptors (N/O), 9 rotatable bonds (acyclic single bonds
///  between non-terminal heavy atoms).
std::vector<double> basic_descriptors(const MolGraph& m);
const std::vector<std::string>& descriptor_names();

struct FeaturizerConfig {
  int radius = 2;
  std::size_t fingerprint_width = 2048;
  std::vector<double> descriptor_mean;   // empty = zeros
  std::vector<double> descriptor_scale;  // empty = ones
  std::size_t expected_width = 0;        // 0 = do not check

  std::size_t width() const { return fingerprint_width + kDescriptorCount; }
};

struct LigandFeatures {
  std::vector<double> values;  // fingerprint counts ++ standardized descriptors
  std::size_t fingerprint_width = 0;
};

LigandFeatures featurize_ligand(const MolGraph& m, const FeaturizerConfig& cfg);

}  // namespace conglude::mol
