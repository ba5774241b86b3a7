#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "conglude/encoder.hpp"
#include "conglude/io.hpp"
#include "conglude/protein.hpp"

namespace conglude::screen {

enum class StoreKind : std::uint8_t { Protein = 0, Pocket = 1, Ligand = 2 };

std::string to_string(StoreKind k);

struct PocketMeta {
  std::string protein_id;
  prot::Vec3 center{};
  double confidence = 0.0;
};

/// Row-major single-precision embedding matrix with ids.
struct EmbeddingStore {
  static constexpr std::uint32_t kVersion = 1;

  StoreKind kind = StoreKind::Ligand;
  std::size_t width = 0;
  std::vector<std::string> ids;
  std::vector<float> data;
  std::vector<PocketMeta> pockets;  // one per row for pocket stores

  std::size_t rows() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * width, width}; }
  // Rejects zero-norm rows and width mismatches.
  void add_row(const std::string& id, std::span<const double> values);
  void add_pocket_row(const std::string& id, std::span<const double> values, const PocketMeta& meta);
  // Unique ids, consistent sizes; throws FormatError.
  void validate() const;
};

// `path` holds the matrix; ids (and pocket metadata) go to `path` + ".ids".
std::filesystem::path ids_path(const std::filesystem::path& path);
void write_store(const std::filesystem::path& path, const EmbeddingStore& store);
EmbeddingStore read_store(const std::filesystem::path& path);

struct Ranked {
  std::string id;
  double score = 0.0;
  std::size_t row = 0;
  friend bool operator==(const Ranked&, const Ranked&) = default;
};

/// Cosine scoring of `query` against columns [col_begin, col_begin + query
/// size) of every row. Rows are split into `shards` contiguous chunks scored
/// on up to `threads` threads; each shard keeps its own top list and the
/// lists are merged. Order: score descending, then id ascending.
/// top_k = 0 keeps every row.
std::vector<Ranked> rank_by_cosine(const EmbeddingStore& store, std::span<const double> query,
                                   std::size_t col_begin, std::size_t top_k, std::size_t shards = 1,
                                   std::size_t threads = 1);

// Ligand store rows are [m_p, m_b]; the protein query is compared to m_p.
std::vector<Ranked> virtual_screen(const EmbeddingStore& ligands, std::span<const double> protein, std::size_t top_k,
                                   std::size_t threads = 1);
std::vector<Ranked> target_fish(const EmbeddingStore& proteins, std::span<const double> ligand_mp, std::size_t top_k,
                                std::size_t threads = 1);
// Pockets of one protein by confidence (ties: lower row first).
std::vector<Ranked> predict_pockets(const EmbeddingStore& pockets, const std::string& protein_id, std::size_t top_k);
// Pockets of one protein by cosine to m_b (ties: lower row first).
std::vector<Ranked> select_pocket_for_ligand(const EmbeddingStore& pockets, const std::string& protein_id,
                                             std::span<const double> ligand_mb, std::size_t top_k);

std::vector<double> row_as_double(const EmbeddingStore& store, std::size_t row);
// Row index of `id`; throws FormatError when absent.
std::size_t find_row(const EmbeddingStore& store, const std::string& id);

struct ProteinStores {
  EmbeddingStore proteins;
  EmbeddingStore pockets;
};

// Evaluation-mode forward of every protein (parallel over proteins when
// threads > 1). Pocket rows are named "<protein>:<cluster>".
ProteinStores embed_proteins(const enc::Model& model, const std::vector<prot::ProteinRecord>& proteins,
                             std::size_t threads = 1);
EmbeddingStore embed_ligands(const enc::Model& model, const std::vector<data::LigandRecord>& ligands);

// Columns query,rank,id,score; the header line is optional so several
// queries can share one file.
void write_ranking_csv(std::ostream& out, const std::string& query_id, const std::vector<Ranked>& ranking,
                       bool header = true);

}  // namespace conglude::screen
