#include "conglude/screen.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <thread>

#include "conglude/errors.hpp"

namespace conglude::screen {

namespace {

struct Scored {
  double score;
  std::size_t row;
};

// Total order used for every id-ranked list.
struct ById {
  const std::vector<std::string>* ids;
  bool operator()(const Scored& a, const Scored& b) const {
    if (a.score != b.score) return a.score > b.score;
    return (*ids)[a.row] < (*ids)[b.row];
  }
};

struct ByRow {
  bool operator()(const Scored& a, const Scored& b) const {
    if (a.score != b.score) return a.score > b.score;
    return a.row < b.row;
  }
};

template <typename Cmp>
void keep_top(std::vector<Scored>& v, std::size_t top_k, Cmp cmp) {
  if (top_k == 0 || top_k >= v.size()) {
    std::sort(v.begin(), v.end(), cmp);
  } else {
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(top_k), v.end(), cmp);
    v.resize(top_k);
  }
}

double query_norm(std::span<const double> q) {
  double n = 0.0;
  for (double v : q) n += v * v;
  n = std::sqrt(n);
  if (!(n > 0.0) || !std::isfinite(n)) throw ContractError("query embedding has zero or non-finite norm");
  return n;
}

double cosine_row(const float* row, std::span<const double> q, double qn) {
  double dot = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double r = row[k];
    dot += r * q[k];
    nn += r * r;
  }
  return nn > 0.0 ? dot / (std::sqrt(nn) * qn) : 0.0;
}

std::vector<Ranked> materialize(const EmbeddingStore& store, const std::vector<Scored>& v) {
  std::vector<Ranked> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back({store.ids[s.row], s.score, s.row});
  return out;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<Ranked> rank_by_cosine(const EmbeddingStore& store, std::span<const double> query,
                                   std::size_t col_begin, std::size_t top_k, std::size_t shards,
                                   std::size_t threads) {
  if (col_begin + query.size() > store.width) {
    throw ShapeError("query width " + std::to_string(query.size()) + " at column " + std::to_string(col_begin) +
                     " exceeds store width " + std::to_string(store.width));
  }
  const double qn = query_norm(query);
  const std::size_t rows = store.rows();
  shards = std::max<std::size_t>(1, std::min(shards, std::max<std::size_t>(rows, 1)));
  const ById cmp{&store.ids};

  std::vector<std::vector<Scored>> partial(shards);
  parallel_for(shards, threads, [&](std::size_t s) {
    const std::size_t begin = rows * s / shards, end = rows * (s + 1) / shards;
    auto& v = partial[s];
    v.reserve(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
      v.push_back({cosine_row(store.data.data() + r * store.width + col_begin, query, qn), r});
    }
    keep_top(v, top_k, cmp);
  });

  if (shards == 1) return materialize(store, partial[0]);
  std::vector<Scored> merged;
  std::size_t total = 0;
  for (const auto& p : partial) total += p.size();
  merged.reserve(total);
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  keep_top(merged, top_k, cmp);
  return materialize(store, merged);
}

std::vector<Ranked> virtual_screen(const EmbeddingStore& ligands, std::span<const double> protein, std::size_t top_k,
                                   std::size_t threads) {
  if (ligands.kind != StoreKind::Ligand) throw FormatError("virtual screening needs a ligand store");
  if (ligands.width != 2 * protein.size()) {
    throw ShapeError("ligand store width " + std::to_string(ligands.width) + " does not match protein width " +
                     std::to_string(protein.size()));
  }
  return rank_by_cosine(ligands, protein, 0, top_k, threads, threads);
}

std::vector<Ranked> target_fish(const EmbeddingStore& proteins, std::span<const double> ligand_mp, std::size_t top_k,
                                std::size_t threads) {
  if (proteins.kind != StoreKind::Protein) throw FormatError("target fishing needs a protein store");
  if (proteins.width != ligand_mp.size()) throw ShapeError("ligand embedding width does not match protein store");
  return rank_by_cosine(proteins, ligand_mp, 0, top_k, threads, threads);
}

namespace {

std::vector<std::size_t> pocket_rows(const EmbeddingStore& pockets, const std::string& protein_id) {
  if (pockets.kind != StoreKind::Pocket) throw FormatError("pocket ranking needs a pocket store");
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < pockets.rows(); ++r)
    if (pockets.pockets[r].protein_id == protein_id) rows.push_back(r);
  if (rows.empty()) throw FormatError("no pockets for protein '" + protein_id + "'");
  return rows;
}

}  // namespace

std::vector<Ranked> predict_pockets(const EmbeddingStore& pockets, const std::string& protein_id, std::size_t top_k) {
  std::vector<Scored> v;
  for (std::size_t r : pocket_rows(pockets, protein_id)) v.push_back({pockets.pockets[r].confidence, r});
  keep_top(v, top_k, ByRow{});
  return materialize(pockets, v);
}

std::vector<Ranked> select_pocket_for_ligand(const EmbeddingStore& pockets, const std::string& protein_id,
                                             std::span<const double> ligand_mb, std::size_t top_k) {
  if (pockets.width != ligand_mb.size()) throw ShapeError("ligand embedding width does not match pocket store");
  const double qn = query_norm(ligand_mb);
  std::vector<Scored> v;
  for (std::size_t r : pocket_rows(pockets, protein_id)) {
    v.push_back({cosine_row(pockets.data.data() + r * pockets.width, ligand_mb, qn), r});
  }
  keep_top(v, top_k, ByRow{});
  return materialize(pockets, v);
}

std::vector<double> row_as_double(const EmbeddingStore& store, std::size_t row) {
  if (row >= store.rows()) throw ContractError("store row out of range");
  auto r = store.row(row);
  return {r.begin(), r.end()};
}

std::size_t find_row(const EmbeddingStore& store, const std::string& id) {
  for (std::size_t r = 0; r < store.rows(); ++r)
    if (store.ids[r] == id) return r;
  throw FormatError("id '" + id + "' not found in " + to_string(store.kind) + " store");
}

ProteinStores embed_proteins(const enc::Model& model, const std::vector<prot::ProteinRecord>& proteins,
                             std::size_t threads) {
  struct Result {
    Tensor protein, pockets, centers, confidence;
  };
  std::vector<Result> results(proteins.size());
  parallel_for(proteins.size(), threads, [&](std::size_t i) {
    NoGradGuard guard;
    const auto g = model.make_graph(proteins[i]);
    const auto out = model.encode_protein(g);
    const auto ps = model.project(model.cluster_pockets(out));
    results[i] = {ps.protein.value(), ps.embeddings.value(), ps.centers.value(), ps.confidence.value()};
  });

  ProteinStores s;
  s.proteins.kind = StoreKind::Protein;
  s.pockets.kind = StoreKind::Pocket;
  s.proteins.width = s.pockets.width = model.config().contrast_dim;
  for (std::size_t i = 0; i < proteins.size(); ++i) {
    const auto& r = results[i];
    s.proteins.add_row(proteins[i].id, r.protein.row_span(0));
    for (std::size_t k = 0; k < r.pockets.rows(); ++k) {
      PocketMeta meta{proteins[i].id, {r.centers(k, 0), r.centers(k, 1), r.centers(k, 2)}, r.confidence(k, 0)};
      s.pockets.add_pocket_row(proteins[i].id + ":" + std::to_string(k), r.pockets.row_span(k), meta);
    }
  }
  s.proteins.validate();
  s.pockets.validate();
  return s;
}

EmbeddingStore embed_ligands(const enc::Model& model, const std::vector<data::LigandRecord>& ligands) {
  EmbeddingStore s;
  s.kind = StoreKind::Ligand;
  s.width = 2 * model.config().contrast_dim;
  const std::size_t w = model.config().ligand_in;
  constexpr std::size_t kChunk = 512;
  NoGradGuard guard;
  for (std::size_t start = 0; start < ligands.size(); start += kChunk) {
    const std::size_t end = std::min(ligands.size(), start + kChunk);
    Tensor x = Tensor::matrix(end - start, w);
    for (std::size_t i = start; i < end; ++i) {
      if (ligands[i].features.size() != w) {
        throw ShapeError("ligand '" + ligands[i].id + "' has " + std::to_string(ligands[i].features.size()) +
                         " features, model expects " + std::to_string(w));
      }
      for (std::size_t k = 0; k < w; ++k) x(i - start, k) = ligands[i].features[k];
    }
    const Tensor m = model.encode_ligands(Var::constant(std::move(x))).value();
    for (std::size_t i = start; i < end; ++i) s.add_row(ligands[i].id, m.row_span(i - start));
  }
  s.validate();
  return s;
}

void write_ranking_csv(std::ostream& out, const std::string& query_id, const std::vector<Ranked>& ranking,
                       bool header) {
  if (header) out << "query,rank,id,score\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    out << query_id << ',' << (i + 1) << ',' << ranking[i].id << ',' << data::format_double(ranking[i].score) << '\n';
  }
}

}  // namespace conglude::screen
