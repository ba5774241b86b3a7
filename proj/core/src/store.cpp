#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "conglude/errors.hpp"
#include "conglude/screen.hpp"

namespace conglude::screen {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'L', 'D'};

double parse_number(const std::string& tok, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw FormatError(where + ": invalid number '" + tok + "'");
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

std::string to_string(StoreKind k) {
  switch (k) {
    case StoreKind::Protein: return "protein";
    case StoreKind::Pocket: return "pocket";
    case StoreKind::Ligand: return "ligand";
  }
  return "unknown";
}

void EmbeddingStore::add_row(const std::string& id, std::span<const double> values) {
  if (values.size() != width) {
    throw ShapeError("store row '" + id + "' has width " + std::to_string(values.size()) + ", store width is " +
                     std::to_string(width));
  }
  double norm = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("store row '" + id + "' is not finite");
    norm += v * v;
  }
  std::size_t start = data.size();
  for (double v : values) data.push_back(static_cast<float>(v));
  // Zero after rounding to single precision is just as unusable.
  double fnorm = 0.0;
  for (std::size_t k = start; k < data.size(); ++k) fnorm += static_cast<double>(data[k]) * data[k];
  if (norm == 0.0 || fnorm == 0.0) {
    data.resize(start);
    throw ContractError("store row '" + id + "' has zero norm");
  }
  ids.push_back(id);
}

void EmbeddingStore::add_pocket_row(const std::string& id, std::span<const double> values, const PocketMeta& meta) {
  if (kind != StoreKind::Pocket) throw ContractError("pocket metadata on a " + to_string(kind) + " store");
  add_row(id, values);
  pockets.push_back(meta);
}

void EmbeddingStore::validate() const {
  if (data.size() != ids.size() * width) throw FormatError("store matrix size does not match row count");
  if (kind == StoreKind::Pocket && pockets.size() != ids.size()) {
    throw FormatError("pocket store needs one metadata entry per row");
  }
  std::set<std::string_view> seen;
  for (const auto& id : ids) {
    if (id.empty() || id.find_first_of("\t\n\r") != std::string::npos) throw FormatError("invalid store id '" + id + "'");
    if (!seen.insert(id).second) throw FormatError("duplicate store id '" + id + "'");
  }
}

std::filesystem::path ids_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".ids";
  return p;
}

void write_store(const std::filesystem::path& path, const EmbeddingStore& store) {
  store.validate();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    binio::put<std::uint32_t>(out, EmbeddingStore::kVersion);
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(store.kind));
    binio::put<std::uint64_t>(out, store.rows());
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.width));
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(store.data.data()),
                static_cast<std::streamsize>(store.data.size() * sizeof(float)));
    } else {
      for (float v : store.data) binio::put<float>(out, v);
    }
    if (!out) throw FormatError("failed writing " + path.string());
  }
  std::ofstream ids(ids_path(path), std::ios::binary | std::ios::trunc);
  if (!ids) throw FormatError("cannot open " + ids_path(path).string() + " for writing");
  for (std::size_t i = 0; i < store.rows(); ++i) {
    ids << store.ids[i];
    if (store.kind == StoreKind::Pocket) {
      const auto& m = store.pockets[i];
      ids << '\t' << m.protein_id << '\t' << data::format_double(m.center[0]) << '\t'
          << data::format_double(m.center[1]) << '\t' << data::format_double(m.center[2]) << '\t'
          << data::format_double(m.confidence);
    }
    ids << '\n';
  }
  if (!ids) throw FormatError("failed writing " + ids_path(path).string());
}

EmbeddingStore read_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open store " + path.string());
  const std::string magic = binio::get_bytes(in, 4, "store magic");
  if (magic != std::string(kMagic, 4)) throw FormatError(path.string() + " is not an embedding store");
  const auto version = binio::get<std::uint32_t>(in, "store version");
  if (version != EmbeddingStore::kVersion) {
    throw FormatError(path.string() + ": store version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(EmbeddingStore::kVersion) + ")");
  }
  EmbeddingStore s;
  const auto kind = binio::get<std::uint8_t>(in, "store kind");
  if (kind > 2) throw FormatError(path.string() + ": unknown store kind " + std::to_string(kind));
  s.kind = static_cast<StoreKind>(kind);
  const auto rows = binio::get<std::uint64_t>(in, "store row count");
  s.width = binio::get<std::uint32_t>(in, "store width");
  if (s.width == 0 && rows > 0) throw FormatError(path.string() + ": zero-width store");
  s.data.resize(rows * s.width);
  in.read(reinterpret_cast<char*>(s.data.data()), static_cast<std::streamsize>(s.data.size() * sizeof(float)));
  if (!in) throw FormatError(path.string() + ": truncated store matrix");
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : s.data) v = binio::byteswap_if_big(v);
  }
  in.peek();
  if (!in.eof()) throw FormatError(path.string() + ": trailing bytes after store matrix");

  std::ifstream ids(ids_path(path));
  if (!ids) throw FormatError("cannot open id file " + ids_path(path).string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ids, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = ids_path(path).string() + ":" + std::to_string(lineno);
    if (s.kind == StoreKind::Pocket) {
      auto f = split_tabs(line);
      if (f.size() != 6) throw FormatError(where + ": expected id, protein, cx, cy, cz, confidence");
      s.ids.push_back(f[0]);
      s.pockets.push_back({f[1],
                           {parse_number(f[2], where), parse_number(f[3], where), parse_number(f[4], where)},
                           parse_number(f[5], where)});
    } else {
      s.ids.push_back(line);
    }
  }
  if (s.ids.size() != rows) {
    throw FormatError(path.string() + ": " + std::to_string(rows) + " rows but " + std::to_string(s.ids.size()) +
                      " ids");
  }
  s.validate();
  return s;
}

}  // namespace conglude::screen
