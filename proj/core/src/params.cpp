#include "conglude/params.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

#include "binary_io.hpp"
#include "conglude/errors.hpp"

namespace conglude {

namespace {
constexpr char kMagic[4] = {'C', 'G', 'C', 'K'};
constexpr std::string_view kMetaPrefix = "meta.";
constexpr std::uint32_t kMaxNameLength = 1u << 16;
constexpr std::uint32_t kMaxRank = 8;

void write_section(std::ostream& out, const std::string& name, const Tensor& t) {
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  binio::put_bytes(out, name);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) binio::put<std::uint64_t>(out, d);
  for (double v : t.storage()) binio::put<double>(out, v);
}
}  // namespace

Var& ParamSet::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, Var::parameter(std::move(init), name));
  return entries_.back().second;
}

const Var& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

Var& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

void ParamSet::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, v] : entries_) out.add(name, v.value());
  return out;
}

void ParamSet::assign_from(const ParamSet& other) {
  if (other.size() != size()) throw ShapeError("assign_from: parameter count mismatch");
  for (auto& [name, v] : entries_) {
    const Var& src = other.at(name);
    if (!src.value().same_shape(v.value())) throw ShapeError("assign_from: shape mismatch for " + name);
    v.mutable_value() = src.value();
  }
}

std::string ParamSet::sha256(const std::function<bool(const std::string&)>& select) const {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 initialisation failed");
  }
  auto feed = [&](const void* p, std::size_t n) { EVP_DigestUpdate(ctx.get(), p, n); };
  for (const auto& [name, v] : entries_) {
    if (!select(name)) continue;
    feed(name.data(), name.size());
    for (std::size_t d : v.value().shape()) {
      const auto d64 = binio::byteswap_if_big(static_cast<std::uint64_t>(d));
      feed(&d64, sizeof d64);
    }
    for (double x : v.value().storage()) {
      const double le = binio::byteswap_if_big(x);
      feed(&le, sizeof le);
    }
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::string ParamSet::sha256() const {
  return sha256([](const std::string&) { return true; });
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, 4);
  binio::put<std::uint32_t>(out, Checkpoint::kVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size() + ckpt.meta.size()));
  for (const auto& [key, value] : ckpt.meta) {
    write_section(out, std::string(kMetaPrefix) + key, Tensor({1}, std::vector<double>{value}));
  }
  for (const auto& [name, v] : ckpt.params.entries()) write_section(out, name, v.value());
  if (!out) throw FormatError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const auto version = binio::get<std::uint32_t>(in, "checkpoint version");
  if (version != Checkpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(Checkpoint::kVersion) + ")");
  }
  const auto count = binio::get<std::uint32_t>(in, "section count");
  Checkpoint ckpt;
  for (std::uint32_t s = 0; s < count; ++s) {
    const auto name_len = binio::get<std::uint32_t>(in, "section name length");
    if (name_len == 0 || name_len > kMaxNameLength) throw FormatError("invalid section name length");
    std::string name = binio::get_bytes(in, name_len, "section name");
    const auto rank = binio::get<std::uint32_t>(in, "section rank");
    if (rank > kMaxRank) throw FormatError("section '" + name + "' has unsupported rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(binio::get<std::uint64_t>(in, "section dims"));
    const std::size_t n = shape_product(shape);
    std::vector<double> data(n);
    for (auto& x : data) x = binio::get<double>(in, "section values");
    if (name.starts_with(kMetaPrefix)) {
      if (n != 1) throw FormatError("metadata section '" + name + "' must hold one value");
      ckpt.meta[name.substr(kMetaPrefix.size())] = data[0];
    } else {
      ckpt.params.add(name, Tensor(std::move(shape), std::move(data)));
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace conglude
