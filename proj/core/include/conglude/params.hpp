#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "conglude/autograd.hpp"

namespace conglude {

/// Ordered collection of named trainable tensors.
class ParamSet {
 public:
  Var& add(const std::string& name, Tensor init);
  const Var& at(const std::string& name) const;
  Var& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }

  void zero_grad();
  std::size_t scalar_count() const;

  // Independent copy of all values (fresh leaves, no gradients).
  ParamSet clone() const;
  // Copies values by name; both sets must hold the same names and shapes.
  void assign_from(const ParamSet& other);

  // SHA-256 over (name, shape, IEEE-754 bytes) of the selected parameters,
  // hex encoded.
  std::string sha256(const std::function<bool(const std::string&)>& select) const;
  std::string sha256() const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// On-disk model state: parameters plus numeric metadata (architecture
/// knobs not recoverable from parameter shapes).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ParamSet params;
  std::map<std::string, double> meta;
};

// Layout: "CGCK", u32 version, u32 section count, then per section:
// u32 name length, name bytes, u32 rank, rank x u64 dims, doubles.
// All integers and doubles little-endian. Metadata entries are stored as
// rank-1 sections named "meta.<key>".
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace conglude
