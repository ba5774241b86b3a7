#include <algorithm>
#include <bit>
#include <cstring>
#include <set>
#include <tuple>

#include "conglude/errors.hpp"
#include "conglude/mol.hpp"

namespace conglude::mol {

namespace {

class Fnv1a64 {
 public:
  void i32(std::int32_t v) { bytes(static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)), 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  std::uint64_t digest() const { return h_; }

 private:
  // Little-endian byte order regardless of host.
  void bytes(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
      h_ ^= (v >> (8 * i)) & 0xFFu;
      h_ *= 1099511628211ULL;
    }
  }
  std::uint64_t h_ = 14695981039346656037ULL;
};

std::int32_t bond_code(BondOrder o) { return static_cast<std::int32_t>(o); }

}  // namespace

std::vector<std::uint64_t> morgan_identifiers(const MolGraph& m, int radius) {
  if (radius < 0) throw ContractError("fingerprint radius must be >= 0");
  const std::size_t n = m.atoms.size();
  const std::size_t nb = m.bonds.size();

  // Neighbour lists carry the bond index for environment tracking.
  std::vector<std::vector<std::tuple<std::size_t, BondOrder, std::size_t>>> adj(n);
  for (std::size_t b = 0; b < nb; ++b) {
    adj[m.bonds[b].a].emplace_back(m.bonds[b].b, m.bonds[b].order, b);
    adj[m.bonds[b].b].emplace_back(m.bonds[b].a, m.bonds[b].order, b);
  }

  std::vector<std::uint64_t> ids(n);
  std::vector<std::vector<bool>> env(n, std::vector<bool>(nb, false));
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& a = m.atoms[i];
    Fnv1a64 h;
    h.i32(a.atomic_number);
    h.i32(static_cast<std::int32_t>(adj[i].size()));
    h.i32(a.formal_charge);
    h.i32(a.hydrogens);
    h.i32(a.aromatic ? 1 : 0);
    ids[i] = h.digest();
  }
  {
    std::vector<std::uint64_t> round0 = ids;
    std::sort(round0.begin(), round0.end());
    out.insert(out.end(), round0.begin(), round0.end());
  }

  std::set<std::vector<bool>> seen{std::vector<bool>(nb, false)};
  for (int r = 1; r <= radius; ++r) {
    std::vector<std::uint64_t> next(n);
    std::vector<std::vector<bool>> next_env(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<std::int32_t, std::uint64_t>> nbrs;
      next_env[i] = env[i];
      for (const auto& [j, order, b] : adj[i]) {
        nbrs.emplace_back(bond_code(order), ids[j]);
        next_env[i][b] = true;
        for (std::size_t k = 0; k < nb; ++k) {
          if (env[j][k]) next_env[i][k] = true;
        }
      }
      std::sort(nbrs.begin(), nbrs.end());
      Fnv1a64 h;
      h.i32(r);
      h.u64(ids[i]);
      for (const auto& [code, id] : nbrs) {
        h.i32(code);
        h.u64(id);
      }
      next[i] = h.digest();
    }
    std::vector<std::pair<std::uint64_t, std::size_t>> candidates;
    for (std::size_t i = 0; i < n; ++i) candidates.emplace_back(next[i], i);
    std::sort(candidates.begin(), candidates.end());
    for (const auto& [id, i] : candidates) {
      if (seen.insert(next_env[i]).second) out.push_back(id);
    }
    ids = std::move(next);
    env = std::move(next_env);
  }
  return out;
}

std::vector<std::uint32_t> morgan_counts(const MolGraph& m, int radius, std::size_t width) {
  if (width == 0 || !std::has_single_bit(width)) throw ContractError("fingerprint width must be a power of two");
  std::vector<std::uint32_t> counts(width, 0);
  for (std::uint64_t id : morgan_identifiers(m, radius)) ++counts[id & (width - 1)];
  return counts;
}

}  // namespace conglude::mol
