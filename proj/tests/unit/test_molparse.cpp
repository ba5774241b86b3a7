#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "conglude/errors.hpp"
#include "conglude/mol.hpp"

using namespace conglude;
using namespace conglude::mol;

namespace {

// Abstract molecule used to emit many SMILES spellings of one graph.
struct Skeleton {
  std::vector<std::string> elements;
  std::vector<std::tuple<std::size_t, std::size_t, int>> bonds;  // a, b, order 1..3
};

int max_valence(const std::string& e) {
  if (e == "C") return 4;
  if (e == "N") return 3;
  if (e == "O" || e == "S") return 2;
  return 1;  // F, Cl, Br
}

Skeleton random_skeleton(std::mt19937_64& rng) {
  static const std::vector<std::string> pool{"C", "C", "C", "C", "N", "O", "S", "F", "Cl", "Br"};
  std::uniform_int_distribution<std::size_t> n_dist(2, 14);
  const std::size_t n = n_dist(rng);
  Skeleton s;
  std::vector<int> used;
  // Chain backbone of carbon-rich atoms with halogens only as leaves.
  for (std::size_t i = 0; i < n; ++i) {
    std::string e = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    if (max_valence(e) == 1 && i + 1 < n) e = "C";
    s.elements.push_back(e);
    used.push_back(0);
  }
  auto has_bond = [&](std::size_t a, std::size_t b) {
    for (auto& [x, y, o] : s.bonds)
      if ((x == a && y == b) || (x == b && y == a)) return true;
    return false;
  };
  for (std::size_t i = 1; i < n; ++i) {
    // attach to a random earlier atom with spare valence
    std::vector<std::size_t> cand;
    for (std::size_t j = 0; j < i; ++j)
      if (used[j] < max_valence(s.elements[j])) cand.push_back(j);
    if (cand.empty()) {
      s.elements.resize(i);
      used.resize(i);
      break;
    }
    const std::size_t j = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
    int order = 1;
    const int spare = std::min(max_valence(s.elements[j]) - used[j], max_valence(s.elements[i]) - used[i]);
    if (spare >= 2 && std::uniform_real_distribution<double>()(rng) < 0.2) order = 2;
    s.bonds.emplace_back(j, i, order);
    used[j] += order;
    used[i] += order;
  }
  // a few ring closures
  const std::size_t atoms = s.elements.size();
  for (int r = 0; r < 2 && atoms >= 5; ++r) {
    std::uniform_int_distribution<std::size_t> pick(0, atoms - 1);
    const std::size_t a = pick(rng), b = pick(rng);
    if (a == b || has_bond(a, b)) continue;
    if (used[a] >= max_valence(s.elements[a]) || used[b] >= max_valence(s.elements[b])) continue;
    s.bonds.emplace_back(a, b, 1);
    ++used[a];
    ++used[b];
  }
  return s;
}

// Depth-first SMILES writer with randomized root and neighbour order.
std::string write_smiles(const Skeleton& s, std::mt19937_64& rng) {
  const std::size_t n = s.elements.size();
  std::vector<std::vector<std::pair<std::size_t, int>>> adj(n);
  for (auto& [a, b, o] : s.bonds) {
    adj[a].push_back({b, o});
    adj[b].push_back({a, o});
  }
  for (auto& v : adj) std::shuffle(v.begin(), v.end(), rng);
  const std::size_t root = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);

  std::vector<int> state(n, 0);  // 0 new, 1 visited
  std::vector<std::vector<std::pair<std::size_t, int>>> children(n);
  std::vector<std::vector<std::tuple<std::size_t, int, bool>>> closures(n);  // partner, order, opens
  std::set<std::pair<std::size_t, std::size_t>> seen_edges;
  auto key = [](std::size_t a, std::size_t b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
  std::function<void(std::size_t)> classify = [&](std::size_t v) {
    state[v] = 1;
    for (auto [w, o] : adj[v]) {
      if (!seen_edges.insert(key(v, w)).second) continue;
      if (!state[w]) {
        children[v].push_back({w, o});
        classify(w);
      } else {
        // w is an ancestor: the digit opens at w and closes at v
        closures[w].push_back({v, o, true});
        closures[v].push_back({w, o, false});
      }
    }
  };
  classify(root);

  std::map<std::pair<std::size_t, std::size_t>, int> digit;
  int next_digit = 1;
  auto bond_sym = [](int o) { return o == 2 ? std::string("=") : o == 3 ? std::string("#") : std::string(); };
  auto digit_text = [](int d) { return d < 10 ? std::to_string(d) : "%" + std::to_string(d); };
  std::function<std::string(std::size_t)> emit = [&](std::size_t v) {
    std::string out = s.elements[v];
    for (auto [w, o, opens] : closures[v]) {
      if (opens) {
        const int d = next_digit++;
        digit[key(v, w)] = d;
        out += bond_sym(o) + digit_text(d);
      } else {
        out += digit_text(digit.at(key(v, w)));
      }
    }
    for (std::size_t i = 0; i < children[v].size(); ++i) {
      const auto [w, o] = children[v][i];
      const std::string sub = bond_sym(o) + emit(w);
      out += i + 1 < children[v].size() ? "(" + sub + ")" : sub;
    }
    return out;
  };
  return emit(root);
}

using AtomKey = std::tuple<std::string, int, int, bool, std::size_t>;

std::multiset<AtomKey> atom_multiset(const MolGraph& m) {
  std::multiset<AtomKey> out;
  for (std::size_t i = 0; i < m.atoms.size(); ++i) {
    const auto& a = m.atoms[i];
    out.insert({a.element, a.formal_charge, a.hydrogens, a.aromatic, m.degree(i)});
  }
  return out;
}

std::multiset<std::tuple<AtomKey, AtomKey, int>> bond_multiset(const MolGraph& m) {
  std::multiset<std::tuple<AtomKey, AtomKey, int>> out;
  auto k = [&](std::size_t i) {
    const auto& a = m.atoms[i];
    return AtomKey{a.element, a.formal_charge, a.hydrogens, a.aromatic, m.degree(i)};
  };
  for (const auto& b : m.bonds) {
    auto x = k(b.a), y = k(b.b);
    if (y < x) std::swap(x, y);
    out.insert({x, y, static_cast<int>(b.order)});
  }
  return out;
}

std::uint64_t fnv1a_int32s(std::initializer_list<std::int32_t> values) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::int32_t v : values) {
    const auto u = static_cast<std::uint32_t>(v);
    for (int byte = 0; byte < 4; ++byte) {
      h ^= (u >> (8 * byte)) & 0xFFu;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

ParseErrorKind kind_of(const std::string& s, std::size_t* offset = nullptr) {
  try {
    parse_smiles(s);
  } catch (const ParseError& e) {
    if (offset) *offset = e.offset();
    return e.kind();
  }
  FAIL("expected a parse error for '" << s << "'");
  return ParseErrorKind::Empty;
}

}  // namespace

TEST_CASE("CCO parses to a three-atom chain") {
  const auto m = parse_smiles("CCO");
  REQUIRE(m.atoms.size() == 3);
  CHECK(m.atoms[0].element == "C");
  CHECK(m.atoms[2].element == "O");
  REQUIRE(m.bonds.size() == 2);
  CHECK(((m.bonds[0].a == 0 && m.bonds[0].b == 1) || (m.bonds[0].a == 1 && m.bonds[0].b == 0)));
  CHECK(m.bonds[0].order == BondOrder::Single);
  CHECK(m.atoms[0].hydrogens == 3);
  CHECK(m.atoms[1].hydrogens == 2);
  CHECK(m.atoms[2].hydrogens == 1);
}

TEST_CASE("ring closure bonds the first and last atom") {
  const auto m = parse_smiles("C1CC1");
  REQUIRE(m.atoms.size() == 3);
  REQUIRE(m.bonds.size() == 3);
  bool closure = false;
  for (const auto& b : m.bonds) {
    CHECK(b.order == BondOrder::Single);
    closure = closure || (std::min(b.a, b.b) == 0 && std::max(b.a, b.b) == 2);
  }
  CHECK(closure);
  CHECK(parse_smiles("C%12CC%12").bonds.size() == 3);
  CHECK(parse_smiles("C=1CCCC1").bonds.size() == 5);
}

TEST_CASE("bracket atoms carry charge and hydrogens") {
  const auto m = parse_smiles("[NH4+]");
  CHECK(m.atoms[0].formal_charge == 1);
  CHECK(m.atoms[0].hydrogens == 4);
  const auto o = parse_smiles("C[O-]");
  CHECK(o.atoms[1].formal_charge == -1);
  CHECK(o.atoms[1].hydrogens == 0);
  CHECK(parse_smiles("ClCBr").atoms[0].element == "Cl");
}

TEST_CASE("curated invalid corpus yields the documented error kinds") {
  std::size_t off = 99;
  CHECK(kind_of("C(C", &off) == ParseErrorKind::UnbalancedParenthesis);
  CHECK(off == 1);
  const std::vector<std::pair<std::string, ParseErrorKind>> corpus{
      {"", ParseErrorKind::Empty},
      {"C)C", ParseErrorKind::UnbalancedParenthesis},
      {"CC(", ParseErrorKind::UnbalancedParenthesis},
      {"C1CC", ParseErrorKind::UnmatchedRingClosure},
      {"C1CCC2", ParseErrorKind::UnmatchedRingClosure},
      {"[Xx]", ParseErrorKind::UnknownElement},
      {"Xx", ParseErrorKind::UnknownElement},
      {"C(C)(C)(C)(C)C", ParseErrorKind::ValenceOverflow},
      {"O=O=O", ParseErrorKind::ValenceOverflow},
      {"N#N#N", ParseErrorKind::ValenceOverflow},
      {"C$C", ParseErrorKind::UnexpectedCharacter},
      {"C==C", ParseErrorKind::UnexpectedCharacter},
      {"[C", ParseErrorKind::UnexpectedCharacter},
      {"C.C", ParseErrorKind::Unsupported},
      {"[13C]", ParseErrorKind::Unsupported},
      {"C/C=C/C", ParseErrorKind::Unsupported},
      {"C[C@H](N)O", ParseErrorKind::Unsupported},
      {"C12CC12", ParseErrorKind::DuplicateBond},
  };
  for (const auto& [s, kind] : corpus) {
    CAPTURE(s);
    CHECK(kind_of(s) == kind);
  }
}

TEST_CASE("single carbon has exactly one environment") {
  const auto counts = morgan_counts(parse_smiles("C"), 2, 2048);
  std::size_t nonzero = 0;
  for (auto c : counts) nonzero += c != 0;
  CHECK(nonzero == 1);
  // identifier = FNV-1a over int32 (Z, degree, charge, H, aromatic)
  const std::uint64_t id = fnv1a_int32s({6, 0, 0, 4, 0});
  CHECK(counts[id % 2048] == 1);
  const auto ids = morgan_identifiers(parse_smiles("C"), 2);
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == id);
}

TEST_CASE("CCO at radius 0 has three distinct atom environments") {
  // CH3 (degree 1), CH2 (degree 2), OH: the two carbons differ by degree
  // and hydrogen count.
  const auto ids = morgan_identifiers(parse_smiles("CCO"), 0);
  CHECK(std::set<std::uint64_t>(ids.begin(), ids.end()).size() == 3);
  const auto benzene = morgan_identifiers(parse_smiles("c1ccccc1"), 0);
  CHECK(std::set<std::uint64_t>(benzene.begin(), benzene.end()).size() == 1);
}

TEST_CASE("atom order does not change the fingerprint") {
  CHECK(morgan_counts(parse_smiles("OCC"), 2, 2048) == morgan_counts(parse_smiles("CCO"), 2, 2048));
  CHECK(morgan_counts(parse_smiles("Cc1ccccc1"), 2, 1024) == morgan_counts(parse_smiles("c1ccc(C)cc1"), 2, 1024));
  CHECK(morgan_counts(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"), 2, 2048) ==
        morgan_counts(parse_smiles("OC(=O)c1ccccc1OC(C)=O"), 2, 2048));
}

TEST_CASE("descriptor examples") {
  auto d = basic_descriptors(parse_smiles("C"));
  CHECK(d[0] == 1);
  CHECK(d[1] == 0);
  CHECK(d[5] == 0);
  d = basic_descriptors(parse_smiles("CCO"));
  CHECK(d[0] == 3);
  CHECK(d[3] == 1);
  CHECK(d[6] == doctest::Approx(46.07).epsilon(1e-3));
  d = basic_descriptors(parse_smiles("c1ccccc1"));
  CHECK(d[4] == 6);
  CHECK(d[2] == 1);
  CHECK(descriptor_names().size() == kDescriptorCount);
}

TEST_CASE("featurize width, pass-through and mismatch") {
  FeaturizerConfig cfg;
  const auto m = parse_smiles("CCO");
  const auto f = featurize_ligand(m, cfg);
  CHECK(f.values.size() == 2058);
  const auto desc = basic_descriptors(m);
  for (std::size_t i = 0; i < kDescriptorCount; ++i) CHECK(f.values[2048 + i] == desc[i]);
  cfg.descriptor_mean.assign(kDescriptorCount, 1.0);
  cfg.descriptor_scale.assign(kDescriptorCount, 2.0);
  const auto g = featurize_ligand(m, cfg);
  CHECK(g.values[2048] == doctest::Approx((desc[0] - 1.0) / 2.0));
  cfg.expected_width = 2258;
  CHECK_THROWS_AS(featurize_ligand(m, cfg), ShapeError);
}

TEST_CASE("generated corpus: spellings agree on graph, fingerprint and descriptors") {
  std::mt19937_64 rng(2024);
  std::size_t molecules = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const auto sk = random_skeleton(rng);
    if (sk.elements.size() < 2) continue;
    ++molecules;
    const std::string ref_smiles = write_smiles(sk, rng);
    CAPTURE(ref_smiles);
    const auto ref = parse_smiles(ref_smiles);
    REQUIRE(ref.atoms.size() == sk.elements.size());
    REQUIRE(ref.bonds.size() == sk.bonds.size());
    const auto atoms = atom_multiset(ref);
    const auto bonds = bond_multiset(ref);
    const auto fp = morgan_counts(ref, 2, 2048);
    const auto desc = basic_descriptors(ref);
    for (int p = 0; p < 100; ++p) {
      const std::string s = write_smiles(sk, rng);
      CAPTURE(s);
      const auto m = parse_smiles(s);
      CHECK(atom_multiset(m) == atoms);
      CHECK(bond_multiset(m) == bonds);
      CHECK(morgan_counts(m, 2, 2048) == fp);
      CHECK(basic_descriptors(m) == desc);
    }
  }
  CHECK(molecules >= 100);
}

TEST_CASE("aromatic molecule: alternative spellings give one fingerprint") {
  const std::vector<std::string> spellings{"Oc1ccccc1", "c1ccccc1O", "c1cc(O)ccc1", "c1c(O)cccc1", "c1ccc(cc1)O"};
  const auto ref = morgan_counts(parse_smiles(spellings[0]), 2, 2048);
  for (const auto& s : spellings) CHECK(morgan_counts(parse_smiles(s), 2, 2048) == ref);
}
