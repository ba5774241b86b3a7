#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <set>

#include "conglude/mol.hpp"

namespace conglude::mol {

namespace {

struct ElementInfo {
  const char* symbol;
  int number;
  double mass;
};

// Standard atomic weights (IUPAC, abridged).
constexpr std::array<ElementInfo, 60> kElements{{
    {"H", 1, 1.008},     {"He", 2, 4.0026},   {"Li", 3, 6.94},     {"Be", 4, 9.0122},
    {"B", 5, 10.81},     {"C", 6, 12.011},    {"N", 7, 14.007},    {"O", 8, 15.999},
    {"F", 9, 18.998},    {"Ne", 10, 20.180},  {"Na", 11, 22.990},  {"Mg", 12, 24.305},
    {"Al", 13, 26.982},  {"Si", 14, 28.085},  {"P", 15, 30.974},   {"S", 16, 32.06},
    {"Cl", 17, 35.45},   {"Ar", 18, 39.948},  {"K", 19, 39.098},   {"Ca", 20, 40.078},
    {"Sc", 21, 44.956},  {"Ti", 22, 47.867},  {"V", 23, 50.942},   {"Cr", 24, 51.996},
    {"Mn", 25, 54.938},  {"Fe", 26, 55.845},  {"Co", 27, 58.933},  {"Ni", 28, 58.693},
    {"Cu", 29, 63.546},  {"Zn", 30, 65.38},   {"Ga", 31, 69.723},  {"Ge", 32, 72.630},
    {"As", 33, 74.922},  {"Se", 34, 78.971},  {"Br", 35, 79.904},  {"Kr", 36, 83.798},
    {"Rb", 37, 85.468},  {"Sr", 38, 87.62},   {"Y", 39, 88.906},   {"Zr", 40, 91.224},
    {"Nb", 41, 92.906},  {"Mo", 42, 95.95},   {"Tc", 43, 98.0},    {"Ru", 44, 101.07},
    {"Rh", 45, 102.91},  {"Pd", 46, 106.42},  {"Ag", 47, 107.87},  {"Cd", 48, 112.41},
    {"In", 49, 114.82},  {"Sn", 50, 118.71},  {"Sb", 51, 121.76},  {"Te", 52, 127.60},
    {"I", 53, 126.90},   {"Xe", 54, 131.29},  {"Cs", 55, 132.91},  {"Ba", 56, 137.33},
    {"Pt", 78, 195.08},  {"Au", 79, 196.97},  {"Hg", 80, 200.59},  {"Pb", 82, 207.2},
}};

// Allowed neutral valences for the organic subset, ascending.
const std::vector<int>& standard_valences(int z) {
  static const std::map<int, std::vector<int>> table{
      {5, {3}}, {6, {4}}, {7, {3, 5}}, {8, {2}}, {15, {3, 5}}, {16, {2, 4, 6}},
      {9, {1}}, {17, {1}}, {35, {1}}, {53, {1}},
  };
  static const std::vector<int> none;
  auto it = table.find(z);
  return it == table.end() ? none : it->second;
}

int bond_valence(BondOrder o) {
  switch (o) {
    case BondOrder::Single: return 1;
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    case BondOrder::Aromatic: return 1;
  }
  return 1;
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  MolGraph run() {
    if (s_.empty()) throw ParseError(ParseErrorKind::Empty, 0, "empty SMILES");
    while (pos_ < s_.size()) step();
    if (!branches_.empty()) {
      throw ParseError(ParseErrorKind::UnbalancedParenthesis, branches_.back().second, "unclosed '('");
    }
    if (!rings_.empty()) {
      const auto& [num, open] = *rings_.begin();
      throw ParseError(ParseErrorKind::UnmatchedRingClosure, open.offset,
                       "ring bond " + std::to_string(num) + " never closed");
    }
    if (pending_) throw ParseError(ParseErrorKind::UnexpectedCharacter, pending_offset_, "dangling bond symbol");
    if (g_.atoms.empty()) throw ParseError(ParseErrorKind::Empty, 0, "no atoms");
    fill_hydrogens();
    return std::move(g_);
  }

 private:
  struct RingOpen {
    std::size_t atom;
    std::optional<BondOrder> order;
    std::size_t offset;
  };

  void step() {
    const char c = s_[pos_];
    switch (c) {
      case '(':
        if (!prev_) throw ParseError(ParseErrorKind::UnexpectedCharacter, pos_, "branch without a preceding atom");
        if (pending_) throw ParseError(ParseErrorKind::UnexpectedCharacter, pos_, "bond symbol before '('");
        branches_.emplace_back(*prev_, pos_);
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) throw ParseError(ParseErrorKind::UnbalancedParenthesis, pos_, "unmatched ')'");
        if (pending_) throw ParseError(ParseErrorKind::UnexpectedCharacter, pos_, "bond symbol before ')'");
        if (s_.substr(branches_.back().second + 1, pos_ - branches_.back().second - 1).empty()) {
          throw ParseError(ParseErrorKind::UnexpectedCharacter, pos_, "empty branch");
        }
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++pos_;
        return;
      case '-': set_bond(BondOrder::Single); return;
      case '=': set_bond(BondOrder::Double); return;
      case '#': set_bond(BondOrder::Triple); return;
      case ':': set_bond(BondOrder::Aromatic); return;
      case '/':
      case '\\':
        throw ParseError(ParseErrorKind::Unsupported, pos_, "directional bonds are not supported");
      case '.':
        throw ParseError(ParseErrorKind::Unsupported, pos_, "multi-fragment SMILES are not supported");
      case '@':
        throw ParseError(ParseErrorKind::Unsupported, pos_, "stereochemistry is not supported");
      case '%': {
        if (pos_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) ||
            !std::isdigit(static_cast<unsigned char>(s_[pos_ + 2]))) {
          throw ParseError(ParseErrorKind::UnexpectedCharacter, pos_, "'%' must be followed by two digits");
        }
        const int num = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
        ring_bond(num, pos_);
        pos_ += 3;
        return;
      }
      case '[': bracket_atom(); return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ring_bond(c - '0', pos_);
      ++pos_;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      organic_atom();
      return;
    }
    throw ParseError(ParseErrorKind::UnexpectedCharacter, pos_, std::string("unexpected '") + c + "'");
  }

  void set_bond(BondOrder o) {
    if (!prev_ || pending_) {
      throw ParseError(ParseErrorKind::UnexpectedCharacter, pos_, "misplaced bond symbol");
    }
    pending_ = o;
    pending_offset_ = pos_;
    ++pos_;
  }

  void ring_bond(int num, std::size_t offset) {
    if (!prev_) throw ParseError(ParseErrorKind::UnexpectedCharacter, offset, "ring bond without an atom");
    auto it = rings_.find(num);
    if (it == rings_.end()) {
      rings_.emplace(num, RingOpen{*prev_, pending_, offset});
      pending_.reset();
      return;
    }
    const RingOpen open = it->second;
    rings_.erase(it);
    if (open.atom == *prev_) throw ParseError(ParseErrorKind::UnexpectedCharacter, offset, "ring bond to itself");
    if (pending_ && open.order && *pending_ != *open.order) {
      throw ParseError(ParseErrorKind::UnexpectedCharacter, offset, "conflicting ring bond orders");
    }
    const auto order = pending_ ? pending_ : open.order;
    pending_.reset();
    connect(open.atom, *prev_, order, offset);
  }

  void connect(std::size_t a, std::size_t b, std::optional<BondOrder> order, std::size_t offset) {
    const auto key = std::minmax(a, b);
    if (!bonded_.insert(key).second) {
      throw ParseError(ParseErrorKind::DuplicateBond, offset, "duplicate bond");
    }
    BondOrder o = BondOrder::Single;
    if (order) {
      o = *order;
    } else if (g_.atoms[a].aromatic && g_.atoms[b].aromatic) {
      o = BondOrder::Aromatic;
    }
    g_.bonds.push_back(Bond{a, b, o});
  }

  void add_atom(Atom atom, std::size_t offset) {
    g_.atoms.push_back(std::move(atom));
    offsets_.push_back(offset);
    const std::size_t idx = g_.atoms.size() - 1;
    if (prev_) {
      const auto order = pending_;
      pending_.reset();
      connect(*prev_, idx, order, offset);
    }
    prev_ = idx;
  }

  void organic_atom() {
    const std::size_t start = pos_;
    const char c = s_[pos_];
    std::string sym;
    bool aromatic = false;
    if (c == 'C' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'l') {
      sym = "Cl";
    } else if (c == 'B' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'r') {
      sym = "Br";
    } else if (std::string_view("BCNOPSFI").find(c) != std::string_view::npos) {
      sym = std::string(1, c);
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      sym = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      aromatic = true;
    } else {
      throw ParseError(ParseErrorKind::UnknownElement, start,
                       std::string("'") + c + "' is not an organic-subset element");
    }
    pos_ += sym.size();
    Atom a;
    a.element = sym;
    a.atomic_number = atomic_number(sym);
    a.aromatic = aromatic;
    add_atom(std::move(a), start);
  }

  void bracket_atom() {
    const std::size_t start = pos_;
    const auto close = s_.find(']', pos_);
    if (close == std::string_view::npos) {
      throw ParseError(ParseErrorKind::UnexpectedCharacter, start, "unterminated bracket atom");
    }
    std::size_t p = pos_ + 1;
    if (p < close && std::isdigit(static_cast<unsigned char>(s_[p]))) {
      throw ParseError(ParseErrorKind::Unsupported, p, "isotopes are not supported");
    }
    Atom a;
    a.bracket = true;
    if (p >= close || !std::isalpha(static_cast<unsigned char>(s_[p]))) {
      throw ParseError(ParseErrorKind::UnknownElement, p, "missing element symbol");
    }
    if (std::islower(static_cast<unsigned char>(s_[p]))) {
      // aromatic: se, as, or single-letter b c n o p s
      std::string two(s_.substr(p, std::min<std::size_t>(2, close - p)));
      if (two == "se" || two == "as") {
        a.element = std::string(1, static_cast<char>(std::toupper(two[0]))) + two[1];
        p += 2;
      } else if (std::string_view("bcnops").find(s_[p]) != std::string_view::npos) {
        a.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(s_[p]))));
        p += 1;
      } else {
        throw ParseError(ParseErrorKind::UnknownElement, p, "unknown aromatic element");
      }
      a.aromatic = true;
    } else {
      std::string sym(1, s_[p]);
      if (p + 1 < close && std::islower(static_cast<unsigned char>(s_[p + 1])) &&
          atomic_number(sym + s_[p + 1]) != 0) {
        sym += s_[p + 1];
      }
      a.element = sym;
      p += sym.size();
    }
    a.atomic_number = atomic_number(a.element);
    if (a.atomic_number == 0) throw ParseError(ParseErrorKind::UnknownElement, start + 1, "unknown element");
    if (p < close && s_[p] == '@') throw ParseError(ParseErrorKind::Unsupported, p, "stereochemistry is not supported");
    if (p < close && s_[p] == 'H') {
      ++p;
      a.hydrogens = 1;
      if (p < close && std::isdigit(static_cast<unsigned char>(s_[p]))) {
        a.hydrogens = s_[p] - '0';
        ++p;
      }
    }
    if (p < close && (s_[p] == '+' || s_[p] == '-')) {
      const char sign_char = s_[p];
      const int sign = sign_char == '+' ? 1 : -1;
      ++p;
      int magnitude = 1;
      if (p < close && std::isdigit(static_cast<unsigned char>(s_[p]))) {
        magnitude = s_[p] - '0';
        ++p;
      } else {
        while (p < close && s_[p] == sign_char) {
          ++magnitude;
          ++p;
        }
      }
      a.formal_charge = sign * magnitude;
    }
    if (p < close && s_[p] == ':') throw ParseError(ParseErrorKind::Unsupported, p, "atom classes are not supported");
    if (p != close) throw ParseError(ParseErrorKind::UnexpectedCharacter, p, "unexpected text in bracket atom");
    pos_ = close + 1;
    add_atom(std::move(a), start);
  }

  void fill_hydrogens() {
    std::vector<int> sum(g_.atoms.size(), 0);
    for (const auto& b : g_.bonds) {
      sum[b.a] += bond_valence(b.order);
      sum[b.b] += bond_valence(b.order);
    }
    for (std::size_t i = 0; i < g_.atoms.size(); ++i) {
      Atom& a = g_.atoms[i];
      const auto& allowed = standard_valences(a.atomic_number);
      if (a.bracket) {
        if (a.formal_charge == 0 && !a.aromatic && !allowed.empty() && sum[i] + a.hydrogens > allowed.back()) {
          throw ParseError(ParseErrorKind::ValenceOverflow, offsets_[i], "valence exceeded for " + a.element);
        }
        continue;
      }
      if (sum[i] > allowed.back()) {
        throw ParseError(ParseErrorKind::ValenceOverflow, offsets_[i], "valence exceeded for " + a.element);
      }
      // Aromatic atoms that still need a pi bond reserve one valence unit.
      const int used = a.aromatic ? sum[i] + 1 : sum[i];
      auto it = std::find_if(allowed.begin(), allowed.end(), [&](int v) { return v >= used; });
      if (it != allowed.end()) {
        a.hydrogens = *it - used;
      } else {
        a.hydrogens = 0;  // aromatic pyrrole-type n, furan-type o/s
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  MolGraph g_;
  std::vector<std::size_t> offsets_;
  std::optional<std::size_t> prev_;
  std::optional<BondOrder> pending_;
  std::size_t pending_offset_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;  // (atom, offset of '(')
  std::map<int, RingOpen> rings_;
  std::set<std::pair<std::size_t, std::size_t>> bonded_;
};

}  // namespace

std::string to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::Empty: return "Empty";
    case ParseErrorKind::UnexpectedCharacter: return "UnexpectedCharacter";
    case ParseErrorKind::UnbalancedParenthesis: return "UnbalancedParenthesis";
    case ParseErrorKind::UnmatchedRingClosure: return "UnmatchedRingClosure";
    case ParseErrorKind::UnknownElement: return "UnknownElement";
    case ParseErrorKind::ValenceOverflow: return "ValenceOverflow";
    case ParseErrorKind::Unsupported: return "Unsupported";
    case ParseErrorKind::DuplicateBond: return "DuplicateBond";
  }
  return "Unknown";
}

ParseError::ParseError(ParseErrorKind kind, std::size_t offset, const std::string& detail)
    : std::runtime_error(to_string(kind) + " at offset " + std::to_string(offset) + ": " + detail),
      kind_(kind),
      offset_(offset) {}

int atomic_number(std::string_view symbol) {
  for (const auto& e : kElements) {
    if (symbol == e.symbol) return e.number;
  }
  return 0;
}

double atomic_mass(int z) {
  for (const auto& e : kElements) {
    if (e.number == z) return e.mass;
  }
  return 0.0;
}

std::size_t MolGraph::degree(std::size_t atom) const {
  return static_cast<std::size_t>(std::count_if(bonds.begin(), bonds.end(), [atom](const Bond& b) {
    return b.a == atom || b.b == atom;
  }));
}

std::vector<std::vector<std::pair<std::size_t, BondOrder>>> MolGraph::adjacency() const {
  std::vector<std::vector<std::pair<std::size_t, BondOrder>>> adj(atoms.size());
  for (const auto& b : bonds) {
    adj[b.a].emplace_back(b.b, b.order);
    adj[b.b].emplace_back(b.a, b.order);
  }
  return adj;
}

MolGraph parse_smiles(std::string_view smiles) { return Parser(smiles).run(); }

}  // namespace conglude::mol
